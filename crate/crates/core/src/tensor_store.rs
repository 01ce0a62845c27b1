//! Portable tensor container and CSV debug format.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! [0..8)        header length L as u64
//! [8..8+L)      UTF-8 JSON: {name: {"dtype": "f32"|"u8", "shape": [..], "offset": n, "nbytes": m}}
//! [8+L..)       payload; offsets are relative to the payload start
//! ```
//!
//! Data is row-major. Entries are written in name order so identical bundles
//! always produce identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Dense;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "u8")]
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }
}

/// Bitwise equality, so NaN payloads and signed zeros compare as stored.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }
}

/// One named array in a bundle. `data.len()` always equals the product of `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

fn numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        match numel(&shape) {
            Some(n) if n == data.len() => Ok(Self { shape, data }),
            _ => Err(Error::Invariant(format!(
                "shape {shape:?} does not match {} values",
                data.len()
            ))),
        }
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(shape, TensorData::U8(data))
    }

    pub fn from_matrix(m: &Dense<f32>) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: TensorData::F32(m.as_slice().to_vec()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    /// Interprets a 2-D float32 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Dense<f32>> {
        let values = self
            .as_f32()
            .ok_or_else(|| Error::Format("expected an f32 tensor".into()))?;
        match self.shape[..] {
            [r, c] => Dense::from_vec(r, c, values.to_vec()),
            _ => Err(Error::Shape(format!(
                "expected a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::U8(v) => v.clone(),
        }
    }
}

/// Named tensors with unique, non-empty names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorBundle {
    entries: BTreeMap<String, Tensor>,
}

impl TensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects empty or repeated names.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Tensor)>,
        S: Into<String>,
    {
        let mut bundle = Self::new();
        for (name, tensor) in entries {
            bundle.insert(name, tensor)?;
        }
        Ok(bundle)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Invariant("tensor name must be non-empty".into()));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Invariant(format!("duplicate tensor name {name:?}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    /// Inserts or replaces.
    pub fn put(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        self.entries.remove(&name);
        self.insert(name, tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    /// Like [`get`](Self::get) but reports the missing name.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("bundle has no tensor named {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = BTreeMap::new();
        let mut payload = Vec::new();
        for (name, tensor) in &self.entries {
            let bytes = tensor.payload_bytes();
            header.insert(
                name.as_str(),
                HeaderEntry {
                    dtype: tensor.dtype(),
                    shape: tensor.shape.clone(),
                    offset: payload.len() as u64,
                    nbytes: bytes.len() as u64,
                },
            );
            payload.extend_from_slice(&bytes);
        }
        let json = serde_json::to_vec(&header).expect("header serialization cannot fail");
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Format("file shorter than the 8-byte header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes);
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|l| l.checked_add(8))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "header length {header_len} exceeds file size {}",
                    bytes.len()
                ))
            })?;
        let header: HeaderMap = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        let payload = &bytes[header_end..];

        let mut bundle = Self::new();
        for (name, entry) in header.0 {
            let n = numel(&entry.shape)
                .ok_or_else(|| Error::Format(format!("{name}: shape overflows")))?;
            let expected = n.checked_mul(entry.dtype.size());
            if expected.map(|e| e as u64) != Some(entry.nbytes) {
                return Err(Error::Format(format!(
                    "{name}: nbytes {} does not match shape {:?}",
                    entry.nbytes, entry.shape
                )));
            }
            let range = usize::try_from(entry.offset)
                .ok()
                .zip(usize::try_from(entry.nbytes).ok())
                .and_then(|(o, n)| Some(o..o.checked_add(n)?))
                .filter(|r| r.end <= payload.len())
                .ok_or_else(|| {
                    Error::Format(format!(
                        "{name}: payload [{}, +{}) exceeds the {} available bytes",
                        entry.offset,
                        entry.nbytes,
                        payload.len()
                    ))
                })?;
            let raw = &payload[range];
            let data = match entry.dtype {
                DType::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                ),
                DType::U8 => TensorData::U8(raw.to_vec()),
            };
            let tensor = Tensor::new(entry.shape, data)?;
            bundle
                .insert(name, tensor)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(bundle)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: DType,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

/// Header entries in file order; duplicate keys are a parse error instead of
/// the last-one-wins behaviour of a plain map.
struct HeaderMap(Vec<(String, HeaderEntry)>);

impl<'de> Deserialize<'de> for HeaderMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct HeaderVisitor;

        impl<'de> Visitor<'de> for HeaderVisitor {
            type Value = HeaderMap;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of tensor names to entries")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<HeaderMap, A::Error> {
                let mut seen = std::collections::HashSet::new();
                let mut out = Vec::new();
                while let Some((name, entry)) = map.next_entry::<String, HeaderEntry>()? {
                    if !seen.insert(name.clone()) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate tensor name {name:?}"
                        )));
                    }
                    out.push((name, entry));
                }
                Ok(HeaderMap(out))
            }
        }

        deserializer.deserialize_map(HeaderVisitor)
    }
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<TensorBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorBundle::from_bytes(&bytes)
}

pub fn save_bundle(bundle: &TensorBundle, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &bundle.to_bytes())
}

/// Writes to a temporary file next to `path`, then renames over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads one matrix from a headerless comma-separated file, one row per line.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Dense<f32>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(file)
}

pub fn parse_csv_matrix(reader: impl std::io::Read) -> Result<Dense<f32>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(format!("csv: {e}")))?;
        if rows == 0 {
            cols = record.len();
        }
        for field in record.iter() {
            let v: f32 = field
                .parse()
                .map_err(|_| Error::Format(format!("csv row {rows}: not a number: {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("csv file contains no rows".into()));
    }
    Dense::from_vec(rows, cols, data)
}

pub fn write_csv_matrix(path: impl AsRef<Path>, m: &Dense<f32>) -> Result<()> {
    write_atomic(path.as_ref(), format_csv_matrix(m).as_bytes())
}

/// Uses the shortest decimal form that round-trips to the same f32.
pub fn format_csv_matrix(m: &Dense<f32>) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_file(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn loads_hand_built_file() {
        let payload: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let bytes = raw_file(
            r#"{"w":{"dtype":"f32","shape":[2,2],"offset":0,"nbytes":16}}"#,
            &payload,
        );
        let b = TensorBundle::from_bytes(&bytes).unwrap();
        let w = b.get("w").unwrap();
        assert_eq!(w.shape(), &[2, 2]);
        assert_eq!(w.as_f32().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn header_only_is_empty_bundle() {
        let b = TensorBundle::from_bytes(&raw_file("{}", &[])).unwrap();
        assert!(b.is_empty());
        assert_eq!(TensorBundle::new().to_bytes(), raw_file("{}", &[]));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let bytes = raw_file(
            r#"{"w":{"dtype":"f32","shape":[2,2],"offset":0,"nbytes":16}}"#,
            &[0u8; 12],
        );
        assert!(matches!(
            TensorBundle::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn malformed_headers_are_format_errors() {
        let cases: Vec<Vec<u8>> = vec![
            vec![1, 2, 3],
            raw_file("{not json", &[]),
            {
                let mut b = raw_file("{}", &[]);
                b[0] = 200;
                b
            },
            raw_file(
                r#"{"w":{"dtype":"f64","shape":[1],"offset":0,"nbytes":8}}"#,
                &[0; 8],
            ),
            raw_file(
                r#"{"w":{"dtype":"u8","shape":[3],"offset":0,"nbytes":2}}"#,
                &[0; 3],
            ),
            raw_file(
                r#"{"w":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1,"extra":1}}"#,
                &[0; 1],
            ),
            raw_file(
                r#"{"w":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1},"w":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1}}"#,
                &[0; 1],
            ),
            raw_file(
                r#"{"":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1}}"#,
                &[0; 1],
            ),
        ];
        for bytes in cases {
            let r = TensorBundle::from_bytes(&bytes);
            assert!(matches!(r, Err(Error::Format(_))), "{r:?}");
        }
    }

    #[test]
    fn duplicate_and_empty_names_rejected_on_construction() {
        let t = Tensor::u8(vec![1], vec![1]).unwrap();
        let r = TensorBundle::from_entries([("a", t.clone()), ("a", t.clone())]);
        assert!(matches!(r, Err(Error::Invariant(_))));
        let r = TensorBundle::from_entries([("", t)]);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn tensor_shape_must_match_data() {
        assert!(matches!(
            Tensor::f32(vec![2, 3], vec![0.0; 5]),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn u8_mask_keeps_dtype() {
        let mut b = TensorBundle::new();
        b.insert("mask", Tensor::u8(vec![4, 8], vec![1; 32]).unwrap())
            .unwrap();
        let back = TensorBundle::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(back.get("mask").unwrap().dtype(), DType::U8);
        assert_eq!(back, b);
    }

    #[test]
    fn save_to_missing_dir_is_io_error() {
        let r = save_bundle(&TensorBundle::new(), "/nonexistent-dir/x/y.bin");
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    #[test]
    fn csv_parses_and_rejects_ragged() {
        let m = parse_csv_matrix("1,2.5,-3\n4, 5 ,6e-1\n".as_bytes()).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.as_slice(), &[1.0, 2.5, -3.0, 4.0, 5.0, 0.6]);
        assert!(matches!(
            parse_csv_matrix("1,2\n3\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_csv_matrix("1,x\n".as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
