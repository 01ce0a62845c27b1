//! Score-guided round-robin channel permutation.
//!
//! Channels are ranked by aggregate score (descending, ties to the lower
//! index). With `G = F_in / M` pruning groups, the channel of rank `r` lands in
//! group `r mod G` at slot `r div G`, so the `G` strongest channels open one
//! group each, the next `G` fill the second slots, and so on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::PruneMask;
use crate::matrix::{Dense, WeightMatrix};
use crate::tensor_store::write_atomic;

/// Bijection on input-channel indices. `forward[p]` is the original column
/// placed at permuted position `p`; `inverse` undoes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPermutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl ChannelPermutation {
    pub fn identity(len: usize) -> Self {
        let forward: Vec<usize> = (0..len).collect();
        Self {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Fails unless `forward` is a permutation of `0..forward.len()`.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (p, &c) in forward.iter().enumerate() {
            if c >= n || inverse[c] != usize::MAX {
                return Err(Error::Invariant(format!(
                    "forward is not a bijection on 0..{n} (entry {p} = {c})"
                )));
            }
            inverse[c] = p;
        }
        Ok(Self { forward, inverse })
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(p, &c)| p == c)
    }

    /// The permutation that maps permuted positions back to original ones.
    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `out[p] = values[forward[p]]`.
    pub fn apply_to_vector<T: Copy>(&self, values: &[T]) -> Result<Vec<T>> {
        self.check_len(values.len())?;
        Ok(self.forward.iter().map(|&c| values[c]).collect())
    }

    fn check_len(&self, cols: usize) -> Result<()> {
        if cols != self.len() {
            return Err(Error::Shape(format!(
                "permutation of length {} applied to {cols} columns",
                self.len()
            )));
        }
        Ok(())
    }

    fn permute_columns<T: Copy>(&self, m: &Dense<T>) -> Result<Dense<T>> {
        self.check_len(m.cols())?;
        Ok(Dense::from_fn(m.rows(), m.cols(), |i, p| {
            m.get(i, self.forward[p])
        }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PermutationRecord {
            forward: self.forward.clone(),
        })
        .expect("permutation serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: PermutationRecord = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("permutation sidecar: {e}")))?;
        Self::from_forward(record.forward)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk sidecar: `{"forward": [..]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PermutationRecord {
    forward: Vec<usize>,
}

/// Indices sorted by descending score, ties to the lower index.
pub(crate) fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps equal scores in ascending index order.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    order
}

pub fn build_permutation(scores: &[f64], m: usize) -> Result<ChannelPermutation> {
    let f_in = scores.len();
    if m == 0 {
        return Err(Error::Config("group width M must be positive".into()));
    }
    if f_in < m || !f_in.is_multiple_of(m) {
        return Err(Error::Shape(format!(
            "{f_in} input channels cannot be split into groups of {m}"
        )));
    }
    if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Invariant(format!("channel score {j} is not finite")));
    }
    let groups = f_in / m;
    let mut forward = vec![0; f_in];
    for (rank, channel) in rank_descending(scores).into_iter().enumerate() {
        forward[(rank % groups) * m + rank / groups] = channel;
    }
    ChannelPermutation::from_forward(forward)
}

/// `out[i][p] = w[i][forward[p]]`.
pub fn apply_to_columns(w: &WeightMatrix, perm: &ChannelPermutation) -> Result<WeightMatrix> {
    WeightMatrix::from_dense(perm.permute_columns(w.as_dense())?)
}

/// Moves a mask built in permuted layout back to the original column order:
/// `out[i][forward[p]] = mask[i][p]`.
pub fn unpermute_mask(mask: &PruneMask, perm: &ChannelPermutation) -> Result<PruneMask> {
    let back = perm.inverted().permute_columns(mask.as_dense())?;
    Ok(PruneMask::from_dense_unchecked(back))
}
