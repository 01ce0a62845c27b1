//! Desk-scale evaluation: synthetic layers, layer-local reconstruction error
//! and side-by-side method reports.

use std::ops::RangeInclusive;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph;
use crate::mask::{PruneConfig, PruneMask};
use crate::matrix::{Dense, WeightMatrix};
use crate::metrics::ActivationNorms;
use crate::partition::effective_blocks;
use crate::pipeline::{self, Method};

/// Factor applied to the weights and activations of dead channels.
pub const DEAD_SCALE: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Gaussian,
    /// `k` input channels whose weights and activations are shrunk by
    /// [`DEAD_SCALE`].
    DeadColumns(usize),
    /// Student-t weights with three degrees of freedom.
    HeavyTail,
}

impl Profile {
    /// `k` is only consulted for `dead-columns`.
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        match name {
            "gaussian" => Ok(Profile::Gaussian),
            "dead-columns" => Ok(Profile::DeadColumns(k)),
            "heavy-tail" => Ok(Profile::HeavyTail),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected gaussian, dead-columns or heavy-tail)"
            ))),
        }
    }
}

/// `F_in x S` matrix of calibration inputs, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBatch(Dense<f32>);

impl CalibrationBatch {
    pub fn new(samples: Dense<f32>) -> Result<Self> {
        if samples.rows() == 0 || samples.cols() == 0 {
            return Err(Error::Shape("calibration batch must be non-empty".into()));
        }
        if samples.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(
                "calibration batch has non-finite values".into(),
            ));
        }
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &Dense<f32> {
        &self.0
    }

    pub fn channels(&self) -> usize {
        self.0.rows()
    }

    pub fn norms(&self, alpha: f64) -> Result<ActivationNorms> {
        ActivationNorms::from_samples(&self.0, alpha)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLayer {
    pub weights: WeightMatrix,
    pub calibration: CalibrationBatch,
    /// Sorted indices of the shrunk channels (empty unless dead-columns).
    pub dead_columns: Vec<usize>,
}

/// Deterministic per seed.
pub fn gen_synthetic(
    seed: u64,
    f_out: usize,
    f_in: usize,
    samples: usize,
    profile: Profile,
) -> Result<SyntheticLayer> {
    if f_out == 0 || f_in == 0 || samples == 0 {
        return Err(Error::Config(
            "dimensions and sample count must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    let mut w: Vec<f32> = match profile {
        Profile::HeavyTail => {
            let t = StudentT::new(3.0f64).expect("valid student-t");
            (0..f_out * f_in)
                .map(|_| t.sample(&mut rng) as f32)
                .collect()
        }
        Profile::Gaussian | Profile::DeadColumns(_) => (0..f_out * f_in)
            .map(|_| normal.sample(&mut rng) as f32)
            .collect(),
    };
    let mut z: Vec<f32> = (0..f_in * samples)
        .map(|_| normal.sample(&mut rng) as f32)
        .collect();

    let mut dead = Vec::new();
    if let Profile::DeadColumns(k) = profile {
        if k >= f_in {
            return Err(Error::Config(format!(
                "dead-columns needs k < F_in, got k = {k}, F_in = {f_in}"
            )));
        }
        dead = index::sample(&mut rng, f_in, k).into_vec();
        dead.sort_unstable();
        let col_max = |w: &[f32], j: usize| {
            (0..f_out)
                .map(|i| w[i * f_in + j].abs())
                .fold(0.0f32, f32::max)
        };
        let live_max = (0..f_in)
            .filter(|j| dead.binary_search(j).is_err())
            .map(|j| col_max(&w, j))
            .fold(0.0f32, f32::max);
        for &j in &dead {
            // Keep the dead column below DEAD_SCALE of the surviving maximum
            // even if it started out as the largest column; the halving
            // absorbs f32 rounding of the product.
            let cm = col_max(&w, j);
            let factor = if cm >= live_max {
                0.5 * DEAD_SCALE * (live_max / cm)
            } else {
                DEAD_SCALE
            };
            for i in 0..f_out {
                w[i * f_in + j] *= factor;
            }
            for s in 0..samples {
                z[j * samples + s] *= DEAD_SCALE;
            }
        }
    }

    Ok(SyntheticLayer {
        weights: WeightMatrix::new(f_out, f_in, w)?,
        calibration: CalibrationBatch::new(Dense::from_vec(f_in, samples, z)?)?,
        dead_columns: dead,
    })
}

fn matmul_frobenius(w: &Dense<f64>, z: &Dense<f32>) -> f64 {
    let mut total = 0.0f64;
    let mut row = vec![0.0f64; z.cols()];
    for i in 0..w.rows() {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (k, &wik) in w.row(i).iter().enumerate() {
            if wik == 0.0 {
                continue;
            }
            for (acc, &zk) in row.iter_mut().zip(z.row(k)) {
                *acc += wik * f64::from(zk);
            }
        }
        total += row.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

/// `‖W Z − (W ⊙ mask) Z‖_F / ‖W Z‖_F`.
pub fn reconstruction_error(
    w: &WeightMatrix,
    mask: &PruneMask,
    z: &CalibrationBatch,
) -> Result<f64> {
    if w.shape() != (mask.rows(), mask.cols()) || w.cols() != z.channels() {
        return Err(Error::Shape(format!(
            "weights {:?}, mask {}x{}, calibration {:?} are incompatible",
            w.shape(),
            mask.rows(),
            mask.cols(),
            z.samples().shape()
        )));
    }
    let dense = w.map(|&v| f64::from(v));
    let denom = matmul_frobenius(&dense, z.samples());
    if denom == 0.0 {
        return Err(Error::Degenerate("W Z is identically zero".into()));
    }
    let removed = Dense::from_fn(w.rows(), w.cols(), |i, j| {
        if mask.get(i, j) {
            0.0
        } else {
            dense.get(i, j)
        }
    });
    Ok(matmul_frobenius(&removed, z.samples()) / denom)
}

/// Calibration data for a comparison: a full batch enables reconstruction
/// error, bare norms only drive the scores.
#[derive(Debug, Clone)]
pub enum Activations {
    Norms(ActivationNorms),
    Batch(CalibrationBatch),
}

impl Activations {
    pub fn norms(&self, alpha: f64) -> Result<ActivationNorms> {
        match self {
            Activations::Norms(n) => n.with_alpha(alpha),
            Activations::Batch(b) => b.norms(alpha),
        }
    }

    pub fn batch(&self) -> Option<&CalibrationBatch> {
        match self {
            Activations::Batch(b) => Some(b),
            Activations::Norms(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub nm_valid: bool,
    /// Absent when no calibration batch was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<f64>,
    pub corrupted_channels: usize,
    pub retained_magnitude_fraction: f64,
    /// Only reported for the method that carries the degree guarantee.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma1_pass: Option<bool>,
}

fn retained_fraction(w: &WeightMatrix, mask: &PruneMask) -> f64 {
    let (mut kept, mut total) = (0.0f64, 0.0f64);
    for (&v, &k) in w.as_slice().iter().zip(mask.as_slice()) {
        let a = f64::from(v).abs();
        total += a;
        if k == 1 {
            kept += a;
        }
    }
    if total == 0.0 {
        1.0
    } else {
        kept / total
    }
}

fn report_for(
    method: Method,
    w: &WeightMatrix,
    acts: Option<&Activations>,
    cfg: &PruneConfig,
) -> Result<(MethodReport, PruneMask)> {
    let norms = acts.map(|a| a.norms(cfg.alpha)).transpose()?;
    let out = pipeline::prune(method, w, norms.as_ref(), cfg)?;
    let nm_valid = out.mask.validate_nm(cfg.n, cfg.m).is_ok();
    let original = &out.original_mask;
    let reconstruction_error = match acts.and_then(Activations::batch) {
        Some(z) => Some(reconstruction_error(w, original, z)?),
        None => None,
    };
    let lemma1_pass =
        (method == Method::Eggs).then(|| graph::verify_lemma1(&out.mask, cfg).is_ok());
    let report = MethodReport {
        method,
        nm_valid,
        reconstruction_error,
        corrupted_channels: original.col_degrees().iter().filter(|&&d| d == 0).count(),
        retained_magnitude_fraction: retained_fraction(w, original),
        lemma1_pass,
    };
    Ok((report, out.mask))
}

/// One report per method, in the order given.
pub fn compare_methods(
    w: &WeightMatrix,
    acts: Option<&Activations>,
    cfg: &PruneConfig,
    methods: &[Method],
) -> Result<Vec<MethodReport>> {
    methods
        .iter()
        .map(|&m| report_for(m, w, acts, cfg).map(|(r, _)| r))
        .collect()
}

/// `method,error,corrupted,lemma1_pass` with a header row; missing values are empty.
pub fn reports_to_csv(reports: &[MethodReport]) -> String {
    let mut out = String::from("method,error,corrupted,lemma1_pass\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.method,
            r.reconstruction_error
                .map(|e| e.to_string())
                .unwrap_or_default(),
            r.corrupted_channels,
            r.lemma1_pass.map(|p| p.to_string()).unwrap_or_default()
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub b: usize,
    pub effective_b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<f64>,
    pub corrupted_channels: usize,
    pub min_in_degree: usize,
    pub lemma1_pass: bool,
}

/// Runs the connectivity-aware pipeline once per block count in `bs`.
pub fn sweep(
    w: &WeightMatrix,
    acts: &Activations,
    cfg: &PruneConfig,
    bs: RangeInclusive<usize>,
) -> Result<Vec<SweepRow>> {
    bs.map(|b| {
        let cfg = PruneConfig { b, ..*cfg };
        let (report, mask) = report_for(Method::Eggs, w, Some(acts), &cfg)?;
        Ok(SweepRow {
            b,
            effective_b: effective_blocks(w.rows(), cfg.m, b),
            reconstruction_error: report.reconstruction_error,
            corrupted_channels: report.corrupted_channels,
            min_in_degree: mask.col_degrees().into_iter().min().unwrap_or(0),
            lemma1_pass: report.lemma1_pass.unwrap_or(false),
        })
    })
    .collect()
}
