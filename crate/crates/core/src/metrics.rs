//! Per-weight importance scores.
//!
//! * row-relative importance: `|W_ij| / Σ_k |W_ik|`
//! * relative importance and activation: the row-relative term plus the
//!   column-relative term `|W_ij| / Σ_k |W_kj|`, scaled by `‖Z_j‖^α`
//! * baselines: plain magnitude and `|W_ij| · ‖Z_j‖`
//!
//! Denominators are accumulated in f64 whatever the storage precision.

use crate::error::{Error, Result};
use crate::matrix::{Dense, ScoreMatrix, WeightMatrix};

/// Activation exponent used when the caller does not choose one.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Per-input-channel ℓ2 norms of calibration activations plus the exponent
/// applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationNorms {
    norms: Vec<f64>,
    alpha: f64,
}

impl ActivationNorms {
    pub fn new(norms: Vec<f64>, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite, got {alpha}")));
        }
        if let Some(j) = norms.iter().position(|n| !n.is_finite() || *n < 0.0) {
            return Err(Error::Invariant(format!(
                "activation norm {j} must be finite and non-negative, got {}",
                norms[j]
            )));
        }
        Ok(Self { norms, alpha })
    }

    pub fn from_f32(norms: &[f32], alpha: f64) -> Result<Self> {
        Self::new(norms.iter().map(|&v| f64::from(v)).collect(), alpha)
    }

    /// ℓ2 norm of each row of `samples`, an `F_in x S` calibration batch.
    pub fn from_samples(samples: &Dense<f32>, alpha: f64) -> Result<Self> {
        let norms = (0..samples.rows())
            .map(|j| {
                samples
                    .row(j)
                    .iter()
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Self::new(norms, alpha)
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.norms.clone(), alpha)
    }

    /// Same norms reordered so that entry `p` is `norms[order[p]]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.norms.len() {
            return Err(Error::Shape(format!(
                "ordering of length {} for {} norms",
                order.len(),
                self.norms.len()
            )));
        }
        Self::new(order.iter().map(|&j| self.norms[j]).collect(), self.alpha)
    }

    fn check_len(&self, cols: usize) -> Result<()> {
        if self.norms.len() != cols {
            return Err(Error::Shape(format!(
                "{} activation norms for {cols} input channels",
                self.norms.len()
            )));
        }
        Ok(())
    }

    /// `‖Z_j‖^α` for every channel.
    fn scales(&self) -> Result<Vec<f64>> {
        self.norms
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                if n == 0.0 && self.alpha < 0.0 {
                    Err(Error::Domain(format!(
                        "channel {j} has zero activation norm with negative alpha {}",
                        self.alpha
                    )))
                } else {
                    Ok(n.powf(self.alpha))
                }
            })
            .collect()
    }
}

fn nonzero_row_sums(w: &WeightMatrix) -> Result<Vec<f64>> {
    let sums = w.abs_row_sums();
    match sums.iter().position(|&s| s == 0.0) {
        Some(row) => Err(Error::ZeroRow { row }),
        None => Ok(sums),
    }
}

fn nonzero_col_sums(w: &WeightMatrix) -> Result<Vec<f64>> {
    let sums = w.abs_col_sums();
    match sums.iter().position(|&s| s == 0.0) {
        Some(col) => Err(Error::ZeroColumn { col }),
        None => Ok(sums),
    }
}

/// Row-relative importance. Every row of the result sums to one.
pub fn rri(w: &WeightMatrix) -> Result<ScoreMatrix> {
    let rows = nonzero_row_sums(w)?;
    Ok(Dense::from_fn(w.rows(), w.cols(), |i, j| {
        f64::from(w.get(i, j)).abs() / rows[i]
    }))
}

/// Relative importance and activation.
pub fn ria(w: &WeightMatrix, act: &ActivationNorms) -> Result<ScoreMatrix> {
    act.check_len(w.cols())?;
    let rows = nonzero_row_sums(w)?;
    let cols = nonzero_col_sums(w)?;
    let scales = act.scales()?;
    Ok(Dense::from_fn(w.rows(), w.cols(), |i, j| {
        let a = f64::from(w.get(i, j)).abs();
        (a / rows[i] + a / cols[j]) * scales[j]
    }))
}

/// Column sums of a score matrix: one aggregate score per input channel.
pub fn channel_scores(scores: &ScoreMatrix) -> Vec<f64> {
    let mut out = vec![0.0; scores.cols()];
    for i in 0..scores.rows() {
        for (o, &s) in out.iter_mut().zip(scores.row(i)) {
            *o += s;
        }
    }
    out
}

pub fn magnitude_score(w: &WeightMatrix) -> ScoreMatrix {
    w.map(|&v| f64::from(v).abs())
}

/// `|W_ij| · ‖Z_j‖`. The exponent stored in `act` is ignored (fixed at one).
pub fn wanda_score(w: &WeightMatrix, act: &ActivationNorms) -> Result<ScoreMatrix> {
    act.check_len(w.cols())?;
    let norms = act.norms();
    Ok(Dense::from_fn(w.rows(), w.cols(), |i, j| {
        f64::from(w.get(i, j)).abs() * norms[j]
    }))
}
