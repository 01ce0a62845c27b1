//! End-to-end pruning of one layer with a named method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{self, PruneConfig, PruneMask};
use crate::matrix::WeightMatrix;
use crate::metrics::{self, ActivationNorms};
use crate::permute::{self, ChannelPermutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Magnitude,
    Wanda,
    Ria,
    Eggs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Magnitude, Method::Wanda, Method::Ria, Method::Eggs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Magnitude => "magnitude",
            Method::Wanda => "wanda",
            Method::Ria => "ria",
            Method::Eggs => "eggs",
        }
    }

    pub fn needs_activations(self) -> bool {
        !matches!(self, Method::Magnitude)
    }

    /// Methods that prune in a channel-permuted layout.
    pub fn permutes(self) -> bool {
        matches!(self, Method::Ria | Method::Eggs)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Result of pruning one layer.
///
/// `weights` and `mask` are in the pruning layout: for permuting methods the
/// columns are ordered by `permutation.forward()`, and N:M windows are only
/// valid in that order. `original_mask` maps the mask back onto the
/// caller's column order.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub method: Method,
    pub permutation: ChannelPermutation,
    pub weights: WeightMatrix,
    pub mask: PruneMask,
    pub original_mask: PruneMask,
}

impl PruneOutcome {
    /// `weights ⊙ mask`, in the pruning layout.
    pub fn pruned(&self) -> Result<WeightMatrix> {
        mask::apply_mask(&self.weights, &self.mask)
    }
}

fn require_acts(method: Method, act: Option<&ActivationNorms>) -> Result<&ActivationNorms> {
    act.ok_or_else(|| Error::Config(format!("method {method} needs activation norms")))
}

/// Channel permutation from aggregated RIA, as used by the permuting methods.
pub fn ria_permutation(
    w: &WeightMatrix,
    act: &ActivationNorms,
    m: usize,
) -> Result<ChannelPermutation> {
    let scores = metrics::ria(w, act)?;
    permute::build_permutation(&metrics::channel_scores(&scores), m)
}

pub fn prune(
    method: Method,
    w: &WeightMatrix,
    act: Option<&ActivationNorms>,
    cfg: &PruneConfig,
) -> Result<PruneOutcome> {
    let identity = || ChannelPermutation::identity(w.cols());
    let (permutation, weights, mask) = match method {
        Method::Magnitude => {
            let scores = metrics::magnitude_score(w);
            let mask = mask::nm_prune_with_scores(w, &scores, cfg.n, cfg.m)?;
            (identity(), w.clone(), mask)
        }
        Method::Wanda => {
            let scores = metrics::wanda_score(w, require_acts(method, act)?)?;
            let mask = mask::nm_prune_with_scores(w, &scores, cfg.n, cfg.m)?;
            (identity(), w.clone(), mask)
        }
        Method::Ria | Method::Eggs => {
            if method == Method::Eggs {
                cfg.require_even_m()?;
            }
            let act = require_acts(method, act)?.with_alpha(cfg.alpha)?;
            let perm = ria_permutation(w, &act, cfg.m)?;
            let w_perm = permute::apply_to_columns(w, &perm)?;
            let act_perm = act.reordered(perm.forward())?;
            let mask = if method == Method::Eggs {
                mask::eggs_prune(&w_perm, &act_perm, cfg)?
            } else {
                let scores = metrics::ria(&w_perm, &act_perm)?;
                mask::nm_prune_with_scores(&w_perm, &scores, cfg.n, cfg.m)?
            };
            (perm, w_perm, mask)
        }
    };
    let original_mask = permute::unpermute_mask(&mask, &permutation)?;
    Ok(PruneOutcome {
        method,
        permutation,
        weights,
        mask,
        original_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sparsegpt".parse::<Method>().is_err());
    }

    #[test]
    fn magnitude_needs_no_activations() {
        let w = WeightMatrix::new(2, 4, vec![1.0, -4.0, 2.0, 3.0, 0.5, 0.1, -0.2, 0.3]).unwrap();
        let cfg = PruneConfig::new(2, 4, 1, 0.5).unwrap();
        let out = prune(Method::Magnitude, &w, None, &cfg).unwrap();
        assert!(out.permutation.is_identity());
        assert_eq!(out.mask.as_slice(), &[0, 1, 0, 1, 1, 0, 0, 1]);
        assert!(matches!(
            prune(Method::Wanda, &w, None, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            prune(Method::Eggs, &w, None, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn permuted_layout_is_consistent() {
        let w = WeightMatrix::new(
            4,
            8,
            (0..32)
                .map(|k| ((k * 7919) % 97) as f32 / 10.0 + 0.1)
                .collect(),
        )
        .unwrap();
        let act = ActivationNorms::new((0..8).map(|j| 1.0 + j as f64).collect(), 0.5).unwrap();
        let cfg = PruneConfig::new(2, 4, 1, 0.5).unwrap();
        let out = prune(Method::Eggs, &w, Some(&act), &cfg).unwrap();
        out.mask.validate_nm(2, 4).unwrap();
        let pruned = out.pruned().unwrap();
        let direct = mask::apply_mask(&w, &out.original_mask).unwrap();
        let mut a: Vec<f32> = pruned.as_slice().to_vec();
        let mut b: Vec<f32> = direct.as_slice().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
    }
}
