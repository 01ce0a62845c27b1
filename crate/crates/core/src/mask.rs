//! Binary N:M masks.
//!
//! Convention: an `N:M` pattern prunes exactly `N` weights and keeps `M - N`
//! in every row window of `M` consecutive columns.
//!
//! Two per-row strategies are combined by [`eggs_prune`]:
//!
//! * importance-aware: keep the `M - N` highest-scoring entries of the window;
//! * connectivity-aware, on an `M x M` block of rows: keep one diagonal
//!   pattern chosen from the block's quadrants (one entry per row and per
//!   column), then fill each row with the `M - N - 1` best remaining entries.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{Dense, ScoreMatrix, WeightMatrix};
use crate::metrics;
use crate::partition::{self, Strategy};
use crate::tensor_store::Tensor;

/// Binary `rows x cols` mask; 1 keeps a weight, 0 prunes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask(Dense<u8>);

impl PruneMask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Dense::filled(rows, cols, 0))
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self(Dense::filled(rows, cols, 1))
    }

    /// Fails on any entry other than 0 or 1.
    pub fn from_dense(dense: Dense<u8>) -> Result<Self> {
        if let Some(pos) = dense.as_slice().iter().position(|&v| v > 1) {
            return Err(Error::Invariant(format!(
                "mask entry ({}, {}) is {}, expected 0 or 1",
                pos / dense.cols(),
                pos % dense.cols(),
                dense.as_slice()[pos]
            )));
        }
        Ok(Self(dense))
    }

    pub(crate) fn from_dense_unchecked(dense: Dense<u8>) -> Self {
        Self(dense)
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Shape("ragged mask rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::from_dense(Dense::from_vec(rows.len(), cols, data)?)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let values = t
            .as_u8()
            .ok_or_else(|| Error::Format("mask tensor must be u8".into()))?;
        match t.shape() {
            &[r, c] => Self::from_dense(Dense::from_vec(r, c, values.to_vec())?),
            s => Err(Error::Shape(format!("mask must be 2-D, got shape {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::u8(
            vec![self.0.rows(), self.0.cols()],
            self.0.as_slice().to_vec(),
        )
        .expect("mask shape matches its data")
    }

    pub fn as_dense(&self) -> &Dense<u8> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0.get(row, col) == 1
    }

    pub fn set(&mut self, row: usize, col: usize, keep: bool) {
        self.0.set(row, col, u8::from(keep));
    }

    pub fn as_slice(&self) -> &[u8] {
        self.0.as_slice()
    }

    /// Ones per row (output-channel degree).
    pub fn row_degrees(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|i| self.0.row(i).iter().map(|&v| v as usize).sum())
            .collect()
    }

    /// Ones per column (input-channel degree).
    pub fn col_degrees(&self) -> Vec<usize> {
        let mut out = vec![0; self.cols()];
        for i in 0..self.rows() {
            for (o, &v) in out.iter_mut().zip(self.0.row(i)) {
                *o += v as usize;
            }
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.as_slice().iter().map(|&v| v as usize).sum()
    }

    /// Checks that every row window `[kM, (k+1)M)` holds exactly `M - N` ones.
    pub fn validate_nm(&self, n: usize, m: usize) -> Result<()> {
        check_pattern(n, m)?;
        if !self.cols().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "{} columns are not a multiple of M = {m}",
                self.cols()
            )));
        }
        let keep = m - n;
        for i in 0..self.rows() {
            for (k, window) in self.0.row(i).chunks(m).enumerate() {
                let ones: usize = window.iter().map(|&v| v as usize).sum();
                if ones != keep {
                    return Err(Error::Verification(format!(
                        "row {i} window {k} (columns {}..{}) keeps {ones} weights, expected {keep}",
                        k * m,
                        (k + 1) * m
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `N:M` pattern, connectivity block count `B` and activation exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub alpha: f64,
}

impl PruneConfig {
    pub fn new(n: usize, m: usize, b: usize, alpha: f64) -> Result<Self> {
        check_pattern(n, m)?;
        if !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { n, m, b, alpha })
    }

    /// Weights kept per window.
    pub fn keep(&self) -> usize {
        self.m - self.n
    }

    /// Quadrant construction needs an even block width.
    pub fn require_even_m(&self) -> Result<()> {
        require_even(self.m)
    }
}

fn check_pattern(n: usize, m: usize) -> Result<()> {
    if n == 0 || n >= m {
        return Err(Error::Config(format!(
            "N:M requires 0 < N < M, got {n}:{m}"
        )));
    }
    Ok(())
}

fn require_even(m: usize) -> Result<()> {
    if !m.is_multiple_of(2) {
        return Err(Error::Config(format!("M must be even, got {m}")));
    }
    Ok(())
}

/// Descending by score, then ascending by index. Equal scores tie exactly.
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    }
}

/// Positions of the `k` best candidates.
fn top_k(scores: &[f64], candidates: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut c: Vec<usize> = candidates.collect();
    c.sort_by(by_score_desc(scores));
    c.truncate(k);
    c
}

fn check_scores(scores: &ScoreMatrix) -> Result<()> {
    if let Some(pos) = scores.as_slice().iter().position(|s| !s.is_finite()) {
        return Err(Error::Invariant(format!(
            "score at ({}, {}) is not finite",
            pos / scores.cols(),
            pos % scores.cols()
        )));
    }
    Ok(())
}

/// Keeps the `M - N` highest scores in every row window.
pub fn importance_select(scores: &ScoreMatrix, n: usize, m: usize) -> Result<PruneMask> {
    check_pattern(n, m)?;
    if !scores.cols().is_multiple_of(m) {
        return Err(Error::Shape(format!(
            "{} columns are not a multiple of M = {m}",
            scores.cols()
        )));
    }
    check_scores(scores)?;
    let keep = m - n;
    let mut mask = PruneMask::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        for start in (0..scores.cols()).step_by(m) {
            let window = &row[start..start + m];
            for j in top_k(window, 0..m, keep) {
                mask.set(i, start + j, true);
            }
        }
    }
    Ok(mask)
}

/// Which diagonal of a quadrant was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    Main,
    Anti,
}

/// Quadrant choices and the winning pair of a diagonal selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagonalChoice {
    /// Top-left, top-right, bottom-left, bottom-right.
    pub quadrants: [Diagonal; 4],
    /// True when the top-left/bottom-right pair was kept.
    pub main_pair: bool,
}

fn check_block<T: Copy>(block: &Dense<T>) -> Result<usize> {
    let m = block.rows();
    if block.cols() != m || m == 0 {
        return Err(Error::Shape(format!(
            "expected a square block, got {}x{}",
            block.rows(),
            block.cols()
        )));
    }
    require_even(m)?;
    Ok(m)
}

/// Positions of one quadrant diagonal: `(row, col)` for `t in 0..h`.
fn diagonal_cells(
    row0: usize,
    col0: usize,
    h: usize,
    d: Diagonal,
) -> impl Iterator<Item = (usize, usize)> {
    (0..h).map(move |t| match d {
        Diagonal::Main => (row0 + t, col0 + t),
        Diagonal::Anti => (row0 + t, col0 + h - 1 - t),
    })
}

/// Picks the diagonal pattern for one `M x M` block and reports the choice.
pub fn diagonal_choice(block: &Dense<f32>) -> Result<DiagonalChoice> {
    let m = check_block(block)?;
    let h = m / 2;
    let mag = |(r, c): (usize, usize)| f64::from(block.get(r, c)).abs();
    let origins = [(0, 0), (0, h), (h, 0), (h, h)];
    let mut quadrants = [Diagonal::Main; 4];
    let mut sums = [0.0f64; 4];
    for (q, &(r0, c0)) in origins.iter().enumerate() {
        let main: f64 = diagonal_cells(r0, c0, h, Diagonal::Main).map(mag).sum();
        let anti: f64 = diagonal_cells(r0, c0, h, Diagonal::Anti).map(mag).sum();
        // Equal sums keep the main diagonal.
        (quadrants[q], sums[q]) = if anti > main {
            (Diagonal::Anti, anti)
        } else {
            (Diagonal::Main, main)
        };
    }
    let pair_a = sums[0] + sums[3];
    let pair_b = sums[1] + sums[2];
    Ok(DiagonalChoice {
        quadrants,
        main_pair: pair_a >= pair_b,
    })
}

/// Renders a choice as an `M x M` 0/1 block.
pub fn diagonal_pattern(m: usize, choice: &DiagonalChoice) -> Dense<u8> {
    let h = m / 2;
    let mut out = Dense::filled(m, m, 0u8);
    let kept: [(usize, usize, Diagonal); 2] = if choice.main_pair {
        [(0, 0, choice.quadrants[0]), (h, h, choice.quadrants[3])]
    } else {
        [(0, h, choice.quadrants[1]), (h, 0, choice.quadrants[2])]
    };
    for (r0, c0, d) in kept {
        for (r, c) in diagonal_cells(r0, c0, h, d) {
            out.set(r, c, 1);
        }
    }
    out
}

/// One kept entry per row and per column of the block, chosen by quadrant
/// diagonal magnitude sums.
pub fn diagonal_select(block: &Dense<f32>) -> Result<Dense<u8>> {
    let choice = diagonal_choice(block)?;
    Ok(diagonal_pattern(block.rows(), &choice))
}

/// Diagonal selection on `block_w`, then the `M - N - 1` best `block_ria`
/// entries per row among those not yet kept.
pub fn connectivity_select(
    block_w: &Dense<f32>,
    block_ria: &ScoreMatrix,
    n: usize,
    m: usize,
) -> Result<Dense<u8>> {
    check_pattern(n, m)?;
    if check_block(block_w)? != m || block_ria.shape() != (m, m) {
        return Err(Error::Shape(format!(
            "connectivity blocks must be {m}x{m}, got {:?} and {:?}",
            block_w.shape(),
            block_ria.shape()
        )));
    }
    check_scores(block_ria)?;
    let mut out = diagonal_select(block_w)?;
    let extra = m - n - 1;
    for r in 0..m {
        let taken = out.row(r).to_vec();
        let free = (0..m).filter(|&c| taken[c] == 0);
        for c in top_k(block_ria.row(r), free, extra) {
            out.set(r, c, 1);
        }
    }
    Ok(out)
}

/// Full pruning of an already channel-permuted matrix.
pub fn eggs_prune(
    w_perm: &WeightMatrix,
    act_perm: &metrics::ActivationNorms,
    cfg: &PruneConfig,
) -> Result<PruneMask> {
    check_pattern(cfg.n, cfg.m)?;
    cfg.require_even_m()?;
    let ria = metrics::ria(w_perm, act_perm)?;
    let rri = metrics::rri(w_perm)?;
    let plans = partition::plan_groups(&rri, cfg.m, cfg.b)?;
    let (m, keep) = (cfg.m, cfg.keep());

    let mut mask = PruneMask::zeros(w_perm.rows(), w_perm.cols());
    for plan in &plans {
        let c0 = plan.cols.start;
        for block in &plan.blocks {
            match block.strategy {
                Strategy::Connectivity => {
                    let rows = &block.rows;
                    let bw = Dense::from_fn(m, m, |t, u| w_perm.get(rows[t], c0 + u));
                    let br = Dense::from_fn(m, m, |t, u| ria.get(rows[t], c0 + u));
                    let sel = connectivity_select(&bw, &br, cfg.n, m)?;
                    for (t, &i) in rows.iter().enumerate() {
                        for u in 0..m {
                            if sel.get(t, u) == 1 {
                                mask.set(i, c0 + u, true);
                            }
                        }
                    }
                }
                Strategy::Importance => {
                    for &i in &block.rows {
                        let window = &ria.row(i)[plan.cols.clone()];
                        for u in top_k(window, 0..m, keep) {
                            mask.set(i, c0 + u, true);
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Score-driven N:M pruning used by the magnitude, activation-weighted and
/// RIA baselines.
pub fn nm_prune_with_scores(
    w: &WeightMatrix,
    scores: &ScoreMatrix,
    n: usize,
    m: usize,
) -> Result<PruneMask> {
    if scores.shape() != w.shape() {
        return Err(Error::Shape(format!(
            "scores {:?} do not match weights {:?}",
            scores.shape(),
            w.shape()
        )));
    }
    importance_select(scores, n, m)
}

/// `W ⊙ mask`.
pub fn apply_mask(w: &WeightMatrix, mask: &PruneMask) -> Result<WeightMatrix> {
    if w.shape() != (mask.rows(), mask.cols()) {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match weights {:?}",
            mask.rows(),
            mask.cols(),
            w.shape()
        )));
    }
    let data = w
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(&v, &k)| if k == 1 { v } else { 0.0 })
        .collect();
    WeightMatrix::new(w.rows(), w.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ActivationNorms;

    fn scores(rows: &[&[f64]]) -> ScoreMatrix {
        let cols = rows[0].len();
        Dense::from_vec(rows.len(), cols, rows.concat()).unwrap()
    }

    fn block(rows: &[&[f32]]) -> Dense<f32> {
        let cols = rows[0].len();
        Dense::from_vec(rows.len(), cols, rows.concat()).unwrap()
    }

    fn eye(m: usize) -> Dense<f32> {
        Dense::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn importance_select_examples() {
        let m = importance_select(&scores(&[&[4.0, 1.0, 3.0, 2.0]]), 2, 4).unwrap();
        assert_eq!(m.as_slice(), &[1, 0, 1, 0]);
        let m = importance_select(&scores(&[&[1.0; 4]]), 2, 4).unwrap();
        assert_eq!(m.as_slice(), &[1, 1, 0, 0]);
        let m = importance_select(&scores(&[&[0.0, 9.0, 0.0, 0.0]]), 3, 4).unwrap();
        assert_eq!(m.as_slice(), &[0, 1, 0, 0]);
        assert!(matches!(
            importance_select(&scores(&[&[1.0; 6]]), 2, 4),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            importance_select(&scores(&[&[1.0; 4]]), 4, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn diagonal_select_identity_and_anti() {
        let sel = diagonal_select(&eye(4)).unwrap();
        assert_eq!(sel.as_slice(), eye(4).map(|&v| v as u8).as_slice());

        let anti = Dense::from_fn(4, 4, |i, j| if i + j == 3 { 1.0f32 } else { 0.0 });
        let sel = diagonal_select(&anti).unwrap();
        assert_eq!(sel.as_slice(), anti.map(|&v| v as u8).as_slice());

        assert!(matches!(diagonal_select(&eye(3)), Err(Error::Config(_))));
        assert!(matches!(
            diagonal_select(&Dense::filled(2, 4, 1.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn diagonal_select_hand_instance() {
        // TL: main 1+1=2, anti 5+0=5 -> anti.  TR: main 2+2=4 > anti 0 -> main.
        // BL: main 3+3=6, anti 1+1=2 -> main.  BR: main 0, anti 0 -> main (tie).
        // Pair A = 5 + 0 = 5, pair B = 4 + 6 = 10 -> TR/BL.
        let b = block(&[
            &[1.0, 5.0, 2.0, 0.0],
            &[0.0, 1.0, 0.0, 2.0],
            &[3.0, 1.0, 0.0, 0.0],
            &[1.0, 3.0, 0.0, 0.0],
        ]);
        let choice = diagonal_choice(&b).unwrap();
        assert_eq!(
            choice.quadrants,
            [
                Diagonal::Anti,
                Diagonal::Main,
                Diagonal::Main,
                Diagonal::Main
            ]
        );
        assert!(!choice.main_pair);
        let sel = diagonal_select(&b).unwrap();
        assert_eq!(
            sel.as_slice(),
            &[0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0]
        );
    }

    #[test]
    fn connectivity_select_examples() {
        let w = eye(4);
        let uniform = Dense::filled(4, 4, 1.0);
        // keep 1: the diagonal alone.
        let sel = connectivity_select(&w, &uniform, 3, 4).unwrap();
        assert_eq!(sel, diagonal_select(&w).unwrap());
        // keep 2: diagonal plus the lowest free column.
        let sel = connectivity_select(&w, &uniform, 2, 4).unwrap();
        assert_eq!(
            sel.as_slice(),
            &[1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1]
        );
        // The diagonal entry is never counted twice even if it has the best score.
        let ria = Dense::from_fn(4, 4, |i, j| if i == j { 10.0 } else { j as f64 });
        let sel = connectivity_select(&w, &ria, 1, 4).unwrap();
        for r in 0..4 {
            assert_eq!(sel.row(r).iter().map(|&v| v as usize).sum::<usize>(), 3);
        }
        assert_eq!(sel.row(0), &[1, 0, 1, 1]);
        assert_eq!(sel.row(3), &[0, 1, 1, 1]);
    }

    #[test]
    fn nm_prune_examples() {
        let w = WeightMatrix::from_rows(&[[3.0f32, 1.0, 2.0, 9.0]]).unwrap();
        let mask = nm_prune_with_scores(&w, &metrics::magnitude_score(&w), 1, 2).unwrap();
        assert_eq!(mask.as_slice(), &[1, 0, 0, 1]);

        // Diagonally dominant 4x8: the two dominant entries per window survive.
        let w = WeightMatrix::new(
            4,
            8,
            (0..32)
                .map(|k| {
                    let (i, j) = (k / 8, k % 8);
                    if j % 4 == i || j % 4 == (i + 1) % 4 {
                        5.0
                    } else {
                        0.1
                    }
                })
                .collect(),
        )
        .unwrap();
        let mask = nm_prune_with_scores(&w, &metrics::magnitude_score(&w), 2, 4).unwrap();
        for i in 0..4 {
            for j in 0..8 {
                assert_eq!(mask.get(i, j), w.get(i, j) == 5.0, "({i},{j})");
            }
        }
        assert!(nm_prune_with_scores(&w, &Dense::filled(4, 4, 1.0), 2, 4).is_err());
    }

    #[test]
    fn apply_mask_examples() {
        let w = WeightMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(apply_mask(&w, &PruneMask::ones(2, 2)).unwrap(), w);
        let z = apply_mask(&w, &PruneMask::zeros(2, 2)).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let m = PruneMask::from_rows(&[[1u8, 0], [0, 1]]).unwrap();
        assert_eq!(
            apply_mask(&w, &m).unwrap().as_slice(),
            &[1.0, 0.0, 0.0, 4.0]
        );
        assert!(apply_mask(&w, &PruneMask::ones(1, 2)).is_err());
    }

    #[test]
    fn validate_nm_names_offender() {
        let mut m = PruneMask::from_rows(&[[1u8, 1, 0, 0, 0, 1, 0, 1]]).unwrap();
        m.validate_nm(2, 4).unwrap();
        m.set(0, 6, true);
        let err = m.validate_nm(2, 4).unwrap_err().to_string();
        assert!(err.contains("row 0 window 1"), "{err}");
        assert!(PruneMask::from_rows(&[[2u8]]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PruneConfig::new(2, 4, 1, 0.5).is_ok());
        assert!(PruneConfig::new(0, 4, 1, 0.5).is_err());
        assert!(PruneConfig::new(4, 4, 1, 0.5).is_err());
        assert!(PruneConfig::new(1, 2, 1, f64::NAN).is_err());
        let odd = PruneConfig::new(1, 3, 1, 0.5).unwrap();
        assert!(odd.require_even_m().is_err());
        let w = WeightMatrix::new(3, 3, vec![1.0; 9]).unwrap();
        let act = ActivationNorms::new(vec![1.0; 3], 0.5).unwrap();
        assert!(matches!(eggs_prune(&w, &act, &odd), Err(Error::Config(_))));
    }

    #[test]
    fn eggs_row_and_column_degrees() {
        let w = WeightMatrix::new(
            8,
            8,
            (0..64)
                .map(|k| ((k * 37 % 23) as f32 - 11.0) / 7.0 + 0.01)
                .collect(),
        )
        .unwrap();
        let act = ActivationNorms::new(vec![1.0; 8], 0.5).unwrap();
        let cfg = PruneConfig::new(2, 4, 1, 0.5).unwrap();
        let mask = eggs_prune(&w, &act, &cfg).unwrap();
        mask.validate_nm(2, 4).unwrap();
        assert!(mask.row_degrees().iter().all(|&d| d == 4));
        assert!(mask.col_degrees().iter().all(|&d| d >= 1));
    }
}
