//! Pruning groups and importance-aware row partitioning.
//!
//! Each group of `M` consecutive columns is handled independently: its rows
//! are ordered by ascending in-group RRI sum and chunked into `M`-row blocks.
//! The first `B` full blocks (least important rows) use connectivity-aware
//! selection; every other row, including a trailing partial chunk, uses
//! importance-aware selection. Rows are never physically moved.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::ScoreMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Connectivity,
    Importance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    /// Original row indices, in ascending aggregated-RRI order.
    pub rows: Vec<usize>,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    pub group_index: usize,
    pub cols: Range<usize>,
    pub row_order: Vec<usize>,
    pub blocks: Vec<Block>,
}

/// Number of connectivity blocks actually available: `min(B, floor(F_out / M))`.
pub fn effective_blocks(f_out: usize, m: usize, b: usize) -> usize {
    b.min(f_out / m)
}

pub fn split_groups(f_in: usize, m: usize) -> Result<Vec<Range<usize>>> {
    if m == 0 {
        return Err(Error::Config("group width M must be positive".into()));
    }
    if f_in == 0 || !f_in.is_multiple_of(m) {
        return Err(Error::Shape(format!(
            "{f_in} columns cannot be split into groups of {m}"
        )));
    }
    Ok((0..f_in / m).map(|k| k * m..(k + 1) * m).collect())
}

/// Rows sorted by ascending `Σ_{j ∈ cols} rri[i][j]`, ties to the lower row.
pub fn order_rows(rri: &ScoreMatrix, cols: Range<usize>) -> Vec<usize> {
    let sums: Vec<f64> = (0..rri.rows())
        .map(|i| rri.row(i)[cols.clone()].iter().sum())
        .collect();
    let mut order: Vec<usize> = (0..rri.rows()).collect();
    order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).expect("finite scores"));
    order
}

pub fn assign_blocks(row_order: &[usize], m: usize, b: usize) -> Vec<Block> {
    let full = row_order.len() / m.max(1);
    let connectivity = b.min(full);
    row_order
        .chunks(m.max(1))
        .enumerate()
        .map(|(k, rows)| Block {
            rows: rows.to_vec(),
            strategy: if k < connectivity {
                Strategy::Connectivity
            } else {
                Strategy::Importance
            },
        })
        .collect()
}

/// One plan per pruning group of `rri`'s columns.
pub fn plan_groups(rri: &ScoreMatrix, m: usize, b: usize) -> Result<Vec<GroupPlan>> {
    let full = rri.rows() / m.max(1);
    if b > full {
        log::warn!("B = {b} exceeds the {full} full blocks per group; clamped to {full}");
    }
    split_groups(rri.cols(), m)?
        .into_iter()
        .enumerate()
        .map(|(group_index, cols)| {
            let row_order = order_rows(rri, cols.clone());
            let blocks = assign_blocks(&row_order, m, b);
            Ok(GroupPlan {
                group_index,
                cols,
                row_order,
                blocks,
            })
        })
        .collect()
}
