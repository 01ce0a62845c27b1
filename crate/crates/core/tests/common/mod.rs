//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major values in roughly [-2, 2], never exactly zero.
pub fn random_values(rng: &mut impl Rng, len: usize) -> Vec<f32> {
    (0..len)
        .map(|_| {
            let v: f32 = rng.random_range(-2.0..2.0);
            if v == 0.0 {
                0.5
            } else {
                v
            }
        })
        .collect()
}

/// Diagonal selection by exhaustive search: every combination of quadrant
/// diagonals and pairs is tried, and the one consistent with the comparison
/// rules (larger sum wins, main diagonal and top-left/bottom-right pair win
/// ties) is rendered. Returns row-major 0/1 of size m*m.
pub fn diagonal_oracle(block: &[f32], m: usize) -> Vec<u8> {
    assert!(m.is_multiple_of(2) && block.len() == m * m);
    let h = m / 2;
    let at = |r: usize, c: usize| (block[r * m + c] as f64).abs();
    // (row0, col0) for TL, TR, BL, BR.
    let quads = [(0, 0), (0, h), (h, 0), (h, h)];
    let cells = |q: usize, anti: bool| -> Vec<(usize, usize)> {
        let (r0, c0) = quads[q];
        (0..h)
            .map(|t| {
                if anti {
                    (r0 + t, c0 + h - 1 - t)
                } else {
                    (r0 + t, c0 + t)
                }
            })
            .collect()
    };
    let sum = |q: usize, anti: bool| -> f64 {
        let mut s = 0.0;
        for (r, c) in cells(q, anti) {
            s += at(r, c);
        }
        s
    };

    let mut consistent = Vec::new();
    for choice in 0u32..16 {
        let anti: Vec<bool> = (0..4).map(|q| choice >> q & 1 == 1).collect();
        let quad_ok = (0..4).all(|q| {
            let (main, other) = (sum(q, false), sum(q, true));
            if anti[q] {
                other > main
            } else {
                main >= other
            }
        });
        if !quad_ok {
            continue;
        }
        let picked: Vec<f64> = (0..4).map(|q| sum(q, anti[q])).collect();
        let (pair_a, pair_b) = (picked[0] + picked[3], picked[1] + picked[2]);
        for keep_a in [true, false] {
            let pair_ok = if keep_a {
                pair_a >= pair_b
            } else {
                pair_b > pair_a
            };
            if pair_ok {
                consistent.push((anti.clone(), keep_a));
            }
        }
    }
    assert_eq!(
        consistent.len(),
        1,
        "comparison rules must single out one candidate"
    );
    let (anti, keep_a) = &consistent[0];
    let mut out = vec![0u8; m * m];
    let kept = if *keep_a { [0, 3] } else { [1, 2] };
    for q in kept {
        for (r, c) in cells(q, anti[q]) {
            out[r * m + c] = 1;
        }
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Minimum |Γ(T)| / |T| over every nonempty subset T of the chosen side of
/// size at most `max_size`, found by walking all 2^n bitmasks. The mask is
/// row-major, rows = outputs, cols = inputs. Returns a reduced (num, den).
pub fn naive_expansion(
    mask: &[u8],
    rows: usize,
    cols: usize,
    input_side: bool,
    max_size: usize,
) -> Option<(u64, u64)> {
    let n = if input_side { cols } else { rows };
    let mut best: Option<(u64, u64)> = None;
    for subset in 1u64..(1u64 << n) {
        let size = subset.count_ones() as usize;
        if size > max_size {
            continue;
        }
        let mut nbrs = HashSet::new();
        for v in 0..n {
            if subset >> v & 1 == 0 {
                continue;
            }
            if input_side {
                for o in 0..rows {
                    if mask[o * cols + v] == 1 {
                        nbrs.insert(o);
                    }
                }
            } else {
                for i in 0..cols {
                    if mask[v * cols + i] == 1 {
                        nbrs.insert(i);
                    }
                }
            }
        }
        let (num, den) = (nbrs.len() as u64, size as u64);
        let better = match best {
            None => true,
            Some((bn, bd)) => num * bd < bn * den,
        };
        if better {
            best = Some((num, den));
        }
    }
    best.map(|(n, d)| {
        let g = gcd(n, d).max(1);
        (n / g, d / g)
    })
}

/// Top-k by descending score with lower index winning ties, via full
/// comparison counting rather than sorting.
pub fn top_k_oracle(scores: &[f64], k: usize) -> Vec<bool> {
    (0..scores.len())
        .map(|j| {
            let beaten_by = (0..scores.len())
                .filter(|&o| scores[o] > scores[j] || (scores[o] == scores[j] && o < j))
                .count();
            beaten_by < k
        })
        .collect()
}
