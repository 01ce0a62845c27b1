//! Masks as bipartite graphs between input channels and output channels,
//! degree laws, and exact small-instance expansion measurement.
//!
//! For a mask produced with effective block count `B_e = min(B, floor(F_out / M))`:
//!
//! * every output vertex has degree exactly `(F_in / M)(M - N)`;
//! * every input vertex has degree at least `B_e`.
//!
//! Any subset smaller than the minimum degree on its side therefore has a
//! neighbourhood strictly larger than itself, which holds for every subset
//! fraction `c < min(B_e / F_in, F_in (M - N) / (F_out M))`.

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mask::{PruneConfig, PruneMask};
use crate::partition::effective_blocks;

/// Largest side for which all subsets may be enumerated.
pub const MAX_ENUMERATED_SIDE: usize = 22;

pub type Rational = Ratio<u64>;

/// Edges run from output vertices (mask rows) to input vertices (mask columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_inputs: usize,
    n_outputs: usize,
    /// Sorted input neighbours of each output vertex.
    adjacency: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Neighbour lists must be in range and duplicate-free; they are sorted here.
    pub fn new(n_inputs: usize, mut adjacency: Vec<Vec<usize>>) -> Result<Self> {
        for (o, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if nbrs.windows(2).any(|w| w[0] == w[1]) || nbrs.last().is_some_and(|&i| i >= n_inputs)
            {
                return Err(Error::Invariant(format!(
                    "output {o} has duplicate or out-of-range neighbours"
                )));
            }
        }
        Ok(Self {
            n_inputs,
            n_outputs: adjacency.len(),
            adjacency,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn output_neighbors(&self, o: usize) -> &[usize] {
        &self.adjacency[o]
    }

    /// Sorted output neighbours of every input vertex.
    pub fn input_adjacency(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_inputs];
        for (o, nbrs) in self.adjacency.iter().enumerate() {
            for &i in nbrs {
                out[i].push(o);
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn input_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_inputs];
        for nbrs in &self.adjacency {
            for &i in nbrs {
                deg[i] += 1;
            }
        }
        deg
    }

    pub fn output_degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }
}

pub fn mask_to_graph(mask: &PruneMask) -> BipartiteGraph {
    let adjacency = (0..mask.rows())
        .map(|o| (0..mask.cols()).filter(|&i| mask.get(o, i)).collect())
        .collect();
    BipartiteGraph {
        n_inputs: mask.cols(),
        n_outputs: mask.rows(),
        adjacency,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub zero_count: usize,
}

impl SideStats {
    fn of(degrees: &[usize]) -> Self {
        let mean = if degrees.is_empty() {
            0.0
        } else {
            degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
        };
        Self {
            min: degrees.iter().copied().min().unwrap_or(0),
            max: degrees.iter().copied().max().unwrap_or(0),
            mean,
            zero_count: degrees.iter().filter(|&&d| d == 0).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub inputs: SideStats,
    pub outputs: SideStats,
}

pub fn degree_stats(g: &BipartiteGraph) -> DegreeStats {
    DegreeStats {
        inputs: SideStats::of(&g.input_degrees()),
        outputs: SideStats::of(&g.output_degrees()),
    }
}

/// Degree thresholds and admissible subset fractions implied by a config.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeBounds {
    pub effective_b: usize,
    pub output_degree: usize,
    pub c_input: Rational,
    pub c_output: Rational,
    pub c_bound: Rational,
}

pub fn degree_bounds(f_out: usize, f_in: usize, cfg: &PruneConfig) -> Result<DegreeBounds> {
    if !f_in.is_multiple_of(cfg.m) || f_out == 0 || f_in == 0 {
        return Err(Error::Shape(format!(
            "{f_out}x{f_in} layer is incompatible with M = {}",
            cfg.m
        )));
    }
    let effective_b = effective_blocks(f_out, cfg.m, cfg.b);
    let keep = cfg.keep() as u64;
    let c_input = Rational::new(effective_b as u64, f_in as u64);
    let c_output = Rational::new(f_in as u64 * keep, (f_out * cfg.m) as u64);
    Ok(DegreeBounds {
        effective_b,
        output_degree: f_in / cfg.m * cfg.keep(),
        c_input,
        c_output,
        c_bound: c_input.min(c_output),
    })
}

/// Checks both degree laws; the error names the first offending vertex.
pub fn verify_lemma1(mask: &PruneMask, cfg: &PruneConfig) -> Result<DegreeBounds> {
    let bounds = degree_bounds(mask.rows(), mask.cols(), cfg)?;
    for (o, d) in mask.row_degrees().into_iter().enumerate() {
        if d != bounds.output_degree {
            return Err(Error::Verification(format!(
                "output {o} has degree {d}, expected {}",
                bounds.output_degree
            )));
        }
    }
    for (i, d) in mask.col_degrees().into_iter().enumerate() {
        if d < bounds.effective_b {
            return Err(Error::Verification(format!(
                "input {i} has degree {d}, expected at least {}",
                bounds.effective_b
            )));
        }
    }
    Ok(bounds)
}

/// Exact expansion over all admissible subsets of both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub min_in_degree: usize,
    pub min_out_degree: usize,
    pub c: Rational,
    /// Largest admissible subset size `floor(c |I|)` and `floor(c |O|)`.
    pub max_input_subset: usize,
    pub max_output_subset: usize,
    /// `min |Γ(T)| / |T|`; `None` when no nonempty subset is admissible.
    pub a_input: Option<Rational>,
    pub a_output: Option<Rational>,
}

impl ExpansionReport {
    /// Both ratios exceed one, counting an empty subset family as satisfied.
    pub fn expands(&self) -> bool {
        let one = Rational::from_integer(1);
        self.a_input.is_none_or(|a| a > one) && self.a_output.is_none_or(|a| a > one)
    }
}

fn neighbour_bits(lists: &[Vec<usize>]) -> Vec<u32> {
    lists
        .iter()
        .map(|nbrs| nbrs.iter().fold(0u32, |acc, &v| acc | (1 << v)))
        .collect()
}

/// Minimum `|Γ(T)| / |T|` over nonempty `T` with `|T| <= max_size`.
fn min_expansion(adj: &[u32], max_size: usize) -> Option<Rational> {
    fn walk(
        adj: &[u32],
        start: usize,
        size: usize,
        union: u32,
        max_size: usize,
        best: &mut Option<Rational>,
    ) {
        for v in start..adj.len() {
            let u = union | adj[v];
            let r = Rational::new(u64::from(u.count_ones()), (size + 1) as u64);
            if best.is_none_or(|b| r < b) {
                *best = Some(r);
            }
            if size + 1 < max_size {
                walk(adj, v + 1, size + 1, u, max_size, best);
            }
        }
    }
    let mut best = None;
    if max_size > 0 {
        walk(adj, 0, 0, 0, max_size.min(adj.len()), &mut best);
    }
    best
}

fn floor_fraction(c: Rational, n: usize) -> usize {
    (c.numer() * n as u64 / c.denom()) as usize
}

pub fn brute_force_expansion(g: &BipartiteGraph, c: Rational) -> Result<ExpansionReport> {
    if *c.numer() == 0 || c >= Rational::from_integer(1) {
        return Err(Error::Config(format!("c must lie in (0, 1), got {c}")));
    }
    if g.n_inputs > MAX_ENUMERATED_SIDE || g.n_outputs > MAX_ENUMERATED_SIDE {
        return Err(Error::Capacity(format!(
            "{}x{} graph exceeds the {MAX_ENUMERATED_SIDE}-vertex enumeration limit",
            g.n_outputs, g.n_inputs
        )));
    }
    let stats = degree_stats(g);
    let max_input_subset = floor_fraction(c, g.n_inputs);
    let max_output_subset = floor_fraction(c, g.n_outputs);
    let inputs = neighbour_bits(&g.input_adjacency());
    let outputs = neighbour_bits(&g.adjacency);
    Ok(ExpansionReport {
        min_in_degree: stats.inputs.min,
        min_out_degree: stats.outputs.min,
        c,
        max_input_subset,
        max_output_subset,
        a_input: min_expansion(&inputs, max_input_subset),
        a_output: min_expansion(&outputs, max_output_subset),
    })
}

fn ratio_pair<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    [*r.numer(), *r.denom()].serialize(s)
}

fn opt_ratio_pair<S: Serializer>(
    r: &Option<Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    r.map(|r| [*r.numer(), *r.denom()]).serialize(s)
}

/// Everything `verify` checks about one mask, in machine-readable form.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub effective_b: usize,
    pub nm_valid: bool,
    pub min_in_degree: usize,
    pub max_in_degree: usize,
    pub zero_in_degree: usize,
    pub min_out_degree: usize,
    pub max_out_degree: usize,
    pub lemma1_pass: bool,
    #[serde(serialize_with = "ratio_pair")]
    pub c_input: Rational,
    #[serde(serialize_with = "ratio_pair")]
    pub c_output: Rational,
    #[serde(serialize_with = "ratio_pair")]
    pub c_bound: Rational,
    #[serde(serialize_with = "opt_ratio_pair")]
    pub c: Option<Rational>,
    #[serde(rename = "a_I", serialize_with = "opt_ratio_pair")]
    pub a_input: Option<Rational>,
    #[serde(rename = "a_O", serialize_with = "opt_ratio_pair")]
    pub a_output: Option<Rational>,
    pub expansion_checked: bool,
    /// Set only when `c` lies strictly inside the guaranteed range.
    pub expansion_pass: Option<bool>,
    pub failures: Vec<String>,
    pub notices: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs the N:M check, both degree laws, and exact expansion when the graph
/// is small enough. With no `c`, half the guaranteed bound is used.
pub fn verify_mask(
    mask: &PruneMask,
    cfg: &PruneConfig,
    c: Option<Rational>,
) -> Result<VerifyReport> {
    let bounds = degree_bounds(mask.rows(), mask.cols(), cfg)?;
    let g = mask_to_graph(mask);
    let stats = degree_stats(&g);
    let mut failures = Vec::new();
    let mut notices = Vec::new();

    let nm_valid = match mask.validate_nm(cfg.n, cfg.m) {
        Ok(()) => true,
        Err(e) => {
            failures.push(e.to_string());
            false
        }
    };
    let lemma1_pass = match verify_lemma1(mask, cfg) {
        Ok(_) => true,
        Err(e) => {
            failures.push(e.to_string());
            false
        }
    };

    let one = Rational::from_integer(1);
    let c = c.or_else(|| {
        let bound = bounds.c_bound.min(one);
        (*bound.numer() > 0).then(|| bound / 2)
    });
    let mut report = VerifyReport {
        rows: mask.rows(),
        cols: mask.cols(),
        n: cfg.n,
        m: cfg.m,
        b: cfg.b,
        effective_b: bounds.effective_b,
        nm_valid,
        min_in_degree: stats.inputs.min,
        max_in_degree: stats.inputs.max,
        zero_in_degree: stats.inputs.zero_count,
        min_out_degree: stats.outputs.min,
        max_out_degree: stats.outputs.max,
        lemma1_pass,
        c_input: bounds.c_input,
        c_output: bounds.c_output,
        c_bound: bounds.c_bound,
        c,
        a_input: None,
        a_output: None,
        expansion_checked: false,
        expansion_pass: None,
        failures: Vec::new(),
        notices: Vec::new(),
    };

    match c {
        None => notices.push("no admissible subset fraction; expansion not measured".into()),
        Some(c) => match brute_force_expansion(&g, c) {
            Ok(exp) => {
                report.expansion_checked = true;
                report.a_input = exp.a_input;
                report.a_output = exp.a_output;
                for (side, ratio) in [("input", exp.a_input), ("output", exp.a_output)] {
                    if ratio.is_none() {
                        notices.push(format!(
                            "no nonempty {side} subset fits within c = {c}; {side} ratio is vacuous"
                        ));
                    }
                }
                if c < bounds.c_bound {
                    let ok = exp.expands();
                    report.expansion_pass = Some(ok);
                    if !ok {
                        failures.push(format!("expansion ratio not above 1 at c = {c}"));
                    }
                } else {
                    notices.push(format!(
                        "c = {c} is outside the guaranteed range (0, {}); ratios reported only",
                        bounds.c_bound
                    ));
                }
            }
            Err(Error::Capacity(msg)) => {
                notices.push(format!("expansion skipped: {msg}; degree checks only"));
            }
            Err(e) => return Err(e),
        },
    }
    report.failures = failures;
    report.notices = notices;
    Ok(report)
}
