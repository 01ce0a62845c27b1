//! Subcommand bodies.

use std::fmt;
use std::path::{Path, PathBuf};

use eggs_core::eval::{self, Activations, CalibrationBatch, Profile};
use eggs_core::graph;
use eggs_core::pipeline::{self, Method};
use eggs_core::tensor_store::{self, Tensor, TensorBundle};
use eggs_core::{ActivationNorms, Error, PruneConfig, PruneMask, WeightMatrix};
use serde::Serialize;

use crate::{EvalArgs, GenArgs, LayerInput, Pattern, PruneArgs, SweepArgs, VerifyArgs};

/// A failed command with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Failed(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Failed(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Failed(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Failed(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn config(p: &Pattern) -> Result<PruneConfig, Failure> {
    Ok(PruneConfig::new(p.n, p.m, p.b, p.alpha)?)
}

fn emit<T: Serialize + ?Sized>(value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Failed(format!("cannot serialize output: {e}")))?;
    println!("{text}");
    Ok(())
}

struct Layer {
    weights: WeightMatrix,
    acts: Option<Activations>,
}

fn load_layer(input: &LayerInput, alpha: f64) -> Result<Layer, Failure> {
    let bundle = tensor_store::load_bundle(&input.input)?;
    let weights = WeightMatrix::from_dense(bundle.require(&input.weights)?.to_matrix()?)?;
    let acts = match bundle.get(&input.acts) {
        None => None,
        Some(t) if t.shape().len() == 1 => {
            let data = t
                .as_f32()
                .ok_or_else(|| Failure::Failed(format!("tensor {:?} must be f32", input.acts)))?;
            Some(Activations::Norms(ActivationNorms::from_f32(data, alpha)?))
        }
        Some(t) => Some(Activations::Batch(CalibrationBatch::new(t.to_matrix()?)?)),
    };
    if let Some(a) = &acts {
        let channels = match a {
            Activations::Norms(n) => n.len(),
            Activations::Batch(b) => b.channels(),
        };
        if channels != weights.cols() {
            return Err(Failure::Failed(format!(
                "activation tensor {:?} covers {channels} channels, weights have {}",
                input.acts,
                weights.cols()
            )));
        }
    }
    log::info!(
        "loaded {}x{} layer from {}",
        weights.rows(),
        weights.cols(),
        input.input.display()
    );
    Ok(Layer { weights, acts })
}

fn require_acts<'a>(layer: &'a Layer, input: &LayerInput) -> Result<&'a Activations, Failure> {
    layer.acts.as_ref().ok_or_else(|| {
        Failure::Failed(format!(
            "bundle {} has no activation tensor {:?}",
            input.input.display(),
            input.acts
        ))
    })
}

/// Sidecar path for the permutation written next to a pruned bundle.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".perm.json");
    PathBuf::from(name)
}

#[derive(Serialize)]
struct PruneSummary<'a> {
    method: Method,
    rows: usize,
    cols: usize,
    n: usize,
    m: usize,
    b: usize,
    kept: usize,
    corrupted_channels: usize,
    permuted: bool,
    output: &'a Path,
    permutation: &'a Path,
}

pub fn prune(args: PruneArgs) -> CmdResult {
    let cfg = config(&args.pattern)?;
    if args.method == Method::Eggs {
        cfg.require_even_m()?;
    }
    let layer = load_layer(&args.layer, cfg.alpha)?;
    let norms = if args.method.needs_activations() {
        Some(require_acts(&layer, &args.layer)?.norms(cfg.alpha)?)
    } else {
        None
    };
    let out = pipeline::prune(args.method, &layer.weights, norms.as_ref(), &cfg)?;

    let mut bundle = TensorBundle::new();
    bundle.insert("weight", Tensor::from_matrix(out.weights.as_dense()))?;
    bundle.insert("mask", out.mask.to_tensor())?;
    bundle.insert("pruned", Tensor::from_matrix(out.pruned()?.as_dense()))?;
    bundle.insert("mask_original", out.original_mask.to_tensor())?;
    let sidecar = sidecar_path(&args.out);
    tensor_store::save_bundle(&bundle, &args.out)?;
    out.permutation.save(&sidecar)?;

    emit(&PruneSummary {
        method: args.method,
        rows: out.mask.rows(),
        cols: out.mask.cols(),
        n: cfg.n,
        m: cfg.m,
        b: cfg.b,
        kept: out.mask.count_ones(),
        corrupted_channels: out.mask.col_degrees().iter().filter(|&&d| d == 0).count(),
        permuted: !out.permutation.is_identity(),
        output: &args.out,
        permutation: &sidecar,
    })
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let cfg = config(&args.pattern)?;
    if let Some(c) = args.c {
        if *c.numer() == 0 || c >= graph::Rational::from_integer(1) {
            return Err(Failure::Usage(format!("--c must lie in (0, 1), got {c}")));
        }
    }
    let bundle = tensor_store::load_bundle(&args.input)?;
    let mask = PruneMask::from_tensor(bundle.require(&args.mask)?)?;
    let report = graph::verify_mask(&mask, &cfg, args.c)?;
    for notice in &report.notices {
        eprintln!("note: {notice}");
    }
    emit(&report)?;
    match report.failures.first() {
        None => Ok(()),
        Some(first) => Err(Failure::Failed(first.clone())),
    }
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let cfg = config(&args.pattern)?;
    if args.methods.contains(&Method::Eggs) {
        cfg.require_even_m()?;
    }
    let layer = load_layer(&args.layer, cfg.alpha)?;
    if args.methods.iter().any(|m| m.needs_activations()) {
        require_acts(&layer, &args.layer)?;
    }
    let reports = eval::compare_methods(&layer.weights, layer.acts.as_ref(), &cfg, &args.methods)?;
    if args.csv {
        print!("{}", eval::reports_to_csv(&reports));
        Ok(())
    } else {
        emit(&reports)
    }
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let cfg = config(&args.pattern)?;
    cfg.require_even_m()?;
    let layer = load_layer(&args.layer, cfg.alpha)?;
    let acts = require_acts(&layer, &args.layer)?;
    let (lo, hi) = args.b_range;
    let rows = eval::sweep(&layer.weights, acts, &cfg, lo..=hi)?;
    emit(&rows)
}

#[derive(Serialize)]
struct GenSummary<'a> {
    rows: usize,
    cols: usize,
    samples: usize,
    seed: u64,
    profile: &'a str,
    dead_columns: &'a [usize],
    output: &'a Path,
}

pub fn gen(args: GenArgs) -> CmdResult {
    let profile = Profile::parse(&args.profile, args.k)?;
    let (rows, cols) = args.dims;
    let layer = eval::gen_synthetic(args.seed, rows, cols, args.samples, profile)?;
    let norms = layer.calibration.norms(eggs_core::metrics::DEFAULT_ALPHA)?;
    let norms: Vec<f32> = norms.norms().iter().map(|&v| v as f32).collect();

    let mut bundle = TensorBundle::new();
    bundle.insert("weight", Tensor::from_matrix(layer.weights.as_dense()))?;
    bundle.insert("calib", Tensor::from_matrix(layer.calibration.samples()))?;
    bundle.insert("act_norms", Tensor::f32(vec![cols], norms)?)?;
    tensor_store::save_bundle(&bundle, &args.out)?;

    emit(&GenSummary {
        rows,
        cols,
        samples: args.samples,
        seed: args.seed,
        profile: &args.profile,
        dead_columns: &layer.dead_columns,
        output: &args.out,
    })
}
