//! `eggs`: prune, verify and evaluate N:M masks for one linear layer.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
//! 0 on success, 1 when the pipeline or a verification fails, 2 on bad usage.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eggs_core::graph::Rational;
use eggs_core::pipeline::Method;

#[derive(Debug, Parser)]
#[command(
    name = "eggs",
    version,
    about = "Connectivity-aware N:M pruning for linear layers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prune one layer and write the mask, pruned weights and permutation.
    Prune(PruneArgs),
    /// Check N:M validity, degree laws and expansion of a stored mask.
    Verify(VerifyArgs),
    /// Compare pruning methods on one layer.
    Eval(EvalArgs),
    /// Run the connectivity-aware pruner over a range of block counts.
    Sweep(SweepArgs),
    /// Write a synthetic layer with calibration data.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct Pattern {
    /// Zeros per window.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Window width.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Connectivity blocks per pruning group.
    #[arg(long, default_value_t = 1)]
    b: usize,
    /// Exponent on activation norms.
    #[arg(long, default_value_t = eggs_core::metrics::DEFAULT_ALPHA, allow_negative_numbers = true)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct LayerInput {
    /// Input tensor bundle.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Name of the weight tensor.
    #[arg(long, value_name = "NAME", default_value = "weight")]
    weights: String,
    /// Name of the activation tensor: a norm vector or an F_in x S batch.
    #[arg(long, value_name = "NAME", default_value = "act_norms")]
    acts: String,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    pattern: Pattern,
    #[command(flatten)]
    layer: LayerInput,
    /// Output bundle; the permutation goes to `<PATH>.perm.json`.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    pattern: Pattern,
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Name of the u8 mask tensor.
    #[arg(long, value_name = "NAME", default_value = "mask")]
    mask: String,
    /// Subset fraction for the expansion check.
    #[arg(long, value_name = "NUM/DEN", value_parser = parse_ratio)]
    c: Option<Rational>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    pattern: Pattern,
    #[command(flatten)]
    layer: LayerInput,
    /// Comma-separated methods, reported in this order.
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "magnitude,wanda,ria,eggs")]
    methods: Vec<Method>,
    /// Emit CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    pattern: Pattern,
    #[command(flatten)]
    layer: LayerInput,
    /// Inclusive range of block counts.
    #[arg(long, value_name = "A..B", value_parser = parse_range)]
    b_range: (usize, usize),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Layer shape as F_out x F_in.
    #[arg(long, value_name = "RxC", value_parser = parse_dims, default_value = "64x64")]
    dims: (usize, usize),
    /// gaussian, dead-columns or heavy-tail.
    #[arg(long, default_value = "gaussian")]
    profile: String,
    /// Dead channel count for the dead-columns profile.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Calibration samples.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: eggs_core::Error| e.to_string())
}

fn parse_ratio(s: &str) -> Result<Rational, String> {
    let (num, den) = s.split_once('/').ok_or("expected NUM/DEN")?;
    let num: u64 = num.trim().parse().map_err(|e| format!("numerator: {e}"))?;
    let den: u64 = den
        .trim()
        .parse()
        .map_err(|e| format!("denominator: {e}"))?;
    if den == 0 {
        return Err("denominator must be positive".into());
    }
    Ok(Rational::new(num, den))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: usize = a.trim().parse().map_err(|e| format!("range start: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("range end: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected RxC")?;
    let r: usize = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let c: usize = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    if r == 0 || c == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((r, c))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prune(a) => commands::prune(a),
        Command::Verify(a) => commands::verify(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gen(a) => commands::gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_ratio("3/16"), Ok(Rational::new(3, 16)));
        assert!(parse_ratio("1/0").is_err());
        assert_eq!(parse_range("1..8"), Ok((1, 8)));
        assert!(parse_range("4..1").is_err());
        assert_eq!(parse_dims("16x32"), Ok((16, 32)));
        assert!(parse_dims("0x4").is_err());
    }
}
