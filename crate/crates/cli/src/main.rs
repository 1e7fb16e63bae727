use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bbp_core::engines::{EngineConfig, EngineKind};
use bbp_core::harness::{
    emit_report, parse_case_list, run_benchmark, BenchOptions, DirectOptions, ReportFormat,
    DEFAULT_DIRECT_CAP,
};
use bbp_core::pipeline::run_bbp;
use bbp_core::sampling::{DomainBox, SamplingPlan};
use bbp_core::{detect_structure, parse, DetectionConfig, Error, ExprOracle};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

/// Seed used when neither the flags nor the config file give one.
const DEFAULT_SEED: u64 = 0x0BB9;

const EXIT_BELOW_TOLERANCE: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "bbp", version, about = "Block building programming for symbolic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full procedure on a target expression.
    Fit(FitArgs),
    /// Detect the block/factor structure only.
    Detect(DetectArgs),
    /// Run the built-in benchmark cases.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Target expression over x1..xN.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// `a,b` for every variable, or `a,b;c,d;...` per variable.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file supplying any of the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EngineArgs {
    /// library or gp
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    /// Wall-clock limit in seconds for each GP run.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    samples: Option<usize>,
    /// Write the full JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    target: TargetArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// e.g. `1-10` or `1,2,5`
    #[arg(long)]
    cases: Option<String>,
    #[command(flatten)]
    engine: EngineArgs,
    /// json, csv or table
    #[arg(long)]
    format: Option<String>,
    /// Also time GP on the whole target against GP-powered BBP.
    #[arg(long)]
    compare_direct: bool,
    /// Wall-clock cap in seconds for each direct run.
    #[arg(long)]
    direct_cap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    target: Option<String>,
    dim: Option<usize>,
    domain: Option<String>,
    seed: Option<u64>,
    engine: Option<String>,
    eps: Option<f64>,
    generations: Option<usize>,
    population: Option<usize>,
    time_limit: Option<f64>,
    samples: Option<usize>,
    out: Option<PathBuf>,
    cases: Option<String>,
    format: Option<String>,
    compare_direct: Option<bool>,
    direct_cap: Option<f64>,
}

enum Failure {
    Invalid(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidPlan(_)
            | Error::InvalidStructure(_)
            | Error::InvalidConfig(_)
            | Error::UnknownFormat(_)
            | Error::OracleFailure
            | Error::Json(_)
            | Error::Io(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("bad config {}: {e}", path.display())))
}

fn parse_domain(text: &str, dim: usize) -> Result<DomainBox<f64>, Failure> {
    let pair = |s: &str| -> Result<(f64, f64), Failure> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| invalid(format!("domain interval `{s}` is not `a,b`")))?;
        let a = a.trim().parse().map_err(|_| invalid(format!("bad bound `{a}`")))?;
        let b = b.trim().parse().map_err(|_| invalid(format!("bad bound `{b}`")))?;
        Ok((a, b))
    };
    let parts: Vec<&str> = text.split(';').map(str::trim).filter(|p| !p.is_empty()).collect();
    let bounds = match parts.len() {
        1 => vec![pair(parts[0])?; dim],
        n if n == dim => parts.into_iter().map(pair).collect::<Result<_, _>>()?,
        n => return Err(invalid(format!("{n} domain intervals for {dim} variables"))),
    };
    Ok(DomainBox::new(bounds)?)
}

fn engine_config(args: &EngineArgs, file: &FileConfig, seed: u64) -> Result<EngineConfig, Failure> {
    let kind: EngineKind = match args.engine.as_deref().or(file.engine.as_deref()) {
        Some(s) => s.parse()?,
        None => EngineKind::Library,
    };
    let config = EngineConfig {
        kind,
        eps_target: args.eps.or(file.eps),
        generations: args.generations.or(file.generations),
        population: args.population.or(file.population),
        time_limit: args.time_limit.or(file.time_limit),
        seed,
        ..EngineConfig::default()
    };
    config.validate()?;
    Ok(config)
}

struct Target {
    oracle: ExprOracle,
    domain: DomainBox<f64>,
    seed: u64,
}

fn target(args: &TargetArgs, file: &FileConfig) -> Result<Target, Failure> {
    let text = args
        .target
        .as_deref()
        .or(file.target.as_deref())
        .ok_or_else(|| invalid("--target is required"))?;
    let expr = parse(text).map_err(Error::from)?;
    let dim = args
        .dim
        .or(file.dim)
        .or_else(|| expr.variables().iter().max().map(|&v| v + 1))
        .ok_or_else(|| invalid("--dim is required for a target without variables"))?;
    let domain_text = args
        .domain
        .as_deref()
        .or(file.domain.as_deref())
        .ok_or_else(|| invalid("--domain is required"))?;
    let domain = parse_domain(domain_text, dim)?;
    Ok(Target {
        oracle: ExprOracle::new(expr, dim)?,
        domain,
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
    })
}

/// Prints a line, ignoring a closed stdout (e.g. piped into `head`).
fn say(args: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stdout(), "{args}");
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| invalid(format!("cannot write {}: {e}", p.display()))),
        None => {
            say(format_args!("{text}"));
            Ok(())
        }
    }
}

fn fit(args: &FitArgs) -> Result<u8, Failure> {
    let file = load_config(args.target.config.as_deref())?;
    let t = target(&args.target, &file)?;
    let engine = engine_config(&args.engine, &file, t.seed)?;
    let detection = DetectionConfig {
        seed: t.seed,
        ..DetectionConfig::default()
    };
    let plan = match args.samples.or(file.samples) {
        Some(n) => SamplingPlan::new(t.domain, n, t.seed)?,
        None => SamplingPlan::with_default_samples(t.domain, t.seed),
    };
    let result = run_bbp(&t.oracle, &detection, &engine, &plan)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::Internal(e.to_string()))?;
    let out = args.out.clone().or(file.out);
    write_out(out.as_deref(), &json)?;
    if out.is_some() {
        say(format_args!("structure: {}", result.detection.structure));
        say(format_args!("model: {}", result.expression));
        say(format_args!("validation mse: {:e}", result.validation_mse()));
    }
    if result.flags.below_tolerance {
        eprintln!(
            "validation mse {:e} is above the tolerance {:e}",
            result.validation_mse(),
            engine.eps()
        );
        return Ok(EXIT_BELOW_TOLERANCE);
    }
    Ok(0)
}

fn detect(args: &DetectArgs) -> Result<u8, Failure> {
    let file = load_config(args.target.config.as_deref())?;
    let t = target(&args.target, &file)?;
    let config = DetectionConfig {
        seed: t.seed,
        ..DetectionConfig::default()
    };
    let found = detect_structure(&t.oracle, &t.domain, &config)?;
    say(format_args!("{}", found.structure));
    let doc = found.structure.document(config.epsilon, config.seed);
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.to_string()))?;
    say(format_args!("{json}"));
    Ok(0)
}

fn bench(args: &BenchArgs) -> Result<u8, Failure> {
    let file = load_config(args.config.as_deref())?;
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let cases = match args.cases.as_deref().or(file.cases.as_deref()) {
        Some(s) => parse_case_list(s)?,
        None => (1..=10).collect(),
    };
    let format: ReportFormat = args
        .format
        .as_deref()
        .or(file.format.as_deref())
        .unwrap_or("table")
        .parse()?;
    let engine = engine_config(&args.engine, &file, seed)?;
    let direct = if args.compare_direct || file.compare_direct.unwrap_or(false) {
        let gp = EngineConfig {
            kind: EngineKind::Gp,
            eps_target: engine.eps_target,
            ..engine.clone()
        };
        Some(DirectOptions {
            gp,
            cap_seconds: args.direct_cap.or(file.direct_cap).unwrap_or(DEFAULT_DIRECT_CAP),
        })
    } else {
        None
    };
    let options = BenchOptions {
        cases,
        engine,
        detection: DetectionConfig::default(),
        seed,
        direct,
    };
    let report = run_benchmark(&options)?;
    let text = emit_report(&report, format)?;
    write_out(args.out.as_deref().or(file.out.as_deref()), text.trim_end())?;
    let all_ok = report
        .cases
        .iter()
        .all(|c| c.error.is_none() && c.meets_tolerance && c.structure_match);
    Ok(if all_ok { 0 } else { EXIT_BELOW_TOLERANCE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Detect(a) => detect(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID_INPUT)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
