use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cases::{builtin_case, TargetCase};
use crate::engines::{fit_gp, EngineConfig, EngineKind, FitMode};
use crate::error::{Error, Result};
use crate::pipeline::{run_bbp, BBPResult};
use crate::rng::derive_seed;
use crate::sampling::{draw_valid_sample, SamplingPlan};
use crate::separability::DetectionConfig;

/// Default wall-clock cap for one direct run.
pub const DEFAULT_DIRECT_CAP: f64 = 300.0;

/// Multiple of the per-factor generation budget given to the direct run.
const DIRECT_BUDGET_FACTOR: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectOptions {
    /// Engine for both the direct run and the BBP-wrapped run.
    pub gp: EngineConfig,
    pub cap_seconds: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            gp: EngineConfig::gp(),
            cap_seconds: DEFAULT_DIRECT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub cases: Vec<usize>,
    pub engine: EngineConfig,
    pub detection: DetectionConfig,
    pub seed: u64,
    /// Adds the direct-versus-BBP comparison to every case when set.
    pub direct: Option<DirectOptions>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            cases: (1..=10).collect(),
            engine: EngineConfig::library(),
            detection: DetectionConfig::default(),
            seed: 0x0BB9,
            direct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectComparison {
    pub case: usize,
    pub t_direct: f64,
    pub t_bbp: f64,
    pub eta: f64,
    /// The direct run stopped at its budget without reaching tolerance, so
    /// `t_direct` and `eta` are lower bounds.
    pub lower_bound: bool,
    pub direct_mse: f64,
    pub direct_expression: String,
    pub direct_timed_out: bool,
    pub bbp_mse: f64,
    pub bbp_expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: usize,
    pub dim: usize,
    pub domain: String,
    pub samples: usize,
    pub structure_match: bool,
    pub detected: String,
    pub expected: String,
    /// Validation MSE; absent when the run failed.
    pub mse: Option<f64>,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t: f64,
    /// `t1 / t`.
    pub ratio: f64,
    pub meets_tolerance: bool,
    pub gp_fallback: bool,
    pub expression: String,
    pub direct: Option<DirectComparison>,
    pub error: Option<String>,
    pub note: Option<String>,
}

impl CaseReport {
    pub fn eta(&self) -> Option<f64> {
        self.direct.as_ref().map(|d| d.eta)
    }

    pub fn failed(case: &TargetCase, err: &Error) -> Self {
        Self {
            case: case.id,
            dim: case.dim,
            domain: case.domain.describe(),
            samples: case.samples,
            structure_match: false,
            detected: String::new(),
            expected: case.structure.to_string(),
            mse: None,
            t1: 0.0,
            t2: 0.0,
            t3: 0.0,
            t: 0.0,
            ratio: 0.0,
            meets_tolerance: false,
            gp_fallback: false,
            expression: String::new(),
            direct: None,
            error: Some(err.to_string()),
            note: case.note.clone(),
        }
    }

    pub fn from_result(case: &TargetCase, r: &BBPResult) -> Self {
        Self {
            case: case.id,
            dim: case.dim,
            domain: case.domain.describe(),
            samples: case.samples,
            structure_match: r.detection.structure == case.structure,
            detected: r.detection.structure.to_string(),
            expected: case.structure.to_string(),
            mse: Some(r.validation_mse()),
            t1: r.timings.t1,
            t2: r.timings.t2,
            t3: r.timings.t3,
            t: r.timings.t,
            ratio: r.timings.detection_ratio(),
            meets_tolerance: !r.flags.below_tolerance,
            gp_fallback: r.flags.gp_fallback,
            expression: r.expression.clone(),
            direct: None,
            error: None,
            note: case.note.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub engine: EngineConfig,
    pub detection: DetectionConfig,
    pub cases: Vec<CaseReport>,
}

/// Per-case configs: every case gets its own seeds derived from the run seed.
fn case_configs(
    id: usize,
    seed: u64,
    engine: &EngineConfig,
    detection: &DetectionConfig,
) -> (u64, EngineConfig, DetectionConfig) {
    let case_seed = derive_seed(seed, &[id as u64]);
    let engine = engine.with_seed(derive_seed(case_seed, &[2]));
    let detection = DetectionConfig {
        seed: derive_seed(case_seed, &[1]),
        ..detection.clone()
    };
    (case_seed, engine, detection)
}

/// Runs BBP on one built-in case.
pub fn run_case(
    case: &TargetCase,
    engine: &EngineConfig,
    detection: &DetectionConfig,
    seed: u64,
) -> Result<BBPResult> {
    let (case_seed, engine, detection) = case_configs(case.id, seed, engine, detection);
    let plan = SamplingPlan::new(case.domain.clone(), case.samples, case_seed)?;
    run_bbp(&case.oracle(), &detection, &engine, &plan)
}

/// Runs the requested cases one after another so that the timings do not
/// compete for cores. Per-case failures end up in the report.
pub fn run_benchmark(options: &BenchOptions) -> Result<BenchReport> {
    options.engine.validate()?;
    options.detection.validate()?;
    let cases: Vec<TargetCase> = options
        .cases
        .iter()
        .map(|&id| builtin_case(id))
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(cases.len());
    for case in &cases {
        let mut report = match run_case(case, &options.engine, &options.detection, options.seed) {
            Ok(r) => CaseReport::from_result(case, &r),
            Err(e) => CaseReport::failed(case, &e),
        };
        if let Some(direct) = &options.direct {
            match compare_direct(case, direct, &options.detection, options.seed) {
                Ok(d) => report.direct = Some(d),
                Err(e) => {
                    let msg = format!("direct comparison: {e}");
                    report.error = Some(match report.error.take() {
                        Some(prev) => format!("{prev}; {msg}"),
                        None => msg,
                    });
                }
            }
        }
        reports.push(report);
    }
    Ok(BenchReport {
        seed: options.seed,
        engine: options.engine.clone(),
        detection: options.detection.clone(),
        cases: reports,
    })
}

/// Times GP on the whole target against GP-powered BBP on the same case.
///
/// The direct run gets `20x` the per-factor generation budget and stops at
/// `cap_seconds`. When it ends without reaching tolerance, `t_direct` is a
/// lower bound and so is `eta`.
pub fn compare_direct(
    case: &TargetCase,
    options: &DirectOptions,
    detection: &DetectionConfig,
    seed: u64,
) -> Result<DirectComparison> {
    if options.gp.kind != EngineKind::Gp {
        return Err(Error::InvalidConfig(
            "the direct comparison needs the GP engine".into(),
        ));
    }
    if !(options.cap_seconds > 0.0) {
        return Err(Error::InvalidConfig("cap_seconds must be positive".into()));
    }
    let (case_seed, gp, _) = case_configs(case.id, seed, &options.gp, detection);
    let oracle = case.oracle();

    let plan = SamplingPlan::new(case.domain.clone(), case.samples, case_seed)?;
    let (x, y) = draw_valid_sample(&oracle, &plan)?;
    let per_factor = gp.generations_for(1);
    let direct_config = EngineConfig {
        generations: Some(per_factor.saturating_mul(DIRECT_BUDGET_FACTOR)),
        time_limit: Some(match gp.time_limit {
            Some(t) => (t * DIRECT_BUDGET_FACTOR as f64).min(options.cap_seconds),
            None => options.cap_seconds,
        }),
        seed: derive_seed(case_seed, &[3]),
        ..gp.clone()
    };
    let start = Instant::now();
    let direct = fit_gp(&x, &y, FitMode::ScaledWithIntercept, &direct_config)?;
    let t_direct = start.elapsed().as_secs_f64();
    let (timed_out, _) = match &direct.model.metadata {
        crate::engines::EngineMetadata::Gp { timed_out, generations, .. } => (*timed_out, *generations),
        _ => (false, 0),
    };

    let bbp = run_case(case, &options.gp, detection, seed)?;
    let t_bbp = bbp.timings.t;
    let lower_bound = !(direct.model.mse <= gp.eps());
    Ok(DirectComparison {
        case: case.id,
        t_direct,
        t_bbp,
        eta: if t_bbp > 0.0 { t_direct / t_bbp } else { f64::INFINITY },
        lower_bound,
        direct_mse: direct.model.mse,
        direct_expression: direct.model.expression.to_string(),
        direct_timed_out: timed_out,
        bbp_mse: bbp.validation_mse(),
        bbp_expression: bbp.expression,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" | "text" | "text-table" => Ok(Self::Table),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn eta_text(c: &CaseReport) -> String {
    match &c.direct {
        Some(d) if d.lower_bound => format!(">{:.2}", d.eta),
        Some(d) => format!("{:.2}", d.eta),
        None => String::new(),
    }
}

pub fn emit_report(report: &BenchReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "case", "dim", "domain", "samples", "structure_match", "mse", "t1", "t2", "t3",
                "t", "ratio", "eta",
            ])?;
            for c in &report.cases {
                w.write_record([
                    c.case.to_string(),
                    c.dim.to_string(),
                    c.domain.clone(),
                    c.samples.to_string(),
                    c.structure_match.to_string(),
                    opt(c.mse),
                    c.t1.to_string(),
                    c.t2.to_string(),
                    c.t3.to_string(),
                    c.t.to_string(),
                    c.ratio.to_string(),
                    eta_text(c),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:>4} {:>3} {:<12} {:>7} {:>9} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "Case", "Dim", "Domain", "Samples", "Structure", "MSE", "T_d(s)", "T_m(s)",
                "T_a(s)", "T_BBP(s)", "T_d/T_BBP", "eta"
            );
            for c in &report.cases {
                let mse = c.mse.map(|v| format!("{v:.2e}")).unwrap_or_else(|| "failed".into());
                let _ = writeln!(
                    out,
                    "{:>4} {:>3} {:<12} {:>7} {:>9} {:>10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.2}% {:>9}",
                    c.case,
                    c.dim,
                    c.domain,
                    c.samples,
                    if c.structure_match { "match" } else { "MISMATCH" },
                    mse,
                    c.t1,
                    c.t2,
                    c.t3,
                    c.t,
                    100.0 * c.ratio,
                    eta_text(c),
                );
            }
            for c in &report.cases {
                if let Some(e) = &c.error {
                    let _ = writeln!(out, "case {}: {e}", c.case);
                }
                if let Some(n) = &c.note {
                    let _ = writeln!(out, "case {}: {n}", c.case);
                }
            }
            Ok(out)
        }
    }
}

/// Parses `1-10`, `1,2,5` or a mix such as `1-3,7`.
pub fn parse_case_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("invalid case list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    for &id in &out {
        builtin_case(id)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> BenchReport {
        let case = builtin_case(1).unwrap();
        BenchReport {
            seed: 7,
            engine: EngineConfig::library(),
            detection: DetectionConfig::default(),
            cases: vec![CaseReport {
                mse: Some(1.5e-20),
                t1: 0.01,
                t2: 0.2,
                t3: 0.02,
                t: 0.23,
                ratio: 0.01 / 0.23,
                structure_match: true,
                ..CaseReport::failed(&case, &Error::OracleFailure)
            }],
        }
    }

    #[test]
    fn case_lists() {
        assert_eq!(parse_case_list("1-10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_case_list("1,2,5").unwrap(), vec![1, 2, 5]);
        assert_eq!(parse_case_list("1-3, 7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_case_list("0").is_err());
        assert!(parse_case_list("3-1").is_err());
        assert!(parse_case_list("a").is_err());
        assert!(parse_case_list("").unwrap().is_empty());
    }

    #[test]
    fn formats() {
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert_eq!("table".parse::<ReportFormat>().unwrap(), ReportFormat::Table);
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn csv_schema_and_json_round_trip() {
        let r = sample_report();
        let csv = emit_report(&r, ReportFormat::Csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "case,dim,domain,samples,structure_match,mse,t1,t2,t3,t,ratio,eta"
        );
        assert_eq!(lines.count(), 1);
        let json = emit_report(&r, ReportFormat::Json).unwrap();
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let table = emit_report(&r, ReportFormat::Table).unwrap();
        assert!(table.contains("T_d/T_BBP"));
    }

    #[test]
    fn empty_case_list_gives_empty_report() {
        let opts = BenchOptions {
            cases: vec![],
            ..BenchOptions::default()
        };
        assert!(run_benchmark(&opts).unwrap().cases.is_empty());
    }

    #[test]
    fn direct_needs_gp() {
        let case = builtin_case(2).unwrap();
        let opts = DirectOptions {
            gp: EngineConfig::library(),
            cap_seconds: 1.0,
        };
        assert!(compare_direct(&case, &opts, &DetectionConfig::default(), 1).is_err());
    }
}
