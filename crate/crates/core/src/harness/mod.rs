//! Built-in benchmark cases, the benchmark runner, direct-versus-BBP
//! comparison, and report emission.

mod cases;
mod report;
mod synthetic;

pub use cases::{builtin_case, builtin_cases, TargetCase, DENOMINATOR_GUARD};
pub use report::{
    compare_direct, emit_report, parse_case_list, run_benchmark, run_case, BenchOptions, BenchReport,
    CaseReport, DirectComparison, DirectOptions, ReportFormat, DEFAULT_DIRECT_CAP,
};
pub use synthetic::{synthetic_target, SyntheticTarget};
