//! Distribution tests, rate verifiers and run reports.

pub mod ks;
pub mod report;
pub mod verify;

pub use ks::{ks_statistic, ks_test, ks_threshold, KSResult};
pub use report::MetricsReport;
pub use verify::{
    loglog_slope, verify_theorem1, verify_theorem1_signal, verify_theorem2, verify_theorem3, VerifyReport,
};
