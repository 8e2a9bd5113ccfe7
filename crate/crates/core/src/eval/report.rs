use std::fmt::Write as _;

use crate::training::LossReport;

/// Scores of one evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `(horizon, loss)` pairs.
    pub horizons: Vec<(usize, LossReport)>,
    pub runtime_seconds: f64,
    pub seed: u64,
    /// Key/value pairs sufficient to rerun.
    pub config_echo: Vec<(String, String)>,
}

impl MetricsReport {
    /// `metric=value` lines. Runtime is left out so reruns compare equal.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        writeln!(out, "seed={}", self.seed).expect("string write");
        for (h, r) in &self.horizons {
            writeln!(out, "mse_h{h}={:.10e}", r.mse).expect("string write");
            writeln!(out, "mae_h{h}={:.10e}", r.mae).expect("string write");
            writeln!(out, "count_h{h}={}", r.count).expect("string write");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>8}  {:>14}  {:>14}  {:>10}\n", "horizon", "mse", "mae", "count");
        for (h, r) in &self.horizons {
            writeln!(out, "{h:>8}  {:>14.6}  {:>14.6}  {:>10}", r.mse, r.mae, r.count).expect("string write");
        }
        writeln!(out, "runtime {:.2}s, seed {}", self.runtime_seconds, self.seed).expect("string write");
        out
    }

    pub fn all_finite(&self) -> bool {
        self.runtime_seconds.is_finite() && self.horizons.iter().all(|(_, r)| r.mse.is_finite() && r.mae.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_stable() {
        let r = MetricsReport {
            horizons: vec![(96, LossReport { mse: 0.5, mae: 0.25, count: 10 })],
            runtime_seconds: 1.5,
            seed: 3,
            config_echo: vec![],
        };
        let lines = r.to_lines();
        assert!(lines.contains("mse_h96=5.0000000000e-1"));
        assert!(!lines.contains("runtime"));
        let other = MetricsReport { runtime_seconds: 9.0, ..r.clone() };
        assert_eq!(lines, other.to_lines());
        assert!(r.to_table().contains("96"));
        assert!(r.all_finite());
    }
}
