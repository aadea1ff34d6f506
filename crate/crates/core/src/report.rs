//! Verification reports: one record per check, a deterministic CSV/text
//! emission, and a separate non-deterministic timing sidecar.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::output::{create_file, fmt_g17};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skip => "skip",
        }
    }
}

/// Whether a check is a hypothesis test (subject to the alpha-level re-run
/// policy) or a deterministic numerical assertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Statistical,
    Deterministic,
}

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    /// The mathematical statement being checked, making reports self-documenting.
    pub claim: &'static str,
    pub kind: CheckKind,
    pub statistic: f64,
    pub threshold: String,
    pub status: CheckStatus,
    pub detail: String,
    /// Wall-clock seconds; reported only in the timing sidecar.
    pub runtime_s: f64,
}

impl CheckResult {
    pub fn skipped(name: &'static str, claim: &'static str, kind: CheckKind) -> Self {
        Self {
            name,
            claim,
            kind,
            statistic: f64::NAN,
            threshold: String::new(),
            status: CheckStatus::Skip,
            detail: "disabled by configuration".into(),
            runtime_s: 0.0,
        }
    }
}

/// Full outcome of a verification run.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub checks: Vec<CheckResult>,
    pub master_seed: u64,
    pub alpha: f64,
    pub rerun_performed: bool,
}

impl TestReport {
    /// Suite verdict: all deterministic checks pass and at most one
    /// statistical check fails (after the optional fresh-seed re-run).
    pub fn passed(&self) -> bool {
        let deterministic_ok = self
            .checks
            .iter()
            .filter(|c| c.kind == CheckKind::Deterministic)
            .all(|c| c.status != CheckStatus::Fail);
        deterministic_ok && self.statistical_failures() <= 1
    }

    pub fn statistical_failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.kind == CheckKind::Statistical && c.status == CheckStatus::Fail)
            .count()
    }

    fn quote(text: &str) -> String {
        format!("\"{}\"", text.replace('"', "'"))
    }

    /// Deterministic machine-readable report (no wall-clock content).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "check,claim,kind,statistic,threshold,status,detail")?;
        for c in &self.checks {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.name,
                Self::quote(c.claim),
                match c.kind {
                    CheckKind::Statistical => "statistical",
                    CheckKind::Deterministic => "deterministic",
                },
                fmt_g17(c.statistic),
                Self::quote(&c.threshold),
                c.status.as_str(),
                Self::quote(&c.detail),
            )?;
        }
        Ok(())
    }

    /// Deterministic human-readable report.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "verification report (seed {})", self.master_seed)?;
        writeln!(out, "alpha = {}, re-run performed = {}", self.alpha, self.rerun_performed)?;
        writeln!(out)?;
        for c in &self.checks {
            writeln!(
                out,
                "[{}] {:<22} statistic = {:<24} threshold = {}",
                c.status.as_str(),
                c.name,
                fmt_g17(c.statistic),
                c.threshold
            )?;
            writeln!(out, "       claim: {}", c.claim)?;
            if !c.detail.is_empty() {
                writeln!(out, "       {}", c.detail)?;
            }
        }
        writeln!(out)?;
        writeln!(
            out,
            "suite: {} ({} statistical failure(s))",
            if self.passed() { "PASS" } else { "FAIL" },
            self.statistical_failures()
        )?;
        Ok(())
    }

    /// Write `report.csv`, `report.txt` and the `timings.csv` sidecar.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let mut csv = create_file(dir, "report.csv")?;
        self.write_csv(&mut csv)?;
        csv.flush()?;
        let mut text = create_file(dir, "report.txt")?;
        self.write_text(&mut text)?;
        text.flush()?;
        // Wall-clock sidecar, excluded from determinism guarantees.
        let mut timings = create_file(dir, "timings.csv")?;
        writeln!(timings, "check,seconds")?;
        for c in &self.checks {
            writeln!(timings, "{},{:.3}", c.name, c.runtime_s)?;
        }
        timings.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(name: &'static str, kind: CheckKind, status: CheckStatus) -> CheckResult {
        CheckResult {
            name,
            claim: "claim",
            kind,
            statistic: 0.5,
            threshold: "x < 1".into(),
            status,
            detail: "detail, with comma".into(),
            runtime_s: 1.0,
        }
    }

    #[test]
    fn verdict_allows_one_statistical_failure() {
        let report = TestReport {
            checks: vec![
                result("a", CheckKind::Statistical, CheckStatus::Fail),
                result("b", CheckKind::Statistical, CheckStatus::Pass),
                result("c", CheckKind::Deterministic, CheckStatus::Pass),
            ],
            master_seed: 1,
            alpha: 0.01,
            rerun_performed: false,
        };
        assert!(report.passed());

        let report2 = TestReport {
            checks: vec![
                result("a", CheckKind::Statistical, CheckStatus::Fail),
                result("b", CheckKind::Statistical, CheckStatus::Fail),
            ],
            ..report.clone()
        };
        assert!(!report2.passed());

        let report3 = TestReport {
            checks: vec![result("c", CheckKind::Deterministic, CheckStatus::Fail)],
            ..report.clone()
        };
        assert!(!report3.passed());
    }

    #[test]
    fn csv_and_text_are_deterministic_and_quote_commas() {
        let report = TestReport {
            checks: vec![result("a", CheckKind::Statistical, CheckStatus::Pass)],
            master_seed: 9,
            alpha: 0.01,
            rerun_performed: true,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        report.write_csv(&mut a).unwrap();
        report.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("\"detail, with comma\""));
        assert_eq!(text.lines().count(), 2);

        let mut t = Vec::new();
        report.write_text(&mut t).unwrap();
        assert!(String::from_utf8(t).unwrap().contains("suite: PASS"));
    }
}
