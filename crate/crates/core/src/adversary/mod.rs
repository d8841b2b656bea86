//! Adversarial pseudomethods at nonhyperbolic and weakly hyperbolic
//! periodic points, with verifiers for their quantitative estimates.

pub mod lemma2;
pub mod lemma3;
pub mod lemma4;

use std::fmt::Write as _;

use crate::record::fmt_f64;

pub use lemma2::{
    build_lemma2_adversary, build_lemma2_model, verify_lemma2_divergence, Lemma2Adversary, Lemma2Model, RotationDriftSpec,
};
pub use lemma3::{build_lemma3_adversary, lemma3_model, verify_lemma3_divergence, JordanDriftSpec, Lemma3Adversary};
pub use lemma4::{
    build_lemma4_adversary, build_lemma4_sequence, default_unstable_vector, tau_closed_form, verify_lemma4_rigidity,
    Lemma4Adversary, Lemma4Sequence,
};

/// One named verification outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A row of a trajectory report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub trial: usize,
    pub k: i64,
    /// Norm of the tracked projection of `q_k`.
    pub pr_norm: f64,
    pub lower_bound: f64,
    /// Whether `q_k` lies in the region where the glued map equals `ψ_k`.
    pub in_region: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdversaryReport {
    pub title: String,
    pub spec: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
}

impl AdversaryReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn echo(&mut self, key: &str, value: impl ToString) {
        self.spec.push((key.to_string(), value.to_string()));
    }

    pub fn echo_f64(&mut self, key: &str, value: f64) {
        self.echo(key, fmt_f64(value));
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// CSV with columns `trial,k,pr_norm,lower_bound,in_region`.
    pub fn csv(&self) -> String {
        let mut s = String::from("trial,k,pr_norm,lower_bound,in_region\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.trial,
                r.k,
                fmt_f64(r.pr_norm),
                fmt_f64(r.lower_bound),
                u8::from(r.in_region)
            );
        }
        s
    }

    /// Structured text: spec echo, then one line per check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.title);
        for (k, v) in &self.spec {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "[checks]");
        for c in &self.checks {
            let _ = writeln!(s, "{} = {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
        }
        let _ = writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" });
        s
    }

    /// Appends another report's rows and checks.
    pub fn merge(&mut self, other: AdversaryReport) {
        self.rows.extend(other.rows);
        self.checks.extend(other.checks);
    }
}
