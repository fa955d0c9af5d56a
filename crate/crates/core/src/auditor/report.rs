use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Holds because the conditioning fixes the protected variable.
    PassDegenerate,
    Fail,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        !matches!(self, Verdict::Fail)
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::PassDegenerate => "PASS-degenerate",
            Verdict::Fail => "FAIL",
        }
    }
}

/// A concrete cell where an exact count identity breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub condition: Vec<u64>,
    pub target: Vec<u64>,
    pub observed: Vec<u64>,
    pub lhs: u128,
    pub rhs: u128,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub name: String,
    /// The constraint being checked, as a formula.
    pub anchor: String,
    pub verdict: Verdict,
    pub cells_examined: u64,
    pub comparisons: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub scheme: String,
    pub modulus: u64,
    pub users: usize,
    pub len: usize,
    pub states: u64,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict.is_pass())
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| !e.verdict.is_pass())
    }

    pub fn entry(&self, name: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Line-oriented human-readable form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "audit scheme={} q={} K={} L={} states={}",
            self.scheme, self.modulus, self.users, self.len, self.states
        );
        for e in &self.entries {
            let _ = write!(
                out,
                "{:<16} {:<32} {}  cells={} comparisons={}",
                e.verdict.label(),
                e.name,
                e.anchor,
                e.cells_examined,
                e.comparisons
            );
            if let Some(d) = &e.detail {
                let _ = write!(out, "  ({d})");
            }
            out.push('\n');
            if let Some(c) = &e.counterexample {
                let _ = writeln!(
                    out,
                    "    counterexample: cell={:?} target={:?} observed={:?} lhs={} rhs={} [{}]",
                    c.condition, c.target, c.observed, c.lhs, c.rhs, c.note
                );
            }
        }
        let _ = writeln!(
            out,
            "result: {}",
            if self.all_pass() {
                "all constraints hold"
            } else {
                "constraint violated"
            }
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
