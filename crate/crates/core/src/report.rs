//! Structured outcome of a numeric or exact check.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub subject: String,
    /// Named computed quantities, ordered by name.
    pub values: BTreeMap<String, f64>,
    pub error_estimate: f64,
    pub tolerance: f64,
    /// Smallest signed slack over everything tested; negative means violated.
    pub worst_margin: Option<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(check: &str, subject: impl Into<String>) -> Self {
        VerificationReport {
            check: check.to_string(),
            subject: subject.into(),
            values: BTreeMap::new(),
            error_estimate: 0.0,
            tolerance: 0.0,
            worst_margin: None,
            passed: false,
            notes: Vec::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Panics if the value was never recorded.
    pub fn value(&self, name: &str) -> f64 {
        match self.values.get(name) {
            Some(v) => *v,
            None => panic!("report '{}' has no value '{name}'", self.check),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}",
            self.check,
            self.subject,
            if self.passed { "pass" } else { "FAIL" }
        )?;
        for (k, v) in &self.values {
            write!(f, " {k}={v:.12e}")?;
        }
        if let Some(m) = self.worst_margin {
            write!(f, " worst_margin={m:.3e}")?;
        }
        write!(
            f,
            " err={:.3e} tol={:.3e}",
            self.error_estimate, self.tolerance
        )
    }
}
