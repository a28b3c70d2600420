use serde::Serialize;

/// One verified property: the measured residual against its tolerance.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes iff `residual < tol`.
    pub fn below(name: &str, anchor: &str, residual: f64, tol: f64) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            residual,
            tol,
            pass: residual.is_finite() && residual < tol,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, anchor: &str, pass: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            residual: if pass { 0.0 } else { 1.0 },
            tol: 0.5,
            pass,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = detail.into();
        self
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// A group of checks verifying one property.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Section {
    pub name: String,
    pub anchor: String,
    pub checks: Vec<Check>,
}

impl Section {
    pub fn new(name: &str, anchor: &str, checks: Vec<Check>) -> Section {
        Section { name: name.to_string(), anchor: anchor.to_string(), checks }
    }

    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}
