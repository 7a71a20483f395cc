use serde::Serialize;

/// Outcome of a property check. Failures are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    /// Headline number of the check (minimum, ratio, constant, …).
    pub statistic: f64,
    /// Named auxiliary values.
    pub details: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        CheckReport { name: name.into(), passed: true, samples: 0, violations: 0, statistic: f64::NAN, details: Vec::new() }
    }

    pub fn detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.push((key.into(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}
