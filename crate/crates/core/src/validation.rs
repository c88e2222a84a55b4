use serde::{Deserialize, Serialize};

/// A single named check with the measured quantity and the threshold it was
/// compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn push(&mut self, name: &str, passed: bool, measured: f64, tolerance: f64) -> &mut Check {
        self.checks.push(Check {
            name: name.to_owned(),
            passed,
            measured,
            tolerance,
            note: None,
        });
        self.checks.last_mut().expect("just pushed")
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
