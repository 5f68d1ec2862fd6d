//! Shared fixtures for the acceptance suite in `tests/acceptance.rs`.

use std::path::{Path, PathBuf};

/// Config fixtures shipped with the solver crate.
pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

/// Result of one criterion.
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self, index: usize, name: &str) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("criterion {index} ({name}): {verdict} | {}", self.detail)
    }
}
