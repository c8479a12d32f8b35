//! Optional TOML run configuration. Command-line flags take precedence.
//!
//! ```toml
//! seed = 7
//! frac_bits = 20
//! alice_data = "alice.rekd"
//! bob_data = "bob.rekd"
//! server_addr = "127.0.0.1:7400"
//! bob_addr = "127.0.0.1:7401"
//! holdout = 0.2
//! report_csv = "report.csv"
//! model_out = "model.rekm"
//!
//! [svr]
//! kernel = "rbf"   # rbf | linear | poly
//! gamma = 0.5
//! c = 2.0
//! epsilon = 0.005
//! cv = false
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub frac_bits: Option<u32>,
    pub alice_data: Option<PathBuf>,
    pub bob_data: Option<PathBuf>,
    pub server_addr: Option<String>,
    pub bob_addr: Option<String>,
    pub holdout: Option<f64>,
    pub report_csv: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub svr: SvrSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrSection {
    pub kernel: Option<String>,
    pub gamma: Option<f64>,
    pub degree: Option<u32>,
    pub offset: Option<f64>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub cv: Option<bool>,
}

impl RunConfig {
    /// Parses a config file. Errors carry the offending line and column.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}
