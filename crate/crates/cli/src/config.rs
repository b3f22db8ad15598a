//! Optional TOML config file. Flags given on the command line win over file values.
//!
//! ```toml
//! [problem]
//! generator = "diagonal"   # or: file = "measure.txt"
//! M = 100000
//! nu = 1.5
//! zeta = 1.0
//!
//! [schedule]
//! kind = "jacobi-hb"
//! a = 1.0
//! b = 0.0
//!
//! [run]
//! steps = "auto"           # or an integer
//! probes = [0.01, 0.1]
//! record = "geometric:400"
//!
//! [analysis]
//! r0 = 0.5
//! tolerance = 0.1
//!
//! [sweep]
//! jobs = 2
//! grid = { a = [0.25, 0.75, 2.0], b = [0.0] }
//! ```

use crate::error::{CliError, CliResult};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub file: Option<String>,
    pub generator: Option<String>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub nu: Option<f64>,
    pub zeta: Option<f64>,
    pub data: Option<String>,
    pub data_format: Option<String>,
    pub normalize: Option<bool>,
    pub mixture: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub depth: Option<u32>,
    pub orthogonality: Option<String>,
    pub allow_unstable: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StepsValue {
    Count(u64),
    Word(String),
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: Option<StepsValue>,
    pub probes: Option<Vec<f64>>,
    pub record: Option<String>,
    pub representation: Option<String>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub r0: Option<f64>,
    pub window: Option<[usize; 2]>,
    pub tolerance: Option<f64>,
    pub lambda_low: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub jobs: Option<usize>,
    pub grid: Option<BTreeMap<String, Vec<f64>>>,
    pub out_dir: Option<String>,
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: FileConfig = toml::from_str(
            "[problem]\ngenerator = \"diagonal\"\nM = 1e5\n[run]\nsteps = \"auto\"\n[sweep]\ngrid = { a = [0.25, 2.0] }\n",
        )
        .unwrap();
        assert_eq!(c.problem.m, Some(1e5));
        assert!(matches!(c.run.steps, Some(StepsValue::Word(ref w)) if w == "auto"));
        assert_eq!(c.sweep.grid.unwrap()["a"], vec![0.25, 2.0]);
        assert!(toml::from_str::<FileConfig>("[problem]\nbogus = 1\n").is_err());
    }
}
