//! Experiment configuration: a TOML (or JSON) file, then command-line flags.

use std::path::{Path, PathBuf};

use fbcap::baseline::GridConfig;
use fbcap::bounds::AscentConfig;
use fbcap::channels::{make_ising, ChannelSpec};
use fbcap::ddpg::DdpgConfig;
use fbcap::qgraph::DEFAULT_RADIUS;
use serde::{Deserialize, Serialize};

use crate::output::CliError;

/// Everything a command needs. Written verbatim into every result record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// `ising:<k>` or the path of a channel config file.
    pub channel: String,
    /// Where results go. Not part of the record, so moving a run elsewhere
    /// leaves its outputs unchanged.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub train: DdpgConfig,
    pub evaluate: EvaluateConfig,
    pub extract: ExtractConfig,
    pub bound: BoundConfig,
    pub formula: FormulaConfig,
    pub baseline: GridConfig,
    pub code: CodeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            channel: "ising:3".into(),
            out: PathBuf::from("results"),
            train: DdpgConfig::default(),
            evaluate: EvaluateConfig::default(),
            extract: ExtractConfig::default(),
            bound: BoundConfig::default(),
            formula: FormulaConfig::default(),
            baseline: GridConfig::default(),
            code: CodeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// A training checkpoint or a saved Q-graph.
    pub checkpoint: Option<PathBuf>,
    pub steps: usize,
    pub burn_in: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { checkpoint: None, steps: 100_000, burn_in: 1_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// A training checkpoint, or a saved Q-graph whose nearest-node actions
    /// serve as the policy.
    pub checkpoint: Option<PathBuf>,
    /// Clustering radii; the graph is built at the first and rechecked at
    /// the rest.
    pub radii: Vec<f64>,
    pub steps: usize,
    pub burn_in: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { checkpoint: None, radii: vec![DEFAULT_RADIUS, 1e-3], steps: 20_000, burn_in: 1_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub qgraph: Option<PathBuf>,
    pub restarts: usize,
    pub tol: f64,
    pub max_iterations: usize,
    /// Threshold on the tightness deviation.
    pub tight_tol: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        let ascent = AscentConfig::default();
        Self {
            qgraph: None,
            restarts: ascent.restarts,
            tol: ascent.tol,
            max_iterations: ascent.max_iterations,
            tight_tol: 1e-4,
        }
    }
}

impl BoundConfig {
    pub fn ascent(&self, seed: u64) -> AscentConfig {
        AscentConfig { restarts: self.restarts, tol: self.tol, max_iterations: self.max_iterations, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormulaConfig {
    pub k: usize,
}

impl Default for FormulaConfig {
    fn default() -> Self {
        Self { k: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeConfig {
    pub k: usize,
    /// Stay probability; the rate-optimal value for `k` when absent.
    pub p: Option<f64>,
    /// Message length in bits.
    pub bits: usize,
    /// Write the per-symbol CSV trace.
    pub trace: bool,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self { k: 3, p: None, bits: 100_000, trace: false }
    }
}

impl ExperimentConfig {
    /// Read a TOML config, a JSON config, or a previous result record (its
    /// embedded `config`).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            if let Some(embedded) = value.get_mut("config") {
                value = embedded.take();
            }
            serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
    }

    /// Reject values no command could run with.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if let Err(e) = self.train.validate() {
            problems.push(format!("train: {e}"));
        }
        if self.evaluate.steps <= self.evaluate.burn_in {
            problems.push("evaluate: steps must exceed burn_in".into());
        }
        if self.extract.radii.is_empty() || self.extract.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            problems.push("extract: radii must be a non-empty list of positive numbers".into());
        }
        if self.extract.steps <= self.extract.burn_in {
            problems.push("extract: steps must exceed burn_in".into());
        }
        if !(self.bound.tol > 0.0) || !(self.bound.tight_tol > 0.0) {
            problems.push("bound: tolerances must be positive".into());
        }
        if self.formula.k < 2 {
            problems.push("formula: k must be at least 2".into());
        }
        if self.code.k < 2 {
            problems.push("code: k must be at least 2".into());
        }
        if let Some(p) = self.code.p {
            if !(p > 0.0 && p < 1.0) {
                problems.push("code: p must lie in (0,1)".into());
            }
        }
        let g = &self.baseline;
        if g.belief_nodes < 2 || g.action_points < 2 || g.max_sweeps == 0 || !(g.tol > 0.0) {
            problems.push("baseline: grids need at least 2 points, a positive sweep budget and tolerance".into());
        }
        if !(g.damping > 0.0 && g.damping <= 1.0) {
            problems.push("baseline: damping must lie in (0,1]".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(problems.join("; ")))
        }
    }

    pub fn channel_spec(&self) -> Result<ChannelSpec, CliError> {
        parse_channel(&self.channel)
    }
}

/// Resolve `ising:<k>` or a channel config path.
pub fn parse_channel(selector: &str) -> Result<ChannelSpec, CliError> {
    if let Some(k) = selector.strip_prefix("ising:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::config(format!("bad channel selector {selector:?}, expected ising:<k>")))?;
        return make_ising(k).map_err(CliError::from);
    }
    let path = Path::new(selector);
    if !path.exists() {
        return Err(CliError::config(format!(
            "channel {selector:?} is neither ising:<k> nor an existing config file"
        )));
    }
    ChannelSpec::from_config_file(path).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sede = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[train]\nepisode = 3").is_err());
        let cfg: ExperimentConfig = toml::from_str("seed = 3\n[code]\nk = 4").unwrap();
        assert_eq!((cfg.seed, cfg.code.k), (3, 4));
    }

    #[test]
    fn channel_selectors() {
        assert_eq!(parse_channel("ising:4").unwrap().state_size(), 4);
        assert!(parse_channel("ising:x").is_err());
        assert!(parse_channel("no/such/file.toml").is_err());
    }

    #[test]
    fn record_round_trip() {
        let cfg = ExperimentConfig { seed: 9, ..Default::default() };
        let record = serde_json::json!({ "config": cfg, "result": {} });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("formula.json");
        std::fs::write(&path, record.to_string()).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
    }
}
