//! Run configuration: a TOML or JSON file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tabkg::fixtures::FixtureSpec;
use tabkg::generator::GenConfig;
use tabkg::proposer::ProviderSpec;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub theta: f64,
    /// Synthetic rows to draw; defaults to the number of training rows.
    pub n_synth: Option<usize>,
    /// Share of real rows withheld for DCR and TSTR; 0 disables the split.
    pub holdout_fraction: f64,
    /// Categorical column used for TSTR.
    pub label: Option<String>,
    pub data: Option<DataPaths>,
    pub fixture: Option<FixtureSection>,
    pub ensemble: EnsembleSection,
    pub generator: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            theta: tabkg::validator::DEFAULT_THETA,
            n_synth: None,
            holdout_fraction: 0.2,
            label: None,
            data: None,
            fixture: None,
            ensemble: EnsembleSection::default(),
            generator: GenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub csv: PathBuf,
    pub metadata: PathBuf,
}

/// Fixture parameters; the seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSection {
    pub recipe: String,
    pub n_rows: usize,
    pub noise: f64,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for FixtureSection {
    fn default() -> Self {
        let d = FixtureSpec::default();
        Self {
            recipe: d.recipe,
            n_rows: d.n_rows,
            noise: d.noise,
            overrides: d.overrides,
        }
    }
}

impl FixtureSection {
    pub fn spec(&self, seed: u64) -> FixtureSpec {
        FixtureSpec {
            recipe: self.recipe.clone(),
            n_rows: self.n_rows,
            seed,
            noise: self.noise,
            overrides: self.overrides.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    /// Temperature for a cross-model ensemble.
    pub temperature: f64,
    /// When set, every provider is queried once per temperature.
    pub temperatures: Option<Vec<f64>>,
    pub vote_threshold: Option<usize>,
    pub providers: Vec<ProviderSpec>,
}

impl RunConfig {
    /// Parses TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let mut config: RunConfig = parsed.map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        // Relative data paths are relative to the config file.
        if let Some(data) = &mut config.data {
            let base = path.parent().unwrap_or(Path::new("."));
            data.csv = base.join(&data.csv);
            data.metadata = base.join(&data.metadata);
        }
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn check(&self) -> Result<(), CliError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(CliError::Usage(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(0.0..0.9).contains(&self.holdout_fraction) {
            return Err(CliError::Usage(format!("holdout_fraction must lie in [0, 0.9), got {}", self.holdout_fraction)));
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let text = r#"
seed = 7
label = "late_flag"

[fixture]
recipe = "mini-procurement"
n_rows = 300

[[ensemble.providers]]
id = "truth"
type = "stub-perfect"
params = { truth = "truth.json" }

[generator]
epochs = 3
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.theta, 0.9);
        assert_eq!(c.fixture.as_ref().unwrap().noise, 0.0);
        assert_eq!(c.generator.epochs, 3);
        assert_eq!(c.generator.batch_size, GenConfig::default().batch_size);
        assert_eq!(c.ensemble.providers[0].params["truth"], "truth.json");
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
    }
}
