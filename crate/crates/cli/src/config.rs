//! Declarative run configuration: a single JSON file merged with command-line
//! overrides (flags win), hashed into every run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use conformal_triage_core::diagnostics::DEFAULT_COVERAGE_TARGETS;
use conformal_triage_core::simulate::{Average, BudgetSweepConfig};
use conformal_triage_core::{
    Result, ResidualMode, SyntheticConfig, Task, TrainConfig, TriageError,
};

/// Everything a run needs, with working defaults for every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input dataset (file for JSON lines, directory for the CSV pair).
    pub data: Option<PathBuf>,
    /// Directory holding calibration/model artifacts from `calibrate`.
    pub artifacts: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Miscoverage level for both tasks.
    pub alpha: f64,
    /// Tasks to process.
    pub tasks: Vec<Task>,
    /// Split scored by `predict`.
    pub predict_split: String,
    /// Where interval scales come from.
    pub residual_mode: ResidualMode,
    /// Uncertainty source for deferral thresholds.
    pub threshold_source: String,
    /// Relative deferral budgets for `diagnose`/`threshold`.
    pub deferral_budgets: Vec<f64>,
    /// Coverage-curve target levels.
    pub coverage_targets: Vec<f64>,
    /// Macro or micro precision/recall in sweeps.
    pub average: Average,
    pub synthetic: SyntheticConfig,
    pub training: TrainConfig,
    pub sweep: BudgetSweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            artifacts: None,
            out: None,
            alpha: 0.1,
            tasks: vec![Task::Depth, Task::Label],
            predict_split: "test".into(),
            residual_mode: ResidualMode::Fit,
            threshold_source: "entropy".into(),
            deferral_budgets: vec![0.05, 0.10, 0.25],
            coverage_targets: DEFAULT_COVERAGE_TARGETS.to_vec(),
            average: Average::Macro,
            synthetic: SyntheticConfig::default(),
            training: TrainConfig::default(),
            sweep: BudgetSweepConfig::default(),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub artifacts: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub n_profiles: Option<usize>,
    pub epochs: Option<usize>,
    pub replications: Option<usize>,
    pub residual_mode: Option<String>,
    pub predict_split: Option<String>,
    pub threshold_source: Option<String>,
    pub budgets: Option<String>,
}

impl RunConfig {
    /// Reads a config file when given, else starts from defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| TriageError::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| {
            TriageError::Config(format!("config {}: {e}", path.display()))
        })
    }

    /// Applies flag overrides; a `--seed` reseeds generation, training, and
    /// the sweep together.
    pub fn apply(mut self, ov: &Overrides) -> Result<Self> {
        if let Some(p) = &ov.data {
            self.data = Some(p.clone());
        }
        if let Some(p) = &ov.artifacts {
            self.artifacts = Some(p.clone());
        }
        if let Some(p) = &ov.out {
            self.out = Some(p.clone());
        }
        if let Some(seed) = ov.seed {
            self.synthetic.seed = seed;
            self.training.seed = seed;
            self.sweep.seed = seed;
        }
        if let Some(alpha) = ov.alpha {
            self.alpha = alpha;
        }
        if let Some(n) = ov.n_profiles {
            self.synthetic.n_profiles = n;
        }
        if let Some(epochs) = ov.epochs {
            self.training.epochs = epochs;
        }
        if let Some(r) = ov.replications {
            self.sweep.random_replications = r;
        }
        if let Some(mode) = &ov.residual_mode {
            self.residual_mode = mode.parse()?;
        }
        if let Some(split) = &ov.predict_split {
            split.parse::<conformal_triage_core::Split>()?;
            self.predict_split = split.clone();
        }
        if let Some(source) = &ov.threshold_source {
            source.parse::<conformal_triage_core::StrategyKind>()?;
            self.threshold_source = source.clone();
        }
        if let Some(spec) = &ov.budgets {
            self.deferral_budgets = spec
                .split(',')
                .map(|piece| {
                    piece.trim().parse::<f64>().map_err(|_| {
                        TriageError::Config(format!("bad budget fraction `{piece}`"))
                    })
                })
                .collect::<Result<_>>()?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TriageError::Config(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if self.tasks.is_empty() {
            return Err(TriageError::Config("no tasks selected".into()));
        }
        for b in &self.deferral_budgets {
            if !(*b > 0.0 && *b <= 1.0) {
                return Err(TriageError::Config(format!(
                    "deferral budget {b} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| TriageError::Config("no dataset path (--data)".into()))
    }

    pub fn artifacts_path(&self) -> Result<&Path> {
        self.artifacts
            .as_deref()
            .ok_or_else(|| TriageError::Config("no artifacts directory (--artifacts)".into()))
    }

    pub fn out_path(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| TriageError::Config("no output directory (--out)".into()))
    }

    /// Hash of the effective configuration, for the manifest.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Run record written beside every command's outputs. Contains no
/// timestamps, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_sha256: String,
    pub seeds: Seeds,
    /// Output files relative to the output directory, sorted.
    pub outputs: Vec<String>,
    pub config: &'a RunConfig,
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub synthetic: u64,
    pub training: u64,
    pub sweep: u64,
}

/// Writes `manifest.json` into `out`.
pub fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    mut outputs: Vec<String>,
) -> Result<()> {
    outputs.sort();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.sha256(),
        seeds: Seeds {
            synthetic: cfg.synthetic.seed,
            training: cfg.training.seed,
            sweep: cfg.sweep.seed,
        },
        outputs,
        config: cfg,
    };
    let path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| TriageError::Config(format!("manifest serialization: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| TriageError::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"alpha": 0.2, "synthetic": {"seed": 7}}"#).unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.synthetic.seed, 7);

        let ov = Overrides {
            alpha: Some(0.05),
            seed: Some(99),
            ..Overrides::default()
        };
        let merged = cfg.apply(&ov).unwrap();
        assert_eq!(merged.alpha, 0.05);
        assert_eq!(merged.synthetic.seed, 99);
        assert_eq!(merged.training.seed, 99);
        assert_eq!(merged.sweep.seed, 99);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"alhpa": 0.2}"#).unwrap();
        assert!(matches!(
            RunConfig::load(Some(&path)),
            Err(TriageError::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.sha256(), b.sha256());
        b.alpha = 0.2;
        assert_ne!(a.sha256(), b.sha256());
    }

    #[test]
    fn budget_list_parses_and_validates() {
        let ov = Overrides {
            budgets: Some("0.05, 0.1,0.25".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::default().apply(&ov).unwrap();
        assert_eq!(cfg.deferral_budgets, vec![0.05, 0.1, 0.25]);

        let bad = Overrides {
            budgets: Some("1.5".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::default().apply(&bad).is_err());
    }
}
