//! Run configuration: command-line flags layered over an optional TOML file,
//! resolved into a single [`RunConfig`] that is echoed and hashed into every
//! artifact header.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mcode::eval::{ExperimentConfig, Method, NeighborSpace, ATPAR_UPPER};
use mcode::model::{LambdaPolicy, Mode};
use mcode::optim::{DEFAULT_FOLDS, DEFAULT_LAMBDA_GRID};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Full,
    Independent,
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeChoice::Full => vec![Mode::FullConditional],
            ModeChoice::Independent => vec![Mode::Independent],
            ModeChoice::Both => vec![Mode::FullConditional, Mode::Independent],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceChoice {
    Inputs,
    Joint,
}

/// Flags shared by the data-driven commands. Every field is optional so that
/// unset flags fall back to the config file and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV: input columns first, then the binary output columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use the built-in planted conditional benchmark instead of --data.
    #[arg(long)]
    pub synthetic: bool,
    /// Number of trailing CSV columns that are binary outputs.
    #[arg(long)]
    pub n_outputs: Option<usize>,
    /// Comma-separated subset of lof, iprod, mprod, mrw, mlrw.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub dim_fraction: Option<f64>,
    #[arg(long)]
    pub k_lof: Option<usize>,
    #[arg(long)]
    pub k_lrw: Option<usize>,
    #[arg(long, value_enum)]
    pub lrw_space: Option<SpaceChoice>,
    /// Fixed regularization strength; skips cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub atpar_upper: Option<f64>,
    /// Fit models on this clean CSV instead of the contaminated data.
    #[arg(long)]
    pub fit_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    synthetic: Option<bool>,
    n_outputs: Option<usize>,
    methods: Option<Vec<String>>,
    ratio: Option<f64>,
    dim_fraction: Option<f64>,
    k_lof: Option<usize>,
    k_lrw: Option<usize>,
    lrw_space: Option<NeighborSpace>,
    lambda: Option<f64>,
    lambda_grid: Option<Vec<f64>>,
    folds: Option<usize>,
    cv_seed: Option<u64>,
    repeats: Option<usize>,
    seed: Option<u64>,
    atpar_upper: Option<f64>,
    fit_data: Option<PathBuf>,
    mode: Option<ModeChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, n_outputs: usize },
    Planted,
}

impl DataSource {
    pub fn name(&self) -> String {
        match self {
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            DataSource::Planted => "planted".into(),
        }
    }
}

/// Fully resolved settings. The output directory is not part of it, so
/// identical runs into different directories produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub fit_data: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub modes: Vec<Mode>,
    pub ratio: f64,
    pub dim_fraction: f64,
    pub k_lof: usize,
    pub k_lrw: usize,
    pub lrw_space: NeighborSpace,
    pub lambda_policy: LambdaPolicy,
    pub repeats: usize,
    pub seed: u64,
    pub atpar_upper: f64,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn unit_interval(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must lie in (0, 1], got {v}")))
    }
}

impl RunArgs {
    /// Merges flags over the config file over defaults and validates the result.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let synthetic = self.synthetic || file.synthetic.unwrap_or(false);
        let data_path = self.data.clone().or(file.data);
        let n_outputs = self.n_outputs.or(file.n_outputs);
        let data = match (data_path, synthetic) {
            (Some(_), true) => return Err(CliError::Usage("--data and --synthetic are mutually exclusive".into())),
            (None, true) => DataSource::Planted,
            (Some(path), false) => {
                let n_outputs = n_outputs.ok_or_else(|| CliError::Usage("--n-outputs is required with --data".into()))?;
                DataSource::Csv { path, n_outputs }
            }
            (None, false) => return Err(CliError::Usage("one of --data or --synthetic is required".into())),
        };

        let methods = match self.methods.clone().or(file.methods) {
            Some(names) => names
                .iter()
                .map(|s| s.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
            None => Method::ALL.to_vec(),
        };
        if methods.is_empty() {
            return Err(CliError::Usage("no methods requested".into()));
        }

        // Within one layer --lambda and --lambda-grid conflict; across layers
        // whichever the flags set wins.
        let (lambda, grid) = match (self.lambda, &self.lambda_grid) {
            (Some(_), Some(_)) => return Err(CliError::Usage("--lambda conflicts with --lambda-grid".into())),
            (Some(l), None) => (Some(l), None),
            (None, Some(g)) => (None, Some(g.clone())),
            (None, None) => match (file.lambda, file.lambda_grid) {
                (Some(_), Some(_)) => return Err(CliError::Usage("lambda conflicts with lambda_grid".into())),
                pair => pair,
            },
        };
        let lambda_policy = match lambda {
            Some(lambda) if lambda.is_finite() && lambda >= 0.0 => LambdaPolicy::Fixed { lambda },
            Some(lambda) => return Err(CliError::Usage(format!("invalid lambda {lambda}"))),
            None => LambdaPolicy::CrossValidated {
                grid: grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
                folds: self.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS),
                seed: self.cv_seed.or(file.cv_seed).unwrap_or(0),
            },
        };

        let lrw_space = match self.lrw_space {
            Some(SpaceChoice::Inputs) => NeighborSpace::Inputs,
            Some(SpaceChoice::Joint) => NeighborSpace::Joint,
            None => file.lrw_space.unwrap_or_default(),
        };

        let defaults = ExperimentConfig::default();
        let cfg = RunConfig {
            data,
            fit_data: self.fit_data.clone().or(file.fit_data),
            methods,
            modes: self.mode.or(file.mode).unwrap_or(ModeChoice::Both).modes(),
            ratio: unit_interval("ratio", self.ratio.or(file.ratio).unwrap_or(defaults.ratio))?,
            dim_fraction: unit_interval(
                "dim_fraction",
                self.dim_fraction.or(file.dim_fraction).unwrap_or(defaults.dim_fraction),
            )?,
            k_lof: self.k_lof.or(file.k_lof).unwrap_or(defaults.k_lof),
            k_lrw: self.k_lrw.or(file.k_lrw).unwrap_or(defaults.k_lrw),
            lrw_space,
            lambda_policy,
            repeats: self.repeats.or(file.repeats).unwrap_or(defaults.repeats),
            seed: self.seed.or(file.seed).unwrap_or(defaults.seed),
            atpar_upper: unit_interval("atpar_upper", self.atpar_upper.or(file.atpar_upper).unwrap_or(ATPAR_UPPER))?,
        };
        if cfg.repeats == 0 {
            return Err(CliError::Usage("repeats must be at least 1".into()));
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            methods: self.methods.clone(),
            ratio: self.ratio,
            dim_fraction: self.dim_fraction,
            repeats: self.repeats,
            seed: self.seed,
            lambda_policy: self.lambda_policy.clone(),
            k_lof: self.k_lof,
            k_lrw: self.k_lrw,
            lrw_space: self.lrw_space,
            atpar_upper: self.atpar_upper,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// TOML rendering of the resolved settings, loadable with `--config`
    /// (the data source is flattened back into `data`/`n_outputs`/`synthetic`).
    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::new();
        match &self.data {
            DataSource::Csv { path, n_outputs } => {
                t.insert("data".into(), path.display().to_string().into());
                t.insert("n_outputs".into(), (*n_outputs as i64).into());
            }
            DataSource::Planted => {
                t.insert("synthetic".into(), true.into());
            }
        }
        if let Some(p) = &self.fit_data {
            t.insert("fit_data".into(), p.display().to_string().into());
        }
        let methods: Vec<toml::Value> = self.methods.iter().map(|m| m.tag().into()).collect();
        t.insert("methods".into(), methods.into());
        let mode = match self.modes.as_slice() {
            [Mode::FullConditional] => "full",
            [Mode::Independent] => "independent",
            _ => "both",
        };
        t.insert("mode".into(), mode.into());
        t.insert("ratio".into(), self.ratio.into());
        t.insert("dim_fraction".into(), self.dim_fraction.into());
        t.insert("k_lof".into(), (self.k_lof as i64).into());
        t.insert("k_lrw".into(), (self.k_lrw as i64).into());
        let space = match self.lrw_space {
            NeighborSpace::Inputs => "inputs",
            NeighborSpace::Joint => "joint",
        };
        t.insert("lrw_space".into(), space.into());
        match &self.lambda_policy {
            LambdaPolicy::Fixed { lambda } => {
                t.insert("lambda".into(), (*lambda).into());
            }
            LambdaPolicy::CrossValidated { grid, folds, seed } => {
                let g: Vec<toml::Value> = grid.iter().map(|&v| v.into()).collect();
                t.insert("lambda_grid".into(), g.into());
                t.insert("folds".into(), (*folds as i64).into());
                t.insert("cv_seed".into(), (*seed as i64).into());
            }
        }
        t.insert("repeats".into(), (self.repeats as i64).into());
        t.insert("seed".into(), (self.seed as i64).into());
        t.insert("atpar_upper".into(), self.atpar_upper.into());
        toml::to_string(&t).expect("config renders as TOML")
    }
}

/// Provenance stamped on every artifact.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }

    /// Comment text (without the leading `# `) for CSV and text artifacts.
    pub fn comment(&self) -> String {
        format!(
            "mcode {}\nseed {}\nconfig_sha256 {}",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.config_hash
        )
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": "mcode",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config_sha256": self.config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "synthetic = true\nratio = 0.05\nk_lof = 7\nmethods = [\"mrw\"]\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            ratio: Some(0.02),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.ratio, 0.02);
        assert_eq!(cfg.k_lof, 7);
        assert_eq!(cfg.methods, vec![Method::MRw]);
        assert_eq!(cfg.data, DataSource::Planted);
    }

    #[test]
    fn echoed_toml_resolves_to_same_config() {
        let args = RunArgs {
            synthetic: true,
            lambda: Some(0.5),
            dim_fraction: Some(0.25),
            lrw_space: Some(SpaceChoice::Joint),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        let again = RunArgs {
            config: Some(path),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_file_keys_and_bad_fractions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "synthetic = true\nratoi = 0.1\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::Usage(_))));
        let args = RunArgs {
            synthetic: true,
            dim_fraction: Some(2.0),
            ..Default::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::Usage(_))));
        let args = RunArgs {
            data: Some("x.csv".into()),
            ..Default::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::Usage(m)) if m.contains("--n-outputs")));
    }
}
