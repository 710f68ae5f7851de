//! Detection quality against injected ground truth (true positive alert rate
//! and its average over small alert rates) and the repeated-trial experiment
//! runner that compares detectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{inject_outliers, standardize, Dataset, PerturbationLog};
use crate::error::{McodeError, Result};
use crate::lof::{lof_scores, LofConfig};
use crate::model::{estimate_rho, fit_mcode, LambdaPolicy, Mode, RhoMatrix};
use crate::par;
use crate::scoring::{
    global_weights, local_weights, rank_descending, score_lrw, score_prod, score_rw,
    NeighborIndex, ScoreVector,
};

/// Number of alerts raised at `rate`: `max(1, round(rate * n))`.
pub fn alert_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).max(1)
}

/// Precision of the top `count` instances of `ranking`.
fn hits_curve(ranking: &[usize], truth: &PerturbationLog, max_count: usize) -> Vec<usize> {
    let mut hits = 0;
    ranking[..max_count]
        .iter()
        .map(|&r| {
            if truth.is_outlier(r) {
                hits += 1;
            }
            hits
        })
        .collect()
}

/// Fraction of true outliers among the `max(1, round(alert_rate * N))`
/// highest-scoring instances (ties by ascending index).
pub fn tpar(scores: &ScoreVector, truth: &PerturbationLog, alert_rate: f64) -> Result<f64> {
    let n = scores.len();
    if !(alert_rate > 0.0 && alert_rate <= 1.0) {
        return Err(McodeError::Domain(format!(
            "alert rate must lie in (0, 1], got {alert_rate}"
        )));
    }
    let a = alert_count(alert_rate, n);
    if a > n {
        return Err(McodeError::Domain(format!("{a} alerts for {n} instances")));
    }
    let ranking = scores.ranking();
    let hits = hits_curve(&ranking, truth, a);
    Ok(hits[a - 1] as f64 / a as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub alert_rates: Vec<f64>,
    pub tpar_values: Vec<f64>,
}

/// Every achievable alert rate `a / N` for `a = 1..=max(1, round(0.04 N))`.
pub fn default_alert_grid(n: usize) -> Vec<f64> {
    let top = alert_count(0.04, n).min(n);
    (1..=top).map(|a| a as f64 / n as f64).collect()
}

pub fn tpar_curve(scores: &ScoreVector, truth: &PerturbationLog, grid: Option<&[f64]>) -> Result<EvalCurve> {
    let n = scores.len();
    let rates = match grid {
        Some(g) => g.to_vec(),
        None => default_alert_grid(n),
    };
    if rates.is_empty() {
        return Err(McodeError::Config("alert-rate grid is empty".into()));
    }
    if rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) || rates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(McodeError::Config(
            "alert rates must be strictly increasing within (0, 1]".into(),
        ));
    }
    let ranking = scores.ranking();
    let max_a = rates.iter().map(|&r| alert_count(r, n)).max().unwrap_or(1).min(n);
    let hits = hits_curve(&ranking, truth, max_a);
    let tpar_values = rates
        .iter()
        .map(|&r| {
            let a = alert_count(r, n).min(n);
            hits[a - 1] as f64 / a as f64
        })
        .collect();
    Ok(EvalCurve {
        alert_rates: rates,
        tpar_values,
    })
}

/// Mean TPAR over alert counts `1..=max(1, round(upper * N))`.
pub fn atpar(scores: &ScoreVector, truth: &PerturbationLog, upper: f64) -> f64 {
    let n = scores.len();
    let top = alert_count(upper, n).min(n);
    let ranking = scores.ranking();
    let hits = hits_curve(&ranking, truth, top);
    hits.iter()
        .enumerate()
        .map(|(i, &h)| h as f64 / (i + 1) as f64)
        .sum::<f64>()
        / top as f64
}

pub const ATPAR_UPPER: f64 = 0.01;

/// Detectors compared by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lof,
    IProd,
    MProd,
    MRw,
    MLrw,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lof, Method::IProd, Method::MProd, Method::MRw, Method::MLrw];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Lof => "lof",
            Method::IProd => "iprod",
            Method::MProd => "mprod",
            Method::MRw => "mrw",
            Method::MLrw => "mlrw",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Lof => "LOF",
            Method::IProd => "I-PROD",
            Method::MProd => "M-PROD",
            Method::MRw => "M-RW",
            Method::MLrw => "M-LRW",
        }
    }

    /// The model mode whose rho the method scores, if any.
    pub fn mode(self) -> Option<Mode> {
        match self {
            Method::Lof => None,
            Method::IProd => Some(Mode::Independent),
            Method::MProd | Method::MRw | Method::MLrw => Some(Mode::FullConditional),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = McodeError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == key)
            .ok_or_else(|| McodeError::Config(format!("unknown method {s:?}")))
    }
}

/// Space in which local-weight neighborhoods are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSpace {
    /// Standardized inputs only.
    #[default]
    Inputs,
    /// Standardized inputs joined with the raw 0/1 outputs.
    Joint,
}

/// Produces the rho matrix a model-based method scores.
pub trait RhoSource: Sync {
    fn rho(&self, scored: &Dataset, mode: Mode) -> Result<RhoMatrix>;
}

/// Fits the model on the scored (contaminated) data, or on a separate
/// reference set when one is given, and estimates rho for the scored data.
#[derive(Debug, Clone)]
pub struct FitAndEstimate {
    pub policy: LambdaPolicy,
    pub reference: Option<Dataset>,
}

impl FitAndEstimate {
    pub fn new(policy: LambdaPolicy) -> Self {
        Self {
            policy,
            reference: None,
        }
    }
}

impl RhoSource for FitAndEstimate {
    fn rho(&self, scored: &Dataset, mode: Mode) -> Result<RhoMatrix> {
        let train = self.reference.as_ref().unwrap_or(scored);
        let model = fit_mcode(train, mode, &self.policy)?;
        estimate_rho(&model, scored)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub ratio: f64,
    pub dim_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
    pub lambda_policy: LambdaPolicy,
    pub k_lof: usize,
    pub k_lrw: usize,
    pub lrw_space: NeighborSpace,
    pub atpar_upper: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            ratio: 0.01,
            dim_fraction: 0.1,
            repeats: 10,
            seed: 0,
            lambda_policy: LambdaPolicy::default(),
            k_lof: 100,
            k_lrw: 100,
            lrw_space: NeighborSpace::Inputs,
            atpar_upper: ATPAR_UPPER,
        }
    }
}

impl ExperimentConfig {
    /// Checks the configuration against the dataset shape before any work.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let (n, d) = (ds.n_instances(), ds.n_outputs());
        if self.methods.is_empty() {
            return Err(McodeError::Config("no methods requested".into()));
        }
        if self.repeats == 0 {
            return Err(McodeError::Config("repeats must be at least 1".into()));
        }
        for (name, v) in [("ratio", self.ratio), ("dim_fraction", self.dim_fraction), ("atpar upper bound", self.atpar_upper)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(McodeError::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        for &m in &self.methods {
            match m {
                Method::MProd | Method::MRw | Method::MLrw if d < 2 => {
                    return Err(McodeError::Config(format!(
                        "method {m} needs at least 2 output dimensions, dataset has {d}"
                    )))
                }
                Method::Lof if self.k_lof == 0 || self.k_lof >= n => {
                    return Err(McodeError::Config(format!(
                        "method {m} needs 1 <= k < N (k = {}, N = {n})",
                        self.k_lof
                    )))
                }
                Method::MLrw if self.k_lrw == 0 || self.k_lrw > n => {
                    return Err(McodeError::Config(format!(
                        "method {m} needs 1 <= k <= N (k = {}, N = {n})",
                        self.k_lrw
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub scores: ScoreVector,
    pub atpar: f64,
    pub curve: EvalCurve,
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub log: PerturbationLog,
    pub rho_full: Option<RhoMatrix>,
    pub rho_independent: Option<RhoMatrix>,
    pub methods: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub dim_fraction: f64,
    pub atpars: Vec<f64>,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; zero for a single trial.
    pub std_dev: f64,
}

impl TrialReport {
    pub fn from_trials(method: Method, dim_fraction: f64, atpars: Vec<f64>) -> Self {
        let k = atpars.len() as f64;
        let mean = atpars.iter().sum::<f64>() / k;
        let std_dev = if atpars.len() > 1 {
            (atpars.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            method,
            dim_fraction,
            atpars,
            mean,
            std_dev,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub repeats: Vec<RepeatOutcome>,
    pub reports: Vec<TrialReport>,
}

/// Full-conditional rho, independent rho (each when some method needs it)
/// and the scores per requested method.
pub type ScoredMethods = (Option<RhoMatrix>, Option<RhoMatrix>, Vec<(Method, ScoreVector)>);

/// Scores one contaminated dataset with every requested method.
pub fn score_methods(
    perturbed: &Dataset,
    cfg: &ExperimentConfig,
    source: &dyn RhoSource,
) -> Result<ScoredMethods> {
    let needs = |mode| cfg.methods.iter().any(|m| m.mode() == Some(mode));
    let rho_full = needs(Mode::FullConditional)
        .then(|| source.rho(perturbed, Mode::FullConditional))
        .transpose()?;
    let rho_ind = needs(Mode::Independent)
        .then(|| source.rho(perturbed, Mode::Independent))
        .transpose()?;
    let (std_ds, _) = standardize(perturbed);

    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let scores = match method {
            Method::Lof => lof_scores(
                std_ds.joint_points().view(),
                &LofConfig {
                    k: cfg.k_lof,
                    ..LofConfig::default()
                },
            )?,
            Method::IProd => score_prod(rho_ind.as_ref().expect("independent rho fitted")),
            Method::MProd => score_prod(rho_full.as_ref().expect("full rho fitted")),
            Method::MRw => {
                let rho = rho_full.as_ref().expect("full rho fitted");
                score_rw(rho, &global_weights(rho))?
            }
            Method::MLrw => {
                let rho = rho_full.as_ref().expect("full rho fitted");
                let points = match cfg.lrw_space {
                    NeighborSpace::Inputs => std_ds.x().to_owned(),
                    NeighborSpace::Joint => std_ds.joint_points(),
                };
                let index = NeighborIndex::new(points)?;
                score_lrw(rho, &local_weights(rho, &index, cfg.k_lrw)?)?
            }
        };
        out.push((method, scores));
    }
    Ok((rho_full, rho_ind, out))
}

/// Runs `repeats` independent trials: inject outliers with seed
/// `seed + repeat`, fit and score every method on the contaminated data, and
/// aggregate ATPAR per method.
pub fn run_experiment_with(ds: &Dataset, cfg: &ExperimentConfig, source: &dyn RhoSource) -> Result<Experiment> {
    cfg.validate(ds)?;
    let repeats = par::try_map_range(cfg.repeats, |r| -> Result<RepeatOutcome> {
        let seed = cfg.repeat_seed(r);
        let (perturbed, log) = inject_outliers(ds, cfg.ratio, cfg.dim_fraction, seed)?;
        let (rho_full, rho_independent, scored) = score_methods(&perturbed, cfg, source)?;
        let methods = scored
            .into_iter()
            .map(|(method, scores)| {
                let atpar = atpar(&scores, &log, cfg.atpar_upper);
                let curve = tpar_curve(&scores, &log, None)?;
                Ok(MethodOutcome {
                    method,
                    scores,
                    atpar,
                    curve,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RepeatOutcome {
            repeat: r,
            seed,
            log,
            rho_full,
            rho_independent,
            methods,
        })
    })?;

    let reports = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let atpars = repeats.iter().map(|rep| rep.methods[j].atpar).collect();
            TrialReport::from_trials(m, cfg.dim_fraction, atpars)
        })
        .collect();
    Ok(Experiment {
        config: cfg.clone(),
        repeats,
        reports,
    })
}

pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    let source = FitAndEstimate::new(cfg.lambda_policy.clone());
    run_experiment_with(ds, cfg, &source).map(|e| e.reports)
}

/// Instance indices ordered for a score table: descending score, then index.
pub fn score_order(scores: &ScoreVector) -> Vec<usize> {
    rank_descending(&scores.scores)
}
