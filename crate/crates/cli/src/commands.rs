use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use mcode::dataset::{inject_outliers, load_csv, save_csv, Dataset, PerturbationLog};
use mcode::eval::{atpar, run_experiment_with, Experiment, FitAndEstimate, ATPAR_UPPER};
use mcode::model::{fit_mcode, RhoMatrix};
use mcode::optim::Factor;
use mcode::persist::{parse_score_table, rho_from_csv, rho_to_csv, save_model, score_table};
use mcode::scoring::{global_weights, score_prod, score_rw, ScoreMethod, ScoreVector};
use mcode::synthetic::{planted_benchmark, PlantedSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, Provenance, RunConfig};
use crate::CliError;

/// `perturbation.json`: the perturbation log plus a provenance header.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    #[serde(default)]
    pub header: serde_json::Value,
    #[serde(flatten)]
    pub log: PerturbationLog,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes to stdout, ignoring failures such as a closed pipe.
fn emit(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn comment_block(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

fn load(source: &DataSource) -> Result<Dataset, CliError> {
    Ok(match source {
        DataSource::Csv { path, n_outputs } => load_csv(path, *n_outputs)?,
        DataSource::Planted => planted_benchmark(&PlantedSpec::default())?.0,
    })
}

fn load_fit_data(cfg: &RunConfig) -> Result<Option<Dataset>, CliError> {
    let Some(path) = &cfg.fit_data else { return Ok(None) };
    let n_outputs = match &cfg.data {
        DataSource::Csv { n_outputs, .. } => *n_outputs,
        DataSource::Planted => PlantedSpec::default().d,
    };
    Ok(Some(load_csv(path, n_outputs)?))
}

fn truth_json(prov: &Provenance, log: &PerturbationLog) -> String {
    let file = TruthFile {
        header: prov.json(),
        log: log.clone(),
    };
    serde_json::to_string_pretty(&file).expect("log serializes") + "\n"
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = load(&cfg.data)?;
    let (perturbed, log) = inject_outliers(&ds, cfg.ratio, cfg.dim_fraction, cfg.seed)?;
    let prov = Provenance::of(cfg);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    save_csv(&perturbed, out.join("perturbed.csv"), Some(&prov.comment()))?;
    write(&out.join("perturbation.json"), &truth_json(&prov, &log))?;
    let per_row = log.flipped_cells.len() / log.outlier_rows.len();
    emit(&format!(
        "perturbed {} of {} rows, {per_row} output cell(s) each; wrote {}\n",
        log.outlier_rows.len(),
        ds.n_instances(),
        out.display()
    ));
    Ok(())
}

pub fn fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = match load_fit_data(cfg)? {
        Some(ds) => ds,
        None => load(&cfg.data)?,
    };
    let prov = Provenance::of(cfg);
    for &mode in &cfg.modes {
        let model = fit_mcode(&ds, mode, &cfg.lambda_policy)?;
        let dir = out.join(mode.as_str());
        save_model(&model, &dir, prov.json())?;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: feature arity {}, {} trainings -> {}",
            mode.as_str(),
            model.feature_arity(),
            model.trainings,
            dir.display()
        );
        let _ = writeln!(s, "  {:>4}  {:>8}  {:<10}  {:>10}  {:>10}", "dim", "lambda", "status", "iterations", "grad_norm");
        for (i, f) in model.factors.iter().enumerate() {
            let _ = match f {
                Factor::Logistic(l) => writeln!(
                    s,
                    "  {i:>4}  {:>8}  {:<10}  {:>10}  {:>10.2e}",
                    l.lambda,
                    if l.converged { "converged" } else { "cap hit" },
                    l.iterations,
                    l.final_gradient_norm
                ),
                Factor::Constant(c) => writeln!(s, "  {i:>4}  {:>8}  {:<10}  p(1) = {:.4}", "-", "constant", c.prob_one),
            };
        }
        emit(&s);
    }
    Ok(())
}

fn report_text(cfg: &RunConfig, ds: &Dataset, exp: &Experiment) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "dataset {} (N = {}, m = {}, d = {})",
        cfg.data.name(),
        ds.n_instances(),
        ds.n_inputs(),
        ds.n_outputs()
    );
    let _ = writeln!(
        s,
        "ratio {}, dim_fraction {}, repeats {}, seed {}\n",
        cfg.ratio, cfg.dim_fraction, cfg.repeats, cfg.seed
    );
    let _ = writeln!(s, "{:<8} {:>8} {:>8}  per-repeat ATPAR", "method", "mean", "std");
    for r in &exp.reports {
        let trials: Vec<String> = r.atpars.iter().map(|a| format!("{a:.4}")).collect();
        let _ = writeln!(s, "{:<8} {:>8.4} {:>8.4}  {}", r.method.label(), r.mean, r.std_dev, trials.join(" "));
    }
    s
}

pub fn detect(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = load(&cfg.data)?;
    let source = FitAndEstimate {
        policy: cfg.lambda_policy.clone(),
        reference: load_fit_data(cfg)?,
    };
    let exp = run_experiment_with(&ds, &cfg.experiment(), &source)?;
    let prov = Provenance::of(cfg);
    let header = comment_block(&prov.comment());
    let dataset = cfg.data.name();

    write(&out.join("config.toml"), &format!("{header}{}", cfg.to_toml()))?;
    let report = report_text(cfg, &ds, &exp);
    write(&out.join("report.txt"), &format!("{header}{report}"))?;

    let mut records = serde_json::json!({ "header": prov.json(), "config": cfg }).to_string() + "\n";
    let mut curves = format!("{header}method,repeat,alert_rate,tpar\n");
    for rep in &exp.repeats {
        let dir = out.join(format!("repeat_{:03}", rep.repeat));
        write(&dir.join("perturbation.json"), &truth_json(&prov, &rep.log))?;
        if let Some(rho) = &rep.rho_full {
            write(&dir.join("rho_full.csv"), &rho_to_csv(rho, Some(&prov.comment())))?;
        }
        if let Some(rho) = &rep.rho_independent {
            write(&dir.join("rho_independent.csv"), &rho_to_csv(rho, Some(&prov.comment())))?;
        }
        for mo in &rep.methods {
            let name = format!("scores_{}.csv", mo.method.tag());
            write(&dir.join(name), &score_table(&mo.scores, mo.method.label(), Some(&prov.comment())))?;
            let record = serde_json::json!({
                "kind": "trial",
                "dataset": dataset,
                "method": mo.method.label(),
                "dim_fraction": cfg.dim_fraction,
                "repeat": rep.repeat,
                "seed": rep.seed,
                "atpar": mo.atpar,
            });
            records.push_str(&record.to_string());
            records.push('\n');
            for (rate, t) in mo.curve.alert_rates.iter().zip(&mo.curve.tpar_values) {
                let _ = writeln!(curves, "{},{},{rate:?},{t:?}", mo.method.label(), rep.repeat);
            }
        }
    }
    for r in &exp.reports {
        let record = serde_json::json!({
            "kind": "summary",
            "dataset": dataset,
            "method": r.method.label(),
            "dim_fraction": r.dim_fraction,
            "atpars": r.atpars,
            "mean": r.mean,
            "std_dev": r.std_dev,
        });
        records.push_str(&record.to_string());
        records.push('\n');
    }
    write(&out.join("records.jsonl"), &records)?;
    write(&out.join("curves.csv"), &curves)?;
    emit(&report);
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(true).args(["rho", "scores"]))]
pub struct EvalArgs {
    /// perturbation.json describing the injected outliers.
    #[arg(long)]
    pub truth: PathBuf,
    /// Rho matrix CSV; scored with PROD and RW.
    #[arg(long)]
    pub rho: Option<PathBuf>,
    /// One or more score tables.
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value_t = ATPAR_UPPER)]
    pub atpar_upper: f64,
    /// Directory for eval.txt; printed to stdout either way.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn bad_format(path: &Path, message: String) -> CliError {
    CliError::Core(mcode::McodeError::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if !(args.atpar_upper > 0.0 && args.atpar_upper <= 1.0) {
        return Err(CliError::Usage(format!("atpar upper bound must lie in (0, 1], got {}", args.atpar_upper)));
    }
    let truth: TruthFile =
        serde_json::from_str(&read(&args.truth)?).map_err(|e| bad_format(&args.truth, e.to_string()))?;
    let log = truth.log;

    let mut scored: Vec<(String, ScoreVector)> = Vec::new();
    if let Some(path) = &args.rho {
        let rho: RhoMatrix = rho_from_csv(&read(path)?).map_err(|m| bad_format(path, m))?;
        scored.push(("PROD".into(), score_prod(&rho)));
        scored.push(("RW".into(), score_rw(&rho, &global_weights(&rho))?));
    }
    for path in &args.scores {
        let (label, scores) = parse_score_table(&read(path)?).map_err(|m| bad_format(path, m))?;
        scored.push((label, ScoreVector { scores, method: ScoreMethod::Prod }));
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<8} {:>8}", "method", "atpar");
    for (label, sv) in &scored {
        if let Some(&row) = log.outlier_rows.iter().find(|&&r| r >= sv.len()) {
            return Err(CliError::Core(mcode::McodeError::Domain(format!(
                "outlier row {row} outside the {} scored instances",
                sv.len()
            ))));
        }
        let _ = writeln!(text, "{label:<8} {:>8.6}", atpar(sv, &log, args.atpar_upper));
    }
    emit(&text);
    if let Some(out) = &args.out {
        let json = serde_json::to_string(args).expect("eval args serialize");
        let hash: String = Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        let prov = Provenance {
            seed: log.seed,
            config_hash: hash,
        };
        write(&out.join("eval.txt"), &format!("{}{text}", comment_block(&prov.comment())))?;
    }
    Ok(())
}
