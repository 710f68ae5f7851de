//! On-disk formats: factor documents, model directories (manifest plus one
//! factor file per output), score tables, and rho matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::StandardizationStats;
use crate::error::{McodeError, Result};
use crate::eval::score_order;
use crate::model::{McodeModel, Mode, RhoMatrix};
use crate::optim::{ConstantFactor, Factor, LogisticFactor};
use crate::scoring::ScoreVector;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Text document for one factor, `key value` per line; logistic weights
/// follow a `weights <count>` line, one per line. Floats use the shortest
/// representation that parses back to the same value.
pub fn factor_to_text(factor: &Factor) -> String {
    let mut s = String::new();
    match factor {
        Factor::Logistic(f) => {
            let _ = writeln!(s, "kind logistic");
            let _ = writeln!(s, "dim_index {}", f.dim_index);
            let _ = writeln!(s, "lambda {:?}", f.lambda);
            let _ = writeln!(s, "intercept {:?}", f.intercept);
            let _ = writeln!(s, "converged {}", f.converged);
            let _ = writeln!(s, "final_gradient_norm {:?}", f.final_gradient_norm);
            let _ = writeln!(s, "iterations {}", f.iterations);
            let _ = writeln!(s, "weights {}", f.weights.len());
            for w in &f.weights {
                let _ = writeln!(s, "{w:?}");
            }
        }
        Factor::Constant(f) => {
            let _ = writeln!(s, "kind constant");
            let _ = writeln!(s, "dim_index {}", f.dim_index);
            let _ = writeln!(s, "prob_one {:?}", f.prob_one);
        }
    }
    s
}

pub fn factor_from_text(text: &str) -> std::result::Result<Factor, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut field = |key: &str| -> std::result::Result<String, String> {
        let line = lines.next().ok_or_else(|| format!("missing {key}"))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| format!("malformed line {line:?}"))?;
        if k != key {
            return Err(format!("expected {key}, found {k}"));
        }
        Ok(v.trim().to_string())
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("bad {key} value {v:?}"))
    }

    let kind = field("kind")?;
    let dim_index = num("dim_index", &field("dim_index")?)?;
    match kind.as_str() {
        "constant" => Ok(Factor::Constant(ConstantFactor {
            dim_index,
            prob_one: num("prob_one", &field("prob_one")?)?,
        })),
        "logistic" => {
            let lambda = num("lambda", &field("lambda")?)?;
            let intercept = num("intercept", &field("intercept")?)?;
            let converged = num("converged", &field("converged")?)?;
            let final_gradient_norm = num("final_gradient_norm", &field("final_gradient_norm")?)?;
            let iterations = num("iterations", &field("iterations")?)?;
            let count: usize = num("weights", &field("weights")?)?;
            let weights = lines
                .by_ref()
                .take(count)
                .map(|l| num::<f64>("weight", l))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if weights.len() != count {
                return Err(format!("expected {count} weights, found {}", weights.len()));
            }
            Ok(Factor::Logistic(LogisticFactor {
                dim_index,
                lambda,
                intercept,
                weights,
                converged,
                final_gradient_norm,
                iterations,
            }))
        }
        other => Err(format!("unknown factor kind {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Free-form provenance block (tool version, seed, config hash).
    #[serde(default)]
    pub header: serde_json::Value,
    pub mode: Mode,
    pub m: usize,
    pub d: usize,
    pub feature_arity: usize,
    pub stats: StandardizationStats,
    pub lambdas: Vec<f64>,
    pub trainings: usize,
    pub factor_files: Vec<String>,
}

pub fn factor_file_name(dim: usize) -> String {
    format!("factor_{dim:04}.txt")
}

/// Writes the model as `dir/manifest.json` plus one factor document per output.
pub fn save_model(model: &McodeModel, dir: impl AsRef<Path>, header: serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| McodeError::io(dir, e))?;
    let mut files = Vec::with_capacity(model.d);
    for (i, f) in model.factors.iter().enumerate() {
        let name = factor_file_name(i);
        let path = dir.join(&name);
        fs::write(&path, factor_to_text(f)).map_err(|e| McodeError::io(&path, e))?;
        files.push(name);
    }
    let manifest = Manifest {
        header,
        mode: model.mode,
        m: model.m,
        d: model.d,
        feature_arity: model.feature_arity(),
        stats: model.stats.clone(),
        lambdas: model.lambdas.clone(),
        trainings: model.trainings,
        factor_files: files,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| McodeError::io(&path, e))
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| McodeError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| McodeError::Format {
        path,
        message: e.to_string(),
    })
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<McodeModel> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;
    let bad = |path: PathBuf, message: String| McodeError::Format { path, message };
    if manifest.factor_files.len() != manifest.d || manifest.lambdas.len() != manifest.d {
        return Err(bad(dir.join(MANIFEST_FILE), "factor count does not match d".into()));
    }
    let arity = manifest.mode.feature_arity(manifest.m, manifest.d);
    let mut factors = Vec::with_capacity(manifest.d);
    for (i, name) in manifest.factor_files.iter().enumerate() {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| McodeError::io(&path, e))?;
        let factor = factor_from_text(&text).map_err(|m| bad(path.clone(), m))?;
        if factor.dim_index() != i {
            return Err(bad(path, format!("factor for dimension {} in slot {i}", factor.dim_index())));
        }
        if factor.feature_arity().is_some_and(|p| p != arity) {
            return Err(bad(path, format!("factor arity differs from {arity}")));
        }
        factors.push(factor);
    }
    Ok(McodeModel {
        mode: manifest.mode,
        m: manifest.m,
        d: manifest.d,
        stats: manifest.stats,
        factors,
        lambdas: manifest.lambdas,
        trainings: manifest.trainings,
    })
}

/// `instance_index,method,score` rows, highest score first, ties by index.
pub fn score_table(scores: &ScoreVector, method_label: &str, comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    s.push_str("instance_index,method,score\n");
    for n in score_order(scores) {
        let _ = writeln!(s, "{n},{method_label},{:?}", scores.scores[n]);
    }
    s
}

/// Parses a score table back into per-instance scores (index order).
pub fn parse_score_table(text: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let mut rows = Vec::new();
    let mut method = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("instance_index") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("line {}: expected 3 fields", i + 1));
        }
        let idx: usize = parts[0].parse().map_err(|_| format!("line {}: bad index", i + 1))?;
        let score: f64 = parts[2].parse().map_err(|_| format!("line {}: bad score", i + 1))?;
        method = parts[1].to_string();
        rows.push((idx, score));
    }
    let n = rows.len();
    let mut scores = vec![f64::NAN; n];
    for (idx, s) in rows {
        if idx >= n || !scores[idx].is_nan() {
            return Err(format!("instance index {idx} repeated or out of range"));
        }
        scores[idx] = s;
    }
    Ok((method, scores))
}

pub fn rho_to_csv(rho: &RhoMatrix, comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    for row in rho.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn rho_from_csv(text: &str) -> std::result::Result<RhoMatrix, String> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("line {}: non-numeric entry", i + 1))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => return Err(format!("line {}: expected {w} entries", i + 1)),
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let w = width.ok_or("no rows")?;
    let arr = Array2::from_shape_vec((rows, w), values).map_err(|e| e.to_string())?;
    RhoMatrix::new(arr).map_err(|e| e.to_string())
}
