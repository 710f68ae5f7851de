//! Multi-label datasets: CSV ingestion, input standardization, and simulated
//! conditional outliers (output bit flips with a ground-truth log).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{McodeError, Result};

/// Identifier of the generator behind every seeded draw in this crate.
pub const RNG_ALGORITHM: &str = "chacha20";

pub(crate) fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// N instances with an m-dimensional real context `x` and a d-dimensional
/// binary response `y`. Rows of `x` and `y` are index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array2<u8>,
    input_names: Vec<String>,
    output_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Array2<u8>,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = x.dim();
        let (ny, d) = y.dim();
        if n == 0 || m == 0 || d == 0 {
            return Err(McodeError::Domain(format!(
                "dataset needs N, m, d >= 1 (got N={n}, m={m}, d={d})"
            )));
        }
        if ny != n {
            return Err(McodeError::Domain(format!(
                "input has {n} rows but output has {ny}"
            )));
        }
        if input_names.len() != m || output_names.len() != d {
            return Err(McodeError::Domain(format!(
                "expected {m} input and {d} output names, got {} and {}",
                input_names.len(),
                output_names.len()
            )));
        }
        if let Some(((r, c), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(McodeError::Domain(format!(
                "non-finite input {v} at row {r}, column {c}"
            )));
        }
        if let Some(((r, c), v)) = y.indexed_iter().find(|(_, v)| **v > 1) {
            return Err(McodeError::Domain(format!(
                "output value {v} at row {r}, column {c} is not 0/1"
            )));
        }
        Ok(Self {
            x,
            y,
            input_names,
            output_names,
        })
    }

    /// Builds a dataset with generated column names `x1..xm`, `y1..yd`.
    pub fn from_arrays(x: Array2<f64>, y: Array2<u8>) -> Result<Self> {
        let inputs = (1..=x.ncols()).map(|i| format!("x{i}")).collect();
        let outputs = (1..=y.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(x, y, inputs, outputs)
    }

    pub fn n_instances(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, u8> {
        self.y.view()
    }

    pub fn x_row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.x.row(n)
    }

    pub fn y_row(&self, n: usize) -> ArrayView1<'_, u8> {
        self.y.row(n)
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    /// Same instances with a different input matrix (used after standardization).
    fn with_x(&self, x: Array2<f64>) -> Self {
        Self {
            x,
            y: self.y.clone(),
            input_names: self.input_names.clone(),
            output_names: self.output_names.clone(),
        }
    }

    /// Returns a copy with each listed output cell replaced by `1 - y`.
    pub fn flip_cells(&self, cells: &[(usize, usize)]) -> Result<Self> {
        let mut y = self.y.clone();
        for &(r, c) in cells {
            let cell = y.get_mut((r, c)).ok_or_else(|| {
                McodeError::Domain(format!("cell ({r}, {c}) outside the output matrix"))
            })?;
            *cell = 1 - *cell;
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_instances()) {
            return Err(McodeError::Domain(format!("row {bad} out of range")));
        }
        Self::new(
            self.x.select(Axis(0), rows),
            self.y.select(Axis(0), rows),
            self.input_names.clone(),
            self.output_names.clone(),
        )
    }

    /// Instances as rows of `[x, y]` (y cast to 0.0/1.0).
    pub fn joint_points(&self) -> Array2<f64> {
        let (n, m) = self.x.dim();
        let d = self.y.ncols();
        Array2::from_shape_fn((n, m + d), |(r, c)| {
            if c < m {
                self.x[[r, c]]
            } else {
                f64::from(self.y[[r, c - m]])
            }
        })
    }
}

/// Per-column location and scale of the input matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl StandardizationStats {
    /// Population (1/N) statistics. Constant columns keep their value as the
    /// mean and get a unit scale, so they map to exactly zero.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut std_devs = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                means.push(first);
                std_devs.push(1.0);
                continue;
            }
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(mean);
            std_devs.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { means, std_devs }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        Ok(Array2::from_shape_fn(x.dim(), |(r, c)| {
            (x[[r, c]] - self.means[c]) / self.std_devs[c]
        }))
    }

    pub fn invert(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(z.ncols())?;
        Ok(Array2::from_shape_fn(z.dim(), |(r, c)| {
            z[[r, c]] * self.std_devs[c] + self.means[c]
        }))
    }

    /// Standardizes a single input row into `out`.
    pub(crate) fn apply_row(&self, row: ArrayView1<'_, f64>, out: &mut [f64]) {
        for (c, (o, v)) in out.iter_mut().zip(row.iter()).enumerate() {
            *o = (v - self.means[c]) / self.std_devs[c];
        }
    }

    fn check_width(&self, m: usize) -> Result<()> {
        if m != self.dim() {
            return Err(McodeError::Domain(format!(
                "statistics cover {} columns, matrix has {m}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Standardizes the input columns; outputs are untouched.
pub fn standardize(ds: &Dataset) -> (Dataset, StandardizationStats) {
    let stats = StandardizationStats::fit(ds.x());
    let x = stats
        .apply(ds.x())
        .expect("statistics were fitted on this matrix");
    (ds.with_x(x), stats)
}

/// Ground truth of one outlier-injection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationLog {
    pub rng: String,
    pub seed: u64,
    pub ratio: f64,
    pub dim_fraction: f64,
    /// Ascending row indices of the injected outliers.
    pub outlier_rows: Vec<usize>,
    /// `(row, output dimension)` pairs that were flipped, ordered by row.
    pub flipped_cells: Vec<(usize, usize)>,
}

impl PerturbationLog {
    pub fn is_outlier(&self, row: usize) -> bool {
        self.outlier_rows.binary_search(&row).is_ok()
    }

    /// Membership mask over `n` instances.
    pub fn outlier_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &r in &self.outlier_rows {
            if r < n {
                mask[r] = true;
            }
        }
        mask
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// `max(1, round(fraction * total))`.
pub fn rounded_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).max(1)
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(McodeError::Domain(format!("{name} must lie in (0, 1], got {v}")));
    }
    Ok(())
}

/// Picks `max(1, round(ratio*N))` rows uniformly without replacement and, in
/// each, flips `max(1, round(dim_fraction*d))` distinct output cells chosen
/// uniformly. The input matrix is untouched.
pub fn inject_outliers(
    ds: &Dataset,
    ratio: f64,
    dim_fraction: f64,
    seed: u64,
) -> Result<(Dataset, PerturbationLog)> {
    check_unit_interval("ratio", ratio)?;
    check_unit_interval("dim_fraction", dim_fraction)?;
    let n = ds.n_instances();
    let d = ds.n_outputs();
    let n_rows = rounded_count(ratio, n).min(n);
    let n_dims = rounded_count(dim_fraction, d);
    if n_dims > d {
        return Err(McodeError::Domain(format!(
            "cannot flip {n_dims} of {d} output dimensions"
        )));
    }

    let mut rng = seeded_rng(seed);
    let mut rows = index::sample(&mut rng, n, n_rows).into_vec();
    rows.sort_unstable();

    let mut cells = Vec::with_capacity(n_rows * n_dims);
    for &r in &rows {
        let mut dims = index::sample(&mut rng, d, n_dims).into_vec();
        dims.sort_unstable();
        cells.extend(dims.into_iter().map(|c| (r, c)));
    }

    let perturbed = ds.flip_cells(&cells)?;
    let log = PerturbationLog {
        rng: RNG_ALGORITHM.to_string(),
        seed,
        ratio,
        dim_fraction,
        outlier_rows: rows,
        flipped_cells: cells,
    };
    Ok((perturbed, log))
}

/// Reads a CSV file whose trailing `n_outputs` columns hold the 0/1 outputs.
/// A leading header row is detected when any of its fields is non-numeric;
/// lines starting with `#` are comments.
pub fn load_csv(path: impl AsRef<Path>, n_outputs: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| McodeError::io(path, e))?;
    read_csv(file, n_outputs)
}

pub fn read_csv<R: Read>(reader: R, n_outputs: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<u8> = Vec::new();
    let mut n_rows = 0usize;

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            McodeError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let cols = match width {
            Some(w) => w,
            None => {
                let w = rec.len();
                if n_outputs == 0 {
                    return Err(McodeError::Config("n_outputs must be at least 1".into()));
                }
                if n_outputs >= w {
                    return Err(McodeError::Config(format!(
                        "n_outputs = {n_outputs} leaves no input columns in a {w}-column file"
                    )));
                }
                width = Some(w);
                if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
                    header = Some(rec.iter().map(str::to_string).collect());
                    continue;
                }
                w
            }
        };
        if rec.len() != cols {
            return Err(McodeError::Parse {
                line,
                message: format!("expected {cols} fields, found {}", rec.len()),
            });
        }
        let m = cols - n_outputs;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| McodeError::Parse {
                line,
                message: format!("field {} is not numeric: {field:?}", c + 1),
            })?;
            if c < m {
                if !v.is_finite() {
                    return Err(McodeError::Domain(format!(
                        "line {line}: non-finite input value in field {}",
                        c + 1
                    )));
                }
                xs.push(v);
            } else if v == 0.0 || v == 1.0 {
                ys.push(v as u8);
            } else {
                return Err(McodeError::Domain(format!(
                    "line {line}: output field {} is {field}, expected 0 or 1",
                    c + 1
                )));
            }
        }
        n_rows += 1;
    }

    let cols = width.ok_or_else(|| McodeError::Domain("no data rows".into()))?;
    if n_rows == 0 {
        return Err(McodeError::Domain("no data rows".into()));
    }
    let m = cols - n_outputs;
    let x = Array2::from_shape_vec((n_rows, m), xs).expect("row-major input buffer");
    let y = Array2::from_shape_vec((n_rows, n_outputs), ys).expect("row-major output buffer");
    match header {
        Some(names) => {
            let (inputs, outputs) = names.split_at(m);
            Dataset::new(x, y, inputs.to_vec(), outputs.to_vec())
        }
        None => Dataset::from_arrays(x, y),
    }
}

/// Writes the dataset in the format read by [`load_csv`], with an optional
/// comment block (each line prefixed by `# `) and a header row.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| McodeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w, comment).map_err(|e| McodeError::io(path, e))?;
    w.flush().map_err(|e| McodeError::io(path, e))
}

pub fn write_csv<W: Write>(ds: &Dataset, w: &mut W, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(text) = comment {
        for line in text.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let names: Vec<&str> = ds
        .input_names
        .iter()
        .chain(ds.output_names.iter())
        .map(String::as_str)
        .collect();
    writeln!(w, "{}", names.join(","))?;
    let mut line = String::new();
    for n in 0..ds.n_instances() {
        line.clear();
        for v in ds.x.row(n) {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        for v in ds.y.row(n) {
            line.push(',');
            line.push(if *v == 1 { '1' } else { '0' });
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        let x = Array2::from_shape_fn((10, 2), |(r, c)| (r * 3 + c) as f64 * 0.5);
        let y = Array2::from_shape_fn((10, 8), |(r, c)| ((r + c) % 3 == 0) as u8);
        Dataset::from_arrays(x, y).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let text = "x1,x2,y1\n1.0,2.0,0\n3,4,1\n5,6,1\n";
        let ds = read_csv(text.as_bytes(), 1).unwrap();
        assert_eq!(
            (ds.n_instances(), ds.n_inputs(), ds.n_outputs()),
            (3, 2, 1)
        );
        assert_eq!(ds.x()[[1, 0]], 3.0);
        assert_eq!(ds.y()[[0, 0]], 0);
        assert_eq!(ds.input_names(), ["x1", "x2"]);
    }

    #[test]
    fn missing_field_cites_line() {
        let text = "1,2,0\n3,1\n5,6,1\n";
        match read_csv(text.as_bytes(), 1) {
            Err(McodeError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_is_parse_error() {
        let text = "a,b,y\n1,2,0\n3,zz,1\n";
        match read_csv(text.as_bytes(), 1) {
            Err(McodeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_binary_output_is_domain_error() {
        let err = read_csv("1,2,0\n3,4,2\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, McodeError::Domain(_)), "{err:?}");
    }

    #[test]
    fn too_many_outputs_is_config_error() {
        let err = read_csv("1,2,0\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, McodeError::Config(_)), "{err:?}");
        let err = read_csv("1,2,0\n".as_bytes(), 0).unwrap_err();
        assert!(matches!(err, McodeError::Config(_)), "{err:?}");
    }

    #[test]
    fn standardize_uses_population_std() {
        let ds = Dataset::from_arrays(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], array![[0], [1], [0]])
            .unwrap();
        let (z, stats) = standardize(&ds);
        let s = 1.5f64.sqrt(); // 1 / sqrt(2/3)
        for (got, want) in z.x().column(0).iter().zip([-s, 0.0, s]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((z.x()[[0, 0]] + 1.2247).abs() < 1e-4);
        assert!(z.x().column(1).iter().all(|&v| v == 0.0));
        assert_eq!(stats.std_devs[1], 1.0);
        assert_eq!(z.y(), ds.y());
    }

    #[test]
    fn standardize_inverts() {
        let ds = toy();
        let (z, stats) = standardize(&ds);
        let back = stats.invert(z.x()).unwrap();
        for (a, b) in back.iter().zip(ds.x().iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn flips_expected_dimension_count() {
        let (p, log) = inject_outliers(&toy(), 0.2, 0.25, 7).unwrap();
        assert_eq!(log.outlier_rows.len(), 2);
        for &r in &log.outlier_rows {
            let flips: Vec<_> = log.flipped_cells.iter().filter(|c| c.0 == r).collect();
            assert_eq!(flips.len(), 2);
        }
        assert_eq!(p.x(), toy().x());
        assert_eq!(log.rng, RNG_ALGORITHM);
    }

    #[test]
    fn injection_is_deterministic_and_involutive() {
        let ds = toy();
        let (a, la) = inject_outliers(&ds, 0.3, 0.5, 11).unwrap();
        let (b, lb) = inject_outliers(&ds, 0.3, 0.5, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(a.flip_cells(&la.flipped_cells).unwrap(), ds);
    }

    #[test]
    fn injection_rejects_bad_fractions() {
        let ds = toy();
        for (r, f) in [(0.0, 0.5), (1.5, 0.5), (0.1, 2.0), (0.1, -0.1)] {
            assert!(matches!(
                inject_outliers(&ds, r, f, 1),
                Err(McodeError::Domain(_))
            ));
        }
    }

    #[test]
    fn perturbation_log_json_round_trip() {
        let (_, log) = inject_outliers(&toy(), 0.2, 0.25, 3).unwrap();
        let back = PerturbationLog::from_json(&log.to_json()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::from_arrays(Array2::zeros((0, 2)), Array2::zeros((0, 1))).is_err());
        assert!(Dataset::from_arrays(Array2::zeros((2, 2)), Array2::zeros((3, 1))).is_err());
        assert!(Dataset::from_arrays(array![[f64::NAN]], array![[0]]).is_err());
        assert!(Dataset::from_arrays(array![[1.0]], array![[2]]).is_err());
    }
}
