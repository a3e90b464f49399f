//! Data ingestion (benchmark JSON and CSV), per-dimension standardization,
//! sliding-window iteration, and a seeded piecewise-stationary synthetic
//! generator for tests and end-to-end runs.
//!
//! Indices are 0-based everywhere: in code, in emitted files, and in
//! annotation files read back for evaluation.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// A fully-loaded multivariate series: `n` rows of dimension `dims`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub name: String,
    values: Matrix,
    time: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::invalid_input("series must have n > 0 and D >= 1"));
        }
        if !values.is_finite() {
            return Err(Error::invalid_input("series contains non-finite values"));
        }
        Ok(TimeSeries {
            name: name.into(),
            values,
            time: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn time_labels(&self) -> Option<&[String]> {
        self.time.as_deref()
    }
}

/// A borrowed `w × D` slice of a series, ending at index `end`.
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    pub end: usize,
    dims: usize,
    data: &'a [f64],
}

impl<'a> WindowView<'a> {
    pub fn window(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    pub fn row(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.dims..(j + 1) * self.dims]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.window(), self.dims, self.data.to_vec()).unwrap()
    }
}

/// All length-`w` windows of the series, stride 1, end indices `w−1 … n−1`.
pub fn windows(series: &TimeSeries, w: usize) -> Result<impl Iterator<Item = WindowView<'_>>> {
    let n = series.len();
    if w == 0 || n < w {
        return Err(Error::invalid_input(format!(
            "series of length {n} cannot produce windows of length {w}"
        )));
    }
    let dims = series.dims();
    let values = &series.values;
    Ok((w - 1..n).map(move |end| WindowView {
        end,
        dims,
        data: &values.data()[(end + 1 - w) * dims..(end + 1) * dims],
    }))
}

/// Which rows the standardization statistics are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitRange {
    /// Only the first `len` rows: the honest online setting.
    Prefix(usize),
    /// The whole series: benchmark-comparable, but peeks at the future.
    Full,
}

/// Per-dimension affine transform `(x − mean) / std` with population std.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub fit_range: FitRange,
    /// Dimensions that were constant on the fit range (std forced to 1).
    pub constant_dims: Vec<usize>,
}

impl Standardizer {
    pub fn fit(series: &TimeSeries, fit_range: FitRange) -> Result<Self> {
        let rows = match fit_range {
            FitRange::Prefix(len) => {
                if len == 0 || len > series.len() {
                    return Err(Error::invalid_input(format!(
                        "fit prefix {len} out of range for series of length {}",
                        series.len()
                    )));
                }
                len
            }
            FitRange::Full => series.len(),
        };
        let d = series.dims();
        let mut means = vec![0.0; d];
        for t in 0..rows {
            for (m, &v) in means.iter_mut().zip(series.row(t)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= rows as f64;
        }
        let mut vars = vec![0.0; d];
        for t in 0..rows {
            for (k, &v) in series.row(t).iter().enumerate() {
                let e = v - means[k];
                vars[k] += e * e;
            }
        }
        let mut constant_dims = Vec::new();
        let stds = vars
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let s = (v / rows as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    constant_dims.push(k);
                    1.0
                }
            })
            .collect();
        if !constant_dims.is_empty() {
            eprintln!(
                "warning: dimensions {constant_dims:?} are constant on the fit range; std set to 1"
            );
        }
        Ok(Standardizer {
            means,
            stds,
            fit_range,
            constant_dims,
        })
    }

    pub fn transform(&self, series: &TimeSeries) -> Result<TimeSeries> {
        let d = series.dims();
        if d != self.means.len() {
            return Err(Error::dim("standardizer dimensionality mismatch"));
        }
        let mut values = series.values.clone();
        for t in 0..series.len() {
            let row = &mut values.data_mut()[t * d..(t + 1) * d];
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[k]) / self.stds[k];
            }
        }
        let mut out = TimeSeries::new(series.name.clone(), values)?;
        out.time = series.time.clone();
        Ok(out)
    }

    pub fn inverse_transform(&self, series: &TimeSeries) -> Result<TimeSeries> {
        let d = series.dims();
        if d != self.means.len() {
            return Err(Error::dim("standardizer dimensionality mismatch"));
        }
        let mut values = series.values.clone();
        for t in 0..series.len() {
            let row = &mut values.data_mut()[t * d..(t + 1) * d];
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * self.stds[k] + self.means[k];
            }
        }
        let mut out = TimeSeries::new(series.name.clone(), values)?;
        out.time = series.time.clone();
        Ok(out)
    }
}

/// Standardize a series; returns the transformed copy and the fitted stats.
pub fn standardize(series: &TimeSeries, fit_range: FitRange) -> Result<(TimeSeries, Standardizer)> {
    let stdzr = Standardizer::fit(series, fit_range)?;
    let transformed = stdzr.transform(series)?;
    Ok((transformed, stdzr))
}

// ---------------------------------------------------------------------------
// Benchmark JSON / CSV ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct BenchmarkFile {
    name: String,
    n_obs: usize,
    n_dim: usize,
    #[serde(default)]
    time: Option<BenchmarkTime>,
    series: Vec<BenchmarkColumn>,
}

#[derive(Debug, Deserialize)]
struct BenchmarkTime {
    #[serde(default)]
    raw: Option<Vec<serde_json::Value>>,
}

#[derive(Debug, Deserialize)]
struct BenchmarkColumn {
    label: String,
    #[serde(rename = "type", default)]
    _kind: Option<String>,
    raw: Vec<serde_json::Value>,
}

/// Load a dataset in the benchmark JSON schema:
/// `{"name", "n_obs", "n_dim", "time": {...}, "series": [{"label", "type", "raw": [...]}]}`.
///
/// Missing values (`null`) are a hard error unless `forward_fill` is set, in
/// which case each is replaced by the last seen value of that dimension.
pub fn load_benchmark_json(path: impl AsRef<Path>, forward_fill: bool) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let file: BenchmarkFile = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    if file.series.len() != file.n_dim {
        return Err(Error::parse(
            format!("{}: n_dim", path.display()),
            format!("declared {} dimensions, found {}", file.n_dim, file.series.len()),
        ));
    }
    let n = file.n_obs;
    let d = file.n_dim;
    let mut values = Matrix::zeros(n, d);
    for (k, column) in file.series.iter().enumerate() {
        if column.raw.len() != n {
            return Err(Error::parse(
                format!("{}: series '{}'", path.display(), column.label),
                format!("n_obs is {n} but raw has {} values", column.raw.len()),
            ));
        }
        let mut last: Option<f64> = None;
        for (t, cell) in column.raw.iter().enumerate() {
            let v = match cell {
                serde_json::Value::Number(num) => num.as_f64().ok_or_else(|| {
                    Error::parse(
                        format!("{}: series '{}'", path.display(), column.label),
                        format!("value at index {t} is not representable as f64"),
                    )
                })?,
                serde_json::Value::Null => match (forward_fill, last) {
                    (true, Some(prev)) => prev,
                    _ => {
                        return Err(Error::parse(
                            format!("{}: series '{}'", path.display(), column.label),
                            format!("missing value at index {t}"),
                        ))
                    }
                },
                other => {
                    return Err(Error::parse(
                        format!("{}: series '{}'", path.display(), column.label),
                        format!("non-numeric value at index {t}: {other}"),
                    ))
                }
            };
            last = Some(v);
            values.set(t, k, v);
        }
    }
    let mut series = TimeSeries::new(file.name, values)?;
    series.time = file.time.and_then(|t| t.raw).map(|raw| {
        raw.into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect()
    });
    Ok(series)
}

/// CSV fallback: header row of dimension names, one row per time step.
pub fn load_csv(path: impl AsRef<Path>, forward_fill: bool) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let d = header.split(',').count();
    let mut data: Vec<f64> = Vec::new();
    let mut last: Vec<Option<f64>> = vec![None; d];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(Error::parse(
                format!("{}: line {}", path.display(), lineno + 2),
                format!("expected {d} fields, found {}", fields.len()),
            ));
        }
        for (k, field) in fields.iter().enumerate() {
            let trimmed = field.trim();
            let v = if trimmed.is_empty() {
                match (forward_fill, last[k]) {
                    (true, Some(prev)) => prev,
                    _ => {
                        return Err(Error::parse(
                            format!("{}: line {}", path.display(), lineno + 2),
                            format!("missing value in column {k}"),
                        ))
                    }
                }
            } else {
                trimmed.parse::<f64>().map_err(|e| {
                    Error::parse(
                        format!("{}: line {}", path.display(), lineno + 2),
                        format!("column {k}: {e}"),
                    )
                })?
            };
            last[k] = Some(v);
            data.push(v);
        }
    }
    let n = data.len() / d;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    TimeSeries::new(name, Matrix::from_vec(n, d, data)?)
}

/// Load either format based on the file extension (`.json` vs anything else).
pub fn load_dataset(path: impl AsRef<Path>, forward_fill: bool) -> Result<TimeSeries> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_benchmark_json(path, forward_fill),
        _ => load_csv(path, forward_fill),
    }
}

/// Serialize a series in the benchmark JSON schema so generated fixtures can
/// be read back by `load_benchmark_json`.
pub fn to_benchmark_json(series: &TimeSeries) -> serde_json::Value {
    let n = series.len();
    let d = series.dims();
    let columns: Vec<serde_json::Value> = (0..d)
        .map(|k| {
            let raw: Vec<f64> = (0..n).map(|t| series.values.get(t, k)).collect();
            serde_json::json!({"label": format!("dim{k}"), "type": "float", "raw": raw})
        })
        .collect();
    serde_json::json!({
        "name": series.name,
        "n_obs": n,
        "n_dim": d,
        "time": {"index": (0..n).collect::<Vec<usize>>()},
        "series": columns,
    })
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

/// One stationary segment of a synthetic series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub len: usize,
    /// Per-dimension mean.
    pub means: Vec<f64>,
    pub std: f64,
    /// AR(1) coefficient of the noise process, in (−1, 1).
    pub ar1: f64,
}

/// A point anomaly added on top of the generated series (all dimensions).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpikeSpec {
    pub index: usize,
    pub magnitude: f64,
}

/// Deterministic piecewise-stationary generator description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub dims: usize,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub spikes: Vec<SpikeSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::config("dims must be >= 1"));
        }
        if self.segments.is_empty() {
            return Err(Error::config("at least one segment required"));
        }
        let n: usize = self.segments.iter().map(|s| s.len).sum();
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.len < 2 {
                return Err(Error::config(format!("segment {i} too short")));
            }
            if seg.means.len() != self.dims {
                return Err(Error::config(format!(
                    "segment {i} has {} means for {} dimensions",
                    seg.means.len(),
                    self.dims
                )));
            }
            if seg.std.is_nan() || seg.std <= 0.0 {
                return Err(Error::config(format!("segment {i} std must be positive")));
            }
            if seg.ar1.abs() >= 1.0 {
                return Err(Error::config(format!("segment {i} ar1 must be in (-1,1)")));
            }
        }
        for spike in &self.spikes {
            if spike.index >= n {
                return Err(Error::config(format!(
                    "spike index {} out of range for length {n}",
                    spike.index
                )));
            }
        }
        Ok(())
    }
}

/// Generate the series described by `spec` together with the true
/// change-point indices (the first index of each new segment).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(TimeSeries, Vec<usize>)> {
    spec.validate()?;
    let n: usize = spec.segments.iter().map(|s| s.len).sum();
    let d = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Matrix::zeros(n, d);
    let mut truth = Vec::new();
    let mut t = 0;
    for (si, seg) in spec.segments.iter().enumerate() {
        if si > 0 {
            truth.push(t);
        }
        // Stationary AR(1) noise: latent z with Var(z) = std^2.
        let innovation = seg.std * (1.0 - seg.ar1 * seg.ar1).sqrt();
        let mut z = vec![0.0; d];
        for zk in z.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *zk = seg.std * e;
        }
        for _ in 0..seg.len {
            for (k, zk) in z.iter_mut().enumerate() {
                values.set(t, k, seg.means[k] + *zk);
                let e: f64 = rng.sample(StandardNormal);
                *zk = seg.ar1 * *zk + innovation * e;
            }
            t += 1;
        }
    }
    for spike in &spec.spikes {
        for k in 0..d {
            let v = values.get(spike.index, k);
            values.set(spike.index, k, v + spike.magnitude);
        }
    }
    let series = TimeSeries::new(spec.name.clone(), values)?;
    Ok((series, truth))
}
