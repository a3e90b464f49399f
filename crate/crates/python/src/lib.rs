//! Python bindings: the online change-point detector, the evaluation
//! metrics, and the synthetic fixture generator.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::collections::BTreeMap;

use alacpd_core::data::{
    generate_synthetic as core_generate, standardize, FitRange, SegmentSpec, SpikeSpec,
    SyntheticSpec, TimeSeries,
};
use alacpd_core::detector::{run, DetectorState, EnsembleConfig, StepOutcome};
use alacpd_core::metrics::{
    covering as core_covering, f1_score as core_f1, AnnotationSet, MatchConfig,
};
use alacpd_core::ndcore::Matrix;
use alacpd_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Training(msg) => PyRuntimeError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_from_rows(values: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let n = values.len();
    let d = values.first().map(|r| r.len()).unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(PyValueError::new_err("values must be a non-empty n x D list"));
    }
    let mut flat = Vec::with_capacity(n * d);
    for (i, row) in values.iter().enumerate() {
        if row.len() != d {
            return Err(PyValueError::new_err(format!(
                "row {i} has {} values, expected {d}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Matrix::from_vec(n, d, flat).map_err(to_py_err)
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    n: usize,
    n_init: Option<usize>,
    window: Option<usize>,
    hidden: Option<usize>,
    skip_sizes: Option<Vec<usize>>,
    horizon: Option<usize>,
    threshold_coeff: Option<f64>,
    vote_fraction: Option<f64>,
    n_cpd: Option<usize>,
    e_init: Option<usize>,
    e_train: Option<usize>,
    e_reinit: Option<usize>,
    learning_rate: Option<f64>,
    use_ae: bool,
    use_ar: bool,
) -> PyResult<EnsembleConfig> {
    let n_init = n_init.unwrap_or_else(|| ((n as f64) * 0.10).round() as usize);
    let mut cfg = EnsembleConfig::published_defaults(n_init);
    if let Some(v) = window {
        cfg.window = v;
    }
    if let Some(v) = hidden {
        cfg.hidden = v;
    }
    if let Some(v) = skip_sizes {
        cfg.ensemble = v.len();
        cfg.skip_sizes = v;
    }
    if let Some(v) = horizon {
        cfg.horizon = v;
    }
    if let Some(v) = threshold_coeff {
        cfg.threshold_coeff = v;
    }
    if let Some(v) = vote_fraction {
        cfg.vote_fraction = v;
    }
    if let Some(v) = n_cpd {
        cfg.n_cpd = v;
    }
    if let Some(v) = e_init {
        cfg.e_init = v;
    }
    if let Some(v) = e_train {
        cfg.e_train = v;
    }
    if let Some(v) = e_reinit {
        cfg.e_reinit = v;
    }
    if let Some(v) = learning_rate {
        cfg.learning_rate = v;
    }
    cfg.use_ae = use_ae;
    cfg.use_ar = use_ar;
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

fn apply_standardize(series: &TimeSeries, mode: &str, n_init: usize) -> PyResult<TimeSeries> {
    match mode {
        "prefix" => Ok(standardize(series, FitRange::Prefix(n_init)).map_err(to_py_err)?.0),
        "full" => Ok(standardize(series, FitRange::Full).map_err(to_py_err)?.0),
        "none" => Ok(series.clone()),
        other => Err(PyValueError::new_err(format!(
            "unknown standardize mode '{other}' (expected prefix|full|none)"
        ))),
    }
}

/// Run the full detection pipeline over an n x D series.
///
/// Returns a dict with `change_points`, `flags` (one 0/1 per classified
/// step), `n_init`, `variant`, and `losses` when `trace` is set.
#[pyfunction]
#[pyo3(signature = (values, *, seed = 0, n_init = None, standardize = "prefix",
       window = None, hidden = None, skip_sizes = None, horizon = None,
       threshold_coeff = None, vote_fraction = None, n_cpd = None,
       e_init = None, e_train = None, e_reinit = None, learning_rate = None,
       use_ae = true, use_ar = true, trace = false, name = "series"))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    values: Vec<Vec<f64>>,
    seed: u64,
    n_init: Option<usize>,
    standardize: &str,
    window: Option<usize>,
    hidden: Option<usize>,
    skip_sizes: Option<Vec<usize>>,
    horizon: Option<usize>,
    threshold_coeff: Option<f64>,
    vote_fraction: Option<f64>,
    n_cpd: Option<usize>,
    e_init: Option<usize>,
    e_train: Option<usize>,
    e_reinit: Option<usize>,
    learning_rate: Option<f64>,
    use_ae: bool,
    use_ar: bool,
    trace: bool,
    name: &str,
) -> PyResult<Py<PyDict>> {
    let matrix = matrix_from_rows(values)?;
    let n = matrix.rows();
    let cfg = build_config(
        n, n_init, window, hidden, skip_sizes, horizon, threshold_coeff, vote_fraction, n_cpd,
        e_init, e_train, e_reinit, learning_rate, use_ae, use_ar,
    )?;
    let series = TimeSeries::new(name, matrix).map_err(to_py_err)?;
    let input = apply_standardize(&series, standardize, cfg.n_init)?;
    let report = py
        .detach(|| run(&input, &cfg, seed, trace))
        .map_err(to_py_err)?;

    let out = PyDict::new(py);
    out.set_item("dataset", report.dataset)?;
    out.set_item("seed", report.seed)?;
    out.set_item("n_init", report.n_init)?;
    out.set_item("variant", report.variant)?;
    out.set_item("change_points", report.change_points)?;
    out.set_item("flags", report.flags)?;
    if let Some(losses) = report.losses {
        out.set_item("losses", losses)?;
    }
    Ok(out.into())
}

/// Streaming detector: initialize on a change-point-free prefix, then feed
/// one observation at a time.
#[pyclass]
struct OnlineDetector {
    state: DetectorState,
}

#[pymethods]
impl OnlineDetector {
    /// `prefix` is an n_init x D list of observations used for the offline
    /// initialization phase.
    #[new]
    #[pyo3(signature = (prefix, *, seed = 0, window = None, hidden = None,
           skip_sizes = None, horizon = None, threshold_coeff = None,
           vote_fraction = None, n_cpd = None, e_init = None, e_train = None,
           e_reinit = None, learning_rate = None, use_ae = true, use_ar = true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        prefix: Vec<Vec<f64>>,
        seed: u64,
        window: Option<usize>,
        hidden: Option<usize>,
        skip_sizes: Option<Vec<usize>>,
        horizon: Option<usize>,
        threshold_coeff: Option<f64>,
        vote_fraction: Option<f64>,
        n_cpd: Option<usize>,
        e_init: Option<usize>,
        e_train: Option<usize>,
        e_reinit: Option<usize>,
        learning_rate: Option<f64>,
        use_ae: bool,
        use_ar: bool,
    ) -> PyResult<Self> {
        let matrix = matrix_from_rows(prefix)?;
        let cfg = build_config(
            matrix.rows(),
            Some(matrix.rows()),
            window,
            hidden,
            skip_sizes,
            horizon,
            threshold_coeff,
            vote_fraction,
            n_cpd,
            e_init,
            e_train,
            e_reinit,
            learning_rate,
            use_ae,
            use_ar,
        )?;
        let state = py
            .detach(|| DetectorState::initialize(&matrix, &cfg, seed))
            .map_err(to_py_err)?;
        Ok(OnlineDetector { state })
    }

    /// Feed the next observation. Returns `"normal"`, `"anomalous"`, or the
    /// detected change-point index.
    fn step(&mut self, py: Python<'_>, x: Vec<f64>) -> PyResult<Py<PyAny>> {
        let outcome = py
            .detach(|| self.state.step(&x))
            .map_err(to_py_err)?;
        let obj = match outcome {
            StepOutcome::Normal => "normal".into_pyobject(py)?.into_any().unbind(),
            StepOutcome::Anomalous => "anomalous".into_pyobject(py)?.into_any().unbind(),
            StepOutcome::ChangePointDetected(cp) => cp.into_pyobject(py)?.into_any().unbind(),
        };
        Ok(obj)
    }

    /// All change-points detected so far.
    fn change_points(&self) -> Vec<usize> {
        self.state.change_points().to_vec()
    }

    /// Current per-member thresholds.
    fn thresholds(&self) -> Vec<f64> {
        self.state.thresholds()
    }

    /// Absolute index of the next expected observation.
    fn clock(&self) -> usize {
        self.state.clock()
    }

    /// Peak number of raw windows retained at any point (memory contract).
    fn max_retained_windows(&self) -> usize {
        self.state.max_retained_windows()
    }
}

fn annotation_set_from_dict(annotations: BTreeMap<String, Vec<usize>>) -> PyResult<AnnotationSet> {
    AnnotationSet::new(annotations.into_values().collect()).map_err(to_py_err)
}

/// Segmentation covering of `predicted` against per-annotator ground truth
/// (a dict mapping annotator ids to change-point index lists).
#[pyfunction]
fn covering(
    predicted: Vec<usize>,
    annotations: BTreeMap<String, Vec<usize>>,
    n: usize,
) -> PyResult<f64> {
    let truth = annotation_set_from_dict(annotations)?;
    core_covering(&predicted, &truth, n).map_err(to_py_err)
}

/// Margin-matched (f1, precision, recall) of `predicted` against
/// per-annotator ground truth.
#[pyfunction]
#[pyo3(signature = (predicted, annotations, *, margin = 5, trivial_start = true))]
fn f1_score(
    predicted: Vec<usize>,
    annotations: BTreeMap<String, Vec<usize>>,
    margin: usize,
    trivial_start: bool,
) -> PyResult<(f64, f64, f64)> {
    let truth = annotation_set_from_dict(annotations)?;
    let cfg = MatchConfig {
        margin,
        include_trivial_start: trivial_start,
    };
    let r = core_f1(&predicted, &truth, &cfg).map_err(to_py_err)?;
    Ok((r.f1, r.precision, r.recall))
}

/// Generate a piecewise-stationary series. `segments` is a list of
/// `(length, means, std, ar1)` tuples; `spikes` a list of
/// `(index, magnitude)`. Returns `(values, true_change_points)`.
#[pyfunction]
#[pyo3(signature = (segments, *, dims = 1, seed = 0, spikes = None, name = "synthetic"))]
fn generate_synthetic(
    py: Python<'_>,
    segments: Vec<(usize, Vec<f64>, f64, f64)>,
    dims: usize,
    seed: u64,
    spikes: Option<Vec<(usize, f64)>>,
    name: &str,
) -> PyResult<(Py<PyList>, Vec<usize>)> {
    let spec = SyntheticSpec {
        name: name.to_string(),
        dims,
        segments: segments
            .into_iter()
            .map(|(len, means, std, ar1)| SegmentSpec { len, means, std, ar1 })
            .collect(),
        spikes: spikes
            .unwrap_or_default()
            .into_iter()
            .map(|(index, magnitude)| SpikeSpec { index, magnitude })
            .collect(),
        seed,
    };
    let (series, truth) = core_generate(&spec).map_err(to_py_err)?;
    let rows = PyList::empty(py);
    for t in 0..series.len() {
        rows.append(series.row(t).to_vec())?;
    }
    Ok((rows.into(), truth))
}

/// Verify analytic gradients against central finite differences on a small
/// network; returns the max relative error.
#[pyfunction]
#[pyo3(signature = (*, hidden = 4, window = 3, dims = 2, skip = 1, seed = 0))]
fn gradcheck(hidden: usize, window: usize, dims: usize, skip: usize, seed: u64) -> PyResult<f64> {
    alacpd_core::cli::gradcheck_case(hidden, window, dims, skip, seed).map_err(to_py_err)
}

#[pymodule]
fn alacpd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(covering, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_class::<OnlineDetector>()?;
    Ok(())
}
