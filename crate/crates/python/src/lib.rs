//! Python bindings: boxes, the box generator, the tracker, attacks on
//! sequences, metrics and the gradient check.
//!
//! Images cross the boundary as nested lists of rows (grayscale, 0..255).

use abbg_core::data::{self, SuiteConfig};
use abbg_core::geometry::{self, BoxGenConfig};
use abbg_core::gradcheck::{run_gradcheck, GradcheckConfig};
use abbg_core::metrics;
use abbg_core::runner::{evaluate_sequence, AttackKind, Protocol, RunConfig};
use abbg_core::tracker::{DifferentiableTracker, TrackerConfig, TrackerState};
use abbg_core::{Error, Image};
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_plane(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(Array2::from_shape_fn((h, w), |(r, c)| rows[r][c]))
}

fn from_plane(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "BoundingBox", from_py_object)]
#[derive(Clone, Copy)]
struct PyBox {
    inner: geometry::BoundingBox,
}

#[pymethods]
impl PyBox {
    #[new]
    fn new(x: f64, y: f64, w: f64, h: f64) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::BoundingBox::new(x, y, w, h).map_err(py_err)?,
        })
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }
    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }
    #[getter]
    fn w(&self) -> f64 {
        self.inner.w
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn center(&self) -> (f64, f64) {
        self.inner.center()
    }

    fn iou(&self, other: &PyBox) -> PyResult<f64> {
        geometry::iou(&self.inner, &other.inner).map_err(py_err)
    }

    fn to_tuple(&self) -> (f64, f64, f64, f64) {
        (self.inner.x, self.inner.y, self.inner.w, self.inner.h)
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!("BoundingBox(x={}, y={}, w={}, h={})", b.x, b.y, b.w, b.h)
    }
}

fn wrap(b: geometry::BoundingBox) -> PyBox {
    PyBox { inner: b }
}

/// Samples `k` adversarial boxes around `b`, keeps the best `retain_fraction`
/// of them by IoU, and returns `(boxes, ious, selected_indices, zeta)`.
#[pyfunction]
#[pyo3(signature = (b, seed, k = 1024, retain_fraction = 0.8))]
fn adversarial_boxes(
    b: &PyBox,
    seed: u64,
    k: usize,
    retain_fraction: f64,
) -> PyResult<(Vec<PyBox>, Vec<f64>, Vec<usize>, f64)> {
    let cfg = BoxGenConfig {
        k,
        retain_fraction,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = geometry::generate_adversarial_boxes(&b.inner, &cfg, &mut rng).map_err(py_err)?;
    let sel = geometry::select_positive(batch, retain_fraction).map_err(py_err)?;
    Ok((
        sel.boxes.iter().copied().map(wrap).collect(),
        sel.ious,
        sel.selected,
        sel.zeta,
    ))
}

/// Template tracker initialized on a grayscale frame.
#[pyclass(name = "Tracker")]
struct PyTracker {
    state: TrackerState,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (frame, init_box, temperature = 10.0, size_damping = 0.3))]
    fn new(frame: Vec<Vec<f64>>, init_box: &PyBox, temperature: f64, size_damping: f64) -> PyResult<Self> {
        let cfg = TrackerConfig {
            temperature,
            size_damping,
            ..Default::default()
        };
        let img = Image::from_gray(to_plane(frame)?);
        Ok(Self {
            state: TrackerState::init(&img, &init_box.inner, cfg).map_err(py_err)?,
        })
    }

    #[getter]
    fn prev_box(&self) -> PyBox {
        wrap(*self.state.prev_box())
    }

    /// Predicted box for `frame` without advancing the state.
    fn predict(&self, frame: Vec<Vec<f64>>) -> PyResult<PyBox> {
        let window = self.state.crop_window(&Image::from_gray(to_plane(frame)?));
        Ok(wrap(self.state.predict(&window).map_err(py_err)?.bbox))
    }

    /// Predicts on `frame` and moves the state to the prediction.
    fn track(&mut self, frame: Vec<Vec<f64>>) -> PyResult<PyBox> {
        let b = self.predict(frame)?;
        self.state = self.state.update(&b.inner).map_err(py_err)?;
        Ok(b)
    }

    /// Gradient of `cotangent . box` with respect to the search window of
    /// `frame`, plus the window's top-left corner in frame coordinates.
    fn box_gradient(
        &self,
        frame: Vec<Vec<f64>>,
        cotangent: [f64; 4],
    ) -> PyResult<(Vec<Vec<f64>>, (i64, i64))> {
        let window = self.state.crop_window(&Image::from_gray(to_plane(frame)?));
        let pred = self.state.predict(&window).map_err(py_err)?;
        let g = self.state.pullback(&pred, cotangent).map_err(py_err)?;
        Ok((from_plane(&g), window.origin))
    }
}

/// A loaded or synthesized sequence.
#[pyclass(name = "Sequence")]
struct PySequence {
    inner: data::Sequence,
}

#[pymethods]
impl PySequence {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn groundtruth(&self) -> Vec<PyBox> {
        self.inner.gt.iter().copied().map(wrap).collect()
    }

    /// Grayscale frame `i` (0-based).
    fn frame(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .frames
            .get(i)
            .map(|f| from_plane(&f.to_gray()))
            .ok_or_else(|| PyValueError::new_err(format!("frame {i} out of range")))
    }

    /// Writes `<root>/<name>/` and returns that path.
    fn save(&self, root: &str) -> PyResult<String> {
        let dir = data::save_sequence(&self.inner, root).map_err(py_err)?;
        Ok(dir.display().to_string())
    }
}

/// The benchmark suite of `count` synthetic sequences for `seed`.
#[pyfunction]
#[pyo3(signature = (seed, count = 10, frames = 100))]
fn synth_suite(seed: u64, count: usize, frames: usize) -> PyResult<Vec<PySequence>> {
    let cfg = SuiteConfig {
        count,
        frames,
        ..Default::default()
    };
    Ok(data::synth_suite(&cfg, seed)
        .map_err(py_err)?
        .into_iter()
        .map(|inner| PySequence { inner })
        .collect())
}

#[pyfunction]
fn load_sequence(dir: &str) -> PyResult<PySequence> {
    Ok(PySequence {
        inner: data::load_sequence(dir).map_err(py_err)?,
    })
}

/// Runs one attack on a sequence and returns its scores as a dict.
#[pyfunction]
#[pyo3(signature = (sequence, attack = "abbg", seed = 0, protocol = "vot", epsilon = 10.0))]
fn evaluate<'py>(
    py: Python<'py>,
    sequence: &PySequence,
    attack: &str,
    seed: u64,
    protocol: &str,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig {
        attack: attack.parse::<AttackKind>().map_err(py_err)?,
        protocol: protocol.parse::<Protocol>().map_err(py_err)?,
        ..Default::default()
    };
    cfg.attack_params.epsilon = epsilon;
    let r = evaluate_sequence(&sequence.inner, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("ao", r.ope.ao)?;
    d.set_item("sr50", r.ope.sr50)?;
    d.set_item("sr75", r.ope.sr75)?;
    d.set_item("success_auc", r.ope.success_auc)?;
    d.set_item("precision20", r.ope.precision20)?;
    if let Some(v) = r.vot {
        d.set_item("eao", v.eao)?;
        d.set_item("accuracy", v.accuracy)?;
        d.set_item("robustness", v.robustness)?;
    }
    d.set_item("l1_mean", r.perturbation.l1_mean)?;
    d.set_item("ssim_percent", r.perturbation.ssim_percent)?;
    d.set_item("max_delta_linf", r.max_delta_linf)?;
    d.set_item("boxes", r.boxes.iter().copied().map(wrap).collect::<Vec<_>>())?;
    Ok(d)
}

#[pyfunction]
fn average_overlap(ious: Vec<f64>) -> PyResult<f64> {
    metrics::average_overlap(&ious).map_err(py_err)
}

#[pyfunction]
fn success_rate(ious: Vec<f64>, threshold: f64) -> PyResult<f64> {
    metrics::success_rate(&ious, threshold).map_err(py_err)
}

#[pyfunction]
fn success_auc(ious: Vec<f64>) -> PyResult<f64> {
    metrics::success_auc(&ious).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (center_errors, threshold = 20.0))]
fn precision_at(center_errors: Vec<f64>, threshold: f64) -> PyResult<f64> {
    metrics::precision_at(&center_errors, threshold).map_err(py_err)
}

/// SSIM of two grayscale images, in percent.
#[pyfunction]
fn ssim(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::ssim_gray(to_plane(a)?.view(), to_plane(b)?.view()).map_err(py_err)
}

#[pyfunction]
fn drop_percent(clean: f64, attacked: f64) -> PyResult<f64> {
    metrics::drop_percent(clean, attacked).map_err(py_err)
}

/// Finite-difference check of the tracker pullback on random states.
#[pyfunction]
#[pyo3(signature = (seed = 7, states = 5, probes = 100))]
fn gradcheck<'py>(py: Python<'py>, seed: u64, states: usize, probes: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = GradcheckConfig {
        states,
        probes,
        ..Default::default()
    };
    let r = run_gradcheck(&cfg, &TrackerConfig::default(), false, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("worst", r.worst)?;
    d.set_item("per_state", r.per_state)?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

#[pymodule]
fn abbg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBox>()?;
    m.add_class::<PyTracker>()?;
    m.add_class::<PySequence>()?;
    m.add_function(wrap_pyfunction!(adversarial_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(synth_suite, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(average_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(success_rate, m)?)?;
    m.add_function(wrap_pyfunction!(success_auc, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(drop_percent, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
