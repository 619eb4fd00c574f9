//! Python bindings. Grids cross the boundary as flat row-major lists plus a
//! `(height, width)` shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use nls_core::feature::{self, DEFAULT_CLAMP_FLOOR};
use nls_core::{io, loss, metrics, pipeline, regularize, sdf};
use nls_core::{GridShape, LabelMap, Levels, ScalarField, Smoothing, SolverParams};
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(nestedls, NumericInstabilityError, PyRuntimeError);

fn to_py(e: nls_core::Error) -> PyErr {
    match e {
        nls_core::Error::NumericInstability { .. } => {
            NumericInstabilityError::new_err(e.to_string())
        }
        nls_core::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for nls_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn grid(shape: (usize, usize)) -> PyResult<GridShape> {
    GridShape::new(shape.0, shape.1).py_err()
}

fn dims(s: GridShape) -> (usize, usize) {
    (s.height(), s.width())
}

fn label_map(shape: (usize, usize), labels: Vec<u32>, regions: u32) -> PyResult<LabelMap> {
    LabelMap::new(grid(shape)?, labels, regions).py_err()
}

/// Region probability channels plus one edge channel.
#[pyclass(name = "ProbabilityStack", module = "nestedls", frozen)]
struct PyStack {
    inner: feature::ProbabilityStack,
}

#[pymethods]
impl PyStack {
    #[new]
    fn new(shape: (usize, usize), regions: Vec<Vec<f64>>, edge: Vec<f64>) -> PyResult<Self> {
        let s = grid(shape)?;
        let regions = regions
            .into_iter()
            .map(|v| ScalarField::new(s, v))
            .collect::<nls_core::Result<Vec<_>>>()
            .py_err()?;
        let edge = ScalarField::new(s, edge).py_err()?;
        let inner = feature::ProbabilityStack::new(regions, edge).py_err()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = io::read_stack(BufReader::new(f)).py_err()?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let mut w = BufWriter::new(f);
        io::write_stack(&mut w, &self.inner).py_err()?;
        w.flush().map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        dims(self.inner.shape())
    }

    #[getter]
    fn region_count(&self) -> usize {
        self.inner.region_count()
    }

    /// 1-based region channel.
    fn region(&self, index: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.region(index).py_err()?.values().to_vec())
    }

    fn edge(&self) -> Vec<f64> {
        self.inner.edge().values().to_vec()
    }

    /// Output channel `k` is current channel `order[k]` (1-based).
    fn permuted(&self, order: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.permuted(&order).py_err()?,
        })
    }

    fn argmax_labels(&self) -> Vec<u32> {
        self.inner.argmax_labels().labels().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProbabilityStack(shape={}, regions={})",
            self.inner.shape(),
            self.inner.region_count()
        )
    }
}

#[pyclass(name = "Phantom", module = "nestedls", frozen, get_all)]
struct PyPhantom {
    shape: (usize, usize),
    labels: Vec<u32>,
    edges: Vec<u8>,
    stack: Py<PyStack>,
}

#[pyclass(name = "Segmentation", module = "nestedls", frozen, get_all)]
struct PySegmentation {
    shape: (usize, usize),
    labels: Vec<u32>,
    initial_phi: Vec<f64>,
    final_phi: Vec<f64>,
    energy_trace: Vec<(usize, f64)>,
    max_update: Vec<f64>,
    iterations_run: usize,
}

#[pyfunction]
#[pyo3(signature = (size=160, seed=42, noise=0.05, blur=2.0, thickness=None))]
fn generate_phantom(
    py: Python<'_>,
    size: usize,
    seed: u64,
    noise: f64,
    blur: f64,
    thickness: Option<f64>,
) -> PyResult<PyPhantom> {
    let mut spec = feature::PhantomSpec::with_size(size).py_err()?;
    spec.seed = seed;
    spec.noise_rate = noise;
    spec.blur_sigma = blur;
    if let Some(t) = thickness {
        spec.thickness = t;
    }
    let ph = feature::generate_phantom(&spec).py_err()?;
    Ok(PyPhantom {
        shape: dims(ph.labels.shape()),
        labels: ph.labels.labels().to_vec(),
        edges: ph.edges.labels().to_vec(),
        stack: Py::new(py, PyStack { inner: ph.stack })?,
    })
}

#[pyfunction]
#[pyo3(signature = (
    stack, *, lam=1.0, eps=1.5, levels=vec![0.0, 8.0], dt=0.1, iters=200,
    threshold=0.5, init_channel=1, trace_every=1, redistance_every=None,
    clamp_floor=DEFAULT_CLAMP_FLOOR,
))]
#[allow(clippy::too_many_arguments)]
fn segment(
    py: Python<'_>,
    stack: &PyStack,
    lam: f64,
    eps: f64,
    levels: Vec<f64>,
    dt: f64,
    iters: usize,
    threshold: f64,
    init_channel: usize,
    trace_every: usize,
    redistance_every: Option<usize>,
    clamp_floor: f64,
) -> PyResult<PySegmentation> {
    let config = pipeline::SegmentConfig {
        solver: SolverParams {
            lambda: lam,
            smoothing: Smoothing::new(eps).py_err()?,
            levels: Levels::new(levels).py_err()?,
            time_step: dt,
            iterations: iters,
            trace_every,
            redistance_every,
            ..SolverParams::default()
        },
        init_channel,
        threshold,
        clamp_floor,
    };
    let seg = py
        .detach(|| pipeline::segment(&stack.inner, &config))
        .py_err()?;
    Ok(PySegmentation {
        shape: dims(seg.labels.shape()),
        labels: seg.labels.labels().to_vec(),
        initial_phi: seg.initial_phi.into_values(),
        final_phi: seg.report.final_phi.values().to_vec(),
        energy_trace: seg.report.energy_trace,
        max_update: seg.report.max_update,
        iterations_run: seg.report.iterations_run,
    })
}

/// Dice overlap of one region between two label maps of the same shape.
#[pyfunction]
#[pyo3(signature = (pred, truth, shape, region, regions=3))]
fn dice(
    pred: Vec<u32>,
    truth: Vec<u32>,
    shape: (usize, usize),
    region: u32,
    regions: u32,
) -> PyResult<f64> {
    let a = label_map(shape, pred, regions)?;
    let b = label_map(shape, truth, regions)?;
    metrics::dice(&a, &b, region).py_err()
}

/// `{region: dice}` plus `cavities` and `myocardium` entries.
#[pyfunction]
#[pyo3(signature = (pred, truth, shape, regions=3))]
fn dice_report(
    pred: Vec<u32>,
    truth: Vec<u32>,
    shape: (usize, usize),
    regions: u32,
) -> PyResult<Vec<(String, f64)>> {
    let a = label_map(shape, pred, regions)?;
    let b = label_map(shape, truth, regions)?;
    let r = metrics::DiceReport::compute(&a, &b).py_err()?;
    let mut out: Vec<(String, f64)> = r
        .per_region
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    out.push(("cavities".into(), r.cavities));
    out.push(("myocardium".into(), r.myocardium));
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (stack, labels, clamp_floor=DEFAULT_CLAMP_FLOOR))]
fn region_loss(stack: &PyStack, labels: Vec<u32>, clamp_floor: f64) -> PyResult<f64> {
    let s = &stack.inner;
    let truth = label_map(dims(s.shape()), labels, s.region_count() as u32)?;
    loss::region_loss(s, &truth, clamp_floor).py_err()
}

#[pyfunction]
#[pyo3(signature = (stack, edges, clamp_floor=DEFAULT_CLAMP_FLOOR))]
fn edge_loss(stack: &PyStack, edges: Vec<u8>, clamp_floor: f64) -> PyResult<f64> {
    let truth = loss::EdgeLabelMap::new(stack.inner.shape(), edges).py_err()?;
    loss::edge_loss(stack.inner.edge(), &truth, clamp_floor).py_err()
}

#[pyfunction]
#[pyo3(signature = (stack, labels, edges, alpha=1.0, clamp_floor=DEFAULT_CLAMP_FLOOR))]
fn combined_loss(
    stack: &PyStack,
    labels: Vec<u32>,
    edges: Vec<u8>,
    alpha: f64,
    clamp_floor: f64,
) -> PyResult<f64> {
    let s = &stack.inner;
    let truth = label_map(dims(s.shape()), labels, s.region_count() as u32)?;
    let edge_truth = loss::EdgeLabelMap::new(s.shape(), edges).py_err()?;
    let params = loss::LossParams::with_floor(alpha, clamp_floor).py_err()?;
    loss::combined_loss(s, &truth, &edge_truth, &params).py_err()
}

/// Negative inside `mask`, positive outside.
#[pyfunction]
fn signed_distance(mask: Vec<bool>, shape: (usize, usize)) -> PyResult<Vec<f64>> {
    let mask = sdf::BinaryMask::new(grid(shape)?, mask).py_err()?;
    Ok(sdf::fast_sweep_sdf(&mask).py_err()?.into_values())
}

#[pyfunction]
fn label_from_phi(phi: Vec<f64>, shape: (usize, usize), levels: Vec<f64>) -> PyResult<Vec<u32>> {
    let phi = ScalarField::new(grid(shape)?, phi).py_err()?;
    let levels = Levels::new(levels).py_err()?;
    Ok(metrics::label_from_phi(&phi, &levels).labels().to_vec())
}

#[pyfunction]
#[pyo3(signature = (z, eps=1.5))]
fn heaviside(z: f64, eps: f64) -> PyResult<f64> {
    Ok(regularize::heaviside_smooth(
        z,
        Smoothing::new(eps).py_err()?,
    ))
}

#[pyfunction]
#[pyo3(signature = (z, eps=1.5))]
fn dirac(z: f64, eps: f64) -> PyResult<f64> {
    Ok(regularize::dirac_smooth(z, Smoothing::new(eps).py_err()?))
}

/// Soft membership of region `index` (1-based) at level-set value `phi`.
#[pyfunction]
#[pyo3(signature = (phi, index, levels=vec![0.0, 8.0], eps=1.5))]
fn characteristic(phi: f64, index: usize, levels: Vec<f64>, eps: f64) -> PyResult<f64> {
    let levels = Levels::new(levels).py_err()?;
    regularize::characteristic(phi, index, &levels, Smoothing::new(eps).py_err()?).py_err()
}

fn read_pgm_file(path: &str) -> PyResult<(GridShape, Vec<u8>)> {
    let f = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    io::read_pgm(BufReader::new(f)).py_err()
}

/// Raw 8-bit pixels and `(height, width)`.
#[pyfunction]
fn read_pgm(path: &str) -> PyResult<(Vec<u8>, (usize, usize))> {
    let (s, px) = read_pgm_file(path)?;
    Ok((px, dims(s)))
}

#[pyfunction]
#[pyo3(signature = (path, labels, shape, regions=3))]
fn write_labels_pgm(
    path: &str,
    labels: Vec<u32>,
    shape: (usize, usize),
    regions: u32,
) -> PyResult<()> {
    let labels = label_map(shape, labels, regions)?;
    let f = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let mut w = BufWriter::new(f);
    io::write_labels_pgm(&mut w, &labels).py_err()?;
    w.flush().map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule]
fn nestedls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStack>()?;
    m.add_class::<PyPhantom>()?;
    m.add_class::<PySegmentation>()?;
    m.add(
        "NumericInstabilityError",
        m.py().get_type::<NumericInstabilityError>(),
    )?;
    m.add("CAVITY", feature::CAVITY)?;
    m.add("MYOCARDIUM", feature::MYOCARDIUM)?;
    m.add("BACKGROUND", feature::BACKGROUND)?;
    m.add_function(wrap_pyfunction!(generate_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(dice_report, m)?)?;
    m.add_function(wrap_pyfunction!(region_loss, m)?)?;
    m.add_function(wrap_pyfunction!(edge_loss, m)?)?;
    m.add_function(wrap_pyfunction!(combined_loss, m)?)?;
    m.add_function(wrap_pyfunction!(signed_distance, m)?)?;
    m.add_function(wrap_pyfunction!(label_from_phi, m)?)?;
    m.add_function(wrap_pyfunction!(heaviside, m)?)?;
    m.add_function(wrap_pyfunction!(dirac, m)?)?;
    m.add_function(wrap_pyfunction!(characteristic, m)?)?;
    m.add_function(wrap_pyfunction!(read_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(write_labels_pgm, m)?)?;
    Ok(())
}
