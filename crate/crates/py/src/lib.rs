//! Python bindings: synthetic data, point-cloud I/O, training, decoding
//! and the evaluation metrics.
//!
//! Points and normals cross the boundary as lists of `(x, y, z)` tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use diffatlas::data::{self, SurfaceKind, SyntheticSurfaceSpec};
use diffatlas::geometry::surface_point;
use diffatlas::losses::{self, LossWeights, PRESET_NAMES};
use diffatlas::metrics::{self, EvalConfig, MetricsReport};
use diffatlas::surface::{uv_lattice, Architecture, AtlasModel, JetOrder, UvPoint};
use diffatlas::trainer::{self, Adam, Convergence, TrainConfig, TrainError, TrainTarget};
use diffatlas::vec3::Vec3;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A point cloud with optional unit normals.
#[pyclass(name = "PointCloud", module = "diffatlas", frozen, from_py_object)]
#[derive(Clone)]
struct PyPointCloud {
    inner: data::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    #[pyo3(signature = (points, normals=None))]
    fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> PyResult<Self> {
        let mut inner = data::PointCloud::new(points);
        if let Some(n) = normals {
            inner = inner.with_normals(n).map_err(value_err)?;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn points(&self) -> Vec<Vec3> {
        self.inner.points().to_vec()
    }

    #[getter]
    fn normals(&self) -> Option<Vec<Vec3>> {
        self.inner.normals().map(<[Vec3]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "PointCloud(len={}, normals={})",
            self.inner.len(),
            self.inner.normals().is_some()
        )
    }

    /// Writes ASCII PLY, or OBJ when the path ends in `.obj`.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let obj = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
        if obj {
            data::save_obj(&path, &self.inner)
        } else {
            data::save_ply(&path, &self.inner)
        }
        .map_err(value_err)
    }

    /// Reads ASCII PLY, or OBJ when the path ends in `.obj`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let obj = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
        let (inner, _) = if obj {
            data::load_obj(&path)
        } else {
            data::load_ply(&path)
        }
        .map_err(value_err)?;
        Ok(Self { inner })
    }
}

/// Samples a synthetic surface. Returns `(cloud, area, mean_curvature,
/// gauss_curvature)`.
#[pyfunction]
#[pyo3(signature = (kind, n=8000, seed=0, noise=0.0))]
fn generate(
    kind: &str,
    n: usize,
    seed: u64,
    noise: f64,
) -> PyResult<(PyPointCloud, f64, Vec<f64>, Vec<f64>)> {
    let kind: SurfaceKind = kind.parse().map_err(value_err)?;
    let s = data::generate(&SyntheticSurfaceSpec::new(kind, n, seed).with_noise(noise))
        .map_err(value_err)?;
    Ok((
        PyPointCloud { inner: s.cloud },
        s.area,
        s.mean_curvature,
        s.gauss_curvature,
    ))
}

/// Decoded point with its differential quantities.
#[pyclass(name = "SurfaceSample", module = "diffatlas", frozen, get_all)]
struct PySurfaceSample {
    position: Vec3,
    normal: Option<Vec3>,
    mean_curvature: Option<f64>,
    gauss_curvature: Option<f64>,
    area_element: f64,
}

#[pymethods]
impl PySurfaceSample {
    fn __repr__(&self) -> String {
        format!(
            "SurfaceSample(position={:?}, normal={:?}, mean_curvature={:?}, gauss_curvature={:?}, area_element={})",
            self.position, self.normal, self.mean_curvature, self.gauss_curvature, self.area_element
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("chd", r.chd)?;
    d.set_item("m_ae", r.m_ae)?;
    d.set_item("m_h", r.m_h)?;
    d.set_item("m_k", r.m_k)?;
    d.set_item("m_col", r.m_col)?;
    d.set_item("m_olap", r.olap.clone())?;
    d.set_item("excluded", r.excluded)?;
    d.set_item("areas", r.areas.clone())?;
    Ok(d)
}

/// Patch decoders plus one codeword per training shape.
#[pyclass(name = "AtlasModel", module = "diffatlas", frozen)]
struct PyAtlasModel {
    inner: AtlasModel,
}

#[pymethods]
impl PyAtlasModel {
    /// A freshly initialized model.
    #[new]
    #[pyo3(signature = (patches=4, code_dim=64, hidden_layers=3, width=128, shapes=1, seed=0))]
    fn new(
        patches: usize,
        code_dim: usize,
        hidden_layers: usize,
        width: usize,
        shapes: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let arch = Architecture::new(code_dim, hidden_layers, width).map_err(value_err)?;
        let inner = AtlasModel::init(seed, patches, arch, shapes).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = trainer::load_checkpoint(&path, None).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Writes the model with a fresh optimizer state.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let state = trainer::OptimizerState::new(self.inner.num_params());
        trainer::save_checkpoint(&path, &self.inner, &state).map_err(value_err)
    }

    #[getter]
    fn num_patches(&self) -> usize {
        self.inner.num_patches()
    }

    #[getter]
    fn num_shapes(&self) -> usize {
        self.inner.num_shapes()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    /// `(code_dim, hidden_layers, width)`
    #[getter]
    fn architecture(&self) -> (usize, usize, usize) {
        let a = self.inner.architecture();
        (a.code_dim, a.hidden_layers, a.width)
    }

    /// Decodes one UV point of one patch.
    #[pyo3(signature = (patch, u, v, shape=0))]
    fn decode(&self, patch: usize, u: f64, v: f64, shape: usize) -> PyResult<PySurfaceSample> {
        self.check(shape)?;
        if patch >= self.inner.num_patches() {
            return Err(PyValueError::new_err(format!("patch {patch} out of range")));
        }
        let uv = UvPoint::checked(u, v).map_err(value_err)?;
        let jets = self
            .inner
            .decoder(patch)
            .decode(self.inner.codeword(shape), uv)
            .map_err(value_err)?;
        let s = surface_point(&jets);
        Ok(PySurfaceSample {
            position: s.position,
            normal: s.normal,
            mean_curvature: s.c_mean,
            gauss_curvature: s.c_gauss,
            area_element: s.area_element,
        })
    }

    /// Decodes every patch on a `(resolution + 1)²` UV lattice. Returns
    /// `(points, normals, patch_ids)`; degenerate normals are `None`.
    #[pyo3(signature = (resolution=32, shape=0))]
    #[allow(clippy::type_complexity)]
    fn sample(
        &self,
        resolution: usize,
        shape: usize,
    ) -> PyResult<(Vec<Vec3>, Vec<Option<Vec3>>, Vec<usize>)> {
        self.check(shape)?;
        if resolution < 2 {
            return Err(PyValueError::new_err("resolution must be at least 2"));
        }
        let uvs = uv_lattice(resolution);
        let (mut pts, mut normals, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (k, dec) in self.inner.decoders().iter().enumerate() {
            let trace = dec
                .forward_batch(self.inner.codeword(shape), &uvs, JetOrder::First)
                .map_err(value_err)?;
            for i in 0..trace.len() {
                let s = surface_point(&trace.jets(i));
                pts.push(s.position);
                normals.push(s.normal);
                ids.push(k);
            }
        }
        Ok((pts, normals, ids))
    }

    /// Metrics against a target cloud, as a dict.
    #[pyo3(signature = (target, shape=0, points_per_patch=2500, olap_thresholds=None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        target: &PyPointCloud,
        shape: usize,
        points_per_patch: usize,
        olap_thresholds: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = EvalConfig {
            points_per_patch,
            ..EvalConfig::default()
        };
        if let Some(ts) = olap_thresholds {
            cfg.olap_thresholds = ts;
        }
        let r = py
            .detach(|| metrics::evaluate_model(&self.inner, shape, &target.inner, &cfg))
            .map_err(value_err)?;
        report_dict(py, &r)
    }

    fn __repr__(&self) -> String {
        let (d, h, w) = self.architecture();
        format!(
            "AtlasModel(patches={}, shapes={}, code_dim={d}, hidden_layers={h}, width={w})",
            self.inner.num_patches(),
            self.inner.num_shapes()
        )
    }
}

impl PyAtlasModel {
    fn check(&self, shape: usize) -> PyResult<()> {
        if shape >= self.inner.num_shapes() {
            return Err(PyValueError::new_err(format!("shape {shape} out of range")));
        }
        Ok(())
    }
}

/// Trains a model on the given clouds. `areas` holds one target area per
/// cloud (or `None`); the overlap term needs them. Returns the model and
/// the per-step total loss.
#[pyfunction]
#[pyo3(signature = (
    clouds, areas=None, preset="ours", patches=4, points_per_patch=500, steps=3000, lr=1e-3, seed=0,
    code_dim=64, hidden_layers=3, width=128, convergence=true
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    clouds: Vec<PyPointCloud>,
    areas: Option<Vec<Option<f64>>>,
    preset: &str,
    patches: usize,
    points_per_patch: usize,
    steps: usize,
    lr: f64,
    seed: u64,
    code_dim: usize,
    hidden_layers: usize,
    width: usize,
    convergence: bool,
) -> PyResult<(PyAtlasModel, Vec<f64>)> {
    let weights = LossWeights::preset(preset)
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset `{preset}`")))?;
    let areas = areas.unwrap_or_else(|| vec![None; clouds.len()]);
    if areas.len() != clouds.len() {
        return Err(PyValueError::new_err("areas and clouds differ in length"));
    }
    let targets = clouds
        .into_iter()
        .zip(areas)
        .map(|(c, a)| TrainTarget::new(c.inner, a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let cfg = TrainConfig {
        patches,
        points_per_patch,
        steps,
        seed,
        arch: Architecture::new(code_dim, hidden_layers, width).map_err(value_err)?,
        adam: Adam {
            lr,
            ..Adam::default()
        },
        weights,
        convergence: convergence.then(Convergence::default),
        ..TrainConfig::default()
    };
    match py.detach(|| trainer::fit(&targets, &cfg)) {
        Ok(r) => Ok((
            PyAtlasModel { inner: r.model },
            r.history.iter().map(|h| h.total).collect(),
        )),
        Err(TrainError::NonFinite(d)) => Err(PyRuntimeError::new_err(d.to_string())),
        Err(e) => Err(value_err(e)),
    }
}

/// Two-sided Chamfer distance between patch samples and a target.
#[pyfunction]
fn chamfer(patches: Vec<Vec<Vec3>>, target: Vec<Vec3>) -> PyResult<f64> {
    losses::chamfer(&patches, &target).map_err(value_err)
}

/// Mean unoriented normal error in degrees.
#[pyfunction]
fn angular_error(pred: &PyPointCloud, target: &PyPointCloud) -> PyResult<f64> {
    metrics::angular_error(&pred.inner, &target.inner).map_err(value_err)
}

/// Number of patches whose area is below `fraction` of the mean area.
#[pyfunction]
#[pyo3(signature = (areas, fraction=metrics::COLLAPSE_FRACTION))]
fn collapse_count(areas: Vec<f64>, fraction: f64) -> usize {
    metrics::collapse_count(&areas, fraction).collapsed
}

/// Mean number of patches within each radius of a target point.
#[pyfunction]
fn overlap_counts(
    patches: Vec<Vec<Vec3>>,
    target: Vec<Vec3>,
    thresholds: Vec<f64>,
) -> PyResult<Vec<f64>> {
    metrics::overlap_counts(&patches, &target, &thresholds).map_err(value_err)
}

#[pymodule]
#[pyo3(name = "diffatlas")]
fn diffatlas_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyAtlasModel>()?;
    m.add_class::<PySurfaceSample>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(angular_error, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_count, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_counts, m)?)?;
    m.add("PRESETS", PRESET_NAMES.to_vec())?;
    m.add("SURFACE_KINDS", SurfaceKind::NAMES.to_vec())?;
    Ok(())
}
