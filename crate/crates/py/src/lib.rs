//! Python bindings. Planes are passed as lists of rows of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use prnu_core::correlate::{DEFAULT_EXCLUSION_RADIUS, DEFAULT_THRESHOLD};
use prnu_core::denoise::{DEFAULT_LEVELS, DEFAULT_SIGMA0};
use prnu_core::sensorsim::{self, SceneKind, SensorParams};
use prnu_core::{AdaptMode, AttackConfig, DenoiseParams, ImagePlane};

fn py_err(e: prnu_core::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

type Rows = Vec<Vec<f64>>;

fn to_plane(rows: Rows) -> PyResult<ImagePlane> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    ImagePlane::new(width, height, rows.concat()).map_err(py_err)
}

fn to_rows(data: &[f64], width: usize) -> Rows {
    data.chunks(width).map(<[f64]>::to_vec).collect()
}

fn plane_rows(p: &ImagePlane) -> Rows {
    to_rows(p.data(), p.width())
}

fn parse_adapt(mode: Option<&str>) -> PyResult<Option<AdaptMode>> {
    mode.map(|m| m.parse().map_err(py_err)).transpose()
}

fn params(sigma0: f64, levels: usize) -> DenoiseParams {
    DenoiseParams { sigma0, levels }
}

/// Camera fingerprint (reference pattern).
#[pyclass(name = "Fingerprint", module = "prnu", from_py_object)]
#[derive(Clone)]
struct PyFingerprint {
    inner: prnu_core::Fingerprint,
}

#[pymethods]
impl PyFingerprint {
    #[new]
    #[pyo3(signature = (data, camera_id, n_images=1))]
    fn new(data: Rows, camera_id: String, n_images: u32) -> PyResult<Self> {
        let plane = to_plane(data)?;
        let (w, h) = plane.dims();
        let inner = prnu_core::Fingerprint::new(w, h, plane.into_data(), camera_id, n_images)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = prnu_core::load_fingerprint(path).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        prnu_core::save_fingerprint(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn camera_id(&self) -> String {
        self.inner.camera_id().to_string()
    }

    #[getter]
    fn n_images(&self) -> u32 {
        self.inner.n_images()
    }

    #[getter]
    fn zero_meaned(&self) -> bool {
        self.inner.is_zero_meaned()
    }

    fn data(&self) -> Rows {
        to_rows(self.inner.data(), self.inner.width())
    }

    fn zero_mean(&self) -> Self {
        Self {
            inner: prnu_core::zero_mean(&self.inner),
        }
    }

    #[pyo3(signature = (width, height, mode="crop"))]
    fn adapted(&self, width: usize, height: usize, mode: &str) -> PyResult<Self> {
        let mode = mode.parse().map_err(py_err)?;
        let inner = self.inner.adapted(width, height, mode).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Fingerprint(camera_id={:?}, width={}, height={}, n_images={})",
            self.inner.camera_id(),
            self.inner.width(),
            self.inner.height(),
            self.inner.n_images()
        )
    }
}

/// Loads a PGM or PNG image as luminance rows.
#[pyfunction]
fn load_image(path: std::path::PathBuf) -> PyResult<Rows> {
    let img = prnu_core::load_image(path).map_err(py_err)?;
    Ok(plane_rows(&img.into_luminance()))
}

#[pyfunction]
fn save_pgm(image: Rows, path: std::path::PathBuf) -> PyResult<()> {
    prnu_core::imaging::save_pgm(&to_plane(image)?, path).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (image, sigma0=DEFAULT_SIGMA0, levels=DEFAULT_LEVELS))]
fn denoise(image: Rows, sigma0: f64, levels: usize) -> PyResult<Rows> {
    let out = prnu_core::denoise(&to_plane(image)?, params(sigma0, levels)).map_err(py_err)?;
    Ok(plane_rows(&out))
}

#[pyfunction]
#[pyo3(signature = (image, sigma0=DEFAULT_SIGMA0, levels=DEFAULT_LEVELS))]
fn residual(image: Rows, sigma0: f64, levels: usize) -> PyResult<Rows> {
    let x = prnu_core::residual(&to_plane(image)?, params(sigma0, levels)).map_err(py_err)?;
    Ok(to_rows(x.data(), x.width()))
}

/// Estimates a fingerprint from images of one camera.
#[pyfunction]
#[pyo3(signature = (images, camera_id, sigma0=DEFAULT_SIGMA0, levels=DEFAULT_LEVELS))]
fn estimate_fingerprint(
    images: Vec<Rows>,
    camera_id: &str,
    sigma0: f64,
    levels: usize,
) -> PyResult<PyFingerprint> {
    let planes = images
        .into_iter()
        .map(to_plane)
        .collect::<PyResult<Vec<_>>>()?;
    let residuals = planes
        .iter()
        .map(|p| prnu_core::residual(p, params(sigma0, levels)))
        .collect::<prnu_core::Result<Vec<_>>>()
        .map_err(py_err)?;
    let inner = prnu_core::estimate_fingerprint(&planes, &residuals, camera_id).map_err(py_err)?;
    Ok(PyFingerprint { inner })
}

#[pyfunction]
fn circular_xcorr(x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
    prnu_core::circular_xcorr(&x, &y).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (x, y, radius=DEFAULT_EXCLUSION_RADIUS))]
fn ccn(x: Vec<f64>, y: Vec<f64>, radius: usize) -> PyResult<f64> {
    Ok(prnu_core::ccn(&x, &y, radius).map_err(py_err)?.ccn)
}

/// CCN of an image against one fingerprint of the same size.
#[pyfunction]
#[pyo3(signature = (image, fingerprint, radius=DEFAULT_EXCLUSION_RADIUS, sigma0=DEFAULT_SIGMA0, levels=DEFAULT_LEVELS))]
fn detect(
    image: Rows,
    fingerprint: &PyFingerprint,
    radius: usize,
    sigma0: f64,
    levels: usize,
) -> PyResult<f64> {
    let plane = to_plane(image)?;
    let x = prnu_core::residual(&plane, params(sigma0, levels)).map_err(py_err)?;
    Ok(prnu_core::detect(&x, &fingerprint.inner, &plane, radius)
        .map_err(py_err)?
        .ccn)
}

/// Returns `(ranking, decision)`; ranking is a list of `(camera_id, ccn)`.
#[pyfunction]
#[pyo3(signature = (image, fingerprints, threshold=DEFAULT_THRESHOLD, radius=DEFAULT_EXCLUSION_RADIUS, adapt=None, sigma0=DEFAULT_SIGMA0, levels=DEFAULT_LEVELS))]
fn identify(
    image: Rows,
    fingerprints: Vec<PyFingerprint>,
    threshold: f64,
    radius: usize,
    adapt: Option<&str>,
    sigma0: f64,
    levels: usize,
) -> PyResult<(Vec<(String, f64)>, Option<String>)> {
    let candidates: Vec<_> = fingerprints.into_iter().map(|f| f.inner).collect();
    let id = prnu_core::identify_image(
        &to_plane(image)?,
        &candidates,
        params(sigma0, levels),
        threshold,
        radius,
        parse_adapt(adapt)?,
    )
    .map_err(py_err)?;
    Ok((
        id.ranking
            .into_iter()
            .map(|s| (s.camera_id, s.ccn))
            .collect(),
        id.decision,
    ))
}

fn attack_config(alpha: f64, adapt: &str, normalize: &str) -> PyResult<AttackConfig> {
    Ok(AttackConfig {
        injection_strength: alpha,
        adapt_mode: Some(adapt.parse().map_err(py_err)?),
        normalize_mode: normalize.parse().map_err(py_err)?,
        ..AttackConfig::default()
    })
}

#[pyfunction]
#[pyo3(signature = (image, normalize="clamp"))]
fn remove_fingerprint(image: Rows, normalize: &str) -> PyResult<Rows> {
    let cfg = attack_config(1.0, "crop", normalize)?;
    Ok(plane_rows(
        &prnu_core::remove_fingerprint(&to_plane(image)?, &cfg).map_err(py_err)?,
    ))
}

/// Returns `(image, iterations)`.
#[pyfunction]
#[pyo3(signature = (image, own, max_iters=10, target=0.005))]
fn adp_remove(
    image: Rows,
    own: &PyFingerprint,
    max_iters: usize,
    target: f64,
) -> PyResult<(Rows, usize)> {
    let cfg = AttackConfig {
        adp_max_iters: max_iters,
        adp_ccn_target: target,
        ..AttackConfig::default()
    };
    let (out, iters) =
        prnu_core::adp_remove(&to_plane(image)?, &own.inner, &cfg).map_err(py_err)?;
    Ok((plane_rows(&out), iters))
}

#[pyfunction]
#[pyo3(signature = (image, fingerprint, alpha=1.0, adapt="crop", normalize="clamp"))]
fn inject_fingerprint(
    image: Rows,
    fingerprint: &PyFingerprint,
    alpha: f64,
    adapt: &str,
    normalize: &str,
) -> PyResult<Rows> {
    let cfg = attack_config(alpha, adapt, normalize)?;
    let out = prnu_core::inject_fingerprint(&to_plane(image)?, &fingerprint.inner, &cfg)
        .map_err(py_err)?;
    Ok(plane_rows(&out))
}

#[pyfunction]
#[pyo3(signature = (image, fingerprint, alpha=1.0, adapt="crop", normalize="clamp"))]
fn substitute_fingerprint(
    image: Rows,
    fingerprint: &PyFingerprint,
    alpha: f64,
    adapt: &str,
    normalize: &str,
) -> PyResult<Rows> {
    let cfg = attack_config(alpha, adapt, normalize)?;
    let out = prnu_core::substitute_fingerprint(&to_plane(image)?, &fingerprint.inner, &cfg)
        .map_err(py_err)?;
    Ok(plane_rows(&out))
}

/// Synthetic camera with known sensor noise.
#[pyclass(name = "SimulatedCamera", module = "prnu")]
struct PySimulatedCamera {
    inner: sensorsim::CameraProfile,
}

fn scene_kind(kind: &str, level: f64) -> PyResult<SceneKind> {
    match kind {
        "flat" => Ok(SceneKind::Flat { level }),
        "gradient" => Ok(SceneKind::Gradient),
        "testchart" => Ok(SceneKind::Testchart),
        _ => Err(PyValueError::new_err(format!("unknown scene {kind:?}"))),
    }
}

#[pymethods]
impl PySimulatedCamera {
    #[new]
    #[pyo3(signature = (seed, width, height, camera_id, sigma_pnu=None, sigma_fpn=None, read_sigma=None, shot_gain=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        width: usize,
        height: usize,
        camera_id: String,
        sigma_pnu: Option<f64>,
        sigma_fpn: Option<f64>,
        read_sigma: Option<f64>,
        shot_gain: Option<f64>,
    ) -> PyResult<Self> {
        let d = SensorParams::default();
        let p = SensorParams {
            sigma_pnu: sigma_pnu.unwrap_or(d.sigma_pnu),
            sigma_fpn: sigma_fpn.unwrap_or(d.sigma_fpn),
            read_sigma: read_sigma.unwrap_or(d.read_sigma),
            shot_gain: shot_gain.unwrap_or(d.shot_gain),
        };
        let inner = sensorsim::make_camera(seed, width, height, p, camera_id).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn camera_id(&self) -> String {
        self.inner.camera_id.clone()
    }

    fn k_true(&self) -> Rows {
        to_rows(&self.inner.k_true, self.inner.width)
    }

    /// Renders one shot of a `flat` (at `level`), `gradient` or `testchart` scene.
    #[pyo3(signature = (scene, shot_seed, level=128.0))]
    fn shoot(&self, scene: &str, shot_seed: u64, level: f64) -> PyResult<Rows> {
        let s = sensorsim::make_scene(
            scene_kind(scene, level)?,
            self.inner.width,
            self.inner.height,
        )
        .map_err(py_err)?;
        Ok(plane_rows(
            &sensorsim::shoot(&self.inner, &s, shot_seed).map_err(py_err)?,
        ))
    }
}

#[pymodule]
fn prnu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFingerprint>()?;
    m.add_class::<PySimulatedCamera>()?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(save_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(residual, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(circular_xcorr, m)?)?;
    m.add_function(wrap_pyfunction!(ccn, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(remove_fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(adp_remove, m)?)?;
    m.add_function(wrap_pyfunction!(inject_fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(substitute_fingerprint, m)?)?;
    Ok(())
}
