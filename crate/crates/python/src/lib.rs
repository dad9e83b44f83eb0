//! Python bindings for the `reconsim` simulator.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use reconsim::controller::{self, ExperimentConfig};
use reconsim::environment::{CameraMask, FrameOutcome};
use reconsim::metrics::{self, RewardWeights, Thresholds};
use reconsim::policies::{ActionSpace, CameraPolicyKind, ServerPolicyKind};
use reconsim::reporting::{self, Axis};
use reconsim::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => PyValueError::new_err(e.to_string()),
        Error::Parse { .. } | Error::Schema(_) | Error::TraceIo { .. } | Error::Io { .. } => {
            PyIOError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_kind<T>(s: &str, all: &[T], id: fn(&T) -> &'static str) -> PyResult<T>
where
    T: Copy,
{
    all.iter()
        .copied()
        .find(|k| id(k) == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown policy `{s}`")))
}

/// Experiment configuration. Built from TOML text, a file, or a preset.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => ExperimentConfig::from_toml_str(text).map_err(to_py)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_file(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn camera_comparison() -> Self {
        Self {
            inner: ExperimentConfig::camera_comparison(),
        }
    }

    #[staticmethod]
    fn server_comparison() -> Self {
        Self {
            inner: ExperimentConfig::server_comparison(),
        }
    }

    #[staticmethod]
    fn server_spike_scenario() -> Self {
        Self {
            inner: ExperimentConfig::server_spike_scenario(),
        }
    }

    /// Copy with both the policy and scenario seeds set.
    fn with_seed(&self, seed: u64) -> Self {
        Self {
            inner: self.inner.clone().with_seed(seed),
        }
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }

    #[setter]
    fn set_n_frames(&mut self, n: usize) {
        self.inner.n_frames = n;
    }

    #[getter]
    fn n_cameras(&self) -> usize {
        self.inner.n_cameras
    }

    #[getter]
    fn n_servers(&self) -> usize {
        self.inner.n_servers
    }

    #[getter]
    fn camera_policy(&self) -> &'static str {
        self.inner.camera_policy.id()
    }

    #[setter]
    fn set_camera_policy(&mut self, id: &str) -> PyResult<()> {
        self.inner.camera_policy = parse_kind(id, &CameraPolicyKind::ALL, CameraPolicyKind::id)?;
        Ok(())
    }

    #[getter]
    fn server_policy(&self) -> &'static str {
        self.inner.server_policy.id()
    }

    #[setter]
    fn set_server_policy(&mut self, id: &str) -> PyResult<()> {
        self.inner.server_policy = parse_kind(id, &ServerPolicyKind::ALL, ServerPolicyKind::id)?;
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, n_frames={}, camera_policy='{}', server_policy='{}')",
            self.inner.seed,
            self.inner.n_frames,
            self.inner.camera_policy.id(),
            self.inner.server_policy.id()
        )
    }
}

/// Result of one episode.
#[pyclass(name = "Episode")]
struct PyEpisode {
    inner: controller::Episode,
}

#[pymethods]
impl PyEpisode {
    #[getter]
    fn frames(&self) -> u64 {
        self.inner.stats.frames
    }

    #[getter]
    fn reliable_frames(&self) -> u64 {
        self.inner.stats.reliable_frames
    }

    #[getter]
    fn reliability_pct(&self) -> f64 {
        self.inner.stats.reliability_pct()
    }

    #[getter]
    fn avg_pq(&self) -> f64 {
        self.inner.stats.avg_quality()
    }

    #[getter]
    fn avg_recon_s(&self) -> f64 {
        self.inner.stats.avg_recon_s()
    }

    #[getter]
    fn avg_total_s(&self) -> f64 {
        self.inner.stats.avg_total_s()
    }

    #[getter]
    fn masks(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.mask.to_string()).collect()
    }

    #[getter]
    fn servers(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.server).collect()
    }

    #[getter]
    fn reliable(&self) -> Vec<bool> {
        self.inner.records.iter().map(|r| r.outcome.reliable).collect()
    }

    fn subset_histogram(&self) -> BTreeMap<String, u64> {
        self.inner.stats.camera_subset_histogram.clone()
    }

    fn server_histogram(&self) -> BTreeMap<usize, u64> {
        self.inner.stats.server_histogram.clone()
    }

    fn frame_log_csv(&self) -> String {
        self.inner.frame_log_csv()
    }

    fn write(&self, out: PathBuf) -> PyResult<()> {
        reporting::write_run(&self.inner, &out).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Episode(frames={}, reliability_pct={:.2})",
            self.inner.stats.frames,
            self.inner.stats.reliability_pct()
        )
    }
}

#[pyfunction]
fn run_episode(config: &PyConfig) -> PyResult<PyEpisode> {
    Ok(PyEpisode {
        inner: controller::run_episode(&config.inner).map_err(to_py)?,
    })
}

/// Camera availability rows (0/1) and server latency rows (ms).
#[pyfunction]
#[allow(clippy::type_complexity)]
fn generate_traces(config: &PyConfig) -> PyResult<(Vec<Vec<u8>>, Vec<Vec<f64>>)> {
    config.inner.validate().map_err(to_py)?;
    let traces = reconsim::Traces::generate(&config.inner.disruption_params()).map_err(to_py)?;
    let cams = (0..traces.cameras.n_frames())
        .map(|f| traces.cameras.row(f).to_vec())
        .collect();
    let srvs = (0..traces.servers.n_frames())
        .map(|f| traces.servers.row(f).to_vec())
        .collect();
    Ok((cams, srvs))
}

#[pyfunction]
fn write_traces(config: &PyConfig, out: PathBuf) -> PyResult<()> {
    reporting::write_traces(&config.inner, &out).map_err(to_py)?;
    Ok(())
}

/// Runs a comparison along `axis` ("camera" or "server"), writes its files
/// under `out` and returns the rendered table.
#[pyfunction]
fn compare(config: &PyConfig, axis: &str, out: PathBuf) -> PyResult<String> {
    let axis: Axis = axis.parse().map_err(PyValueError::new_err)?;
    let bundle = reporting::compare(&config.inner, axis, &out).map_err(to_py)?;
    Ok(bundle.render_table())
}

/// All camera subsets with `k_min..=k_max` cameras, as bitstrings.
#[pyfunction]
fn enumerate_actions(n_cameras: usize, k_min: u32, k_max: u32) -> PyResult<Vec<String>> {
    let space = ActionSpace::enumerate(n_cameras, k_min, k_max).map_err(to_py)?;
    Ok(space.actions.iter().map(CameraMask::to_string).collect())
}

#[pyfunction]
fn quality_score(quality: f64, theta: f64) -> PyResult<f64> {
    if !(theta > 0.0) {
        return Err(PyValueError::new_err("theta must be > 0"));
    }
    Ok(metrics::quality_score(quality, theta))
}

#[pyfunction]
fn latency_score(latency_s: f64, phi_s: f64) -> PyResult<f64> {
    if !(phi_s > 0.0) {
        return Err(PyValueError::new_err("phi must be > 0"));
    }
    Ok(metrics::latency_score(latency_s, phi_s))
}

fn outcome(quality: f64, tx_s: f64, recon_s: f64, t: &Thresholds) -> FrameOutcome {
    FrameOutcome {
        quality,
        tx_latency_s: tx_s,
        recon_latency_s: recon_s,
        total_latency_s: tx_s + recon_s,
        effective_mask: CameraMask::empty(0),
        reliable: metrics::is_reliable(quality, tx_s + recon_s, recon_s, t),
    }
}

fn thresholds(theta: f64, phi_total_s: f64, phi_recon_s: f64) -> PyResult<Thresholds> {
    let t = Thresholds {
        theta,
        phi_total_s,
        phi_recon_s,
    };
    t.validate().map_err(to_py)?;
    Ok(t)
}

#[pyfunction]
#[pyo3(signature = (quality, recon_s, theta=400.0, phi_recon_s=1.0, w1=0.5, w2=0.5))]
fn camera_reward(quality: f64, recon_s: f64, theta: f64, phi_recon_s: f64, w1: f64, w2: f64) -> PyResult<f64> {
    let t = thresholds(theta, phi_recon_s, phi_recon_s)?;
    let w = RewardWeights { w1, w2 };
    w.validate().map_err(to_py)?;
    Ok(metrics::camera_reward(&outcome(quality, 0.0, recon_s, &t), &t, &w))
}

#[pyfunction]
#[pyo3(signature = (total_s, phi_total_s=3.0))]
fn server_reward(total_s: f64, phi_total_s: f64) -> PyResult<f64> {
    let t = thresholds(1.0, phi_total_s, phi_total_s)?;
    Ok(metrics::server_reward(&outcome(0.0, total_s, 0.0, &t), &t))
}

#[pyfunction]
#[pyo3(signature = (quality, total_s, recon_s, theta=400.0, phi_total_s=3.0, phi_recon_s=1.0))]
fn is_reliable(
    quality: f64,
    total_s: f64,
    recon_s: f64,
    theta: f64,
    phi_total_s: f64,
    phi_recon_s: f64,
) -> PyResult<bool> {
    let t = thresholds(theta, phi_total_s, phi_recon_s)?;
    Ok(metrics::is_reliable(quality, total_s, recon_s, &t))
}

#[pymodule]
fn reconsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEpisode>()?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(generate_traces, m)?)?;
    m.add_function(wrap_pyfunction!(write_traces, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_actions, m)?)?;
    m.add_function(wrap_pyfunction!(quality_score, m)?)?;
    m.add_function(wrap_pyfunction!(latency_score, m)?)?;
    m.add_function(wrap_pyfunction!(camera_reward, m)?)?;
    m.add_function(wrap_pyfunction!(server_reward, m)?)?;
    m.add_function(wrap_pyfunction!(is_reliable, m)?)?;
    Ok(())
}
