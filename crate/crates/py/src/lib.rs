//! Python bindings: enhancement (offline and streaming), STFT helpers,
//! metrics, training and the verification tools.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mpcrn::dsp::{self, ComplexSpectrogram, Matrix, StftConfig, Waveform, SAMPLE_RATE};
use mpcrn::model::{MaskHead, ModelConfig, Mpcrn};
use mpcrn::recon::ReconstructionMode;
use mpcrn::stream::StreamState;
use mpcrn::train::TrainSetup;

fn py_err(e: mpcrn::Error) -> PyErr {
    match e {
        mpcrn::Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        mpcrn::Error::Io(_) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_recon(recon: Option<&str>, head: MaskHead) -> PyResult<ReconstructionMode> {
    match recon {
        Some(r) => r.parse().map_err(py_err),
        None => Ok(match head {
            MaskHead::Polar => ReconstructionMode::Polar,
            MaskHead::Cartesian => ReconstructionMode::C,
        }),
    }
}

fn wave(samples: Vec<f64>) -> PyResult<Waveform> {
    Waveform::new(samples, SAMPLE_RATE).map_err(py_err)
}

fn model_config(toy: bool) -> ModelConfig {
    if toy {
        ModelConfig::toy()
    } else {
        ModelConfig::default()
    }
}

/// Speech enhancer working on 16 kHz mono float samples.
///
/// ```python
/// enh = Enhancer.from_checkpoint("final.ckpt")
/// clean = enh.enhance(noisy)
/// ```
#[pyclass(name = "Enhancer", frozen)]
struct PyEnhancer {
    inner: Arc<mpcrn::stream::Enhancer>,
}

#[pymethods]
impl PyEnhancer {
    /// Load a checkpoint written by training. `recon` is one of
    /// "polar", "r", "c", "e"; by default it follows the mask head.
    #[staticmethod]
    #[pyo3(signature = (path, recon=None))]
    fn from_checkpoint(path: PathBuf, recon: Option<&str>) -> PyResult<Self> {
        let f = File::open(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        let (model, params) = Mpcrn::load::<_, f32>(&mut BufReader::new(f)).map_err(py_err)?;
        let recon = parse_recon(recon, model.head())?;
        let inner = mpcrn::stream::Enhancer::new(model, params, recon).map_err(py_err)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    /// Untrained network with seeded initialization; `toy` selects the small variant.
    #[staticmethod]
    #[pyo3(signature = (seed=0, toy=false, recon=None))]
    fn random(seed: u64, toy: bool, recon: Option<&str>) -> PyResult<Self> {
        let mut cfg = model_config(toy);
        let recon = parse_recon(recon, MaskHead::Polar)?;
        cfg = cfg.with_head(mpcrn::train::head_for(recon));
        let (model, params) = Mpcrn::new::<f32>(&cfg, seed).map_err(py_err)?;
        let inner = mpcrn::stream::Enhancer::new(model, params, recon).map_err(py_err)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    /// Pass-through pipeline with unit masks.
    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: Arc::new(mpcrn::stream::Enhancer::identity()),
        }
    }

    #[getter]
    fn recon(&self) -> &'static str {
        self.inner.recon_mode().as_str()
    }

    /// Trainable parameter count, or 0 for the identity pipeline.
    #[getter]
    fn num_params(&self) -> usize {
        self.inner.model().map_or(0, |m| m.count_params())
    }

    /// Whole-signal enhancement; output has the input's length.
    fn enhance(&self, py: Python<'_>, samples: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = wave(samples)?;
        py.detach(|| self.inner.enhance_offline(&w))
            .map(|o| o.samples)
            .map_err(py_err)
    }

    /// Same result as `enhance`, computed hop by hop through a stream.
    fn enhance_streaming(&self, py: Python<'_>, samples: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = wave(samples)?;
        py.detach(|| self.inner.enhance_streaming(&w))
            .map(|o| o.samples)
            .map_err(py_err)
    }

    /// Fresh streaming session sharing this enhancer's weights.
    fn stream(&self) -> PyResult<PyStream> {
        let state = self.inner.new_stream().map_err(py_err)?;
        Ok(PyStream {
            enhancer: Arc::clone(&self.inner),
            state,
        })
    }

    fn __repr__(&self) -> String {
        format!("Enhancer(recon={:?}, num_params={})", self.recon(), self.num_params())
    }
}

/// Incremental enhancement. `push` returns whatever output became final;
/// `flush` drains the rest once the input has ended.
#[pyclass(name = "Stream")]
struct PyStream {
    enhancer: Arc<mpcrn::stream::Enhancer>,
    state: StreamState,
}

#[pymethods]
impl PyStream {
    fn push(&mut self, samples: Vec<f64>) -> PyResult<Vec<f64>> {
        self.enhancer.push(&mut self.state, &samples).map_err(py_err)
    }

    fn flush(&mut self) -> PyResult<Vec<f64>> {
        self.enhancer.flush(&mut self.state).map_err(py_err)
    }

    fn reset(&mut self) {
        self.state.reset();
    }

    #[getter]
    fn frames_processed(&self) -> u64 {
        self.state.frames_processed()
    }

    /// Bytes of state carried between frames.
    #[getter]
    fn footprint(&self) -> usize {
        self.state.footprint()
    }
}

/// Complex STFT as `(real, imag)`, each a list of frames of 257 bins.
#[pyfunction]
fn stft(samples: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let spec = dsp::stft(&wave(samples)?, &StftConfig::default()).map_err(py_err)?;
    let rows = |m: &Matrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
    Ok((rows(&spec.real), rows(&spec.imag)))
}

/// Inverse of `stft`.
#[pyfunction]
fn istft(real: Vec<Vec<f64>>, imag: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let cfg = StftConfig::default();
    let matrix = |rows: Vec<Vec<f64>>| {
        let n = rows.len();
        Matrix::from_vec(n, cfg.bins(), rows.into_iter().flatten().collect())
    };
    let spec = ComplexSpectrogram::from_parts(matrix(real).map_err(py_err)?, matrix(imag).map_err(py_err)?, cfg)
        .map_err(py_err)?;
    dsp::istft(&spec).map(|w| w.samples).map_err(py_err)
}

#[pyfunction]
fn si_sdr(estimate: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    mpcrn::metrics::si_sdr_slices(&estimate, &reference).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (estimate, reference, frame_len=256))]
fn seg_snr(estimate: Vec<f64>, reference: Vec<f64>, frame_len: usize) -> PyResult<f64> {
    mpcrn::metrics::seg_snr(&wave(estimate)?, &wave(reference)?, frame_len).map_err(py_err)
}

/// Unit-modulus projection of one phase pair.
#[pyfunction]
fn triangle_correct(pr: f64, pi: f64) -> (f64, f64) {
    mpcrn::recon::triangle_correct_pair(pr, pi)
}

#[pyfunction]
#[pyo3(signature = (toy=false))]
fn count_params(toy: bool) -> usize {
    mpcrn::model::count_params(&model_config(toy))
}

/// Multiply-accumulates per second of 16 kHz audio.
#[pyfunction]
#[pyo3(signature = (toy=false))]
fn macs_per_second(toy: bool) -> f64 {
    let cfg = StftConfig::default();
    mpcrn::model::count_macs(&model_config(toy), cfg.bins()) as f64 * SAMPLE_RATE as f64 / cfg.hop as f64
}

/// Finite-difference gradient check; returns `(passed, [(layer, shape, tensor, max_rel_err)])`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<(bool, Vec<(String, String, String, f64)>)> {
    let report = py.detach(|| mpcrn::gradcheck::run_gradcheck(seed)).map_err(py_err)?;
    let rows = report
        .entries
        .iter()
        .map(|e| (e.layer.to_string(), e.shape.clone(), e.tensor.clone(), e.max_rel_err))
        .collect();
    Ok((report.passed(), rows))
}

/// Train from `key = value` config text. Checkpoints and the loss curve go
/// to `out_dir` when given. Returns a dict with the loss curve and an `Enhancer`.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn train<'py>(py: Python<'py>, config: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let setup = TrainSetup::from_text(config).map_err(py_err)?;
    let out = py
        .detach(|| mpcrn::train::train(&setup.model, &setup.train, &setup.data, out_dir.as_deref()))
        .map_err(py_err)?;
    let enhancer = out.enhancer(setup.train.recon).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("steps", out.steps)?;
    d.set_item("final_lr", out.final_lr)?;
    d.set_item("train_loss", out.curve.iter().map(|p| p.train_loss).collect::<Vec<_>>())?;
    d.set_item("val_loss", out.curve.iter().filter_map(|p| p.val_loss).collect::<Vec<_>>())?;
    d.set_item("enhancer", PyEnhancer { inner: Arc::new(enhancer) })?;
    Ok(d)
}

/// Median streaming real-time factor over `runs` passes.
#[pyfunction]
#[pyo3(signature = (seconds=10.0, runs=5, seed=0, toy=false))]
fn benchmark_rtf(py: Python<'_>, seconds: f64, runs: usize, seed: u64, toy: bool) -> PyResult<f64> {
    let cfg = model_config(toy);
    py.detach(|| mpcrn::stream::benchmark_rtf(&cfg, seconds, runs, seed))
        .map(|r| r.rtf)
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "mpcrn")]
fn mpcrn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SAMPLE_RATE", SAMPLE_RATE)?;
    m.add_class::<PyEnhancer>()?;
    m.add_class::<PyStream>()?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(si_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(seg_snr, m)?)?;
    m.add_function(wrap_pyfunction!(triangle_correct, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(macs_per_second, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_rtf, m)?)?;
    Ok(())
}
