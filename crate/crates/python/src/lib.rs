//! Python bindings: sweeps, simulation, echo profiles, synthetic gesture
//! sets, the classifier and evaluation metrics, with numpy arrays in and out.

use numpy::ndarray::{Array2, Array3, Array4};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyArray4, PyReadonlyArray1, PyReadonlyArray4, PyUntypedArrayMethods};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use echoforge::echo::{
    differential_profile, EchoProfile, EchoTensor, ProfileKind, ProfilePipeline, METERS_PER_BIN, TENSOR_CHANNELS,
    WINDOW_BINS, WINDOW_FRAMES,
};
use echoforge::labels::{GestureLabel, NUM_CLASSES};
use echoforge::model::{self, ModelParams, ModelSpec, TrainConfig};
use echoforge::signal::{ChannelId, FilterSpec, PcmStream, SweepConfig, SAMPLE_RATE};

fn err(e: echoforge::Error) -> PyErr {
    match e {
        echoforge::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn sweep_for(band: &str) -> PyResult<SweepConfig> {
    match band {
        "a" | "A" => Ok(SweepConfig::band_a()),
        "b" | "B" => Ok(SweepConfig::band_b()),
        _ => Err(PyValueError::new_err(format!("band must be 'a' or 'b', got {band:?}"))),
    }
}

fn stream(x: PyReadonlyArray1<'_, f64>, channel: ChannelId) -> PyResult<PcmStream> {
    PcmStream::new(x.as_array().to_vec(), SAMPLE_RATE, channel).map_err(err)
}

fn profile_array(p: &EchoProfile) -> Array2<f64> {
    Array2::from_shape_vec((p.rows, p.cols), p.values.clone()).expect("profile shape")
}

/// One band's 12 ms chirp (`band` is "a" for 18-21 kHz, "b" for 21.5-24.5 kHz).
#[pyfunction]
fn generate_sweep<'py>(py: Python<'py>, band: &str) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let s = echoforge::signal::generate_sweep(&sweep_for(band)?).map_err(err)?;
    Ok(s.samples.into_pyarray(py))
}

/// Circular cross-correlation, `out[lag] = sum_n frame[(n + lag) % N] * reference[n]`.
#[pyfunction]
fn cross_correlate<'py>(
    py: Python<'py>,
    frame: PyReadonlyArray1<'py, f64>,
    reference: PyReadonlyArray1<'py, f64>,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let out = echoforge::echo::cross_correlate(frame.as_slice()?, reference.as_slice()?).map_err(err)?;
    Ok(out.into_pyarray(py))
}

/// Renders a scene (the JSON accepted by `echoforge simulate`'s `scene`
/// field) to the two microphone streams.
#[pyfunction]
#[pyo3(signature = (scene_json, seed=0))]
fn render_scene<'py>(
    py: Python<'py>,
    scene_json: &str,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<f64>>)> {
    let scene: echoforge::sim::Scene =
        serde_json::from_str(scene_json).map_err(|e| PyValueError::new_err(format!("bad scene JSON: {e}")))?;
    let sweeps = [SweepConfig::band_a(), SweepConfig::band_b()];
    let [m1, m2] = py
        .detach(|| echoforge::sim::render_mics(&scene, &sweeps, seed))
        .map_err(err)?;
    Ok((m1.samples.into_pyarray(py), m2.samples.into_pyarray(py)))
}

/// Frame-to-frame difference along time; column 0 is zero.
#[pyfunction]
fn differential<'py>(py: Python<'py>, profile: numpy::PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let shape = profile.shape();
    let ep = EchoProfile::from_values(
        profile.as_array().iter().copied().collect(),
        shape[0],
        shape[1],
        echoforge::echo::ProfileChannel::SS1,
        ProfileKind::Original,
    )
    .map_err(err)?;
    Ok(profile_array(&differential_profile(&ep).map_err(err)?).into_pyarray(py))
}

/// Dual-band profile pipeline with the default sweeps and filters.
#[pyclass(module = "echoforge_py")]
struct Pipeline {
    inner: ProfilePipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    fn new() -> PyResult<Self> {
        let sweeps = [SweepConfig::band_a(), SweepConfig::band_b()];
        let filters = [FilterSpec::for_sweep(&sweeps[0]), FilterSpec::for_sweep(&sweeps[1])];
        Ok(Self {
            inner: ProfilePipeline::new(sweeps, filters).map_err(err)?,
        })
    }

    /// Original SS1, DS1, DS2, SS2 profiles stacked as `[4, lags, frames]`.
    #[pyo3(signature = (mic1, mic2, offset=0))]
    fn profiles<'py>(
        &self,
        py: Python<'py>,
        mic1: PyReadonlyArray1<'py, f64>,
        mic2: PyReadonlyArray1<'py, f64>,
        offset: usize,
    ) -> PyResult<Bound<'py, PyArray3<f64>>> {
        let (a, b) = (stream(mic1, ChannelId::Mic1)?, stream(mic2, ChannelId::Mic2)?);
        let ps = py.detach(|| self.inner.profiles([&a, &b], offset)).map_err(err)?;
        let (rows, cols) = (ps[0].rows, ps[0].cols);
        let data: Vec<f64> = ps.iter().flat_map(|p| p.values.iter().copied()).collect();
        Ok(Array3::from_shape_vec((4, rows, cols), data).expect("shape").into_pyarray(py))
    }

    /// Classifier tensor `[155, 70, 8]` for the window starting at sample `start`.
    #[pyo3(signature = (mic1, mic2, start, start_bin=0))]
    fn tensor_at<'py>(
        &self,
        py: Python<'py>,
        mic1: PyReadonlyArray1<'py, f64>,
        mic2: PyReadonlyArray1<'py, f64>,
        start: usize,
        start_bin: usize,
    ) -> PyResult<Bound<'py, PyArray3<f32>>> {
        let (a, b) = (stream(mic1, ChannelId::Mic1)?, stream(mic2, ChannelId::Mic2)?);
        let t = py.detach(|| self.inner.tensor_at([&a, &b], start, start_bin)).map_err(err)?;
        Ok(tensor_array(&t).into_pyarray(py))
    }
}

fn tensor_array(t: &EchoTensor) -> Array3<f32> {
    Array3::from_shape_vec((WINDOW_FRAMES, WINDOW_BINS, TENSOR_CHANNELS), t.data.clone()).expect("tensor shape")
}

fn tensors_from(x: &PyReadonlyArray4<'_, f32>, labels: Option<&[i64]>) -> PyResult<Vec<EchoTensor>> {
    let shape = x.shape();
    if shape[1..] != [WINDOW_FRAMES, WINDOW_BINS, TENSOR_CHANNELS] {
        return Err(PyValueError::new_err(format!(
            "tensors must be [N, {WINDOW_FRAMES}, {WINDOW_BINS}, {TENSOR_CHANNELS}], got {shape:?}"
        )));
    }
    if let Some(l) = labels {
        if l.len() != shape[0] {
            return Err(PyValueError::new_err(format!("{} labels for {} tensors", l.len(), shape[0])));
        }
    }
    let arr = x.as_array();
    (0..shape[0])
        .map(|i| {
            let label = match labels {
                Some(l) => {
                    let c = usize::try_from(l[i]).map_err(|_| PyValueError::new_err(format!("negative label {}", l[i])))?;
                    Some(GestureLabel::from_class_index(c).map_err(err)?)
                }
                None => None,
            };
            EchoTensor::new(arr.index_axis(numpy::ndarray::Axis(0), i).iter().copied().collect(), label).map_err(err)
        })
        .collect()
}

/// `n_per_class` jittered renders of each built-in script: tensors
/// `[N, 155, 70, 8]` and class indices `[N]`, class-major.
#[pyfunction]
#[pyo3(signature = (n_per_class, seed=0))]
fn synth_gesture_set<'py>(
    py: Python<'py>,
    n_per_class: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray4<f32>>, Bound<'py, PyArray1<i64>>)> {
    let set = py
        .detach(|| echoforge::sim::synth_gesture_set(&echoforge::sim::builtin_scripts(), n_per_class, seed))
        .map_err(err)?;
    let labels: Vec<i64> = set
        .iter()
        .map(|t| t.label.map(|l| l.class_index() as i64).unwrap_or(-1))
        .collect();
    let data: Vec<f32> = set.iter().flat_map(|t| t.data.iter().copied()).collect();
    let arr = Array4::from_shape_vec((set.len(), WINDOW_FRAMES, WINDOW_BINS, TENSOR_CHANNELS), data).expect("shape");
    Ok((arr.into_pyarray(py), labels.into_pyarray(py)))
}

/// Residual CNN classifier over `[155, 70, 8]` tensors.
#[pyclass(module = "echoforge_py")]
struct Classifier {
    params: ModelParams<f32>,
}

#[pymethods]
impl Classifier {
    /// `spec_json` overrides the default desk-scale architecture.
    #[new]
    #[pyo3(signature = (seed=0, spec_json=None))]
    fn new(seed: u64, spec_json: Option<&str>) -> PyResult<Self> {
        let spec: ModelSpec = match spec_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("bad spec JSON: {e}")))?,
            None => ModelSpec::default(),
        };
        Ok(Self {
            params: ModelParams::init(&spec, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            params: model::load_checkpoint(std::path::Path::new(path)).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model::save_checkpoint(std::path::Path::new(path), &self.params).map_err(err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Trains in place; returns per-epoch `(train_loss, train_acc)` pairs.
    /// `config_json` takes the fields of the training config.
    #[pyo3(signature = (tensors, labels, epochs, seed=0, config_json=None))]
    fn fit(
        &mut self,
        py: Python<'_>,
        tensors: PyReadonlyArray4<'_, f32>,
        labels: PyReadonlyArray1<'_, i64>,
        epochs: usize,
        seed: u64,
        config_json: Option<&str>,
    ) -> PyResult<Vec<(f64, f64)>> {
        let mut cfg: TrainConfig = match config_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("bad config JSON: {e}")))?,
            None => TrainConfig::default(),
        };
        cfg.seed = seed;
        let data = tensors_from(&tensors, Some(labels.as_slice()?))?;
        let init = self.params.clone();
        let (params, log) = py
            .detach(|| {
                let refs: Vec<&EchoTensor> = data.iter().collect();
                model::train(init, &refs, &cfg, epochs, &[])
            })
            .map_err(err)?;
        self.params = params;
        Ok(log.iter().map(|m| (m.train_loss, m.train_acc)).collect())
    }

    /// Class indices `[N]` and softmax confidences `[N]`.
    fn predict<'py>(
        &self,
        py: Python<'py>,
        tensors: PyReadonlyArray4<'py, f32>,
    ) -> PyResult<(Bound<'py, PyArray1<i64>>, Bound<'py, PyArray1<f64>>)> {
        let data = tensors_from(&tensors, None)?;
        let preds = py
            .detach(|| {
                let refs: Vec<&EchoTensor> = data.iter().collect();
                model::predict(&self.params, &refs)
            })
            .map_err(err)?;
        let classes: Vec<i64> = preds.iter().map(|p| p.class as i64).collect();
        let conf: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
        Ok((classes.into_pyarray(py), conf.into_pyarray(py)))
    }
}

fn labels_vec(x: &PyReadonlyArray1<'_, i64>) -> PyResult<Vec<usize>> {
    x.as_slice()?
        .iter()
        .map(|&v| usize::try_from(v).map_err(|_| PyValueError::new_err(format!("negative label {v}"))))
        .collect()
}

/// 30x30 counts, rows = truth, columns = prediction.
#[pyfunction]
fn confusion<'py>(
    py: Python<'py>,
    truth: PyReadonlyArray1<'py, i64>,
    pred: PyReadonlyArray1<'py, i64>,
) -> PyResult<Bound<'py, PyArray2<u64>>> {
    let cm = echoforge::metrics::confusion(&labels_vec(&truth)?, &labels_vec(&pred)?).map_err(err)?;
    let flat: Vec<u64> = cm.counts.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((NUM_CLASSES, NUM_CLASSES), flat).expect("shape").into_pyarray(py))
}

/// Per-class FP / (FP + TN) (None where undefined) and their macro average.
#[pyfunction]
fn false_positive_rate(
    truth: PyReadonlyArray1<'_, i64>,
    pred: PyReadonlyArray1<'_, i64>,
) -> PyResult<(Vec<Option<f64>>, Option<f64>)> {
    let cm = echoforge::metrics::confusion(&labels_vec(&truth)?, &labels_vec(&pred)?).map_err(err)?;
    let f = echoforge::metrics::false_positive_rate(&cm).map_err(err)?;
    Ok((f.per_class, f.macro_average))
}

/// "Grasp/Gesture" name of a class index.
#[pyfunction]
fn class_name(index: usize) -> PyResult<String> {
    Ok(GestureLabel::from_class_index(index).map_err(err)?.to_string())
}

#[pymodule]
fn echoforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SAMPLE_RATE", SAMPLE_RATE)?;
    m.add("METERS_PER_BIN", METERS_PER_BIN)?;
    m.add("NUM_CLASSES", NUM_CLASSES)?;
    m.add("TENSOR_SHAPE", (WINDOW_FRAMES, WINDOW_BINS, TENSOR_CHANNELS))?;
    m.add_function(wrap_pyfunction!(generate_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlate, m)?)?;
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(differential, m)?)?;
    m.add_function(wrap_pyfunction!(synth_gesture_set, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(false_positive_rate, m)?)?;
    m.add_function(wrap_pyfunction!(class_name, m)?)?;
    m.add_class::<Pipeline>()?;
    m.add_class::<Classifier>()?;
    Ok(())
}
