//! Python bindings: cost model, quantizers, networks, checkpoints and the search driver.

use std::path::PathBuf;

use bnas::archspace::{self, CodeFile, ExpansionCode, Mode, NetworkTemplate, Precision};
use bnas::checkpoint::Checkpoint;
use bnas::harness::{self, RunConfig};
use bnas::nn::Tensor;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: bnas::Error) -> PyErr {
    match e {
        bnas::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        bnas::Error::Input(_) | bnas::Error::Shape { .. } | bnas::Error::Config(_) | bnas::Error::Format { .. } => {
            PyValueError::new_err(e.to_string())
        }
        bnas::Error::Corrupt(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn template(name: &str) -> PyResult<NetworkTemplate> {
    NetworkTemplate::builtin(name).map_err(to_py)
}

fn code(ratios: &[f64]) -> PyResult<ExpansionCode> {
    ExpansionCode::from_f64s(ratios).map_err(to_py)
}

/// Gene count of a built-in template.
#[pyfunction]
fn n_genes(template_name: &str) -> PyResult<usize> {
    Ok(template(template_name)?.n_genes)
}

/// Cost of `ratios` on a template as a dict with flops, flops_norm, speedup, weight_bits.
#[pyfunction]
#[pyo3(signature = (template_name, ratios, full_precision = false))]
fn count_cost<'py>(
    py: Python<'py>,
    template_name: &str,
    ratios: Vec<f64>,
    full_precision: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let precision = if full_precision { Precision::Full } else { Precision::Binary };
    let c = archspace::count_cost_with(&template(template_name)?, &code(&ratios)?, precision).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("flops", c.flops)?;
    d.set_item("flops_norm", c.flops_norm)?;
    d.set_item("speedup", c.speedup)?;
    d.set_item("weight_bits", c.weight_bits)?;
    Ok(d)
}

/// Per-layer (name, kind, in_channels, out_channels) for every conv and fc layer.
#[pyfunction]
fn resolve_channels(template_name: &str, ratios: Vec<f64>) -> PyResult<Vec<(String, String, usize, usize)>> {
    let t = template(template_name)?;
    let layers = archspace::resolve_channels(&t, &code(&ratios)?).map_err(to_py)?;
    Ok(layers
        .into_iter()
        .filter(|l| matches!(l.kind, archspace::LayerKind::Conv | archspace::LayerKind::Fc))
        .map(|l| {
            let kind = if l.kind == archspace::LayerKind::Conv { "conv" } else { "fc" };
            (l.name, kind.to_string(), l.in_channels, l.out_channels)
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (acc_percent, flops_norm, lam = 4.0))]
fn fitness(acc_percent: f64, flops_norm: f64, lam: f64) -> f64 {
    bnas::evosearch::fitness(acc_percent, flops_norm, lam)
}

/// Returns (scale, binarized weights) for a flat weight list.
#[pyfunction]
fn binarize_weights(w: Vec<f32>) -> PyResult<(f32, Vec<f32>)> {
    let t = Tensor::new(&[w.len()], w).map_err(to_py)?;
    let b = bnas::binquant::binarize_weights(&t).map_err(to_py)?;
    Ok((b.scale, b.reconstruct().into_data()))
}

#[pyfunction]
fn binarize_activations(x: Vec<f32>) -> PyResult<Vec<f32>> {
    let t = Tensor::new(&[x.len()], x).map_err(to_py)?;
    Ok(bnas::binquant::binarize_activations(&t).values.into_data())
}

/// A trainable network for one (template, code) pair.
#[pyclass(unsendable)]
struct Network {
    inner: archspace::Network,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (template_name, ratios, seed = 0))]
    fn new(template_name: &str, ratios: Vec<f64>, seed: u64) -> PyResult<Self> {
        let inner = archspace::instantiate(&template(template_name)?, &code(&ratios)?, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::read(&path).map_err(to_py)?;
        Ok(Self {
            inner: archspace::Network::from_checkpoint(&ckpt).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().write(&path).map_err(to_py)
    }

    #[getter]
    fn template(&self) -> String {
        self.inner.template_name().to_string()
    }

    #[getter]
    fn ratios(&self) -> Vec<f64> {
        self.inner.code().as_f64s()
    }

    /// Eval-mode logits for a flat batch of images, returned as one list per image.
    fn forward(&mut self, images: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let [c, h, w] = self.inner.input_dims();
        let x = Tensor::new(&[batch, c, h, w], images).map_err(to_py)?;
        let y = self.inner.forward(&x, Mode::Eval).map_err(to_py)?;
        let k = self.inner.classes();
        Ok(y.data().chunks(k).map(|r| r.to_vec()).collect())
    }
}

/// Slices a supernet checkpoint file down to `ratios` and writes the result.
#[pyfunction]
fn inherit_weights(supernet: PathBuf, ratios: Vec<f64>, out: PathBuf) -> PyResult<()> {
    let s = Checkpoint::read(&supernet).map_err(to_py)?;
    let t = template(&s.meta.template)?;
    archspace::inherit_weights(&s, &t, &code(&ratios)?)
        .and_then(|c| c.write(&out))
        .map_err(to_py)
}

/// Runs or resumes the search described by a TOML config; returns the best individual.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir = None))]
fn run_search<'py>(py: Python<'py>, config_path: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::load(&config_path).map_err(to_py)?;
    if let Some(o) = out_dir {
        cfg.output_dir = o;
    }
    let summary = py.detach(|| harness::run_search(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("ratios", summary.best.code.as_f64s())?;
    d.set_item("acc", summary.best.acc)?;
    d.set_item("flops_norm", summary.best.cost.flops_norm)?;
    d.set_item("fitness", summary.best.fitness)?;
    d.set_item("run_dir", summary.run_dir)?;
    Ok(d)
}

/// Reads a code file written by a search: (template, ratios).
#[pyfunction]
fn read_code_file(path: PathBuf) -> PyResult<(String, Vec<f64>)> {
    let f = CodeFile::read(&path).map_err(to_py)?;
    Ok((f.template, f.ratios.as_f64s()))
}

#[pymodule]
fn bnas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(n_genes, m)?)?;
    m.add_function(wrap_pyfunction!(count_cost, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_channels, m)?)?;
    m.add_function(wrap_pyfunction!(fitness, m)?)?;
    m.add_function(wrap_pyfunction!(binarize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(binarize_activations, m)?)?;
    m.add_function(wrap_pyfunction!(inherit_weights, m)?)?;
    m.add_function(wrap_pyfunction!(run_search, m)?)?;
    m.add_function(wrap_pyfunction!(read_code_file, m)?)?;
    m.add_class::<Network>()?;
    m.add("TEMPLATES", archspace::TEMPLATE_NAMES.to_vec())?;
    Ok(())
}
