//! Python bindings: run configuration, pipeline commands, datasets, trained
//! sentence models and the evaluation metrics.

use std::path::PathBuf;

use dsgan::commands::Run;
use dsgan::config::RunConfig;
use dsgan::data::{load_dataset, DatasetSplits, Instance};
use dsgan::encoder::{EncoderConfig, SentenceModel};
use dsgan::nn::ParamSnapshot;
use dsgan::DsganError;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: DsganError) -> PyErr {
    match e.exit_code() {
        2 if matches!(e, DsganError::Io { .. }) => PyIOError::new_err(e.to_string()),
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run configuration in `key = value` form.
#[pyclass(name = "RunConfig")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        let inner = RunConfig::parse(text, "<python>".as_ref()).map_err(to_py)?;
        Ok(PyRunConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: RunConfig::load(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        RunConfig::KEYS.to_vec()
    }

    /// Sets one key; the whole config is validated afterwards.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(PyValueError::new_err)?;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    fn get(&self, key: &str) -> PyResult<String> {
        let prefix = format!("{key} = ");
        self.inner
            .to_text()
            .lines()
            .find_map(|l| l.strip_prefix(&prefix).map(String::from))
            .ok_or_else(|| PyValueError::new_err(format!("unknown key `{key}`")))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(seed={})", self.inner.seed)
    }
}

/// Runs one pipeline command (`synth`, `pretrain`, ..., `all`) and returns
/// its summary text.
#[pyfunction]
#[pyo3(signature = (command, config, out, relation = None))]
fn run_command(py: Python<'_>, command: &str, config: &PyRunConfig, out: PathBuf, relation: Option<String>) -> PyResult<String> {
    let run = Run::new(config.inner.clone(), out, relation);
    py.detach(|| run.execute(command)).map_err(to_py)
}

/// A dataset directory loaded into memory. Truth flags are not exposed.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: DatasetSplits,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: load_dataset(&dir).map_err(to_py)?,
        })
    }

    /// Instance counts per split.
    fn counts(&self) -> Vec<(String, usize)> {
        self.inner.named().iter().map(|(n, s)| (n.to_string(), s.len())).collect()
    }

    fn relations(&self) -> Vec<String> {
        self.inner.relations()
    }

    fn min_vocab_size(&self) -> usize {
        self.inner.min_vocab_size()
    }

    /// `(id, relation, tokens, head_pos, tail_pos)` for every instance of
    /// `split`.
    fn instances(&self, split: &str) -> PyResult<Vec<(String, String, Vec<usize>, usize, usize)>> {
        let set = self
            .inner
            .named()
            .into_iter()
            .find(|(n, _)| *n == split)
            .map(|(_, s)| s)
            .ok_or_else(|| PyValueError::new_err(format!("unknown split `{split}`")))?;
        Ok(set
            .iter()
            .map(|i| (i.id.clone(), i.relation.clone(), i.tokens.clone(), i.head_pos, i.tail_pos))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Sentence encoder with a sigmoid output, restored from a checkpoint.
#[pyclass(name = "SentenceModel")]
struct PySentenceModel {
    inner: SentenceModel,
}

#[pymethods]
impl PySentenceModel {
    /// Builds the layout from the config's encoder section and `vocab_size`,
    /// then restores parameters from a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf, config: &PyRunConfig, vocab_size: usize) -> PyResult<Self> {
        let enc = EncoderConfig {
            vocab_size,
            ..config.inner.encoder
        };
        let mut inner = SentenceModel::new(enc, &mut ChaCha8Rng::seed_from_u64(0)).map_err(to_py)?;
        inner.params.restore(&ParamSnapshot::load(&path).map_err(to_py)?).map_err(to_py)?;
        Ok(PySentenceModel { inner })
    }

    /// Probability that the sentence expresses the relation.
    fn predict(&self, tokens: Vec<usize>, head_pos: usize, tail_pos: usize) -> PyResult<f64> {
        let inst = Instance::new("py", ("h".into(), "t".into()), "py", tokens, head_pos, tail_pos).map_err(to_py)?;
        self.inner.predict_prob(&inst).map_err(to_py)
    }

    /// Scores every instance of one split of `dataset`.
    fn score_split(&self, dataset: &PyDataset, split: &str) -> PyResult<Vec<f64>> {
        let set = dataset
            .inner
            .named()
            .into_iter()
            .find(|(n, _)| *n == split)
            .map(|(_, s)| s)
            .ok_or_else(|| PyValueError::new_err(format!("unknown split `{split}`")))?;
        self.inner.score_all(set).map_err(to_py)
    }

    fn num_params(&self) -> usize {
        self.inner.params.num_coords()
    }
}

/// `(recall, precision)` after each prefix of the ranking.
#[pyfunction]
fn pr_curve(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Vec<(f64, f64)>> {
    Ok(dsgan::eval::pr_curve(&scores, &labels).map_err(to_py)?.points)
}

/// Area under the precision/recall curve of a ranking.
#[pyfunction]
fn pr_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    Ok(dsgan::eval::auc(&dsgan::eval::pr_curve(&scores, &labels).map_err(to_py)?))
}

/// Paired two-sided t-test of `a` against `b`; returns `(t, p)`.
#[pyfunction]
fn paired_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = dsgan::eval::paired_t_test(&a, &b).map_err(to_py)?;
    Ok((r.t, r.p))
}

#[pymodule]
fn dsgan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySentenceModel>()?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add_function(wrap_pyfunction!(pr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add("COMMANDS", dsgan::commands::COMMANDS.to_vec())?;
    Ok(())
}
