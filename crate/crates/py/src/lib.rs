//! Python bindings for the SDN synchronization simulator: the environment,
//! the synchronization policies, and the experiment harness.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sdnsync::agents::{build_policy, load_policy, AgentConfigs, SynchronizerPolicy};
use sdnsync::env::{EnvConfig, SdnEnv, SyncAction, SyncState};
use sdnsync::harness::{compare_dir, run_experiment, write_outputs, ExperimentSpec};

fn to_py_err(e: sdnsync::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_env_config(toml_text: &str) -> PyResult<EnvConfig> {
    let cfg: EnvConfig =
        toml::from_str(toml_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

/// Simulator of a multi-domain SDN with partial controller synchronization.
#[pyclass]
struct Env {
    inner: SdnEnv,
}

#[pymethods]
impl Env {
    /// Build from a TOML environment config (same schema as the `[env]`
    /// block of an experiment file) and a seed.
    #[new]
    fn new(config_toml: &str, seed: u64) -> PyResult<Self> {
        let cfg = parse_env_config(config_toml)?;
        let (inner, _) = SdnEnv::reset(&cfg, seed).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Current per-domain staleness vector.
    fn state(&self) -> Vec<u32> {
        self.inner.state().staleness
    }

    fn n_domains(&self) -> usize {
        self.inner.n_domains()
    }

    /// Start a new episode on the same evolving network; returns the state.
    fn reset_episode(&mut self) -> Vec<u32> {
        self.inner.reset_episode().staleness
    }

    /// Apply one synchronization action (a sorted list of domain ids,
    /// excluding 0) and advance one period. Returns a dict of step metrics.
    fn step<'py>(&mut self, py: Python<'py>, selected: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
        let n = self.inner.n_domains();
        let sb = self.inner.cfg.sb;
        let index = sdnsync::env::decode_action(n, sb, &selected).map_err(to_py_err)?;
        let action = SyncAction { selected, index };
        let outcome = self.inner.step(&action).map_err(to_py_err)?;
        let d = PyDict::new(py);
        d.set_item("reward", outcome.reward)?;
        d.set_item("tasks_total", outcome.tasks_total)?;
        d.set_item("tasks_compliant", outcome.tasks_compliant)?;
        d.set_item("tasks_correct_server", outcome.tasks_correct_server)?;
        d.set_item("tasks_infeasible", outcome.tasks_infeasible)?;
        d.set_item("realized_cost_sum", outcome.realized_cost_sum)?;
        d.set_item("next_state", outcome.next_state.staleness)?;
        Ok(d)
    }
}

/// One synchronization policy: d2q, dqn, ppo, random, or round_robin.
#[pyclass(unsendable)]
struct Policy {
    inner: Box<dyn SynchronizerPolicy>,
    max_staleness: u32,
}

#[pymethods]
impl Policy {
    #[new]
    fn new(name: &str, config_toml: &str, seed: u64) -> PyResult<Self> {
        let cfg = parse_env_config(config_toml)?;
        let inner = build_policy(name, &cfg, &AgentConfigs::default(), seed).map_err(to_py_err)?;
        Ok(Self {
            inner,
            max_staleness: cfg.max_staleness,
        })
    }

    /// Restore a policy from a checkpoint JSON string.
    #[staticmethod]
    fn load(checkpoint_json: &str, max_staleness: u32) -> PyResult<Self> {
        let value: serde_json::Value = serde_json::from_str(checkpoint_json)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = load_policy(&value).map_err(to_py_err)?;
        Ok(Self {
            inner,
            max_staleness,
        })
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    /// Choose a budget-respecting subset of domains for the given staleness
    /// vector. `explore=True` enables training-time stochasticity.
    fn act(&mut self, staleness: Vec<u32>, explore: bool) -> Vec<usize> {
        self.inner
            .act(&SyncState { staleness }, explore)
            .selected
    }

    /// Feed back one transition; learning policies may update here.
    fn observe(
        &mut self,
        staleness: Vec<u32>,
        selected: Vec<usize>,
        reward: f64,
        next_staleness: Vec<u32>,
    ) -> PyResult<()> {
        let n = staleness.len();
        let sb = selected.len();
        let index = sdnsync::env::decode_action(n, sb, &selected).map_err(to_py_err)?;
        let t = sdnsync::nn::Transition {
            state: sdnsync::env::normalize_state(&SyncState { staleness }, self.max_staleness),
            action_index: index,
            reward,
            next_obs: sdnsync::env::normalize_state(
                &SyncState {
                    staleness: next_staleness,
                },
                self.max_staleness,
            ),
        };
        self.inner.observe(t).map_err(to_py_err)
    }

    fn end_episode(&mut self, episode: usize) -> PyResult<()> {
        self.inner.end_episode(episode).map_err(to_py_err)
    }

    /// Serialize the policy's parameters to a checkpoint JSON string.
    fn checkpoint(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.checkpoint())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Run a full experiment from a TOML spec string, write metrics.csv,
/// summary.json, and checkpoints into `out_dir`, and return the per-policy
/// summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (spec_toml, out_dir, threads = 0))]
fn run(spec_toml: &str, out_dir: &str, threads: usize) -> PyResult<String> {
    let spec = ExperimentSpec::from_toml(spec_toml).map_err(to_py_err)?;
    let output = run_experiment(&spec, threads).map_err(to_py_err)?;
    write_outputs(&output, std::path::Path::new(out_dir), spec.debug_dump).map_err(to_py_err)?;
    serde_json::to_string(&output.summaries).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Read summary.json from a run directory, write report.json beside it, and
/// return the report as a JSON string.
#[pyfunction]
fn compare(run_dir: &str) -> PyResult<String> {
    let report = compare_dir(std::path::Path::new(run_dir)).map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Number of size-`sb` subsets of the peer domains of an `n`-domain network.
#[pyfunction]
fn action_space_size(n_domains: usize, sb: usize) -> PyResult<usize> {
    sdnsync::env::action_space_size(n_domains, sb).map_err(to_py_err)
}

#[pymodule]
fn sdnsync_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(action_space_size, m)?)?;
    Ok(())
}
