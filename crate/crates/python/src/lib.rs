//! Python bindings: load a case, run the forward model, reconstruct from
//! sensor readings and generate heat-goal options, all in memory.

use heatrecon_core::inverse::{reconstruct_series, StepDiagnostics};
use heatrecon_core::multichoice::max_field_difference;
use heatrecon_core::runner::layout_nodes;
use heatrecon_core::{
    assemble_flux_load, error_metrics, generate_options, read_case_config, run_forward, CaseConfig, CaseModel, Error,
    MeasurementSeries, TransientSolution,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    heatrecon,
    HeatreconError,
    PyValueError,
    "Invalid input or configuration."
);
create_exception!(
    heatrecon,
    NumericalError,
    HeatreconError,
    "A solve or factorization broke down."
);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => NumericalError::new_err(e.to_string()),
        e => HeatreconError::new_err(e.to_string()),
    }
}

/// A temperature history: `fields[s][i]` is node `i` at `times[s]`.
#[pyclass(frozen, get_all, module = "heatrecon")]
struct History {
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
    /// Recovered nodal heat load on the heated surface, when known.
    flux_loads: Option<Vec<Vec<f64>>>,
    /// Final per-step loss of the optimizer (empty for forward runs).
    losses: Vec<f64>,
    gradient_norms: Vec<f64>,
}

impl History {
    fn new(solution: TransientSolution, diagnostics: &[StepDiagnostics]) -> Self {
        Self {
            times: solution.times,
            fields: solution.fields,
            flux_loads: solution.recovered_fq,
            losses: diagnostics.iter().map(StepDiagnostics::loss).collect(),
            gradient_norms: diagnostics.iter().map(|d| d.trace.gradient_norm).collect(),
        }
    }

    fn solution(&self) -> TransientSolution {
        TransientSolution {
            times: self.times.clone(),
            fields: self.fields.clone(),
            recovered_fq: None,
        }
    }
}

#[pymethods]
impl History {
    fn __len__(&self) -> usize {
        self.times.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "History(steps={}, t_end={})",
            self.times.len(),
            self.times.last().copied().unwrap_or(0.0)
        )
    }

    /// Largest nodal difference to another history over their common steps.
    fn max_difference(&self, other: &History) -> f64 {
        max_field_difference(&self.solution(), &other.solution())
    }
}

/// A case file with its mesh and assembled system.
#[pyclass(frozen, module = "heatrecon")]
struct Case {
    config: CaseConfig,
    model: CaseModel,
}

impl Case {
    fn build(config: CaseConfig) -> PyResult<Self> {
        let model = config.build_model().map_err(to_py)?;
        Ok(Self { config, model })
    }
}

#[pymethods]
impl Case {
    #[new]
    fn new(path: std::path::PathBuf) -> PyResult<Self> {
        Self::build(read_case_config(&path).map_err(to_py)?)
    }

    /// Parses a case from TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::build(CaseConfig::parse(text).map_err(to_py)?)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.model.mesh.n_nodes()
    }

    #[getter]
    fn layouts(&self) -> Vec<String> {
        self.config
            .reconstruction
            .layouts
            .iter()
            .map(|l| l.name.clone())
            .collect()
    }

    fn node_coordinates(&self) -> Vec<(f64, f64, f64)> {
        self.model.mesh.nodes().iter().map(|p| (p[0], p[1], p[2])).collect()
    }

    /// Mesh nodes of a named sensor layout, in file order.
    fn layout_nodes(&self, name: &str) -> PyResult<Vec<usize>> {
        let layout = self.config.layout(name).map_err(to_py)?;
        layout_nodes(&self.model.mesh, &layout.points).map_err(to_py)
    }

    /// Forward solution from the ambient state under the case's flux schedule.
    #[pyo3(signature = (dt_ref=None))]
    fn forward(&self, py: Python<'_>, dt_ref: Option<f64>) -> PyResult<History> {
        let dt = dt_ref.unwrap_or(self.config.forward.dt_ref);
        let solution = py
            .detach(|| {
                let unit = assemble_flux_load(&self.model.mesh, &self.model.sets, 1.0)?;
                let t0 = vec![self.config.material.t_ambient; self.model.mesh.n_nodes()];
                run_forward(&self.model.system, &t0, dt, self.config.forward.t_end, |t| {
                    let q = self.config.forward.flux.q_inward(t);
                    unit.iter().map(|u| u * q).collect()
                })
            })
            .map_err(to_py)?;
        Ok(History::new(solution, &[]))
    }

    /// Reconstructs the history from readings `values[s][m]` of node
    /// `node_ids[m]` at `times[s]`.
    #[pyo3(signature = (times, node_ids, values, dt_rec=None, c3=None))]
    fn reconstruct(
        &self,
        py: Python<'_>,
        times: Vec<f64>,
        node_ids: Vec<usize>,
        values: Vec<Vec<f64>>,
        dt_rec: Option<f64>,
        c3: Option<f64>,
    ) -> PyResult<History> {
        if values.len() != times.len() || values.iter().any(|v| v.len() != node_ids.len()) {
            return Err(HeatreconError::new_err(
                "values must have one row per time and one column per node",
            ));
        }
        let series = MeasurementSeries {
            node_ids,
            times,
            values,
            noise_stddev: None,
        };
        let mut cfg = self.config.reconstruction_config();
        if let Some(dt) = dt_rec {
            cfg.dt_rec = dt;
        }
        if let Some(c3) = c3 {
            cfg.weights.c3 = c3;
        }
        let run = py
            .detach(|| reconstruct_series(&self.model.system, &cfg, &series))
            .map_err(to_py)?;
        Ok(History::new(run.solution, &run.diagnostics))
    }

    /// Relative (percent) and absolute errors of `reconstructed` against `reference`.
    fn error_metrics<'py>(
        &self,
        py: Python<'py>,
        reconstructed: &History,
        reference: &History,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = error_metrics(&reconstructed.solution(), &reference.solution()).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("avg_rel_pct", r.avg_rel_pct)?;
        d.set_item("max_rel_pct", r.max_rel_pct)?;
        d.set_item("avg_abs", r.avg_abs)?;
        d.set_item("max_abs", r.max_abs)?;
        d.set_item(
            "per_step_avg_rel_pct",
            r.per_step.iter().map(|s| s.avg_rel_pct).collect::<Vec<_>>(),
        )?;
        Ok(d)
    }

    /// Generates one option per (c4, seed) pair. Each result is a dict with
    /// `c4`, `seed` and either `history`, `heat`, `goal`, `avg_rel_pct` and
    /// `max_rel_pct`, or `error` when that option failed.
    #[pyo3(signature = (seeds=None, c4=None, jobs=None))]
    fn generate<'py>(
        &self,
        py: Python<'py>,
        seeds: Option<Vec<u64>>,
        c4: Option<Vec<f64>>,
        jobs: Option<usize>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let gen = self
            .config
            .generation
            .as_ref()
            .ok_or_else(|| HeatreconError::new_err("the case has no [generation] section"))?;
        let base = self.config.generation_configs().map_err(to_py)?;
        let seeds = seeds.unwrap_or_else(|| gen.seeds.clone());
        let c4s = c4.unwrap_or_else(|| gen.c4.clone());
        let configs: Vec<_> = c4s
            .iter()
            .flat_map(|&c4| seeds.iter().map(move |&seed| (c4, seed)))
            .map(|(c4, seed)| heatrecon_core::GenerationConfig { c4, seed, ..base[0] })
            .collect();
        let runs = py
            .detach(|| generate_options(&self.model.system, &configs, &gen.heat_goal, jobs))
            .map_err(to_py)?;
        let mut out = Vec::with_capacity(runs.len());
        for (cfg, run) in configs.iter().zip(runs) {
            let d = PyDict::new(py);
            d.set_item("c4", cfg.c4)?;
            d.set_item("seed", cfg.seed)?;
            match run {
                Ok(run) => {
                    let s = run.heat_summary();
                    d.set_item("avg_rel_pct", s.avg_rel_pct)?;
                    d.set_item("max_rel_pct", s.max_rel_pct)?;
                    d.set_item("heat", run.heat.iter().map(|h| h.total_heat).collect::<Vec<_>>())?;
                    d.set_item("goal", run.heat.iter().map(|h| h.goal).collect::<Vec<_>>())?;
                    d.set_item("history", History::new(run.solution, &run.diagnostics))?;
                }
                Err(e) => d.set_item("error", e.to_string())?,
            }
            out.push(d);
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        let g = &self.config.geometry;
        format!(
            "Case(lengths={:?}, divisions={:?}, nodes={})",
            g.lengths,
            g.divisions,
            self.model.mesh.n_nodes()
        )
    }
}

#[pymodule]
fn heatrecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HeatreconError", m.py().get_type::<HeatreconError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Case>()?;
    m.add_class::<History>()?;
    Ok(())
}
