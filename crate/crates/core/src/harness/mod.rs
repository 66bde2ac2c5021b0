//! Scenarios, experiment sweeps, metrics and reports.

mod metrics;
mod output;
mod report;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::demand::{generate, DemandConfig, DemandInstance, RateConfig, TransferPolicy};
use crate::error::{Error, Result};
use crate::formulation::ModelParams;
use crate::linearization::{assemble_milp, build_discretization, DiscretizationSets, LinearModel};
use crate::network::{GridNetwork, NetworkConfig};
use crate::solver::{branch_and_bound, enumerate_exhaustive, Solution, SolverOptions};

pub use metrics::{compute_metrics, Metrics};
pub use output::{read_solution_json, solution_json, MetricsRow, SolutionRecord, METRICS_HEADER};
pub use report::{report, Report};
pub use sweep::{sweep, write_sweep, SweepParam, SweepPoint, SweepTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small enough for exact search and exhaustive checks.
    Desk,
    /// The published experiment sizes.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub headway_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Bnb,
    Oracle,
    /// Branch and bound, plus the LP file in the output directory.
    Export,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub mode: SolverMode,
    #[serde(flatten)]
    pub options: SolverOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    /// Numbers, or `"lo:hi"` strings for headway bounds.
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkConfig,
    pub demand: DemandConfig,
    pub params: ModelParams,
    pub discretization: DiscretizationConfig,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub output_dir: PathBuf,
    /// Off by default so that repeated runs write identical files.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Scenario {
    pub fn profile(profile: Profile) -> Scenario {
        match profile {
            Profile::Desk => Scenario {
                name: "desk".into(),
                network: NetworkConfig {
                    n: 4,
                    segment_length_km: 2.0,
                    cruise_speed_kmpm: 1.0,
                    dwell_min: 0.5,
                    turnaround_min: 5.0,
                    active_lines: None,
                    tr_override: Default::default(),
                },
                demand: DemandConfig {
                    periods: 2,
                    peak: vec![0],
                    rates: RateConfig { peak: (5.0, 20.0), offpeak: (5.0, 20.0) },
                    seed: 42,
                    transfer_policy: TransferPolicy::RowFirst,
                    scale: 1.0,
                },
                params: ModelParams {
                    fleet_size: 150,
                    dispatches_per_period: 3,
                    periods: 2,
                    ..ModelParams::paper_defaults()
                },
                discretization: DiscretizationConfig { headway_step: 2.0 },
                solver: SolverConfig { mode: SolverMode::Bnb, options: SolverOptions::default() },
                sweep: None,
                output_dir: PathBuf::from("runs/desk"),
                record_wall_time: false,
            },
            Profile::Paper => Scenario {
                name: "paper".into(),
                network: NetworkConfig {
                    n: 8,
                    segment_length_km: 1.0,
                    cruise_speed_kmpm: 1.0,
                    dwell_min: 0.5,
                    turnaround_min: 5.0,
                    active_lines: None,
                    tr_override: Default::default(),
                },
                demand: DemandConfig {
                    periods: 4,
                    peak: vec![0, 3],
                    rates: RateConfig { peak: (5.0, 20.0), offpeak: (5.0, 20.0) },
                    seed: 42,
                    transfer_policy: TransferPolicy::RowFirst,
                    scale: 1.0,
                },
                params: ModelParams::paper_defaults(),
                discretization: DiscretizationConfig { headway_step: 1.0 },
                solver: SolverConfig { mode: SolverMode::Bnb, options: SolverOptions::default() },
                sweep: None,
                output_dir: PathBuf::from("runs/paper"),
                record_wall_time: false,
            },
        }
    }

    /// Profile defaults with `overrides` merged in key by key.
    pub fn from_json(profile: Profile, overrides: &Value) -> Result<Scenario> {
        let mut base = serde_json::to_value(Scenario::profile(profile))?;
        merge(&mut base, overrides);
        let scenario: Scenario =
            serde_json::from_value(base).map_err(|e| Error::config(format!("scenario config: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Scenario> {
        let overrides = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        Scenario::from_json(profile, &overrides)
    }

    pub fn validate(&self) -> Result<()> {
        GridNetwork::from_config(&self.network)?;
        self.params.validate()?;
        if self.demand.periods != self.params.periods {
            return Err(Error::config(format!(
                "demand has {} periods but params.T is {}",
                self.demand.periods, self.params.periods
            )));
        }
        self.demand.to_spec()?;
        build_discretization(&self.params, self.discretization.headway_step)?;
        if let Some(spec) = &self.sweep {
            for v in &spec.values {
                let point = SweepPoint::from_value(spec.param, v)?;
                let mut s = self.clone();
                s.sweep = None;
                point.apply(&mut s);
                s.validate()?;
            }
        }
        Ok(())
    }

    pub fn network(&self) -> Result<GridNetwork> {
        GridNetwork::from_config(&self.network)
    }

    pub fn sets(&self) -> Result<DiscretizationSets> {
        build_discretization(&self.params, self.discretization.headway_step)
    }

    pub fn generate_demand(&self, network: &GridNetwork) -> Result<DemandInstance> {
        generate(network, &self.demand.to_spec()?, self.demand.transfer_policy)
    }

    pub fn build_model(&self) -> Result<LinearModel> {
        let network = self.network()?;
        let demand = self.generate_demand(&network)?;
        assemble_milp(&network, &demand, &self.params, &self.sets()?)
    }
}

/// Recursively overlays `patch` on `base`; objects merge, everything else
/// replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

pub struct RunOutput {
    pub demand: DemandInstance,
    pub solution: Solution,
    pub metrics: Metrics,
}

/// Generates demand, solves and computes metrics. Writes nothing.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    let network = scenario.network()?;
    let demand = scenario.generate_demand(&network)?;
    let sets = scenario.sets()?;
    let solution = match scenario.solver.mode {
        SolverMode::Bnb | SolverMode::Export => {
            branch_and_bound(&network, &demand, &scenario.params, &sets, &scenario.solver.options)?
        }
        SolverMode::Oracle => {
            enumerate_exhaustive(&network, &demand, &scenario.params, &sets, scenario.solver.options.assignment)?
        }
    };
    let metrics = compute_metrics(&solution, &network, &scenario.params);
    Ok(RunOutput { demand, solution, metrics })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_demand_csv(demand: &DemandInstance, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    demand.write_line_od_csv(&mut buf)?;
    write_file(path, &buf)
}

/// Writes `demand.csv`, `solution.json` and `metrics.csv` (plus `model.lp`
/// in export mode) to the scenario's output directory.
pub fn write_run(scenario: &Scenario, run: &RunOutput) -> Result<()> {
    let dir = &scenario.output_dir;
    write_demand_csv(&run.demand, &dir.join("demand.csv"))?;
    let json = solution_json(scenario, &run.solution, &run.metrics)?;
    write_file(&dir.join("solution.json"), json.as_bytes())?;
    let row = MetricsRow::from_run(scenario, "baseline", "", Ok(&run.metrics), &run.solution);
    output::write_metrics_csv(&dir.join("metrics.csv"), &[row])?;
    if scenario.solver.mode == SolverMode::Export {
        export_model(scenario)?;
    }
    Ok(())
}

/// Writes `model.lp` and `model_stats.json`.
pub fn export_model(scenario: &Scenario) -> Result<LinearModel> {
    let model = scenario.build_model()?;
    let dir = &scenario.output_dir;
    write_file(&dir.join("model.lp"), crate::linearization::export_lp(&model).as_bytes())?;
    write_file(&dir.join("model_stats.json"), crate::linearization::stats_json(&model).as_bytes())?;
    Ok(model)
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub search: Solution,
    pub exhaustive: Solution,
}

impl OracleReport {
    pub fn matches(&self) -> bool {
        self.search.objective == self.exhaustive.objective
    }
}

/// Solves the scenario both by search and by enumeration.
pub fn oracle_check(scenario: &Scenario) -> Result<OracleReport> {
    let network = scenario.network()?;
    let demand = scenario.generate_demand(&network)?;
    let sets = scenario.sets()?;
    let exhaustive =
        enumerate_exhaustive(&network, &demand, &scenario.params, &sets, scenario.solver.options.assignment)?;
    let search = branch_and_bound(&network, &demand, &scenario.params, &sets, &scenario.solver.options)?;
    Ok(OracleReport { search, exhaustive })
}
