//! Solution JSON and metrics CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Metrics, Scenario};
use crate::error::{Error, Result};
use crate::formulation::{FlowKey, ModelParams, NodeKey, PassengerFlow, Schedule, SlotKey};
use crate::network::{Direction, NetworkConfig};
use crate::solver::{Diagnostics, Optimality, Solution};

pub const METRICS_HEADER: [&str; 11] = [
    "scenario",
    "param",
    "value",
    "objective",
    "avg_headway",
    "total_pods",
    "load_factor",
    "seat_util",
    "status",
    "seed",
    "wall_time_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub period: usize,
    pub line: usize,
    pub dir: Direction,
    pub k: usize,
    pub x: f64,
    pub headway: f64,
    pub train_len: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub period: usize,
    pub line: usize,
    pub origin: usize,
    pub destination: usize,
    pub dir: Direction,
    pub k: usize,
    pub count: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnboardRecord {
    pub period: usize,
    pub line: usize,
    pub dir: Direction,
    pub k: usize,
    pub node: usize,
    pub load: f64,
}

/// Everything needed to rebuild a [`Solution`] and recompute its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub scenario: String,
    pub seed: u64,
    pub objective: f64,
    pub optimality: Optimality,
    pub network: NetworkConfig,
    pub params: ModelParams,
    pub metrics: Metrics,
    pub schedule: Vec<DispatchRecord>,
    /// Non-zero entries only.
    pub seated: Vec<FlowRecord>,
    pub waiting: Vec<FlowRecord>,
    pub onboard: Vec<OnboardRecord>,
    pub diagnostics: Diagnostics,
    pub wall_time_s: Option<f64>,
}

fn flow_records(map: &std::collections::BTreeMap<FlowKey, f64>) -> Vec<FlowRecord> {
    map.iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|(k, &v)| FlowRecord {
            period: k.period,
            line: k.line,
            origin: k.origin,
            destination: k.destination,
            dir: k.dir,
            k: k.k,
            count: v,
        })
        .collect()
}

impl SolutionRecord {
    pub fn new(scenario: &Scenario, solution: &Solution, metrics: &Metrics) -> Self {
        let schedule = solution
            .schedule
            .x
            .iter()
            .map(|(slot, &x)| DispatchRecord {
                period: slot.period,
                line: slot.line,
                dir: slot.dir,
                k: slot.k,
                x,
                headway: solution.flow.headways.get(slot).copied().unwrap_or(0.0),
                train_len: solution.schedule.train_len.get(slot).copied().unwrap_or(0),
            })
            .collect();
        let onboard = solution
            .flow
            .onboard
            .iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, &load)| OnboardRecord { period: k.period, line: k.line, dir: k.dir, k: k.k, node: k.node, load })
            .collect();
        SolutionRecord {
            scenario: scenario.name.clone(),
            seed: scenario.demand.seed,
            objective: solution.objective,
            optimality: solution.optimality,
            network: scenario.network.clone(),
            params: scenario.params.clone(),
            metrics: *metrics,
            schedule,
            seated: flow_records(&solution.flow.seated),
            waiting: flow_records(&solution.flow.waiting),
            onboard,
            diagnostics: solution.diagnostics.clone(),
            wall_time_s: scenario.record_wall_time.then_some(solution.diagnostics.wall_time.as_secs_f64()),
        }
    }

    pub fn to_solution(&self) -> Solution {
        let mut schedule = Schedule::default();
        let mut flow = PassengerFlow { objective_value: self.objective, ..Default::default() };
        for r in &self.schedule {
            let slot = SlotKey { period: r.period, line: r.line, dir: r.dir, k: r.k };
            schedule.x.insert(slot, r.x);
            schedule.train_len.insert(slot, r.train_len);
            flow.headways.insert(slot, r.headway);
        }
        let key = |r: &FlowRecord| FlowKey {
            line: r.line,
            period: r.period,
            origin: r.origin,
            destination: r.destination,
            dir: r.dir,
            k: r.k,
        };
        for r in &self.seated {
            flow.seated.insert(key(r), r.count);
        }
        for r in &self.waiting {
            flow.waiting.insert(key(r), r.count);
        }
        for r in &self.onboard {
            flow.onboard.insert(NodeKey { period: r.period, line: r.line, dir: r.dir, k: r.k, node: r.node }, r.load);
        }
        Solution {
            schedule,
            flow,
            objective: self.objective,
            optimality: self.optimality,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

pub fn solution_json(scenario: &Scenario, solution: &Solution, metrics: &Metrics) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&SolutionRecord::new(scenario, solution, metrics))?;
    s.push('\n');
    Ok(s)
}

pub fn read_solution_json(path: &Path) -> Result<SolutionRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedFile { path: path.to_path_buf(), message: e.to_string() })
}

/// One line of `metrics.csv` or a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub param: String,
    pub value: String,
    pub objective: Option<f64>,
    pub avg_headway: Option<f64>,
    pub total_pods: Option<u64>,
    pub load_factor: Option<f64>,
    pub seat_util: Option<i64>,
    pub status: String,
    pub seed: u64,
    pub wall_time_s: Option<f64>,
}

impl MetricsRow {
    pub fn from_run(
        scenario: &Scenario,
        param: &str,
        value: &str,
        metrics: std::result::Result<&Metrics, &Error>,
        solution: &Solution,
    ) -> Self {
        let mut row = MetricsRow::failed(scenario, param, value, "");
        match metrics {
            Ok(m) => {
                row.objective = Some(m.objective);
                row.avg_headway = Some(m.avg_headway);
                row.total_pods = Some(m.total_pods_dispatched);
                row.load_factor = Some(m.avg_load_factor);
                row.seat_util = Some(m.seat_utilization_index);
                row.status = solution.optimality.label().to_string();
                row.wall_time_s = scenario.record_wall_time.then_some(solution.diagnostics.wall_time.as_secs_f64());
            }
            Err(e) => row.status = status_of(e),
        }
        row
    }

    pub fn failed(scenario: &Scenario, param: &str, value: &str, status: &str) -> Self {
        MetricsRow {
            scenario: scenario.name.clone(),
            param: param.to_string(),
            value: value.to_string(),
            objective: None,
            avg_headway: None,
            total_pods: None,
            load_factor: None,
            seat_util: None,
            status: status.to_string(),
            seed: scenario.demand.seed,
            wall_time_s: None,
        }
    }
}

pub(crate) fn status_of(e: &Error) -> String {
    match e {
        Error::Infeasible(_) => "infeasible".into(),
        Error::InvalidConfig(_) => "invalid_config".into(),
        _ => "error".into(),
    }
}

pub(crate) fn metrics_csv_bytes(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

pub(crate) fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    super::write_file(path, &metrics_csv_bytes(rows)?)
}

pub(crate) fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let malformed = |message: String| Error::MalformedFile { path: path.to_path_buf(), message };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(malformed(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    rdr.deserialize().map(|r| r.map_err(|e| malformed(e.to_string()))).collect()
}
