use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::output::{metrics_csv_bytes, MetricsRow};
use super::{run_scenario, write_file, Scenario};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DemandScale,
    HeadwayBounds,
    LMax,
    FleetSize,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::DemandScale => "demand_scale",
            SweepParam::HeadwayBounds => "headway_bounds",
            SweepParam::LMax => "l_max",
            SweepParam::FleetSize => "fleet_size",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::DemandScale, SweepParam::HeadwayBounds, SweepParam::LMax, SweepParam::FleetSize]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown sweep parameter '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepPoint {
    DemandScale(f64),
    HeadwayBounds(f64, f64),
    LMax(u32),
    FleetSize(u32),
}

impl SweepPoint {
    pub fn parse(param: SweepParam, text: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad {} value '{text}'", param.name()));
        let t = text.trim();
        Ok(match param {
            SweepParam::DemandScale => SweepPoint::DemandScale(t.parse().map_err(|_| bad())?),
            SweepParam::LMax => SweepPoint::LMax(t.parse().map_err(|_| bad())?),
            SweepParam::FleetSize => SweepPoint::FleetSize(t.parse().map_err(|_| bad())?),
            SweepParam::HeadwayBounds => {
                let (lo, hi) = t.split_once(':').ok_or_else(bad)?;
                SweepPoint::HeadwayBounds(lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?)
            }
        })
    }

    pub fn from_value(param: SweepParam, v: &Value) -> Result<Self> {
        match v {
            Value::String(s) => Self::parse(param, s),
            Value::Number(n) => Self::parse(param, &n.to_string()),
            other => Err(Error::config(format!("bad {} value {other}", param.name()))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepPoint::DemandScale(v) => format!("{v}"),
            SweepPoint::HeadwayBounds(lo, hi) => format!("{lo}:{hi}"),
            SweepPoint::LMax(v) | SweepPoint::FleetSize(v) => format!("{v}"),
        }
    }

    pub fn apply(&self, scenario: &mut Scenario) {
        match *self {
            SweepPoint::DemandScale(v) => scenario.demand.scale = v,
            SweepPoint::HeadwayBounds(lo, hi) => {
                scenario.params.h_min = lo;
                scenario.params.h_max = hi;
            }
            SweepPoint::LMax(v) => scenario.params.l_max = v,
            SweepPoint::FleetSize(v) => scenario.params.fleet_size = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    /// In sweep-value order.
    pub rows: Vec<MetricsRow>,
}

impl SweepTable {
    pub fn csv(&self) -> Result<Vec<u8>> {
        metrics_csv_bytes(&self.rows)
    }

    /// `value avg_headway` pairs for plotting; infeasible points are skipped.
    pub fn headway_plot_data(&self) -> String {
        let mut out = format!("# {} avg_headway\n", self.param.name());
        for r in &self.rows {
            if let Some(h) = r.avg_headway {
                let _ = writeln!(out, "{} {}", r.value, h);
            }
        }
        out
    }
}

/// Runs the scenario once per value. Points that fail to solve become rows
/// with a status and no metrics; invalid values fail the whole sweep.
pub fn sweep(scenario: &Scenario, param: SweepParam, values: &[String]) -> Result<SweepTable> {
    let points: Vec<SweepPoint> = values.iter().map(|v| SweepPoint::parse(param, v)).collect::<Result<_>>()?;
    let scenarios: Vec<Scenario> = points
        .iter()
        .map(|p| {
            let mut s = scenario.clone();
            s.sweep = None;
            p.apply(&mut s);
            s.validate().map(|_| s)
        })
        .collect::<Result<_>>()?;
    let rows = scenarios
        .par_iter()
        .zip(points.par_iter())
        .map(|(s, p)| match run_scenario(s) {
            Ok(run) => MetricsRow::from_run(s, param.name(), &p.label(), Ok(&run.metrics), &run.solution),
            Err(e) => MetricsRow::failed(s, param.name(), &p.label(), &super::output::status_of(&e)),
        })
        .collect();
    Ok(SweepTable { param, rows })
}

/// Writes `sweep_<param>.csv` and `sweep_<param>_headway.dat` into `dir`.
pub fn write_sweep(table: &SweepTable, dir: &Path) -> Result<()> {
    let name = table.param.name();
    write_file(&dir.join(format!("sweep_{name}.csv")), &table.csv()?)?;
    write_file(&dir.join(format!("sweep_{name}_headway.dat")), table.headway_plot_data().as_bytes())
}
