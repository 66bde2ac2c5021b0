//! Grid topology of the air-transit network.
//!
//! An `n × n` grid of stops is covered by `n` row lines and `n` column lines.
//! Node `r * n + c` sits on row line `r` and column line `n + c`. Each line is
//! flown in two directions: [`Direction::Forward`] visits its nodes in
//! increasing position order, [`Direction::Reverse`] in decreasing order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type LineId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `d1`: increasing node position.
    #[serde(rename = "d1")]
    Forward,
    /// `d2`: decreasing node position.
    #[serde(rename = "d2")]
    Reverse,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Forward, Direction::Reverse];

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Forward => "d1",
            Direction::Reverse => "d2",
        }
    }

    /// Direction that serves travel from position `origin` to `destination`.
    pub fn serving(origin: usize, destination: usize) -> Option<Direction> {
        match origin.cmp(&destination) {
            std::cmp::Ordering::Less => Some(Direction::Forward),
            std::cmp::Ordering::Greater => Some(Direction::Reverse),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub axis: Axis,
    /// Row or column number within the grid.
    pub index: usize,
    /// Node ids in canonical (forward) order.
    pub nodes: Vec<NodeId>,
    /// Minutes, including dwell and turnaround.
    pub round_trip_time: f64,
}

impl Line {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of `node` on this line, if it lies on it.
    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }
}

/// Round-trip time of a pod train over `line`, in minutes:
/// `2 * ((N - 1) * segment_length / cruise_speed + N * dwell_time) + turnaround_overhead`.
pub fn round_trip_time(
    line: &Line,
    cruise_speed: f64,
    dwell_time: f64,
    segment_length: f64,
    turnaround_overhead: f64,
) -> f64 {
    debug_assert!(cruise_speed > 0.0);
    let n = line.len() as f64;
    let one_way = (n - 1.0) * segment_length / cruise_speed + n * dwell_time;
    2.0 * one_way + turnaround_overhead
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridNetwork {
    pub n_stops_per_line: usize,
    pub lines: Vec<Line>,
    /// Distance units per minute.
    pub cruise_speed: f64,
    /// Minutes per stop.
    pub dwell_time: f64,
    pub segment_length: f64,
    /// Minutes added per round trip; battery swaps are folded in here.
    pub turnaround_overhead: f64,
    active: Vec<LineId>,
    tr_override: BTreeMap<LineId, f64>,
}

/// Network section of the scenario config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n: usize,
    pub segment_length_km: f64,
    pub cruise_speed_kmpm: f64,
    pub dwell_min: f64,
    #[serde(default)]
    pub turnaround_min: f64,
    /// Defaults to the `n` row lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_lines: Option<Vec<LineId>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tr_override: BTreeMap<LineId, f64>,
}

/// Builds the full `n × n` grid with zero turnaround overhead.
pub fn build_grid(n: usize, segment_length: f64, cruise_speed: f64, dwell_time: f64) -> Result<GridNetwork> {
    GridNetwork::from_config(&NetworkConfig {
        n,
        segment_length_km: segment_length,
        cruise_speed_kmpm: cruise_speed,
        dwell_min: dwell_time,
        turnaround_min: 0.0,
        active_lines: None,
        tr_override: BTreeMap::new(),
    })
}

impl GridNetwork {
    pub fn from_config(cfg: &NetworkConfig) -> Result<Self> {
        let n = cfg.n;
        if n < 2 {
            return Err(Error::config(format!("grid needs n >= 2, got {n}")));
        }
        for (name, v) in [
            ("segment_length_km", cfg.segment_length_km),
            ("cruise_speed_kmpm", cfg.cruise_speed_kmpm),
            ("dwell_min", cfg.dwell_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(cfg.turnaround_min >= 0.0 && cfg.turnaround_min.is_finite()) {
            return Err(Error::config("turnaround_min must be >= 0"));
        }

        let mut lines = Vec::with_capacity(2 * n);
        for r in 0..n {
            lines.push(Line {
                id: r,
                axis: Axis::Row,
                index: r,
                nodes: (0..n).map(|c| r * n + c).collect(),
                round_trip_time: 0.0,
            });
        }
        for c in 0..n {
            lines.push(Line {
                id: n + c,
                axis: Axis::Column,
                index: c,
                nodes: (0..n).map(|r| r * n + c).collect(),
                round_trip_time: 0.0,
            });
        }

        let mut net = GridNetwork {
            n_stops_per_line: n,
            lines,
            cruise_speed: cfg.cruise_speed_kmpm,
            dwell_time: cfg.dwell_min,
            segment_length: cfg.segment_length_km,
            turnaround_overhead: cfg.turnaround_min,
            active: Vec::new(),
            tr_override: BTreeMap::new(),
        };
        for line in &mut net.lines {
            line.round_trip_time =
                round_trip_time(line, net.cruise_speed, net.dwell_time, net.segment_length, net.turnaround_overhead);
        }
        for (&id, &tr) in &cfg.tr_override {
            net.set_round_trip_override(id, tr)?;
        }
        match &cfg.active_lines {
            Some(ids) => net.set_active_lines(ids)?,
            None => net.active = (0..n).collect(),
        }
        Ok(net)
    }

    pub fn to_config(&self) -> NetworkConfig {
        NetworkConfig {
            n: self.n_stops_per_line,
            segment_length_km: self.segment_length,
            cruise_speed_kmpm: self.cruise_speed,
            dwell_min: self.dwell_time,
            turnaround_min: self.turnaround_overhead,
            active_lines: Some(self.active.clone()),
            tr_override: self.tr_override.clone(),
        }
    }

    /// Pins a line's round-trip time, bypassing the geometric formula.
    pub fn set_round_trip_override(&mut self, line: LineId, minutes: f64) -> Result<()> {
        if !(minutes > 0.0 && minutes.is_finite()) {
            return Err(Error::config(format!("round-trip override for line {line} must be positive, got {minutes}")));
        }
        let l =
            self.lines.get_mut(line).ok_or_else(|| Error::config(format!("tr_override names unknown line {line}")))?;
        l.round_trip_time = minutes;
        self.tr_override.insert(line, minutes);
        Ok(())
    }

    pub fn set_active_lines(&mut self, ids: &[LineId]) -> Result<()> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::config("active_lines must not be empty"));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.lines.len()) {
            return Err(Error::config(format!("active_lines names unknown line {bad}")));
        }
        self.active = ids;
        Ok(())
    }

    /// Active line ids in ascending order.
    pub fn active_lines(&self) -> &[LineId] {
        &self.active
    }

    pub fn is_active(&self, line: LineId) -> bool {
        self.active.binary_search(&line).is_ok()
    }

    pub fn line(&self, id: LineId) -> &Line {
        &self.lines[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_stops_per_line * self.n_stops_per_line
    }

    /// `(row, column)` of a node.
    pub fn coords(&self, node: NodeId) -> (usize, usize) {
        (node / self.n_stops_per_line, node % self.n_stops_per_line)
    }

    pub fn row_line(&self, row: usize) -> LineId {
        row
    }

    pub fn column_line(&self, column: usize) -> LineId {
        self.n_stops_per_line + column
    }
}
