//! Stochastic OD demand: node-level sampling, transfer decomposition and
//! line-level aggregation.
//!
//! Every ordered node pair gets a rate factor drawn once per run; in period
//! `t` its Poisson rate is `lo_t + factor * (hi_t - lo_t)`. Counts are drawn by
//! CDF inversion from a per-(pair, period) substream, so scaling the rates up
//! never lowers a count for a fixed seed.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Direction, GridNetwork, LineId, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonDemandSpec {
    /// `(λ_lo, λ_hi)` arrivals per period per node-level OD pair, one per period.
    pub rate_ranges: Vec<(f64, f64)>,
    pub peak_flags: Vec<bool>,
    pub seed: u64,
}

impl PoissonDemandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rate_ranges.is_empty() {
            return Err(Error::config("demand needs at least one period"));
        }
        if self.rate_ranges.len() != self.peak_flags.len() {
            return Err(Error::config("peak flags must match the number of periods"));
        }
        for (t, &(lo, hi)) in self.rate_ranges.iter().enumerate() {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(format!("period {t}: rate range ({lo}, {hi}) must satisfy 0 <= lo <= hi")));
            }
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.rate_ranges.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferPolicy {
    /// Ride the origin's row line first, then the destination's column line.
    #[default]
    RowFirst,
    ColumnFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub peak: (f64, f64),
    pub offpeak: (f64, f64),
}

/// Demand section of the scenario config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub periods: usize,
    #[serde(default)]
    pub peak: Vec<usize>,
    pub rates: RateConfig,
    pub seed: u64,
    #[serde(default)]
    pub transfer_policy: TransferPolicy,
    /// Multiplies every rate bound.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl DemandConfig {
    pub fn to_spec(&self) -> Result<PoissonDemandSpec> {
        if let Some(&bad) = self.peak.iter().find(|&&t| t >= self.periods) {
            return Err(Error::config(format!("peak period {bad} out of range")));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::config("demand scale must be >= 0"));
        }
        let peak_flags: Vec<bool> = (0..self.periods).map(|t| self.peak.contains(&t)).collect();
        let rate_ranges = peak_flags
            .iter()
            .map(|&p| {
                let (lo, hi) = if p { self.rates.peak } else { self.rates.offpeak };
                (lo * self.scale, hi * self.scale)
            })
            .collect();
        let spec = PoissonDemandSpec { rate_ranges, peak_flags, seed: self.seed };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeOdKey {
    pub period: usize,
    pub origin: NodeId,
    pub destination: NodeId,
}

/// Line-level OD pair `(i, j, l, t)`; `origin`/`destination` are positions on the line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineOdKey {
    pub line: LineId,
    pub period: usize,
    pub origin: usize,
    pub destination: usize,
}

impl LineOdKey {
    pub fn direction(&self) -> Direction {
        Direction::serving(self.origin, self.destination).expect("line OD keys have i != j")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub line: LineId,
    pub origin: usize,
    pub destination: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub trip: NodeOdKey,
    pub count: u32,
    /// One segment for a direct trip, two when a transfer is needed.
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandInstance {
    pub periods: usize,
    pub node_od: BTreeMap<NodeOdKey, u32>,
    pub line_od: BTreeMap<LineOdKey, u32>,
    pub transfer_records: Vec<TransferRecord>,
    /// Trips with no path of at most two segments over the active lines.
    pub unroutable: Vec<(NodeOdKey, u32)>,
}

/// Smallest `n` with `P(Poisson(lambda) <= n) >= u`.
pub fn poisson_inverse(lambda: f64, u: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let ln_lambda = lambda.ln();
    let mut ln_p = -lambda;
    let mut cdf = ln_p.exp();
    let mut n: u32 = 0;
    let cap = lambda + 60.0 * lambda.sqrt() + 100.0;
    while cdf < u && (n as f64) < cap {
        n += 1;
        ln_p += ln_lambda - (n as f64).ln();
        cdf += ln_p.exp();
    }
    n
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn substream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mixed = parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)));
    ChaCha8Rng::seed_from_u64(mixed)
}

const RATE_TAG: u64 = 1;
const COUNT_TAG: u64 = 2;

pub fn sample_node_demand(network: &GridNetwork, spec: &PoissonDemandSpec) -> Result<DemandInstance> {
    spec.validate()?;
    let n_nodes = network.n_nodes();
    let mut node_od = BTreeMap::new();
    for origin in 0..n_nodes {
        for destination in 0..n_nodes {
            if origin == destination {
                continue;
            }
            let (o, d) = (origin as u64, destination as u64);
            let factor: f64 = substream(spec.seed, &[RATE_TAG, o, d]).gen();
            for (period, &(lo, hi)) in spec.rate_ranges.iter().enumerate() {
                let rate = lo + factor * (hi - lo);
                let u: f64 = substream(spec.seed, &[COUNT_TAG, o, d, period as u64]).gen();
                let count = poisson_inverse(rate, u);
                if count > 0 {
                    node_od.insert(NodeOdKey { period, origin, destination }, count);
                }
            }
        }
    }
    Ok(DemandInstance { periods: spec.periods(), node_od, ..Default::default() })
}

fn segment_on(network: &GridNetwork, line: LineId, from: NodeId, to: NodeId) -> Option<Segment> {
    if !network.is_active(line) {
        return None;
    }
    let l = network.line(line);
    Some(Segment { line, origin: l.position(from)?, destination: l.position(to)? })
}

/// Splits one node-level trip into line segments, or `None` when unroutable.
pub fn route_trip(
    network: &GridNetwork,
    origin: NodeId,
    destination: NodeId,
    policy: TransferPolicy,
) -> Option<Vec<Segment>> {
    let n = network.n_stops_per_line;
    let (r1, c1) = network.coords(origin);
    let (r2, c2) = network.coords(destination);
    if r1 == r2 {
        return segment_on(network, network.row_line(r1), origin, destination).map(|s| vec![s]);
    }
    if c1 == c2 {
        return segment_on(network, network.column_line(c1), origin, destination).map(|s| vec![s]);
    }
    let row_first = || {
        let mid = r1 * n + c2;
        Some(vec![
            segment_on(network, network.row_line(r1), origin, mid)?,
            segment_on(network, network.column_line(c2), mid, destination)?,
        ])
    };
    let column_first = || {
        let mid = r2 * n + c1;
        Some(vec![
            segment_on(network, network.column_line(c1), origin, mid)?,
            segment_on(network, network.row_line(r2), mid, destination)?,
        ])
    };
    match policy {
        TransferPolicy::RowFirst => row_first().or_else(column_first),
        TransferPolicy::ColumnFirst => column_first().or_else(row_first),
    }
}

pub fn decompose_transfers(
    mut demand: DemandInstance,
    network: &GridNetwork,
    policy: TransferPolicy,
) -> DemandInstance {
    demand.transfer_records.clear();
    demand.unroutable.clear();
    for (&trip, &count) in &demand.node_od {
        match route_trip(network, trip.origin, trip.destination, policy) {
            Some(segments) => demand.transfer_records.push(TransferRecord { trip, count, segments }),
            None => demand.unroutable.push((trip, count)),
        }
    }
    demand
}

pub fn aggregate_to_lines(mut demand: DemandInstance) -> DemandInstance {
    let mut line_od = BTreeMap::new();
    for rec in &demand.transfer_records {
        for seg in &rec.segments {
            let key =
                LineOdKey { line: seg.line, period: rec.trip.period, origin: seg.origin, destination: seg.destination };
            *line_od.entry(key).or_insert(0) += rec.count;
        }
    }
    line_od.retain(|_, c| *c > 0);
    demand.line_od = line_od;
    demand
}

/// Sample, decompose and aggregate in one step.
pub fn generate(network: &GridNetwork, spec: &PoissonDemandSpec, policy: TransferPolicy) -> Result<DemandInstance> {
    let sampled = sample_node_demand(network, spec)?;
    Ok(aggregate_to_lines(decompose_transfers(sampled, network, policy)))
}

impl DemandInstance {
    /// Line-level OD entries of one line and period.
    pub fn line_period(&self, line: LineId, period: usize) -> impl Iterator<Item = (&LineOdKey, &u32)> {
        let lo = LineOdKey { line, period, origin: 0, destination: 0 };
        let hi = LineOdKey { line, period, origin: usize::MAX, destination: usize::MAX };
        self.line_od.range(lo..=hi)
    }

    pub fn total_line_demand(&self) -> u64 {
        self.line_od.values().map(|&c| c as u64).sum()
    }

    pub fn total_unroutable(&self) -> u64 {
        self.unroutable.iter().map(|&(_, c)| c as u64).sum()
    }

    /// Per-period `(Σ line_od, Σ routed node_od + Σ transfer-trip counts)`.
    pub fn conservation_totals(&self) -> Vec<(u64, u64)> {
        let mut totals = vec![(0u64, 0u64); self.periods];
        for (k, &c) in &self.line_od {
            totals[k.period].0 += c as u64;
        }
        for rec in &self.transfer_records {
            let extra = if rec.segments.len() == 2 { rec.count as u64 } else { 0 };
            totals[rec.trip.period].1 += rec.count as u64 + extra;
        }
        totals
    }

    /// Scales every line-level count by `factor`, rounding to nearest.
    pub fn scaled_line_od(&self, factor: f64) -> DemandInstance {
        let mut out = DemandInstance { periods: self.periods, ..Default::default() };
        for (&k, &c) in &self.line_od {
            let v = (c as f64 * factor).round() as u32;
            if v > 0 {
                out.line_od.insert(k, v);
            }
        }
        out
    }

    pub fn write_line_od_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["origin", "destination", "line", "period", "count"])?;
        for (k, c) in &self.line_od {
            w.write_record([
                k.origin.to_string(),
                k.destination.to_string(),
                k.line.to_string(),
                k.period.to_string(),
                c.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads a line-level demand CSV. `periods` must cover every period in the file.
    pub fn read_line_od_csv<R: Read>(reader: R, periods: usize) -> Result<DemandInstance> {
        #[derive(Deserialize)]
        struct Row {
            origin: usize,
            destination: usize,
            line: LineId,
            period: usize,
            count: u32,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["origin", "destination", "line", "period", "count"] {
            return Err(Error::config(format!("unexpected demand CSV header {headers:?}")));
        }
        let mut out = DemandInstance { periods, ..Default::default() };
        for row in rdr.deserialize() {
            let row: Row = row?;
            if row.origin == row.destination {
                return Err(Error::config("demand CSV has an entry with origin == destination"));
            }
            if row.period >= periods {
                return Err(Error::config(format!("demand CSV period {} out of range", row.period)));
            }
            let key =
                LineOdKey { line: row.line, period: row.period, origin: row.origin, destination: row.destination };
            if row.count > 0 {
                *out.line_od.entry(key).or_insert(0) += row.count;
            }
        }
        Ok(out)
    }
}
