//! Passenger assignment for fixed headways and train lengths.
//!
//! Within one corridor `(t, l, d)` every OD pair shares the same dispatches,
//! so the waiting cost collapses to `Σ_m c[m] * r[m]`, where `r[m]` is the
//! number of passengers still present before dispatch `m` (`r[K]` is what
//! remains after the last one) and `c` comes from the headways.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandInstance, LineOdKey};
use crate::error::{Error, Result};
use crate::formulation::{
    check_schedule, compute_headways, evaluate_objective, onboard_recursion, wait_coefficients, FlowKey, ModelParams,
    PassengerFlow, Schedule, SlotKey,
};
use crate::network::{Direction, GridNetwork, LineId};

/// Largest corridor demand the exact policy accepts.
pub const EXACT_DEMAND_LIMIT: u64 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentPolicy {
    Greedy,
    ExactSmall,
    /// Exact when the corridor demand is at most [`EXACT_DEMAND_LIMIT`].
    #[default]
    Auto,
}

/// An OD pair in direction-local positions: it occupies segments
/// `from..to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorridorPair {
    pub key: LineOdKey,
    pub from: usize,
    pub to: usize,
    pub count: u32,
}

/// One `(period, line, direction)` with its demand, pairs in boarding
/// priority order.
#[derive(Clone, Debug, PartialEq)]
pub struct Corridor {
    pub period: usize,
    pub line: LineId,
    pub dir: Direction,
    pub round_trip_time: f64,
    pub n_stops: usize,
    pub pairs: Vec<CorridorPair>,
    pub demand: u64,
}

impl Corridor {
    pub fn slot(&self, k: usize) -> SlotKey {
        SlotKey { period: self.period, line: self.line, dir: self.dir, k }
    }

    pub fn segments(&self) -> usize {
        self.n_stops.saturating_sub(1)
    }
}

fn local(pos: usize, n: usize, dir: Direction) -> usize {
    match dir {
        Direction::Forward => pos,
        Direction::Reverse => n - 1 - pos,
    }
}

/// All corridors of the active lines, ordered `(t, l, d)`.
pub fn build_corridors(network: &GridNetwork, demand: &DemandInstance, params: &ModelParams) -> Result<Vec<Corridor>> {
    let n = network.n_stops_per_line;
    for key in demand.line_od.keys() {
        if key.period >= params.periods {
            return Err(Error::config(format!("demand for period {} but only {} periods", key.period, params.periods)));
        }
        if !network.is_active(key.line) {
            return Err(Error::config(format!("demand on inactive line {}", key.line)));
        }
        if key.origin >= n || key.destination >= n || key.origin == key.destination {
            return Err(Error::config(format!("demand entry {key:?} is not a valid on-line pair")));
        }
    }
    let mut out = Vec::new();
    for t in 0..params.periods {
        for &l in network.active_lines() {
            for dir in Direction::ALL {
                let mut pairs: Vec<CorridorPair> = demand
                    .line_period(l, t)
                    .filter(|(k, &c)| k.direction() == dir && c > 0)
                    .map(|(k, &c)| CorridorPair {
                        key: *k,
                        from: local(k.origin, n, dir),
                        to: local(k.destination, n, dir),
                        count: c,
                    })
                    .collect();
                // earliest alighting first, then smallest origin
                pairs.sort_by_key(|p| (p.to, p.from));
                let demand = pairs.iter().map(|p| p.count as u64).sum();
                out.push(Corridor {
                    period: t,
                    line: l,
                    dir,
                    round_trip_time: network.line(l).round_trip_time,
                    n_stops: n,
                    pairs,
                    demand,
                });
            }
        }
    }
    Ok(out)
}

/// Per-stage cost multipliers `c[0..=K]` for the given headways.
pub fn stage_costs(headways: &[f64], params: &ModelParams) -> Vec<f64> {
    let k_count = headways.len();
    let (a, b) = wait_coefficients(headways, params);
    let mut c = Vec::with_capacity(k_count + 1);
    for m in 0..=k_count {
        let mut v = 0.0;
        if m < k_count {
            v += b[m];
        }
        if m > 0 {
            v += a[m - 1];
        }
        c.push(v);
    }
    c
}

/// Boarding counts `[k][pair]`.
pub type Boarding = Vec<Vec<u32>>;

/// Waiting cost of a boarding plan.
pub fn corridor_cost(corr: &Corridor, boarding: &Boarding, costs: &[f64]) -> f64 {
    let mut remaining = corr.demand as f64;
    let mut total = costs[0] * remaining;
    for (k, row) in boarding.iter().enumerate() {
        remaining -= row.iter().map(|&b| b as f64).sum::<f64>();
        total += costs[k + 1] * remaining;
    }
    total
}

/// For each dispatch in order, board pairs in priority order as far as the
/// tightest segment allows.
pub fn greedy_boarding(corr: &Corridor, caps: &[u32]) -> Boarding {
    let mut rem: Vec<u32> = corr.pairs.iter().map(|p| p.count).collect();
    let mut out = Vec::with_capacity(caps.len());
    for &cap in caps {
        let mut residual = vec![cap; corr.segments()];
        let mut row = vec![0u32; corr.pairs.len()];
        for (p, pair) in corr.pairs.iter().enumerate() {
            if rem[p] == 0 {
                continue;
            }
            let room = residual[pair.from..pair.to].iter().copied().min().unwrap_or(0);
            let b = rem[p].min(room);
            if b > 0 {
                for r in &mut residual[pair.from..pair.to] {
                    *r -= b;
                }
                rem[p] -= b;
                row[p] = b;
            }
        }
        out.push(row);
    }
    out
}

/// Most passengers from `counts` that one dispatch of capacity `cap` can
/// carry.
pub fn max_packing(corr: &Corridor, counts: &[u32], cap: u32) -> u64 {
    let mut order: Vec<usize> = (0..corr.pairs.len()).collect();
    // earliest right end, shorter first on ties
    order.sort_by_key(|&p| (corr.pairs[p].to, std::cmp::Reverse(corr.pairs[p].from)));
    let mut residual = vec![cap; corr.segments()];
    let mut total = 0u64;
    for p in order {
        let pair = &corr.pairs[p];
        let room = residual[pair.from..pair.to].iter().copied().min().unwrap_or(0);
        let b = counts[p].min(room);
        for r in &mut residual[pair.from..pair.to] {
            *r -= b;
        }
        total += b as u64;
    }
    total
}

struct ExactSearch<'a> {
    corr: &'a Corridor,
    caps: &'a [u32],
    values: Vec<f64>,
    memo: HashMap<(usize, Vec<u32>), (f64, Vec<u32>)>,
}

impl ExactSearch<'_> {
    fn best(&mut self, k: usize, rem: &[u32]) -> f64 {
        if k == self.caps.len() || rem.iter().all(|&r| r == 0) {
            return 0.0;
        }
        if let Some((v, _)) = self.memo.get(&(k, rem.to_vec())) {
            return *v;
        }
        let packings = self.maximal_packings(rem, self.caps[k]);
        let mut best: Option<(f64, Vec<u32>)> = None;
        for packing in packings {
            let boarded: u64 = packing.iter().map(|&b| b as u64).sum();
            let next: Vec<u32> = rem.iter().zip(&packing).map(|(r, b)| r - b).collect();
            let v = self.values[k] * boarded as f64 + self.best(k + 1, &next);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, packing));
            }
        }
        let (v, packing) = best.expect("the empty packing is always available");
        self.memo.insert((k, rem.to_vec()), (v, packing));
        v
    }

    /// Packings after which no remaining passenger still fits.
    fn maximal_packings(&self, rem: &[u32], cap: u32) -> Vec<Vec<u32>> {
        let pairs = &self.corr.pairs;
        let segs = self.corr.segments();
        if (0..segs).all(|e| {
            pairs.iter().zip(rem).filter(|(p, _)| p.from <= e && e < p.to).map(|(_, &r)| r as u64).sum::<u64>()
                <= cap as u64
        }) {
            return vec![rem.to_vec()];
        }
        // suffix[p][e]: remaining demand of pairs `p..` crossing segment `e`
        let mut suffix = vec![vec![0u64; segs]; pairs.len() + 1];
        for p in (0..pairs.len()).rev() {
            suffix[p] = suffix[p + 1].clone();
            for e in pairs[p].from..pairs[p].to {
                suffix[p][e] += rem[p] as u64;
            }
        }
        let mut out = Vec::new();
        let mut residual = vec![cap; segs];
        let mut chosen = vec![0u32; pairs.len()];
        let mut pending: Vec<usize> = Vec::new();
        self.packing_dfs(0, rem, &suffix, &mut residual, &mut chosen, &mut pending, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn packing_dfs(
        &self,
        p: usize,
        rem: &[u32],
        suffix: &[Vec<u64>],
        residual: &mut Vec<u32>,
        chosen: &mut Vec<u32>,
        pending: &mut Vec<usize>,
        out: &mut Vec<Vec<u32>>,
    ) {
        let pairs = &self.corr.pairs;
        // every pair left with unmet demand must end up blocked by later pairs
        for &q in pending.iter() {
            let pq = &pairs[q];
            if (pq.from..pq.to).all(|e| residual[e] as u64 > suffix[p][e]) {
                return;
            }
        }
        if p == pairs.len() {
            out.push(chosen.clone());
            return;
        }
        let pair = &pairs[p];
        let room = residual[pair.from..pair.to].iter().copied().min().unwrap_or(0);
        let top = rem[p].min(room);
        for b in (0..=top).rev() {
            for r in &mut residual[pair.from..pair.to] {
                *r -= b;
            }
            chosen[p] = b;
            let left = b < rem[p];
            if left {
                pending.push(p);
            }
            self.packing_dfs(p + 1, rem, suffix, residual, chosen, pending, out);
            if left {
                pending.pop();
            }
            for r in &mut residual[pair.from..pair.to] {
                *r += b;
            }
        }
        chosen[p] = 0;
    }
}

/// Boarding plan of minimum waiting cost, found by enumerating maximal
/// packings per dispatch with memoization on the remaining demand.
pub fn exact_boarding(corr: &Corridor, caps: &[u32], costs: &[f64]) -> Boarding {
    // value of boarding one passenger at dispatch k
    let k_count = caps.len();
    let values: Vec<f64> = (0..k_count).map(|k| costs[k + 1..].iter().sum()).collect();
    let mut search = ExactSearch { corr, caps, values, memo: HashMap::new() };
    let mut rem: Vec<u32> = corr.pairs.iter().map(|p| p.count).collect();
    search.best(0, &rem);
    let mut out = Vec::with_capacity(k_count);
    for k in 0..k_count {
        if rem.iter().all(|&r| r == 0) {
            out.push(vec![0; rem.len()]);
            continue;
        }
        let packing = search.memo[&(k, rem.clone())].1.clone();
        for (r, b) in rem.iter_mut().zip(&packing) {
            *r -= b;
        }
        out.push(packing);
    }
    out
}

pub fn uses_exact(corr: &Corridor, policy: AssignmentPolicy) -> Result<bool> {
    match policy {
        AssignmentPolicy::Greedy => Ok(false),
        AssignmentPolicy::Auto => Ok(corr.demand <= EXACT_DEMAND_LIMIT),
        AssignmentPolicy::ExactSmall if corr.demand <= EXACT_DEMAND_LIMIT => Ok(true),
        AssignmentPolicy::ExactSmall => {
            Err(Error::ExactAssignmentTooLarge { demand: corr.demand, limit: EXACT_DEMAND_LIMIT })
        }
    }
}

/// Boarding plan and its cost for one corridor configuration.
pub fn evaluate_corridor(
    corr: &Corridor,
    headways: &[f64],
    lengths: &[u32],
    params: &ModelParams,
    policy: AssignmentPolicy,
) -> Result<(f64, Boarding)> {
    let costs = stage_costs(headways, params);
    let caps: Vec<u32> = lengths.iter().map(|&l| l * params.capacity_per_pod).collect();
    let boarding = if corr.demand == 0 {
        vec![vec![]; caps.len()]
    } else if uses_exact(corr, policy)? {
        exact_boarding(corr, &caps, &costs)
    } else {
        greedy_boarding(corr, &caps)
    };
    Ok((corridor_cost(corr, &boarding, &costs), boarding))
}

/// Writes seated and waiting counts of one corridor into `flow`.
pub(crate) fn record_boarding(corr: &Corridor, boarding: &Boarding, flow: &mut PassengerFlow) {
    for (p, pair) in corr.pairs.iter().enumerate() {
        let mut rem = pair.count;
        for (k, row) in boarding.iter().enumerate() {
            let s = row.get(p).copied().unwrap_or(0);
            rem -= s;
            let key = FlowKey::new(pair.key, corr.dir, k);
            flow.seated.insert(key, s as f64);
            flow.waiting.insert(key, rem as f64);
        }
    }
}

/// Fills onboard loads and the objective from seated counts and headways.
pub(crate) fn finish_flow(flow: &mut PassengerFlow, network: &GridNetwork, params: &ModelParams) {
    for &l in network.active_lines() {
        for dir in Direction::ALL {
            let profile = onboard_recursion(flow, network.line(l), dir);
            flow.onboard.extend(profile.onboard);
        }
    }
    flow.objective_value = evaluate_objective(flow, params);
}

/// Assigns passengers to the dispatches of a fixed schedule.
pub fn assign_passengers(
    schedule: &Schedule,
    demand: &DemandInstance,
    network: &GridNetwork,
    params: &ModelParams,
    policy: AssignmentPolicy,
) -> Result<PassengerFlow> {
    let violations = check_schedule(schedule, params);
    if !violations.is_empty() {
        return Err(Error::ScheduleRejected(violations));
    }
    let mut flow = PassengerFlow { headways: compute_headways(schedule, params), ..Default::default() };
    for corr in build_corridors(network, demand, params)? {
        let k_count = params.dispatches_per_period;
        let mut hs = Vec::with_capacity(k_count);
        let mut ls = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let slot = corr.slot(k);
            match (flow.headways.get(&slot), schedule.train_len.get(&slot)) {
                (Some(&h), Some(&l)) => {
                    hs.push(h);
                    ls.push(l);
                }
                _ if corr.demand == 0 => {}
                _ => {
                    return Err(Error::ScheduleRejected(vec![crate::formulation::Violation {
                        kind: crate::formulation::ConstraintKind::MissingSlot,
                        location: slot.to_string(),
                        slack: 1.0,
                    }]))
                }
            }
        }
        if corr.demand == 0 {
            continue;
        }
        let (_, boarding) = evaluate_corridor(&corr, &hs, &ls, params, policy)?;
        record_boarding(&corr, &boarding, &mut flow);
    }
    finish_flow(&mut flow, network, params);
    Ok(flow)
}
