//! The dispatch model: parameters, decision and state variables, and the
//! objective/constraint evaluators.
//!
//! Nothing here chooses values. Candidate schedules and passenger flows come
//! from the solver or the linearized model and are scored or checked here.
//!
//! Conventions:
//! - times are period-local minutes, dispatch indices `k` are zero-based;
//! - the first headway of a period is `x_1 - t_start`;
//! - `Forward` carries OD pairs with `j > i`, `Reverse` those with `j < i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandInstance, LineOdKey};
use crate::error::{Error, Result};
use crate::network::{Direction, GridNetwork, Line, LineId};

/// Absolute tolerance for fleet and capacity comparisons on floats.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Seats per pod.
    #[serde(rename = "C")]
    pub capacity_per_pod: u32,
    /// Pods available per period.
    #[serde(rename = "F")]
    pub fleet_size: u32,
    pub h_min: f64,
    pub h_max: f64,
    #[serde(rename = "K")]
    pub dispatches_per_period: usize,
    #[serde(rename = "T")]
    pub periods: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub l_min: u32,
    pub l_max: u32,
    /// Defaults to `10 * (t_end - t_start)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    /// Charge `BigM` on passengers seated on the last dispatch too, not just
    /// on those still waiting after it.
    #[serde(default = "yes")]
    pub bigm_on_seated: bool,
    /// Passenger flows are integer; switch off for LP-relaxation exports.
    #[serde(default = "yes")]
    pub integral_flows: bool,
}

fn yes() -> bool {
    true
}

impl ModelParams {
    /// Table 2 parameter values with a one-hour dispatch window per period.
    pub fn paper_defaults() -> Self {
        ModelParams {
            capacity_per_pod: 25,
            fleet_size: 1000,
            h_min: 5.0,
            h_max: 15.0,
            dispatches_per_period: 5,
            periods: 4,
            t_start: 0.0,
            t_end: 60.0,
            l_min: 1,
            l_max: 5,
            big_m: None,
            bigm_on_seated: true,
            integral_flows: true,
        }
    }

    pub fn big_m(&self) -> f64 {
        self.big_m.unwrap_or(10.0 * (self.t_end - self.t_start))
    }

    pub fn window(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !(p.h_min > 0.0 && p.h_min <= p.h_max && p.h_max.is_finite()) {
            return Err(Error::config(format!(
                "headway bounds must satisfy 0 < h_min <= h_max, got ({}, {})",
                p.h_min, p.h_max
            )));
        }
        if !(p.t_start < p.t_end) {
            return Err(Error::config("t_start must be before t_end"));
        }
        if !(1 <= p.l_min && p.l_min <= p.l_max) {
            return Err(Error::config(format!(
                "train length bounds must satisfy 1 <= l_min <= l_max, got ({}, {})",
                p.l_min, p.l_max
            )));
        }
        if !(p.big_m() > p.h_max) {
            return Err(Error::config(format!("big_m ({}) must exceed h_max ({})", p.big_m(), p.h_max)));
        }
        if p.capacity_per_pod < 1 || p.fleet_size < 1 {
            return Err(Error::config("capacity and fleet size must be at least 1"));
        }
        if p.dispatches_per_period < 1 || p.periods < 1 {
            return Err(Error::config("need at least one period and one dispatch"));
        }
        Ok(())
    }
}

/// One dispatch slot `(l, d, t, k)`, ordered `(t, l, d, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotKey {
    pub period: usize,
    pub line: LineId,
    pub dir: Direction,
    pub k: usize,
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{} {} t{} k{}", self.line, self.dir, self.period, self.k)
    }
}

/// Passenger-flow index `(i, j, l, d, t, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub line: LineId,
    pub period: usize,
    pub origin: usize,
    pub destination: usize,
    pub dir: Direction,
    pub k: usize,
}

impl FlowKey {
    pub fn new(od: LineOdKey, dir: Direction, k: usize) -> Self {
        FlowKey { line: od.line, period: od.period, origin: od.origin, destination: od.destination, dir, k }
    }

    pub fn od(&self) -> LineOdKey {
        LineOdKey { line: self.line, period: self.period, origin: self.origin, destination: self.destination }
    }

    pub fn slot(&self) -> SlotKey {
        SlotKey { period: self.period, line: self.line, dir: self.dir, k: self.k }
    }
}

/// Onboard-count index `(i, l, d, t, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub period: usize,
    pub line: LineId,
    pub dir: Direction,
    pub k: usize,
    pub node: usize,
}

impl NodeKey {
    pub fn slot(&self) -> SlotKey {
        SlotKey { period: self.period, line: self.line, dir: self.dir, k: self.k }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    /// Dispatch times.
    pub x: BTreeMap<SlotKey, f64>,
    /// Pods per train.
    pub train_len: BTreeMap<SlotKey, u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PassengerFlow {
    pub headways: BTreeMap<SlotKey, f64>,
    pub seated: BTreeMap<FlowKey, f64>,
    pub waiting: BTreeMap<FlowKey, f64>,
    /// Load departing each node; zero at a direction's terminal node.
    pub onboard: BTreeMap<NodeKey, f64>,
    pub objective_value: f64,
}

impl PassengerFlow {
    pub fn seated_at(&self, key: &FlowKey) -> f64 {
        self.seated.get(key).copied().unwrap_or(0.0)
    }

    pub fn waiting_at(&self, key: &FlowKey) -> f64 {
        self.waiting.get(key).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    FirstDispatchStart,
    MinHeadway,
    DispatchWindow,
    MaxHeadway,
    TrainLength,
    MissingSlot,
    Direction,
    Conservation,
    Onboard,
    Capacity,
    Fleet,
    DegenerateHeadway,
    HeadwayMismatch,
    Nonnegativity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub location: String,
    /// Amount by which the constraint is violated.
    pub slack: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {} by {}", self.kind, self.location, self.slack)
    }
}

fn violation(kind: ConstraintKind, location: impl fmt::Display, slack: f64) -> Violation {
    Violation { kind, location: location.to_string(), slack }
}

/// Groups slot-keyed values by `(period, line, dir)`, in `k` order.
fn groups<V: Copy>(map: &BTreeMap<SlotKey, V>) -> BTreeMap<(usize, LineId, Direction), Vec<(usize, V)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for (s, &v) in map {
        out.entry((s.period, s.line, s.dir)).or_default().push((s.k, v));
    }
    out
}

/// `h_k = x_k - x_{k-1}`, with `h_1 = x_1 - t_start`.
pub fn compute_headways(schedule: &Schedule, params: &ModelParams) -> BTreeMap<SlotKey, f64> {
    let mut out = BTreeMap::new();
    for ((period, line, dir), xs) in groups(&schedule.x) {
        let mut prev = params.t_start;
        for (k, x) in xs {
            out.insert(SlotKey { period, line, dir, k }, x - prev);
            prev = x;
        }
    }
    out
}

/// Start, separation, window and headway-cap checks on dispatch times, plus
/// train-length bounds.
pub fn check_schedule(schedule: &Schedule, params: &ModelParams) -> Vec<Violation> {
    use ConstraintKind::*;
    let mut out = Vec::new();
    for ((period, line, dir), xs) in groups(&schedule.x) {
        let key = |k| SlotKey { period, line, dir, k };
        if let Some(&(k, x1)) = xs.first() {
            if x1 < params.t_start {
                out.push(violation(FirstDispatchStart, key(k), params.t_start - x1));
            }
        }
        let mut prev: Option<f64> = None;
        for &(k, x) in &xs {
            let h = x - prev.unwrap_or(params.t_start);
            if let Some(p) = prev {
                if x < p + params.h_min {
                    out.push(violation(MinHeadway, key(k), p + params.h_min - x));
                }
            }
            if x > params.t_end {
                out.push(violation(DispatchWindow, key(k), x - params.t_end));
            }
            if h > params.h_max {
                out.push(violation(MaxHeadway, key(k), h - params.h_max));
            }
            prev = Some(x);
        }
    }
    for (slot, &len) in &schedule.train_len {
        if len < params.l_min || len > params.l_max {
            let slack = if len < params.l_min { params.l_min - len } else { len - params.l_max };
            out.push(violation(TrainLength, slot, slack as f64));
        }
        if !schedule.x.contains_key(slot) {
            out.push(violation(MissingSlot, slot, 1.0));
        }
    }
    for slot in schedule.x.keys() {
        if !schedule.train_len.contains_key(slot) {
            out.push(violation(MissingSlot, slot, 1.0));
        }
    }
    out
}

/// True iff direction `d` serves travel from position `i` to position `j`.
pub fn directional_mask(i: usize, j: usize, d: Direction) -> Result<bool> {
    match Direction::serving(i, j) {
        Some(serving) => Ok(serving == d),
        None => Err(Error::InvalidSelection(format!("OD pair with i == j == {i}"))),
    }
}

/// Demand-conservation residuals for every `(i, j, l, t)` and `k`; all zero
/// for a feasible flow.
pub fn conservation_residuals(
    flow: &PassengerFlow,
    demand: &DemandInstance,
    params: &ModelParams,
) -> BTreeMap<(LineOdKey, usize), f64> {
    let mut out = BTreeMap::new();
    let mut od_keys: BTreeSet<LineOdKey> = demand.line_od.keys().copied().collect();
    od_keys.extend(flow.seated.keys().chain(flow.waiting.keys()).map(|f| f.od()));
    for od in od_keys {
        let target = demand.line_od.get(&od).copied().unwrap_or(0) as f64;
        let mut boarded_before = 0.0;
        for k in 0..params.dispatches_per_period {
            let mut present = 0.0;
            let mut boarded_now = 0.0;
            for dir in Direction::ALL {
                let key = FlowKey::new(od, dir, k);
                let s = flow.seated_at(&key);
                present += s + flow.waiting_at(&key);
                boarded_now += s;
            }
            out.insert((od, k), present - (target - boarded_before));
            boarded_before += boarded_now;
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OnboardProfile {
    pub onboard: BTreeMap<NodeKey, f64>,
    pub diagnostics: Vec<Violation>,
}

/// Recomputes onboard loads along `line` in direction `dir` from the seated
/// counts, for every `(t, k)` present in the flow.
pub fn onboard_recursion(flow: &PassengerFlow, line: &Line, dir: Direction) -> OnboardProfile {
    let n = line.len();
    let mut dispatches: BTreeSet<(usize, usize)> =
        flow.headways.keys().filter(|s| s.line == line.id && s.dir == dir).map(|s| (s.period, s.k)).collect();
    // boardings[(t,k)][i] and alightings[(t,k)][i]
    let mut board: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut alight: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut profile = OnboardProfile::default();
    for (key, &s) in &flow.seated {
        if key.line != line.id || key.dir != dir {
            continue;
        }
        if key.origin >= n || key.destination >= n {
            profile.diagnostics.push(violation(ConstraintKind::Onboard, format!("{key:?} off line"), s));
            continue;
        }
        dispatches.insert((key.period, key.k));
        board.entry((key.period, key.k)).or_insert_with(|| vec![0.0; n])[key.origin] += s;
        alight.entry((key.period, key.k)).or_insert_with(|| vec![0.0; n])[key.destination] += s;
    }
    let zeros = vec![0.0; n];
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..n).collect(),
        Direction::Reverse => (0..n).rev().collect(),
    };
    for (period, k) in dispatches {
        let b = board.get(&(period, k)).unwrap_or(&zeros);
        let a = alight.get(&(period, k)).unwrap_or(&zeros);
        let mut load = 0.0;
        for &i in &order {
            load += b[i] - a[i];
            let key = NodeKey { period, line: line.id, dir, k, node: i };
            if load < 0.0 {
                profile.diagnostics.push(violation(ConstraintKind::Onboard, format!("{key:?}"), -load));
            }
            profile.onboard.insert(key, load);
        }
    }
    profile
}

/// Onboard capacity per node and per-period fleet usage
/// `Σ (Tr_l / h) * L <= F`.
pub fn capacity_and_fleet_check(
    flow: &PassengerFlow,
    schedule: &Schedule,
    params: &ModelParams,
    network: &GridNetwork,
) -> Vec<Violation> {
    use ConstraintKind::*;
    let mut out = Vec::new();
    for (key, &ob) in &flow.onboard {
        let len = schedule.train_len.get(&key.slot()).copied().unwrap_or(0);
        let cap = params.capacity_per_pod as f64 * len as f64;
        if ob > cap + FEASIBILITY_TOL {
            out.push(violation(Capacity, format!("{key:?}"), ob - cap));
        }
    }
    let headways = compute_headways(schedule, params);
    let mut usage: BTreeMap<usize, f64> = BTreeMap::new();
    for (slot, &h) in &headways {
        let len = schedule.train_len.get(slot).copied().unwrap_or(0) as f64;
        let entry = usage.entry(slot.period).or_insert(0.0);
        if h <= 0.0 {
            out.push(violation(DegenerateHeadway, slot, -h));
            continue;
        }
        *entry += network.line(slot.line).round_trip_time / h * len;
    }
    for (period, used) in usage {
        let f = params.fleet_size as f64;
        if used > f + FEASIBILITY_TOL {
            out.push(violation(Fleet, format!("t{period}"), used - f));
        }
    }
    out
}

/// Waiting-time coefficients of one `(l, d, t)` group: `a[k]` multiplies
/// `w_k`, `b[k]` multiplies `w_k + s_k`.
pub fn wait_coefficients(headways: &[f64], params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let k_count = headways.len();
    let big_m = params.big_m();
    let mut a = Vec::with_capacity(k_count);
    let mut b = Vec::with_capacity(k_count);
    for k in 0..k_count {
        if k + 1 < k_count {
            a.push(headways[k + 1]);
            b.push(headways[k] / 2.0);
        } else {
            a.push(big_m);
            b.push(if params.bigm_on_seated { big_m } else { headways[k] / 2.0 });
        }
    }
    (a, b)
}

/// Total passenger waiting time in passenger-minutes.
///
/// Passengers missing dispatch `k` wait the next headway; everyone present
/// for dispatch `k` waits half the current one. On the last dispatch both
/// terms switch to `BigM` (only the waiting term when `bigm_on_seated` is
/// off).
pub fn evaluate_objective(flow: &PassengerFlow, params: &ModelParams) -> f64 {
    let k_count = params.dispatches_per_period;
    let big_m = params.big_m();
    let keys: BTreeSet<&FlowKey> = flow.seated.keys().chain(flow.waiting.keys()).collect();
    let headway = |key: &FlowKey, k: usize| {
        let slot = SlotKey { k, ..key.slot() };
        flow.headways.get(&slot).copied().unwrap_or(0.0)
    };
    let mut total = 0.0;
    for key in keys {
        let s = flow.seated_at(key);
        let w = flow.waiting_at(key);
        if key.k + 1 < k_count {
            total += w * headway(key, key.k + 1);
            total += (w + s) * (headway(key, key.k) / 2.0);
        } else {
            total += w * big_m;
            total += if params.bigm_on_seated { (w + s) * big_m } else { (w + s) * (headway(key, key.k) / 2.0) };
        }
    }
    total
}

/// Every check the model imposes on a `(schedule, flow)` pair against its
/// demand. Empty iff the pair is feasible.
pub fn check_solution(
    schedule: &Schedule,
    flow: &PassengerFlow,
    demand: &DemandInstance,
    network: &GridNetwork,
    params: &ModelParams,
) -> Vec<Violation> {
    use ConstraintKind as C;
    let mut out = check_schedule(schedule, params);

    for t in 0..params.periods {
        for &line in network.active_lines() {
            for dir in Direction::ALL {
                for k in 0..params.dispatches_per_period {
                    let slot = SlotKey { period: t, line, dir, k };
                    if !schedule.x.contains_key(&slot) {
                        out.push(violation(C::MissingSlot, slot, 1.0));
                    }
                }
            }
        }
    }

    let expected_h = compute_headways(schedule, params);
    if expected_h != flow.headways {
        out.push(violation(C::HeadwayMismatch, "flow headways", 1.0));
    }

    for (key, &v) in flow.seated.iter().chain(flow.waiting.iter()) {
        if v < 0.0 {
            out.push(violation(C::Nonnegativity, format!("{key:?}"), -v));
        }
        match directional_mask(key.origin, key.destination, key.dir) {
            Ok(true) => {}
            _ if v == 0.0 => {}
            _ => out.push(violation(C::Direction, format!("{key:?}"), v)),
        }
        if params.integral_flows && v.fract() != 0.0 {
            out.push(violation(C::Nonnegativity, format!("{key:?} not integral"), v.fract()));
        }
    }
    for (slot, &x) in &schedule.x {
        if x < 0.0 {
            out.push(violation(C::Nonnegativity, slot, -x));
        }
    }
    for (slot, &h) in &flow.headways {
        if h < 0.0 {
            out.push(violation(C::Nonnegativity, slot, -h));
        }
    }

    for ((od, k), r) in conservation_residuals(flow, demand, params) {
        if r != 0.0 {
            out.push(violation(C::Conservation, format!("{od:?} k{k}"), r.abs()));
        }
    }

    let mut recomputed = BTreeMap::new();
    let lines: BTreeSet<LineId> = flow.headways.keys().map(|s| s.line).collect();
    for line in lines {
        for dir in Direction::ALL {
            let profile = onboard_recursion(flow, network.line(line), dir);
            out.extend(profile.diagnostics);
            recomputed.extend(profile.onboard);
        }
    }
    for (key, &ob) in &flow.onboard {
        if ob < 0.0 {
            out.push(violation(C::Nonnegativity, format!("{key:?}"), -ob));
        }
        let expect = recomputed.get(key).copied().unwrap_or(0.0);
        if (expect - ob).abs() > FEASIBILITY_TOL {
            out.push(violation(C::Onboard, format!("{key:?}"), (expect - ob).abs()));
        }
    }
    for (key, &ob) in &recomputed {
        if ob != 0.0 && !flow.onboard.contains_key(key) {
            out.push(violation(C::Onboard, format!("{key:?} missing"), ob));
        }
    }
    let mut with_recomputed = flow.clone();
    with_recomputed.onboard = recomputed;
    out.extend(capacity_and_fleet_check(&with_recomputed, schedule, params, network));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_grid;

    fn params() -> ModelParams {
        ModelParams { periods: 1, ..ModelParams::paper_defaults() }
    }

    fn schedule_of(xs: &[f64], len: u32) -> Schedule {
        let mut s = Schedule::default();
        for (k, &x) in xs.iter().enumerate() {
            let slot = SlotKey { period: 0, line: 0, dir: Direction::Forward, k };
            s.x.insert(slot, x);
            s.train_len.insert(slot, len);
        }
        s
    }

    fn hs(map: &BTreeMap<SlotKey, f64>) -> Vec<f64> {
        map.values().copied().collect()
    }

    #[test]
    fn headway_examples() {
        let p = ModelParams { t_start: 10.0, ..params() };
        assert_eq!(hs(&compute_headways(&schedule_of(&[10.0, 18.0, 30.0], 1), &p)), vec![0.0, 8.0, 12.0]);
        assert_eq!(hs(&compute_headways(&schedule_of(&[10.0], 1), &p)), vec![0.0]);
        assert_eq!(hs(&compute_headways(&schedule_of(&[12.0, 20.0], 1), &p)), vec![2.0, 8.0]);
    }

    #[test]
    fn schedule_checks() {
        let p = ModelParams { t_start: 0.0, ..params() };
        assert!(check_schedule(&schedule_of(&[0.0, 5.0, 10.0], 1), &p).is_empty());

        let v = check_schedule(&schedule_of(&[0.0, 3.0], 1), &p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ConstraintKind::MinHeadway);
        assert_eq!(v[0].slack, 2.0);

        let v = check_schedule(&schedule_of(&[0.0, 20.0], 1), &p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ConstraintKind::MaxHeadway);

        let v = check_schedule(&schedule_of(&[-1.0, 61.0], 1), &p);
        let kinds: Vec<_> = v.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ConstraintKind::FirstDispatchStart));
        assert!(kinds.contains(&ConstraintKind::DispatchWindow));

        let v = check_schedule(&schedule_of(&[5.0], 6), &p);
        assert_eq!(v[0].kind, ConstraintKind::TrainLength);
    }

    #[test]
    fn direction_mask() {
        assert!(directional_mask(2, 5, Direction::Forward).unwrap());
        assert!(!directional_mask(2, 5, Direction::Reverse).unwrap());
        assert!(directional_mask(5, 2, Direction::Reverse).unwrap());
        assert!(directional_mask(3, 3, Direction::Forward).is_err());
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let n = Direction::ALL.iter().filter(|&&d| directional_mask(i, j, d).unwrap()).count();
                    assert_eq!(n, 1);
                }
            }
        }
    }

    fn od(i: usize, j: usize) -> LineOdKey {
        LineOdKey { line: 0, period: 0, origin: i, destination: j }
    }

    #[test]
    fn conservation_examples() {
        let p = ModelParams { dispatches_per_period: 2, ..params() };
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(od(0, 2), 10);
        let mut flow = PassengerFlow::default();
        let k0 = FlowKey::new(od(0, 2), Direction::Forward, 0);
        let k1 = FlowKey::new(od(0, 2), Direction::Forward, 1);
        flow.seated.insert(k0, 6.0);
        flow.waiting.insert(k0, 4.0);
        flow.seated.insert(k1, 3.0);
        flow.waiting.insert(k1, 1.0);
        let r = conservation_residuals(&flow, &demand, &p);
        assert_eq!(r[&(od(0, 2), 0)], 0.0);
        assert_eq!(r[&(od(0, 2), 1)], 0.0);
        flow.waiting.insert(k1, 2.0);
        assert_eq!(conservation_residuals(&flow, &demand, &p)[&(od(0, 2), 1)], 1.0);
    }

    #[test]
    fn onboard_three_node_trace() {
        let net = build_grid(3, 1.0, 1.0, 1.0).unwrap();
        let mut flow = PassengerFlow::default();
        for (i, j, s) in [(0, 1, 4.0), (0, 2, 2.0), (1, 2, 5.0)] {
            flow.seated.insert(FlowKey::new(od(i, j), Direction::Forward, 0), s);
        }
        let p = onboard_recursion(&flow, net.line(0), Direction::Forward);
        assert!(p.diagnostics.is_empty());
        assert_eq!(p.onboard.values().copied().collect::<Vec<_>>(), vec![6.0, 7.0, 0.0]);

        // mirrored instance in the reverse direction
        let mut mirrored = PassengerFlow::default();
        for (i, j, s) in [(2, 1, 4.0), (2, 0, 2.0), (1, 0, 5.0)] {
            mirrored.seated.insert(FlowKey::new(od(i, j), Direction::Reverse, 0), s);
        }
        let q = onboard_recursion(&mirrored, net.line(0), Direction::Reverse);
        let by_node: Vec<f64> = q.onboard.values().copied().collect();
        assert_eq!(by_node, vec![0.0, 7.0, 6.0]);
    }

    #[test]
    fn onboard_empty_and_negative() {
        let net = build_grid(3, 1.0, 1.0, 1.0).unwrap();
        let mut flow = PassengerFlow::default();
        flow.headways.insert(SlotKey { period: 0, line: 0, dir: Direction::Forward, k: 0 }, 5.0);
        let p = onboard_recursion(&flow, net.line(0), Direction::Forward);
        assert!(p.onboard.values().all(|&v| v == 0.0));
        assert_eq!(p.onboard.len(), 3);

        flow.seated.insert(FlowKey::new(od(0, 1), Direction::Forward, 0), -2.0);
        let p = onboard_recursion(&flow, net.line(0), Direction::Forward);
        assert!(!p.diagnostics.is_empty());
    }

    #[test]
    fn capacity_and_fleet() {
        let net = build_grid(3, 1.0, 1.0, 1.0).unwrap();
        let mut net = net;
        net.set_round_trip_override(0, 30.0).unwrap();
        let p = ModelParams { t_start: 0.0, ..params() };
        let sched = schedule_of(&[10.0], 2);
        let mut flow = PassengerFlow::default();
        flow.onboard.insert(NodeKey { period: 0, line: 0, dir: Direction::Forward, k: 0, node: 1 }, 51.0);
        let v = capacity_and_fleet_check(&flow, &sched, &p, &net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ConstraintKind::Capacity);
        assert_eq!(v[0].slack, 1.0);

        // fleet term 30 / 10 * 3 = 9 <= 1000
        let sched3 = schedule_of(&[10.0], 3);
        assert!(capacity_and_fleet_check(&PassengerFlow::default(), &sched3, &p, &net).is_empty());
        let tight = ModelParams { fleet_size: 8, ..p.clone() };
        let v = capacity_and_fleet_check(&PassengerFlow::default(), &sched3, &tight, &net);
        assert_eq!(v[0].kind, ConstraintKind::Fleet);
        assert!((v[0].slack - 1.0).abs() < 1e-12);

        let degenerate = schedule_of(&[0.0], 1);
        let v = capacity_and_fleet_check(&PassengerFlow::default(), &degenerate, &p, &net);
        assert_eq!(v[0].kind, ConstraintKind::DegenerateHeadway);
    }

    fn one_pair_flow(sw: &[(f64, f64)], h: &[f64]) -> PassengerFlow {
        let mut flow = PassengerFlow::default();
        for (k, (&(s, w), &hk)) in sw.iter().zip(h).enumerate() {
            let key = FlowKey::new(od(0, 1), Direction::Forward, k);
            flow.seated.insert(key, s);
            flow.waiting.insert(key, w);
            flow.headways.insert(key.slot(), hk);
        }
        flow
    }

    #[test]
    fn objective_hand_example() {
        let p = ModelParams { dispatches_per_period: 2, big_m: Some(1000.0), ..params() };
        let flow = one_pair_flow(&[(3.0, 2.0), (2.0, 0.0)], &[5.0, 8.0]);
        // 2*8 + 5*(5/2) + 1000*(0+2)
        assert_eq!(evaluate_objective(&flow, &p), 2028.5);
        assert_eq!(evaluate_objective(&PassengerFlow::default(), &p), 0.0);

        let w_only = ModelParams { bigm_on_seated: false, ..p };
        // 2*8 + 5*2.5 + 0*1000 + 2*4
        assert_eq!(evaluate_objective(&flow, &w_only), 36.5);
    }

    #[test]
    fn bigm_dominates_unserved() {
        let p = ModelParams { dispatches_per_period: 2, big_m: Some(1000.0), ..params() };
        let flow = one_pair_flow(&[(3.0, 2.0), (1.0, 1.0)], &[5.0, 8.0]);
        assert!(evaluate_objective(&flow, &p) >= 1000.0);
    }

    #[test]
    fn coefficients_reproduce_objective() {
        let p = ModelParams { dispatches_per_period: 3, big_m: Some(600.0), ..params() };
        let h = [5.0, 9.0, 13.0];
        let sw = [(2.0, 5.0), (3.0, 2.0), (1.0, 1.0)];
        let flow = one_pair_flow(&sw, &h);
        let (a, b) = wait_coefficients(&h, &p);
        let by_coeff: f64 = sw.iter().enumerate().map(|(k, &(s, w))| a[k] * w + b[k] * (w + s)).sum();
        assert_eq!(evaluate_objective(&flow, &p), by_coeff);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::paper_defaults().validate().is_ok());
        assert_eq!(ModelParams::paper_defaults().big_m(), 600.0);
        let bad = ModelParams { h_min: 16.0, ..ModelParams::paper_defaults() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { big_m: Some(10.0), ..ModelParams::paper_defaults() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { l_min: 0, ..ModelParams::paper_defaults() };
        assert!(bad.validate().is_err());
        let json = r#"{"C":25,"F":1000,"h_min":5,"h_max":15,"K":5,"T":4,"t_start":0,"t_end":60,"l_min":1,"l_max":5}"#;
        let parsed: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(parsed, ModelParams::paper_defaults());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn flow_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
            proptest::collection::vec((0u32..20, 0u32..20), 3)
                .prop_map(|v| v.into_iter().map(|(s, w)| (s as f64, w as f64)).collect())
        }

        proptest! {
            #[test]
            fn objective_linear_in_flow(a in flow_strategy(), b in flow_strategy(), lambda in 0.0f64..1.0) {
                let p = ModelParams { dispatches_per_period: 3, big_m: Some(600.0), ..params() };
                let h = [5.0, 7.0, 11.0];
                let fa = one_pair_flow(&a, &h);
                let fb = one_pair_flow(&b, &h);
                let mix: Vec<(f64, f64)> = a.iter().zip(&b)
                    .map(|(x, y)| (lambda * x.0 + (1.0 - lambda) * y.0, lambda * x.1 + (1.0 - lambda) * y.1))
                    .collect();
                let fm = one_pair_flow(&mix, &h);
                let lhs = evaluate_objective(&fm, &p);
                let rhs = lambda * evaluate_objective(&fa, &p) + (1.0 - lambda) * evaluate_objective(&fb, &p);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
            }

            #[test]
            fn boardings_equal_alightings(seated in proptest::collection::vec(0u32..9, 10)) {
                let net = build_grid(5, 1.0, 1.0, 1.0).unwrap();
                let mut flow = PassengerFlow::default();
                let mut idx = 0;
                for i in 0..5 {
                    for j in (i + 1)..5 {
                        flow.seated.insert(FlowKey::new(od(i, j), Direction::Forward, 0), seated[idx] as f64);
                        idx += 1;
                    }
                }
                let p = onboard_recursion(&flow, net.line(0), Direction::Forward);
                prop_assert!(p.diagnostics.is_empty());
                let last = p.onboard.values().last().copied().unwrap();
                prop_assert_eq!(last, 0.0);
            }
        }
    }
}
