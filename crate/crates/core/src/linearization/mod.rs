//! Discretized reformulation of the dispatch model as a MILP.
//!
//! Headways and train lengths are restricted to finite sets `H` and
//! `L_train`. One binary `δ[slot, hv, lv]` per slot and value pair selects
//! both at once, which turns the fleet term `Tr / h * L` into the linear
//! expression `z = Σ (Tr / hv * lv) δ`. The waiting-time products `w * h` and
//! `s * h` in the objective become sums of `flow * δ` products, each replaced
//! by an auxiliary variable inside a big-M envelope bounded by the pair's OD
//! count.
//!
//! Dispatch times are not modelled; they are rebuilt from the headway chain
//! `x_1 = t_start + h_1`, `x_k = x_{k-1} + h_k`.

mod lp;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandInstance, LineOdKey};
use crate::error::{Error, Result};
use crate::formulation::{FlowKey, ModelParams, NodeKey, PassengerFlow, Schedule, SlotKey};
use crate::network::{Direction, GridNetwork};

pub use lp::{export_lp, parse_lp, write_lp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSets {
    /// Ascending; first is `h_min`, last is `h_max`.
    pub headway_values: Vec<f64>,
    /// Ascending, consecutive pod counts.
    pub length_values: Vec<u32>,
    pub headway_step: f64,
}

impl DiscretizationSets {
    pub fn choices_per_slot(&self) -> usize {
        self.headway_values.len() * self.length_values.len()
    }

    pub fn headway_index(&self, h: f64) -> Option<usize> {
        self.headway_values.iter().position(|&v| (v - h).abs() <= 1e-9)
    }

    pub fn length_index(&self, len: u32) -> Option<usize> {
        self.length_values.iter().position(|&v| v == len)
    }
}

/// `H = {h_min, h_min + step, ...}` with `h_max` always included, and
/// `L_train = {l_min, ..., l_max}`.
pub fn build_discretization(params: &ModelParams, headway_step: f64) -> Result<DiscretizationSets> {
    if !(headway_step > 0.0 && headway_step.is_finite()) {
        return Err(Error::config(format!("headway step must be positive, got {headway_step}")));
    }
    params.validate()?;
    let mut headway_values = Vec::new();
    let mut i = 0u32;
    loop {
        let v = params.h_min + i as f64 * headway_step;
        if v >= params.h_max - 1e-9 {
            break;
        }
        headway_values.push(v);
        i += 1;
    }
    headway_values.push(params.h_max);
    Ok(DiscretizationSets { headway_values, length_values: (params.l_min..=params.l_max).collect(), headway_step })
}

/// Fleet usage coefficient `Tr / hv * lv` of one `δ`.
pub fn z_value(tr: f64, hv: f64, lv: u32) -> Result<f64> {
    if !(hv > 0.0) {
        return Err(Error::InvalidSelection(format!("headway value {hv} must be positive")));
    }
    Ok(tr / hv * lv as f64)
}

/// A `δ` set to one: `slot` takes `headway_values[headway]` and
/// `length_values[length]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeltaOne {
    pub slot: SlotKey,
    pub headway: usize,
    pub length: usize,
}

/// Decodes a `δ` selection into dispatch times and train lengths. Each
/// `(l, d, t)` group present must select exactly one pair for every `k`.
pub fn selection_to_schedule(
    selection: &[DeltaOne],
    sets: &DiscretizationSets,
    params: &ModelParams,
) -> Result<Schedule> {
    let mut chosen: BTreeMap<SlotKey, DeltaOne> = BTreeMap::new();
    for d in selection {
        if d.headway >= sets.headway_values.len() || d.length >= sets.length_values.len() {
            return Err(Error::InvalidSelection(format!("{}: value index out of range", d.slot)));
        }
        if chosen.insert(d.slot, *d).is_some() {
            return Err(Error::InvalidSelection(format!("{}: more than one (headway, length) pair selected", d.slot)));
        }
    }
    let mut schedule = Schedule::default();
    let mut clock: BTreeMap<(usize, usize, Direction), (usize, f64)> = BTreeMap::new();
    for (slot, d) in &chosen {
        let group = (slot.period, slot.line, slot.dir);
        let (next_k, prev_x) = clock.get(&group).copied().unwrap_or((0, params.t_start));
        if slot.k != next_k {
            let missing = SlotKey { k: next_k, ..*slot };
            return Err(Error::InvalidSelection(format!("{missing}: no pair selected")));
        }
        let x = prev_x + sets.headway_values[d.headway];
        schedule.x.insert(*slot, x);
        schedule.train_len.insert(*slot, sets.length_values[d.length]);
        clock.insert(group, (next_k + 1, x));
    }
    for ((period, line, dir), (next_k, _)) in clock {
        if next_k != params.dispatches_per_period {
            let missing = SlotKey { period, line, dir, k: next_k };
            return Err(Error::InvalidSelection(format!("{missing}: no pair selected")));
        }
    }
    Ok(schedule)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Which model quantity a column stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Delta {
        slot: SlotKey,
        headway: usize,
        length: usize,
    },
    FleetUsage(SlotKey),
    Headway(SlotKey),
    TrainLength(SlotKey),
    Seated(FlowKey),
    Waiting(FlowKey),
    Onboard(NodeKey),
    /// `w_k * [h_{k+1} = H[headway]]`
    WaitNextProduct {
        key: FlowKey,
        headway: usize,
    },
    /// `w_k * [h_k = H[headway]]`
    WaitProduct {
        key: FlowKey,
        headway: usize,
    },
    /// `s_k * [h_k = H[headway]]`
    SeatProduct {
        key: FlowKey,
        headway: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndexRegistry {
    columns: BTreeMap<Symbol, usize>,
}

impl IndexRegistry {
    pub fn column(&self, symbol: &Symbol) -> Option<usize> {
        self.columns.get(symbol).copied()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &usize)> {
        self.columns.iter()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Minimized.
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub registry: IndexRegistry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub nonzeros: usize,
}

impl LinearModel {
    pub fn stats(&self) -> ModelStats {
        ModelStats {
            variables: self.variables.len(),
            binaries: self.variables.iter().filter(|v| v.kind == VarKind::Binary).count(),
            constraints: self.constraints.len(),
            nonzeros: self.constraints.iter().map(|c| c.terms.len()).sum(),
        }
    }

    fn add_var(&mut self, symbol: Option<Symbol>, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        let col = self.variables.len();
        self.variables.push(Variable { name, kind, lower, upper });
        if let Some(symbol) = symbol {
            let prev = self.registry.columns.insert(symbol, col);
            debug_assert!(prev.is_none(), "symbol registered twice");
        }
        col
    }

    fn add_row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { name, terms, sense, rhs });
    }

    /// Objective value and the largest row or bound violation at `values`.
    pub fn evaluate(&self, values: &[f64]) -> (f64, f64) {
        let objective = self.objective_constant + self.objective.iter().map(|&(c, a)| a * values[c]).sum::<f64>();
        let mut worst: f64 = 0.0;
        for row in &self.constraints {
            let lhs: f64 = row.terms.iter().map(|&(c, a)| a * values[c]).sum();
            let gap = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
            if v.kind != VarKind::Continuous {
                worst = worst.max((x - x.round()).abs());
            }
        }
        (objective, worst)
    }

    /// Column values corresponding to a schedule and flow on the grid.
    pub fn assignment_for(
        &self,
        schedule: &Schedule,
        flow: &PassengerFlow,
        sets: &DiscretizationSets,
    ) -> Result<Vec<f64>> {
        let mut values = vec![0.0; self.variables.len()];
        let mut picked: BTreeMap<SlotKey, usize> = BTreeMap::new();
        for (slot, &h) in &flow.headways {
            let hi = sets
                .headway_index(h)
                .ok_or_else(|| Error::InvalidSelection(format!("{slot}: headway {h} not on grid")))?;
            let len = schedule.train_len.get(slot).copied().unwrap_or(0);
            let li = sets
                .length_index(len)
                .ok_or_else(|| Error::InvalidSelection(format!("{slot}: length {len} not on grid")))?;
            picked.insert(*slot, hi);
            let mut set = |sym: Symbol, v: f64| {
                if let Some(c) = self.registry.column(&sym) {
                    values[c] = v;
                }
            };
            set(Symbol::Delta { slot: *slot, headway: hi, length: li }, 1.0);
            set(Symbol::Headway(*slot), h);
            set(Symbol::TrainLength(*slot), len as f64);
        }
        for (sym, &col) in self.registry.iter() {
            values[col] = match *sym {
                Symbol::Seated(key) => flow.seated_at(&key),
                Symbol::Waiting(key) => flow.waiting_at(&key),
                Symbol::Onboard(key) => flow.onboard.get(&key).copied().unwrap_or(0.0),
                Symbol::WaitNextProduct { key, headway } => {
                    let next = SlotKey { k: key.k + 1, ..key.slot() };
                    indicator(&picked, next, headway) * flow.waiting_at(&key)
                }
                Symbol::WaitProduct { key, headway } => indicator(&picked, key.slot(), headway) * flow.waiting_at(&key),
                Symbol::SeatProduct { key, headway } => indicator(&picked, key.slot(), headway) * flow.seated_at(&key),
                _ => continue,
            };
        }
        // z rows are `z - Σ coef δ = 0`
        for row in self.constraints.iter().filter(|r| r.name.starts_with("zdef_")) {
            let (zcol, _) = row.terms[0];
            values[zcol] = -row.terms[1..].iter().map(|&(c, a)| a * values[c]).sum::<f64>();
        }
        Ok(values)
    }
}

fn indicator(picked: &BTreeMap<SlotKey, usize>, slot: SlotKey, headway: usize) -> f64 {
    if picked.get(&slot) == Some(&headway) {
        1.0
    } else {
        0.0
    }
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}").replace('.', "p").replace('-', "m")
    }
}

fn slot_tag(s: &SlotKey) -> String {
    format!("l{}_{}_t{}_k{}", s.line, s.dir, s.period, s.k)
}

fn flow_tag(f: &FlowKey) -> String {
    format!("i{}_j{}_l{}_{}_t{}_k{}", f.origin, f.destination, f.line, f.dir, f.period, f.k)
}

/// Builds the complete MILP over the active lines of `network`.
pub fn assemble_milp(
    network: &GridNetwork,
    demand: &DemandInstance,
    params: &ModelParams,
    sets: &DiscretizationSets,
) -> Result<LinearModel> {
    params.validate()?;
    for key in demand.line_od.keys() {
        if !network.is_active(key.line) || key.period >= params.periods {
            return Err(Error::config(format!("demand entry {key:?} has no scheduled line or period")));
        }
        if key.origin >= network.n_stops_per_line || key.destination >= network.n_stops_per_line {
            return Err(Error::config(format!("demand entry {key:?} lies off its line")));
        }
    }
    let k_count = params.dispatches_per_period;
    let n = network.n_stops_per_line;
    let mut m = LinearModel::default();
    let flow_kind = if params.integral_flows { VarKind::Integer } else { VarKind::Continuous };
    let inf = f64::INFINITY;

    let mut slots = Vec::new();
    for t in 0..params.periods {
        for &l in network.active_lines() {
            for dir in Direction::ALL {
                for k in 0..k_count {
                    slots.push(SlotKey { period: t, line: l, dir, k });
                }
            }
        }
    }

    // selection, linking and fleet-usage definitions
    let mut delta_cols: BTreeMap<SlotKey, Vec<Vec<usize>>> = BTreeMap::new();
    for slot in &slots {
        let tag = slot_tag(slot);
        let mut grid = Vec::with_capacity(sets.headway_values.len());
        for (hi, &hv) in sets.headway_values.iter().enumerate() {
            let mut row = Vec::with_capacity(sets.length_values.len());
            for (li, &lv) in sets.length_values.iter().enumerate() {
                let sym = Symbol::Delta { slot: *slot, headway: hi, length: li };
                row.push(m.add_var(Some(sym), format!("delta_{tag}_h{}_lv{lv}", num(hv)), VarKind::Binary, 0.0, 1.0));
            }
            grid.push(row);
        }
        let h = m.add_var(
            Some(Symbol::Headway(*slot)),
            format!("h_{tag}"),
            VarKind::Continuous,
            params.h_min,
            params.h_max,
        );
        let len = m.add_var(
            Some(Symbol::TrainLength(*slot)),
            format!("len_{tag}"),
            VarKind::Integer,
            params.l_min as f64,
            params.l_max as f64,
        );
        let z = m.add_var(Some(Symbol::FleetUsage(*slot)), format!("z_{tag}"), VarKind::Continuous, 0.0, inf);
        let tr = network.line(slot.line).round_trip_time;

        let all: Vec<(usize, usize, usize)> =
            grid.iter().enumerate().flat_map(|(hi, r)| r.iter().enumerate().map(move |(li, &c)| (hi, li, c))).collect();
        m.add_row(format!("pick_{tag}"), all.iter().map(|&(_, _, c)| (c, 1.0)).collect(), Sense::Eq, 1.0);
        let mut terms = vec![(h, 1.0)];
        terms.extend(all.iter().map(|&(hi, _, c)| (c, -sets.headway_values[hi])));
        m.add_row(format!("hdef_{tag}"), terms, Sense::Eq, 0.0);
        let mut terms = vec![(len, 1.0)];
        terms.extend(all.iter().map(|&(_, li, c)| (c, -(sets.length_values[li] as f64))));
        m.add_row(format!("ldef_{tag}"), terms, Sense::Eq, 0.0);
        let mut terms = vec![(z, 1.0)];
        for &(hi, li, c) in &all {
            terms.push((c, -z_value(tr, sets.headway_values[hi], sets.length_values[li])?));
        }
        m.add_row(format!("zdef_{tag}"), terms, Sense::Eq, 0.0);
        delta_cols.insert(*slot, grid);
    }

    for t in 0..params.periods {
        let terms = slots
            .iter()
            .filter(|s| s.period == t)
            .map(|s| (m.registry.column(&Symbol::FleetUsage(*s)).unwrap(), 1.0))
            .collect();
        m.add_row(format!("fleet_t{t}"), terms, Sense::Le, params.fleet_size as f64);
    }

    for slot in &slots {
        let terms =
            (0..=slot.k).map(|k| (m.registry.column(&Symbol::Headway(SlotKey { k, ..*slot })).unwrap(), 1.0)).collect();
        m.add_row(format!("window_{}", slot_tag(slot)), terms, Sense::Le, params.window());
    }

    // passenger flows, both directions; the non-serving one is fixed at zero
    for (&od, &count) in &demand.line_od {
        let serving = od.direction();
        for dir in Direction::ALL {
            let ub = if dir == serving { count as f64 } else { 0.0 };
            for k in 0..k_count {
                let key = FlowKey::new(od, dir, k);
                let tag = flow_tag(&key);
                m.add_var(Some(Symbol::Seated(key)), format!("s_{tag}"), flow_kind, 0.0, ub);
                m.add_var(Some(Symbol::Waiting(key)), format!("w_{tag}"), flow_kind, 0.0, ub);
            }
        }
        for k in 0..k_count {
            let mut terms = Vec::new();
            for dir in Direction::ALL {
                let key = FlowKey::new(od, dir, k);
                terms.push((m.registry.column(&Symbol::Seated(key)).unwrap(), 1.0));
                terms.push((m.registry.column(&Symbol::Waiting(key)).unwrap(), 1.0));
                for prev in 0..k {
                    let pk = FlowKey::new(od, dir, prev);
                    terms.push((m.registry.column(&Symbol::Seated(pk)).unwrap(), 1.0));
                }
            }
            let name = format!("cons_i{}_j{}_l{}_t{}_k{}", od.origin, od.destination, od.line, od.period, k);
            m.add_row(name, terms, Sense::Eq, count as f64);
        }
    }

    // onboard recursion and capacity
    for slot in &slots {
        let tag = slot_tag(slot);
        let order: Vec<usize> = match slot.dir {
            Direction::Forward => (0..n).collect(),
            Direction::Reverse => (0..n).rev().collect(),
        };
        let od_here: Vec<LineOdKey> =
            demand.line_period(slot.line, slot.period).map(|(k, _)| *k).filter(|k| k.direction() == slot.dir).collect();
        let len_col = m.registry.column(&Symbol::TrainLength(*slot)).unwrap();
        let mut prev: Option<usize> = None;
        for &i in &order {
            let nk = NodeKey { period: slot.period, line: slot.line, dir: slot.dir, k: slot.k, node: i };
            let ob = m.add_var(Some(Symbol::Onboard(nk)), format!("ob_i{i}_{tag}"), VarKind::Continuous, 0.0, inf);
            let mut terms = vec![(ob, 1.0)];
            if let Some(p) = prev {
                terms.push((p, -1.0));
            }
            for od in &od_here {
                let s = m.registry.column(&Symbol::Seated(FlowKey::new(*od, slot.dir, slot.k))).unwrap();
                if od.origin == i {
                    terms.push((s, -1.0));
                }
                if od.destination == i {
                    terms.push((s, 1.0));
                }
            }
            m.add_row(format!("onb_i{i}_{tag}"), terms, Sense::Eq, 0.0);
            m.add_row(
                format!("cap_i{i}_{tag}"),
                vec![(ob, 1.0), (len_col, -(params.capacity_per_pod as f64))],
                Sense::Le,
                0.0,
            );
            prev = Some(ob);
        }
    }

    // objective with linearized flow × headway products
    let big_m = params.big_m();
    let mut objective: BTreeMap<usize, f64> = BTreeMap::new();
    let mut add_obj = |col: usize, coef: f64| *objective.entry(col).or_insert(0.0) += coef;
    for (&od, &count) in &demand.line_od {
        let dir = od.direction();
        let bound = count as f64;
        for k in 0..k_count {
            let key = FlowKey::new(od, dir, k);
            let tag = flow_tag(&key);
            let s = m.registry.column(&Symbol::Seated(key)).unwrap();
            let w = m.registry.column(&Symbol::Waiting(key)).unwrap();
            let last = k + 1 == k_count;
            if last {
                add_obj(w, big_m);
                if params.bigm_on_seated {
                    add_obj(w, big_m);
                    add_obj(s, big_m);
                }
            } else {
                let next = SlotKey { k: k + 1, ..key.slot() };
                for (hi, &hv) in sets.headway_values.iter().enumerate() {
                    let y = m.add_var(
                        Some(Symbol::WaitNextProduct { key, headway: hi }),
                        format!("ywn_{tag}_h{}", num(hv)),
                        VarKind::Continuous,
                        0.0,
                        inf,
                    );
                    envelope(&mut m, y, w, &delta_cols[&next][hi], bound, &format!("ywn_{tag}_h{}", num(hv)));
                    add_obj(y, hv);
                }
            }
            if !last || !params.bigm_on_seated {
                for (hi, &hv) in sets.headway_values.iter().enumerate() {
                    for (sym, var, prefix) in [
                        (Symbol::WaitProduct { key, headway: hi }, w, "yw"),
                        (Symbol::SeatProduct { key, headway: hi }, s, "ys"),
                    ] {
                        let name = format!("{prefix}_{tag}_h{}", num(hv));
                        let y = m.add_var(Some(sym), name.clone(), VarKind::Continuous, 0.0, inf);
                        envelope(&mut m, y, var, &delta_cols[&key.slot()][hi], bound, &name);
                        add_obj(y, hv / 2.0);
                    }
                }
            }
        }
    }
    m.objective = objective.into_iter().collect();
    Ok(m)
}

/// `y = v * Σ δ` for `v ∈ [0, bound]` and a 0/1 sum of `δ`.
fn envelope(m: &mut LinearModel, y: usize, v: usize, deltas: &[usize], bound: f64, name: &str) {
    let mut ub = vec![(y, 1.0)];
    ub.extend(deltas.iter().map(|&d| (d, -bound)));
    m.add_row(format!("{name}_ub"), ub, Sense::Le, 0.0);
    m.add_row(format!("{name}_uv"), vec![(y, 1.0), (v, -1.0)], Sense::Le, 0.0);
    let mut lb = vec![(y, 1.0), (v, -1.0)];
    lb.extend(deltas.iter().map(|&d| (d, -bound)));
    m.add_row(format!("{name}_lb"), lb, Sense::Ge, -bound);
}

/// JSON model-statistics report.
pub fn stats_json(model: &LinearModel) -> String {
    let mut s = serde_json::to_string_pretty(&model.stats()).expect("stats serialize");
    s.push('\n');
    s
}

/// Human-readable summary of variable counts per symbol family.
pub fn describe(model: &LinearModel) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (sym, _) in model.registry.iter() {
        let family = match sym {
            Symbol::Delta { .. } => "delta",
            Symbol::FleetUsage(_) => "z",
            Symbol::Headway(_) => "h",
            Symbol::TrainLength(_) => "len",
            Symbol::Seated(_) => "s",
            Symbol::Waiting(_) => "w",
            Symbol::Onboard(_) => "ob",
            Symbol::WaitNextProduct { .. } | Symbol::WaitProduct { .. } | Symbol::SeatProduct { .. } => "product",
        };
        *counts.entry(family).or_insert(0) += 1;
    }
    let mut out = String::new();
    for (family, c) in counts {
        let _ = writeln!(out, "{family:>8}: {c}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_grid;

    fn params() -> ModelParams {
        ModelParams { periods: 1, ..ModelParams::paper_defaults() }
    }

    #[test]
    fn table_two_sets() {
        let sets = build_discretization(&params(), 1.0).unwrap();
        assert_eq!(sets.headway_values, (5..=15).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(sets.length_values, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn degenerate_and_capped_sets() {
        let p = ModelParams { h_min: 7.0, h_max: 7.0, ..params() };
        assert_eq!(build_discretization(&p, 1.0).unwrap().headway_values, vec![7.0]);
        assert_eq!(build_discretization(&params(), 4.0).unwrap().headway_values, vec![5.0, 9.0, 13.0, 15.0]);
        assert_eq!(build_discretization(&params(), 25.0).unwrap().headway_values, vec![5.0, 15.0]);
        assert!(build_discretization(&params(), 0.0).is_err());
    }

    fn slot(k: usize) -> SlotKey {
        SlotKey { period: 0, line: 0, dir: Direction::Forward, k }
    }

    #[test]
    fn constant_selection_schedule() {
        let p = ModelParams { dispatches_per_period: 3, t_start: 0.0, ..params() };
        let sets = build_discretization(&p, 1.0).unwrap();
        let sel: Vec<_> = (0..3).map(|k| DeltaOne { slot: slot(k), headway: 0, length: 0 }).collect();
        let s = selection_to_schedule(&sel, &sets, &p).unwrap();
        assert_eq!(s.x.values().copied().collect::<Vec<_>>(), vec![5.0, 10.0, 15.0]);
        assert!(s.train_len.values().all(|&l| l == 1));
    }

    #[test]
    fn exactly_one_violations_are_rejected() {
        let p = ModelParams { dispatches_per_period: 2, ..params() };
        let sets = build_discretization(&p, 1.0).unwrap();
        let sel = vec![
            DeltaOne { slot: slot(0), headway: 0, length: 0 },
            DeltaOne { slot: slot(0), headway: 2, length: 1 },
            DeltaOne { slot: slot(1), headway: 0, length: 0 },
        ];
        match selection_to_schedule(&sel, &sets, &p) {
            Err(Error::InvalidSelection(msg)) => assert!(msg.contains("l0 d1 t0 k0"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let sel = vec![DeltaOne { slot: slot(0), headway: 0, length: 0 }];
        match selection_to_schedule(&sel, &sets, &p) {
            Err(Error::InvalidSelection(msg)) => assert!(msg.contains("k1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn z_values() {
        assert_eq!(z_value(30.0, 10.0, 3).unwrap(), 9.0);
        assert_eq!(z_value(20.0, 5.0, 1).unwrap(), 4.0);
        assert!(z_value(20.0, 0.0, 1).is_err());
    }

    fn tiny() -> (GridNetwork, ModelParams, DiscretizationSets) {
        let mut net = build_grid(2, 1.0, 1.0, 1.0).unwrap();
        net.set_active_lines(&[0]).unwrap();
        let p = ModelParams { dispatches_per_period: 1, h_min: 5.0, h_max: 5.0, ..params() };
        let sets = build_discretization(&p, 1.0).unwrap();
        (net, p, sets)
    }

    #[test]
    fn minimal_instance_structure() {
        let (net, p, sets) = tiny();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 0, period: 0, origin: 0, destination: 1 }, 10);
        let m = assemble_milp(&net, &demand, &p, &sets).unwrap();
        let st = m.stats();
        // one headway value, five lengths, two directions
        assert_eq!(st.binaries, 10);
        assert!(m.constraints.iter().any(|c| c.name == "fleet_t0"));
        assert!(m.registry.column(&Symbol::Delta { slot: slot(0), headway: 0, length: 0 }).is_some());
    }

    #[test]
    fn empty_demand_model_has_zero_objective() {
        let (net, p, sets) = tiny();
        let demand = DemandInstance { periods: 1, ..Default::default() };
        let m = assemble_milp(&net, &demand, &p, &sets).unwrap();
        assert!(m.objective.is_empty());
        assert_eq!(m.objective_constant, 0.0);
    }

    #[test]
    fn registry_names_each_column_once() {
        let (net, p, sets) = tiny();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 0, period: 0, origin: 1, destination: 0 }, 4);
        let m = assemble_milp(&net, &demand, &p, &sets).unwrap();
        let mut cols: Vec<usize> = m.registry.iter().map(|(_, &c)| c).collect();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols.len(), m.registry.len());
        assert_eq!(cols.len(), m.variables.len());
        let names: std::collections::BTreeSet<_> = m.variables.iter().map(|v| &v.name).collect();
        assert_eq!(names.len(), m.variables.len());
    }

    #[test]
    fn rejects_demand_on_inactive_line() {
        let (net, p, sets) = tiny();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 1, period: 0, origin: 0, destination: 1 }, 1);
        assert!(assemble_milp(&net, &demand, &p, &sets).is_err());
    }
}
