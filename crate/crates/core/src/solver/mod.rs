//! Branch and bound over the discretized `(headway, length)` choices.
//!
//! The waiting cost separates by corridor `(t, l, d)`, and corridors interact
//! only through each period's fleet budget. The search therefore runs in two
//! levels:
//!
//! 1. per corridor, a slot-by-slot search (pruned by the dispatch window, the
//!    fleet reserve, and a capacity-relaxation bound) keeps the Pareto set of
//!    (fleet usage, waiting cost);
//! 2. per period, a depth-first search picks one Pareto point per corridor,
//!    bounded by the cheapest point each remaining corridor could still
//!    afford.
//!
//! Every sequence is weakly dominated by a kept Pareto point, so with a full
//! per-corridor search the result equals exhaustive enumeration.

mod assign;
mod frontier;
mod search;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandInstance;
use crate::error::{Error, Result};
use crate::formulation::{check_solution, compute_headways, ModelParams, PassengerFlow, Schedule, FEASIBILITY_TOL};
use crate::linearization::DiscretizationSets;
use crate::network::GridNetwork;

pub use assign::{
    assign_passengers, build_corridors, corridor_cost, evaluate_corridor, exact_boarding, greedy_boarding, max_packing,
    stage_costs, AssignmentPolicy, Boarding, Corridor, CorridorPair, EXACT_DEMAND_LIMIT,
};
pub use frontier::{build_frontier, choose_mode, Frontier, FrontierInput, FrontierMode, FrontierPoint};
pub use search::SearchNode;

use search::PeriodSearch;

/// Largest search space `enumerate_exhaustive` accepts, in bits.
pub const EXHAUSTIVE_LIMIT_BITS: u32 = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Period-level node budget; `Some(0)` returns the greedy dive.
    pub node_limit: Option<u64>,
    pub time_limit_s: Option<f64>,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    pub assignment: AssignmentPolicy,
    /// Corridors with more sequences than this are searched restricted.
    pub max_leaves_per_corridor: u64,
    pub record_pruned: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            node_limit: None,
            time_limit_s: None,
            threads: 0,
            assignment: AssignmentPolicy::Auto,
            max_leaves_per_corridor: 200_000,
            record_pruned: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Optimality {
    Exact,
    Bounded { gap: f64 },
    Heuristic,
}

impl Optimality {
    pub fn label(&self) -> &'static str {
        match self {
            Optimality::Exact => "exact",
            Optimality::Bounded { .. } => "bounded",
            Optimality::Heuristic => "heuristic",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub node_count: u64,
    pub corridor_nodes: u64,
    pub frontier_points: usize,
    pub restricted_corridors: usize,
    pub lower_bound: f64,
    /// Incumbent costs in the order found, per period.
    pub incumbents: Vec<Vec<f64>>,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub pruned: Vec<SearchNode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub schedule: Schedule,
    pub flow: PassengerFlow,
    pub objective: f64,
    pub optimality: Optimality,
    pub diagnostics: Diagnostics,
}

/// Chosen indices per corridor, in corridor order.
struct Selection {
    headways: Vec<Vec<usize>>,
    lengths: Vec<Vec<usize>>,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn check_window(params: &ModelParams, sets: &DiscretizationSets) -> Result<()> {
    let shortest = sets.headway_values[0] * params.dispatches_per_period as f64;
    if shortest > params.window() + FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "dispatch window: {} dispatches at the minimum headway {} need {shortest} min, window is {} min",
            params.dispatches_per_period,
            sets.headway_values[0],
            params.window()
        )));
    }
    Ok(())
}

/// Smallest fleet usage any corridor can have, ignoring the window.
fn corridor_min_weight(corr: &Corridor, sets: &DiscretizationSets, k_count: usize) -> f64 {
    let h_max = *sets.headway_values.last().unwrap();
    k_count as f64 * corr.round_trip_time / h_max * sets.length_values[0] as f64
}

fn fleet_reserves(corridors: &[Corridor], params: &ModelParams, sets: &DiscretizationSets) -> Result<Vec<f64>> {
    let k = params.dispatches_per_period;
    let mut per_period = vec![0.0; params.periods];
    for c in corridors {
        per_period[c.period] += corridor_min_weight(c, sets, k);
    }
    for (t, &used) in per_period.iter().enumerate() {
        if used > params.fleet_size as f64 + FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "fleet: period {t} needs at least {used:.2} pods at the longest headway and shortest trains, fleet is {}",
                params.fleet_size
            )));
        }
    }
    Ok(corridors
        .iter()
        .map(|c| params.fleet_size as f64 - per_period[c.period] + corridor_min_weight(c, sets, k))
        .collect())
}

fn build_solution(
    corridors: &[Corridor],
    selection: &Selection,
    network: &GridNetwork,
    demand: &DemandInstance,
    params: &ModelParams,
    sets: &DiscretizationSets,
    policy: AssignmentPolicy,
) -> Result<(Schedule, PassengerFlow)> {
    let mut schedule = Schedule::default();
    let mut flow = PassengerFlow::default();
    for (i, corr) in corridors.iter().enumerate() {
        let hs: Vec<f64> = selection.headways[i].iter().map(|&h| sets.headway_values[h]).collect();
        let ls: Vec<u32> = selection.lengths[i].iter().map(|&l| sets.length_values[l]).collect();
        let mut x = params.t_start;
        for (k, (&h, &l)) in hs.iter().zip(&ls).enumerate() {
            x += h;
            schedule.x.insert(corr.slot(k), x);
            schedule.train_len.insert(corr.slot(k), l);
        }
        if corr.demand > 0 {
            let (_, boarding) = evaluate_corridor(corr, &hs, &ls, params, policy)?;
            assign::record_boarding(corr, &boarding, &mut flow);
        }
    }
    flow.headways = compute_headways(&schedule, params);
    assign::finish_flow(&mut flow, network, params);
    let violations = check_solution(&schedule, &flow, demand, network, params);
    if !violations.is_empty() {
        return Err(Error::ScheduleRejected(violations));
    }
    Ok((schedule, flow))
}

/// Minimum-waiting schedule over the discretized choices.
pub fn branch_and_bound(
    network: &GridNetwork,
    demand: &DemandInstance,
    params: &ModelParams,
    sets: &DiscretizationSets,
    options: &SolverOptions,
) -> Result<Solution> {
    let started = Instant::now();
    params.validate()?;
    check_window(params, sets)?;
    let corridors = build_corridors(network, demand, params)?;
    let reserves = fleet_reserves(&corridors, params, sets)?;
    let deadline = options.time_limit_s.map(|s| started + Duration::from_secs_f64(s.max(0.0)));
    let mode = choose_mode(sets, params.dispatches_per_period, options.max_leaves_per_corridor);

    let frontiers: Vec<Frontier> = with_pool(options.threads, || {
        corridors
            .par_iter()
            .zip(reserves.par_iter())
            .map(|(corr, &reserve)| {
                build_frontier(&FrontierInput {
                    corridor: corr,
                    sets,
                    params,
                    policy: options.assignment,
                    reserve,
                    mode,
                    deadline,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (corr, f) in corridors.iter().zip(&frontiers) {
        if f.points.is_empty() {
            return Err(Error::Infeasible(format!(
                "fleet: line {} {} in period {} has no dispatch pattern within its share of the fleet",
                corr.line, corr.dir, corr.period
            )));
        }
    }

    let periods: Vec<PeriodSearch<'_>> = (0..params.periods)
        .map(|t| {
            let idx: Vec<usize> = (0..corridors.len()).filter(|&i| corridors[i].period == t).collect();
            PeriodSearch {
                period: t,
                frontiers: idx.iter().map(|&i| &frontiers[i]).collect(),
                slots: idx
                    .iter()
                    .map(|&i| (0..params.dispatches_per_period).map(|k| corridors[i].slot(k)).collect())
                    .collect(),
                fleet: params.fleet_size as f64,
                node_limit: options.node_limit,
                deadline,
                record_pruned: options.record_pruned,
            }
        })
        .collect();
    let outcomes = with_pool(options.threads, || periods.par_iter().map(|p| p.run()).collect::<Vec<_>>());

    let mut selection = Selection { headways: Vec::new(), lengths: Vec::new() };
    let mut diagnostics = Diagnostics::default();
    let mut all_exhausted = true;
    let mut lower_bound = 0.0;
    let mut incumbent = 0.0;
    let mut choices = Vec::new();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        let Some(outcome) = outcome else {
            return Err(Error::Infeasible(format!("fleet: no combination of patterns fits period {t}")));
        };
        all_exhausted &= outcome.exhausted;
        incumbent += outcome.cost;
        let period_corridors = corridors.iter().zip(&frontiers).filter(|(c, _)| c.period == t);
        let relaxed: f64 = period_corridors.clone().map(|(_, f)| f.root_bound).sum();
        let any_partial = period_corridors.clone().any(|(_, f)| !f.complete);
        lower_bound += if any_partial {
            relaxed
        } else if outcome.exhausted {
            outcome.cost
        } else {
            outcome.root_bound
        };
        diagnostics.node_count += outcome.nodes;
        diagnostics.incumbents.push(outcome.incumbents);
        diagnostics.pruned.extend(outcome.pruned);
        choices.extend(outcome.choice);
    }
    // choices follow corridor order because corridors are sorted by period
    for (f, &c) in frontiers.iter().zip(&choices) {
        selection.headways.push(f.points[c].headways.clone());
        selection.lengths.push(f.points[c].lengths.clone());
    }
    diagnostics.corridor_nodes = frontiers.iter().map(|f| f.nodes).sum();
    diagnostics.frontier_points = frontiers.iter().map(|f| f.points.len()).sum();
    diagnostics.restricted_corridors = frontiers.iter().filter(|f| !f.complete).count();
    diagnostics.lower_bound = lower_bound;

    let (schedule, flow) = build_solution(&corridors, &selection, network, demand, params, sets, options.assignment)?;
    let objective = flow.objective_value;
    let optimality = if options.node_limit == Some(0) {
        Optimality::Heuristic
    } else if (all_exhausted && diagnostics.restricted_corridors == 0)
        || lower_bound >= incumbent - FEASIBILITY_TOL * incumbent.abs().max(1.0)
    {
        // a restricted search whose bound meets the incumbent is still proven
        Optimality::Exact
    } else {
        let gap = if incumbent > 0.0 { ((incumbent - lower_bound) / incumbent).max(0.0) } else { 0.0 };
        Optimality::Bounded { gap }
    };
    diagnostics.wall_time = started.elapsed();
    Ok(Solution { schedule, flow, objective, optimality, diagnostics })
}

/// Every `(headway, length)` sequence of a corridor with its fleet usage and
/// waiting cost; sequences that overrun the window are skipped.
fn corridor_table(
    corr: &Corridor,
    params: &ModelParams,
    sets: &DiscretizationSets,
    policy: AssignmentPolicy,
) -> Result<Vec<(f64, f64, usize)>> {
    let k_count = params.dispatches_per_period;
    let nl = sets.length_values.len();
    let choices = sets.headway_values.len() * nl;
    let total = choices.pow(k_count as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let (hs, ls) = decode(code, choices, nl, k_count);
        let hv: Vec<f64> = hs.iter().map(|&h| sets.headway_values[h]).collect();
        if hv.iter().sum::<f64>() > params.window() + FEASIBILITY_TOL {
            continue;
        }
        let lv: Vec<u32> = ls.iter().map(|&l| sets.length_values[l]).collect();
        let weight: f64 = hv.iter().zip(&lv).map(|(h, &l)| corr.round_trip_time / h * l as f64).sum();
        let (cost, _) = evaluate_corridor(corr, &hv, &lv, params, policy)?;
        out.push((cost, weight, code));
    }
    Ok(out)
}

/// Slot `k` takes digit `k` of `code` in base `|H|·|L|`.
fn decode(mut code: usize, choices: usize, nl: usize, k_count: usize) -> (Vec<usize>, Vec<usize>) {
    let mut hs = Vec::with_capacity(k_count);
    let mut ls = Vec::with_capacity(k_count);
    for _ in 0..k_count {
        let digit = code % choices;
        hs.push(digit / nl);
        ls.push(digit % nl);
        code /= choices;
    }
    (hs, ls)
}

/// Brute-force optimum over every selection; refuses search spaces above
/// [`EXHAUSTIVE_LIMIT_BITS`].
pub fn enumerate_exhaustive(
    network: &GridNetwork,
    demand: &DemandInstance,
    params: &ModelParams,
    sets: &DiscretizationSets,
    policy: AssignmentPolicy,
) -> Result<Solution> {
    let started = Instant::now();
    params.validate()?;
    let corridors = build_corridors(network, demand, params)?;
    let slots = corridors.len() * params.dispatches_per_period;
    let bits = slots as f64 * ((sets.headway_values.len() * sets.length_values.len()) as f64).log2();
    if bits > EXHAUSTIVE_LIMIT_BITS as f64 {
        return Err(Error::SearchSpaceTooLarge { bits, limit: EXHAUSTIVE_LIMIT_BITS });
    }
    check_window(params, sets)?;
    let tables: Vec<Vec<(f64, f64, usize)>> =
        corridors.iter().map(|c| corridor_table(c, params, sets, policy)).collect::<Result<_>>()?;
    let nl = sets.length_values.len();
    let choices = sets.headway_values.len() * nl;
    let k_count = params.dispatches_per_period;

    let mut codes = vec![0usize; corridors.len()];
    let mut evaluated = 0u64;
    for t in 0..params.periods {
        let idx: Vec<usize> = (0..corridors.len()).filter(|&i| corridors[i].period == t).collect();
        if idx.iter().any(|&i| tables[i].is_empty()) {
            return Err(Error::Infeasible(format!("dispatch window: no sequence fits period {t}")));
        }
        let mut odometer = vec![0usize; idx.len()];
        let mut best: Option<(f64, f64, Vec<usize>)> = None;
        loop {
            evaluated += 1;
            let mut cost = 0.0;
            let mut weight = 0.0;
            for (pos, &i) in idx.iter().enumerate() {
                let (c, w, _) = tables[i][odometer[pos]];
                cost += c;
                weight += w;
            }
            if weight <= params.fleet_size as f64 + FEASIBILITY_TOL {
                let better = match &best {
                    None => true,
                    Some((bc, bw, _)) => cost < *bc || (cost == *bc && weight < *bw),
                };
                if better {
                    best = Some((cost, weight, odometer.clone()));
                }
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    break;
                }
                odometer[pos] += 1;
                if odometer[pos] < tables[idx[pos]].len() {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
        let Some((_, _, chosen)) = best else {
            return Err(Error::Infeasible(format!("fleet: no selection fits period {t}")));
        };
        for (pos, &i) in idx.iter().enumerate() {
            codes[i] = tables[i][chosen[pos]].2;
        }
    }
    let mut selection = Selection { headways: Vec::new(), lengths: Vec::new() };
    for &code in &codes {
        let (hs, ls) = decode(code, choices, nl, k_count);
        selection.headways.push(hs);
        selection.lengths.push(ls);
    }
    let (schedule, flow) = build_solution(&corridors, &selection, network, demand, params, sets, policy)?;
    let objective = flow.objective_value;
    let diagnostics = Diagnostics {
        node_count: evaluated,
        lower_bound: objective,
        wall_time: started.elapsed(),
        ..Default::default()
    };
    Ok(Solution { schedule, flow, objective, optimality: Optimality::Exact, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::LineOdKey;
    use crate::linearization::build_discretization;
    use crate::network::build_grid;

    fn one_line() -> GridNetwork {
        let mut net = build_grid(2, 1.0, 1.0, 1.0).unwrap();
        net.set_active_lines(&[0]).unwrap();
        net
    }

    #[test]
    fn four_leaf_instance_picks_two_pods() {
        let net = one_line();
        let params = ModelParams {
            periods: 1,
            dispatches_per_period: 1,
            capacity_per_pod: 25,
            h_min: 5.0,
            h_max: 10.0,
            l_min: 1,
            l_max: 2,
            ..ModelParams::paper_defaults()
        };
        let sets = build_discretization(&params, 5.0).unwrap();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 0, period: 0, origin: 0, destination: 1 }, 30);
        let sol = branch_and_bound(&net, &demand, &params, &sets, &SolverOptions::default()).unwrap();
        let slot = crate::formulation::SlotKey { period: 0, line: 0, dir: crate::network::Direction::Forward, k: 0 };
        assert_eq!(sol.schedule.train_len[&slot], 2);
        assert_eq!(sol.optimality, Optimality::Exact);
        let oracle = enumerate_exhaustive(&net, &demand, &params, &sets, AssignmentPolicy::Auto).unwrap();
        assert_eq!(sol.objective, oracle.objective);
    }

    #[test]
    fn zero_demand_uses_minimal_fleet() {
        let net = one_line();
        let params = ModelParams { periods: 1, dispatches_per_period: 2, ..ModelParams::paper_defaults() };
        let sets = build_discretization(&params, 5.0).unwrap();
        let demand = DemandInstance { periods: 1, ..Default::default() };
        let sol = branch_and_bound(&net, &demand, &params, &sets, &SolverOptions::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.schedule.train_len.values().all(|&l| l == 1));
        assert!(sol.flow.headways.values().all(|&h| h == 15.0));
    }

    #[test]
    fn infeasible_fleet_names_the_constraint() {
        let net = one_line();
        let params =
            ModelParams { periods: 1, fleet_size: 1, dispatches_per_period: 2, ..ModelParams::paper_defaults() };
        let sets = build_discretization(&params, 5.0).unwrap();
        let demand = DemandInstance { periods: 1, ..Default::default() };
        match branch_and_bound(&net, &demand, &params, &sets, &SolverOptions::default()) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("fleet"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_budget_is_heuristic() {
        let net = one_line();
        let params = ModelParams { periods: 1, dispatches_per_period: 1, ..ModelParams::paper_defaults() };
        let sets = build_discretization(&params, 5.0).unwrap();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 0, period: 0, origin: 1, destination: 0 }, 12);
        let options = SolverOptions { node_limit: Some(0), ..Default::default() };
        let sol = branch_and_bound(&net, &demand, &params, &sets, &options).unwrap();
        assert_eq!(sol.optimality, Optimality::Heuristic);
    }

    #[test]
    fn oracle_guard() {
        let net = build_grid(4, 1.0, 1.0, 1.0).unwrap();
        let params = ModelParams::paper_defaults();
        let sets = build_discretization(&params, 1.0).unwrap();
        let demand = DemandInstance { periods: 4, ..Default::default() };
        assert!(matches!(
            enumerate_exhaustive(&net, &demand, &params, &sets, AssignmentPolicy::Auto),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn single_leaf_oracle() {
        let net = one_line();
        let params = ModelParams {
            periods: 1,
            dispatches_per_period: 1,
            h_min: 10.0,
            h_max: 10.0,
            l_min: 1,
            l_max: 1,
            ..ModelParams::paper_defaults()
        };
        let sets = build_discretization(&params, 1.0).unwrap();
        let mut demand = DemandInstance { periods: 1, ..Default::default() };
        demand.line_od.insert(LineOdKey { line: 0, period: 0, origin: 0, destination: 1 }, 3);
        let sol = enumerate_exhaustive(&net, &demand, &params, &sets, AssignmentPolicy::Auto).unwrap();
        // three passengers boarding the only dispatch, both terms at BigM
        assert_eq!(sol.objective, 3.0 * params.big_m());
    }
}
