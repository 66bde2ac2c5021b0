//! Per-corridor search: every `(headway, length)` sequence of one corridor,
//! reduced to the Pareto set of (fleet usage, waiting cost).

use std::time::Instant;

use super::assign::{evaluate_corridor, max_packing, stage_costs, AssignmentPolicy, Corridor};
use crate::error::Result;
use crate::formulation::{ModelParams, FEASIBILITY_TOL};
use crate::linearization::DiscretizationSets;

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub weight: f64,
    pub cost: f64,
    /// Indices into the headway set, one per dispatch.
    pub headways: Vec<usize>,
    /// Indices into the length set, one per dispatch.
    pub lengths: Vec<usize>,
}

/// Which sequences are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrontierMode {
    Full,
    /// One headway for all dispatches, lengths free.
    UniformHeadway,
    /// One `(headway, length)` pair for all dispatches.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frontier {
    /// Weight ascending, cost strictly descending.
    pub points: Vec<FrontierPoint>,
    pub mode: FrontierMode,
    /// False if the search was restricted or cut short.
    pub complete: bool,
    pub nodes: u64,
    /// Lower bound on the cost of any sequence, restricted or not.
    pub root_bound: f64,
}

impl Frontier {
    pub fn min_weight(&self) -> Option<f64> {
        self.points.first().map(|p| p.weight)
    }

    /// Index of the cheapest point with weight within `budget`.
    pub fn best_within(&self, budget: f64) -> Option<usize> {
        let n = self.points.partition_point(|p| p.weight <= budget + FEASIBILITY_TOL);
        n.checked_sub(1)
    }

    /// Cheapest cost among points of weight at most `weight`, exactly.
    fn best_cost_at_or_below(&self, weight: f64) -> Option<f64> {
        let n = self.points.partition_point(|p| p.weight <= weight);
        n.checked_sub(1).map(|i| self.points[i].cost)
    }

    fn insert(&mut self, point: FrontierPoint) {
        let mut idx = self.points.partition_point(|p| p.weight <= point.weight);
        if idx > 0 && self.points[idx - 1].cost <= point.cost {
            return;
        }
        while idx > 0 && self.points[idx - 1].weight == point.weight {
            self.points.remove(idx - 1);
            idx -= 1;
        }
        let end = idx + self.points[idx..].iter().take_while(|p| p.cost >= point.cost).count();
        self.points.splice(idx..end, std::iter::once(point));
    }
}

pub fn choose_mode(sets: &DiscretizationSets, k_count: usize, max_leaves: u64) -> FrontierMode {
    let nh = sets.headway_values.len() as f64;
    let nl = sets.length_values.len() as f64;
    if (nh * nl).powi(k_count as i32) <= max_leaves as f64 {
        FrontierMode::Full
    } else if nh * nl.powi(k_count as i32) <= max_leaves as f64 {
        FrontierMode::UniformHeadway
    } else {
        FrontierMode::Uniform
    }
}

pub struct FrontierInput<'a> {
    pub corridor: &'a Corridor,
    pub sets: &'a DiscretizationSets,
    pub params: &'a ModelParams,
    pub policy: AssignmentPolicy,
    /// Fleet usage this corridor may take without starving the others.
    pub reserve: f64,
    pub mode: FrontierMode,
    pub deadline: Option<Instant>,
}

struct Dfs<'a> {
    input: &'a FrontierInput<'a>,
    /// Most passengers one dispatch can carry, per length index.
    pack: Vec<u64>,
    /// Headway candidates, longest first; lengths shortest first.
    h_order: Vec<usize>,
    l_order: Vec<usize>,
    min_slot_weight: f64,
    frontier: Frontier,
    hs: Vec<usize>,
    ls: Vec<usize>,
    aborted: bool,
}

impl Dfs<'_> {
    fn k_count(&self) -> usize {
        self.input.params.dispatches_per_period
    }

    fn slot_weight(&self, hi: usize, li: usize) -> f64 {
        let s = self.input.sets;
        self.input.corridor.round_trip_time / s.headway_values[hi] * s.length_values[li] as f64
    }

    /// Lower bound on waiting cost over completions of the fixed prefix.
    fn bound(&self) -> f64 {
        let s = self.input.sets;
        let k_count = self.k_count();
        let h_min = s.headway_values[0];
        let l_top = s.length_values.len() - 1;
        let headways: Vec<f64> = (0..k_count).map(|k| self.hs.get(k).map_or(h_min, |&i| s.headway_values[i])).collect();
        let costs = stage_costs(&headways, self.input.params);
        let mut remaining = self.input.corridor.demand as f64;
        let mut total = costs[0] * remaining;
        for k in 0..k_count {
            let li = self.ls.get(k).copied().unwrap_or(l_top);
            remaining = (remaining - self.pack[li] as f64).max(0.0);
            total += costs[k + 1] * remaining;
        }
        total
    }

    fn run(&mut self) -> Result<()> {
        let depth = self.hs.len();
        let k_count = self.k_count();
        self.frontier.nodes += 1;
        if self.frontier.nodes.is_multiple_of(4096) && !self.frontier.points.is_empty() {
            if let Some(d) = self.input.deadline {
                if Instant::now() >= d {
                    self.aborted = true;
                }
            }
        }
        if self.aborted {
            return Ok(());
        }
        let s = self.input.sets;
        let weight: f64 = self.hs.iter().zip(&self.ls).map(|(&h, &l)| self.slot_weight(h, l)).sum();
        let used: f64 = self.hs.iter().map(|&i| s.headway_values[i]).sum();
        if depth == k_count {
            if weight > self.input.reserve + FEASIBILITY_TOL || used > self.input.params.window() + FEASIBILITY_TOL {
                return Ok(());
            }
            let headways: Vec<f64> = self.hs.iter().map(|&i| s.headway_values[i]).collect();
            let lengths: Vec<u32> = self.ls.iter().map(|&i| s.length_values[i]).collect();
            let (cost, _) =
                evaluate_corridor(self.input.corridor, &headways, &lengths, self.input.params, self.input.policy)?;
            self.frontier.insert(FrontierPoint { weight, cost, headways: self.hs.clone(), lengths: self.ls.clone() });
            return Ok(());
        }
        let open = (k_count - depth) as f64;
        if used + open * s.headway_values[0] > self.input.params.window() + FEASIBILITY_TOL {
            return Ok(());
        }
        let min_weight = weight + open * self.min_slot_weight;
        if min_weight > self.input.reserve + FEASIBILITY_TOL {
            return Ok(());
        }
        if depth > 0 {
            if let Some(best) = self.frontier.best_cost_at_or_below(min_weight) {
                if best <= self.bound() {
                    return Ok(());
                }
            }
        }
        let h_opts: Vec<usize> = match (self.input.mode, depth) {
            (FrontierMode::Full, _) | (_, 0) => self.h_order.clone(),
            _ => vec![self.hs[0]],
        };
        let l_opts: Vec<usize> = match (self.input.mode, depth) {
            (FrontierMode::Uniform, d) if d > 0 => vec![self.ls[0]],
            _ => self.l_order.clone(),
        };
        for &hi in &h_opts {
            for &li in &l_opts {
                self.hs.push(hi);
                self.ls.push(li);
                let r = self.run();
                self.hs.pop();
                self.ls.pop();
                r?;
                if self.aborted {
                    return Ok(());
                }
            }
        }
        Ok(())
    }
}

/// Pareto set of one corridor's sequences within `reserve` fleet usage.
pub fn build_frontier(input: &FrontierInput<'_>) -> Result<Frontier> {
    let sets = input.sets;
    let params = input.params;
    let corr = input.corridor;
    let counts: Vec<u32> = corr.pairs.iter().map(|p| p.count).collect();
    let pack = sets.length_values.iter().map(|&l| max_packing(corr, &counts, l * params.capacity_per_pod)).collect();
    let h_max = *sets.headway_values.last().unwrap();
    let mut dfs = Dfs {
        input,
        pack,
        h_order: (0..sets.headway_values.len()).rev().collect(),
        l_order: (0..sets.length_values.len()).collect(),
        min_slot_weight: corr.round_trip_time / h_max * sets.length_values[0] as f64,
        frontier: Frontier {
            points: Vec::new(),
            mode: input.mode,
            complete: input.mode == FrontierMode::Full,
            nodes: 0,
            root_bound: 0.0,
        },
        hs: Vec::new(),
        ls: Vec::new(),
        aborted: false,
    };
    dfs.frontier.root_bound = dfs.bound();
    dfs.run()?;
    if dfs.aborted {
        dfs.frontier.complete = false;
    }
    Ok(dfs.frontier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::LineOdKey;
    use crate::linearization::build_discretization;
    use crate::network::Direction;
    use crate::solver::assign::CorridorPair;

    fn corridor(pairs: &[(usize, usize, u32)]) -> Corridor {
        let ps: Vec<CorridorPair> = pairs
            .iter()
            .map(|&(i, j, c)| CorridorPair {
                key: LineOdKey { line: 0, period: 0, origin: i, destination: j },
                from: i,
                to: j,
                count: c,
            })
            .collect();
        Corridor {
            period: 0,
            line: 0,
            dir: Direction::Forward,
            round_trip_time: 20.0,
            n_stops: 4,
            demand: ps.iter().map(|p| p.count as u64).sum(),
            pairs: ps,
        }
    }

    fn brute(input: &FrontierInput<'_>) -> Vec<(f64, f64)> {
        let s = input.sets;
        let k = input.params.dispatches_per_period;
        let choices = s.headway_values.len() * s.length_values.len();
        let mut all = Vec::new();
        for code in 0..choices.pow(k as u32) {
            let mut c = code;
            let (mut hs, mut ls) = (vec![], vec![]);
            for _ in 0..k {
                hs.push(s.headway_values[c % choices / s.length_values.len()]);
                ls.push(s.length_values[c % s.length_values.len()]);
                c /= choices;
            }
            if hs.iter().sum::<f64>() > input.params.window() {
                continue;
            }
            let w: f64 = hs.iter().zip(&ls).map(|(h, &l)| 20.0 / h * l as f64).sum();
            if w > input.reserve + FEASIBILITY_TOL {
                continue;
            }
            let (cost, _) = evaluate_corridor(input.corridor, &hs, &ls, input.params, input.policy).unwrap();
            all.push((w, cost));
        }
        all
    }

    #[test]
    fn points_respect_the_window() {
        let params = ModelParams {
            periods: 1,
            dispatches_per_period: 2,
            h_min: 3.0,
            h_max: 6.0,
            t_start: 3.0,
            t_end: 14.0,
            ..ModelParams::paper_defaults()
        };
        let sets = build_discretization(&params, 2.0).unwrap();
        let corr = corridor(&[]);
        let input = FrontierInput {
            corridor: &corr,
            sets: &sets,
            params: &params,
            policy: AssignmentPolicy::Auto,
            reserve: 100.0,
            mode: FrontierMode::Full,
            deadline: None,
        };
        let f = build_frontier(&input).unwrap();
        for p in &f.points {
            let total: f64 = p.headways.iter().map(|&i| sets.headway_values[i]).sum();
            assert!(total <= params.window(), "{:?} overruns", p.headways);
        }
        // (6, 5) is the lightest sequence that fits 11 minutes
        assert_eq!(f.points[0].headways, vec![2, 1]);
    }

    #[test]
    fn frontier_dominates_every_sequence() {
        let params = ModelParams {
            periods: 1,
            dispatches_per_period: 2,
            capacity_per_pod: 3,
            t_end: 25.0,
            ..ModelParams::paper_defaults()
        };
        let sets = build_discretization(&ModelParams { l_max: 3, ..params.clone() }, 5.0).unwrap();
        for pairs in [vec![], vec![(0, 3, 4), (1, 2, 5)], vec![(0, 1, 9), (2, 3, 1), (0, 2, 3)]] {
            let corr = corridor(&pairs);
            for reserve in [8.0, 20.0, 100.0] {
                let input = FrontierInput {
                    corridor: &corr,
                    sets: &sets,
                    params: &params,
                    policy: AssignmentPolicy::Auto,
                    reserve,
                    mode: FrontierMode::Full,
                    deadline: None,
                };
                let f = build_frontier(&input).unwrap();
                assert!(f.complete);
                for w in f.points.windows(2) {
                    assert!(w[0].weight < w[1].weight && w[0].cost > w[1].cost);
                }
                let all = brute(&input);
                assert_eq!(all.is_empty(), f.points.is_empty());
                for (w, c) in all {
                    assert!(f.points.iter().any(|p| p.weight <= w && p.cost <= c), "({w}, {c}) undominated");
                    assert!(f.root_bound <= c);
                }
            }
        }
    }

    #[test]
    fn mode_selection() {
        let params = ModelParams::paper_defaults();
        let sets = build_discretization(&params, 1.0).unwrap();
        assert_eq!(choose_mode(&sets, 1, 1000), FrontierMode::Full);
        assert_eq!(choose_mode(&sets, 5, 200_000), FrontierMode::UniformHeadway);
        assert_eq!(choose_mode(&sets, 5, 100), FrontierMode::Uniform);
    }
}
