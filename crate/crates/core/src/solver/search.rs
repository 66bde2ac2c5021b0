//! Per-period branch and bound over corridor frontier points.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::frontier::Frontier;
use crate::formulation::{SlotKey, FEASIBILITY_TOL};

/// A partial selection: the first `depth` slots (in `(t, l, d, k)` order) of
/// one period are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub period: usize,
    /// `(slot, headway index, length index)`.
    pub partial_selection: Vec<(SlotKey, usize, usize)>,
    pub lower_bound: f64,
    pub depth: usize,
}

pub(crate) struct PeriodSearch<'a> {
    pub period: usize,
    pub frontiers: Vec<&'a Frontier>,
    /// Slot keys of each corridor, for recording nodes.
    pub slots: Vec<Vec<SlotKey>>,
    pub fleet: f64,
    pub node_limit: Option<u64>,
    pub deadline: Option<Instant>,
    pub record_pruned: bool,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct PeriodOutcome {
    pub choice: Vec<usize>,
    pub cost: f64,
    pub nodes: u64,
    pub exhausted: bool,
    pub root_bound: f64,
    pub incumbents: Vec<f64>,
    pub pruned: Vec<SearchNode>,
}

const MAX_RECORDED: usize = 20_000;

/// LP relaxation of choosing one point per corridor under a shared budget:
/// start every corridor at its lightest point, then buy steps along each
/// lower convex hull in order of cost saved per unit weight.
#[derive(Clone, Debug, Default)]
struct RelaxedTail {
    base_cost: f64,
    /// Cumulative (weight, saving) after each step, best rate first.
    steps: Vec<(f64, f64)>,
}

impl RelaxedTail {
    fn new(frontiers: &[&Frontier]) -> Self {
        let mut base_cost = 0.0;
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for f in frontiers {
            let Some(first) = f.points.first() else { continue };
            base_cost += first.cost;
            let mut hull: Vec<(f64, f64)> = Vec::new();
            for p in &f.points {
                while hull.len() >= 2 {
                    let (w1, c1) = hull[hull.len() - 2];
                    let (w2, c2) = hull[hull.len() - 1];
                    // drop the middle point when it lies on or above the chord
                    if (c2 - c1) * (p.weight - w1) >= (p.cost - c1) * (w2 - w1) {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push((p.weight, p.cost));
            }
            raw.extend(hull.windows(2).map(|w| (w[1].0 - w[0].0, w[0].1 - w[1].1)));
        }
        raw.sort_by(|a, b| (b.1 * a.0).total_cmp(&(a.1 * b.0)));
        let mut steps = Vec::with_capacity(raw.len());
        let (mut w, mut c) = (0.0, 0.0);
        for (dw, dc) in raw {
            w += dw;
            c += dc;
            steps.push((w, c));
        }
        RelaxedTail { base_cost, steps }
    }

    fn bound(&self, slack: f64) -> f64 {
        let budget = slack + FEASIBILITY_TOL;
        let n = self.steps.partition_point(|s| s.0 <= budget);
        let (w, c) = if n == 0 { (0.0, 0.0) } else { self.steps[n - 1] };
        let partial = match self.steps.get(n) {
            Some(&(nw, nc)) if budget > w => (nc - c) * (budget - w) / (nw - w),
            _ => 0.0,
        };
        self.base_cost - c - partial
    }
}

struct State<'s, 'a> {
    search: &'s PeriodSearch<'a>,
    /// suffix_min[i] = Σ_{j >= i} min weight of corridor j.
    suffix_min: Vec<f64>,
    /// Relaxed multiple-choice knapsack over corridors `i..`.
    relaxed: Vec<RelaxedTail>,
    path: Vec<usize>,
    best: Option<(f64, f64, Vec<usize>)>,
    out: PeriodOutcome,
    stopped: bool,
}

impl State<'_, '_> {
    /// Optimistic cost of corridors `from..` with `slack` fleet left after
    /// each keeps its own minimum.
    fn tail_bound(&self, from: usize, slack: f64) -> Option<f64> {
        let pointwise = self.pointwise_bound(from, slack)?;
        Some(pointwise.max(self.relaxed[from].bound(slack)))
    }

    fn pointwise_bound(&self, from: usize, slack: f64) -> Option<f64> {
        let mut total = 0.0;
        for j in from..self.search.frontiers.len() {
            let f = self.search.frontiers[j];
            let budget = slack + f.min_weight()?;
            let idx = f.best_within(budget)?;
            total += f.points[idx].cost;
        }
        Some(total)
    }

    fn record(&mut self, candidate: usize, bound: f64) {
        if !self.search.record_pruned || self.out.pruned.len() >= MAX_RECORDED {
            return;
        }
        let mut partial = Vec::new();
        for (i, &p) in self.path.iter().chain(std::iter::once(&candidate)).enumerate() {
            let point = &self.search.frontiers[i].points[p];
            for (k, slot) in self.search.slots[i].iter().enumerate() {
                partial.push((*slot, point.headways[k], point.lengths[k]));
            }
        }
        self.out.pruned.push(SearchNode {
            period: self.search.period,
            depth: partial.len(),
            partial_selection: partial,
            lower_bound: bound,
        });
    }

    fn improve(&mut self, cost: f64, weight: f64) {
        let better = match &self.best {
            None => true,
            Some((c, w, _)) => cost < *c || (cost == *c && weight < *w),
        };
        if better {
            self.best = Some((cost, weight, self.path.clone()));
            self.out.incumbents.push(cost);
        }
    }

    fn dfs(&mut self, depth: usize, cost: f64, weight: f64) {
        let search = self.search;
        let frontiers = &search.frontiers;
        if depth == frontiers.len() {
            self.improve(cost, weight);
            return;
        }
        let budget = self.search.fleet - weight - self.suffix_min[depth + 1];
        let Some(top) = frontiers[depth].best_within(budget) else {
            return;
        };
        // cheapest first
        for p in (0..=top).rev() {
            if self.stopped {
                return;
            }
            self.out.nodes += 1;
            if let Some(limit) = self.search.node_limit {
                if self.out.nodes >= limit {
                    self.stopped = true;
                }
            }
            if self.out.nodes.is_multiple_of(1024) {
                if let Some(d) = self.search.deadline {
                    if Instant::now() >= d {
                        self.stopped = true;
                    }
                }
            }
            let point = &frontiers[depth].points[p];
            let w = weight + point.weight;
            let c = cost + point.cost;
            let slack = self.search.fleet - w - self.suffix_min[depth + 1];
            let bound = match self.tail_bound(depth + 1, slack) {
                Some(t) => c + t,
                None => continue,
            };
            if let Some((inc, _, _)) = &self.best {
                if bound >= *inc {
                    self.record(p, bound);
                    continue;
                }
            }
            self.path.push(p);
            self.dfs(depth + 1, c, w);
            self.path.pop();
        }
    }

    /// Cheapest point per corridor that leaves room for the rest.
    fn dive(&mut self) {
        let mut weight = 0.0;
        let mut cost = 0.0;
        for depth in 0..self.search.frontiers.len() {
            let budget = self.search.fleet - weight - self.suffix_min[depth + 1];
            let Some(p) = self.search.frontiers[depth].best_within(budget) else {
                self.path.clear();
                return;
            };
            let point = &self.search.frontiers[depth].points[p];
            weight += point.weight;
            cost += point.cost;
            self.path.push(p);
        }
        self.improve(cost, weight);
        self.path.clear();
    }
}

impl PeriodSearch<'_> {
    /// `None` when no combination fits the fleet.
    pub fn run(&self) -> Option<PeriodOutcome> {
        let n = self.frontiers.len();
        let mut suffix_min = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix_min[i] = suffix_min[i + 1] + self.frontiers[i].min_weight()?;
        }
        if suffix_min[0] > self.fleet + FEASIBILITY_TOL {
            return None;
        }
        let relaxed = (0..=n).map(|i| RelaxedTail::new(&self.frontiers[i..])).collect();
        let mut state = State {
            search: self,
            suffix_min,
            relaxed,
            path: Vec::new(),
            best: None,
            out: PeriodOutcome::default(),
            stopped: false,
        };
        let root_slack = self.fleet - state.suffix_min[0];
        state.out.root_bound = state.tail_bound(0, root_slack)?;
        state.dive();
        if self.node_limit == Some(0) {
            state.stopped = true;
        } else {
            state.dfs(0, 0.0, 0.0);
        }
        let (cost, _, choice) = state.best.take()?;
        let mut out = state.out;
        out.exhausted = !state.stopped;
        out.cost = cost;
        out.choice = choice;
        Some(out)
    }
}
