use serde::{Deserialize, Serialize};

use crate::formulation::ModelParams;
use crate::network::GridNetwork;
use crate::solver::Solution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean over every dispatch slot, first-dispatch convention included.
    pub avg_headway: f64,
    pub total_pods_dispatched: u64,
    /// Passenger-segments carried over pod-seat-segments offered.
    pub avg_load_factor: f64,
    /// `round(100 * avg_load_factor)`.
    pub seat_utilization_index: i64,
    pub objective: f64,
    /// Passengers still waiting after the last dispatch of a period.
    pub unserved_after_last: f64,
}

pub fn compute_metrics(solution: &Solution, network: &GridNetwork, params: &ModelParams) -> Metrics {
    let headways = &solution.flow.headways;
    let avg_headway = if headways.is_empty() { 0.0 } else { headways.values().sum::<f64>() / headways.len() as f64 };
    let total_pods_dispatched = solution.schedule.train_len.values().map(|&l| l as u64).sum();
    let segments = network.n_stops_per_line.saturating_sub(1) as f64;
    let offered: f64 =
        solution.schedule.train_len.values().map(|&l| segments * params.capacity_per_pod as f64 * l as f64).sum();
    // onboard at the terminal node is zero, so this sums over segments
    let carried: f64 = solution.flow.onboard.values().sum();
    let avg_load_factor = if offered > 0.0 { carried / offered } else { 0.0 };
    let last = params.dispatches_per_period.saturating_sub(1);
    let unserved_after_last = solution.flow.waiting.iter().filter(|(k, _)| k.k == last).map(|(_, &w)| w).sum();
    Metrics {
        avg_headway,
        total_pods_dispatched,
        avg_load_factor,
        seat_utilization_index: (100.0 * avg_load_factor).round() as i64,
        objective: solution.objective,
        unserved_after_last,
    }
}
