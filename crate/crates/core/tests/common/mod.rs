#![allow(dead_code)]

use podtransit::demand::{generate, DemandInstance, LineOdKey, PoissonDemandSpec, TransferPolicy};
use podtransit::formulation::ModelParams;
use podtransit::linearization::{build_discretization, DiscretizationSets};
use podtransit::network::{build_grid, GridNetwork};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Instance {
    pub network: GridNetwork,
    pub demand: DemandInstance,
    pub params: ModelParams,
    pub sets: DiscretizationSets,
}

fn pick_lines(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..2 * n).collect();
    all.shuffle(rng);
    let mut ids: Vec<usize> = all.into_iter().take(rng.gen_range(1..=max)).collect();
    ids.sort_unstable();
    ids
}

/// At most two lines of at most four stops, one period, `K <= 2`,
/// `|H| <= 3`, `|L| <= 2` and at most 30 passengers in total.
pub fn tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let mut network = build_grid(n, 1.0, 1.0, rng.gen_range(1..=3) as f64 * 0.5).unwrap();
    let lines = pick_lines(&mut rng, n, 2);
    network.set_active_lines(&lines).unwrap();

    let k = rng.gen_range(1..=2);
    let h_min = rng.gen_range(2..=6) as f64;
    let step = rng.gen_range(1..=3) as f64;
    let h_max = h_min + step * rng.gen_range(0..=2) as f64;
    let l_min = rng.gen_range(1..=2);
    let params = ModelParams {
        capacity_per_pod: rng.gen_range(1..=6),
        fleet_size: rng.gen_range(8..=160),
        h_min,
        h_max,
        dispatches_per_period: k,
        periods: 1,
        t_start: 0.0,
        t_end: k as f64 * h_min + rng.gen_range(0..=(k as u32 * (h_max - h_min) as u32 + 2)) as f64,
        l_min,
        l_max: l_min + rng.gen_range(0..=1),
        big_m: None,
        bigm_on_seated: rng.gen_bool(0.7),
        integral_flows: true,
    };
    let sets = build_discretization(&params, step).unwrap();

    let mut demand = DemandInstance { periods: 1, ..Default::default() };
    let mut budget: u32 = rng.gen_range(0..=30);
    for _ in 0..rng.gen_range(0..=6) {
        if budget == 0 {
            break;
        }
        let line = *lines.choose(&mut rng).unwrap();
        let i = rng.gen_range(0..n);
        let j = (i + rng.gen_range(1..n)) % n;
        let c = rng.gen_range(1..=budget);
        budget -= c;
        *demand.line_od.entry(LineOdKey { line, period: 0, origin: i, destination: j }).or_insert(0) += c;
    }
    Instance { network, demand, params, sets }
}

/// Larger random instances with generated demand; some are infeasible.
pub fn fuzz_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let n = rng.gen_range(2..=5);
    let mut network = build_grid(n, rng.gen_range(1..=3) as f64, 1.0, rng.gen_range(1..=3) as f64 * 0.5).unwrap();
    let lines = pick_lines(&mut rng, n, 3);
    network.set_active_lines(&lines).unwrap();

    let periods = rng.gen_range(1..=2);
    let k = rng.gen_range(1..=3);
    let h_min = rng.gen_range(2..=6) as f64;
    let step = rng.gen_range(1..=3) as f64;
    let h_max = h_min + rng.gen_range(0..=8) as f64;
    let l_min = rng.gen_range(1..=2);
    let params = ModelParams {
        capacity_per_pod: rng.gen_range(1..=10),
        fleet_size: rng.gen_range(1..=150),
        h_min,
        h_max,
        dispatches_per_period: k,
        periods,
        t_start: rng.gen_range(0..=10) as f64,
        t_end: 0.0,
        l_min,
        l_max: l_min + rng.gen_range(0..=2),
        big_m: None,
        bigm_on_seated: rng.gen_bool(0.7),
        integral_flows: true,
    };
    let window = k as f64 * h_min + rng.gen_range(0..=(k as u32 * (h_max - h_min) as u32 + 3)) as f64;
    let params = ModelParams { t_end: params.t_start + window, ..params };
    let sets = build_discretization(&params, step).unwrap();

    let rate_ranges = (0..periods)
        .map(|_| {
            let lo = rng.gen_range(0.0..3.0);
            (lo, lo + rng.gen_range(0.0..4.0))
        })
        .collect();
    let spec = PoissonDemandSpec {
        rate_ranges,
        peak_flags: (0..periods).map(|_| rng.gen_bool(0.5)).collect(),
        seed: rng.gen(),
    };
    let demand = generate(&network, &spec, TransferPolicy::default()).unwrap();
    Instance { network, demand, params, sets }
}

/// Independent soundness checks on a solved instance. Returns the first
/// problem found.
pub fn verify(inst: &Instance, sol: &podtransit::solver::Solution) -> Result<(), String> {
    use podtransit::formulation::{check_solution, conservation_residuals, onboard_recursion, FlowKey};
    use podtransit::network::Direction;
    use std::collections::BTreeMap;

    let (schedule, flow, p) = (&sol.schedule, &sol.flow, &inst.params);
    let violations = check_solution(schedule, flow, &inst.demand, &inst.network, p);
    if let Some(v) = violations.first() {
        return Err(format!("{} violation(s), first: {v}", violations.len()));
    }
    for ((od, k), r) in conservation_residuals(flow, &inst.demand, p) {
        if r != 0.0 {
            return Err(format!("conservation residual {r} at {od:?} k{k}"));
        }
    }
    for (od, &count) in &inst.demand.line_od {
        let first: f64 = Direction::ALL
            .iter()
            .map(|&d| {
                let key = FlowKey::new(*od, d, 0);
                flow.seated_at(&key) + flow.waiting_at(&key)
            })
            .sum();
        if first != count as f64 {
            return Err(format!("{od:?}: {first} present at the first dispatch, demand {count}"));
        }
    }
    for v in flow.seated.values().chain(flow.waiting.values()) {
        if v.fract() != 0.0 || *v < 0.0 {
            return Err(format!("non-integral or negative flow {v}"));
        }
    }
    let mut recomputed = BTreeMap::new();
    for &l in inst.network.active_lines() {
        for d in Direction::ALL {
            let prof = onboard_recursion(flow, inst.network.line(l), d);
            if !prof.diagnostics.is_empty() {
                return Err(format!("onboard recursion: {}", prof.diagnostics[0]));
            }
            recomputed.extend(prof.onboard);
        }
    }
    for (key, &load) in &flow.onboard {
        if recomputed.get(key).copied().unwrap_or(0.0) != load {
            return Err(format!("{key:?}: stored load {load}, recursion gives {:?}", recomputed.get(key)));
        }
        let len = schedule.train_len.get(&key.slot()).copied().unwrap_or(0);
        if load > (p.capacity_per_pod * len) as f64 {
            return Err(format!("{key:?}: load {load} over capacity {}", p.capacity_per_pod * len));
        }
    }
    let mut usage = vec![0.0; p.periods];
    for (slot, &h) in &flow.headways {
        if h < p.h_min || h > p.h_max || inst.sets.headway_index(h).is_none() {
            return Err(format!("{slot}: headway {h} off grid"));
        }
        usage[slot.period] += inst.network.line(slot.line).round_trip_time / h * schedule.train_len[slot] as f64;
    }
    for (t, u) in usage.iter().enumerate() {
        if *u > p.fleet_size as f64 + 1e-9 {
            return Err(format!("period {t}: fleet usage {u} over {}", p.fleet_size));
        }
    }
    Ok(())
}
