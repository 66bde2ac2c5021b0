use podtransit::harness::{self, compute_metrics, read_solution_json, Profile, Scenario, SweepParam, METRICS_HEADER};
use podtransit::network::GridNetwork;

fn desk_in(dir: &std::path::Path) -> Scenario {
    let mut s = Scenario::profile(Profile::Desk);
    s.output_dir = dir.to_path_buf();
    s
}

#[test]
fn stored_metrics_are_reproduced_from_the_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = desk_in(dir.path());
    let run = harness::run_scenario(&s).unwrap();
    harness::write_run(&s, &run).unwrap();

    let record = read_solution_json(&dir.path().join("solution.json")).unwrap();
    let net = GridNetwork::from_config(&record.network).unwrap();
    let again = compute_metrics(&record.to_solution(), &net, &record.params);
    assert_eq!(again, record.metrics);

    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), METRICS_HEADER.join(","));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), again.objective);
    assert_eq!(row[4].parse::<f64>().unwrap(), again.avg_headway);
    assert_eq!(row[5].parse::<u64>().unwrap(), again.total_pods_dispatched);
    assert_eq!(row[6].parse::<f64>().unwrap(), again.avg_load_factor);
    assert_eq!(row[7].parse::<i64>().unwrap(), again.seat_utilization_index);
}

#[test]
fn single_run_report_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let s = desk_in(dir.path());
    let run = harness::run_scenario(&s).unwrap();
    harness::write_run(&s, &run).unwrap();
    let rep = harness::report(dir.path()).unwrap();
    let lines: Vec<&str> = rep.text.lines().collect();
    assert_eq!(lines.len(), 4, "{}", rep.text);
    for col in ["Scenario", "Average Headway (min)", "Total Pods Dispatched", "Average Load Factor"] {
        assert!(lines[1].contains(col));
    }
    assert!(lines[3].trim_start().starts_with("desk"));
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.txt")).unwrap(), rep.text);
}

#[test]
fn sweeps_from_a_config_file_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("scenario.json");
    std::fs::write(&config, r#"{"demand": {"seed": 7}, "params": {"F": 120}}"#).unwrap();
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let mut s = Scenario::load(Profile::Desk, Some(&config)).unwrap();
        assert_eq!(s.demand.seed, 7);
        s.output_dir = root.path().join(name);
        let values: Vec<String> = ["2", "3", "5"].map(String::from).to_vec();
        let table = harness::sweep(&s, SweepParam::LMax, &values).unwrap();
        harness::write_sweep(&table, &s.output_dir).unwrap();
        outputs.push((
            std::fs::read(s.output_dir.join("sweep_l_max.csv")).unwrap(),
            std::fs::read(s.output_dir.join("sweep_l_max_headway.dat")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn longer_trains_never_hurt_on_the_desk_profile() {
    let s = Scenario::profile(Profile::Desk);
    let values: Vec<String> = ["1", "2", "5"].map(String::from).to_vec();
    let table = harness::sweep(&s, SweepParam::LMax, &values).unwrap();
    let objectives: Vec<f64> = table.rows.iter().map(|r| r.objective.unwrap()).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0]), "{objectives:?}");
}
