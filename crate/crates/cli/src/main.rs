use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use podtransit::error::Error;
use podtransit::harness::{self, Profile, Scenario, SweepParam, SweepPoint};
use podtransit::solver::Optimality;

#[derive(Parser)]
#[command(name = "podtransit", version, about = "Headway and train-length planning for modular pod lines")]
struct Cli {
    /// JSON file merged over the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the line-level demand CSV.
    Generate,
    /// Solve one scenario and write demand, solution and metrics.
    Solve,
    /// Write the linearized model as an LP file.
    Export,
    /// Re-solve the scenario across parameter values.
    Sweep {
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated; headway bounds as `lo:hi`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Summarize the metrics CSVs in a run directory.
    Report { dir: PathBuf },
    /// Compare the search against exhaustive enumeration.
    Oracle,
}

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_HEURISTIC: u8 = 3;
const EXIT_OTHER: u8 = 4;

fn exit_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) => EXIT_INFEASIBLE,
        Some(Error::InvalidConfig(_) | Error::SearchSpaceTooLarge { .. } | Error::ExactAssignmentTooLarge { .. }) => {
            EXIT_CONFIG
        }
        _ => EXIT_OTHER,
    }
}

fn scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    let profile: Profile = cli.profile.parse()?;
    let mut s = Scenario::load(profile, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        s.demand.seed = seed;
    }
    if let Some(out) = &cli.out {
        s.output_dir = out.clone();
    }
    Ok(s)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Command::Report { dir } = &cli.command {
        print!("{}", harness::report(dir)?.text);
        return Ok(0);
    }
    let s = scenario(cli)?;
    match &cli.command {
        Command::Generate => {
            let network = s.network()?;
            let demand = s.generate_demand(&network)?;
            let path = s.output_dir.join("demand.csv");
            harness::write_demand_csv(&demand, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Solve => {
            let run = harness::run_scenario(&s)?;
            harness::write_run(&s, &run)?;
            let m = &run.metrics;
            println!(
                "{}: objective {:.3}, avg headway {:.3}, pods {}, load factor {:.3}",
                run.solution.optimality.label(),
                m.objective,
                m.avg_headway,
                m.total_pods_dispatched,
                m.avg_load_factor
            );
            if let Optimality::Bounded { gap } = run.solution.optimality {
                println!("gap {gap:.4}");
            }
            println!("wrote {}", s.output_dir.display());
            if run.solution.optimality == Optimality::Heuristic {
                return Ok(EXIT_HEURISTIC);
            }
        }
        Command::Export => {
            let model = harness::export_model(&s)?;
            let st = model.stats();
            println!(
                "{} variables ({} binary), {} constraints, {} nonzeros",
                st.variables, st.binaries, st.constraints, st.nonzeros
            );
            println!("wrote {}", s.output_dir.join("model.lp").display());
        }
        Command::Sweep { param, values } => {
            let (param, values): (SweepParam, Vec<String>) = match (param, &s.sweep) {
                (Some(p), _) => (p.parse()?, values.clone()),
                (None, Some(spec)) => {
                    let labels = spec
                        .values
                        .iter()
                        .map(|v| SweepPoint::from_value(spec.param, v).map(|p| p.label()))
                        .collect::<Result<_, _>>()?;
                    (spec.param, labels)
                }
                (None, None) => return Err(Error::InvalidConfig("sweep needs --param or a sweep block".into()).into()),
            };
            if values.is_empty() {
                return Err(Error::InvalidConfig("sweep needs at least one value".into()).into());
            }
            let table = harness::sweep(&s, param, &values)?;
            harness::write_sweep(&table, &s.output_dir)?;
            for r in &table.rows {
                let h = r.avg_headway.map(|h| format!("{h:.3}")).unwrap_or_else(|| "-".into());
                println!("{}={} {} avg_headway {}", param.name(), r.value, r.status, h);
            }
        }
        Command::Oracle => {
            let rep = harness::oracle_check(&s)?;
            println!("search     {:.6}", rep.search.objective);
            println!("exhaustive {:.6}", rep.exhaustive.objective);
            if !rep.matches() {
                eprintln!("mismatch");
                return Ok(EXIT_OTHER);
            }
            println!("match");
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_for(&e))
        }
    }
}
