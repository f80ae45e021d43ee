use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rdmm::coordinator::{self, RdmmOptions};
use rdmm::dispatch::{self, Loads, WarmStart};
use rdmm::error::Error;
use rdmm::io::{self, Scenario};
use rdmm::model::{usd_per_j_to_usd_per_mwh, HorizonGrid};
use rdmm::train::{self, PriceFunction, Trajectory, TripDefinition};

#[derive(Parser)]
#[command(
    name = "rdmm",
    about = "Transactive dispatch for electrified railways: ACC energy markets, \
             price-aware train trajectories, and their joint coordination",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Negotiate the multi-period dispatch of every ACC (no trains).
    Dispatch {
        #[command(flatten)]
        common: Common,
        /// Cross-check the negotiated solution against the direct QP
        /// solver and print the largest deviation.
        #[arg(long)]
        oracle: bool,
    },
    /// Plan cost-optimal trajectories against the external market
    /// prices, without renegotiation.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also compute the minimum-energy baseline and the saving.
        #[arg(long)]
        min_work: bool,
        /// Evaluate a recorded `t_s,x_m,v_mps` trace at the same
        /// prices instead of optimizing.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the full market mechanism: trains and ACC negotiations
    /// iterate to a joint equilibrium, then settle.
    Rdmm {
        #[command(flatten)]
        common: Common,
        /// Also compute the minimum-energy baseline at the settlement
        /// prices and the saving.
        #[arg(long)]
        min_work: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for CSV outputs; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trajectory node spacing override, s (0.1 to 60).
    #[arg(long)]
    dt: Option<f64>,
    /// Number of dispatch intervals override (1 to 288).
    #[arg(long)]
    intervals: Option<usize>,
    /// Dispatch interval length override, s.
    #[arg(long)]
    interval_len: Option<f64>,
    /// Negotiation exit tolerance override (scaled).
    #[arg(long)]
    tol_k: Option<f64>,
    /// Forecast-loop exit tolerance override (scaled).
    #[arg(long)]
    tol_j: Option<f64>,
    /// Price relaxation between forecast instances, (0, 1].
    #[arg(long)]
    damping: Option<f64>,
    /// Worker threads; 0 keeps the library default.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Seed override for the trajectory multi-starts.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("RDMM_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dispatch { common, oracle } => run_dispatch(&common, oracle),
        Command::Train {
            common,
            min_work,
            trace,
        } => run_train(&common, min_work, trace.as_deref()),
        Command::Rdmm { common, min_work } => run_full(&common, min_work),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Schema { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::OutOfRange(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Error> {
    rdmm::exec::configure_jobs(common.jobs);
    let mut scenario = io::load_scenario(&common.scenario)?;

    if let Some(dt) = common.dt {
        if !(0.1..=60.0).contains(&dt) {
            return Err(Error::OutOfRange(format!(
                "--dt {dt} outside [0.1, 60] s"
            )));
        }
        scenario.solver.dt = dt;
    }
    if let Some(m) = common.intervals {
        if !(1..=288).contains(&m) {
            return Err(Error::OutOfRange(format!(
                "--intervals {m} outside [1, 288]"
            )));
        }
        resize_intervals(&mut scenario, m, None)?;
    }
    if let Some(len) = common.interval_len {
        if !(len > 0.0) {
            return Err(Error::OutOfRange(format!(
                "--interval-len {len} must be positive"
            )));
        }
        let m = scenario.horizon.num_intervals();
        resize_intervals(&mut scenario, m, Some(len))?;
    }
    if let Some(tol) = common.tol_k {
        scenario.steps.tol_y = tol;
        scenario.steps.tol_lambda = tol;
    }
    if let Some(tol) = common.tol_j {
        scenario.steps.tol_forecast_y = tol;
        scenario.steps.tol_forecast_lambda = tol;
    }
    if let Some(seed) = common.seed {
        scenario.solver.seed = seed;
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Reshapes every per-interval series to `m` intervals (last value
/// held on growth, tail dropped on shrink), optionally with a new
/// interval length.
fn resize_intervals(scenario: &mut Scenario, m: usize, len: Option<f64>) -> Result<(), Error> {
    let len = len.unwrap_or(scenario.horizon.interval_len());
    scenario.horizon = HorizonGrid::new(scenario.horizon.start(), m, len)?;
    let fit = |v: &mut Vec<f64>| {
        let last = *v.last().unwrap();
        v.resize(m, last);
    };
    for acc in &mut scenario.accs {
        fit(&mut acc.network_price);
        for a in &mut acc.agents {
            fit(&mut a.d_e);
            fit(&mut a.d_th);
            fit(&mut a.cost_a);
            fit(&mut a.cost_b);
            fit(&mut a.cost_c);
            fit(&mut a.y_min);
            fit(&mut a.y_max);
        }
        for set in &mut acc.passive.by_instance {
            fit(&mut set.renewable);
            fit(&mut set.electric);
            fit(&mut set.thermal);
        }
    }
    Ok(())
}

fn usd(v: f64) -> String {
    let v = if v.abs() < 5e-3 { 0.0 } else { v };
    format!("{v:.2}")
}

fn phys(v: f64) -> String {
    format!("{v:.5e}")
}

fn run_dispatch(common: &Common, oracle: bool) -> Result<(), Error> {
    let scenario = load(common)?;
    let m = scenario.horizon.num_intervals();
    let mut max_dev = 0.0f64;

    for acc in scenario.accs.iter() {
        let agents: Vec<_> = acc
            .agents
            .iter()
            .map(|a| {
                if a.kind == rdmm::model::AgentKind::NetworkConnection {
                    dispatch::update_network_agent_cost(a, &acc.network_price, scenario.c_min)
                } else {
                    Ok(a.clone())
                }
            })
            .collect::<Result<_, _>>()?;
        let passive = acc.passive.at_instance(1);
        let electric: Vec<f64> = (0..m)
            .map(|k| passive.electric[k] + passive.renewable[k])
            .collect();
        let loads = Loads {
            electric,
            thermal: passive.thermal.clone(),
        };
        let warm = WarmStart::prices(acc.network_price.clone(), vec![0.0; m]);
        let result = dispatch::negotiate(&agents, &loads, &scenario.steps, &warm)?;
        let lambda_mwh: Vec<f64> = result
            .lambda_e
            .iter()
            .map(|&l| usd_per_j_to_usd_per_mwh(l))
            .collect();
        println!(
            "ACC {}: converged={} iterations={} cost=${} lambda_e=[{}, {}] $/MWh",
            acc.acc_id,
            result.converged,
            result.iterations,
            usd(result.total_cost(&agents)),
            phys(lambda_mwh.iter().cloned().fold(f64::INFINITY, f64::min)),
            phys(lambda_mwh.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        );

        if oracle {
            let reference = dispatch::qp_oracle(&agents, &loads)?;
            let y_scale = result.y_scale.max(1e-30);
            let l_scale = result.lambda_scale.max(1e-30);
            for (yr, yo) in result.y.iter().zip(&reference.y) {
                for (a, b) in yr.iter().zip(yo) {
                    max_dev = max_dev.max((a - b).abs() / y_scale);
                }
            }
            for (a, b) in result.lambda_e.iter().zip(&reference.lambda_e) {
                max_dev = max_dev.max((a - b).abs() / l_scale);
            }
        }

        if let Some(dir) = &common.out {
            std::fs::create_dir_all(dir)?;
            let mut table = String::from("interval,lambda_e_usd_per_mwh,residual_e_j\n");
            for k in 0..m {
                use std::fmt::Write;
                writeln!(
                    table,
                    "{},{},{}",
                    k + 1,
                    phys(lambda_mwh[k]),
                    phys(result.residual_e[k])
                )
                .unwrap();
            }
            std::fs::write(dir.join(format!("dispatch_acc{}.csv", acc.acc_id)), table)?;
        }
    }
    if oracle {
        println!("oracle max scaled deviation: {}", phys(max_dev));
    }
    Ok(())
}

fn market_prices(scenario: &Scenario, trip: &TripDefinition) -> Result<PriceFunction, Error> {
    let lambda: Vec<Vec<f64>> = scenario
        .accs
        .iter()
        .map(|a| a.network_price.clone())
        .collect();
    let crossings = coordinator::estimate_crossings(trip, &scenario.track)?;
    let t_end = trip.arrival_time(trip.timetable.stations.len() - 1);
    coordinator::compose_train_prices(
        &crossings,
        &lambda,
        &scenario.horizon,
        t_end,
        scenario.solver.dt,
    )
}

fn write_trajectory(
    dir: &std::path::Path,
    name: &str,
    trajectory: &Trajectory,
    prices: &PriceFunction,
) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let mut table = String::from("t_s,x_m,v_mps,a_mps2,power_w,price_usd_per_mwh\n");
    for s in &trajectory.samples {
        use std::fmt::Write;
        writeln!(
            table,
            "{},{},{},{},{},{}",
            phys(s.t),
            phys(s.x),
            phys(s.v),
            phys(s.a),
            phys(s.power),
            phys(usd_per_j_to_usd_per_mwh(
                prices.price_at(s.t + 0.5 * s.duration)
            )),
        )
        .unwrap();
    }
    std::fs::write(dir.join(format!("trajectory_{name}.csv")), table)?;
    Ok(())
}

fn run_train(
    common: &Common,
    min_work: bool,
    trace: Option<&std::path::Path>,
) -> Result<(), Error> {
    let scenario = load(common)?;
    for run in &scenario.trains {
        let trip = TripDefinition {
            train: run.spec.clone(),
            timetable: run.timetable.clone(),
            grade: scenario.grade.clone(),
            track: scenario.track.clone(),
        };
        let prices = market_prices(&scenario, &trip)?;

        if let Some(trace_path) = trace {
            let samples = io::load_gps_trace(trace_path)?;
            let (evaluated, clipped) =
                train::evaluate_profile_cost(&samples, &trip, &prices, scenario.solver.dt)?;
            println!(
                "train {} (trace): cost=${} signed_energy={} J work={} J regen_clipped={}",
                run.id,
                usd(evaluated.cost),
                phys(evaluated.signed_energy),
                phys(evaluated.work),
                clipped
            );
            if let Some(dir) = &common.out {
                write_trajectory(dir, &format!("{}_trace", run.id), &evaluated, &prices)?;
            }
            continue;
        }

        let trajectory = train::optimize_trip(&trip, &prices, &scenario.solver, None)?;
        println!(
            "train {}: cost=${} signed_energy={} J work={} J",
            run.id,
            usd(trajectory.cost),
            phys(trajectory.signed_energy),
            phys(trajectory.work)
        );
        if min_work {
            let baseline = train::min_work_profile(&trip, &scenario.solver)?;
            let baseline_cost = train::reprice(&baseline, &prices);
            let saving = 100.0 * (1.0 - trajectory.cost / baseline_cost);
            println!(
                "train {} min-work baseline: cost=${} at market prices ({}% saving)",
                run.id,
                usd(baseline_cost),
                format_args!("{saving:.2}")
            );
            if let Some(dir) = &common.out {
                write_trajectory(dir, &format!("{}_minwork", run.id), &baseline, &prices)?;
            }
        }
        if let Some(dir) = &common.out {
            write_trajectory(dir, &run.id, &trajectory, &prices)?;
        }
    }
    Ok(())
}

fn run_full(common: &Common, min_work: bool) -> Result<(), Error> {
    let scenario = load(common)?;
    let options = RdmmOptions {
        damping: common.damping.unwrap_or(1.0),
    };
    let outcome = coordinator::run_rdmm(&scenario, &options)?;
    println!(
        "rdmm: converged={} forecast_instances={} generation_cost=${} imbalance={}",
        outcome.converged,
        outcome.iterations,
        usd(outcome.settlement.total_generation_cost),
        phys(outcome.settlement.imbalance)
    );
    for t in &outcome.trains {
        println!(
            "train {}: payment=${} signed_energy={} J",
            t.id,
            usd(t.payment),
            phys(t.trajectory.signed_energy)
        );
    }
    if min_work {
        for (run, t) in scenario.trains.iter().zip(&outcome.trains) {
            let trip = TripDefinition {
                train: run.spec.clone(),
                timetable: run.timetable.clone(),
                grade: scenario.grade.clone(),
                track: scenario.track.clone(),
            };
            let baseline = train::min_work_profile(&trip, &scenario.solver)?;
            let baseline_cost = train::reprice(&baseline, &t.prices);
            let saving = 100.0 * (1.0 - t.payment / baseline_cost);
            println!(
                "train {} min-work baseline: ${} at settlement prices ({}% saving)",
                run.id,
                usd(baseline_cost),
                format_args!("{saving:.2}")
            );
        }
    }
    if let Some(dir) = &common.out {
        let files = io::write_report(&outcome, &scenario, dir)?;
        println!("wrote {} report files to {}", files.len(), dir.display());
    }
    Ok(())
}
