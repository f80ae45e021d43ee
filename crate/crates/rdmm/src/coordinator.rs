//! Interleaves train trajectory optimization with per-ACC price
//! negotiations until the traction forecast and the prices agree, then
//! settles payments at the final prices.

use crate::dispatch::{
    self, DispatchResult, Loads, WarmStart,
};
use crate::error::{Error, Result};
use crate::io::Scenario;
use crate::model::{AccDescriptor, AgentKind, HorizonGrid};
use crate::train::{
    self, optimize_trip, PriceFunction, Trajectory, TripDefinition,
};

/// Forecast-loop controls on top of the scenario's negotiation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RdmmOptions {
    /// Relaxation applied to the ACC price update between forecast
    /// instances; 1 is undamped. Halved automatically on a detected
    /// price 2-cycle.
    pub damping: f64,
}

impl Default for RdmmOptions {
    fn default() -> Self {
        RdmmOptions { damping: 1.0 }
    }
}

/// Final negotiation state of one ACC.
#[derive(Debug, Clone)]
pub struct AccOutcome {
    pub acc_id: usize,
    /// Agents with network-connection costs refreshed from the live
    /// market price.
    pub agents: Vec<crate::model::DispatchableAgent>,
    pub loads: Loads,
    pub dispatch: DispatchResult,
}

/// Final plan of one train.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub id: String,
    pub trajectory: Trajectory,
    /// Price of energy the train faced in the last forecast instance.
    pub prices: PriceFunction,
    /// Energy payment at the settlement prices, $.
    pub payment: f64,
}

/// Energy and money accounting at the final prices.
#[derive(Debug, Clone)]
pub struct Settlement {
    /// Final electric prices, $/J, indexed [acc][interval].
    pub lambda_e: Vec<Vec<f64>>,
    pub lambda_th: Vec<Vec<f64>>,
    /// Train traction energy drawn from each ACC per interval, J
    /// (negative values are consumption, as seen by the dispatch).
    pub traction_energy: Vec<Vec<f64>>,
    /// Per ACC: (agent id, electric energy J, revenue $).
    pub agent_lines: Vec<Vec<(String, f64, f64)>>,
    /// (train id, payment $).
    pub train_payments: Vec<(String, f64)>,
    pub total_generation_cost: f64,
    /// |sum over intervals of price times balance residual|, scaled by
    /// the gross payment volume.
    pub imbalance: f64,
}

#[derive(Debug, Clone)]
pub struct RdmmOutcome {
    pub accs: Vec<AccOutcome>,
    pub trains: Vec<TrainOutcome>,
    pub settlement: Settlement,
    /// Forecast instances used.
    pub iterations: usize,
    pub converged: bool,
    /// Damping in effect at exit.
    pub damping: f64,
}

/// Sums train electrical energy into per-ACC, per-interval buckets with
/// the dispatch sign convention (consumption negative). Returns
/// `[acc][interval]` in J. Energy outside the horizon is dropped.
pub fn aggregate_traction(
    track: &[AccDescriptor],
    grid: &HorizonGrid,
    trajectories: &[Trajectory],
) -> Result<Vec<Vec<f64>>> {
    let m = grid.num_intervals();
    let mut energy = vec![vec![0.0; m]; track.len()];
    for traj in trajectories {
        for s in &traj.samples {
            if s.duration <= 0.0 || s.power == 0.0 {
                continue;
            }
            let acc = crate::model::acc_of_position(track, s.x)?;
            let (t0, t1) = (s.t, s.t + s.duration);
            // Split the sample's energy across dispatch intervals by
            // time overlap.
            let k0 = grid.interval_of_clamped(t0);
            let k1 = grid.interval_of_clamped(t1);
            for k in k0..=k1 {
                let (a, b) = grid.interval_span(k);
                let overlap = (t1.min(b) - t0.max(a)).max(0.0);
                energy[acc - 1][k - 1] -= s.power * overlap;
            }
        }
    }
    Ok(energy)
}

/// ACC occupancy as `(acc_index, entry_time)` pairs estimated from
/// constant-speed motion along each leg; used before any trajectory
/// exists.
pub fn estimate_crossings(
    trip: &TripDefinition,
    track: &[AccDescriptor],
) -> Result<Vec<(usize, f64)>> {
    let mut samples = Vec::new();
    for (i, s) in trip.timetable.stations.iter().enumerate() {
        let arrive = trip.arrival_time(i);
        let depart = trip.departure_time(i);
        samples.push(train::TrajectorySample {
            t: arrive,
            x: s.position,
            v: 0.0,
            a: 0.0,
            traction: 0.0,
            power: 0.0,
            duration: depart - arrive,
        });
        samples.push(train::TrajectorySample {
            t: depart,
            x: s.position,
            v: 0.0,
            a: 0.0,
            traction: 0.0,
            power: 0.0,
            duration: 0.0,
        });
    }
    let skeleton = Trajectory {
        samples,
        leg_spans: Vec::new(),
        cost: 0.0,
        work: 0.0,
        signed_energy: 0.0,
        leg_speeds: Vec::new(),
    };
    skeleton.acc_crossing_times(track)
}

/// Builds the time-varying price one train faces: the electric price of
/// whichever ACC it occupies, resolved on a fine uniform grid so
/// mid-interval boundary crossings are priced at the right section.
/// Prices are held beyond the dispatch horizon.
pub fn compose_train_prices(
    crossings: &[(usize, f64)],
    lambda_e: &[Vec<f64>],
    grid: &HorizonGrid,
    t_end: f64,
    dt: f64,
) -> Result<PriceFunction> {
    if crossings.is_empty() {
        return Err(Error::invalid("no ACC occupancy for price composition"));
    }
    let start = grid.start().min(crossings[0].1);
    let end = grid.end().max(t_end).max(start + dt);
    let n = ((end - start) / dt).ceil() as usize;
    let fine = HorizonGrid::new(start, n.max(1), dt)?;
    let occupant = |t: f64| -> usize {
        let idx = crossings.partition_point(|&(_, ct)| ct <= t);
        crossings[idx.saturating_sub(1).min(crossings.len() - 1)].0
    };
    let mut lambda = Vec::with_capacity(fine.num_intervals());
    for k in 1..=fine.num_intervals() {
        let (a, b) = fine.interval_span(k);
        let mid = 0.5 * (a + b);
        let acc = occupant(mid);
        let kk = grid.interval_of_clamped(mid);
        lambda.push(lambda_e[acc - 1][kk - 1]);
    }
    Ok(PriceFunction::TimeSeries { grid: fine, lambda })
}

fn acc_loads(scenario: &Scenario, acc_idx: usize, instance: usize, traction: &[f64]) -> Loads {
    let m = scenario.horizon.num_intervals();
    let passive = scenario.accs[acc_idx].passive.at_instance(instance);
    let mut electric = vec![0.0; m];
    let mut thermal = vec![0.0; m];
    for k in 0..m {
        electric[k] = passive.electric[k] + passive.renewable[k] + traction[k];
        thermal[k] = passive.thermal[k];
    }
    Loads { electric, thermal }
}

fn lambda_delta(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Runs the full market mechanism for one planning horizon: trains plan
/// against the current prices, their traction is aggregated into the
/// ACC loads, each ACC renegotiates, and the loop repeats until prices
/// and traction stop moving.
pub fn run_rdmm(scenario: &Scenario, options: &RdmmOptions) -> Result<RdmmOutcome> {
    scenario.validate()?;
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::invalid(format!(
            "damping must be in (0, 1], got {}",
            options.damping
        )));
    }
    let grid = &scenario.horizon;
    let m = grid.num_intervals();
    let num_accs = scenario.track.len();
    let steps = &scenario.steps;

    let trips: Vec<TripDefinition> = scenario
        .trains
        .iter()
        .map(|t| TripDefinition {
            train: t.spec.clone(),
            timetable: t.timetable.clone(),
            grade: scenario.grade.clone(),
            track: scenario.track.clone(),
        })
        .collect();
    for trip in &trips {
        trip.validate()?;
    }

    // Network-connection agents track the live market price.
    let live_agents: Vec<Vec<crate::model::DispatchableAgent>> = scenario
        .accs
        .iter()
        .map(|acc| {
            acc.agents
                .iter()
                .map(|a| {
                    if a.kind == AgentKind::NetworkConnection {
                        dispatch::update_network_agent_cost(a, &acc.network_price, scenario.c_min)
                    } else {
                        Ok(a.clone())
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // Bootstrap prices at the external market price rather than zero so
    // the first trajectories already see realistic differentials.
    let mut lambda_e: Vec<Vec<f64>> = scenario
        .accs
        .iter()
        .map(|a| a.network_price.clone())
        .collect();
    let mut lambda_history: Vec<Vec<Vec<f64>>> = vec![lambda_e.clone()];

    let mut crossings: Vec<Vec<(usize, f64)>> = trips
        .iter()
        .map(|t| estimate_crossings(t, &scenario.track))
        .collect::<Result<Vec<_>>>()?;
    let trip_ends: Vec<f64> = trips
        .iter()
        .map(|t| t.arrival_time(t.timetable.stations.len() - 1))
        .collect();

    let mut damping = options.damping;
    let mut warm_traj: Vec<Option<Trajectory>> = vec![None; trips.len()];
    let mut warm_dispatch: Vec<WarmStart> = scenario
        .accs
        .iter()
        .map(|a| WarmStart::prices(a.network_price.clone(), vec![0.0; m]))
        .collect();

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut train_prices: Vec<PriceFunction> = Vec::new();
    let mut dispatches: Vec<DispatchResult> = Vec::new();
    let mut loads_final: Vec<Loads> = Vec::new();
    let mut prev_traction: Option<Vec<Vec<f64>>> = None;
    let mut traction = vec![vec![0.0; m]; num_accs];
    let mut converged = false;
    let mut iterations = 0;

    let mut planned_lambda: Option<Vec<Vec<f64>>> = None;
    for j in 1..=steps.j_max {
        iterations = j;

        // Trains re-plan only when the prices have moved since their
        // last plan; otherwise the previous trajectories stand, which
        // lets the loop reach an exact fixed point.
        let price_scale = lambda_e
            .iter()
            .flatten()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1e-30);
        let replan = match &planned_lambda {
            None => true,
            Some(prev) => lambda_delta(&lambda_e, prev) / price_scale > steps.tol_forecast_lambda,
        };
        if replan {
            train_prices = (0..trips.len())
                .map(|i| {
                    compose_train_prices(&crossings[i], &lambda_e, grid, trip_ends[i], scenario.solver.dt)
                })
                .collect::<Result<Vec<_>>>()?;

            let jobs: Vec<usize> = (0..trips.len()).collect();
            let solved: Vec<Result<Trajectory>> = crate::exec::map(jobs, |i| {
                optimize_trip(&trips[i], &train_prices[i], &scenario.solver, warm_traj[i].as_ref())
            });
            trajectories = solved.into_iter().collect::<Result<Vec<_>>>()?;
            for (i, t) in trajectories.iter().enumerate() {
                crossings[i] = t.acc_crossing_times(&scenario.track)?;
                warm_traj[i] = Some(t.clone());
            }
            planned_lambda = Some(lambda_e.clone());
        }

        traction = aggregate_traction(&scenario.track, grid, &trajectories)?;

        let acc_jobs: Vec<usize> = (0..num_accs).collect();
        let results: Vec<Result<(DispatchResult, Loads)>> = crate::exec::map(acc_jobs, |i| {
            let loads = acc_loads(scenario, i, j, &traction[i]);
            let result = dispatch::negotiate(&live_agents[i], &loads, steps, &warm_dispatch[i])
                .map_err(|e| Error::invalid(format!("ACC {}: {e}", scenario.track[i].id)))?;
            Ok((result, loads))
        });
        dispatches = Vec::with_capacity(num_accs);
        loads_final = Vec::with_capacity(num_accs);
        for r in results {
            let (d, l) = r?;
            dispatches.push(d);
            loads_final.push(l);
        }
        for (i, d) in dispatches.iter().enumerate() {
            warm_dispatch[i] = WarmStart::from_result(d);
        }

        let fresh: Vec<Vec<f64>> = dispatches.iter().map(|d| d.lambda_e.clone()).collect();
        let mut next_lambda = Vec::with_capacity(num_accs);
        for (old, new) in lambda_e.iter().zip(&fresh) {
            next_lambda.push(
                old.iter()
                    .zip(new)
                    .map(|(o, n)| o + damping * (n - o))
                    .collect::<Vec<f64>>(),
            );
        }

        let lambda_scale = next_lambda
            .iter()
            .flatten()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1e-30);
        let y_scale = traction
            .iter()
            .flatten()
            .chain(loads_final.iter().flat_map(|l| l.electric.iter()))
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1.0);

        let dl = lambda_delta(&next_lambda, &lambda_e) / lambda_scale;
        let dy = prev_traction
            .as_ref()
            .map(|prev| lambda_delta(&traction, prev) / y_scale)
            .unwrap_or(f64::INFINITY);

        // A 2-cycle shows as prices returning to the state two
        // instances back while still moving instance to instance.
        if lambda_history.len() >= 2 {
            let back2 = &lambda_history[lambda_history.len() - 2];
            let d2 = lambda_delta(&next_lambda, back2) / lambda_scale;
            if d2 < 0.1 * dl && dl > steps.tol_forecast_lambda {
                damping *= 0.5;
                log::warn!("price 2-cycle detected at instance {j}; damping now {damping}");
            }
        }

        lambda_history.push(next_lambda.clone());
        lambda_e = next_lambda;
        prev_traction = Some(traction.clone());

        if dl <= steps.tol_forecast_lambda && dy <= steps.tol_forecast_y {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("forecast loop hit j_max = {} without convergence", steps.j_max);
    }

    // Settle at the final prices and the final plans.
    let mut train_outcomes = Vec::with_capacity(trips.len());
    let mut train_payments = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let prices = compose_train_prices(&crossings[i], &lambda_e, grid, trip_ends[i], scenario.solver.dt)?;
        let payment = train::reprice(traj, &prices);
        train_payments.push((scenario.trains[i].id.clone(), payment));
        train_outcomes.push(TrainOutcome {
            id: scenario.trains[i].id.clone(),
            trajectory: traj.clone(),
            prices: train_prices[i].clone(),
            payment,
        });
    }

    let mut agent_lines = Vec::with_capacity(num_accs);
    let mut total_generation_cost = 0.0;
    let mut balance = 0.0;
    let mut volume = 0.0;
    for (i, d) in dispatches.iter().enumerate() {
        let mut lines = Vec::new();
        for (a, y) in live_agents[i].iter().zip(&d.y) {
            let (p_e, p_th) = dispatch::agent_outputs(a, y)?;
            let energy: f64 = p_e.iter().sum();
            let revenue: f64 = (0..m)
                .map(|k| lambda_e[i][k] * p_e[k] + d.lambda_th[k] * p_th[k])
                .sum();
            volume += revenue.abs();
            lines.push((a.id.clone(), energy, revenue));
        }
        total_generation_cost += d.total_cost(&live_agents[i]);
        for k in 0..m {
            balance += lambda_e[i][k] * d.residual_e[k] + d.lambda_th[k] * d.residual_th[k];
        }
        agent_lines.push(lines);
    }
    let settlement = Settlement {
        lambda_e: lambda_e.clone(),
        lambda_th: dispatches.iter().map(|d| d.lambda_th.clone()).collect(),
        traction_energy: traction.clone(),
        agent_lines,
        train_payments,
        total_generation_cost,
        imbalance: balance.abs() / volume.max(1e-30),
    };

    let accs = (0..num_accs)
        .map(|i| AccOutcome {
            acc_id: scenario.track[i].id,
            agents: live_agents[i].clone(),
            loads: loads_final[i].clone(),
            dispatch: dispatches[i].clone(),
        })
        .collect();

    Ok(RdmmOutcome {
        accs,
        trains: train_outcomes,
        settlement,
        iterations,
        converged,
        damping,
    })
}

/// Advances the scenario one interval for receding-horizon operation:
/// the horizon start moves by one interval length and every
/// per-interval series shifts left with its last value held.
pub fn rolling_advance(scenario: &Scenario) -> Result<Scenario> {
    scenario.validate()?;
    let shift = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v[1..].to_vec();
        out.push(*v.last().unwrap());
        out
    };
    let mut next = scenario.clone();
    next.horizon = scenario.horizon.advanced();
    for acc in &mut next.accs {
        acc.network_price = shift(&acc.network_price);
        for a in &mut acc.agents {
            a.d_e = shift(&a.d_e);
            a.d_th = shift(&a.d_th);
            a.cost_a = shift(&a.cost_a);
            a.cost_b = shift(&a.cost_b);
            a.cost_c = shift(&a.cost_c);
            a.y_min = shift(&a.y_min);
            a.y_max = shift(&a.y_max);
        }
        for set in &mut acc.passive.by_instance {
            set.renewable = shift(&set.renewable);
            set.electric = shift(&set.electric);
            set.thermal = shift(&set.thermal);
        }
    }
    log::info!(
        "rolling_advance: horizon now starts at {} s; trailing interval held",
        next.horizon.start()
    );
    next.validate()?;
    Ok(next)
}
