//! Energy-cost-optimal train dispatch: per-leg trajectory NLP under a
//! piecewise-constant price of energy, trip assembly with station
//! dwells, the minimum-work baseline, and cost evaluation of recorded
//! field traces.

mod leg;

pub use leg::{optimize_leg, transcribe_leg, LegNlp, LegSolution, SolverConfig};

use crate::dynamics::KinematicSample;
use crate::error::{Error, Result};
use crate::model::{AccDescriptor, GradeProfile, HorizonGrid, Timetable, TrainSpec, G};

/// Price of energy seen by one train as a function of time, $/J.
/// Outside the horizon the nearest interval's price is held.
#[derive(Debug, Clone, PartialEq)]
pub enum PriceFunction {
    Uniform(f64),
    TimeSeries { grid: HorizonGrid, lambda: Vec<f64> },
}

impl PriceFunction {
    pub fn price_at(&self, t: f64) -> f64 {
        match self {
            PriceFunction::Uniform(p) => *p,
            PriceFunction::TimeSeries { grid, lambda } => {
                let k = grid.interval_of_clamped(t);
                lambda[k - 1]
            }
        }
    }
}

/// One train's run: physical spec, schedule and track geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TripDefinition {
    pub train: TrainSpec,
    pub timetable: Timetable,
    pub grade: GradeProfile,
    pub track: Vec<AccDescriptor>,
}

impl TripDefinition {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.timetable.validate()?;
        self.grade.validate()?;
        for s in &self.timetable.stations {
            if self.grade.angle(s.position).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "station {} sits on a grade; stations must be level",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// Departure time of station `s`: scheduled arrival plus dwell.
    pub fn departure_time(&self, s: usize) -> f64 {
        let st = &self.timetable.stations[s];
        st.earliest_arrival + st.dwell
    }

    /// Arrival time at station `s`: the scheduled (earliest) arrival.
    pub fn arrival_time(&self, s: usize) -> f64 {
        self.timetable.stations[s].earliest_arrival
    }
}

/// One sample of a planned trajectory. `duration` is the span until the
/// next sample, so energy sums are exact on non-uniform grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
    pub traction: f64,
    pub power: f64,
    pub duration: f64,
}

/// Planned (or evaluated) run of one train over its full trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Sample index ranges of the travel segments, one per leg.
    pub leg_spans: Vec<(usize, usize)>,
    /// Energy cost over the whole trip, $.
    pub cost: f64,
    /// Positive-power work, J.
    pub work: f64,
    /// Signed electrical energy, J.
    pub signed_energy: f64,
    /// Per-leg node speeds, reusable as warm starts.
    pub leg_speeds: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Times at which the trajectory enters each ACC, `(acc_index, t)`,
    /// starting with the ACC occupied at departure.
    pub fn acc_crossing_times(&self, track: &[AccDescriptor]) -> Result<Vec<(usize, f64)>> {
        if self.samples.is_empty() {
            return Ok(Vec::new());
        }
        let first = &self.samples[0];
        let mut current = crate::model::acc_of_position(track, first.x)?;
        let mut out = vec![(current, first.t)];
        for w in self.samples.windows(2) {
            let acc = crate::model::acc_of_position(track, w[1].x)?;
            if acc != current {
                // ACC indices are 1-based; the boundary between ACC n
                // and n+1 is the end of descriptor n.
                let boundary = track[acc.min(current) - 1].end_m;
                let (a, b) = (&w[0], &w[1]);
                let frac = if (b.x - a.x).abs() > 1e-12 {
                    ((boundary - a.x) / (b.x - a.x)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                out.push((acc, a.t + frac * (b.t - a.t)));
                current = acc;
            }
        }
        Ok(out)
    }

    /// Total distance covered, m.
    pub fn distance(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.x - a.x,
            _ => 0.0,
        }
    }
}

/// Price-optimal trajectory for the whole trip: each leg solved under
/// the supplied price function, legs joined by zero-power dwells.
pub fn optimize_trip(
    trip: &TripDefinition,
    prices: &PriceFunction,
    config: &SolverConfig,
    warm: Option<&Trajectory>,
) -> Result<Trajectory> {
    trip.validate()?;
    let legs = trip.timetable.num_legs();

    let mut nlps = Vec::with_capacity(legs);
    for l in 0..legs {
        let from = &trip.timetable.stations[l];
        let to = &trip.timetable.stations[l + 1];
        let nlp = transcribe_leg(
            &trip.train,
            &trip.grade,
            from.position,
            to.position - from.position,
            trip.departure_time(l),
            trip.arrival_time(l + 1),
            prices,
            config.dt,
        )
        .map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("leg {}: {msg}", l + 1)),
            other => other,
        })?;
        nlps.push(nlp);
    }

    let jobs: Vec<(usize, LegNlp)> = nlps.into_iter().enumerate().collect();
    let solutions: Vec<(usize, Result<LegSolution>)> = crate::exec::map(jobs, |(l, nlp)| {
        let warm_speeds = warm
            .and_then(|t| t.leg_speeds.get(l))
            .map(|v| v.as_slice());
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(l as u64);
        (l, optimize_leg(&nlp, &cfg, warm_speeds))
    });
    let mut leg_solutions = vec![None; legs];
    for (l, sol) in solutions {
        let sol = sol.map_err(|e| match e {
            Error::OptimizationFailure(msg) => {
                Error::OptimizationFailure(format!("leg {}: {msg}", l + 1))
            }
            other => other,
        })?;
        leg_solutions[l] = Some(sol);
    }

    assemble_trip(trip, prices, config, leg_solutions.into_iter().flatten().collect())
}

fn assemble_trip(
    trip: &TripDefinition,
    prices: &PriceFunction,
    config: &SolverConfig,
    leg_solutions: Vec<LegSolution>,
) -> Result<Trajectory> {
    let mut samples = Vec::new();
    let mut leg_spans = Vec::new();
    let mut leg_speeds = Vec::new();
    let mut cost = 0.0;
    let mut work = 0.0;
    let mut signed = 0.0;

    for (l, sol) in leg_solutions.iter().enumerate() {
        let from = &trip.timetable.stations[l];
        let to = &trip.timetable.stations[l + 1];
        let t0 = trip.departure_time(l);
        let duration = trip.arrival_time(l + 1) - t0;
        let n = sol.v.len() - 1;
        let dt = duration / n as f64;

        let nlp = transcribe_leg(
            &trip.train,
            &trip.grade,
            from.position,
            to.position - from.position,
            t0,
            trip.arrival_time(l + 1),
            prices,
            config.dt,
        )?;
        let eval = nlp.evaluate(&sol.v);
        let start = samples.len();
        for k in 0..n {
            let p = eval.power[k];
            samples.push(TrajectorySample {
                t: t0 + k as f64 * dt,
                x: from.position + eval.x[k],
                v: sol.v[k],
                a: eval.a[k],
                traction: eval.force[k],
                power: p,
                duration: dt,
            });
            cost += prices.price_at(t0 + (k as f64 + 0.5) * dt) * p * dt;
            work += p.max(0.0) * dt;
            signed += p * dt;
        }
        leg_spans.push((start, samples.len()));
        leg_speeds.push(sol.v.clone());

        // Dwell at the arrival station: stationary, zero power.
        let arrive = trip.arrival_time(l + 1);
        let dwell_end = if l + 1 < trip.timetable.num_legs() {
            trip.departure_time(l + 1)
        } else {
            arrive + to.dwell
        };
        if dwell_end > arrive {
            samples.push(TrajectorySample {
                t: arrive,
                x: to.position,
                v: 0.0,
                a: 0.0,
                traction: 0.0,
                power: 0.0,
                duration: dwell_end - arrive,
            });
        }
    }

    Ok(Trajectory {
        samples,
        leg_spans,
        cost,
        work,
        signed_energy: signed,
        leg_speeds,
    })
}

/// Energy cost of an existing trajectory under a different price
/// function, using the same midpoint-in-time quadrature the optimizer
/// uses.
pub fn reprice(trajectory: &Trajectory, prices: &PriceFunction) -> f64 {
    trajectory
        .samples
        .iter()
        .map(|s| prices.price_at(s.t + 0.5 * s.duration) * s.power * s.duration)
        .sum()
}

/// Minimum-work baseline: the trip optimized under a uniform unit
/// price, so cost numerically equals the signed energy in joules.
pub fn min_work_profile(trip: &TripDefinition, config: &SolverConfig) -> Result<Trajectory> {
    optimize_trip(trip, &PriceFunction::Uniform(1.0), config, None)
}

/// Cost accounting of a recorded kinematic trace (e.g. from GPS):
/// resamples to a uniform grid, runs inverse dynamics, clips regen at
/// the train's limit and integrates cost under the prices. Returns the
/// trajectory with the number of regen-clipped samples.
pub fn evaluate_profile_cost(
    trace: &[KinematicSample],
    trip: &TripDefinition,
    prices: &PriceFunction,
    dt: f64,
) -> Result<(Trajectory, usize)> {
    if trace.len() < 2 {
        return Err(Error::invalid("trace needs at least two samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("resampling dt must be positive"));
    }
    for w in trace.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::invalid(format!(
                "trace time must be strictly increasing (t = {} then {})",
                w[0].t, w[1].t
            )));
        }
    }

    let t0 = trace[0].t;
    let t1 = trace[trace.len() - 1].t;
    let n = (((t1 - t0) / dt).floor() as usize).max(1);
    let interp = |t: f64| -> (f64, f64) {
        let idx = trace.partition_point(|s| s.t <= t).clamp(1, trace.len() - 1);
        let (a, b) = (&trace[idx - 1], &trace[idx]);
        let frac = (t - a.t) / (b.t - a.t);
        (a.x + frac * (b.x - a.x), a.v + frac * (b.v - a.v))
    };

    let spec = &trip.train;
    let mut samples = Vec::with_capacity(n + 1);
    let mut clipped = 0;
    let mut cost = 0.0;
    let mut work = 0.0;
    let mut signed = 0.0;
    for k in 0..=n {
        let t = t0 + k as f64 * dt;
        let (x, v) = interp(t);
        let v = v.max(0.0);
        // Midpoint discretization over [t, t + dt], matching the
        // optimizer: the inertial term then books the exact
        // kinetic-energy change, so energy does not leak across price
        // boundaries.
        let (a, traction, mut power, duration) = if k < n {
            let (x1, v1) = interp(t + dt);
            let v1 = v1.max(0.0);
            let a = (v1 - v) / dt;
            let vm = 0.5 * (v + v1);
            let xm = 0.5 * (x + x1);
            let resistance = spec.davis_a + spec.davis_b * vm + spec.davis_c * vm * vm;
            let grade_f = spec.mass * G * trip.grade.angle(xm).sin();
            let traction = spec.mass * a + resistance + grade_f;
            (a, traction, traction * vm, dt)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        if power < spec.p_min {
            power = spec.p_min;
            clipped += 1;
        }
        samples.push(TrajectorySample {
            t,
            x,
            v,
            a,
            traction,
            power,
            duration,
        });
        cost += prices.price_at(t + 0.5 * duration) * power * duration;
        work += power.max(0.0) * duration;
        signed += power * duration;
    }
    if clipped > 0 {
        log::info!("evaluate_profile_cost: regen clipped on {clipped} samples");
    }

    let leg_spans = vec![(0, samples.len())];
    Ok((
        Trajectory {
            samples,
            leg_spans,
            cost,
            work,
            signed_energy: signed,
            leg_speeds: Vec::new(),
        },
        clipped,
    ))
}

#[cfg(test)]
mod tests;
