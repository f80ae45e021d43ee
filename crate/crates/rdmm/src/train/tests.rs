use super::*;
use crate::model::Station;

fn acela() -> TrainSpec {
    TrainSpec::new(
        545_000.0, 9.2e6, -6.0e6, -0.5, 0.5, 66.67, 10195.16, 65.81, 25.02,
    )
    .unwrap()
}

fn station(name: &str, x: f64, arrive: f64, depart_by: f64, dwell: f64) -> Station {
    Station {
        name: name.into(),
        position: x,
        earliest_arrival: arrive,
        latest_departure: depart_by,
        dwell,
    }
}

/// Two identical 10 km / 400 s legs with a 60 s dwell between them.
fn two_leg_trip() -> TripDefinition {
    TripDefinition {
        train: acela(),
        timetable: Timetable {
            stations: vec![
                station("A", 0.0, -60.0, 60.0, 60.0),
                station("B", 10_000.0, 400.0, 520.0, 60.0),
                station("C", 20_000.0, 860.0, 980.0, 60.0),
            ],
        },
        grade: GradeProfile::level(),
        track: vec![
            AccDescriptor {
                id: 1,
                start_m: 0.0,
                end_m: 10_000.0,
            },
            AccDescriptor {
                id: 2,
                start_m: 10_000.0,
                end_m: 20_000.0,
            },
        ],
    }
}

fn single_leg_trip() -> TripDefinition {
    let mut trip = two_leg_trip();
    trip.timetable.stations.truncate(2);
    trip.track.truncate(1);
    trip
}

fn fast_config() -> SolverConfig {
    SolverConfig {
        multi_starts: 2,
        ..SolverConfig::default()
    }
}

#[test]
fn price_function_holds_last_interval() {
    let grid = HorizonGrid::new(0.0, 3, 100.0).unwrap();
    let pf = PriceFunction::TimeSeries {
        grid,
        lambda: vec![1.0, 2.0, 3.0],
    };
    assert_eq!(pf.price_at(0.0), 1.0);
    assert_eq!(pf.price_at(150.0), 2.0);
    assert_eq!(pf.price_at(299.9), 3.0);
    assert_eq!(pf.price_at(1000.0), 3.0);
    assert_eq!(pf.price_at(-5.0), 1.0);
}

#[test]
fn uniform_price_cost_is_price_times_energy() {
    let trip = single_leg_trip();
    let lambda = 2.8e-8;
    let traj = optimize_trip(&trip, &PriceFunction::Uniform(lambda), &fast_config(), None).unwrap();
    assert!(
        (traj.cost - lambda * traj.signed_energy).abs() <= 1e-9 * traj.cost.abs(),
        "cost {} vs lambda*E {}",
        traj.cost,
        lambda * traj.signed_energy
    );
    assert!(traj.work >= traj.signed_energy);
}

#[test]
fn min_work_matches_uniform_price_solution() {
    let trip = single_leg_trip();
    let base = min_work_profile(&trip, &fast_config()).unwrap();
    let lambda = 5.0e-8;
    let priced = optimize_trip(&trip, &PriceFunction::Uniform(lambda), &fast_config(), None).unwrap();
    // Same optimization problem up to objective scaling.
    assert!(
        (base.signed_energy - priced.signed_energy).abs() <= 1e-3 * base.signed_energy.abs(),
        "signed energy {} vs {}",
        base.signed_energy,
        priced.signed_energy
    );
}

#[test]
fn terminal_coast_under_generous_schedule() {
    // Long time budget: work-minimal driving ends in a coast, so the
    // traction force near arrival is far below the cruise force.
    let mut trip = single_leg_trip();
    trip.timetable.stations[1].earliest_arrival = 520.0;
    trip.timetable.stations[1].latest_departure = 640.0;
    let traj = min_work_profile(&trip, &fast_config()).unwrap();
    let (start, end) = traj.leg_spans[0];
    let samples = &traj.samples[start..end];
    let tail = &samples[samples.len() * 9 / 10..samples.len() - 1];
    let peak_traction = samples
        .iter()
        .map(|s| s.traction)
        .fold(f64::NEG_INFINITY, f64::max);
    let tail_max = tail
        .iter()
        .map(|s| s.traction)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        tail_max < 0.25 * peak_traction,
        "tail traction {tail_max:.0} vs peak {peak_traction:.0}"
    );
}

#[test]
fn step_price_dominates_uniform_solution() {
    // Price triples halfway through the leg. The step-price optimum
    // must cost no more than the uniform-price optimum re-priced under
    // the step.
    let trip = single_leg_trip();
    let grid = HorizonGrid::new(60.0, 2, 200.0).unwrap();
    let step = PriceFunction::TimeSeries {
        grid,
        lambda: vec![2.0e-8, 6.0e-8],
    };
    let cfg = fast_config();
    let optimal = optimize_trip(&trip, &step, &cfg, None).unwrap();
    let uniform = optimize_trip(&trip, &PriceFunction::Uniform(3.0e-8), &cfg, None).unwrap();
    let repriced: f64 = uniform
        .samples
        .iter()
        .map(|s| step.price_at(s.t + 0.5 * s.duration) * s.power * s.duration)
        .sum();
    assert!(
        optimal.cost <= repriced * (1.0 + 1e-6) + 1e-9,
        "optimal {} vs repriced uniform {}",
        optimal.cost,
        repriced
    );
}

#[test]
fn mirrored_leg_costs_agree() {
    // Level track, uniform price: the problem is its own time mirror,
    // so solving it twice with mirrored multi-start seeds must land on
    // costs that agree closely.
    let trip = single_leg_trip();
    let cfg = fast_config();
    let a = optimize_trip(&trip, &PriceFunction::Uniform(1e-8), &cfg, None).unwrap();
    let mut cfg_b = cfg.clone();
    cfg_b.seed = 1234;
    let b = optimize_trip(&trip, &PriceFunction::Uniform(1e-8), &cfg_b, None).unwrap();
    assert!(
        (a.cost - b.cost).abs() <= 1e-3 * a.cost.abs(),
        "cost {} vs {}",
        a.cost,
        b.cost
    );
}

#[test]
fn two_identical_legs_get_identical_profiles() {
    let trip = two_leg_trip();
    let traj = optimize_trip(&trip, &PriceFunction::Uniform(2.8e-8), &fast_config(), None).unwrap();
    assert_eq!(traj.leg_spans.len(), 2);
    let (s1, e1) = traj.leg_spans[0];
    let (s2, e2) = traj.leg_spans[1];
    assert_eq!(e1 - s1, e2 - s2);
    for (a, b) in traj.samples[s1..e1].iter().zip(&traj.samples[s2..e2]) {
        assert!(
            (a.v - b.v).abs() <= 1e-2 * trip.train.v_max,
            "speeds diverge: {} vs {}",
            a.v,
            b.v
        );
    }
    // Position is monotone with a plateau at the dwell.
    for w in traj.samples.windows(2) {
        assert!(w[1].x >= w[0].x - 1e-9);
    }
    let dwell = traj
        .samples
        .iter()
        .find(|s| s.v == 0.0 && s.power == 0.0 && s.t >= 400.0 && s.t < 460.0)
        .expect("dwell sample");
    assert_eq!(dwell.x, 10_000.0);
    assert!((dwell.duration - 60.0).abs() < 1e-9);
}

#[test]
fn cost_cross_checked_by_independent_quadrature() {
    let trip = two_leg_trip();
    let grid = HorizonGrid::new(0.0, 10, 120.0).unwrap();
    let prices = PriceFunction::TimeSeries {
        grid: grid.clone(),
        lambda: (0..10).map(|k| 1e-8 * (1.0 + 0.3 * k as f64)).collect(),
    };
    let traj = optimize_trip(&trip, &prices, &fast_config(), None).unwrap();
    // Bucket energy by dispatch interval, then price the buckets.
    let mut energy = vec![0.0; 10];
    for s in &traj.samples {
        if s.duration > 0.0 {
            energy[grid.interval_of_clamped(s.t + 0.5 * s.duration) - 1] += s.power * s.duration;
        }
    }
    let repriced: f64 = energy
        .iter()
        .enumerate()
        .map(|(k, e)| e * 1e-8 * (1.0 + 0.3 * k as f64))
        .sum();
    assert!(
        (traj.cost - repriced).abs() <= 1e-6 * traj.cost.abs(),
        "cost {} vs bucketed {}",
        traj.cost,
        repriced
    );
}

#[test]
fn crossing_times_cover_the_track() {
    let trip = two_leg_trip();
    let traj = optimize_trip(&trip, &PriceFunction::Uniform(1e-8), &fast_config(), None).unwrap();
    let crossings = traj.acc_crossing_times(&trip.track).unwrap();
    assert_eq!(crossings.len(), 2);
    assert_eq!(crossings[0].0, 1);
    assert_eq!(crossings[1].0, 2);
    // The boundary sits at the dwell station, so the crossing happens
    // at or after arrival there.
    assert!(crossings[1].1 >= 399.0, "crossing at {}", crossings[1].1);
}

#[test]
fn refinement_stability() {
    let trip = single_leg_trip();
    let coarse = optimize_trip(&trip, &PriceFunction::Uniform(2.8e-8), &fast_config(), None).unwrap();
    let mut fine_cfg = fast_config();
    fine_cfg.dt = 2.5;
    let fine = optimize_trip(&trip, &PriceFunction::Uniform(2.8e-8), &fine_cfg, None).unwrap();
    assert!(
        (coarse.cost - fine.cost).abs() <= 5e-3 * coarse.cost.abs(),
        "coarse {} vs fine {}",
        coarse.cost,
        fine.cost
    );
}

#[test]
fn warm_start_reproduces_solution() {
    let trip = single_leg_trip();
    let cfg = SolverConfig {
        multi_starts: 3,
        ..SolverConfig::default()
    };
    let first = optimize_trip(&trip, &PriceFunction::Uniform(2.8e-8), &cfg, None).unwrap();
    let second =
        optimize_trip(&trip, &PriceFunction::Uniform(2.8e-8), &cfg, Some(&first)).unwrap();
    assert!(
        (first.cost - second.cost).abs() <= 1e-4 * first.cost.abs(),
        "warm-started cost moved: {} vs {}",
        first.cost,
        second.cost
    );
}

#[test]
fn evaluate_cruise_trace_closed_form() {
    let trip = single_leg_trip();
    let v = 20.0;
    let lambda = 3.0e-8;
    let t_total = 200.0;
    let trace: Vec<KinematicSample> = (0..=200)
        .map(|k| KinematicSample {
            t: k as f64,
            x: v * k as f64,
            v,
            a: 0.0,
        })
        .collect();
    let (traj, clipped) =
        evaluate_profile_cost(&trace, &trip, &PriceFunction::Uniform(lambda), 1.0).unwrap();
    assert_eq!(clipped, 0);
    let davis = 10195.16 + 65.81 * v + 25.02 * v * v;
    let expected = davis * v * lambda * t_total;
    assert!(
        (traj.cost - expected).abs() <= 1e-3 * expected,
        "cost {} vs closed form {}",
        traj.cost,
        expected
    );
}

#[test]
fn evaluate_stationary_trace_costs_nothing() {
    let trip = single_leg_trip();
    let trace = vec![
        KinematicSample {
            t: 0.0,
            x: 0.0,
            v: 0.0,
            a: 0.0,
        },
        KinematicSample {
            t: 100.0,
            x: 0.0,
            v: 0.0,
            a: 0.0,
        },
    ];
    let (traj, _) = evaluate_profile_cost(&trace, &trip, &PriceFunction::Uniform(1.0), 1.0).unwrap();
    assert_eq!(traj.cost, 0.0);
    assert_eq!(traj.work, 0.0);
}

#[test]
fn evaluate_rejects_non_monotone_time() {
    let trip = single_leg_trip();
    let trace = vec![
        KinematicSample {
            t: 0.0,
            x: 0.0,
            v: 1.0,
            a: 0.0,
        },
        KinematicSample {
            t: 0.0,
            x: 1.0,
            v: 1.0,
            a: 0.0,
        },
    ];
    assert!(evaluate_profile_cost(&trace, &trip, &PriceFunction::Uniform(1.0), 1.0).is_err());
}

#[test]
fn evaluate_round_trips_optimizer_cost() {
    let trip = single_leg_trip();
    let lambda = 2.8e-8;
    let traj = optimize_trip(&trip, &PriceFunction::Uniform(lambda), &fast_config(), None).unwrap();
    let trace: Vec<KinematicSample> = traj
        .samples
        .iter()
        .map(|s| KinematicSample {
            t: s.t,
            x: s.x,
            v: s.v,
            a: s.a,
        })
        .collect();
    let (evaluated, _) =
        evaluate_profile_cost(&trace, &trip, &PriceFunction::Uniform(lambda), 1.0).unwrap();
    assert!(
        (evaluated.cost - traj.cost).abs() <= 0.01 * traj.cost.abs(),
        "evaluated {} vs planned {}",
        evaluated.cost,
        traj.cost
    );
}

#[test]
fn min_work_beats_random_feasible_profiles() {
    use rand::{Rng, SeedableRng};
    let trip = single_leg_trip();
    let base = min_work_profile(&trip, &fast_config()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let nlp = transcribe_leg(
        &trip.train,
        &trip.grade,
        0.0,
        10_000.0,
        trip.departure_time(0),
        trip.arrival_time(1),
        &PriceFunction::Uniform(1.0),
        5.0,
    )
    .unwrap();
    let mut beaten = 0;
    for _ in 0..100 {
        // Jitter the reference solution, rescale to keep the terminal
        // position feasible, and compare work.
        let mut v = base.leg_speeds[0].clone();
        for vi in v.iter_mut().skip(1).take(nlp.n - 1) {
            *vi = (*vi * (1.0 + rng.gen_range(-0.15..0.15))).clamp(0.0, nlp.v_limit);
        }
        let eval = nlp.evaluate(&v);
        let scale = nlp.length / eval.x[nlp.n];
        for vi in v.iter_mut() {
            *vi = (*vi * scale).clamp(0.0, nlp.v_limit);
        }
        let eval = nlp.evaluate(&v);
        if (eval.x[nlp.n] - nlp.length).abs() > 1e-3 * nlp.length {
            continue;
        }
        let work: f64 = eval
            .power
            .iter()
            .map(|p| p.max(0.0) * nlp.dt)
            .sum();
        assert!(
            base.work <= work * (1.0 + 1e-6),
            "random profile beat min-work: {} vs {}",
            work,
            base.work
        );
        beaten += 1;
    }
    assert!(beaten >= 50, "only {beaten} comparable profiles generated");
}
