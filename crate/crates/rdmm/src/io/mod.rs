//! Scenario schema, CSV ingestion (price series, GPS traces), the
//! Northeast Corridor case-study builders and result writers.
//!
//! All scenario values are stored in SI units: energy in J, prices in
//! $/J, power in W. The CSV loaders convert from $/MWh at the door.

mod report;

pub use report::write_report;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dispatch::StepSizes;
use crate::dynamics::KinematicSample;
use crate::error::{Error, Result};
use crate::model::{
    validate_track, AccDescriptor, AgentKind, DispatchableAgent, GradeProfile, HorizonGrid,
    PassiveProfiles, Station, Timetable, TrainSpec, J_PER_MWH,
};
use crate::train::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed for a full run: grid, track, per-ACC agents and
/// profiles, trains, and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub description: String,
    pub seed: u64,
    pub horizon: HorizonGrid,
    pub track: Vec<AccDescriptor>,
    pub grade: GradeProfile,
    pub accs: Vec<AccConfig>,
    pub trains: Vec<TrainRun>,
    /// Curvature floor for network-connection agents, $/J^2.
    pub c_min: f64,
    #[serde(default)]
    pub steps: StepSizes,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// One ACC's dispatchable agents, passive profiles and external market
/// price series ($/J per interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccConfig {
    pub acc_id: usize,
    pub agents: Vec<DispatchableAgent>,
    pub passive: PassiveProfiles,
    pub network_price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub id: String,
    pub spec: TrainSpec,
    pub timetable: Timetable,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!(
                    "unsupported version {} (this build reads {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let m = self.horizon.num_intervals();
        validate_track(&self.track).map_err(at("track"))?;
        self.grade.validate().map_err(at("grade"))?;
        if !(self.c_min > 0.0) {
            return Err(Error::schema("c_min", "must be strictly positive"));
        }
        self.steps.validate().map_err(at("steps"))?;

        if self.accs.len() != self.track.len() {
            return Err(Error::schema(
                "accs",
                format!(
                    "{} ACC configs for {} track sections",
                    self.accs.len(),
                    self.track.len()
                ),
            ));
        }
        for (i, acc) in self.accs.iter().enumerate() {
            let path = format!("accs[{i}]");
            if acc.acc_id != self.track[i].id {
                return Err(Error::schema(
                    format!("{path}.acc_id"),
                    format!("expected track id {}", self.track[i].id),
                ));
            }
            if acc.agents.is_empty() {
                return Err(Error::schema(format!("{path}.agents"), "no agents"));
            }
            let mut seen = std::collections::HashSet::new();
            for (ai, agent) in acc.agents.iter().enumerate() {
                agent
                    .validate(m)
                    .map_err(at(format!("{path}.agents[{ai}]")))?;
                if !seen.insert(agent.id.clone()) {
                    return Err(Error::schema(
                        format!("{path}.agents[{ai}].id"),
                        format!("duplicate agent id {}", agent.id),
                    ));
                }
            }
            acc.passive
                .validate(m, &format!("{path}.passive"))
                .map_err(at(format!("{path}.passive")))?;
            if acc.network_price.len() != m {
                return Err(Error::schema(
                    format!("{path}.network_price"),
                    format!("length {} but M = {m}", acc.network_price.len()),
                ));
            }
        }

        let extent = (
            self.track.first().unwrap().start_m,
            self.track.last().unwrap().end_m,
        );
        for (ti, train) in self.trains.iter().enumerate() {
            let path = format!("trains[{ti}]");
            train.spec.validate().map_err(at(format!("{path}.spec")))?;
            train
                .timetable
                .validate()
                .map_err(at(format!("{path}.timetable")))?;
            for s in &train.timetable.stations {
                if s.position < extent.0 - 1e-9 || s.position > extent.1 + 1e-9 {
                    return Err(Error::schema(
                        format!("{path}.timetable"),
                        format!(
                            "station {} at {} m is outside the track [{}, {}]",
                            s.name, s.position, extent.0, extent.1
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::Schema { path: p, message } => Error::Schema {
            path: format!("{path}.{p}"),
            message,
        },
        other => Error::schema(path, other.to_string()),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| Error::schema("$", e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    scenario.validate()?;
    let mut text = serde_json::to_string_pretty(scenario)?;
    text.push('\n');
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

/// Timestamped external market prices for one ACC, $/J.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    /// (timestamp s, price $/J), strictly increasing in time.
    pub points: Vec<(f64, f64)>,
}

impl PriceSeries {
    pub fn constant(price_per_j: f64) -> Self {
        PriceSeries {
            points: vec![(0.0, price_per_j)],
        }
    }

    /// Piecewise-constant (previous-point) price at time `t`.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|&(ts, _)| ts <= t);
        self.points[idx.saturating_sub(1).min(self.points.len() - 1)].1
    }

    /// Per-interval profile over `grid`, sampling interval starts.
    /// Errors when the series does not cover the horizon.
    pub fn profile(&self, grid: &HorizonGrid) -> Result<Vec<f64>> {
        let start = grid.start();
        let end = grid.end();
        let first = self.points.first().unwrap().0;
        let last = self.points.last().unwrap().0;
        // A single point is a constant price with unlimited coverage.
        if self.points.len() > 1 && (first > start || last < end - grid.interval_len()) {
            return Err(Error::invalid(format!(
                "price series covers [{first}, {last}] s but the horizon needs [{start}, {end}) s"
            )));
        }
        Ok((1..=grid.num_intervals())
            .map(|k| self.at(grid.interval_span(k).0))
            .collect())
    }
}

/// Reads a `timestamp_s,price_usd_per_mwh` CSV into a PriceSeries in
/// $/J. Row numbers in errors count from 1 including the header.
pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    {
        let headers = reader.headers()?;
        let expect = ["timestamp_s", "price_usd_per_mwh"];
        if headers.len() != 2 || headers.iter().zip(expect).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {expect:?}, found {headers:?}"),
            });
        }
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let parse = |field: usize, name: &str| -> Result<f64> {
            record
                .get(field)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("{name}: {e}"),
                })
        };
        let ts = parse(0, "timestamp_s")?;
        let price = parse(1, "price_usd_per_mwh")?;
        if !ts.is_finite() || !price.is_finite() {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        if let Some(&(prev, _)) = points.last() {
            if ts <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp {ts} not after previous {prev}"),
                });
            }
        }
        points.push((ts, price / J_PER_MWH));
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "price series is empty".into(),
        });
    }
    Ok(PriceSeries { points })
}

/// Reads a `t_s,x_m,v_mps` GPS trace CSV: at least 10 samples, strictly
/// increasing time. Speeds get a centered moving-average smoothing
/// (window 5) before accelerations are formed by central differences.
/// Negative smoothed speeds are clamped to zero with a warning count.
pub fn load_gps_trace(path: impl AsRef<Path>) -> Result<Vec<KinematicSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    {
        let headers = reader.headers()?;
        let expect = ["t_s", "x_m", "v_mps"];
        if headers.len() != 3 || headers.iter().zip(expect).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {expect:?}, found {headers:?}"),
            });
        }
    }
    let mut raw: Vec<(f64, f64, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("{name}: {e}"),
                })
        };
        let t = field(0, "t_s")?;
        let x = field(1, "x_m")?;
        let v = field(2, "v_mps")?;
        if let Some(&(prev, _, _)) = raw.last() {
            if t <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("t {t} not after previous {prev}"),
                });
            }
        }
        raw.push((t, x, v));
    }
    if raw.len() < 10 {
        return Err(Error::invalid(format!(
            "GPS trace has {} samples; at least 10 required",
            raw.len()
        )));
    }

    // Centered moving average over the speed channel.
    let window = 5usize;
    let half = window / 2;
    let n = raw.len();
    let mut v_smooth = vec![0.0; n];
    let mut clamped = 0usize;
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mean = raw[lo..=hi].iter().map(|r| r.2).sum::<f64>() / (hi - lo + 1) as f64;
        if mean < 0.0 {
            clamped += 1;
            v_smooth[i] = 0.0;
        } else {
            v_smooth[i] = mean;
        }
    }
    if clamped > 0 {
        log::warn!("load_gps_trace: clamped {clamped} negative smoothed speeds to 0");
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let span = raw[hi].0 - raw[lo].0;
        let a = if span > 0.0 {
            (v_smooth[hi] - v_smooth[lo]) / span
        } else {
            0.0
        };
        out.push(KinematicSample {
            t: raw[i].0,
            x: raw[i].1,
            v: v_smooth[i],
            a,
        });
    }
    Ok(out)
}

/// Geometry and timing knobs for the Northeast Corridor scenario.
/// Station chainages are straight-line-scaled approximations; the
/// paper provides a map, not exact distances.
#[derive(Debug, Clone, PartialEq)]
pub struct NecOptions {
    pub num_intervals: usize,
    pub interval_len: f64,
    /// ACC section lengths in m, University Park -> New Haven.
    pub acc_lengths: [f64; 4],
    /// Providence and New Haven chainages, m.
    pub providence_m: f64,
    pub new_haven_m: f64,
    /// Leg travel times, s.
    pub leg1_duration: f64,
    pub leg2_duration: f64,
    pub dwell: f64,
    pub seed: u64,
}

impl Default for NecOptions {
    fn default() -> Self {
        NecOptions {
            num_intervals: 12,
            interval_len: 300.0,
            acc_lengths: [60_000.0, 60_000.0, 60_000.0, 50_000.0],
            providence_m: 70_000.0,
            new_haven_m: 230_000.0,
            leg1_duration: 2_100.0,
            leg2_duration: 3_300.0,
            dwell: 120.0,
            seed: 0,
        }
    }
}

const ACELA: (f64, f64, f64, f64, f64, f64, f64, f64, f64) = (
    545_000.0, 9.2e6, -6.0e6, -0.5, 0.5, 66.67, 10195.16, 65.81, 25.02,
);

pub fn acela_spec() -> TrainSpec {
    let (m, p_max, p_min, a_min, a_max, v_max, da, db, dc) = ACELA;
    TrainSpec::new(m, p_max, p_min, a_min, a_max, v_max, da, db, dc).unwrap()
}

/// Builds the four-ACC Northeast Corridor scenario from Table 1 of the
/// case study: ACC1 {H1, C1, N1}, ACC2 {H2, C2, N2}, ACC3 {N3},
/// ACC4 {N4}, with one Acela run University Park -> Providence ->
/// New Haven. One price series per ACC, in order.
pub fn build_nec_scenario(prices: &[PriceSeries], options: &NecOptions) -> Result<Scenario> {
    if prices.len() != 4 {
        return Err(Error::invalid(format!(
            "NEC scenario needs 4 price series, got {} (one per ACC)",
            prices.len()
        )));
    }
    let grid = HorizonGrid::new(0.0, options.num_intervals, options.interval_len)?;
    let m = options.num_intervals;
    let delta = options.interval_len;

    let mut track = Vec::new();
    let mut x0 = 0.0;
    for (i, len) in options.acc_lengths.iter().enumerate() {
        track.push(AccDescriptor {
            id: i + 1,
            start_m: x0,
            end_m: x0 + len,
        });
        x0 += len;
    }

    // Table 1 units: capacities kW, b in $/kWh; converted to J and $/J.
    let kwh = crate::model::J_PER_KWH;
    let cap = |kw: f64| kw * 1e3 * delta;
    let c_min_per_j2 = 1e-22;
    let boiler = |id: &str, kw: f64| {
        DispatchableAgent::uniform(id, AgentKind::Heating, m, 0.0, 1.0, 0.0303 / kwh, c_min_per_j2, 0.0, cap(kw))
    };
    let cogen = |id: &str, kw: f64, d_th: f64, b_kwh: f64| {
        DispatchableAgent::uniform(id, AgentKind::Cogeneration, m, 1.0, d_th, b_kwh / kwh, c_min_per_j2, 0.0, cap(kw))
    };
    let network = |id: &str| {
        DispatchableAgent::uniform(
            id,
            AgentKind::NetworkConnection,
            m,
            1.0,
            0.0,
            0.0,
            c_min_per_j2,
            -cap(10_000.0),
            cap(10_000.0),
        )
    };

    let agent_sets: Vec<Vec<DispatchableAgent>> = vec![
        vec![boiler("H1", 10_432.0), cogen("C1", 1_550.0, 1.02, 0.0629), network("N1")],
        vec![boiler("H2", 20_864.0), cogen("C2", 4_560.0, 2.0, 0.0818), network("N2")],
        vec![network("N3")],
        vec![network("N4")],
    ];

    let mut accs = Vec::new();
    for (i, agents) in agent_sets.into_iter().enumerate() {
        let profile = prices[i].profile(&grid).map_err(|e| {
            Error::invalid(format!("price series for ACC {}: {e}", i + 1))
        })?;
        accs.push(AccConfig {
            acc_id: i + 1,
            agents,
            passive: PassiveProfiles::constant(crate::model::ProfileSet::zeros(m)),
            network_price: profile,
        });
    }

    let dwell = options.dwell;
    let timetable = Timetable {
        stations: vec![
            Station {
                name: "University Park".into(),
                position: 0.0,
                earliest_arrival: -dwell,
                latest_departure: 60.0,
                dwell,
            },
            Station {
                name: "Providence".into(),
                position: options.providence_m,
                earliest_arrival: options.leg1_duration,
                latest_departure: options.leg1_duration + dwell + 60.0,
                dwell,
            },
            Station {
                name: "New Haven".into(),
                position: options.new_haven_m,
                earliest_arrival: options.leg1_duration + dwell + options.leg2_duration,
                latest_departure: options.leg1_duration + dwell + options.leg2_duration + dwell,
                dwell,
            },
        ],
    };

    let scenario = Scenario {
        schema_version: SCHEMA_VERSION,
        description: "Northeast Corridor case study: 4 ACCs, 8 agents, one Acela run".into(),
        seed: options.seed,
        horizon: grid,
        track,
        grade: GradeProfile::level(),
        accs,
        trains: vec![TrainRun {
            id: "acela-2155".into(),
            spec: acela_spec(),
            timetable,
        }],
        c_min: c_min_per_j2,
        steps: StepSizes {
            tol_y: 1e-12,
            tol_lambda: 1e-12,
            ..StepSizes::default()
        },
        solver: SolverConfig {
            seed: options.seed,
            ..SolverConfig::default()
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Compact NEC-shaped scenario for fast end-to-end runs: 30 km of
/// track split into four 7.5 km ACCs with alternating cheap/expensive
/// prices (20 vs 100 $/MWh), three 10 km legs, M = 12 intervals of
/// 120 s. Network-connection agents only.
pub fn build_nec_mini_scenario() -> Scenario {
    let m = 12;
    let delta = 120.0;
    let grid = HorizonGrid::new(0.0, m, delta).unwrap();
    let span = 7_500.0;
    let track: Vec<AccDescriptor> = (0..4)
        .map(|i| AccDescriptor {
            id: i + 1,
            start_m: span * i as f64,
            end_m: span * (i + 1) as f64,
        })
        .collect();

    let c_min = 1e-22;
    let prices_mwh = [20.0, 100.0, 20.0, 100.0];
    let accs = (0..4)
        .map(|i| {
            let price = prices_mwh[i] / J_PER_MWH;
            AccConfig {
                acc_id: i + 1,
                agents: vec![DispatchableAgent::uniform(
                    format!("N{}", i + 1),
                    AgentKind::NetworkConnection,
                    m,
                    1.0,
                    0.0,
                    price,
                    c_min,
                    -20e6 * delta,
                    20e6 * delta,
                )],
                passive: PassiveProfiles::constant(crate::model::ProfileSet::zeros(m)),
                network_price: vec![price; m],
            }
        })
        .collect();

    let dwell = 60.0;
    let stations = [0.0, 10_000.0, 20_000.0, 30_000.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| Station {
            name: format!("S{i}"),
            position: x,
            earliest_arrival: 460.0 * i as f64 - dwell,
            latest_departure: 460.0 * i as f64 + 60.0,
            dwell,
        })
        .collect();

    Scenario {
        schema_version: SCHEMA_VERSION,
        description: "Synthetic NEC-shaped scenario: 4 ACCs, alternating 20/100 $/MWh".into(),
        seed: 0,
        horizon: grid,
        track,
        grade: GradeProfile::level(),
        accs,
        trains: vec![TrainRun {
            id: "train-1".into(),
            spec: acela_spec(),
            timetable: Timetable { stations },
        }],
        c_min,
        steps: StepSizes {
            tol_y: 1e-12,
            tol_lambda: 1e-12,
            ..StepSizes::default()
        },
        solver: SolverConfig::default(),
    }
}

#[cfg(test)]
mod tests;
