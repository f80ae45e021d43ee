//! Shared domain types: horizon grid, track sections, agents, trains,
//! timetables and grade profiles. All quantities are SI internally
//! (W, J, s, m, kg, $/J). Scenario files use kW / $-per-kWh / $-per-MWh
//! and are converted on load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, m/s^2.
pub const G: f64 = 9.806_65;
/// Exact conversion, 1 MWh = 3.6e9 J.
pub const J_PER_MWH: f64 = 3.6e9;
/// Exact conversion, 1 kWh = 3.6e6 J.
pub const J_PER_KWH: f64 = 3.6e6;

pub fn usd_per_mwh_to_usd_per_j(p: f64) -> f64 {
    p / J_PER_MWH
}

pub fn usd_per_j_to_usd_per_mwh(p: f64) -> f64 {
    p * J_PER_MWH
}

/// Rolling dispatch horizon of `num_intervals` half-open intervals of
/// equal length. Interval indices are 1-based; interval `k` covers
/// `[start + (k-1)*len, start + k*len)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonGrid {
    start: f64,
    num_intervals: usize,
    interval_len: f64,
}

impl HorizonGrid {
    pub fn new(start: f64, num_intervals: usize, interval_len: f64) -> Result<Self> {
        if num_intervals < 1 {
            return Err(Error::invalid("horizon must have at least one interval"));
        }
        if !(interval_len > 0.0) {
            return Err(Error::invalid(format!(
                "interval length must be positive, got {interval_len}"
            )));
        }
        Ok(HorizonGrid {
            start,
            num_intervals,
            interval_len,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    pub fn interval_len(&self) -> f64 {
        self.interval_len
    }

    pub fn end(&self) -> f64 {
        self.start + self.num_intervals as f64 * self.interval_len
    }

    /// 1-based interval index containing `t`. Total on `[start, end)`.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        if t < self.start || t >= self.end() {
            return Err(Error::OutOfRange(format!(
                "time {t} outside horizon [{}, {})",
                self.start,
                self.end()
            )));
        }
        let k = ((t - self.start) / self.interval_len) as usize + 1;
        Ok(k.min(self.num_intervals))
    }

    /// Like `interval_of`, but clamps times beyond the horizon to the
    /// first/last interval (held-price proxy for trains running past
    /// the dispatch window).
    pub fn interval_of_clamped(&self, t: f64) -> usize {
        if t < self.start {
            1
        } else if t >= self.end() {
            self.num_intervals
        } else {
            self.interval_of(t).unwrap()
        }
    }

    /// `[t_start, t_end)` of 1-based interval `k`.
    pub fn interval_span(&self, k: usize) -> (f64, f64) {
        debug_assert!(k >= 1 && k <= self.num_intervals);
        let t0 = self.start + (k - 1) as f64 * self.interval_len;
        (t0, t0 + self.interval_len)
    }

    /// Horizon shifted by one interval, same length.
    pub fn advanced(&self) -> HorizonGrid {
        HorizonGrid {
            start: self.start + self.interval_len,
            ..*self
        }
    }
}

/// One contiguous railway power section with a single marginal price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccDescriptor {
    pub id: usize,
    /// Position span [start_m, end_m] along the track.
    pub start_m: f64,
    pub end_m: f64,
}

impl AccDescriptor {
    pub fn len(&self) -> f64 {
        self.end_m - self.start_m
    }
}

/// Validates that ACC spans are ordered, contiguous and non-degenerate.
pub fn validate_track(track: &[AccDescriptor]) -> Result<()> {
    if track.is_empty() {
        return Err(Error::invalid("track must have at least one ACC"));
    }
    for (i, acc) in track.iter().enumerate() {
        if !(acc.end_m > acc.start_m) {
            return Err(Error::invalid(format!(
                "ACC {} has degenerate span [{}, {}]",
                acc.id, acc.start_m, acc.end_m
            )));
        }
        if i > 0 {
            let prev = &track[i - 1];
            if (acc.start_m - prev.end_m).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "ACC {} does not start where ACC {} ends ({} vs {})",
                    acc.id, prev.id, acc.start_m, prev.end_m
                )));
            }
        }
    }
    Ok(())
}

/// Returns the 1-based index of the ACC claiming position `x`.
/// Spans are half-open on the right except the final ACC, which is
/// closed so the terminus belongs to it.
pub fn acc_of_position(track: &[AccDescriptor], x: f64) -> Result<usize> {
    let first = track.first().ok_or_else(|| Error::invalid("empty track"))?;
    let last = track.last().unwrap();
    if x < first.start_m || x > last.end_m {
        return Err(Error::OutOfRange(format!(
            "position {x} outside track extent [{}, {}]",
            first.start_m, last.end_m
        )));
    }
    for (i, acc) in track.iter().enumerate() {
        if x < acc.end_m || i == track.len() - 1 {
            return Ok(i + 1);
        }
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Heating,
    ElectricGen,
    Cogeneration,
    NetworkConnection,
}

/// A dispatchable energy agent. The setpoint profile `y` is per-interval
/// energy in J; conversion coefficients map it to electric and thermal
/// output. Cost coefficients are in $ / $-per-J / $-per-J^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchableAgent {
    pub id: String,
    pub kind: AgentKind,
    pub d_e: Vec<f64>,
    pub d_th: Vec<f64>,
    pub cost_a: Vec<f64>,
    pub cost_b: Vec<f64>,
    pub cost_c: Vec<f64>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
}

impl DispatchableAgent {
    /// Constant-coefficient agent over `m` intervals.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        id: impl Into<String>,
        kind: AgentKind,
        m: usize,
        d_e: f64,
        d_th: f64,
        b: f64,
        c: f64,
        y_min: f64,
        y_max: f64,
    ) -> Self {
        DispatchableAgent {
            id: id.into(),
            kind,
            d_e: vec![d_e; m],
            d_th: vec![d_th; m],
            cost_a: vec![0.0; m],
            cost_b: vec![b; m],
            cost_c: vec![c; m],
            y_min: vec![y_min; m],
            y_max: vec![y_max; m],
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.d_e.len()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        for (name, v) in [
            ("d_e", &self.d_e),
            ("d_th", &self.d_th),
            ("cost_a", &self.cost_a),
            ("cost_b", &self.cost_b),
            ("cost_c", &self.cost_c),
            ("y_min", &self.y_min),
            ("y_max", &self.y_max),
        ] {
            if v.len() != m {
                return Err(Error::invalid(format!(
                    "agent {}: profile {name} has length {}, expected {m}",
                    self.id,
                    v.len()
                )));
            }
        }
        for k in 0..m {
            if self.cost_c[k] < 0.0 {
                return Err(Error::invalid(format!(
                    "agent {}: c[{k}] = {} violates convexity",
                    self.id, self.cost_c[k]
                )));
            }
            if self.y_min[k] > self.y_max[k] {
                return Err(Error::invalid(format!(
                    "agent {}: y_min[{k}] > y_max[{k}]",
                    self.id
                )));
            }
            if self.d_e[k] == 0.0 && self.d_th[k] == 0.0 {
                return Err(Error::invalid(format!(
                    "agent {}: d_e and d_th both zero at interval {k}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// One set of forecast profiles, per-interval energy in J.
/// Renewable generation is >= 0, loads are <= 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileSet {
    pub renewable: Vec<f64>,
    pub electric: Vec<f64>,
    pub thermal: Vec<f64>,
}

impl ProfileSet {
    pub fn zeros(m: usize) -> Self {
        ProfileSet {
            renewable: vec![0.0; m],
            electric: vec![0.0; m],
            thermal: vec![0.0; m],
        }
    }

    pub fn validate(&self, m: usize, ctx: &str) -> Result<()> {
        for (name, v) in [
            ("renewable", &self.renewable),
            ("electric", &self.electric),
            ("thermal", &self.thermal),
        ] {
            if v.len() != m {
                return Err(Error::invalid(format!(
                    "{ctx}: {name} profile has length {}, expected {m}",
                    v.len()
                )));
            }
        }
        if self.renewable.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!("{ctx}: renewable profile < 0")));
        }
        if self.electric.iter().any(|&p| p > 0.0) {
            return Err(Error::invalid(format!(
                "{ctx}: electric load profile must be <= 0"
            )));
        }
        if self.thermal.iter().any(|&p| p > 0.0) {
            return Err(Error::invalid(format!(
                "{ctx}: thermal load profile must be <= 0"
            )));
        }
        Ok(())
    }
}

/// Passive (non-dispatched) profiles, one `ProfileSet` per forecast
/// instance j. The last set is held once the sequence is exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassiveProfiles {
    pub by_instance: Vec<ProfileSet>,
}

impl PassiveProfiles {
    pub fn constant(set: ProfileSet) -> Self {
        PassiveProfiles {
            by_instance: vec![set],
        }
    }

    /// Profiles for forecast instance `j` (1-based), holding the last.
    pub fn at_instance(&self, j: usize) -> &ProfileSet {
        let idx = j.saturating_sub(1).min(self.by_instance.len() - 1);
        &self.by_instance[idx]
    }

    pub fn validate(&self, m: usize, ctx: &str) -> Result<()> {
        if self.by_instance.is_empty() {
            return Err(Error::invalid(format!("{ctx}: no forecast instances")));
        }
        for (j, set) in self.by_instance.iter().enumerate() {
            set.validate(m, &format!("{ctx} (instance {})", j + 1))?;
        }
        Ok(())
    }
}

/// Physical parameters of one train consist. Davis coefficients are
/// per-consist totals; the traction envelope is the two-regime
/// constant-force / constant-power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub mass: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub davis_a: f64,
    pub davis_b: f64,
    pub davis_c: f64,
    /// Constant-force ceiling of the traction envelope, N.
    pub f_max_const: f64,
    /// Constant-force floor (braking), N, negative.
    pub f_min_const: f64,
    /// Low-speed regularization of the P/v envelope, m/s.
    pub v_eps: f64,
    /// Traction and regeneration efficiencies; both 1 by default.
    pub eta_traction: f64,
    pub eta_regen: f64,
}

impl TrainSpec {
    /// Spec with the envelope's constant-force region sized so `a_max`
    /// is achievable at standstill under full load.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mass: f64,
        p_max: f64,
        p_min: f64,
        a_min: f64,
        a_max: f64,
        v_max: f64,
        davis_a: f64,
        davis_b: f64,
        davis_c: f64,
    ) -> Result<Self> {
        let spec = TrainSpec {
            mass,
            p_max,
            p_min,
            a_min,
            a_max,
            v_max,
            davis_a,
            davis_b,
            davis_c,
            f_max_const: mass * a_max + davis_a,
            f_min_const: mass * a_min - davis_a,
            v_eps: 0.5,
            eta_traction: 1.0,
            eta_regen: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::invalid("train mass must be positive"));
        }
        if !(self.p_min < 0.0 && self.p_max > 0.0) {
            return Err(Error::invalid("train power limits must straddle zero"));
        }
        if !(self.a_min < 0.0 && self.a_max > 0.0) {
            return Err(Error::invalid(
                "train acceleration limits must straddle zero",
            ));
        }
        if self.davis_a < 0.0 || self.davis_b < 0.0 || self.davis_c < 0.0 {
            return Err(Error::invalid("Davis coefficients must be non-negative"));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::invalid("v_max must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub name: String,
    pub position: f64,
    /// Earliest allowed arrival, s.
    pub earliest_arrival: f64,
    /// Latest allowed departure, s.
    pub latest_departure: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timetable {
    pub stations: Vec<Station>,
}

impl Timetable {
    pub fn validate(&self) -> Result<()> {
        if self.stations.len() < 2 {
            return Err(Error::invalid("timetable needs at least two stations"));
        }
        for w in self.stations.windows(2) {
            if !(w[1].position > w[0].position) {
                return Err(Error::invalid(format!(
                    "station positions must be strictly increasing ({} -> {})",
                    w[0].name, w[1].name
                )));
            }
        }
        for s in &self.stations {
            if s.earliest_arrival + s.dwell > s.latest_departure + 1e-9 {
                return Err(Error::invalid(format!(
                    "station {}: earliest arrival + dwell exceeds latest departure",
                    s.name
                )));
            }
        }
        Ok(())
    }

    pub fn num_legs(&self) -> usize {
        self.stations.len() - 1
    }
}

/// Piecewise-linear track grade angle alpha(x), radians vs position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeProfile {
    /// (x_m, alpha_rad) breakpoints, x strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl GradeProfile {
    pub fn level() -> Self {
        GradeProfile {
            points: vec![(0.0, 0.0)],
        }
    }

    pub fn is_level(&self) -> bool {
        self.points.iter().all(|&(_, a)| a == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("grade profile must have at least one point"));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("grade breakpoints must be increasing in x"));
            }
        }
        if self.points.iter().any(|&(_, a)| a.abs() >= 0.2) {
            return Err(Error::invalid("grade angle exceeds 0.2 rad sanity bound"));
        }
        Ok(())
    }

    /// Angle at position `x`; held constant beyond the breakpoints.
    pub fn angle(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|&(px, _)| px <= x);
        let (x0, a0) = pts[i - 1];
        let (x1, a1) = pts[i];
        a0 + (a1 - a0) * (x - x0) / (x1 - x0)
    }

    /// d(alpha)/dx at `x` (piecewise constant; 0 beyond the ends).
    pub fn angle_slope(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 || x >= pts[pts.len() - 1].0 {
            return 0.0;
        }
        let i = pts.partition_point(|&(px, _)| px <= x);
        let (x0, a0) = pts[i - 1];
        let (x1, a1) = pts[i];
        (a1 - a0) / (x1 - x0)
    }
}
