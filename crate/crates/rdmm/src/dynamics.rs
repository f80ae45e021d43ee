//! Train free-body model: Davis resistance, traction envelope, inverse
//! dynamics (kinematics to traction force and electrical power) and a
//! forward ODE integrator used to validate optimized trajectories.

use crate::error::{Error, Result};
use crate::model::{GradeProfile, TrainSpec, G};

/// One sample of a train path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

/// Force balance at one sample. `traction` is signed (negative while
/// braking), `resistance` opposes motion and is non-negative,
/// `grade` is m g sin(alpha). `power` is the electrical power, signed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBreakdown {
    pub traction: f64,
    pub resistance: f64,
    pub grade: f64,
    pub power: f64,
    /// True when traction or power exceeds the envelope of the spec.
    pub exceeds_limits: bool,
}

/// Davis running resistance A + B v + C v^2, N.
pub fn davis_force(spec: &TrainSpec, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::invalid(format!("davis_force: v = {v} < 0")));
    }
    Ok(spec.davis_a + spec.davis_b * v + spec.davis_c * v * v)
}

/// Traction envelope (floor, ceiling) at speed `v`, N. The ceiling is
/// the constant-force region capped by the power hyperbola; the speed
/// is regularized below `v_eps` so both bounds stay finite at rest.
pub fn traction_limits(spec: &TrainSpec, v: f64) -> (f64, f64) {
    let v_reg = v.max(spec.v_eps);
    let upper = spec.f_max_const.min(spec.p_max / v_reg);
    let lower = spec.f_min_const.max(spec.p_min / v_reg);
    (lower, upper)
}

/// Inverse dynamics: traction force and electrical power needed to
/// realize one kinematic sample. Envelope violations are flagged, never
/// clipped.
pub fn power_from_kinematics(
    spec: &TrainSpec,
    grade: &GradeProfile,
    s: &KinematicSample,
) -> Result<ForceBreakdown> {
    let resistance = davis_force(spec, s.v)?;
    let grade_force = spec.mass * G * grade.angle(s.x).sin();
    let traction = spec.mass * s.a + resistance + grade_force;
    let mech = traction * s.v;
    let power = if mech >= 0.0 {
        mech / spec.eta_traction
    } else {
        mech * spec.eta_regen
    };
    let (f_lo, f_hi) = traction_limits(spec, s.v);
    let exceeds_limits = traction < f_lo - 1e-9
        || traction > f_hi + 1e-9
        || power > spec.p_max + 1e-6
        || power < spec.p_min - 1e-6;
    Ok(ForceBreakdown {
        traction,
        resistance,
        grade: grade_force,
        power,
        exceeds_limits,
    })
}

/// Semi-implicit Euler integration of the equation of motion under a
/// stepwise traction force profile. Speed is clamped at zero (a train
/// does not roll backwards under resistance alone).
pub fn integrate_forward(
    spec: &TrainSpec,
    grade: &GradeProfile,
    traction: &[f64],
    x0: f64,
    v0: f64,
    dt: f64,
) -> Result<Vec<KinematicSample>> {
    if !(dt > 0.0) {
        return Err(Error::invalid("integrate_forward: dt must be positive"));
    }
    if traction.iter().any(|f| !f.is_finite()) {
        return Err(Error::invalid(
            "integrate_forward: non-finite traction force",
        ));
    }
    if !(v0 >= 0.0) {
        return Err(Error::invalid("integrate_forward: v0 < 0"));
    }
    let mut out = Vec::with_capacity(traction.len() + 1);
    let mut x = x0;
    let mut v = v0;
    for (k, &f_t) in traction.iter().enumerate() {
        let resistance = davis_force(spec, v)?;
        let grade_force = spec.mass * G * grade.angle(x).sin();
        let a = (f_t - resistance - grade_force) / spec.mass;
        out.push(KinematicSample {
            t: k as f64 * dt,
            x,
            v,
            a,
        });
        let mut v_next = v + a * dt;
        if v_next < 0.0 {
            log::warn!("integrate_forward: speed clamped to 0 at t = {}", k as f64 * dt);
            v_next = 0.0;
        }
        x += v_next * dt;
        v = v_next;
    }
    out.push(KinematicSample {
        t: traction.len() as f64 * dt,
        x,
        v,
        a: 0.0,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acela() -> TrainSpec {
        TrainSpec::new(
            545_000.0, 9.2e6, -6.0e6, -0.5, 0.5, 66.67, 10195.16, 65.81, 25.02,
        )
        .unwrap()
    }

    #[test]
    fn davis_hand_values() {
        let s = acela();
        assert!((davis_force(&s, 0.0).unwrap() - 10195.16).abs() < 1e-9);
        assert!((davis_force(&s, 20.0).unwrap() - 21519.36).abs() < 1e-9);
        let at_vmax = davis_force(&s, 66.67).unwrap();
        assert!((at_vmax - 125_794.0).abs() < 10.0, "at v_max: {at_vmax}");
        assert!(davis_force(&s, -1.0).is_err());
    }

    #[test]
    fn davis_strictly_increasing() {
        let s = acela();
        let mut prev = davis_force(&s, 0.0).unwrap();
        for i in 1..=100 {
            let f = davis_force(&s, i as f64 * 0.7).unwrap();
            assert!(f > prev);
            prev = f;
        }
    }

    #[test]
    fn envelope_regimes() {
        let s = acela();
        // Power-limited at speed.
        let (_, hi) = traction_limits(&s, 60.0);
        assert!((hi - 9.2e6 / 60.0).abs() < 1e-6);
        // Finite constant-force bound at rest.
        let (lo0, hi0) = traction_limits(&s, 0.0);
        assert!((hi0 - s.f_max_const).abs() < 1e-9);
        assert!(lo0.is_finite() && lo0 < 0.0);
        // Large speed: approaches P/v.
        let (lo, hi) = traction_limits(&s, 200.0);
        assert!((hi - 9.2e6 / 200.0).abs() < 1e-9);
        assert!((lo - (-6.0e6 / 200.0)).abs() < 1e-9);
    }

    #[test]
    fn cruise_power() {
        let s = acela();
        let grade = GradeProfile::level();
        let fb = power_from_kinematics(
            &s,
            &grade,
            &KinematicSample {
                t: 0.0,
                x: 0.0,
                v: 20.0,
                a: 0.0,
            },
        )
        .unwrap();
        assert!((fb.traction - 21519.36).abs() < 1e-9);
        assert!((fb.power - 21519.36 * 20.0).abs() < 1e-6);
        assert!(!fb.exceeds_limits);
        // Newton balance.
        assert!((fb.traction - fb.resistance - fb.grade).abs() < 1e-9);
    }

    #[test]
    fn at_rest_zero_power() {
        let s = acela();
        let fb = power_from_kinematics(
            &s,
            &GradeProfile::level(),
            &KinematicSample {
                t: 0.0,
                x: 0.0,
                v: 0.0,
                a: 0.0,
            },
        )
        .unwrap();
        assert!((fb.traction - s.davis_a).abs() < 1e-9);
        assert_eq!(fb.power, 0.0);
    }

    #[test]
    fn hard_braking_flags_regen_limit() {
        let s = acela();
        let fb = power_from_kinematics(
            &s,
            &GradeProfile::level(),
            &KinematicSample {
                t: 0.0,
                x: 0.0,
                v: 30.0,
                a: -0.5,
            },
        )
        .unwrap();
        // -272500 + 10195.16 + 65.81*30 + 25.02*900 = -237812.54 N.
        assert!((fb.traction - (-237_812.54)).abs() < 1e-6, "F = {}", fb.traction);
        assert!((fb.power - (-237_812.54 * 30.0)).abs() < 1e-3);
        assert!(fb.power < -6.0e6);
        assert!(fb.exceeds_limits);
    }

    #[test]
    fn grade_force_sign() {
        let s = acela();
        let uphill = GradeProfile {
            points: vec![(0.0, 0.01)],
        };
        let fb = power_from_kinematics(
            &s,
            &uphill,
            &KinematicSample {
                t: 0.0,
                x: 100.0,
                v: 10.0,
                a: 0.0,
            },
        )
        .unwrap();
        assert!(fb.grade > 0.0);
        assert!(fb.traction > fb.resistance);
    }

    #[test]
    fn equilibrium_force_holds_speed() {
        let s = acela();
        let grade = GradeProfile::level();
        let v0 = 25.0;
        let f_eq = davis_force(&s, v0).unwrap();
        let forces = vec![f_eq; 1000];
        let path = integrate_forward(&s, &grade, &forces, 0.0, v0, 0.1).unwrap();
        for p in &path {
            assert!((p.v - v0).abs() < 1e-6 * v0, "v drifted to {}", p.v);
        }
    }

    #[test]
    fn coasting_decelerates_monotonically() {
        let s = acela();
        let forces = vec![0.0; 500];
        let path = integrate_forward(&s, &GradeProfile::level(), &forces, 0.0, 40.0, 0.2).unwrap();
        for w in path.windows(2) {
            assert!(w[1].v < w[0].v);
        }
    }

    #[test]
    fn speed_clamped_at_zero() {
        let s = acela();
        let forces = vec![-3.0e5; 600];
        let path = integrate_forward(&s, &GradeProfile::level(), &forces, 0.0, 5.0, 0.5).unwrap();
        assert!(path.iter().all(|p| p.v >= 0.0));
        assert_eq!(path.last().unwrap().v, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = acela();
        let g = GradeProfile::level();
        assert!(integrate_forward(&s, &g, &[0.0], 0.0, 1.0, 0.0).is_err());
        assert!(integrate_forward(&s, &g, &[f64::NAN], 0.0, 1.0, 0.1).is_err());
        assert!(integrate_forward(&s, &g, &[0.0], 0.0, -1.0, 0.1).is_err());
    }

    fn smooth_profile(n: usize, dt: f64) -> Vec<KinematicSample> {
        // v(t) = 20 + 10 sin(w t), positive throughout.
        let w = 0.02;
        let mut out = Vec::with_capacity(n);
        let mut x = 0.0;
        for k in 0..n {
            let t = k as f64 * dt;
            let v = 20.0 + 10.0 * (w * t).sin();
            let a = 10.0 * w * (w * t).cos();
            out.push(KinematicSample { t, x, v, a });
            let v_next = 20.0 + 10.0 * (w * (t + dt)).sin();
            x += 0.5 * (v + v_next) * dt;
        }
        out
    }

    #[test]
    fn inverse_then_forward_round_trip() {
        let s = acela();
        let grade = GradeProfile {
            points: vec![(0.0, 0.0), (2000.0, 0.004), (5000.0, -0.002)],
        };
        let dt = 0.1;
        let samples = smooth_profile(3000, dt);
        let forces: Vec<f64> = samples
            .iter()
            .map(|p| power_from_kinematics(&s, &grade, p).unwrap().traction)
            .collect();
        let path = integrate_forward(&s, &grade, &forces, 0.0, samples[0].v, dt).unwrap();
        let last = path[samples.len() - 1];
        let reference = samples.last().unwrap();
        assert!(
            (last.v - reference.v).abs() <= 1e-3 * reference.v,
            "v: {} vs {}",
            last.v,
            reference.v
        );
        assert!(
            (last.x - reference.x).abs() <= 1e-3 * reference.x.max(1.0),
            "x: {} vs {}",
            last.x,
            reference.x
        );
    }

    #[test]
    fn work_energy_theorem() {
        let s = acela();
        let grade = GradeProfile {
            points: vec![(0.0, 0.0), (3000.0, 0.005)],
        };
        let dt = 0.5;
        let forces: Vec<f64> = (0..600)
            .map(|k| {
                let t = k as f64 * dt;
                1.5e5 * (1.0 + (0.01 * t).sin()) * 0.5
            })
            .collect();
        let path = integrate_forward(&s, &grade, &forces, 0.0, 10.0, dt).unwrap();
        let mut traction_work = 0.0;
        let mut resistance_work = 0.0;
        for (k, w) in path.windows(2).enumerate() {
            let v_mid = 0.5 * (w[0].v + w[1].v);
            traction_work += forces[k] * v_mid * dt;
            resistance_work += davis_force(&s, v_mid).unwrap() * v_mid * dt;
        }
        let first = path.first().unwrap();
        let last = path.last().unwrap();
        let d_ke = 0.5 * s.mass * (last.v * last.v - first.v * first.v);
        let d_pe = s.mass
            * G
            * ((0..100)
                .map(|i| {
                    let x = first.x + (last.x - first.x) * (i as f64 + 0.5) / 100.0;
                    grade.angle(x).sin() * (last.x - first.x) / 100.0
                })
                .sum::<f64>());
        let balance = traction_work - resistance_work - d_pe;
        assert!(
            (balance - d_ke).abs() <= 0.01 * d_ke.abs().max(traction_work.abs()),
            "work balance {balance:.3e} vs dKE {d_ke:.3e}"
        );
    }
}
