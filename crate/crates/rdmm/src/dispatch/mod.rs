//! Per-ACC multi-period dispatch of dispatchable agents.
//!
//! The negotiation iterates gradient updates on the agent setpoints,
//! price duple and capacity multipliers until the output and price
//! deltas fall under the exit tolerances. `oracle` solves the same
//! problem directly per interval and is the independent reference the
//! negotiation is tested against.
//!
//! Sign conventions: setpoints `y` are per-interval energy (J),
//! generation positive. Load profiles are signed (loads negative,
//! renewable generation positive). Prices are $/J; the price converges
//! to the marginal cost of the marginal generator, positive.

mod oracle;

pub use oracle::qp_oracle;

use crate::error::{Error, Result};
use crate::model::DispatchableAgent;

/// Signed per-interval energy loads seen by one ACC: `electric` is
/// renewable + traction + electric load, `thermal` is the thermal load.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub electric: Vec<f64>,
    pub thermal: Vec<f64>,
}

impl Loads {
    pub fn zeros(m: usize) -> Self {
        Loads {
            electric: vec![0.0; m],
            thermal: vec![0.0; m],
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.electric.len()
    }
}

/// Step sizes, exit tolerances and iteration caps for the negotiation.
/// Step sizes are dimensionless relaxation factors applied on top of
/// curvature-scaled updates.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StepSizes {
    pub beta_y: f64,
    pub beta_lambda_e: f64,
    pub beta_lambda_th: f64,
    pub beta_mu: f64,
    /// Negotiation exit tolerances (relative to problem scale).
    pub tol_y: f64,
    pub tol_lambda: f64,
    /// Forecast-loop exit tolerances.
    pub tol_forecast_y: f64,
    pub tol_forecast_lambda: f64,
    pub k_max: usize,
    pub j_max: usize,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            beta_y: 0.05,
            beta_lambda_e: 0.05,
            beta_lambda_th: 0.05,
            beta_mu: 0.05,
            tol_y: 1e-4,
            tol_lambda: 1e-4,
            tol_forecast_y: 1e-3,
            tol_forecast_lambda: 1e-3,
            k_max: 50_000,
            j_max: 50,
        }
    }
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.beta_y,
            self.beta_lambda_e,
            self.beta_lambda_th,
            self.beta_mu,
            self.tol_y,
            self.tol_lambda,
            self.tol_forecast_y,
            self.tol_forecast_lambda,
        ];
        if all.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("step sizes and tolerances must be positive"));
        }
        if self.k_max == 0 || self.j_max == 0 {
            return Err(Error::invalid("iteration caps must be positive"));
        }
        Ok(())
    }

    fn halved(&self) -> StepSizes {
        StepSizes {
            beta_y: self.beta_y / 2.0,
            beta_lambda_e: self.beta_lambda_e / 2.0,
            beta_lambda_th: self.beta_lambda_th / 2.0,
            beta_mu: self.beta_mu / 2.0,
            ..self.clone()
        }
    }
}

/// Initial iterate for a negotiation: the price duple, optionally with
/// setpoints and multipliers from a previous equilibrium.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub lambda_e: Vec<f64>,
    pub lambda_th: Vec<f64>,
    pub y: Option<Vec<Vec<f64>>>,
    pub mu_plus: Option<Vec<Vec<f64>>>,
    pub mu_minus: Option<Vec<Vec<f64>>>,
}

impl WarmStart {
    /// Cold start at zero prices, as in the reference negotiation.
    pub fn zeros(m: usize) -> Self {
        WarmStart {
            lambda_e: vec![0.0; m],
            lambda_th: vec![0.0; m],
            y: None,
            mu_plus: None,
            mu_minus: None,
        }
    }

    pub fn prices(lambda_e: Vec<f64>, lambda_th: Vec<f64>) -> Self {
        WarmStart {
            lambda_e,
            lambda_th,
            y: None,
            mu_plus: None,
            mu_minus: None,
        }
    }

    pub fn from_result(prev: &DispatchResult) -> Self {
        WarmStart {
            lambda_e: prev.lambda_e.clone(),
            lambda_th: prev.lambda_th.clone(),
            y: Some(prev.y.clone()),
            mu_plus: Some(prev.mu_plus.clone()),
            mu_minus: Some(prev.mu_minus.clone()),
        }
    }
}

/// One negotiation iterate: agent setpoints, price duple and capacity
/// multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationState {
    pub y: Vec<Vec<f64>>,
    pub lambda_e: Vec<f64>,
    pub lambda_th: Vec<f64>,
    pub mu_plus: Vec<Vec<f64>>,
    pub mu_minus: Vec<Vec<f64>>,
    pub k: usize,
}

impl NegotiationState {
    pub fn new(agents: &[DispatchableAgent], m: usize, warm: &WarmStart) -> Self {
        let y = warm.y.clone().unwrap_or_else(|| {
            agents
                .iter()
                .map(|a| {
                    (0..m)
                        .map(|k| 0f64.clamp(a.y_min[k], a.y_max[k]))
                        .collect()
                })
                .collect()
        });
        NegotiationState {
            y,
            lambda_e: warm.lambda_e.clone(),
            lambda_th: warm.lambda_th.clone(),
            mu_plus: warm
                .mu_plus
                .clone()
                .unwrap_or_else(|| vec![vec![0.0; m]; agents.len()]),
            mu_minus: warm
                .mu_minus
                .clone()
                .unwrap_or_else(|| vec![vec![0.0; m]; agents.len()]),
            k: 0,
        }
    }
}

/// Converged (or best-effort) dispatch for one ACC.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub y: Vec<Vec<f64>>,
    pub lambda_e: Vec<f64>,
    pub lambda_th: Vec<f64>,
    pub mu_plus: Vec<Vec<f64>>,
    pub mu_minus: Vec<Vec<f64>>,
    /// Balance residuals per interval (J): loads + generation.
    pub residual_e: Vec<f64>,
    pub residual_th: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Problem scales the exit tests were measured against.
    pub y_scale: f64,
    pub lambda_scale: f64,
}

impl DispatchResult {
    pub fn total_cost(&self, agents: &[DispatchableAgent]) -> f64 {
        agents
            .iter()
            .zip(&self.y)
            .map(|(a, y)| agent_cost(a, y).unwrap())
            .sum()
    }
}

/// Electric and thermal output of one agent for a setpoint profile.
pub fn agent_outputs(agent: &DispatchableAgent, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != agent.num_intervals() {
        return Err(Error::invalid(format!(
            "agent {}: setpoint length {} != {}",
            agent.id,
            y.len(),
            agent.num_intervals()
        )));
    }
    let p_e = agent.d_e.iter().zip(y).map(|(d, y)| d * y).collect();
    let p_th = agent.d_th.iter().zip(y).map(|(d, y)| d * y).collect();
    Ok((p_e, p_th))
}

/// Total quadratic cost of one agent over the horizon, $.
pub fn agent_cost(agent: &DispatchableAgent, y: &[f64]) -> Result<f64> {
    if y.len() != agent.num_intervals() {
        return Err(Error::invalid(format!(
            "agent {}: setpoint length {} != {}",
            agent.id,
            y.len(),
            agent.num_intervals()
        )));
    }
    Ok((0..y.len())
        .map(|k| agent.cost_a[k] + agent.cost_b[k] * y[k] + 0.5 * agent.cost_c[k] * y[k] * y[k])
        .sum())
}

/// Refreshes a network-connection agent's cost curve from the external
/// market price series `pi` ($/J per interval): a = 0, b = pi,
/// c = `c_min`. Idempotent for a fixed price series.
pub fn update_network_agent_cost(
    agent: &DispatchableAgent,
    pi: &[f64],
    c_min: f64,
) -> Result<DispatchableAgent> {
    if agent.kind != crate::model::AgentKind::NetworkConnection {
        return Err(Error::invalid(format!(
            "agent {} is not a network connection",
            agent.id
        )));
    }
    if pi.len() != agent.num_intervals() {
        return Err(Error::invalid(format!(
            "agent {}: price series length {} != {}",
            agent.id,
            pi.len(),
            agent.num_intervals()
        )));
    }
    let m = pi.len();
    Ok(DispatchableAgent {
        cost_a: vec![0.0; m],
        cost_b: pi.to_vec(),
        cost_c: vec![c_min; m],
        ..agent.clone()
    })
}

/// Problem scales used to precondition the updates and to make exit
/// tests unit-free.
#[derive(Debug, Clone)]
struct Scales {
    y_scale: f64,
    lambda_scale: f64,
    /// Effective curvature per agent per interval, strictly positive.
    c_hat: Vec<Vec<f64>>,
    /// Dual curvature of the electric/thermal balance per interval.
    h_e: Vec<f64>,
    h_th: Vec<f64>,
}

fn compute_scales(agents: &[DispatchableAgent], m: usize) -> Scales {
    let mut y_scale = 0f64;
    let mut lambda_scale = 0f64;
    for a in agents {
        for k in 0..m {
            y_scale = y_scale.max(a.y_min[k].abs()).max(a.y_max[k].abs());
            let span = a.y_max[k].abs().max(a.y_min[k].abs());
            lambda_scale = lambda_scale.max(a.cost_b[k].abs() + a.cost_c[k] * span);
        }
    }
    if y_scale == 0.0 {
        y_scale = 1.0;
    }
    if lambda_scale == 0.0 {
        lambda_scale = 1.0;
    }
    // Curvature floor keeps the preconditioned steps finite for
    // (near-)linear agents.
    let kappa = 1e-3 * lambda_scale / y_scale;
    let c_hat: Vec<Vec<f64>> = agents
        .iter()
        .map(|a| (0..m).map(|k| a.cost_c[k].max(kappa)).collect())
        .collect();
    let mut h_e = vec![0.0; m];
    let mut h_th = vec![0.0; m];
    for (a, ch) in agents.iter().zip(&c_hat) {
        for k in 0..m {
            h_e[k] += a.d_e[k] * a.d_e[k] / ch[k];
            h_th[k] += a.d_th[k] * a.d_th[k] / ch[k];
        }
    }
    Scales {
        y_scale,
        lambda_scale,
        c_hat,
        h_e,
        h_th,
    }
}

/// Balance residuals (loads + generation) per interval.
fn residuals(agents: &[DispatchableAgent], y: &[Vec<f64>], loads: &Loads) -> (Vec<f64>, Vec<f64>) {
    let m = loads.num_intervals();
    let mut r_e = loads.electric.clone();
    let mut r_th = loads.thermal.clone();
    for (a, yi) in agents.iter().zip(y) {
        for k in 0..m {
            r_e[k] += a.d_e[k] * yi[k];
            r_th[k] += a.d_th[k] * yi[k];
        }
    }
    (r_e, r_th)
}

fn check_lengths(agents: &[DispatchableAgent], loads: &Loads, state: &NegotiationState) -> Result<usize> {
    let m = loads.num_intervals();
    if loads.thermal.len() != m {
        return Err(Error::invalid("electric/thermal load length mismatch"));
    }
    for a in agents {
        a.validate(m)?;
    }
    if state.lambda_e.len() != m
        || state.lambda_th.len() != m
        || state.y.len() != agents.len()
        || state.y.iter().any(|y| y.len() != m)
    {
        return Err(Error::invalid("negotiation state length mismatch"));
    }
    Ok(m)
}

/// One gradient update of setpoints, prices and capacity multipliers.
///
/// Updates are curvature-preconditioned and applied in Gauss-Seidel
/// order (y, then lambda from the new y, then mu), which keeps the
/// primal-dual dynamics contractive for strictly convex costs.
pub fn negotiation_step(
    state: &NegotiationState,
    agents: &[DispatchableAgent],
    loads: &Loads,
    steps: &StepSizes,
) -> Result<NegotiationState> {
    let m = check_lengths(agents, loads, state)?;
    let scales = compute_scales(agents, m);
    let mut next = state.clone();
    step_in_place(&mut next, agents, loads, steps, &scales)?;
    Ok(next)
}

fn step_in_place(
    state: &mut NegotiationState,
    agents: &[DispatchableAgent],
    loads: &Loads,
    steps: &StepSizes,
    scales: &Scales,
) -> Result<()> {
    let m = loads.num_intervals();
    // Setpoint update: descent on the Lagrangian in y.
    for (i, a) in agents.iter().enumerate() {
        for k in 0..m {
            let grad = a.cost_b[k] + a.cost_c[k] * state.y[i][k]
                - a.d_e[k] * state.lambda_e[k]
                - a.d_th[k] * state.lambda_th[k]
                + state.mu_plus[i][k]
                - state.mu_minus[i][k];
            state.y[i][k] -= steps.beta_y / scales.c_hat[i][k] * grad;
        }
    }
    // Price update: ascent on the balance residual. Shortfall of
    // generation raises the price.
    let (r_e, r_th) = residuals(agents, &state.y, loads);
    for k in 0..m {
        if scales.h_e[k] > 0.0 {
            state.lambda_e[k] += steps.beta_lambda_e / scales.h_e[k] * (-r_e[k]);
        }
        if scales.h_th[k] > 0.0 {
            state.lambda_th[k] += steps.beta_lambda_th / scales.h_th[k] * (-r_th[k]);
        }
    }
    // Capacity multipliers: projected ascent on the violation.
    for (i, a) in agents.iter().enumerate() {
        for k in 0..m {
            let m_plus = state.y[i][k] - a.y_max[k];
            let m_minus = a.y_min[k] - state.y[i][k];
            let rate = steps.beta_mu * scales.c_hat[i][k];
            state.mu_plus[i][k] = (state.mu_plus[i][k] + rate * m_plus).max(0.0);
            state.mu_minus[i][k] = (state.mu_minus[i][k] + rate * m_minus).max(0.0);
        }
    }
    state.k += 1;
    let finite = state.y.iter().flatten().all(|v| v.is_finite())
        && state.lambda_e.iter().all(|v| v.is_finite())
        && state.lambda_th.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::Divergence(format!(
            "non-finite iterate at negotiation step {}",
            state.k
        )));
    }
    Ok(())
}

/// Runs the negotiation until the setpoint and price deltas fall under
/// the exit tolerances or `k_max` is reached. On detected divergence
/// the step sizes are halved and the negotiation restarts (up to 8
/// times). Non-convergence is reported in the result, not an error.
pub fn negotiate(
    agents: &[DispatchableAgent],
    loads: &Loads,
    steps: &StepSizes,
    warm: &WarmStart,
) -> Result<DispatchResult> {
    if agents.is_empty() {
        return Err(Error::invalid("negotiation requires at least one agent"));
    }
    steps.validate()?;
    let m = loads.num_intervals();
    let scales = compute_scales(agents, m);

    let mut steps = steps.clone();
    for _attempt in 0..8 {
        match negotiate_once(agents, loads, &steps, warm, &scales) {
            Ok(result) => return Ok(result),
            Err(Error::Divergence(msg)) => {
                log::warn!("negotiation diverged ({msg}); halving step sizes");
                steps = steps.halved();
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Divergence(
        "negotiation diverged after 8 step-size halvings".into(),
    ))
}

fn negotiate_once(
    agents: &[DispatchableAgent],
    loads: &Loads,
    steps: &StepSizes,
    warm: &WarmStart,
    scales: &Scales,
) -> Result<DispatchResult> {
    let m = loads.num_intervals();
    let mut state = NegotiationState::new(agents, m, warm);
    let mut exited = false;
    let mut norm_checkpoint = f64::INFINITY;

    for iter in 0..steps.k_max {
        let prev_y: Vec<Vec<f64>> = state.y.clone();
        let prev_le = state.lambda_e.clone();
        let prev_lth = state.lambda_th.clone();
        step_in_place(&mut state, agents, loads, steps, scales)?;

        let dy = state
            .y
            .iter()
            .zip(&prev_y)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0f64, f64::max);
        let dl = state
            .lambda_e
            .iter()
            .zip(&prev_le)
            .chain(state.lambda_th.iter().zip(&prev_lth))
            .map(|(x, y)| (x - y).abs())
            .fold(0f64, f64::max);

        if dy <= steps.tol_y * scales.y_scale && dl <= steps.tol_lambda * scales.lambda_scale {
            exited = true;
            break;
        }
        // Divergence watchdog: unbounded iterate growth over 50 steps.
        if iter % 50 == 49 {
            let norm = state
                .y
                .iter()
                .flatten()
                .map(|v| v.abs())
                .fold(0f64, f64::max)
                / scales.y_scale
                + state
                    .lambda_e
                    .iter()
                    .chain(&state.lambda_th)
                    .map(|v| v.abs())
                    .fold(0f64, f64::max)
                    / scales.lambda_scale;
            if norm > 1e6 && norm > 10.0 * norm_checkpoint {
                return Err(Error::Divergence(format!(
                    "iterate norm grew to {norm:.3e} by step {}",
                    state.k
                )));
            }
            norm_checkpoint = norm;
        }
    }

    let (r_e, r_th) = residuals(agents, &state.y, loads);
    let load_scale = loads
        .electric
        .iter()
        .chain(&loads.thermal)
        .map(|v| v.abs())
        .fold(0f64, f64::max)
        .max(1e-9 * scales.y_scale);
    let r_max = r_e
        .iter()
        .chain(&r_th)
        .map(|v| v.abs())
        .fold(0f64, f64::max);
    // A large residual at exit means the load cannot be met: report as
    // non-converged rather than as an error.
    let feasible = r_max <= 0.05 * load_scale.max(scales.y_scale * 1e-6);

    Ok(DispatchResult {
        iterations: state.k,
        converged: exited && feasible,
        y: state.y,
        lambda_e: state.lambda_e,
        lambda_th: state.lambda_th,
        mu_plus: state.mu_plus,
        mu_minus: state.mu_minus,
        residual_e: r_e,
        residual_th: r_th,
        y_scale: scales.y_scale,
        lambda_scale: scales.lambda_scale,
    })
}

/// Replaces the load forecast and warm-starts the prices from the
/// previous equilibrium.
pub fn forecast_update(prev: &DispatchResult, new_loads: Loads) -> (Loads, WarmStart) {
    (new_loads, WarmStart::from_result(prev))
}

/// Maximum scaled KKT violations of a dispatch result:
/// (stationarity, complementary slackness, dual infeasibility).
///
/// Stationarity is the Lagrangian gradient including the capacity
/// multipliers, scaled by the price scale; complementary slackness is
/// scaled by price * setpoint scale and separately catches multipliers
/// that stay positive away from their bound.
pub fn kkt_violations(
    agents: &[DispatchableAgent],
    result: &DispatchResult,
) -> (f64, f64, f64) {
    let m = result.lambda_e.len();
    let mut stationarity = 0f64;
    let mut comp_slack = 0f64;
    let mut dual_infeas = 0f64;
    for (i, a) in agents.iter().enumerate() {
        for k in 0..m {
            let y = result.y[i][k];
            let marginal = a.cost_b[k] + a.cost_c[k] * y;
            let price = a.d_e[k] * result.lambda_e[k] + a.d_th[k] * result.lambda_th[k];
            let grad = marginal - price + result.mu_plus[i][k] - result.mu_minus[i][k];
            stationarity = stationarity.max(grad.abs());
            dual_infeas = dual_infeas
                .max(-result.mu_plus[i][k])
                .max(-result.mu_minus[i][k]);
            comp_slack = comp_slack
                .max((result.mu_plus[i][k] * (y - a.y_max[k])).abs())
                .max((result.mu_minus[i][k] * (a.y_min[k] - y)).abs());
        }
    }
    (
        stationarity / result.lambda_scale,
        comp_slack / (result.lambda_scale * result.y_scale),
        dual_infeas / result.lambda_scale,
    )
}
