//! Direct per-interval QP solution of the dispatch problem by active-set
//! enumeration over the capacity constraints. Intervals decouple, so the
//! M-dimensional problem reduces to M small KKT systems. Used as the
//! independent reference for the negotiation.

use super::{compute_scales, DispatchResult, Loads};
use crate::error::{Error, Result};
use crate::model::DispatchableAgent;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Solves the dispatch QP exactly, per interval. Errors with the list
/// of binding intervals when no feasible dispatch exists.
pub fn qp_oracle(agents: &[DispatchableAgent], loads: &Loads) -> Result<DispatchResult> {
    if agents.is_empty() {
        return Err(Error::invalid("oracle requires at least one agent"));
    }
    let m = loads.num_intervals();
    for a in agents {
        a.validate(m)?;
    }
    if loads.thermal.len() != m {
        return Err(Error::invalid("electric/thermal load length mismatch"));
    }
    if agents.len() > 12 {
        return Err(Error::invalid(
            "oracle enumeration is limited to 12 agents per ACC",
        ));
    }
    let scales = compute_scales(agents, m);

    let n = agents.len();
    let mut y = vec![vec![0.0; m]; n];
    let mut lambda_e = vec![0.0; m];
    let mut lambda_th = vec![0.0; m];
    let mut mu_plus = vec![vec![0.0; m]; n];
    let mut mu_minus = vec![vec![0.0; m]; n];
    let mut infeasible = Vec::new();

    for k in 0..m {
        let prob = IntervalProblem {
            b: agents.iter().map(|a| a.cost_b[k]).collect(),
            c: agents.iter().map(|a| a.cost_c[k]).collect(),
            lo: agents.iter().map(|a| a.y_min[k]).collect(),
            hi: agents.iter().map(|a| a.y_max[k]).collect(),
            d_e: agents.iter().map(|a| a.d_e[k]).collect(),
            d_th: agents.iter().map(|a| a.d_th[k]).collect(),
            r_e: -loads.electric[k],
            r_th: -loads.thermal[k],
            y_tol: 1e-8 * scales.y_scale.max(1.0),
            dual_tol: 1e-8 * scales.lambda_scale,
        };
        match prob.solve() {
            Some(sol) => {
                for i in 0..n {
                    y[i][k] = sol.y[i];
                    mu_plus[i][k] = sol.mu_plus[i];
                    mu_minus[i][k] = sol.mu_minus[i];
                }
                lambda_e[k] = sol.lambda_e;
                lambda_th[k] = sol.lambda_th;
            }
            None => infeasible.push(k + 1),
        }
    }

    if !infeasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "dispatch infeasible at intervals {infeasible:?}"
        )));
    }

    let (r_e, r_th) = super::residuals(agents, &y, loads);
    Ok(DispatchResult {
        y,
        lambda_e,
        lambda_th,
        mu_plus,
        mu_minus,
        residual_e: r_e,
        residual_th: r_th,
        iterations: 0,
        converged: true,
        y_scale: scales.y_scale,
        lambda_scale: scales.lambda_scale,
    })
}

struct IntervalSolution {
    y: Vec<f64>,
    lambda_e: f64,
    lambda_th: f64,
    mu_plus: Vec<f64>,
    mu_minus: Vec<f64>,
    objective: f64,
}

struct IntervalProblem {
    b: Vec<f64>,
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    d_e: Vec<f64>,
    d_th: Vec<f64>,
    r_e: f64,
    r_th: f64,
    y_tol: f64,
    dual_tol: f64,
}

impl IntervalProblem {
    fn solve(&self) -> Option<IntervalSolution> {
        let n = self.b.len();
        let has_e = self.d_e.iter().any(|&d| d != 0.0);
        let has_th = self.d_th.iter().any(|&d| d != 0.0);
        // A balance with no coupled agent is only satisfiable at zero.
        if !has_e && self.r_e.abs() > self.y_tol {
            return None;
        }
        if !has_th && self.r_th.abs() > self.y_tol {
            return None;
        }

        let mut best: Option<IntervalSolution> = None;
        let mut assignment = vec![Bound::Free; n];
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut rem = code;
            for slot in assignment.iter_mut() {
                *slot = match rem % 3 {
                    0 => Bound::Free,
                    1 => Bound::Lower,
                    _ => Bound::Upper,
                };
                rem /= 3;
            }
            if let Some(sol) = self.try_active_set(&assignment, has_e, has_th) {
                if best.as_ref().map_or(true, |b| sol.objective < b.objective) {
                    best = Some(sol);
                }
            }
        }
        best
    }

    fn try_active_set(
        &self,
        assignment: &[Bound],
        has_e: bool,
        has_th: bool,
    ) -> Option<IntervalSolution> {
        let n = self.b.len();
        let free: Vec<usize> = (0..n)
            .filter(|&i| assignment[i] == Bound::Free)
            .collect();
        let mut y: Vec<f64> = (0..n)
            .map(|i| match assignment[i] {
                Bound::Lower => self.lo[i],
                Bound::Upper => self.hi[i],
                Bound::Free => 0.0,
            })
            .collect();

        let cons: Vec<(&[f64], f64)> = [
            has_e.then_some((self.d_e.as_slice(), self.r_e)),
            has_th.then_some((self.d_th.as_slice(), self.r_th)),
        ]
        .into_iter()
        .flatten()
        .collect();
        let nf = free.len();
        let nc = cons.len();

        let (lambda_e, lambda_th);
        if nf == 0 {
            // Fully saturated set: the balance must already hold and the
            // prices are only constrained by dual feasibility.
            for (d, r) in &cons {
                let lhs: f64 = (0..n).map(|i| d[i] * y[i]).sum();
                if (lhs - r).abs() > self.y_tol {
                    return None;
                }
            }
            if nc > 1 {
                // Degenerate double-saturated case; covered by other
                // active sets in non-degenerate instances.
                return None;
            }
            let marginal = |i: usize| self.b[i] + self.c[i] * y[i];
            if nc == 0 {
                lambda_e = 0.0;
                lambda_th = 0.0;
            } else {
                let (d, _) = cons[0];
                let mut lam_low = f64::NEG_INFINITY;
                let mut lam_high = f64::INFINITY;
                for i in 0..n {
                    if d[i] <= 0.0 {
                        continue;
                    }
                    match assignment[i] {
                        Bound::Upper => lam_low = lam_low.max(marginal(i) / d[i]),
                        Bound::Lower => lam_high = lam_high.min(marginal(i) / d[i]),
                        Bound::Free => unreachable!(),
                    }
                }
                if lam_low > lam_high + self.dual_tol {
                    return None;
                }
                let lam = if lam_low.is_finite() {
                    lam_low
                } else if lam_high.is_finite() {
                    lam_high
                } else {
                    0.0
                };
                if has_e {
                    lambda_e = lam;
                    lambda_th = 0.0;
                } else {
                    lambda_e = 0.0;
                    lambda_th = lam;
                }
            }
        } else {
            // KKT system in (y_free, lambda).
            let dim = nf + nc;
            let mut a = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for (row, &i) in free.iter().enumerate() {
                a[row][row] = self.c[i];
                for (ci, (d, _)) in cons.iter().enumerate() {
                    a[row][nf + ci] = -d[i];
                }
                rhs[row] = -self.b[i];
            }
            for (ci, (d, r)) in cons.iter().enumerate() {
                for (col, &i) in free.iter().enumerate() {
                    a[nf + ci][col] = d[i];
                }
                let fixed: f64 = (0..self.b.len())
                    .filter(|i| assignment[*i] != Bound::Free)
                    .map(|i| d[i] * y[i])
                    .sum();
                rhs[nf + ci] = r - fixed;
            }
            let sol = solve_dense(a, rhs)?;
            for (col, &i) in free.iter().enumerate() {
                y[i] = sol[col];
                if y[i] < self.lo[i] - self.y_tol || y[i] > self.hi[i] + self.y_tol {
                    return None;
                }
                y[i] = y[i].clamp(self.lo[i], self.hi[i]);
            }
            let mut lam_iter = sol[nf..].iter();
            lambda_e = if has_e { *lam_iter.next().unwrap() } else { 0.0 };
            lambda_th = if has_th { *lam_iter.next().unwrap() } else { 0.0 };
        }

        // Dual feasibility of the bound multipliers.
        let n = self.b.len();
        let mut mu_plus = vec![0.0; n];
        let mut mu_minus = vec![0.0; n];
        for i in 0..n {
            let price = self.d_e[i] * lambda_e + self.d_th[i] * lambda_th;
            let marginal = self.b[i] + self.c[i] * y[i];
            match assignment[i] {
                Bound::Free => {}
                Bound::Upper => {
                    let mu = price - marginal;
                    if mu < -self.dual_tol {
                        return None;
                    }
                    mu_plus[i] = mu.max(0.0);
                }
                Bound::Lower => {
                    let mu = marginal - price;
                    if mu < -self.dual_tol {
                        return None;
                    }
                    mu_minus[i] = mu.max(0.0);
                }
            }
        }

        let objective: f64 = (0..n)
            .map(|i| self.b[i] * y[i] + 0.5 * self.c[i] * y[i] * y[i])
            .sum();
        Some(IntervalSolution {
            y,
            lambda_e,
            lambda_th,
            mu_plus,
            mu_minus,
            objective,
        })
    }
}

/// Gaussian elimination with partial pivoting for the small KKT systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = a
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0f64, f64::max)
        .max(1e-300);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c2 in col..n {
                a[row][c2] -= f * a[col][c2];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for col in row + 1..n {
            acc -= a[row][col] * x[col];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
