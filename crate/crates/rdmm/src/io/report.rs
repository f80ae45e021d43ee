//! Deterministic result files: fixed ordering, fixed number formats,
//! so a rerun of the same scenario is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coordinator::RdmmOutcome;
use crate::error::Result;
use crate::io::Scenario;
use crate::model::usd_per_j_to_usd_per_mwh;

/// Money in dollars, two decimals.
fn usd(v: f64) -> String {
    // Avoid "-0.00".
    let v = if v.abs() < 5e-3 { 0.0 } else { v };
    format!("{v:.2}")
}

/// Physical quantity, six significant digits.
fn phys(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.5e}")
}

/// Writes the settlement tables and per-train trajectory tables into
/// `dir`, returning the files written (sorted). Layout:
/// `prices.csv`, `agents.csv`, `trains.csv`, `summary.csv` and one
/// `trajectory_<train>.csv` per train.
pub fn write_report(
    outcome: &RdmmOutcome,
    scenario: &Scenario,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let m = scenario.horizon.num_intervals();
    let s = &outcome.settlement;

    let mut prices = String::from(
        "acc_id,interval,t_start_s,lambda_e_usd_per_mwh,lambda_th_usd_per_mwh,traction_energy_j\n",
    );
    for (i, acc) in scenario.track.iter().enumerate() {
        for k in 0..m {
            let (t0, _) = scenario.horizon.interval_span(k + 1);
            writeln!(
                prices,
                "{},{},{},{},{},{}",
                acc.id,
                k + 1,
                phys(t0),
                phys(usd_per_j_to_usd_per_mwh(s.lambda_e[i][k])),
                phys(usd_per_j_to_usd_per_mwh(s.lambda_th[i][k])),
                phys(s.traction_energy[i][k]),
            )
            .unwrap();
        }
    }
    written.push(write_file(dir.join("prices.csv"), &prices)?);

    let mut agents = String::from("acc_id,agent_id,electric_energy_j,revenue_usd\n");
    for (i, acc) in scenario.track.iter().enumerate() {
        for (id, energy, revenue) in &s.agent_lines[i] {
            writeln!(agents, "{},{},{},{}", acc.id, id, phys(*energy), usd(*revenue)).unwrap();
        }
    }
    written.push(write_file(dir.join("agents.csv"), &agents)?);

    let mut trains =
        String::from("train_id,payment_usd,plan_cost_usd,work_j,signed_energy_j,distance_m\n");
    for t in &outcome.trains {
        writeln!(
            trains,
            "{},{},{},{},{},{}",
            t.id,
            usd(t.payment),
            usd(t.trajectory.cost),
            phys(t.trajectory.work),
            phys(t.trajectory.signed_energy),
            phys(t.trajectory.distance()),
        )
        .unwrap();
    }
    written.push(write_file(dir.join("trains.csv"), &trains)?);

    for t in &outcome.trains {
        let mut table = String::from("t_s,x_m,v_mps,a_mps2,traction_n,power_w,price_usd_per_mwh\n");
        for smp in &t.trajectory.samples {
            writeln!(
                table,
                "{},{},{},{},{},{},{}",
                phys(smp.t),
                phys(smp.x),
                phys(smp.v),
                phys(smp.a),
                phys(smp.traction),
                phys(smp.power),
                phys(usd_per_j_to_usd_per_mwh(
                    t.prices.price_at(smp.t + 0.5 * smp.duration)
                )),
            )
            .unwrap();
        }
        written.push(write_file(dir.join(format!("trajectory_{}.csv", t.id)), &table)?);
    }

    let mut summary = String::from("key,value\n");
    writeln!(summary, "forecast_instances,{}", outcome.iterations).unwrap();
    writeln!(summary, "converged,{}", outcome.converged).unwrap();
    writeln!(summary, "generation_cost_usd,{}", usd(s.total_generation_cost)).unwrap();
    let total_payments: f64 = s.train_payments.iter().map(|(_, p)| p).sum();
    writeln!(summary, "train_payments_usd,{}", usd(total_payments)).unwrap();
    writeln!(summary, "settlement_imbalance,{}", phys(s.imbalance)).unwrap();
    written.push(write_file(dir.join("summary.csv"), &summary)?);

    written.sort();
    Ok(written)
}

fn write_file(path: PathBuf, content: &str) -> Result<PathBuf> {
    std::fs::write(&path, content)?;
    Ok(path)
}
