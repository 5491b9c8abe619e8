//! Labeled-data production: a cartesian Newton power flow and a
//! penalty-method OPF solver over the compact quadratic-form model.
//!
//! The penalty solver is training-label grade: it minimizes
//! `c^T G + rho * (sum r_l^2 + sum max(s_m, 0)^2)` with an Adam inner loop
//! and growing `rho`, then polishes the equalities to machine precision with
//! a Newton power flow in which the slack generator absorbs the imbalance.

use crate::grid::{evaluate_residuals, lincomb_dot, GridError, NetworkCase, QuadraticFormModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },
    #[error("singular power flow Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error(
        "no multistart candidate converged (best equality residual {best_eq:.3e}, \
         best violation {best_ineq:.3e})"
    )]
    NotConverged { best_eq: f64, best_ineq: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Penalty-method solver knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub max_outer_iterations: usize,
    pub inner_step_count: usize,
    pub inner_learning_rate: f64,
    pub multistart_count: usize,
    pub eq_tol: f64,
    pub ineq_tol: f64,
    pub random_seed: u64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            penalty_start: 10.0,
            penalty_growth: 10.0,
            max_outer_iterations: 4,
            inner_step_count: 400,
            inner_learning_rate: 0.02,
            multistart_count: 5,
            eq_tol: 1e-6,
            ineq_tol: 1e-6,
            random_seed: 0,
        }
    }
}

/// One OPF solution (or best attempt).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSolution {
    /// `[P_g; Q_g]` in per-unit.
    pub g: Vec<f64>,
    /// `[v^r; v^i]` in per-unit.
    pub v: Vec<f64>,
    pub objective: f64,
    pub max_equality_residual: f64,
    pub max_inequality_violation: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves the cartesian power flow for fixed generation setpoints.
///
/// All non-slack bus injections are fixed by `g` and `d`; the slack bus is
/// held at `(v_slack, 0)` and absorbs the imbalance. Returns `v` with
/// injection mismatch below 1e-8 p.u. at every non-slack bus.
pub fn solve_power_flow(
    qf: &QuadraticFormModel,
    case: &NetworkCase,
    g: &[f64],
    d: &[f64],
) -> Result<Vec<f64>, OpfError> {
    let flat = flat_voltage(qf, 1.0);
    solve_power_flow_from(qf, case, g, d, &flat)
}

/// As [`solve_power_flow`], warm-started from `v0` (slack voltage taken from
/// `v0` as well).
pub fn solve_power_flow_from(
    qf: &QuadraticFormModel,
    case: &NetworkCase,
    g: &[f64],
    d: &[f64],
    v0: &[f64],
) -> Result<Vec<f64>, OpfError> {
    let n_b = qf.n_buses;
    let slack = qf.slack;
    let (p_inj, q_inj) = bus_injections(qf, case, g, d);

    let mut v = v0.to_vec();
    v[n_b + slack] = 0.0;

    // unknown coordinate list: (vr, vi) of every non-slack bus
    let unknowns: Vec<usize> = (0..n_b)
        .filter(|&n| n != slack)
        .flat_map(|n| [n, n_b + n])
        .collect();
    let m = unknowns.len();

    let max_iter = 50;
    let tol = 1e-10;
    let mut mismatch = f64::INFINITY;
    for it in 0..max_iter {
        // residuals
        let mut f = DVector::zeros(m);
        let mut row = 0;
        for n in (0..n_b).filter(|&n| n != slack) {
            f[row] = qf.m_p[n].eval(&v) - p_inj[n];
            f[row + 1] = qf.m_q[n].eval(&v) - q_inj[n];
            row += 2;
        }
        mismatch = f.amax();
        if mismatch <= tol {
            return Ok(v);
        }
        // Jacobian rows are 2 M v restricted to the unknowns
        let mut jac = DMatrix::zeros(m, m);
        let mut row = 0;
        for n in (0..n_b).filter(|&n| n != slack) {
            for (r, form) in [(row, &qf.m_p[n]), (row + 1, &qf.m_q[n])] {
                let mut grad = vec![0.0; 2 * n_b];
                form.add_scaled_grad(&v, 1.0, &mut grad);
                for (c, &u) in unknowns.iter().enumerate() {
                    jac[(r, c)] = grad[u];
                }
            }
            row += 2;
        }
        let lu = jac.lu();
        let step = lu
            .solve(&f)
            .ok_or(OpfError::SingularJacobian(it))?;
        for (c, &u) in unknowns.iter().enumerate() {
            v[u] -= step[c];
        }
    }
    // accept if we are within the documented tolerance anyway
    let mut f_inf: f64 = 0.0;
    for n in (0..n_b).filter(|&n| n != slack) {
        f_inf = f_inf.max((qf.m_p[n].eval(&v) - p_inj[n]).abs());
        f_inf = f_inf.max((qf.m_q[n].eval(&v) - q_inj[n]).abs());
    }
    if f_inf <= 1e-8 {
        Ok(v)
    } else {
        Err(OpfError::PowerFlowDiverged {
            iterations: max_iter,
            mismatch: mismatch.min(f_inf),
        })
    }
}

fn bus_injections(
    qf: &QuadraticFormModel,
    case: &NetworkCase,
    g: &[f64],
    d: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n_b = qf.n_buses;
    let n_g = qf.n_generators;
    let n_d = qf.n_loads;
    let mut p = vec![0.0; n_b];
    let mut q = vec![0.0; n_b];
    for (gi, gen) in case.generators.iter().enumerate() {
        let bus = case.bus_index(gen.bus_id).expect("validated");
        p[bus] += g[gi];
        q[bus] += g[n_g + gi];
    }
    for (pos, &bus) in qf.load_buses.iter().enumerate() {
        p[bus] -= d[pos];
        q[bus] -= d[n_d + pos];
    }
    (p, q)
}

pub fn flat_voltage(qf: &QuadraticFormModel, magnitude: f64) -> Vec<f64> {
    let mut v = vec![0.0; qf.voltage_dim()];
    for n in 0..qf.n_buses {
        v[n] = magnitude;
    }
    v
}

/// Penalty-method AC-OPF over the compact form, with multistart and a
/// power-flow polish. Deterministic for a given seed.
pub fn solve_opf_penalty(
    qf: &QuadraticFormModel,
    case: &NetworkCase,
    d: &[f64],
    cfg: &PenaltyConfig,
) -> Result<DispatchSolution, OpfError> {
    let mut best: Option<DispatchSolution> = None;

    for start in 0..cfg.multistart_count.max(1) {
        let candidate = penalty_single_start(qf, case, d, cfg, start);
        let Ok(cand) = candidate else { continue };
        // feasible beats infeasible; among equals, lower objective wins;
        // ties keep the earlier start
        let better = match &best {
            None => true,
            Some(b) => {
                (cand.converged && !b.converged)
                    || (cand.converged == b.converged && cand.objective < b.objective)
            }
        };
        if better {
            best = Some(cand);
        }
    }

    match best {
        Some(sol) if sol.converged => Ok(sol),
        Some(sol) => Err(OpfError::NotConverged {
            best_eq: sol.max_equality_residual,
            best_ineq: sol.max_inequality_violation,
        }),
        None => Err(OpfError::NotConverged {
            best_eq: f64::INFINITY,
            best_ineq: f64::INFINITY,
        }),
    }
}

fn penalty_single_start(
    qf: &QuadraticFormModel,
    case: &NetworkCase,
    d: &[f64],
    cfg: &PenaltyConfig,
    start: usize,
) -> Result<DispatchSolution, OpfError> {
    let n_g = qf.generation_dim();
    let slack_vi = qf.n_buses + qf.slack;

    let mut v = flat_voltage(qf, 1.0);
    let mut g: Vec<f64> = (0..n_g)
        .map(|i| 0.5 * (qf.g_lower[i] + qf.g_upper[i]))
        .collect();
    if start > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.random_seed.wrapping_mul(0x9e37_79b9).wrapping_add(start as u64),
        );
        for n in 0..qf.n_buses {
            v[n] += rng.gen_range(-0.05..0.05);
            if qf.n_buses + n != slack_vi {
                v[qf.n_buses + n] += rng.gen_range(-0.02..0.02);
            }
        }
        for i in 0..n_g {
            let span = qf.g_upper[i] - qf.g_lower[i];
            g[i] += rng.gen_range(-0.25..0.25) * span;
        }
    }

    // An exterior penalty converges to the boundary from outside, so the
    // iterate always retains a violation on the order of cost/rho. Shrinking
    // the inequality boundaries by a margin makes the iterate land strictly
    // inside the true bounds; the margin is grown adaptively from the
    // violation the previous attempt left behind.
    let mut margin = 0.0;
    let mut iterations = 0;
    let mut best: Option<DispatchSolution> = None;
    for _attempt in 0..5 {
        let mut rho = cfg.penalty_start;
        for _outer in 0..cfg.max_outer_iterations {
            adam_minimize(qf, d, &mut v, &mut g, rho, cfg, slack_vi, margin);
            iterations += cfg.inner_step_count;
            rho *= cfg.penalty_growth;
        }

        // polish: clamp generation, then let the slack absorb the imbalance
        for i in 0..n_g {
            g[i] = g[i].clamp(qf.g_lower[i], qf.g_upper[i]);
        }
        let v_polished = match solve_power_flow_from(qf, case, &g, d, &v) {
            Ok(vp) => vp,
            Err(_) => v.clone(), // keep the penalty iterate; convergence check decides
        };

        // recompute slack generation from the solved voltages
        let mut g_out = g.clone();
        let slack_gens: Vec<usize> = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, gen)| case.bus_index(gen.bus_id) == Some(qf.slack))
            .map(|(gi, _)| gi)
            .collect();
        if let Some(&first) = slack_gens.first() {
            let n_gens = qf.n_generators;
            let (mut p_need, mut q_need) = (
                qf.m_p[qf.slack].eval(&v_polished),
                qf.m_q[qf.slack].eval(&v_polished),
            );
            if let Some(pos) = qf.load_buses.iter().position(|&b| b == qf.slack) {
                p_need += d[pos];
                q_need += d[qf.n_loads + pos];
            }
            for &gi in slack_gens.iter().skip(1) {
                p_need -= g_out[gi];
                q_need -= g_out[n_gens + gi];
            }
            g_out[first] = p_need;
            g_out[n_gens + first] = q_need;
        }

        let res = evaluate_residuals(qf, &v_polished, &g_out, d)?;
        let max_eq = res.max_equality();
        let max_ineq = res.max_violation();
        let converged = max_eq <= cfg.eq_tol && max_ineq <= cfg.ineq_tol;
        let objective = qf.cost.iter().zip(&g_out).map(|(c, x)| c * x).sum();
        let cand = DispatchSolution {
            g: g_out,
            v: v_polished.clone(),
            objective,
            max_equality_residual: max_eq,
            max_inequality_violation: max_ineq,
            converged,
            iterations,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (cand.converged && !b.converged)
                    || (cand.converged == b.converged
                        && cand.max_inequality_violation < b.max_inequality_violation)
            }
        };
        if better {
            best = Some(cand);
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
        // warm-start the next attempt from the polished point with a margin
        // safely past the violation this one retained
        v = v_polished;
        margin += 1.5 * max_ineq.max(1e-4);
    }
    Ok(best.expect("at least one penalty attempt ran"))
}

/// Adam descent on the penalty objective for a fixed `rho`.
fn adam_minimize(
    qf: &QuadraticFormModel,
    d: &[f64],
    v: &mut Vec<f64>,
    g: &mut Vec<f64>,
    rho: f64,
    cfg: &PenaltyConfig,
    slack_vi: usize,
    margin: f64,
) {
    let n_v = v.len();
    let n_g = g.len();
    let n = n_v + n_g;
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut grad_v = vec![0.0; n_v];
    let mut grad_g = vec![0.0; n_g];

    for t in 1..=cfg.inner_step_count {
        grad_v.iter_mut().for_each(|x| *x = 0.0);
        grad_g.iter_mut().for_each(|x| *x = 0.0);

        for row in &qf.equalities {
            let r = row.l.eval(v) - lincomb_dot(&row.a, g) - lincomb_dot(&row.b, d);
            if r != 0.0 {
                row.l.add_scaled_grad(v, 2.0 * rho * r, &mut grad_v);
                for &(i, a) in &row.a {
                    grad_g[i] -= 2.0 * rho * r * a;
                }
            }
        }
        for row in &qf.inequalities {
            if row.f.is_infinite() {
                continue;
            }
            let slack = row.m.eval(v) - lincomb_dot(&row.d, d) - row.f + margin;
            if slack > 0.0 {
                row.m.add_scaled_grad(v, 2.0 * rho * slack, &mut grad_v);
            }
        }
        for i in 0..n_g {
            grad_g[i] += qf.cost[i];
        }
        grad_v[slack_vi] = 0.0; // angle reference pinned

        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for i in 0..n {
            let gr = if i < n_v { grad_v[i] } else { grad_g[i - n_v] };
            m[i] = beta1 * m[i] + (1.0 - beta1) * gr;
            s[i] = beta2 * s[i] + (1.0 - beta2) * gr * gr;
            let step = cfg.inner_learning_rate * (m[i] / bc1) / ((s[i] / bc2).sqrt() + eps);
            if i < n_v {
                if i != slack_vi {
                    v[i] -= step;
                }
            } else {
                g[i - n_v] -= step;
            }
        }
    }
}
