//! Grid case ingestion and the cartesian quadratic-form OPF model.
//!
//! Voltages live in a stacked vector `v = [v^r; v^i]` of length `2*N_b`;
//! bus injections, voltage magnitudes and branch currents are all symmetric
//! quadratic forms `v^T M v` in that vector. The compact constraint set is
//!
//! ```text
//! v^T L_l v  =  a_l^T G + b_l^T D      l = 1..2*N_b+1
//! v^T M_m v <=  d_m^T D + f_m          m = 1..4*N_g+2*N_b+N_l
//! ```
//!
//! with generation `G = [P_g; Q_g]` and demand `D = [P_d; Q_d]`, everything
//! in per-unit on the case base power.

mod build;
mod parse;
pub mod quadform;

pub use build::{build_admittance, build_quadratic_forms};
pub use parse::{parse_matpower_case, serialize_matpower_case};
pub use quadform::QuadForm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("missing required block `mpc.{0}`")]
    MissingBlock(&'static str),
    #[error("no slack bus in case")]
    NoSlackBus,
    #[error("multiple slack buses in case ({0} found)")]
    MultipleSlackBuses(usize),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("{kind} row {row} references unknown bus {bus}")]
    UnknownBus {
        kind: &'static str,
        row: usize,
        bus: usize,
    },
    #[error("nonlinear cost row for generator {0}: only linear costs (model=2, n<=2) are supported")]
    NonlinearCost(usize),
    #[error("branch {0} has zero impedance (r = x = 0)")]
    ZeroImpedance(usize),
    #[error("invalid bounds on {what} (row {row}): lower {lo} > upper {hi}")]
    BadBounds {
        what: &'static str,
        row: usize,
        lo: f64,
        hi: f64,
    },
    #[error("dimension mismatch: expected {expected} for {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

/// One bus row. Demand and shunt values are in MW / MVAr at the case base,
/// voltage limits in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
    pub p_demand_nominal: f64,
    pub q_demand_nominal: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
}

/// One in-service generator. Limits in MW / MVAr, cost in currency/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus_id: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost_linear: f64,
}

/// One in-service branch. Impedances in per-unit, rating in MVA (0 = unlimited).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub rating: f64,
}

/// A validated parsed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Indices (into `buses`) of the load buses: buses with nonzero nominal demand.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.p_demand_nominal != 0.0 || b.q_demand_nominal != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_loads(&self) -> usize {
        self.load_buses().len()
    }

    /// Index (into `buses`) of the slack bus.
    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    /// Position of a bus id in the `buses` vector.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub(crate) fn validate(&self) -> Result<(), GridError> {
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.bus_type == BusType::Slack)
            .count();
        if slack_count == 0 {
            return Err(GridError::NoSlackBus);
        }
        if slack_count > 1 {
            return Err(GridError::MultipleSlackBuses(slack_count));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|o| o.id == b.id) {
                return Err(GridError::DuplicateBusId(b.id));
            }
            if b.v_min > b.v_max {
                return Err(GridError::BadBounds {
                    what: "bus voltage",
                    row: i + 1,
                    lo: b.v_min,
                    hi: b.v_max,
                });
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if self.bus_index(g.bus_id).is_none() {
                return Err(GridError::UnknownBus {
                    kind: "generator",
                    row: i + 1,
                    bus: g.bus_id,
                });
            }
            if g.p_min > g.p_max {
                return Err(GridError::BadBounds {
                    what: "generator P",
                    row: i + 1,
                    lo: g.p_min,
                    hi: g.p_max,
                });
            }
            if g.q_min > g.q_max {
                return Err(GridError::BadBounds {
                    what: "generator Q",
                    row: i + 1,
                    lo: g.q_min,
                    hi: g.q_max,
                });
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            for bus in [br.from_bus, br.to_bus] {
                if self.bus_index(bus).is_none() {
                    return Err(GridError::UnknownBus {
                        kind: "branch",
                        row: i + 1,
                        bus,
                    });
                }
            }
            if br.r * br.r + br.x * br.x == 0.0 {
                return Err(GridError::ZeroImpedance(i + 1));
            }
        }
        Ok(())
    }
}

/// Bus admittance data in per-unit: `Y = G + jB`, plus per-branch series admittance.
#[derive(Debug, Clone)]
pub struct AdmittanceModel {
    /// Conductance matrix, `n_buses x n_buses`, row-major.
    pub g: Vec<Vec<f64>>,
    /// Susceptance matrix.
    pub b: Vec<Vec<f64>>,
    /// Per-branch series admittance `(g, b)` of `y_mn = 1/(r + jx)`.
    pub branch_y: Vec<(f64, f64)>,
}

/// A sparse linear functional: sum of `coef * x[idx]`.
pub type LinComb = Vec<(usize, f64)>;

pub fn lincomb_dot(c: &LinComb, x: &[f64]) -> f64 {
    c.iter().map(|&(i, a)| a * x[i]).sum()
}

/// One compact equality row `v^T L v = a^T G + b^T D`.
#[derive(Debug, Clone)]
pub struct EqualityRow {
    pub l: QuadForm,
    pub a: LinComb,
    pub b: LinComb,
}

/// One compact inequality row `v^T M v <= d^T D + f`.
///
/// `f = +inf` marks an unenforced row (branch with rating 0); such rows keep
/// their slot in the count but are excluded from solvers and losses.
#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub m: QuadForm,
    pub d: LinComb,
    pub f: f64,
}

/// The full quadratic-form model of one case, all in per-unit.
#[derive(Debug, Clone)]
pub struct QuadraticFormModel {
    pub n_buses: usize,
    pub n_generators: usize,
    pub n_loads: usize,
    pub n_branches: usize,
    /// Index of the slack bus in bus order.
    pub slack: usize,
    /// Bus indices of the loads, fixing the demand-vector column order.
    pub load_buses: Vec<usize>,
    /// Per-bus injection forms (index = bus position).
    pub m_p: Vec<QuadForm>,
    pub m_q: Vec<QuadForm>,
    /// Per-bus voltage-magnitude-squared forms.
    pub m_v: Vec<QuadForm>,
    /// Per-branch from-end squared-current forms.
    pub m_i: Vec<QuadForm>,
    /// Angle-reference form `e e^T` on the slack imaginary coordinate.
    pub slack_ref: QuadForm,
    /// Equality rows, ordered: P injections, Q injections, slack reference.
    pub equalities: Vec<EqualityRow>,
    /// Inequality rows, ordered: gen P upper, P lower, Q upper, Q lower,
    /// voltage upper, voltage lower, branch current.
    pub inequalities: Vec<InequalityRow>,
    /// Combined linear cost on `G` (reactive part zero by default), per-unit scale.
    pub cost: Vec<f64>,
    /// Generation bounds in per-unit: `[P̲;Q̲]` and `[P̄;Q̄]`.
    pub g_lower: Vec<f64>,
    pub g_upper: Vec<f64>,
    /// Nominal demand vector in per-unit, `[P_d; Q_d]` over loads.
    pub nominal_demand: Vec<f64>,
    pub base_mva: f64,
}

impl QuadraticFormModel {
    pub fn n_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    pub fn voltage_dim(&self) -> usize {
        2 * self.n_buses
    }

    pub fn generation_dim(&self) -> usize {
        2 * self.n_generators
    }

    pub fn demand_dim(&self) -> usize {
        2 * self.n_loads
    }
}

/// Residuals of the compact constraints at one `(v, G, D)` point.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// `v^T L_l v - a_l^T G - b_l^T D` per equality row.
    pub equality: Vec<f64>,
    /// `v^T M_m v - d_m^T D - f_m` per inequality row (positive = violated);
    /// `-inf` for unenforced rows.
    pub inequality: Vec<f64>,
}

impl Residuals {
    pub fn max_equality(&self) -> f64 {
        self.equality.iter().fold(0.0f64, |a, r| a.max(r.abs()))
    }

    pub fn max_violation(&self) -> f64 {
        self.inequality.iter().fold(0.0f64, |a, &s| a.max(s))
    }
}

/// Evaluates the compact equality residuals and inequality slacks.
pub fn evaluate_residuals(
    qf: &QuadraticFormModel,
    v: &[f64],
    g: &[f64],
    d: &[f64],
) -> Result<Residuals, GridError> {
    check_dim("voltage vector", qf.voltage_dim(), v.len())?;
    check_dim("generation vector", qf.generation_dim(), g.len())?;
    check_dim("demand vector", qf.demand_dim(), d.len())?;
    let equality = qf
        .equalities
        .iter()
        .map(|row| row.l.eval(v) - lincomb_dot(&row.a, g) - lincomb_dot(&row.b, d))
        .collect();
    let inequality = qf
        .inequalities
        .iter()
        .map(|row| {
            if row.f.is_infinite() {
                f64::NEG_INFINITY
            } else {
                row.m.eval(v) - lincomb_dot(&row.d, d) - row.f
            }
        })
        .collect();
    Ok(Residuals {
        equality,
        inequality,
    })
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), GridError> {
    if expected != got {
        Err(GridError::Dimension {
            what,
            expected,
            got,
        })
    } else {
        Ok(())
    }
}

/// Box bounds on the demand vector `D = [P_d; Q_d]`, per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nominal: Vec<f64>,
}

impl InputDomain {
    /// The default operating region: each demand coordinate between 60% and
    /// 100% of its nominal value.
    pub fn from_nominal_fraction(qf: &QuadraticFormModel, lo_frac: f64, hi_frac: f64) -> Self {
        let nominal = qf.nominal_demand.clone();
        let mut lower = Vec::with_capacity(nominal.len());
        let mut upper = Vec::with_capacity(nominal.len());
        for &d in &nominal {
            let (a, b) = (lo_frac * d, hi_frac * d);
            lower.push(a.min(b));
            upper.push(a.max(b));
        }
        InputDomain {
            lower,
            upper,
            nominal,
        }
    }

    pub fn default_for(qf: &QuadraticFormModel) -> Self {
        Self::from_nominal_fraction(qf, 0.6, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, d: &[f64], tol: f64) -> bool {
        d.len() == self.dim()
            && d.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo - tol && x <= hi + tol)
    }

    pub fn clip(&self, d: &mut [f64]) {
        for (x, (&lo, &hi)) in d.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(lo, hi);
        }
    }
}
