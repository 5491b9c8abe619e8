//! Bounded-variable primal simplex on a dense tableau.
//!
//! Maximizes `c^T x` over box-bounded variables and linear `<=` / `=` rows.
//! Two phases (artificial variables drive to feasibility), Dantzig pricing
//! with a Bland fallback against cycling, and bound flips for nonbasic
//! variables. All structural variables must have finite lower bounds; the
//! feasible region must be bounded in the objective.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("objective unbounded over the stated box (model bug)")]
    Unbounded,
    #[error("simplex iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
    #[error("variable {0} has lower bound above upper bound")]
    EmptyBox(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `maximize offset + objective^T x  s.t.  rows, lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub rows: Vec<LinRow>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram {
            n,
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            objective: vec![0.0; n],
            offset: 0.0,
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.n += 1;
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(0.0);
        self.n - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LinRow { coeffs, sense, rhs });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Structural variable values (empty when infeasible).
    pub x: Vec<f64>,
}

const TOL_OPT: f64 = 1e-9;
const TOL_PIV: f64 = 1e-9;
const TOL_FEAS: f64 = 1e-7;

struct Tableau {
    /// Dense rows over all columns (structural + slack + artificial).
    a: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Nonbasic-at-upper flag (false = at lower) per column.
    at_upper: Vec<bool>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_total: usize,
}

impl Tableau {
    fn basic_values(&self) -> Vec<f64> {
        let m = self.basis.len();
        let mut xb = self.rhs.clone();
        let is_basic = self.basic_mask();
        for j in 0..self.n_total {
            if is_basic[j] {
                continue;
            }
            let xj = if self.at_upper[j] {
                self.upper[j]
            } else {
                self.lower[j]
            };
            if xj != 0.0 {
                for i in 0..m {
                    xb[i] -= self.a[i][j] * xj;
                }
            }
        }
        xb
    }

    fn basic_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_total];
        for &b in &self.basis {
            mask[b] = true;
        }
        mask
    }

    fn values(&self) -> Vec<f64> {
        let xb = self.basic_values();
        let mut x = vec![0.0; self.n_total];
        for j in 0..self.n_total {
            x[j] = if self.at_upper[j] {
                self.upper[j]
            } else {
                self.lower[j]
            };
        }
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = xb[i];
        }
        x
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.basis.len();
        let mut d = cost.to_vec();
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.n_total {
                    d[j] -= cb * self.a[i][j];
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let m = self.basis.len();
        let piv = self.a[r][q];
        let inv = 1.0 / piv;
        for v in self.a[r].iter_mut() {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.a[i][q];
            if f != 0.0 {
                let (row_r, row_i) = if i < r {
                    let (lo, hi) = self.a.split_at_mut(r);
                    (&hi[0], &mut lo[i])
                } else {
                    let (lo, hi) = self.a.split_at_mut(i);
                    (&lo[r], &mut hi[0])
                };
                for j in 0..self.n_total {
                    row_i[j] -= f * row_r[j];
                }
                self.rhs[i] -= f * self.rhs[r];
            }
        }
        self.basis[r] = q;
    }

    /// Runs primal simplex for the given cost vector. Returns `Ok(())` on
    /// optimality.
    fn optimize(&mut self, cost: &[f64]) -> Result<(), LpError> {
        let m = self.basis.len();
        let max_iters = 200 * (m + self.n_total) + 2000;
        let mut bland = false;
        let mut iters_since_gain = 0usize;
        let mut last_obj = f64::NEG_INFINITY;

        for iter in 0..max_iters {
            let d = self.reduced_costs(cost);
            let is_basic = self.basic_mask();

            // entering column
            let mut q = usize::MAX;
            let mut best = TOL_OPT;
            for j in 0..self.n_total {
                if is_basic[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let gain = if self.at_upper[j] { -d[j] } else { d[j] };
                if gain > TOL_OPT {
                    if bland {
                        q = j;
                        break;
                    }
                    if gain > best {
                        best = gain;
                        q = j;
                    }
                }
            }
            if q == usize::MAX {
                return Ok(());
            }

            let dir: f64 = if self.at_upper[q] { -1.0 } else { 1.0 };
            let xb = self.basic_values();

            // ratio test: own bound span, then blocking basic variables
            let own_span = self.upper[q] - self.lower[q];
            let mut t = own_span;
            let mut leave: Option<(usize, bool)> = None; // (row, hits_upper)
            for i in 0..m {
                let g = -dir * self.a[i][q]; // d x_B_i / d t
                if g > TOL_PIV {
                    let room = self.upper[self.basis[i]] - xb[i];
                    let ratio = room.max(0.0) / g;
                    if ratio < t - 1e-12
                        || (ratio < t + 1e-12
                            && leave.map_or(false, |(r, _)| {
                                self.a[i][q].abs() > self.a[r][q].abs()
                            }))
                    {
                        t = ratio.max(0.0);
                        leave = Some((i, true));
                    }
                } else if g < -TOL_PIV {
                    let room = xb[i] - self.lower[self.basis[i]];
                    let ratio = room.max(0.0) / (-g);
                    if ratio < t - 1e-12
                        || (ratio < t + 1e-12
                            && leave.map_or(false, |(r, _)| {
                                self.a[i][q].abs() > self.a[r][q].abs()
                            }))
                    {
                        t = ratio.max(0.0);
                        leave = Some((i, false));
                    }
                }
            }

            if t.is_infinite() {
                return Err(LpError::Unbounded);
            }

            match leave {
                None => {
                    // bound flip
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, hits_upper)) => {
                    let old = self.basis[r];
                    self.pivot(r, q);
                    self.at_upper[old] = hits_upper;
                    self.at_upper[q] = false; // basic now; flag meaningless
                }
            }

            // cycling guard: switch to Bland when stalled
            let obj: f64 = {
                let x = self.values();
                (0..self.n_total).map(|j| cost[j] * x[j]).sum()
            };
            if obj > last_obj + 1e-12 {
                last_obj = obj;
                iters_since_gain = 0;
                bland = false;
            } else {
                iters_since_gain += 1;
                if iters_since_gain > m + self.n_total {
                    bland = true;
                }
            }
            let _ = iter;
        }
        Err(LpError::IterationLimit(max_iters))
    }
}

/// Solves the LP to the documented 1e-7 feasibility/optimality tolerance.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult, LpError> {
    let n = lp.n;
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + 1e-12 {
            return Err(LpError::EmptyBox(j));
        }
    }
    let m = lp.rows.len();

    // dense rows over structural columns, then slack/artificial columns
    let mut a: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut rhs = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, c) in &row.coeffs {
            a[i][j] += c;
        }
        rhs.push(row.rhs);
    }
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut at_upper = vec![false; n];

    // initial nonbasic point: every structural variable at its lower bound
    let residual: Vec<f64> = (0..m)
        .map(|i| rhs[i] - (0..n).map(|j| a[i][j] * lower[j]).sum::<f64>())
        .collect();

    let add_col = |a: &mut Vec<Vec<f64>>,
                       lower: &mut Vec<f64>,
                       upper: &mut Vec<f64>,
                       at_upper: &mut Vec<bool>,
                       row: usize,
                       coeff: f64|
     -> usize {
        let col = lower.len();
        lower.push(0.0);
        upper.push(f64::INFINITY);
        at_upper.push(false);
        for (r, arow) in a.iter_mut().enumerate() {
            arow.push(if r == row { coeff } else { 0.0 });
        }
        col
    };

    let mut basis = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    for i in 0..m {
        if lp.rows[i].sense == Sense::Le {
            let slack = add_col(&mut a, &mut lower, &mut upper, &mut at_upper, i, 1.0);
            if residual[i] >= 0.0 {
                basis.push(slack);
                continue;
            }
        }
        // artificial column signed so its initial basic value is positive
        let sgn = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
        let art = add_col(&mut a, &mut lower, &mut upper, &mut at_upper, i, sgn);
        if sgn < 0.0 {
            for v in a[i].iter_mut() {
                *v = -*v;
            }
            rhs[i] = -rhs[i];
        }
        artificials.push(art);
        basis.push(art);
    }
    let n_total = lower.len();

    let mut tab = Tableau {
        a,
        rhs,
        basis,
        at_upper,
        lower,
        upper,
        n_total,
    };

    // phase 1: drive artificials to zero
    if !artificials.is_empty() {
        let mut cost1 = vec![0.0; n_total];
        for &j in &artificials {
            cost1[j] = -1.0;
        }
        tab.optimize(&cost1)?;
        let x = tab.values();
        let infeas: f64 = artificials.iter().map(|&j| x[j]).sum();
        if infeas > TOL_FEAS {
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                objective: f64::NEG_INFINITY,
                x: Vec::new(),
            });
        }
        for &j in &artificials {
            tab.upper[j] = 0.0;
        }
    }

    // phase 2
    let mut cost2 = vec![0.0; n_total];
    cost2[..n].copy_from_slice(&lp.objective);
    tab.optimize(&cost2)?;

    let x = tab.values();
    let objective: f64 = lp.offset + (0..n).map(|j| lp.objective[j] * x[j]).sum::<f64>();
    Ok(LpResult {
        status: LpStatus::Optimal,
        objective,
        x: x[..n].to_vec(),
    })
}
