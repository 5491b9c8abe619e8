//! Big-M MILP encodings of trained ReLU networks: worst-case generation
//! constraint violation search and hypercube fitting around the worst-case
//! witness.
//!
//! Variables live in the network's scaled input space; witnesses are
//! reported back in original input units.

use super::ibp::{interval_bounds, LayerBounds};
use super::milp::{solve_milp_bnb, BnbConfig, MilpError, MilpModel, MilpSolution};
use super::simplex::{LinearProgram, Sense};
use crate::nn::{forward, forward_with_preactivations, MlpParams};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluStatus {
    Active,
    Inactive,
    Free,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub bnb: BnbConfig,
    /// Hypercube violation fraction: points must keep `violation >= alpha * v_max`.
    pub alpha: f64,
    /// When false, the hypercube MILP keeps every unstable neuron binary
    /// (exact mode for small nets) instead of applying the 10% fixing rule.
    pub fix_relus: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            bnb: BnbConfig::default(),
            alpha: 0.8,
            fix_relus: true,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct WorstCaseResult {
    /// Certified max violation, clamped at 0 (per-unit of the net's output).
    pub v_g_max: f64,
    /// Witness demand, original input units.
    pub d_wc: Vec<f64>,
    pub component: usize,
    pub side: Side,
    /// Largest absolute optimality gap among the sub-MILPs.
    pub gap: f64,
    pub node_count: usize,
    pub wall_ms: u128,
    pub certified: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypercubeResult {
    /// Half-width in normalized (scaled) input units.
    pub d_normalized: f64,
    /// Witness attaining the distance, original input units.
    pub witness: Vec<f64>,
    pub alpha: f64,
    pub fixed_relu_count: usize,
    pub total_relu_count: usize,
    /// Set when the constraint system was infeasible (alpha too high for
    /// the fixed activation pattern); `d_normalized` is then 0.
    pub infeasible: bool,
}

/// Internal layout of an encoded network: LP variable indices.
struct Encoding {
    lp: LinearProgram,
    input_vars: Vec<usize>,
    /// Pre-activation variable index per hidden layer and neuron.
    zh_vars: Vec<Vec<usize>>,
    /// Post-activation variable index per hidden layer and neuron.
    z_vars: Vec<Vec<usize>>,
    binaries: Vec<usize>,
    binary_names: Vec<(usize, usize)>,
}

impl Encoding {
    fn last_z(&self) -> &[usize] {
        self.z_vars.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Encodes the scaled-input box, affine layers, and ReLUs of `net` into an
/// LP skeleton. ReLU statuses: stable neurons (by bounds) and any statuses
/// forced via `fixed` become linear; the rest get big-M rows + a binary.
fn encode_network(
    net: &MlpParams,
    bounds: &LayerBounds,
    scaled_lo: &[f64],
    scaled_hi: &[f64],
    fixed: Option<&[Vec<ReluStatus>]>,
) -> Encoding {
    let mut lp = LinearProgram::new(0);
    let n_in = net.input_dim();
    let mut input_vars = Vec::with_capacity(n_in);
    for i in 0..n_in {
        input_vars.push(lp.add_var(scaled_lo[i], scaled_hi[i]));
    }

    let mut binaries = Vec::new();
    let mut binary_names = Vec::new();
    let mut zh_all = Vec::new();
    let mut z_all = Vec::new();
    let mut prev: Vec<usize> = input_vars.clone();
    for (k, layer) in net.layers[..net.n_hidden()].iter().enumerate() {
        let rows = layer.w.nrows();
        let mut zh_vars = Vec::with_capacity(rows);
        let mut z_vars = Vec::with_capacity(rows);
        for r in 0..rows {
            let (zl, zu) = (bounds.lo[k][r], bounds.hi[k][r]);
            // pre-activation variable tied to the previous layer
            let zh = lp.add_var(zl, zu);
            let mut row: Vec<(usize, f64)> = vec![(zh, 1.0)];
            for (c, &p) in prev.iter().enumerate() {
                let w = layer.w[(r, c)];
                if w != 0.0 {
                    row.push((p, -w));
                }
            }
            lp.add_row(row, Sense::Eq, layer.b[r]);
            zh_vars.push(zh);

            let status = match fixed.map(|f| f[k][r]) {
                Some(ReluStatus::Active) => ReluStatus::Active,
                Some(ReluStatus::Inactive) => ReluStatus::Inactive,
                _ if zl >= 0.0 => ReluStatus::Active,
                _ if zu <= 0.0 => ReluStatus::Inactive,
                _ => ReluStatus::Free,
            };
            match status {
                ReluStatus::Active => {
                    // fixing y = 1 in the big-M system means Z = Zhat >= 0
                    let z = lp.add_var(zl.max(0.0), zu.max(0.0));
                    lp.add_row(vec![(z, 1.0), (zh, -1.0)], Sense::Eq, 0.0);
                    if zl < 0.0 {
                        lp.add_row(vec![(zh, -1.0)], Sense::Le, 0.0);
                    }
                    z_vars.push(z);
                }
                ReluStatus::Inactive => {
                    // fixing y = 0 means Z = 0 and Zhat <= 0
                    let z = lp.add_var(0.0, 0.0);
                    if zu > 0.0 {
                        lp.add_row(vec![(zh, 1.0)], Sense::Le, 0.0);
                    }
                    z_vars.push(z);
                }
                ReluStatus::Free => {
                    let z = lp.add_var(0.0, zu.max(0.0));
                    let y = lp.add_var(0.0, 1.0);
                    // Z <= Zhat - Zlo (1 - y)
                    lp.add_row(vec![(z, 1.0), (zh, -1.0), (y, -zl)], Sense::Le, -zl);
                    // Z >= Zhat
                    lp.add_row(vec![(zh, 1.0), (z, -1.0)], Sense::Le, 0.0);
                    // Z <= Zhi y
                    lp.add_row(vec![(z, 1.0), (y, -zu)], Sense::Le, 0.0);
                    binaries.push(y);
                    binary_names.push((k, r));
                    z_vars.push(z);
                }
            }
        }
        prev = z_vars.clone();
        zh_all.push(zh_vars);
        z_all.push(z_vars);
    }
    Encoding {
        lp,
        input_vars,
        zh_vars: zh_all,
        z_vars: z_all,
        binaries,
        binary_names,
    }
}

/// Linear expression of scaled output component `m` over the last hidden
/// layer's post-activations: `(coeffs over last_z, constant)`.
fn output_expr(net: &MlpParams, last_z: &[usize], m: usize) -> (Vec<(usize, f64)>, f64) {
    let out = net.layers.last().unwrap();
    let scale = net.out_scale[m];
    let coeffs: Vec<(usize, f64)> = last_z
        .iter()
        .enumerate()
        .filter_map(|(c, &var)| {
            let w = out.w[(m, c)] * scale;
            (w != 0.0).then_some((var, w))
        })
        .collect();
    let constant = net.out_offset[m] + scale * out.b[m];
    (coeffs, constant)
}

fn scale_box(net: &MlpParams, box_lo: &[f64], box_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = net.input_dim();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        if net.input_range[i] == 0.0 {
            lo.push(0.5);
            hi.push(0.5);
        } else {
            let a = (box_lo[i] - net.input_lo[i]) / net.input_range[i];
            let b = (box_hi[i] - net.input_lo[i]) / net.input_range[i];
            lo.push(a.min(b));
            hi.push(a.max(b));
        }
    }
    (lo, hi)
}

fn unscale_point(net: &MlpParams, x: &[f64], fallback: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if net.input_range[i] == 0.0 {
                fallback[i]
            } else {
                net.input_lo[i] + net.input_range[i] * x[i]
            }
        })
        .collect()
}

/// Builds the MILP maximizing the violation of output component `m`:
/// `G_m - limit` for [`Side::Upper`], `limit - G_m` for [`Side::Lower`],
/// over the input box (original units).
pub fn encode_worstcase(
    net: &MlpParams,
    bounds: &LayerBounds,
    box_lo: &[f64],
    box_hi: &[f64],
    component: usize,
    side: Side,
    limit: f64,
) -> MilpModel {
    let (slo, shi) = scale_box(net, box_lo, box_hi);
    let mut enc = encode_network(net, bounds, &slo, &shi, None);
    let (coeffs, constant) = output_expr(net, enc.last_z(), component);
    let sgn = match side {
        Side::Upper => 1.0,
        Side::Lower => -1.0,
    };
    for (var, w) in coeffs {
        enc.lp.objective[var] += sgn * w;
    }
    enc.lp.offset = sgn * (constant - limit);
    MilpModel {
        lp: enc.lp,
        binaries: enc.binaries,
        input_vars: enc.input_vars,
        binary_names: enc.binary_names,
    }
}

/// Worst constraint residual of the big-M encoding at the point induced by
/// a forward pass at `d`, with binaries fixed to the true activation
/// pattern. Returns the max over row residuals (`Eq` as absolute value,
/// `Le` as positive excess) and variable-bound violations; a sound encoding
/// keeps this at numerical noise for every input in the box.
pub fn encoding_feasibility_residual(
    net: &MlpParams,
    box_lo: &[f64],
    box_hi: &[f64],
    d: &[f64],
) -> f64 {
    let bounds = interval_bounds(net, box_lo, box_hi);
    let (slo, shi) = scale_box(net, box_lo, box_hi);
    let enc = encode_network(net, &bounds, &slo, &shi, None);
    let trace = forward_with_preactivations(net, d).expect("dimension checked");

    let mut point = vec![0.0; enc.lp.n];
    let scaled = net.scale_input(d);
    for (i, &var) in enc.input_vars.iter().enumerate() {
        point[var] = scaled[i];
    }
    for k in 0..enc.zh_vars.len() {
        for r in 0..enc.zh_vars[k].len() {
            point[enc.zh_vars[k][r]] = trace.zhat[k][r];
            point[enc.z_vars[k][r]] = trace.z[k][r];
        }
    }
    for (bi, &(k, r)) in enc.binary_names.iter().enumerate() {
        point[enc.binaries[bi]] = if trace.zhat[k][r] > 0.0 { 1.0 } else { 0.0 };
    }

    let mut worst = 0.0f64;
    for i in 0..enc.lp.n {
        worst = worst.max(enc.lp.lower[i] - point[i]);
        worst = worst.max(point[i] - enc.lp.upper[i]);
    }
    for row in &enc.lp.rows {
        let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * point[v]).sum();
        let r = lhs - row.rhs;
        worst = worst.max(match row.sense {
            Sense::Eq => r.abs(),
            Sense::Le => r,
        });
    }
    worst
}

/// Violation of one output component at a point, by forward pass.
pub fn violation_at(net: &MlpParams, d: &[f64], component: usize, side: Side, limit: f64) -> f64 {
    let out = forward(net, d).expect("dimension checked");
    match side {
        Side::Upper => out[component] - limit,
        Side::Lower => limit - out[component],
    }
}

/// Solves one worst-case MILP, returning `(solution, witness_d)`. The
/// branch-and-bound incumbent heuristic is a forward pass at each node's
/// relaxation input, which always yields a feasible encoding point.
fn solve_component(
    net: &MlpParams,
    bounds: &LayerBounds,
    box_lo: &[f64],
    box_hi: &[f64],
    component: usize,
    side: Side,
    limit: f64,
    bnb: &BnbConfig,
) -> Result<(MilpSolution, Vec<f64>), MilpError> {
    let (slo, shi) = scale_box(net, box_lo, box_hi);
    let mut enc = encode_network(net, bounds, &slo, &shi, None);
    let (coeffs, constant) = output_expr(net, enc.last_z(), component);
    let sgn = match side {
        Side::Upper => 1.0,
        Side::Lower => -1.0,
    };
    for &(var, w) in &coeffs {
        enc.lp.objective[var] += sgn * w;
    }
    enc.lp.offset = sgn * (constant - limit);

    let n_in = net.input_dim();
    let nominal: Vec<f64> = (0..n_in).map(|i| 0.5 * (box_lo[i] + box_hi[i])).collect();
    let model = MilpModel {
        lp: enc.lp,
        binaries: enc.binaries,
        input_vars: enc.input_vars,
        binary_names: enc.binary_names,
    };
    let model_len = model.lp.n;
    let heuristic = |relax: &[f64]| -> Option<(f64, Vec<f64>)> {
        let x_scaled: Vec<f64> = model.input_vars.iter().map(|&v| relax[v]).collect();
        let d = unscale_point(net, &x_scaled, &nominal);
        let trace = forward_with_preactivations(net, &d).ok()?;
        let val = match side {
            Side::Upper => trace.output[component] - limit,
            Side::Lower => limit - trace.output[component],
        };
        let mut point = vec![0.0; model_len];
        for (i, &var) in model.input_vars.iter().enumerate() {
            point[var] = if net.input_range[i] == 0.0 { 0.5 } else { x_scaled[i] };
        }
        for k in 0..enc.zh_vars.len() {
            for r in 0..enc.zh_vars[k].len() {
                point[enc.zh_vars[k][r]] = trace.zhat[k][r];
                point[enc.z_vars[k][r]] = trace.z[k][r];
            }
        }
        for (bi, &(k, r)) in model.binary_names.iter().enumerate() {
            point[model.binaries[bi]] = if trace.zhat[k][r] > 0.0 { 1.0 } else { 0.0 };
        }
        Some((val, point))
    };
    let sol = solve_milp_bnb(&model, bnb, Some(&heuristic))?;
    let x_scaled: Vec<f64> = model.input_vars.iter().map(|&v| sol.x[v]).collect();
    let d = unscale_point(net, &x_scaled, &nominal);
    Ok((sol, d))
}

/// Finds the worst violation of any output component against its bounds:
/// `2 * n_outputs` MILPs (upper and lower side each), global max, clamped
/// at 0.
pub fn find_worst_case(
    net: &MlpParams,
    box_lo: &[f64],
    box_hi: &[f64],
    g_lower: &[f64],
    g_upper: &[f64],
    cfg: &VerifyConfig,
) -> Result<WorstCaseResult, MilpError> {
    let start = Instant::now();
    let bounds = interval_bounds(net, box_lo, box_hi);
    let n_out = net.output_dim();
    assert_eq!(g_lower.len(), n_out);
    assert_eq!(g_upper.len(), n_out);

    let mut best: Option<(f64, Vec<f64>, usize, Side)> = None;
    let mut max_gap: f64 = 0.0;
    let mut nodes = 0usize;
    let mut certified = true;
    for m in 0..n_out {
        for (side, limit) in [(Side::Upper, g_upper[m]), (Side::Lower, g_lower[m])] {
            let (sol, d) = match solve_component(
                net, &bounds, box_lo, box_hi, m, side, limit, &cfg.bnb,
            ) {
                Ok(r) => r,
                Err(MilpError::BudgetExhausted { partial }) => {
                    certified = false;
                    nodes += partial.node_count;
                    max_gap = max_gap.max(partial.gap);
                    continue;
                }
                Err(e) => return Err(e),
            };
            nodes += sol.node_count;
            max_gap = max_gap.max(sol.gap);
            certified &= sol.certified;
            if best.as_ref().map_or(true, |(v, ..)| sol.objective > *v) {
                best = Some((sol.objective, d, m, side));
            }
        }
    }
    let (v_raw, d_wc, component, side) = best.ok_or(MilpError::Infeasible)?;
    Ok(WorstCaseResult {
        v_g_max: v_raw.max(0.0),
        d_wc,
        component,
        side,
        gap: max_gap,
        node_count: nodes,
        wall_ms: start.elapsed().as_millis(),
        certified,
    })
}

/// The 10% fixing rule: a neuron is fixed active when its pre-activation at
/// the witness exceeds a tenth of its upper bound, fixed inactive when below
/// a tenth of its lower bound, otherwise left binary.
pub fn fix_relu_statuses(
    net: &MlpParams,
    bounds: &LayerBounds,
    d_wc: &[f64],
) -> Vec<Vec<ReluStatus>> {
    let trace = forward_with_preactivations(net, d_wc).expect("dimension checked");
    trace
        .zhat
        .iter()
        .enumerate()
        .map(|(k, zh)| {
            (0..zh.len())
                .map(|r| {
                    let z = zh[r];
                    let (lo, hi) = (bounds.lo[k][r], bounds.hi[k][r]);
                    if z > 0.1 * hi {
                        ReluStatus::Active
                    } else if z < 0.1 * lo {
                        ReluStatus::Inactive
                    } else {
                        ReluStatus::Free
                    }
                })
                .collect()
        })
        .collect()
}

/// Fits the largest hypercube around `wc.d_wc`: maximizes the infinity-norm
/// distance at which a violation of `alpha * v_g_max` still occurs, with
/// ReLU statuses fixed per [`fix_relu_statuses`] (unless exact mode).
pub fn fit_hypercube(
    net: &MlpParams,
    box_lo: &[f64],
    box_hi: &[f64],
    wc: &WorstCaseResult,
    limit: f64,
    cfg: &VerifyConfig,
) -> Result<HypercubeResult, MilpError> {
    assert!(wc.v_g_max > 0.0, "hypercube needs a positive violation");
    assert!(cfg.alpha > 0.0 && cfg.alpha < 1.0);
    let n_in = net.input_dim();

    // restricted box: input domain intersected with a local cube of
    // half-width 0.5 (normalized units) around the witness
    let (dom_lo, dom_hi) = scale_box(net, box_lo, box_hi);
    let nominal: Vec<f64> = (0..n_in).map(|i| 0.5 * (box_lo[i] + box_hi[i])).collect();
    let x_wc: Vec<f64> = (0..n_in)
        .map(|i| {
            if net.input_range[i] == 0.0 {
                0.5
            } else {
                (wc.d_wc[i] - net.input_lo[i]) / net.input_range[i]
            }
        })
        .collect();
    let r_lo: Vec<f64> = (0..n_in).map(|i| dom_lo[i].max(x_wc[i] - 0.5)).collect();
    let r_hi: Vec<f64> = (0..n_in).map(|i| dom_hi[i].min(x_wc[i] + 0.5)).collect();
    let restricted_lo = unscale_point(net, &r_lo, &nominal);
    let restricted_hi = unscale_point(net, &r_hi, &nominal);
    let bounds = interval_bounds(net, &restricted_lo, &restricted_hi);

    let statuses = if cfg.fix_relus {
        Some(fix_relu_statuses(net, &bounds, &wc.d_wc))
    } else {
        None
    };
    let total_relu: usize = bounds.lo.iter().map(|l| l.len()).sum();
    let fixed_count = statuses.as_ref().map_or(0, |s| {
        s.iter()
            .flat_map(|l| l.iter())
            .filter(|&&st| st != ReluStatus::Free)
            .count()
    });

    let mut enc = encode_network(net, &bounds, &r_lo, &r_hi, statuses.as_deref());

    // violation constraint: out(x) >= alpha * v + limit (upper side) etc.
    let (coeffs, constant) = output_expr(net, enc.last_z(), wc.component);
    let threshold = cfg.alpha * wc.v_g_max;
    match wc.side {
        Side::Upper => {
            // -(out) <= -(threshold + limit)
            let row = coeffs.iter().map(|&(v, w)| (v, -w)).collect();
            enc.lp
                .add_row(row, Sense::Le, constant - threshold - limit);
        }
        Side::Lower => {
            // out <= limit - threshold
            let row = coeffs.clone();
            enc.lp.add_row(row, Sense::Le, limit - threshold - constant);
        }
    }

    // d = ||x - x_wc||_inf via per-coordinate attaining-side disjunction
    let d_cap = (0..n_in)
        .map(|i| (r_hi[i] - x_wc[i]).abs().max((x_wc[i] - r_lo[i]).abs()))
        .fold(0.0f64, f64::max);
    let d_var = enc.lp.add_var(0.0, d_cap);
    enc.lp.objective[d_var] = 1.0;
    let big_m = 2.0 * d_cap + 1.0;
    let mut select_row: Vec<(usize, f64)> = Vec::new();
    let mut extra_binaries = Vec::new();
    for i in 0..n_in {
        let xv = enc.input_vars[i];
        // positive side: d <= (x_i - x_wc_i) + M (1 - w_plus)
        let w_plus = enc.lp.add_var(0.0, 1.0);
        enc.lp.add_row(
            vec![(d_var, 1.0), (xv, -1.0), (w_plus, big_m)],
            Sense::Le,
            big_m - x_wc[i],
        );
        // negative side: d <= (x_wc_i - x_i) + M (1 - w_minus)
        let w_minus = enc.lp.add_var(0.0, 1.0);
        enc.lp.add_row(
            vec![(d_var, 1.0), (xv, 1.0), (w_minus, big_m)],
            Sense::Le,
            big_m + x_wc[i],
        );
        select_row.push((w_plus, 1.0));
        select_row.push((w_minus, 1.0));
        extra_binaries.push(w_plus);
        extra_binaries.push(w_minus);
    }
    enc.lp.add_row(select_row, Sense::Eq, 1.0);

    let mut binaries = enc.binaries.clone();
    let names_len = enc.binary_names.len();
    let mut binary_names = enc.binary_names.clone();
    for (j, &b) in extra_binaries.iter().enumerate() {
        binaries.push(b);
        binary_names.push((usize::MAX, names_len + j)); // coordinate selectors
    }
    let model = MilpModel {
        lp: enc.lp,
        binaries,
        input_vars: enc.input_vars,
        binary_names,
    };

    match solve_milp_bnb(&model, &cfg.bnb, None) {
        Ok(sol) => {
            let x_scaled: Vec<f64> = model.input_vars.iter().map(|&v| sol.x[v]).collect();
            let witness = unscale_point(net, &x_scaled, &nominal);
            Ok(HypercubeResult {
                d_normalized: sol.objective.max(0.0),
                witness,
                alpha: cfg.alpha,
                fixed_relu_count: fixed_count,
                total_relu_count: total_relu,
                infeasible: false,
            })
        }
        Err(MilpError::Infeasible) => Ok(HypercubeResult {
            d_normalized: 0.0,
            witness: wc.d_wc.clone(),
            alpha: cfg.alpha,
            fixed_relu_count: fixed_count,
            total_relu_count: total_relu,
            infeasible: true,
        }),
        Err(e) => Err(e),
    }
}
