//! ReLU MLPs with manual backpropagation, Adam, and the label / power-flow
//! loss terms.
//!
//! Two networks form a pair: one maps demand to generation setpoints, the
//! other to cartesian voltages. Inputs are affinely scaled to `[0,1]`,
//! generation outputs are scaled by the generator bounds, and the slack
//! imaginary voltage output is hardwired to zero.

use crate::dataset::{Dataset, Sample, Split};
use crate::grid::{lincomb_dot, InputDomain, QuadraticFormModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected input of size {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("model file malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// One ReLU MLP with boundary scaling transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Hidden layers followed by the identity output layer.
    pub layers: Vec<Layer>,
    /// Input scaling `x = (d - lo) / range`; degenerate coordinates
    /// (range 0) map to the constant 0.5.
    pub input_lo: Vec<f64>,
    pub input_range: Vec<f64>,
    /// Output scaling `pred = offset + scale .* y`.
    pub out_scale: Vec<f64>,
    pub out_offset: Vec<f64>,
    /// Output components hardwired to zero.
    pub zero_outputs: Vec<usize>,
}

impl MlpParams {
    /// Seeded uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) initialization.
    pub fn random(
        dims: &[usize],
        input_lo: Vec<f64>,
        input_range: Vec<f64>,
        out_scale: Vec<f64>,
        out_offset: Vec<f64>,
        zero_outputs: Vec<usize>,
        seed: u64,
    ) -> Self {
        assert!(dims.len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 1..dims.len() {
            let (rows, cols) = (dims[k], dims[k - 1]);
            let bound = (1.0 / cols as f64).sqrt();
            let w = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound));
            let b = DVector::from_fn(rows, |_, _| rng.gen_range(-bound..bound));
            layers.push(Layer { w, b });
        }
        MlpParams {
            layers,
            input_lo,
            input_range,
            out_scale,
            out_offset,
            zero_outputs,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Number of hidden (ReLU) layers.
    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn scale_input(&self, d: &[f64]) -> DVector<f64> {
        DVector::from_fn(d.len(), |i, _| {
            if self.input_range[i] == 0.0 {
                0.5
            } else {
                (d[i] - self.input_lo[i]) / self.input_range[i]
            }
        })
    }

    fn scale_output(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut out: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(i, &v)| self.out_offset[i] + self.out_scale[i] * v)
            .collect();
        for &i in &self.zero_outputs {
            out[i] = 0.0;
        }
        out
    }
}

/// Per-layer intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Scaled input.
    pub x: DVector<f64>,
    /// Pre-activations of each hidden layer.
    pub zhat: Vec<DVector<f64>>,
    /// Post-activations of each hidden layer.
    pub z: Vec<DVector<f64>>,
    /// Raw (unscaled) output.
    pub raw: DVector<f64>,
    /// Scaled prediction.
    pub output: Vec<f64>,
}

impl ForwardTrace {
    /// Activation pattern `y_k = 1[zhat_k > 0]` per hidden layer.
    pub fn pattern(&self) -> Vec<Vec<bool>> {
        self.zhat
            .iter()
            .map(|zh| zh.iter().map(|&v| v > 0.0).collect())
            .collect()
    }
}

pub fn forward(net: &MlpParams, d: &[f64]) -> Result<Vec<f64>, NnError> {
    Ok(forward_with_preactivations(net, d)?.output)
}

pub fn forward_with_preactivations(net: &MlpParams, d: &[f64]) -> Result<ForwardTrace, NnError> {
    if d.len() != net.input_dim() {
        return Err(NnError::Dimension {
            expected: net.input_dim(),
            got: d.len(),
        });
    }
    let x = net.scale_input(d);
    let n_hidden = net.n_hidden();
    let mut zhat = Vec::with_capacity(n_hidden);
    let mut z = Vec::with_capacity(n_hidden);
    let mut cur = x.clone();
    for layer in &net.layers[..n_hidden] {
        let zh = &layer.w * &cur + &layer.b;
        let zk = zh.map(|v| v.max(0.0));
        zhat.push(zh);
        cur = zk.clone();
        z.push(zk);
    }
    let out_layer = net.layers.last().unwrap();
    let raw = &out_layer.w * &cur + &out_layer.b;
    let output = net.scale_output(&raw);
    Ok(ForwardTrace {
        x,
        zhat,
        z,
        raw,
        output,
    })
}

/// Mean over samples of the mean absolute componentwise error.
pub fn loss_l0(predictions: &[Vec<f64>], labels: &[Vec<f64>]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        assert_eq!(p.len(), l.len());
        let e: f64 = p.iter().zip(l).map(|(a, b)| (a - b).abs()).sum();
        acc += e / p.len() as f64;
    }
    acc / predictions.len() as f64
}

/// Mean over the batch of the summed equality and inequality constraint
/// violations of the predictions.
pub fn loss_lpf(
    qf: &QuadraticFormModel,
    d_batch: &[Vec<f64>],
    g_batch: &[Vec<f64>],
    v_batch: &[Vec<f64>],
) -> f64 {
    assert_eq!(d_batch.len(), g_batch.len());
    assert_eq!(d_batch.len(), v_batch.len());
    if d_batch.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..d_batch.len() {
        acc += sample_pf_violation(qf, &d_batch[i], &g_batch[i], &v_batch[i]).0;
    }
    acc / d_batch.len() as f64
}

/// `sigma_eq + sigma_ineq` of one sample, plus the per-row terms needed
/// for the gradient: `(value, eq_residuals, active_inequality_slacks)`.
fn sample_pf_violation(
    qf: &QuadraticFormModel,
    d: &[f64],
    g: &[f64],
    v: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut sigma = 0.0;
    let mut eq = Vec::with_capacity(qf.equalities.len());
    for row in &qf.equalities {
        let r = row.l.eval(v) - lincomb_dot(&row.a, g) - lincomb_dot(&row.b, d);
        sigma += r.abs();
        eq.push(r);
    }
    let mut ineq = Vec::with_capacity(qf.inequalities.len());
    for row in &qf.inequalities {
        let s = if row.f.is_infinite() {
            0.0
        } else {
            (row.m.eval(v) - lincomb_dot(&row.d, d) - row.f).max(0.0)
        };
        sigma += s;
        ineq.push(s);
    }
    (sigma, eq, ineq)
}

/// The two networks of the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PfnnPair {
    pub net_g: MlpParams,
    pub net_v: MlpParams,
}

impl PfnnPair {
    /// Fresh pair for a case: demand in, generation / voltages out, with the
    /// default 3x20 hidden shape unless overridden.
    pub fn new(qf: &QuadraticFormModel, domain: &InputDomain, hidden: &[usize], seed: u64) -> Self {
        let n_in = qf.demand_dim();
        let input_lo = domain.lower.clone();
        let input_range: Vec<f64> = domain
            .upper
            .iter()
            .zip(&domain.lower)
            .map(|(u, l)| u - l)
            .collect();

        let mut dims_g = vec![n_in];
        dims_g.extend_from_slice(hidden);
        dims_g.push(qf.generation_dim());
        let g_scale: Vec<f64> = qf
            .g_upper
            .iter()
            .zip(&qf.g_lower)
            .map(|(u, l)| if u > l { u - l } else { 1.0 })
            .collect();
        let net_g = MlpParams::random(
            &dims_g,
            input_lo.clone(),
            input_range.clone(),
            g_scale,
            qf.g_lower.clone(),
            Vec::new(),
            seed,
        );

        let mut dims_v = vec![n_in];
        dims_v.extend_from_slice(hidden);
        dims_v.push(qf.voltage_dim());
        let net_v = MlpParams::random(
            &dims_v,
            input_lo,
            input_range,
            vec![1.0; qf.voltage_dim()],
            vec![0.0; qf.voltage_dim()],
            vec![qf.n_buses + qf.slack],
            seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        );
        PfnnPair { net_g, net_v }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub lambda0: f64,
    pub lambda_pf: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 600,
            lambda0: 1.0,
            lambda_pf: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l0_g: f64,
    pub l0_v: f64,
    pub l_pf: f64,
    pub total: f64,
}

/// Per-layer gradient tensors mirroring one network.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl NetGrads {
    fn zeros(net: &MlpParams) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                        DVector::zeros(l.b.len()),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairGrads {
    pub net_g: NetGrads,
    pub net_v: NetGrads,
}

fn sign0(x: f64) -> f64 {
    // L1 subgradient with the tie at zero resolved to 0
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Backpropagates `dL/d(raw output)` through one traced network.
fn backprop(net: &MlpParams, trace: &ForwardTrace, d_raw: &DVector<f64>, grads: &mut NetGrads) {
    let mut delta = d_raw.clone();
    for k in (0..net.layers.len()).rev() {
        let input = if k == 0 { &trace.x } else { &trace.z[k - 1] };
        grads.layers[k].0 += &delta * input.transpose();
        grads.layers[k].1 += &delta;
        if k > 0 {
            let mut prev = net.layers[k].w.transpose() * &delta;
            for (i, v) in prev.iter_mut().enumerate() {
                if trace.zhat[k - 1][i] <= 0.0 {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Full-batch loss and exact parameter gradients of
/// `lambda0 * (L0_G + L0_v) + lambda_pf * L_PF`.
///
/// Unlabeled samples contribute only to the power-flow term; with
/// `lambda0 = 0` labels are never read.
pub fn batch_loss_and_grads(
    pair: &PfnnPair,
    batch: &[&Sample],
    qf: &QuadraticFormModel,
    cfg: &TrainingConfig,
) -> Result<(LossBreakdown, PairGrads), NnError> {
    let mut grads = PairGrads {
        net_g: NetGrads::zeros(&pair.net_g),
        net_v: NetGrads::zeros(&pair.net_v),
    };
    let n_all = batch.len();
    let n_labeled = if cfg.lambda0 > 0.0 {
        batch.iter().filter(|s| s.labeled).count()
    } else {
        0
    };

    let mut l0_g = 0.0;
    let mut l0_v = 0.0;
    let mut l_pf = 0.0;
    let dim_g = pair.net_g.output_dim();
    let dim_v = pair.net_v.output_dim();

    for s in batch {
        let trace_g = forward_with_preactivations(&pair.net_g, &s.d)?;
        let trace_v = forward_with_preactivations(&pair.net_v, &s.d)?;
        let mut d_pred_g = vec![0.0; dim_g];
        let mut d_pred_v = vec![0.0; dim_v];

        if cfg.lambda0 > 0.0 && s.labeled {
            let g_label = s.g.as_ref().expect("labeled sample has G");
            let v_label = s.v.as_ref().expect("labeled sample has v");
            let w = cfg.lambda0 / (n_labeled as f64);
            let mut e = 0.0;
            for j in 0..dim_g {
                let diff = trace_g.output[j] - g_label[j];
                e += diff.abs();
                d_pred_g[j] += w * sign0(diff) / dim_g as f64;
            }
            l0_g += e / dim_g as f64;
            let mut e = 0.0;
            for j in 0..dim_v {
                let diff = trace_v.output[j] - v_label[j];
                e += diff.abs();
                d_pred_v[j] += w * sign0(diff) / dim_v as f64;
            }
            l0_v += e / dim_v as f64;
        }

        if cfg.lambda_pf > 0.0 {
            let (sigma, eq, ineq) =
                sample_pf_violation(qf, &s.d, &trace_g.output, &trace_v.output);
            l_pf += sigma;
            let w = cfg.lambda_pf / n_all as f64;
            for (row, &r) in qf.equalities.iter().zip(&eq) {
                let sg = sign0(r);
                if sg == 0.0 {
                    continue;
                }
                row.l
                    .add_scaled_grad(&trace_v.output, w * sg, &mut d_pred_v);
                for &(i, a) in &row.a {
                    d_pred_g[i] -= w * sg * a;
                }
            }
            for (row, &sl) in qf.inequalities.iter().zip(&ineq) {
                if sl > 0.0 {
                    row.m.add_scaled_grad(&trace_v.output, w, &mut d_pred_v);
                }
            }
        }

        // chain through output scaling and the hardwired-zero rows
        for &i in &pair.net_g.zero_outputs {
            d_pred_g[i] = 0.0;
        }
        for &i in &pair.net_v.zero_outputs {
            d_pred_v[i] = 0.0;
        }
        let d_raw_g =
            DVector::from_fn(dim_g, |i, _| d_pred_g[i] * pair.net_g.out_scale[i]);
        let d_raw_v =
            DVector::from_fn(dim_v, |i, _| d_pred_v[i] * pair.net_v.out_scale[i]);
        backprop(&pair.net_g, &trace_g, &d_raw_g, &mut grads.net_g);
        backprop(&pair.net_v, &trace_v, &d_raw_v, &mut grads.net_v);
    }

    let l0_g = if n_labeled > 0 {
        l0_g / n_labeled as f64
    } else {
        0.0
    };
    let l0_v = if n_labeled > 0 {
        l0_v / n_labeled as f64
    } else {
        0.0
    };
    let l_pf = if n_all > 0 { l_pf / n_all as f64 } else { 0.0 };
    let total = cfg.lambda0 * (l0_g + l0_v) + cfg.lambda_pf * l_pf;
    Ok((
        LossBreakdown {
            l0_g,
            l0_v,
            l_pf,
            total,
        },
        grads,
    ))
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub v: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub t: u32,
}

impl AdamState {
    pub fn new(net: &MlpParams) -> Self {
        let zeros: Vec<(DMatrix<f64>, DVector<f64>)> = net
            .layers
            .iter()
            .map(|l| {
                (
                    DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                    DVector::zeros(l.b.len()),
                )
            })
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Standard bias-corrected Adam descent step.
pub fn adam_step(net: &mut MlpParams, grads: &NetGrads, state: &mut AdamState, cfg: &TrainingConfig) {
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for k in 0..net.layers.len() {
        let (gw, gb) = &grads.layers[k];
        let (mw, mb) = &mut state.m[k];
        let (vw, vb) = &mut state.v[k];
        *mw = &*mw * cfg.beta1 + gw * (1.0 - cfg.beta1);
        *mb = &*mb * cfg.beta1 + gb * (1.0 - cfg.beta1);
        *vw = &*vw * cfg.beta2 + gw.component_mul(gw) * (1.0 - cfg.beta2);
        *vb = &*vb * cfg.beta2 + gb.component_mul(gb) * (1.0 - cfg.beta2);
        let layer = &mut net.layers[k];
        for (p, (m, v)) in layer
            .w
            .iter_mut()
            .zip(mw.iter().zip(vw.iter()))
        {
            *p -= cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
        }
        for (p, (m, v)) in layer.b.iter_mut().zip(mb.iter().zip(vb.iter())) {
            *p -= cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
        }
    }
}

/// Hook invoked after the epochs listed in `schedule`; may grow the dataset.
pub type EpochHook<'a> = dyn FnMut(usize, &PfnnPair, &mut Dataset) + 'a;

/// Full-batch training over the train split. Deterministic for fixed inputs.
pub fn train(
    pair: &mut PfnnPair,
    dataset: &mut Dataset,
    qf: &QuadraticFormModel,
    cfg: &TrainingConfig,
    schedule: &[usize],
    hook: &mut EpochHook,
) -> Result<Vec<LossBreakdown>, NnError> {
    let mut state_g = AdamState::new(&pair.net_g);
    let mut state_v = AdamState::new(&pair.net_v);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batch: Vec<&Sample> = dataset
            .samples
            .iter()
            .filter(|s| s.split == Split::Train)
            .collect();
        let (loss, grads) = batch_loss_and_grads(pair, &batch, qf, cfg)?;
        if !loss.total.is_finite() {
            return Err(NnError::NonFinite { epoch });
        }
        adam_step(&mut pair.net_g, &grads.net_g, &mut state_g, cfg);
        adam_step(&mut pair.net_v, &grads.net_v, &mut state_v, cfg);
        history.push(loss);
        if schedule.contains(&epoch) {
            hook(epoch, pair, dataset);
        }
    }
    Ok(history)
}

// --- serialization -----------------------------------------------------

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerJson {
    rows: usize,
    cols: usize,
    /// Row-major weight entries.
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpJson {
    layers: Vec<LayerJson>,
    input_lo: Vec<f64>,
    input_range: Vec<f64>,
    out_scale: Vec<f64>,
    out_offset: Vec<f64>,
    zero_outputs: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PairJson {
    format_version: u32,
    net_g: MlpJson,
    net_v: MlpJson,
}

fn net_to_json(net: &MlpParams) -> MlpJson {
    MlpJson {
        layers: net
            .layers
            .iter()
            .map(|l| LayerJson {
                rows: l.w.nrows(),
                cols: l.w.ncols(),
                w: l.w.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect(),
                b: l.b.iter().copied().collect(),
            })
            .collect(),
        input_lo: net.input_lo.clone(),
        input_range: net.input_range.clone(),
        out_scale: net.out_scale.clone(),
        out_offset: net.out_offset.clone(),
        zero_outputs: net.zero_outputs.clone(),
    }
}

fn net_from_json(j: MlpJson) -> Result<MlpParams, NnError> {
    let mut layers = Vec::with_capacity(j.layers.len());
    for l in j.layers {
        if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
            return Err(NnError::Malformed("layer dimensions disagree".into()));
        }
        layers.push(Layer {
            w: DMatrix::from_row_slice(l.rows, l.cols, &l.w),
            b: DVector::from_vec(l.b),
        });
    }
    if layers.is_empty() {
        return Err(NnError::Malformed("no layers".into()));
    }
    Ok(MlpParams {
        layers,
        input_lo: j.input_lo,
        input_range: j.input_range,
        out_scale: j.out_scale,
        out_offset: j.out_offset,
        zero_outputs: j.zero_outputs,
    })
}

pub fn pair_to_json(pair: &PfnnPair) -> String {
    let j = PairJson {
        format_version: MODEL_FORMAT_VERSION,
        net_g: net_to_json(&pair.net_g),
        net_v: net_to_json(&pair.net_v),
    };
    serde_json::to_string_pretty(&j).expect("model serialization")
}

pub fn pair_from_json(text: &str) -> Result<PfnnPair, NnError> {
    let j: PairJson =
        serde_json::from_str(text).map_err(|e| NnError::Malformed(e.to_string()))?;
    if j.format_version != MODEL_FORMAT_VERSION {
        return Err(NnError::FormatVersion(j.format_version));
    }
    Ok(PfnnPair {
        net_g: net_from_json(j.net_g)?,
        net_v: net_from_json(j.net_v)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 1-2-1 net computing |x|: w1 = [1, -1], w2 = [1, 1].
    pub(crate) fn abs_net() -> MlpParams {
        MlpParams {
            layers: vec![
                Layer {
                    w: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                    b: DVector::zeros(2),
                },
                Layer {
                    w: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                    b: DVector::zeros(1),
                },
            ],
            input_lo: vec![0.0],
            input_range: vec![1.0],
            out_scale: vec![1.0],
            out_offset: vec![0.0],
            zero_outputs: vec![],
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = abs_net();
        for l in &mut net.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        assert_eq!(forward(&net, &[3.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn abs_net_computes_abs() {
        let net = abs_net();
        for x in [-2.0, -0.5, 0.0, 1.3, 4.0] {
            let y = forward(&net, &[x]).unwrap();
            assert!((y[0] - x.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn abs_net_activation_pattern() {
        let net = abs_net();
        let t = forward_with_preactivations(&net, &[1.0]).unwrap();
        assert_eq!(t.pattern(), vec![vec![true, false]]);
        let t = forward_with_preactivations(&net, &[-1.0]).unwrap();
        assert_eq!(t.pattern(), vec![vec![false, true]]);
    }

    #[test]
    fn l0_hand_value() {
        assert_eq!(loss_l0(&[vec![0.0, 0.0]], &[vec![1.0, 2.0]]), 1.5);
        assert_eq!(loss_l0(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let net = abs_net();
        assert!(matches!(
            forward(&net, &[1.0, 2.0]),
            Err(NnError::Dimension { .. })
        ));
    }

    #[test]
    fn serialization_roundtrip() {
        let net = abs_net();
        let pair = PfnnPair {
            net_g: net.clone(),
            net_v: net,
        };
        let text = pair_to_json(&pair);
        let back = pair_from_json(&text).unwrap();
        assert_eq!(pair, back);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut net = abs_net();
        let mut grads = NetGrads::zeros(&net);
        grads.layers[0].0[(0, 0)] = 0.3;
        grads.layers[0].0[(1, 0)] = -2.0;
        let mut state = AdamState::new(&net);
        let cfg = TrainingConfig::default();
        let before = net.layers[0].w.clone();
        adam_step(&mut net, &grads, &mut state, &cfg);
        let d0 = net.layers[0].w[(0, 0)] - before[(0, 0)];
        let d1 = net.layers[0].w[(1, 0)] - before[(1, 0)];
        assert!((d0 + cfg.learning_rate).abs() < 1e-6);
        assert!((d1 - cfg.learning_rate).abs() < 1e-6);
        // untouched zero-gradient entries stay put
        assert_eq!(net.layers[1].w, abs_net().layers[1].w);
    }

    #[test]
    fn batch_gradients_match_finite_differences() {
        use crate::dataset::{Origin, Sample, Split};
        use crate::grid::{build_admittance, build_quadratic_forms, parse_matpower_case, InputDomain};

        let path = format!("{}/../../cases/case3.m", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        let case = parse_matpower_case(&text).unwrap();
        let adm = build_admittance(&case).unwrap();
        let qf = build_quadratic_forms(&case, &adm).unwrap();
        let domain = InputDomain::default_for(&qf);

        let mut pair = PfnnPair::new(&qf, &domain, &[6, 6], 7);
        let mk = |d: Vec<f64>, labeled: bool| Sample {
            g: labeled.then(|| vec![0.4, 0.3, 0.1, 0.05]),
            v: labeled.then(|| vec![1.0, 0.98, 0.97, 0.0, -0.02, -0.03]),
            labeled,
            d,
            origin: Origin::Lhs,
            split: Split::Train,
        };
        let samples = vec![
            mk(vec![0.8, 0.25], true),
            mk(vec![0.65, 0.2], false),
            mk(vec![0.95, 0.28], true),
        ];
        let batch: Vec<&Sample> = samples.iter().collect();
        let cfg = TrainingConfig::default();

        let (_, grads) = batch_loss_and_grads(&pair, &batch, &qf, &cfg).unwrap();

        let h = 1e-6;
        let mut checked = 0;
        for (net_idx, layer_idx, r, c) in [
            (0, 0, 0, 0),
            (0, 1, 2, 3),
            (0, 2, 1, 4),
            (1, 0, 3, 1),
            (1, 1, 5, 2),
            (1, 2, 4, 0),
        ] {
            let analytic = if net_idx == 0 {
                grads.net_g.layers[layer_idx].0[(r, c)]
            } else {
                grads.net_v.layers[layer_idx].0[(r, c)]
            };
            let mut eval_at = |delta: f64| {
                let net = if net_idx == 0 {
                    &mut pair.net_g
                } else {
                    &mut pair.net_v
                };
                net.layers[layer_idx].w[(r, c)] += delta;
                let (loss, _) = batch_loss_and_grads(&pair, &batch, &qf, &cfg).unwrap();
                let net = if net_idx == 0 {
                    &mut pair.net_g
                } else {
                    &mut pair.net_v
                };
                net.layers[layer_idx].w[(r, c)] -= delta;
                loss.total
            };
            let fd = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "net {net_idx} layer {layer_idx} ({r},{c}): analytic {analytic} vs fd {fd}"
            );
            checked += 1;
        }
        assert_eq!(checked, 6);
    }

    #[test]
    fn unlabeled_only_batch_skips_labels_with_lambda0_zero() {
        use crate::dataset::{Origin, Sample, Split};
        use crate::grid::{build_admittance, build_quadratic_forms, parse_matpower_case, InputDomain};

        let path = format!("{}/../../cases/case2.m", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        let case = parse_matpower_case(&text).unwrap();
        let adm = build_admittance(&case).unwrap();
        let qf = build_quadratic_forms(&case, &adm).unwrap();
        let domain = InputDomain::default_for(&qf);
        let pair = PfnnPair::new(&qf, &domain, &[4], 1);

        let s = Sample {
            d: vec![0.4, 0.1],
            g: None,
            v: None,
            labeled: false,
            origin: Origin::Enrichment,
            split: Split::Train,
        };
        let cfg = TrainingConfig {
            lambda0: 0.0,
            ..TrainingConfig::default()
        };
        let (loss, _) = batch_loss_and_grads(&pair, &[&s], &qf, &cfg).unwrap();
        assert_eq!(loss.l0_g, 0.0);
        assert_eq!(loss.l0_v, 0.0);
        assert!(loss.l_pf > 0.0);
    }

    #[test]
    fn slack_imag_output_is_pinned_zero() {
        use crate::grid::{build_admittance, build_quadratic_forms, parse_matpower_case, InputDomain};
        let path = format!("{}/../../cases/case3.m", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        let case = parse_matpower_case(&text).unwrap();
        let adm = build_admittance(&case).unwrap();
        let qf = build_quadratic_forms(&case, &adm).unwrap();
        let domain = InputDomain::default_for(&qf);
        let pair = PfnnPair::new(&qf, &domain, &[8], 3);
        let out = forward(&pair.net_v, &[0.7, 0.2]).unwrap();
        assert_eq!(out[qf.n_buses + qf.slack], 0.0);
    }

    #[test]
    fn adam_replay_determinism() {
        let run = || {
            let mut net = abs_net();
            let mut state = AdamState::new(&net);
            let cfg = TrainingConfig::default();
            let mut grads = NetGrads::zeros(&net);
            grads.layers[0].0[(0, 0)] = 1.0;
            adam_step(&mut net, &grads, &mut state, &cfg);
            grads.layers[0].0[(0, 0)] = -0.5;
            adam_step(&mut net, &grads, &mut state, &cfg);
            net
        };
        assert_eq!(run(), run());
    }
}
