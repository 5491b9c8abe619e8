//! Interval bound propagation: sound per-neuron pre-activation bounds over
//! an input box, used as big-M constants in the MILP encoding.

use crate::nn::MlpParams;

/// Pre-activation bounds `[lo, hi]` per hidden layer and neuron, in the
/// network's scaled input space.
#[derive(Debug, Clone)]
pub struct LayerBounds {
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

impl LayerBounds {
    pub fn n_layers(&self) -> usize {
        self.lo.len()
    }
}

/// Propagates the input box (original input units) through every hidden
/// layer. Bounds are valid for every input in the box.
pub fn interval_bounds(net: &MlpParams, box_lo: &[f64], box_hi: &[f64]) -> LayerBounds {
    assert_eq!(box_lo.len(), net.input_dim());
    assert_eq!(box_hi.len(), net.input_dim());
    // scale the box like the forward pass scales points
    let mut lo: Vec<f64> = Vec::with_capacity(box_lo.len());
    let mut hi: Vec<f64> = Vec::with_capacity(box_hi.len());
    for i in 0..box_lo.len() {
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

    let n_hidden = net.n_hidden();
    let mut out_lo = Vec::with_capacity(n_hidden);
    let mut out_hi = Vec::with_capacity(n_hidden);
    for layer in &net.layers[..n_hidden] {
        let rows = layer.w.nrows();
        let mut zl = vec![0.0; rows];
        let mut zh = vec![0.0; rows];
        for r in 0..rows {
            let mut a = layer.b[r];
            let mut b = layer.b[r];
            for c in 0..layer.w.ncols() {
                let w = layer.w[(r, c)];
                if w >= 0.0 {
                    a += w * lo[c];
                    b += w * hi[c];
                } else {
                    a += w * hi[c];
                    b += w * lo[c];
                }
            }
            zl[r] = a;
            zh[r] = b;
        }
        // next layer sees the post-activation interval
        lo = zl.iter().map(|&v| v.max(0.0)).collect();
        hi = zh.iter().map(|&v| v.max(0.0)).collect();
        out_lo.push(zl);
        out_hi.push(zh);
    }
    LayerBounds {
        lo: out_lo,
        hi: out_hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward_with_preactivations;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abs_net() -> MlpParams {
        MlpParams {
            layers: vec![
                crate::nn::Layer {
                    w: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                    b: DVector::zeros(2),
                },
                crate::nn::Layer {
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
    fn abs_net_hand_bounds() {
        let b = interval_bounds(&abs_net(), &[-1.0], &[2.0]);
        assert_eq!(b.lo[0], vec![-1.0, -2.0]);
        assert_eq!(b.hi[0], vec![2.0, 1.0]);
    }

    #[test]
    fn zero_weight_net_bounds_are_biases() {
        let mut net = abs_net();
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        net.layers[0].b[0] = 0.7;
        net.layers[0].b[1] = -0.3;
        let b = interval_bounds(&net, &[-1.0], &[2.0]);
        assert_eq!(b.lo[0], vec![0.7, -0.3]);
        assert_eq!(b.hi[0], vec![0.7, -0.3]);
    }

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> MlpParams {
        let n_in = dims[0];
        MlpParams {
            layers: (1..dims.len())
                .map(|k| crate::nn::Layer {
                    w: DMatrix::from_fn(dims[k], dims[k - 1], |_, _| rng.gen_range(-1.0..1.0)),
                    b: DVector::from_fn(dims[k], |_, _| rng.gen_range(-0.5..0.5)),
                })
                .collect(),
            input_lo: vec![0.0; n_in],
            input_range: vec![1.0; n_in],
            out_scale: vec![1.0; dims[dims.len() - 1]],
            out_offset: vec![0.0; dims[dims.len() - 1]],
            zero_outputs: vec![],
        }
    }

    #[test]
    fn sampled_preactivations_stay_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let net = random_net(&mut rng, &[3, 6, 5, 2]);
            let lo = vec![-0.5, 0.0, 0.2];
            let hi = vec![1.5, 1.0, 0.2];
            let bounds = interval_bounds(&net, &lo, &hi);
            for _ in 0..2000 {
                let d: Vec<f64> = (0..3).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
                let t = forward_with_preactivations(&net, &d).unwrap();
                for (k, zh) in t.zhat.iter().enumerate() {
                    for (i, &v) in zh.iter().enumerate() {
                        assert!(
                            v >= bounds.lo[k][i] - 1e-9 && v <= bounds.hi[k][i] + 1e-9,
                            "layer {k} neuron {i}: {v} outside [{}, {}]",
                            bounds.lo[k][i],
                            bounds.hi[k][i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn shrinking_the_box_never_loosens_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = random_net(&mut rng, &[2, 5, 4, 1]);
        let wide = interval_bounds(&net, &[-1.0, -1.0], &[1.0, 1.0]);
        let tight = interval_bounds(&net, &[-0.4, 0.1], &[0.6, 0.9]);
        for k in 0..wide.n_layers() {
            for i in 0..wide.lo[k].len() {
                assert!(tight.lo[k][i] >= wide.lo[k][i] - 1e-12);
                assert!(tight.hi[k][i] <= wide.hi[k][i] + 1e-12);
            }
        }
    }
}
