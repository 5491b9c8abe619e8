//! Worst-case-driven dataset enrichment: periodic MILP verification during
//! training, Gaussian sampling inside the fitted violation hypercube, and
//! the fixed-dataset baseline run for comparison.

use crate::dataset::{generate_labeled_dataset, lhs_sample, Dataset, DatasetError, Labeler, Split};
use crate::grid::{InputDomain, QuadraticFormModel};
use crate::nn::{
    batch_loss_and_grads, loss_l0, LossBreakdown, NnError, PfnnPair, TrainingConfig,
};
use crate::verifier::{
    find_worst_case, fit_hypercube, HypercubeResult, MilpError, Side, VerifyConfig,
    WorstCaseResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid schedule: T_int ({t_int}) must not exceed T ({t})")]
    BadSchedule { t_int: usize, t: usize },
}

/// Schedule and sampling knobs of the enrichment loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichConfig {
    /// Total training epochs.
    pub t_total: usize,
    /// Epochs before the first enrichment round.
    pub t_int: usize,
    /// Epochs between enrichment rounds.
    pub t_enr: usize,
    pub points_per_round: usize,
    /// Violation fraction for the hypercube fit.
    pub alpha_wc: f64,
    /// Gaussian std as a fraction of the hypercube half-width `d`.
    pub gaussian_sigma: f64,
    /// Labeled points added upfront by the baseline run.
    pub baseline_extra_points: usize,
    pub seed: u64,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        EnrichConfig {
            t_total: 600,
            t_int: 200,
            t_enr: 200,
            points_per_round: 1000,
            alpha_wc: 0.8,
            gaussian_sigma: 0.5,
            baseline_extra_points: 2000,
            seed: 0,
        }
    }
}

impl EnrichConfig {
    /// Enrichment / evaluation epochs: `T_int, T_int + T_enr, ... <= T`.
    pub fn round_epochs(&self) -> Vec<usize> {
        let mut rounds = Vec::new();
        let mut e = self.t_int;
        while e <= self.t_total {
            rounds.push(e);
            e += self.t_enr.max(1);
        }
        rounds
    }
}

/// One verification round's record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub epoch: usize,
    /// Worst-case violation, per-unit.
    pub v_g_max_pu: f64,
    /// Worst-case violation in MVA (`pu * base_mva`).
    pub v_g_max_mva: f64,
    pub component: usize,
    pub side: Side,
    pub d_wc: Vec<f64>,
    /// Hypercube half-width (normalized input units); 0 when skipped.
    pub d_normalized: f64,
    pub dataset_size: usize,
    pub milp_wall_ms: u128,
    pub certified: bool,
    /// True when the round had no violation and sampling was skipped.
    pub skipped: bool,
}

/// Full record of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub method: String,
    pub losses: Vec<LossBreakdown>,
    pub rounds: Vec<RoundRecord>,
    /// Mean absolute error of G predictions on the test split (per-unit).
    pub test_mae_g: f64,
    /// Mean absolute error of v predictions on the test split (per-unit).
    pub test_mae_v: f64,
}

/// Draws `n` demand points from a Gaussian centered at the hypercube witness
/// center `d_wc`, std `sigma_frac * d` per coordinate, clipped to the
/// hypercube intersected with the input domain. `d = 0` degenerates to `n`
/// copies of the center.
pub fn sample_hypercube_gaussian(
    d_wc: &[f64],
    hc: &HypercubeResult,
    domain: &InputDomain,
    input_range: &[f64],
    sigma_frac: f64,
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // half-width per coordinate in original units
    let half: Vec<f64> = input_range.iter().map(|r| hc.d_normalized * r).collect();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = Vec::with_capacity(d_wc.len());
        for (i, &c) in d_wc.iter().enumerate() {
            let sigma = sigma_frac * half[i];
            let x = if sigma > 0.0 {
                let normal = Normal::new(c, sigma).expect("positive sigma");
                normal.sample(&mut rng)
            } else {
                // keep the stream position deterministic across sigmas
                let _ = rng.gen::<f64>();
                c
            };
            let lo = (c - half[i]).max(domain.lower[i]);
            let hi = (c + half[i]).min(domain.upper[i]);
            p.push(x.clamp(lo, hi.max(lo)));
        }
        points.push(p);
    }
    points
}

fn test_mae(pair: &PfnnPair, dataset: &Dataset) -> (f64, f64) {
    let mut preds_g = Vec::new();
    let mut labels_g = Vec::new();
    let mut preds_v = Vec::new();
    let mut labels_v = Vec::new();
    for s in &dataset.samples {
        if s.split != Split::Test || !s.labeled {
            continue;
        }
        preds_g.push(crate::nn::forward(&pair.net_g, &s.d).expect("dimensions"));
        labels_g.push(s.g.clone().expect("labeled"));
        preds_v.push(crate::nn::forward(&pair.net_v, &s.d).expect("dimensions"));
        labels_v.push(s.v.clone().expect("labeled"));
    }
    (loss_l0(&preds_g, &labels_g), loss_l0(&preds_v, &labels_v))
}

/// Per-unit generation bounds of the surrogate's outputs.
fn g_bounds(qf: &QuadraticFormModel) -> (Vec<f64>, Vec<f64>) {
    (qf.g_lower.clone(), qf.g_upper.clone())
}

fn verify_round(
    pair: &PfnnPair,
    qf: &QuadraticFormModel,
    domain: &InputDomain,
    alpha: f64,
) -> Result<(WorstCaseResult, Option<HypercubeResult>), MilpError> {
    let (g_lo, g_hi) = g_bounds(qf);
    let vcfg = VerifyConfig {
        alpha,
        ..VerifyConfig::default()
    };
    let wc = find_worst_case(
        &pair.net_g,
        &domain.lower,
        &domain.upper,
        &g_lo,
        &g_hi,
        &vcfg,
    )?;
    if wc.v_g_max <= 0.0 {
        return Ok((wc, None));
    }
    let limit = match wc.side {
        Side::Upper => g_hi[wc.component],
        Side::Lower => g_lo[wc.component],
    };
    let hc = fit_hypercube(&pair.net_g, &domain.lower, &domain.upper, &wc, limit, &vcfg)?;
    Ok((wc, Some(hc)))
}

fn train_segment(
    pair: &mut PfnnPair,
    dataset: &Dataset,
    qf: &QuadraticFormModel,
    cfg: &TrainingConfig,
    state_g: &mut crate::nn::AdamState,
    state_v: &mut crate::nn::AdamState,
    from_epoch: usize,
    to_epoch: usize,
    losses: &mut Vec<LossBreakdown>,
) -> Result<(), NnError> {
    for epoch in (from_epoch + 1)..=to_epoch {
        let batch: Vec<&crate::dataset::Sample> = dataset.train_samples().collect();
        let (loss, grads) = batch_loss_and_grads(pair, &batch, qf, cfg)?;
        if !loss.total.is_finite() {
            return Err(NnError::NonFinite { epoch });
        }
        crate::nn::adam_step(&mut pair.net_g, &grads.net_g, state_g, cfg);
        crate::nn::adam_step(&mut pair.net_v, &grads.net_v, state_v, cfg);
        losses.push(loss);
    }
    Ok(())
}

/// The enrichment training loop: train to each round epoch, verify, fit the
/// hypercube, sample unlabeled points into the train split, continue.
pub fn run_wc_pfnn(
    qf: &QuadraticFormModel,
    dataset: &mut Dataset,
    pair: &mut PfnnPair,
    nn_cfg: &TrainingConfig,
    cfg: &EnrichConfig,
    base_mva: f64,
) -> Result<RunLog, EnrichError> {
    if cfg.t_int > cfg.t_total {
        return Err(EnrichError::BadSchedule {
            t_int: cfg.t_int,
            t: cfg.t_total,
        });
    }
    let domain = dataset.domain.clone();
    let input_range: Vec<f64> = domain
        .upper
        .iter()
        .zip(&domain.lower)
        .map(|(u, l)| u - l)
        .collect();
    let rounds = cfg.round_epochs();
    let mut losses = Vec::with_capacity(cfg.t_total);
    let mut records = Vec::new();
    let mut state_g = crate::nn::AdamState::new(&pair.net_g);
    let mut state_v = crate::nn::AdamState::new(&pair.net_v);
    let mut cursor = 0usize;

    for (ri, &epoch) in rounds.iter().enumerate() {
        train_segment(
            pair, dataset, qf, nn_cfg, &mut state_g, &mut state_v, cursor, epoch, &mut losses,
        )?;
        cursor = epoch;
        let (wc, hc) = verify_round(pair, qf, &domain, cfg.alpha_wc)?;
        let is_final = epoch + cfg.t_enr > cfg.t_total;
        let mut record = RoundRecord {
            epoch,
            v_g_max_pu: wc.v_g_max,
            v_g_max_mva: wc.v_g_max * base_mva,
            component: wc.component,
            side: wc.side,
            d_wc: wc.d_wc.clone(),
            d_normalized: hc.as_ref().map_or(0.0, |h| h.d_normalized),
            dataset_size: dataset.count(Split::Train),
            milp_wall_ms: wc.wall_ms,
            certified: wc.certified,
            skipped: false,
        };
        if !is_final && cfg.points_per_round > 0 {
            match &hc {
                Some(h) => {
                    let points = sample_hypercube_gaussian(
                        &wc.d_wc,
                        h,
                        &domain,
                        &input_range,
                        cfg.gaussian_sigma,
                        cfg.points_per_round,
                        cfg.seed.wrapping_add(1 + ri as u64),
                    );
                    dataset.push_enrichment(points);
                    record.dataset_size = dataset.count(Split::Train);
                }
                None => {
                    record.skipped = true;
                }
            }
        }
        records.push(record);
    }
    // train any tail epochs after the last round (schedules where the last
    // round falls short of T)
    train_segment(
        pair, dataset, qf, nn_cfg, &mut state_g, &mut state_v, cursor, cfg.t_total, &mut losses,
    )?;

    let (mae_g, mae_v) = test_mae(pair, dataset);
    Ok(RunLog {
        method: "wc-pfnn".into(),
        losses,
        rounds: records,
        test_mae_g: mae_g,
        test_mae_v: mae_v,
    })
}

/// The fixed-dataset baseline: adds `baseline_extra_points` labeled LHS
/// points upfront, trains without enrichment, and verifies at the same
/// epochs as the enrichment run for comparability.
pub fn run_pfnn_baseline(
    qf: &QuadraticFormModel,
    dataset: &mut Dataset,
    pair: &mut PfnnPair,
    nn_cfg: &TrainingConfig,
    cfg: &EnrichConfig,
    base_mva: f64,
    labeler: &Labeler,
) -> Result<RunLog, EnrichError> {
    if cfg.t_int > cfg.t_total {
        return Err(EnrichError::BadSchedule {
            t_int: cfg.t_int,
            t: cfg.t_total,
        });
    }
    if cfg.baseline_extra_points > 0 {
        // fresh labeled points, train split only
        let extra = generate_labeled_dataset(
            qf,
            &dataset.domain,
            cfg.baseline_extra_points,
            cfg.seed.wrapping_add(0xba5e),
            labeler,
        )?;
        for mut s in extra.samples {
            s.split = Split::Train;
            dataset.samples.push(s);
        }
    }
    let domain = dataset.domain.clone();
    let rounds = cfg.round_epochs();
    let mut losses = Vec::with_capacity(cfg.t_total);
    let mut records = Vec::new();
    let mut state_g = crate::nn::AdamState::new(&pair.net_g);
    let mut state_v = crate::nn::AdamState::new(&pair.net_v);
    let mut cursor = 0usize;
    for &epoch in &rounds {
        train_segment(
            pair, dataset, qf, nn_cfg, &mut state_g, &mut state_v, cursor, epoch, &mut losses,
        )?;
        cursor = epoch;
        let (wc, hc) = verify_round(pair, qf, &domain, cfg.alpha_wc)?;
        records.push(RoundRecord {
            epoch,
            v_g_max_pu: wc.v_g_max,
            v_g_max_mva: wc.v_g_max * base_mva,
            component: wc.component,
            side: wc.side,
            d_wc: wc.d_wc.clone(),
            d_normalized: hc.as_ref().map_or(0.0, |h| h.d_normalized),
            dataset_size: dataset.count(Split::Train),
            milp_wall_ms: wc.wall_ms,
            certified: wc.certified,
            skipped: true, // baseline never samples
        });
    }
    train_segment(
        pair, dataset, qf, nn_cfg, &mut state_g, &mut state_v, cursor, cfg.t_total, &mut losses,
    )?;
    let (mae_g, mae_v) = test_mae(pair, dataset);
    Ok(RunLog {
        method: "pfnn".into(),
        losses,
        rounds: records,
        test_mae_g: mae_g,
        test_mae_v: mae_v,
    })
}

/// Baseline-style labeled LHS growth helper, exposed for tests.
pub fn extra_lhs_points(domain: &InputDomain, n: usize, seed: u64) -> Vec<Vec<f64>> {
    lhs_sample(domain, n, seed)
}
