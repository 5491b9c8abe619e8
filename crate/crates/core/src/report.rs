//! Experiment reporting: run-log persistence (JSON + flat CSV) and the
//! two-method comparison of average and worst-case performance.

use crate::enrich::RunLog;
use crate::grid::QuadraticFormModel;
use serde::{Deserialize, Serialize};

/// Per-method summary plus the worst-case reduction of the enriched run
/// relative to the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: MethodSummary,
    pub enriched: MethodSummary,
    /// `100 * (1 - v_enriched / v_baseline)`; `None` when the baseline has
    /// no violation.
    pub reduction_percent: Option<f64>,
    /// Per-round worst-case curves, each normalized by its first-round
    /// value (1.0 at the first round); empty when the first round is 0.
    pub baseline_curve: Vec<f64>,
    pub enriched_curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Test-split G MAE as a percent of the mean generator bound range.
    pub mae_g_percent: f64,
    /// Test-split voltage MAE, percent of 1 p.u.
    pub mae_v_percent: f64,
    /// Final-round worst-case violation in MVA.
    pub v_g_mva: f64,
    /// Final-round hypercube half-width as a fraction of nominal loading.
    pub d_fraction_nominal: f64,
}

fn mean_range(lower: &[f64], upper: &[f64]) -> f64 {
    if lower.is_empty() {
        return 1.0;
    }
    let s: f64 = upper.iter().zip(lower).map(|(u, l)| u - l).sum();
    (s / lower.len() as f64).max(1e-12)
}

/// Converts a normalized hypercube half-width into a fraction of the
/// nominal loading, averaged over non-zero nominal coordinates.
pub fn d_fraction_nominal(
    d_normalized: f64,
    domain_lower: &[f64],
    domain_upper: &[f64],
    nominal: &[f64],
) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..nominal.len() {
        if nominal[i].abs() > 1e-12 {
            acc += d_normalized * (domain_upper[i] - domain_lower[i]) / nominal[i].abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

fn summarize(
    log: &RunLog,
    qf: &QuadraticFormModel,
    domain_lower: &[f64],
    domain_upper: &[f64],
    nominal: &[f64],
) -> MethodSummary {
    let g_range = mean_range(&qf.g_lower, &qf.g_upper);
    let last = log.rounds.last();
    MethodSummary {
        method: log.method.clone(),
        mae_g_percent: 100.0 * log.test_mae_g / g_range,
        mae_v_percent: 100.0 * log.test_mae_v,
        v_g_mva: last.map_or(0.0, |r| r.v_g_max_mva),
        d_fraction_nominal: last.map_or(0.0, |r| {
            d_fraction_nominal(r.d_normalized, domain_lower, domain_upper, nominal)
        }),
    }
}

fn normalized_curve(log: &RunLog) -> Vec<f64> {
    let Some(first) = log.rounds.first() else {
        return Vec::new();
    };
    if first.v_g_max_mva <= 0.0 {
        return Vec::new();
    }
    log.rounds
        .iter()
        .map(|r| r.v_g_max_mva / first.v_g_max_mva)
        .collect()
}

/// Builds the comparison of a baseline log against an enriched log.
pub fn compare(
    baseline: &RunLog,
    enriched: &RunLog,
    qf: &QuadraticFormModel,
    domain_lower: &[f64],
    domain_upper: &[f64],
    nominal: &[f64],
) -> ComparisonReport {
    let b = summarize(baseline, qf, domain_lower, domain_upper, nominal);
    let e = summarize(enriched, qf, domain_lower, domain_upper, nominal);
    let reduction = if b.v_g_mva > 0.0 {
        Some(100.0 * (1.0 - e.v_g_mva / b.v_g_mva))
    } else {
        None
    };
    ComparisonReport {
        reduction_percent: reduction,
        baseline_curve: normalized_curve(baseline),
        enriched_curve: normalized_curve(enriched),
        baseline: b,
        enriched: e,
    }
}

pub fn runlog_to_json(log: &RunLog) -> String {
    serde_json::to_string_pretty(log).expect("run log serialization")
}

pub fn runlog_from_json(text: &str) -> Result<RunLog, serde_json::Error> {
    serde_json::from_str(text)
}

/// Flat per-epoch CSV: `epoch,l0,lpf,total,v_g_max,d`; the last two columns
/// are filled only at verification-round epochs.
pub fn runlog_to_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,l0,lpf,total,v_g_max,d\n");
    for (i, l) in log.losses.iter().enumerate() {
        let epoch = i + 1;
        let round = log.rounds.iter().find(|r| r.epoch == epoch);
        let (v, d) = round.map_or((String::new(), String::new()), |r| {
            (format!("{}", r.v_g_max_mva), format!("{}", r.d_normalized))
        });
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            epoch,
            l.l0_g + l.l0_v,
            l.l_pf,
            l.total,
            v,
            d
        ));
    }
    out
}
