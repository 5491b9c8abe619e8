//! Dataset generation: Latin-hypercube sampling of the demand box,
//! OPF labeling with a 50/20/30 train/validation/test split, and CSV
//! persistence.

use crate::grid::{InputDomain, QuadraticFormModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot generate an empty dataset (n = 0)")]
    Empty,
    #[error(
        "labeling failed for {failed} of {attempted} points ({percent:.1}%), above the 5% abort \
         threshold; first failure: {first_error}"
    )]
    LabelFailure {
        failed: usize,
        attempted: usize,
        percent: f64,
        first_error: String,
    },
    #[error("CSV schema mismatch: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Lhs,
    Enrichment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One demand point, optionally labeled with the OPF dispatch and voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub d: Vec<f64>,
    pub g: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub labeled: bool,
    pub origin: Origin,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub domain: InputDomain,
    pub provenance: String,
}

impl Dataset {
    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.split == Split::Train)
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    /// Appends unlabeled enrichment points; they always train.
    pub fn push_enrichment(&mut self, points: Vec<Vec<f64>>) {
        for d in points {
            self.samples.push(Sample {
                d,
                g: None,
                v: None,
                labeled: false,
                origin: Origin::Enrichment,
                split: Split::Train,
            });
        }
    }
}

/// Stratified Latin-hypercube sample of `n` points from the box.
///
/// Every coordinate is split into `n` equal strata and receives exactly one
/// point per stratum, at a uniform position inside it. Degenerate
/// coordinates (lower = upper) emit the constant value.
pub fn lhs_sample(domain: &InputDomain, n: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(n >= 1, "lhs_sample needs n >= 1");
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for c in 0..dim {
        let lo = domain.lower[c];
        let hi = domain.upper[c];
        if hi == lo {
            for p in points.iter_mut() {
                p[c] = lo;
            }
            continue;
        }
        strata.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (i, p) in points.iter_mut().enumerate() {
            let u: f64 = rng.gen();
            p[c] = (lo + (strata[i] as f64 + u) * width).min(hi);
        }
    }
    points
}

/// Labels a point: per-unit demand in, `(G, v)` labels out.
pub type Labeler<'a> = dyn Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>), String> + 'a;

/// Draws `n` LHS points, labels them, and splits 50/20/30.
///
/// Points the labeler fails on are dropped and replaced by fresh draws (up
/// to 2 retry rounds); more than 5% failures aborts.
pub fn generate_labeled_dataset(
    _qf: &QuadraticFormModel,
    domain: &InputDomain,
    n: usize,
    seed: u64,
    labeler: &Labeler,
) -> Result<Dataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let mut labeled: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(n);
    let mut attempted = 0usize;
    let mut failed = 0usize;
    let mut first_error = String::new();

    for round in 0..3 {
        let missing = n - labeled.len();
        if missing == 0 {
            break;
        }
        let draws = lhs_sample(domain, missing, seed.wrapping_add(round * 0x5851_f42d));
        for d in draws {
            attempted += 1;
            match labeler(&d) {
                Ok((g, v)) => labeled.push((d, g, v)),
                Err(e) => {
                    if first_error.is_empty() {
                        first_error = e;
                    }
                    failed += 1;
                }
            }
        }
        let percent = 100.0 * failed as f64 / attempted as f64;
        if percent > 5.0 {
            return Err(DatasetError::LabelFailure {
                failed,
                attempted,
                percent,
                first_error,
            });
        }
    }
    if labeled.len() < n {
        let percent = 100.0 * failed as f64 / attempted.max(1) as f64;
        return Err(DatasetError::LabelFailure {
            failed,
            attempted,
            percent,
            first_error,
        });
    }

    let n_train = (0.5 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let samples = labeled
        .into_iter()
        .enumerate()
        .map(|(i, (d, g, v))| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            Sample {
                d,
                g: Some(g),
                v: Some(v),
                labeled: true,
                origin: Origin::Lhs,
                split,
            }
        })
        .collect();

    Ok(Dataset {
        samples,
        domain: domain.clone(),
        provenance: format!("lhs n={n} seed={seed} dim={}", domain.dim()),
    })
}

fn header(qf: &QuadraticFormModel) -> String {
    let mut cols = Vec::new();
    for i in 1..=qf.n_loads {
        cols.push(format!("pd_{i}"));
    }
    for i in 1..=qf.n_loads {
        cols.push(format!("qd_{i}"));
    }
    for i in 1..=qf.n_generators {
        cols.push(format!("pg_{i}"));
    }
    for i in 1..=qf.n_generators {
        cols.push(format!("qg_{i}"));
    }
    for i in 1..=qf.n_buses {
        cols.push(format!("vr_{i}"));
    }
    for i in 1..=qf.n_buses {
        cols.push(format!("vi_{i}"));
    }
    cols.push("labeled".into());
    cols.push("origin".into());
    cols.push("split".into());
    cols.join(",")
}

/// Serializes a dataset to CSV. Floats use shortest round-trip formatting,
/// so save → load is lossless.
pub fn save_csv(qf: &QuadraticFormModel, ds: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(&header(qf));
    out.push('\n');
    let empty_g = qf.generation_dim();
    let empty_v = qf.voltage_dim();
    for s in &ds.samples {
        let mut fields: Vec<String> = s.d.iter().map(|x| format!("{x}")).collect();
        match &s.g {
            Some(g) => fields.extend(g.iter().map(|x| format!("{x}"))),
            None => fields.extend(std::iter::repeat(String::new()).take(empty_g)),
        }
        match &s.v {
            Some(v) => fields.extend(v.iter().map(|x| format!("{x}"))),
            None => fields.extend(std::iter::repeat(String::new()).take(empty_v)),
        }
        fields.push(if s.labeled { "1" } else { "0" }.into());
        fields.push(
            match s.origin {
                Origin::Lhs => "lhs",
                Origin::Enrichment => "enrichment",
            }
            .into(),
        );
        fields.push(
            match s.split {
                Split::Train => "train",
                Split::Validation => "validation",
                Split::Test => "test",
            }
            .into(),
        );
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parses a dataset CSV, validating the schema against the case dimensions.
pub fn load_csv(
    text: &str,
    qf: &QuadraticFormModel,
    domain: &InputDomain,
) -> Result<Dataset, DatasetError> {
    let expected_header = header(qf);
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| DatasetError::Schema("empty file".into()))?;
    if head.trim() != expected_header {
        return Err(DatasetError::Schema(format!(
            "header does not match case dimensions (expected {} columns)",
            expected_header.split(',').count()
        )));
    }
    let n_d = qf.demand_dim();
    let n_g = qf.generation_dim();
    let n_v = qf.voltage_dim();
    let n_cols = n_d + n_g + n_v + 3;
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(DatasetError::Schema(format!(
                "row {} has {} columns, expected {n_cols}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_block = |range: std::ops::Range<usize>| -> Result<Option<Vec<f64>>, DatasetError> {
            if fields[range.clone()].iter().all(|f| f.is_empty()) {
                return Ok(None);
            }
            fields[range]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        DatasetError::Schema(format!("row {}: bad number `{f}`", lineno + 2))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()
                .map(Some)
        };
        let d = parse_block(0..n_d)?
            .ok_or_else(|| DatasetError::Schema(format!("row {}: empty demand", lineno + 2)))?;
        let g = parse_block(n_d..n_d + n_g)?;
        let v = parse_block(n_d + n_g..n_d + n_g + n_v)?;
        let labeled = match fields[n_cols - 3] {
            "1" => true,
            "0" => false,
            other => {
                return Err(DatasetError::Schema(format!(
                    "row {}: bad labeled flag `{other}`",
                    lineno + 2
                )))
            }
        };
        if labeled && (g.is_none() || v.is_none()) {
            return Err(DatasetError::Schema(format!(
                "row {}: labeled row missing label fields",
                lineno + 2
            )));
        }
        let origin = match fields[n_cols - 2] {
            "lhs" => Origin::Lhs,
            "enrichment" => Origin::Enrichment,
            other => {
                return Err(DatasetError::Schema(format!(
                    "row {}: bad origin `{other}`",
                    lineno + 2
                )))
            }
        };
        let split = match fields[n_cols - 1] {
            "train" => Split::Train,
            "validation" => Split::Validation,
            "test" => Split::Test,
            other => {
                return Err(DatasetError::Schema(format!(
                    "row {}: bad split `{other}`",
                    lineno + 2
                )))
            }
        };
        samples.push(Sample {
            d,
            g,
            v,
            labeled,
            origin,
            split,
        });
    }
    Ok(Dataset {
        samples,
        domain: domain.clone(),
        provenance: String::new(),
    })
}
