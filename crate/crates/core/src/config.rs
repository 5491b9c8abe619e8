//! Experiment configuration: a flat `key = value` file with `[section]`
//! headers. Unknown keys are errors; CLI flags override file values.

use crate::enrich::EnrichConfig;
use crate::nn::TrainingConfig;
use crate::opf::PenaltyConfig;
use crate::verifier::VerifyConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("split fractions must sum to 1 (got {0})")]
    BadFractions(f64),
    #[error("case file not found: {0}")]
    MissingCase(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one experiment needs; every field mirrors a library config.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub case_path: String,
    pub dataset_size: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// Demand box as fractions of nominal loading.
    pub load_lower_fraction: f64,
    pub load_upper_fraction: f64,
    pub hidden_layers: Vec<usize>,
    pub out_dir: String,
    pub seed: u64,
    pub nn: TrainingConfig,
    pub enrich: EnrichConfig,
    pub verify: VerifyConfig,
    pub opf: PenaltyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case_path: String::new(),
            dataset_size: 1000,
            train_fraction: 0.5,
            validation_fraction: 0.2,
            test_fraction: 0.3,
            load_lower_fraction: 0.6,
            load_upper_fraction: 1.0,
            hidden_layers: vec![20, 20, 20],
            out_dir: "out".into(),
            seed: 0,
            nn: TrainingConfig::default(),
            enrich: EnrichConfig::default(),
            verify: VerifyConfig::default(),
            opf: PenaltyConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl ExperimentConfig {
    /// Parses the file format; keys outside any `[section]` belong to the
    /// implicit `[experiment]` section.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section = "experiment".to_string();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                    line: ln + 1,
                    msg: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: ln + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(&section, key, value)?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        match (section, key) {
            ("experiment", "case") => self.case_path = value.into(),
            ("experiment", "dataset_size") => self.dataset_size = parse_num(key, value)?,
            ("experiment", "train_fraction") => self.train_fraction = parse_num(key, value)?,
            ("experiment", "validation_fraction") => {
                self.validation_fraction = parse_num(key, value)?
            }
            ("experiment", "test_fraction") => self.test_fraction = parse_num(key, value)?,
            ("experiment", "load_lower_fraction") => {
                self.load_lower_fraction = parse_num(key, value)?
            }
            ("experiment", "load_upper_fraction") => {
                self.load_upper_fraction = parse_num(key, value)?
            }
            ("experiment", "hidden_layers") => {
                self.hidden_layers = value
                    .split(',')
                    .map(|p| parse_num(key, p.trim()))
                    .collect::<Result<_, _>>()?;
            }
            ("experiment", "out_dir") => self.out_dir = value.into(),
            ("experiment", "seed") => self.seed = parse_num(key, value)?,
            ("nn", "learning_rate") => self.nn.learning_rate = parse_num(key, value)?,
            ("nn", "beta1") => self.nn.beta1 = parse_num(key, value)?,
            ("nn", "beta2") => self.nn.beta2 = parse_num(key, value)?,
            ("nn", "epsilon") => self.nn.epsilon = parse_num(key, value)?,
            ("nn", "epochs") => self.nn.epochs = parse_num(key, value)?,
            ("nn", "lambda0") => self.nn.lambda0 = parse_num(key, value)?,
            ("nn", "lambda_pf") => self.nn.lambda_pf = parse_num(key, value)?,
            ("enrich", "t_total") => self.enrich.t_total = parse_num(key, value)?,
            ("enrich", "t_int") => self.enrich.t_int = parse_num(key, value)?,
            ("enrich", "t_enr") => self.enrich.t_enr = parse_num(key, value)?,
            ("enrich", "points_per_round") => {
                self.enrich.points_per_round = parse_num(key, value)?
            }
            ("enrich", "alpha_wc") => self.enrich.alpha_wc = parse_num(key, value)?,
            ("enrich", "gaussian_sigma") => self.enrich.gaussian_sigma = parse_num(key, value)?,
            ("enrich", "baseline_extra_points") => {
                self.enrich.baseline_extra_points = parse_num(key, value)?
            }
            ("verifier", "gap_tol") => self.verify.bnb.gap_tol = parse_num(key, value)?,
            ("verifier", "max_nodes") => self.verify.bnb.max_nodes = parse_num(key, value)?,
            ("verifier", "alpha") => self.verify.alpha = parse_num(key, value)?,
            ("verifier", "fix_relus") => self.verify.fix_relus = parse_num(key, value)?,
            ("opf", "penalty_start") => self.opf.penalty_start = parse_num(key, value)?,
            ("opf", "penalty_growth") => self.opf.penalty_growth = parse_num(key, value)?,
            ("opf", "max_outer_iterations") => {
                self.opf.max_outer_iterations = parse_num(key, value)?
            }
            ("opf", "inner_step_count") => self.opf.inner_step_count = parse_num(key, value)?,
            ("opf", "inner_learning_rate") => {
                self.opf.inner_learning_rate = parse_num(key, value)?
            }
            ("opf", "multistart_count") => self.opf.multistart_count = parse_num(key, value)?,
            (s, k) => {
                return Err(ConfigError::UnknownKey {
                    section: s.into(),
                    key: k.into(),
                })
            }
        }
        Ok(())
    }

    /// Checks cross-field invariants and path existence.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sum = self.train_fraction + self.validation_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::BadFractions(sum));
        }
        if !self.case_path.is_empty() && !std::path::Path::new(&self.case_path).exists() {
            return Err(ConfigError::MissingCase(self.case_path.clone()));
        }
        Ok(())
    }

    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::parse(&text)?;
        Ok(cfg)
    }
}

/// Keeps the derived configs coherent: the enrichment schedule drives the
/// training epoch count, and the hypercube alpha is shared.
pub fn reconcile(cfg: &mut ExperimentConfig) {
    cfg.nn.epochs = cfg.enrich.t_total;
    cfg.nn.seed = cfg.seed;
    cfg.enrich.seed = cfg.seed;
    cfg.opf.random_seed = cfg.seed;
    cfg.verify.alpha = cfg.enrich.alpha_wc;
}
