//! Flat `key = value` experiment configuration.
//!
//! The format is deliberately minimal: one assignment per line, `#` for
//! comments, comma-separated lists, and `inf` accepted wherever a grid may
//! reach the fully global mode. Unknown and duplicate keys are hard errors
//! so a typo cannot silently fall back to a default.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};

// ===========================================================================
// Enumerations
// ===========================================================================

/// Where training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

/// Which training algorithm the sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    /// Full participation.
    Alg1,
    /// Client sampling against the minibatch-weighted objective.
    Alg2,
    /// Client sampling against the uniform per-user average.
    Alg3,
}

impl AlgorithmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmKind::Alg1 => "alg1",
            AlgorithmKind::Alg2 => "alg2",
            AlgorithmKind::Alg3 => "alg3",
        }
    }
}

// ===========================================================================
// The configuration itself
// ===========================================================================

/// Everything a sweep needs. Defaults reproduce the reference synthetic
/// setup: 1000 users in dimension 100 agreeing on the leading 95
/// coordinates, full participation, and the standard search grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Directory or single-`*` pattern of per-user training CSVs.
    pub csv_pattern: Option<String>,
    /// Optional held-out CSVs for the metric; training data is scored when
    /// absent.
    pub csv_test_pattern: Option<String>,
    pub synthetic: SyntheticConfig,
    pub algorithm: AlgorithmKind,
    pub eta_grid: Vec<f64>,
    /// Grid of `alpha * Q` products, `Q` being the expected clients per
    /// round; `inf` selects the fully global mode.
    pub alpha_q_grid: Vec<f64>,
    /// Grid of normalized noise multipliers (0 disables noise).
    pub sigma_grid: Vec<f64>,
    pub clip_grid: Vec<f64>,
    /// Bernoulli participation rate for the sampled algorithms.
    pub q: Option<f64>,
    /// Exact per-round cohort size, the alternative to `q`.
    pub fixed_q: Option<usize>,
    /// Per-user minibatch size per participating round.
    pub minibatch: usize,
    pub rounds: usize,
    /// 1 enforces one-pass semantics on finite data; larger values allow
    /// reshuffled reuse. Ignored by the synthetic source.
    pub epochs: usize,
    pub delta: f64,
    /// Master seeds; each becomes an independent run of every grid cell.
    pub seeds: Vec<u64>,
    /// Trace recording stride in rounds.
    pub stride: usize,
    pub output_dir: PathBuf,
    /// Samples per user written by the data generator.
    pub gen_samples_per_user: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Synthetic,
            csv_pattern: None,
            csv_test_pattern: None,
            synthetic: SyntheticConfig::default(),
            algorithm: AlgorithmKind::Alg1,
            eta_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.2, 1.5, 1.8],
            alpha_q_grid: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, f64::INFINITY],
            sigma_grid: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0],
            clip_grid: vec![10.0],
            q: None,
            fixed_q: None,
            minibatch: 1,
            rounds: 500,
            epochs: 1,
            delta: 1e-5,
            seeds: vec![0],
            stride: 10,
            output_dir: PathBuf::from("out"),
            gen_samples_per_user: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Parses the flat `key = value` format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected `key = value`, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line_no}: duplicate key {key:?}")));
            }
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DatasetKind::Synthetic,
                    "csv" => DatasetKind::Csv,
                    other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
                }
            }
            "csv_pattern" => self.csv_pattern = Some(value.to_string()),
            "csv_test_pattern" => self.csv_test_pattern = Some(value.to_string()),
            "users" => self.synthetic.users = parse_usize(key, value)?,
            "dim" => self.synthetic.dim = parse_usize(key, value)?,
            "shared_coords" => self.synthetic.shared_coords = parse_usize(key, value)?,
            "theta0_std" => self.synthetic.theta0_std = parse_float(key, value)?,
            "delta_std" => self.synthetic.delta_std = parse_float(key, value)?,
            "tau" => self.synthetic.tau = parse_float(key, value)?,
            "data_seed" => self.synthetic.seed = parse_u64(key, value)?,
            "algorithm" => {
                self.algorithm = match value {
                    "alg1" => AlgorithmKind::Alg1,
                    "alg2" => AlgorithmKind::Alg2,
                    "alg3" => AlgorithmKind::Alg3,
                    other => return Err(Error::Config(format!("unknown algorithm {other:?}"))),
                }
            }
            "eta_grid" => self.eta_grid = parse_float_list(key, value)?,
            "alpha_q_grid" => self.alpha_q_grid = parse_float_list(key, value)?,
            "sigma_grid" => self.sigma_grid = parse_float_list(key, value)?,
            "clip_grid" => self.clip_grid = parse_float_list(key, value)?,
            "q" => self.q = Some(parse_float(key, value)?),
            "fixed_q" => self.fixed_q = Some(parse_usize(key, value)?),
            "minibatch" => self.minibatch = parse_usize(key, value)?,
            "rounds" => self.rounds = parse_usize(key, value)?,
            "epochs" => self.epochs = parse_usize(key, value)?,
            "delta" => self.delta = parse_float(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse_u64("seeds", s.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "stride" => self.stride = parse_usize(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "gen_samples_per_user" => self.gen_samples_per_user = parse_usize(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset {
            DatasetKind::Synthetic => self.synthetic.validate()?,
            DatasetKind::Csv => {
                if self.csv_pattern.is_none() {
                    return Err(Error::Config("csv dataset needs csv_pattern".into()));
                }
            }
        }
        if self.eta_grid.is_empty()
            || self.alpha_q_grid.is_empty()
            || self.sigma_grid.is_empty()
            || self.clip_grid.is_empty()
        {
            return Err(Error::Config("all grids must be nonempty".into()));
        }
        for &eta in &self.eta_grid {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::Config(format!("eta grid values must be finite and positive, got {eta}")));
            }
        }
        for &aq in &self.alpha_q_grid {
            if aq.is_nan() || aq < 0.0 {
                return Err(Error::Config(format!("alpha_q grid values must be in [0, inf], got {aq}")));
            }
        }
        for &sigma in &self.sigma_grid {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Config(format!("sigma grid values must be finite and >= 0, got {sigma}")));
            }
        }
        for &clip in &self.clip_grid {
            if !(clip > 0.0) || !clip.is_finite() {
                return Err(Error::Config(format!("clip grid values must be finite and positive, got {clip}")));
            }
        }
        match self.algorithm {
            AlgorithmKind::Alg1 => {
                if self.q.is_some() || self.fixed_q.is_some() {
                    return Err(Error::Config("alg1 runs all clients; drop q and fixed_q".into()));
                }
            }
            AlgorithmKind::Alg2 | AlgorithmKind::Alg3 => match (self.q, self.fixed_q) {
                (Some(q), None) => {
                    if !(q > 0.0 && q <= 1.0) {
                        return Err(Error::Config(format!("q must be in (0, 1], got {q}")));
                    }
                }
                (None, Some(k)) => {
                    if k == 0 {
                        return Err(Error::Config("fixed_q must be positive".into()));
                    }
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "{} needs q or fixed_q",
                        self.algorithm.as_str()
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Config("q and fixed_q are mutually exclusive".into()))
                }
            },
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.minibatch == 0 || self.rounds == 0 || self.stride == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "minibatch, rounds, stride and epochs must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.gen_samples_per_user == 0 {
            return Err(Error::Config("gen_samples_per_user must be positive".into()));
        }
        Ok(())
    }
}

// ===========================================================================
// Scalar parsing helpers
// ===========================================================================

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?} as a number")))
        .and_then(|v| {
            if v.is_nan() {
                Err(Error::Config(format!("{key}: NaN is not a valid value")))
            } else {
                Ok(v)
            }
        })
}

fn parse_float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|item| parse_float(key, item.trim())).collect()
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?} as an integer")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?} as an integer")))
}

// ===========================================================================
// Tests
// ===========================================================================
