//! Data sources: the synthetic heterogeneous linear problem and CSV-backed
//! real datasets.
//!
//! Synthetic streams are infinite (every draw is a fresh sample, so one
//! training pass never reuses data); CSV-backed streams are finite and
//! either error out when exhausted (one-pass, the default) or reshuffle and
//! recycle per epoch.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{GroundTruth, SamplePoint};
use crate::rng::{standard_normal, uniform_below, RngPolicy, SubRng};

// ===========================================================================
// Synthetic problem configuration
// ===========================================================================

/// Parameters of the synthetic task. Users share a base predictor drawn
/// once; each user's true predictor deviates from it only on the trailing
/// `dim - shared_coords` coordinates. Feature k has variance 1/k (1-based),
/// labels carry Gaussian noise of std `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub dim: usize,
    /// Leading coordinates on which all users agree.
    pub shared_coords: usize,
    /// Std of the shared base predictor's coordinates.
    pub theta0_std: f64,
    /// Std of the per-user deviation on the non-shared coordinates.
    pub delta_std: f64,
    /// Label noise std.
    pub tau: f64,
    /// Seed identifying the ground truth (independent of the run seed).
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 1000,
            dim: 100,
            shared_coords: 95,
            theta0_std: 10.0,
            delta_std: 0.01,
            tau: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.dim == 0 {
            return Err(Error::invalid("users and dim must be positive"));
        }
        if self.shared_coords > self.dim {
            return Err(Error::invalid(format!(
                "shared_coords {} exceeds dim {}",
                self.shared_coords, self.dim
            )));
        }
        for (name, v) in [
            ("theta0_std", self.theta0_std),
            ("delta_std", self.delta_std),
            ("tau", self.tau),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Draws the ground truth for `cfg`: one shared base predictor, then one
/// deviation per user on the non-shared tail, all from the dataset seed's
/// "truth" substream in user order.
pub fn generate_ground_truth(cfg: &SyntheticConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = RngPolicy::new(cfg.seed).labeled_stream("truth", 0);
    let base: Vec<f64> = (0..cfg.dim)
        .map(|_| cfg.theta0_std * standard_normal(&mut rng))
        .collect();
    let mut theta_stars = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let mut theta = base.clone();
        for coord in theta.iter_mut().skip(cfg.shared_coords) {
            *coord += cfg.delta_std * standard_normal(&mut rng);
        }
        theta_stars.push(theta);
    }
    let sigma_diag = (1..=cfg.dim).map(|k| 1.0 / k as f64).collect();
    Ok(GroundTruth {
        theta_stars,
        sigma_diag,
        tau: cfg.tau,
    })
}

// ===========================================================================
// Sample streams
// ===========================================================================

/// How a finite stream behaves once every stored sample has been used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochMode {
    /// Fresh-data semantics: drawing past the end is an error.
    OnePass,
    /// Reshuffle the samples and start a new epoch.
    Reshuffle,
}

#[derive(Debug, Clone)]
enum Source {
    Synthetic {
        truth: Arc<GroundTruth>,
        rng: SubRng,
    },
    Finite {
        samples: Vec<SamplePoint>,
        cursor: usize,
        mode: EpochMode,
        shuffle_rng: SubRng,
    },
}

/// One user's sample source. Draw order is part of the reproducibility
/// contract: each synthetic draw consumes the feature coordinates first,
/// then the label noise, from the user's own substream.
#[derive(Debug, Clone)]
pub struct SampleStream {
    user: usize,
    source: Source,
}

impl SampleStream {
    /// Infinite stream of fresh draws from user `user`'s distribution.
    pub fn synthetic(user: usize, truth: Arc<GroundTruth>, policy: &RngPolicy) -> Self {
        let rng = policy.data_stream(user);
        SampleStream {
            user,
            source: Source::Synthetic { truth, rng },
        }
    }

    /// Finite stream over `samples` in the given order; `Reshuffle` mode
    /// permutes them afresh at every epoch boundary.
    pub fn finite(
        user: usize,
        samples: Vec<SamplePoint>,
        mode: EpochMode,
        policy: &RngPolicy,
    ) -> Self {
        let shuffle_rng = policy.labeled_stream("shuffle", user as u64);
        SampleStream {
            user,
            source: Source::Finite {
                samples,
                cursor: 0,
                mode,
                shuffle_rng,
            },
        }
    }

    pub fn user(&self) -> usize {
        self.user
    }

    /// Number of stored samples; `None` for the infinite synthetic source.
    pub fn len(&self) -> Option<usize> {
        match &self.source {
            Source::Synthetic { .. } => None,
            Source::Finite { samples, .. } => Some(samples.len()),
        }
    }

    /// Feature dimension, when known (a finite stream with no samples has
    /// none to report).
    pub fn dim(&self) -> Option<usize> {
        match &self.source {
            Source::Synthetic { truth, .. } => Some(truth.dim()),
            Source::Finite { samples, .. } => samples.first().map(|s| s.x.len()),
        }
    }

    /// Next sample. Finite one-pass streams error once exhausted.
    pub fn draw(&mut self) -> Result<SamplePoint> {
        match &mut self.source {
            Source::Synthetic { truth, rng } => {
                let theta_star = &truth.theta_stars[self.user];
                let d = truth.dim();
                let mut x = Vec::with_capacity(d);
                for sigma_k in truth.sigma_diag.iter().take(d) {
                    x.push(sigma_k.sqrt() * standard_normal(rng));
                }
                let noise = truth.tau * standard_normal(rng);
                let y = crate::linalg::dot(theta_star, &x) + noise;
                Ok(SamplePoint { x, y })
            }
            Source::Finite {
                samples,
                cursor,
                mode,
                shuffle_rng,
            } => {
                if *cursor == samples.len() {
                    match mode {
                        EpochMode::OnePass => {
                            return Err(Error::StreamExhausted {
                                user: self.user,
                                available: samples.len(),
                            })
                        }
                        EpochMode::Reshuffle => {
                            fisher_yates(samples, shuffle_rng);
                            *cursor = 0;
                        }
                    }
                }
                if samples.is_empty() {
                    return Err(Error::StreamExhausted {
                        user: self.user,
                        available: 0,
                    });
                }
                let s = samples[*cursor].clone();
                *cursor += 1;
                Ok(s)
            }
        }
    }
}

fn fisher_yates(samples: &mut [SamplePoint], rng: &mut SubRng) {
    for i in (1..samples.len()).rev() {
        let j = uniform_below(rng, i + 1);
        samples.swap(i, j);
    }
}

/// One synthetic stream per user in the ground truth.
pub fn synthetic_streams(truth: &Arc<GroundTruth>, policy: &RngPolicy) -> Vec<SampleStream> {
    (0..truth.users())
        .map(|i| SampleStream::synthetic(i, Arc::clone(truth), policy))
        .collect()
}

/// One finite stream per user, in the given order.
pub fn finite_streams(
    per_user: Vec<Vec<SamplePoint>>,
    mode: EpochMode,
    policy: &RngPolicy,
) -> Vec<SampleStream> {
    per_user
        .into_iter()
        .enumerate()
        .map(|(i, samples)| SampleStream::finite(i, samples, mode, policy))
        .collect()
}

// ===========================================================================
// CSV ingestion and emission
// ===========================================================================

/// Loads per-user datasets from CSV files, one file per user, user ids
/// assigned by sorted file name.
///
/// `pattern` is either a directory (all `*.csv` inside) or a path whose
/// file name contains a single `*` wildcard. Each file must have the header
/// `y,x1,...,xd` with the same `d` everywhere.
pub fn load_user_csv(pattern: &str) -> Result<Vec<Vec<SamplePoint>>> {
    let files = resolve_pattern(pattern)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no csv files match {pattern:?}")));
    }
    let mut per_user = Vec::with_capacity(files.len());
    let mut dim: Option<usize> = None;
    for path in &files {
        let samples = load_one_csv(path, &mut dim)?;
        per_user.push(samples);
    }
    Ok(per_user)
}

fn resolve_pattern(pattern: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(pattern);
    let mut files: Vec<PathBuf> = Vec::new();
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(pattern, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(pattern, e))?;
            let p = entry.path();
            if p.extension().is_some_and(|ext| ext == "csv") {
                files.push(p);
            }
        }
    } else {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::invalid(format!("bad pattern {pattern:?}")))?;
        let parent = if path.parent().map_or(true, |p| p.as_os_str().is_empty()) {
            Path::new(".")
        } else {
            path.parent().unwrap()
        };
        if let Some(star) = name.find('*') {
            let (prefix, suffix) = (&name[..star], &name[star + 1..]);
            if suffix.contains('*') {
                return Err(Error::invalid("pattern may contain at most one *"));
            }
            let entries = std::fs::read_dir(parent).map_err(|e| Error::io(pattern, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(pattern, e))?;
                let p = entry.path();
                let fname = match p.file_name().and_then(|n| n.to_str()) {
                    Some(f) => f,
                    None => continue,
                };
                if fname.len() >= prefix.len() + suffix.len()
                    && fname.starts_with(prefix)
                    && fname.ends_with(suffix)
                {
                    files.push(p);
                }
            }
        } else {
            files.push(path.to_path_buf());
        }
    }
    files.sort();
    Ok(files)
}

fn load_one_csv(path: &Path, dim: &mut Option<usize>) -> Result<Vec<SamplePoint>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            file: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;

    let headers = reader.headers()?.clone();
    let ncols = headers.len();
    if ncols < 2 || &headers[0] != "y" {
        return Err(Error::Ingest {
            file: display,
            line: 1,
            message: format!("expected header y,x1,...,xd; got {:?}", headers),
        });
    }
    for (k, field) in headers.iter().enumerate().skip(1) {
        if field != format!("x{k}") {
            return Err(Error::Ingest {
                file: display,
                line: 1,
                message: format!("column {k} must be named x{k}, got {field:?}"),
            });
        }
    }
    let d = ncols - 1;
    match dim {
        Some(existing) if *existing != d => {
            return Err(Error::Ingest {
                file: display,
                line: 1,
                message: format!("has {d} features but earlier files had {existing}"),
            })
        }
        Some(_) => {}
        None => *dim = Some(d),
    }

    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, counting the header
        let record = record.map_err(|e| Error::Ingest {
            file: display.clone(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != ncols {
            return Err(Error::Ingest {
                file: display,
                line,
                message: format!("expected {ncols} fields, got {}", record.len()),
            });
        }
        let parse = |field: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| Error::Ingest {
                file: display.clone(),
                line,
                message: format!("cannot parse {field:?} as a number"),
            })
        };
        let y = parse(&record[0])?;
        let mut x = Vec::with_capacity(d);
        for k in 1..ncols {
            x.push(parse(&record[k])?);
        }
        samples.push(SamplePoint { x, y });
    }
    Ok(samples)
}

/// Writes one `user_NNNN.csv` per user into `dir` (created if missing) with
/// the `y,x1,...,xd` header. Floats carry 17 significant digits, enough to
/// reload bit-identically. Returns the written paths in user order.
pub fn write_user_csv(dir: &Path, per_user: &[Vec<SamplePoint>]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let dim = per_user
        .iter()
        .flat_map(|s| s.first())
        .map(|s| s.x.len())
        .next()
        .ok_or_else(|| Error::invalid("no samples to write"))?;
    let mut paths = Vec::with_capacity(per_user.len());
    for (i, samples) in per_user.iter().enumerate() {
        let path = dir.join(format!("user_{i:04}.csv"));
        let mut writer = csv::Writer::from_path(&path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=dim).map(|k| format!("x{k}")));
        writer.write_record(&header)?;
        for s in samples {
            if s.x.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "user {i} sample has {} features, expected {dim}",
                    s.x.len()
                )));
            }
            let mut row = vec![format!("{:.16e}", s.y)];
            row.extend(s.x.iter().map(|v| format!("{v:.16e}")));
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        paths.push(path);
    }
    Ok(paths)
}

// ===========================================================================
// Tests
// ===========================================================================
