//! Grid sweeps, learning-rate selection, and privacy-utility curves.
//!
//! A sweep runs every `(eta, alpha_q, sigma, clip) x seed` cell of the
//! configured grids, traces each run, and attaches the privacy cost spent
//! by each recorded round. Cells run in parallel but the row order and
//! every floating-point value are fixed by the configuration alone, so two
//! sweeps of the same config produce byte-identical CSV files regardless
//! of thread count.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{
    finite_streams, generate_ground_truth, load_user_csv, synthetic_streams, EpochMode,
    SampleStream,
};
use crate::error::{Error, Result};
use crate::model::{self, Alpha, GroundTruth, ModelState, SamplePoint};
use crate::optimizer::{
    ppsgd_run, ppsgd_sampled_avg_run, ppsgd_sampled_run, SampleMode, TraceSpec,
};
use crate::privacy::{epsilon_for_repeated, MechanismSpec};
use crate::rng::RngPolicy;
use crate::theory;

use super::config::{AlgorithmKind, DatasetKind, ExperimentConfig};
use super::records::{fmt_f64, EpsilonReport, Flags, RunRecord};

// ===========================================================================
// Dataset plumbing
// ===========================================================================

enum DatasetHandle {
    Synthetic {
        truth: Arc<GroundTruth>,
    },
    Csv {
        train: Arc<Vec<Vec<SamplePoint>>>,
        eval: Arc<Vec<Vec<SamplePoint>>>,
        epoch_mode: EpochMode,
    },
}

impl DatasetHandle {
    fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.dataset {
            DatasetKind::Synthetic => {
                let truth = Arc::new(generate_ground_truth(&cfg.synthetic)?);
                Ok(DatasetHandle::Synthetic { truth })
            }
            DatasetKind::Csv => {
                let pattern = cfg.csv_pattern.as_deref().expect("validated");
                let train = load_user_csv(pattern)?;
                if train.iter().any(|u| u.is_empty()) {
                    return Err(Error::invalid("every user file needs at least one sample"));
                }
                let eval = match cfg.csv_test_pattern.as_deref() {
                    Some(p) => {
                        let eval = load_user_csv(p)?;
                        if eval.len() != train.len() {
                            return Err(Error::DimensionMismatch(format!(
                                "{} test files for {} train files",
                                eval.len(),
                                train.len()
                            )));
                        }
                        if eval.iter().any(|u| u.is_empty()) {
                            return Err(Error::invalid(
                                "every test file needs at least one sample",
                            ));
                        }
                        eval
                    }
                    None => train.clone(),
                };
                let epoch_mode = if cfg.epochs > 1 {
                    EpochMode::Reshuffle
                } else {
                    EpochMode::OnePass
                };
                Ok(DatasetHandle::Csv {
                    train: Arc::new(train),
                    eval: Arc::new(eval),
                    epoch_mode,
                })
            }
        }
    }

    fn users(&self) -> usize {
        match self {
            DatasetHandle::Synthetic { truth } => truth.users(),
            DatasetHandle::Csv { train, .. } => train.len(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            DatasetHandle::Synthetic { truth } => truth.dim(),
            DatasetHandle::Csv { train, .. } => train[0][0].x.len(),
        }
    }

    fn streams(&self, policy: &RngPolicy) -> Vec<SampleStream> {
        match self {
            DatasetHandle::Synthetic { truth } => synthetic_streams(truth, policy),
            DatasetHandle::Csv {
                train, epoch_mode, ..
            } => finite_streams(train.as_ref().clone(), *epoch_mode, policy),
        }
    }

    /// The run metric: closed-form excess risk of the averaged iterate for
    /// synthetic data, mean squared prediction error on the eval split for
    /// CSV data.
    fn metric(&self) -> Box<dyn Fn(&ModelState) -> f64 + Sync + Send> {
        match self {
            DatasetHandle::Synthetic { truth } => {
                let truth = Arc::clone(truth);
                Box::new(move |state: &ModelState| {
                    model::population_risk_closed_form(
                        &state.averaged_w(),
                        &state.averaged_thetas(),
                        &truth,
                    )
                    .unwrap_or(f64::NAN)
                })
            }
            DatasetHandle::Csv { eval, .. } => {
                let eval = Arc::clone(eval);
                Box::new(move |state: &ModelState| {
                    let w = state.averaged_w();
                    let thetas = state.averaged_thetas();
                    let mut total = 0.0;
                    for (theta, samples) in thetas.iter().zip(eval.iter()) {
                        let mut user = 0.0;
                        for s in samples {
                            let r = model::predict(&w, theta, &s.x) - s.y;
                            user += r * r;
                        }
                        total += user / samples.len() as f64;
                    }
                    total / eval.len() as f64
                })
            }
        }
    }
}

// ===========================================================================
// The sweep
// ===========================================================================

/// All rows of a sweep plus the metadata emitted into the CSV preamble.
#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub metadata: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    eta: f64,
    alpha_q: f64,
    sigma: f64,
    clip: f64,
    seed: u64,
}

/// Runs the full grid. Row order is the nested loop order
/// `eta -> alpha_q -> sigma -> clip -> seed -> round`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dataset = DatasetHandle::prepare(cfg)?;
    let users = dataset.users();
    let plan = SweepPlan::resolve(cfg, users)?;

    let mut cells = Vec::new();
    for &eta in &cfg.eta_grid {
        for &alpha_q in &cfg.alpha_q_grid {
            for &sigma in &cfg.sigma_grid {
                for &clip in &cfg.clip_grid {
                    for &seed in &cfg.seeds {
                        cells.push(Cell { eta, alpha_q, sigma, clip, seed });
                    }
                }
            }
        }
    }

    let per_cell: Vec<Vec<RunRecord>> = cells
        .par_iter()
        .map(|cell| run_cell(cfg, &dataset, &plan, cell))
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepOutcome {
        records: per_cell.into_iter().flatten().collect(),
        metadata: sweep_metadata(cfg, &dataset, &plan),
    })
}

/// Participation mode and the derived scale constants of one sweep.
#[derive(Debug, Clone, Copy)]
struct SweepPlan {
    mode: SampleMode,
    /// Expected participation rate (1 under full participation).
    rate: f64,
    /// Expected clients per round; divides `alpha_q` into raw `alpha`.
    alpha_divisor: f64,
    /// The aggregation-scale denominator turning a grid `sigma` into the
    /// raw noise std: `sigma_zeta = sigma * clip / normalizer`.
    normalizer: f64,
}

impl SweepPlan {
    fn resolve(cfg: &ExperimentConfig, users: usize) -> Result<SweepPlan> {
        let mode = match cfg.algorithm {
            AlgorithmKind::Alg1 => SampleMode::AllClients,
            AlgorithmKind::Alg2 | AlgorithmKind::Alg3 => match (cfg.q, cfg.fixed_q) {
                (Some(q), None) => SampleMode::Bernoulli(q),
                (None, Some(k)) => {
                    if k > users {
                        return Err(Error::Config(format!(
                            "fixed_q = {k} exceeds the {users} available users"
                        )));
                    }
                    SampleMode::FixedQ(k)
                }
                _ => unreachable!("config validation enforces exactly one"),
            },
        };
        let rate = mode.rate(users);
        let n = users as f64;
        let normalizer = match cfg.algorithm {
            AlgorithmKind::Alg1 => n,
            AlgorithmKind::Alg2 => rate * n * cfg.minibatch as f64,
            AlgorithmKind::Alg3 => rate * n,
        };
        Ok(SweepPlan {
            mode,
            rate,
            alpha_divisor: rate * n,
            normalizer,
        })
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    plan: &SweepPlan,
    cell: &Cell,
) -> Result<Vec<RunRecord>> {
    let alpha = Alpha::new(if cell.alpha_q.is_infinite() {
        f64::INFINITY
    } else {
        cell.alpha_q / plan.alpha_divisor
    })?;
    let sigma_zeta = cell.sigma * cell.clip / plan.normalizer;
    let hp = crate::optimizer::HyperParams {
        eta: cell.eta,
        alpha,
        clip: cell.clip,
        noise_std: sigma_zeta,
        rounds: cfg.rounds,
    };
    let policy = RngPolicy::new(cell.seed);
    let mut streams = dataset.streams(&policy);
    let metric = dataset.metric();
    let trace = TraceSpec::new(cfg.stride, &*metric);
    let sizes = vec![cfg.minibatch; streams.len()];

    let out = match cfg.algorithm {
        AlgorithmKind::Alg1 => {
            ppsgd_run(&hp, &mut streams, cfg.minibatch, &policy, &trace, None)?
        }
        AlgorithmKind::Alg2 => {
            ppsgd_sampled_run(&hp, &mut streams, &sizes, plan.mode, &policy, &trace, None)?
        }
        AlgorithmKind::Alg3 => {
            ppsgd_sampled_avg_run(&hp, &mut streams, &sizes, plan.mode, &policy, &trace, None)?
        }
    };

    let flags = Flags {
        poisson_q: plan.rate < 1.0,
        diverged: out.diverged_at.is_some(),
    };
    let mech = if alpha.is_zero() || cell.sigma == 0.0 {
        None
    } else {
        Some(MechanismSpec::new(cell.sigma, plan.rate)?)
    };
    out.trace
        .iter()
        .map(|r| {
            let epsilon = match &mech {
                None if alpha.is_zero() => EpsilonReport::Local,
                None => EpsilonReport::Infinite,
                Some(mech) => {
                    EpsilonReport::Value(epsilon_for_repeated(mech, r.round, cfg.delta)?)
                }
            };
            Ok(RunRecord {
                round: r.round,
                metric: r.metric,
                epsilon,
                alpha: alpha.value(),
                eta: cell.eta,
                sigma: cell.sigma,
                clip: cell.clip,
                seed: cell.seed,
                flags,
            })
        })
        .collect()
}

fn sweep_metadata(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    plan: &SweepPlan,
) -> Vec<(String, String)> {
    let mut meta = vec![
        ("dataset".to_string(), match cfg.dataset {
            DatasetKind::Synthetic => "synthetic".to_string(),
            DatasetKind::Csv => "csv".to_string(),
        }),
        ("algorithm".to_string(), cfg.algorithm.as_str().to_string()),
        ("users".to_string(), dataset.users().to_string()),
        ("dim".to_string(), dataset.dim().to_string()),
        ("rounds".to_string(), cfg.rounds.to_string()),
        ("minibatch".to_string(), cfg.minibatch.to_string()),
        ("stride".to_string(), cfg.stride.to_string()),
        ("sampling_rate".to_string(), fmt_f64(plan.rate)),
        ("alpha_divisor".to_string(), fmt_f64(plan.alpha_divisor)),
        ("normalizer".to_string(), fmt_f64(plan.normalizer)),
        ("delta".to_string(), fmt_f64(cfg.delta)),
        (
            "seeds".to_string(),
            cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        ),
    ];
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let s = &cfg.synthetic;
            meta.push(("data_seed".to_string(), s.seed.to_string()));
            meta.push(("shared_coords".to_string(), s.shared_coords.to_string()));
            meta.push(("theta0_std".to_string(), fmt_f64(s.theta0_std)));
            meta.push(("delta_std".to_string(), fmt_f64(s.delta_std)));
            meta.push(("tau".to_string(), fmt_f64(s.tau)));
        }
        DatasetKind::Csv => {
            if let Some(p) = &cfg.csv_pattern {
                meta.push(("csv_pattern".to_string(), p.clone()));
            }
            if let Some(p) = &cfg.csv_test_pattern {
                meta.push(("csv_test_pattern".to_string(), p.clone()));
            }
        }
    }
    meta
}

/// Reads a float back out of CSV metadata.
pub fn metadata_f64(metadata: &[(String, String)], key: &str) -> Result<f64> {
    metadata
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::TableQuery(format!("metadata key {key:?} missing")))?
        .1
        .parse::<f64>()
        .map_err(|_| Error::TableQuery(format!("metadata key {key:?} is not a number")))
}

// ===========================================================================
// Table queries
// ===========================================================================

/// Picks the learning rate with the best (smallest) mean metric at `round`,
/// averaging across seeds. A rate whose runs diverged, produced non-finite
/// metrics, or died before `round` is disqualified; ties go to the smaller
/// rate. Errors when no row exists at `round` or every rate is
/// disqualified.
pub fn select_best_lr(records: &[RunRecord], round: usize) -> Result<f64> {
    let mut scores: HashMap<u64, (f64, usize)> = HashMap::new();
    let mut seeds_anywhere: HashMap<u64, HashSet<u64>> = HashMap::new();
    let mut seeds_at_round: HashMap<u64, HashSet<u64>> = HashMap::new();
    let mut any_at_round = false;

    for r in records {
        let key = r.eta.to_bits();
        seeds_anywhere.entry(key).or_default().insert(r.seed);
        if r.round == round {
            any_at_round = true;
            seeds_at_round.entry(key).or_default().insert(r.seed);
            let value = if r.flags.diverged || !r.metric.is_finite() {
                f64::INFINITY
            } else {
                r.metric
            };
            let slot = scores.entry(key).or_insert((0.0, 0));
            slot.0 += value;
            slot.1 += 1;
        }
    }
    if !any_at_round {
        return Err(Error::TableQuery(format!("no rows at round {round}")));
    }

    let mut etas: Vec<f64> = seeds_anywhere.keys().map(|&k| f64::from_bits(k)).collect();
    etas.sort_by(f64::total_cmp);

    let mut best: Option<(f64, f64)> = None;
    for eta in etas {
        let key = eta.to_bits();
        let complete = seeds_at_round.get(&key).map_or(false, |at| {
            at.len() == seeds_anywhere[&key].len()
        });
        let score = match scores.get(&key) {
            Some(&(sum, n)) if complete => sum / n as f64,
            _ => f64::INFINITY,
        };
        if best.map_or(true, |(s, _)| score < s) {
            best = Some((score, eta));
        }
    }
    match best {
        Some((score, eta)) if score.is_finite() => Ok(eta),
        _ => Err(Error::TableQuery(format!(
            "every learning rate diverged or is incomplete at round {round}"
        ))),
    }
}

// ===========================================================================
// Privacy-utility curves
// ===========================================================================

/// One point of a tradeoff curve: the tuned metric at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    /// The personalization weight this point used (for the envelope, the
    /// winner).
    pub alpha: f64,
    pub sigma: f64,
    pub epsilon: EpsilonReport,
    pub metric: f64,
    /// The tuned learning rate behind the metric.
    pub eta: f64,
}

/// Privacy-utility curves extracted from one sweep at a fixed round.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    /// Fully local training; noise-independent, perfectly private.
    pub local: Option<TradeoffPoint>,
    /// Fully global training per noise level, ascending privacy cost.
    pub global: Vec<TradeoffPoint>,
    /// The middle finite nonzero personalization weight per noise level.
    pub personalized: Vec<TradeoffPoint>,
    pub personalized_alpha: Option<f64>,
    /// Per noise level, the best metric over every available weight
    /// (including the local model, which fits in any privacy budget).
    pub envelope: Vec<TradeoffPoint>,
}

/// Builds privacy-utility curves at `round` from sweep rows, tuning the
/// learning rate independently inside every `(alpha, sigma)` group.
pub fn tradeoff_curve(records: &[RunRecord], round: usize) -> Result<TradeoffCurve> {
    if records.is_empty() {
        return Err(Error::TableQuery("no records to build a curve from".into()));
    }

    let mut alphas: Vec<f64> = dedup_sorted(records.iter().map(|r| r.alpha));
    let sigmas: Vec<f64> = dedup_sorted(records.iter().map(|r| r.sigma));
    alphas.retain(|a| !a.is_nan());

    // Tune eta inside each (alpha, sigma) group and summarize it.
    let mut points: HashMap<(u64, u64), TradeoffPoint> = HashMap::new();
    for &alpha in &alphas {
        for &sigma in &sigmas {
            let group: Vec<RunRecord> = records
                .iter()
                .filter(|r| r.alpha.to_bits() == alpha.to_bits() && r.sigma.to_bits() == sigma.to_bits())
                .cloned()
                .collect();
            if group.is_empty() {
                continue;
            }
            let eta = match select_best_lr(&group, round) {
                Ok(eta) => eta,
                // A fully diverged group simply contributes no point.
                Err(Error::TableQuery(_)) => continue,
                Err(other) => return Err(other),
            };
            let chosen: Vec<&RunRecord> = group
                .iter()
                .filter(|r| r.round == round && r.eta.to_bits() == eta.to_bits())
                .collect();
            let metric =
                chosen.iter().map(|r| r.metric).sum::<f64>() / chosen.len() as f64;
            points.insert(
                (alpha.to_bits(), sigma.to_bits()),
                TradeoffPoint {
                    alpha,
                    sigma,
                    epsilon: chosen[0].epsilon,
                    metric,
                    eta,
                },
            );
        }
    }
    if points.is_empty() {
        return Err(Error::TableQuery(format!("no usable groups at round {round}")));
    }

    // The local model ignores noise, so a single representative suffices.
    let local = sigmas
        .iter()
        .find_map(|s| points.get(&(0.0_f64.to_bits(), s.to_bits())))
        .cloned();

    let collect_for = |alpha: f64| -> Vec<TradeoffPoint> {
        let mut curve: Vec<TradeoffPoint> = sigmas
            .iter()
            .filter_map(|s| points.get(&(alpha.to_bits(), s.to_bits())).cloned())
            .collect();
        curve.sort_by(|a, b| epsilon_order(a.epsilon).partial_cmp(&epsilon_order(b.epsilon)).unwrap());
        curve
    };

    let global = if alphas.iter().any(|a| a.is_infinite()) {
        collect_for(f64::INFINITY)
    } else {
        Vec::new()
    };

    let finite: Vec<f64> = alphas
        .iter()
        .copied()
        .filter(|a| *a > 0.0 && a.is_finite())
        .collect();
    let personalized_alpha = if finite.is_empty() {
        None
    } else {
        Some(finite[finite.len() / 2])
    };
    let personalized = personalized_alpha.map(collect_for).unwrap_or_default();

    let mut envelope = Vec::new();
    for &sigma in &sigmas {
        let mut winner: Option<TradeoffPoint> = None;
        for &alpha in &alphas {
            let candidate = match points.get(&(alpha.to_bits(), sigma.to_bits())) {
                Some(p) => p,
                None => continue,
            };
            // The local point is admissible at every noise level.
            let metric = if alpha == 0.0 {
                local.as_ref().map_or(candidate.metric, |l| l.metric)
            } else {
                candidate.metric
            };
            let better = winner.as_ref().map_or(true, |w| metric < w.metric);
            if better {
                let mut point = candidate.clone();
                point.metric = metric;
                point.sigma = sigma;
                if let Some(budget) = points.values().find(|p| {
                    p.sigma.to_bits() == sigma.to_bits() && !p.alpha.is_nan() && p.alpha > 0.0
                }) {
                    if alpha == 0.0 {
                        point.epsilon = budget.epsilon;
                    }
                }
                envelope.push(point.clone());
                winner = Some(point);
            }
        }
        if let Some(w) = winner {
            envelope.retain(|p| p.sigma.to_bits() != sigma.to_bits() || p == &w);
        }
    }
    envelope.sort_by(|a, b| epsilon_order(a.epsilon).partial_cmp(&epsilon_order(b.epsilon)).unwrap());

    Ok(TradeoffCurve {
        local,
        global,
        personalized,
        personalized_alpha,
        envelope,
    })
}

fn epsilon_order(e: EpsilonReport) -> f64 {
    match e {
        EpsilonReport::Local => f64::NEG_INFINITY,
        EpsilonReport::Value(v) => v,
        EpsilonReport::Infinite => f64::INFINITY,
    }
}

fn dedup_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut seen = HashSet::new();
    let mut out: Vec<f64> = values.filter(|v| seen.insert(v.to_bits())).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Recomputes every row's privacy cost from its own columns plus the
/// sweep-level sampling rate and delta, and checks the stored value to a
/// relative 1e-9. This is the loader-side integrity check for trace files.
pub fn verify_epsilons(records: &[RunRecord], sampling_rate: f64, delta: f64) -> Result<()> {
    for (idx, r) in records.iter().enumerate() {
        let expected = if r.alpha == 0.0 {
            EpsilonReport::Local
        } else if r.sigma == 0.0 {
            EpsilonReport::Infinite
        } else {
            let mech = MechanismSpec::new(r.sigma, sampling_rate)?;
            EpsilonReport::Value(epsilon_for_repeated(&mech, r.round, delta)?)
        };
        let ok = match (r.epsilon, expected) {
            (EpsilonReport::Local, EpsilonReport::Local) => true,
            (EpsilonReport::Infinite, EpsilonReport::Infinite) => true,
            (EpsilonReport::Value(got), EpsilonReport::Value(want)) => {
                (got - want).abs() <= 1e-9 * want.abs().max(1.0)
            }
            _ => false,
        };
        if !ok {
            return Err(Error::TableQuery(format!(
                "row {idx}: epsilon {:?} does not match recomputed {:?}",
                r.epsilon, expected
            )));
        }
    }
    Ok(())
}

// ===========================================================================
// Theory-bound tables
// ===========================================================================

/// One theoretical operating point of the configured problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub alpha: f64,
    pub sigma: f64,
    /// Raw noise std implied by the grid sigma and the aggregation scale.
    pub sigma_zeta: f64,
    pub epsilon: EpsilonReport,
    /// Closed-form excess-risk bound at the configured round count.
    pub bound: f64,
    /// The step size the full-participation analysis prescribes.
    pub step_size: f64,
}

/// Evaluates the closed-form bounds over the `(alpha, sigma)` grid of a
/// synthetic config, using the first clip value as the gradient bound.
pub fn bounds_table(cfg: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    cfg.validate()?;
    if cfg.dataset != DatasetKind::Synthetic {
        return Err(Error::Config(
            "bounds need the synthetic ground truth; csv datasets have none".into(),
        ));
    }
    let truth = generate_ground_truth(&cfg.synthetic)?;
    let users = truth.users();
    let plan = SweepPlan::resolve(cfg, users)?;
    let clip = cfg.clip_grid[0];

    let trace_sigma: f64 = truth.sigma_diag.iter().sum();
    // Smoothness of the expected per-sample loss; per-sample curvature has
    // no almost-sure bound for Gaussian features, so the bounds use the
    // expectation 2 tr(Sigma) as the working constant.
    let smoothness = 2.0 * trace_sigma;
    let grad_var = truth.tau * truth.tau * trace_sigma;
    let constants = theory::ProblemConstants {
        smoothness,
        grad_bound: clip,
        sigma_w_sq: grad_var,
        sigma_theta_sq: grad_var,
        sigma_fluct_sq: 0.0,
        d_w: truth.dim(),
        users,
    };

    let mut rows = Vec::new();
    for &alpha_q in &cfg.alpha_q_grid {
        let alpha = Alpha::new(if alpha_q.is_infinite() {
            f64::INFINITY
        } else {
            alpha_q / plan.alpha_divisor
        })?;
        let (_, _, radius) = theory::min_norm_minimizer_general(&truth.theta_stars, alpha)?;
        let inputs = theory::BoundInputs {
            constants,
            alpha,
            radius,
            rounds: cfg.rounds,
        };
        for &sigma in &cfg.sigma_grid {
            let sigma_zeta = sigma * clip / plan.normalizer;
            let bound = match cfg.algorithm {
                AlgorithmKind::Alg1 => theory::excess_risk_bound(&inputs, sigma_zeta)?,
                AlgorithmKind::Alg2 => theory::excess_risk_bound_sampled(
                    &inputs,
                    sigma_zeta,
                    plan.rate,
                    (users * cfg.minibatch) as f64,
                    cfg.minibatch,
                )?,
                AlgorithmKind::Alg3 => theory::excess_risk_bound_avg_user(
                    &inputs,
                    sigma_zeta,
                    plan.rate,
                    cfg.minibatch,
                )?,
            };
            let epsilon = if alpha.is_zero() {
                EpsilonReport::Local
            } else if sigma == 0.0 {
                EpsilonReport::Infinite
            } else {
                let mech = MechanismSpec::new(sigma, plan.rate)?;
                EpsilonReport::Value(epsilon_for_repeated(&mech, cfg.rounds, cfg.delta)?)
            };
            rows.push(BoundsRow {
                alpha: alpha.value(),
                sigma,
                sigma_zeta,
                epsilon,
                bound,
                step_size: theory::theory_step_size(&inputs, sigma_zeta)?,
            });
        }
    }
    Ok(rows)
}

// ===========================================================================
// Tests
// ===========================================================================
