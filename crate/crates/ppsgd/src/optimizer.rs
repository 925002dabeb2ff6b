//! The federated SGD loop in its three participation flavors.
//!
//! All variants share one engine; they differ only in the client-selection
//! rule, whether minibatch gradients are averaged or summed, and two
//! precomputed scale factors. Because the scales collapse to the same
//! floating-point values when sampling degenerates (rate 1, unit or equal
//! minibatches), the sampled runs then reproduce the full-participation run
//! bit for bit.
//!
//! Per round: every selected client draws its minibatch, takes an unclipped
//! local step on its personal block, and ships a clipped copy of the same
//! gradient; the server averages the clipped messages with a fixed-shape
//! pairwise tree (so results do not depend on thread count), adds Gaussian
//! noise, and steps the shared block. The trained point is the running
//! average of the joint iterates, which excludes the current one.

use rayon::prelude::*;

use crate::data::SampleStream;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{clip_to_ball, Alpha, ModelState};
use crate::rng::{self, RngPolicy};

// ===========================================================================
// Hyperparameters and run configuration
// ===========================================================================

/// Per-run hyperparameters, shared by every algorithm variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Base step size; personal blocks move by a scaled-down multiple of it
    /// and the shared block by `alpha * eta` (plain `eta` in the fully
    /// global mode).
    pub eta: f64,
    pub alpha: Alpha,
    /// Clip radius for the client-to-server messages; `inf` disables
    /// clipping.
    pub clip: f64,
    /// Std of each coordinate of the server-side Gaussian noise.
    pub noise_std: f64,
    pub rounds: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be finite and positive, got {}", self.eta)));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid(format!("clip must be positive, got {}", self.clip)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be positive"));
        }
        Ok(())
    }
}

/// Which clients participate each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Everyone, every round, with no selection randomness consumed.
    AllClients,
    /// Independent coin per client per round.
    Bernoulli(f64),
    /// Exactly this many distinct clients per round, uniformly.
    FixedQ(usize),
}

impl SampleMode {
    fn validate(&self, users: usize) -> Result<()> {
        match *self {
            SampleMode::AllClients => Ok(()),
            SampleMode::Bernoulli(q) => {
                if q > 0.0 && q <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("Bernoulli rate must be in (0, 1], got {q}")))
                }
            }
            SampleMode::FixedQ(k) => {
                if k >= 1 && k <= users {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("FixedQ({k}) out of range for {users} users")))
                }
            }
        }
    }

    /// Expected fraction of participating clients.
    pub fn rate(&self, users: usize) -> f64 {
        match *self {
            SampleMode::AllClients => 1.0,
            SampleMode::Bernoulli(q) => q,
            SampleMode::FixedQ(k) => k as f64 / users as f64,
        }
    }
}

/// When and how to record the training trace.
pub struct TraceSpec<'a> {
    /// Record every `stride`-th round (1-based); the final round is always
    /// recorded.
    pub stride: usize,
    /// Scored on the full state; harness metrics read the averaged iterate.
    pub metric: &'a (dyn Fn(&ModelState) -> f64 + Sync),
}

impl<'a> TraceSpec<'a> {
    pub fn new(stride: usize, metric: &'a (dyn Fn(&ModelState) -> f64 + Sync)) -> Self {
        TraceSpec { stride, metric }
    }
}

/// One recorded round. Norms are of the current iterate (divergence
/// diagnostics); the metric is whatever the trace closure computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based count of completed rounds.
    pub round: usize,
    pub metric: f64,
    pub w_norm: f64,
    /// Root of the summed squared personal-block norms.
    pub theta_norm: f64,
}

/// Everything that influenced the shared block in one round: exactly the
/// clipped messages the server received, the noise it added, and who sent.
/// Replaying these against the update rule reconstructs the shared block
/// bit for bit, which is the privacy-relevant information-flow contract.
#[derive(Debug)]
pub struct RoundUpdate<'a> {
    /// 0-based round index.
    pub round: usize,
    /// Ascending indices of the participating clients.
    pub selected: &'a [usize],
    /// Clipped gradients in `selected` order; empty when the shared block
    /// is frozen (`alpha = 0`).
    pub clipped_grads: &'a [Vec<f64>],
    /// The scaled noise vector actually added, when any.
    pub noise: Option<&'a [f64]>,
}

/// Callback observing each round's server-side update.
pub trait RoundObserver {
    fn observe(&mut self, update: &RoundUpdate<'_>);
}

/// Final state plus the recorded trace. When the iterate stopped being
/// finite the run ends early and `diverged_at` carries the 1-based round.
#[derive(Debug)]
pub struct RunOutput {
    pub state: ModelState,
    pub trace: Vec<RoundRecord>,
    pub diverged_at: Option<usize>,
}

// ===========================================================================
// Public entry points
// ===========================================================================

/// Full participation: every client contributes every round, minibatch
/// gradients are averaged, and both scale factors are `1/N`.
pub fn ppsgd_run(
    hp: &HyperParams,
    streams: &mut [SampleStream],
    minibatch: usize,
    policy: &RngPolicy,
    trace: &TraceSpec<'_>,
    observer: Option<&mut dyn RoundObserver>,
) -> Result<RunOutput> {
    let users = streams.len();
    let sizes = vec![minibatch; users];
    let inv_n = 1.0 / users as f64;
    run_engine(
        hp,
        streams,
        &sizes,
        SampleMode::AllClients,
        GradReduce::Average,
        inv_n,
        inv_n,
        policy,
        trace,
        observer,
    )
}

/// Sampled participation against the minibatch-weighted objective: summed
/// minibatch gradients, both scales `1/(q M)` with `M` the total minibatch
/// weight across all users.
pub fn ppsgd_sampled_run(
    hp: &HyperParams,
    streams: &mut [SampleStream],
    minibatch_sizes: &[usize],
    mode: SampleMode,
    policy: &RngPolicy,
    trace: &TraceSpec<'_>,
    observer: Option<&mut dyn RoundObserver>,
) -> Result<RunOutput> {
    let total: usize = minibatch_sizes.iter().sum();
    let scale = 1.0 / (mode.rate(streams.len()) * total as f64);
    run_engine(
        hp,
        streams,
        minibatch_sizes,
        mode,
        GradReduce::Sum,
        scale,
        scale,
        policy,
        trace,
        observer,
    )
}

/// Sampled participation against the uniform per-user average: averaged
/// minibatch gradients, both scales `1/(q N)`.
pub fn ppsgd_sampled_avg_run(
    hp: &HyperParams,
    streams: &mut [SampleStream],
    minibatch_sizes: &[usize],
    mode: SampleMode,
    policy: &RngPolicy,
    trace: &TraceSpec<'_>,
    observer: Option<&mut dyn RoundObserver>,
) -> Result<RunOutput> {
    let scale = 1.0 / (mode.rate(streams.len()) * streams.len() as f64);
    run_engine(
        hp,
        streams,
        minibatch_sizes,
        mode,
        GradReduce::Average,
        scale,
        scale,
        policy,
        trace,
        observer,
    )
}

// ===========================================================================
// The shared engine
// ===========================================================================

#[derive(Debug, Clone, Copy)]
enum GradReduce {
    Average,
    Sum,
}

#[allow(clippy::too_many_arguments)]
fn run_engine(
    hp: &HyperParams,
    streams: &mut [SampleStream],
    minibatch_sizes: &[usize],
    mode: SampleMode,
    reduce: GradReduce,
    local_factor: f64,
    server_scale: f64,
    policy: &RngPolicy,
    trace: &TraceSpec<'_>,
    mut observer: Option<&mut dyn RoundObserver>,
) -> Result<RunOutput> {
    hp.validate()?;
    mode.validate(streams.len())?;
    if trace.stride == 0 {
        return Err(Error::invalid("trace stride must be at least 1"));
    }
    let users = streams.len();
    if users == 0 {
        return Err(Error::invalid("need at least one client stream"));
    }
    if minibatch_sizes.len() != users {
        return Err(Error::DimensionMismatch(format!(
            "{} minibatch sizes for {} users",
            minibatch_sizes.len(),
            users
        )));
    }
    if minibatch_sizes.iter().any(|&m| m == 0) {
        return Err(Error::invalid("minibatch sizes must be positive"));
    }
    let dim = streams[0]
        .dim()
        .ok_or_else(|| Error::invalid("cannot infer feature dimension from an empty stream"))?;
    if streams.iter().any(|s| s.dim() != Some(dim)) {
        return Err(Error::DimensionMismatch(
            "all client streams must share one feature dimension".into(),
        ));
    }

    let local_step = hp.eta * local_factor;
    // The fully global mode steps the shared block by eta itself.
    let server_step = match hp.alpha {
        Alpha::Zero => 0.0,
        Alpha::Finite(a) => a * hp.eta,
        Alpha::Infinite => hp.eta,
    };
    let shared_frozen = hp.alpha.is_zero();
    let personal_frozen = hp.alpha.is_infinite();

    let mut state = ModelState::zeros(dim, users);
    let mut records = Vec::new();
    let mut diverged_at = None;

    for t in 0..hp.rounds {
        state.absorb_current_into_average();

        let selected: Vec<usize> = match mode {
            SampleMode::AllClients => (0..users).collect(),
            SampleMode::Bernoulli(q) => {
                let mut sel_rng = policy.selection_stream(t);
                (0..users).filter(|_| rng::bernoulli(&mut sel_rng, q)).collect()
            }
            SampleMode::FixedQ(k) => {
                let mut sel_rng = policy.selection_stream(t);
                rng::choose_without_replacement(&mut sel_rng, users, k)
            }
        };
        let mut mask = vec![false; users];
        for &i in &selected {
            mask[i] = true;
        }

        // Per-client work in parallel; every client owns its stream and
        // personal block, so scheduling cannot change any draw.
        let w = &state.w;
        let contributions: Vec<Option<Vec<f64>>> = streams
            .par_iter_mut()
            .zip(state.thetas.par_iter_mut())
            .enumerate()
            .map(|(i, (stream, theta))| -> Result<Option<Vec<f64>>> {
                if !mask[i] {
                    return Ok(None);
                }
                let m = minibatch_sizes[i];
                let mut g = vec![0.0; dim];
                for _ in 0..m {
                    let s = stream.draw()?;
                    let residual = crate::model::predict(w, theta, &s.x) - s.y;
                    for k in 0..dim {
                        g[k] += residual * s.x[k];
                    }
                }
                if let GradReduce::Average = reduce {
                    linalg::scale(&mut g, 1.0 / m as f64);
                }
                // The local step is neither clipped nor noised; only the
                // message to the server is.
                if !personal_frozen {
                    linalg::axpy(theta, -local_step, &g);
                }
                if shared_frozen {
                    return Ok(None);
                }
                clip_to_ball(&mut g, hp.clip);
                Ok(Some(g))
            })
            .collect::<Result<Vec<_>>>()?;

        let clipped: Vec<Vec<f64>> = contributions.into_iter().flatten().collect();

        let mut noise: Option<Vec<f64>> = None;
        if !shared_frozen {
            if hp.noise_std > 0.0 {
                let mut noise_rng = policy.noise_stream(t);
                noise = Some(
                    (0..dim)
                        .map(|_| hp.noise_std * rng::standard_normal(&mut noise_rng))
                        .collect(),
                );
            }
            let total = aggregate_deterministic(&clipped, dim);
            let zeros;
            let zeta = match &noise {
                Some(z) => z.as_slice(),
                None => {
                    zeros = vec![0.0; dim];
                    &zeros
                }
            };
            for k in 0..dim {
                state.w[k] -= server_step * (server_scale * total[k] + zeta[k]);
            }
        }

        if let Some(obs) = observer.as_mut() {
            obs.observe(&RoundUpdate {
                round: t,
                selected: &selected,
                clipped_grads: &clipped,
                noise: noise.as_deref(),
            });
        }

        let round_no = t + 1;
        if !state.is_finite() {
            diverged_at = Some(round_no);
            break;
        }
        if round_no % trace.stride == 0 || round_no == hp.rounds {
            let metric = (trace.metric)(&state);
            let theta_norm = state.thetas.iter().map(|th| linalg::norm_sq(th)).sum::<f64>().sqrt();
            records.push(RoundRecord {
                round: round_no,
                metric,
                w_norm: linalg::norm(&state.w),
                theta_norm,
            });
            if !metric.is_finite() {
                diverged_at = Some(round_no);
                break;
            }
        }
    }

    Ok(RunOutput {
        state,
        trace: records,
        diverged_at,
    })
}

/// Sums vectors with a fixed-shape pairwise tree (split at the midpoint,
/// recurse, add halves). The shape depends only on the count, so the result
/// is identical across thread counts and run repetitions.
pub fn aggregate_deterministic(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    match vectors.len() {
        0 => vec![0.0; dim],
        1 => vectors[0].clone(),
        len => {
            let (lo, hi) = vectors.split_at(len / 2);
            let mut left = aggregate_deterministic(lo, dim);
            let right = aggregate_deterministic(hi, dim);
            linalg::axpy(&mut left, 1.0, &right);
            left
        }
    }
}

// ===========================================================================
// Tests
// ===========================================================================
