//! Additive personalized linear model and its local geometry.
//!
//! Every user i predicts with the sum of a shared weight vector `w` and a
//! personal offset `theta_i`; the squared-error gradient with respect to
//! both blocks is the same vector `residual * x`, which the optimizer
//! exploits. The personalization knob `alpha` weights the shared block in
//! the joint norm and the two extremes (0 = purely local, infinite = purely
//! global) are first-class modes rather than limiting approximations.

use crate::error::{Error, Result};
use crate::linalg;

// ===========================================================================
// Samples and ground truth
// ===========================================================================

/// One labelled observation for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: f64,
}

/// The data-generating parameters of a synthetic problem: per-user optimal
/// predictors, the diagonal feature covariance, and the label-noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `theta_stars[i]` is user i's true predictor.
    pub theta_stars: Vec<Vec<f64>>,
    /// Diagonal of the feature covariance; features are independent.
    pub sigma_diag: Vec<f64>,
    /// Label noise standard deviation.
    pub tau: f64,
}

impl GroundTruth {
    pub fn users(&self) -> usize {
        self.theta_stars.len()
    }

    pub fn dim(&self) -> usize {
        self.sigma_diag.len()
    }

    /// Average of the per-user true predictors.
    pub fn mean_theta_star(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for theta in &self.theta_stars {
            linalg::axpy(&mut mean, 1.0, theta);
        }
        linalg::scale(&mut mean, 1.0 / self.users() as f64);
        mean
    }
}

// ===========================================================================
// Personalization weight
// ===========================================================================

/// The personalization weight `alpha`, with both degenerate modes explicit.
///
/// `Zero` freezes the shared block (fully local learning, hence fully
/// private); `Infinite` freezes the personal blocks (fully global learning).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Zero,
    Finite(f64),
    Infinite,
}

impl Alpha {
    /// Classifies a raw value; rejects negatives and NaN.
    pub fn new(value: f64) -> Result<Alpha> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::invalid(format!("alpha must be in [0, inf], got {value}")));
        }
        Ok(if value == 0.0 {
            Alpha::Zero
        } else if value.is_infinite() {
            Alpha::Infinite
        } else {
            Alpha::Finite(value)
        })
    }

    /// Raw value, with 0 and +inf for the degenerate modes.
    pub fn value(&self) -> f64 {
        match self {
            Alpha::Zero => 0.0,
            Alpha::Finite(a) => *a,
            Alpha::Infinite => f64::INFINITY,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Alpha::Zero)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Alpha::Infinite)
    }
}

/// Squared joint norm `(1/alpha) |w|^2 + sum_i |theta_i|^2`.
///
/// At `alpha = 0` the shared block is forbidden: any nonzero `w` has
/// infinite norm. At `alpha = inf` the shared block is free and only the
/// personal blocks count.
pub fn alpha_norm_sq(w: &[f64], thetas: &[Vec<f64>], alpha: Alpha) -> f64 {
    let theta_part: f64 = thetas.iter().map(|t| linalg::norm_sq(t)).sum();
    match alpha {
        Alpha::Zero => {
            if linalg::norm_sq(w) > 0.0 {
                f64::INFINITY
            } else {
                theta_part
            }
        }
        Alpha::Finite(a) => linalg::norm_sq(w) / a + theta_part,
        Alpha::Infinite => theta_part,
    }
}

// ===========================================================================
// Prediction, loss, gradients
// ===========================================================================

/// Model output `(w + theta_i) . x`.
pub fn predict(w: &[f64], theta_i: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), theta_i.len());
    let mut acc = 0.0;
    for k in 0..w.len() {
        acc += (w[k] + theta_i[k]) * x[k];
    }
    acc
}

/// Squared-error loss `(prediction - y)^2 / 2` at one sample.
pub fn squared_loss(w: &[f64], theta_i: &[f64], sample: &SamplePoint) -> f64 {
    let r = predict(w, theta_i, &sample.x) - sample.y;
    0.5 * r * r
}

/// Per-sample gradient `residual * x`, shared by both parameter blocks.
pub fn sample_grad(w: &[f64], theta_i: &[f64], sample: &SamplePoint) -> Vec<f64> {
    let r = predict(w, theta_i, &sample.x) - sample.y;
    sample.x.iter().map(|xk| r * xk).collect()
}

/// Gradient of the squared loss with respect to `(w, theta_i)`. For this
/// additive model the two blocks are identical vectors.
pub fn squared_loss_grads(
    w: &[f64],
    theta_i: &[f64],
    sample: &SamplePoint,
) -> (Vec<f64>, Vec<f64>) {
    let g = sample_grad(w, theta_i, sample);
    (g.clone(), g)
}

// ===========================================================================
// Clipping
// ===========================================================================

/// Projects `g` onto the Euclidean ball of radius `c`, in place.
///
/// Vectors already inside the ball are returned bit-identical. The rescale
/// can round one ulp past the surface, so it repeats until the norm test
/// passes; that makes the operation exactly idempotent.
pub fn clip_to_ball(g: &mut [f64], c: f64) {
    assert!(c > 0.0, "clip radius must be positive");
    for _ in 0..4 {
        let n = linalg::norm(g);
        if n <= c {
            return;
        }
        linalg::scale(g, c / n);
    }
}

// ===========================================================================
// Joint iterate
// ===========================================================================

/// The joint iterate `(w, theta_1..theta_N)` plus the running uniform
/// average of all iterates seen so far.
///
/// The average is over iterates 0..round-1 (the state *before* each round's
/// update, starting from the initial point), kept as a chronological sum so
/// `averaged_*` is the exact arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub w: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    /// Completed rounds, which is also the number of iterates in the average.
    pub round: usize,
    sum_w: Vec<f64>,
    sum_thetas: Vec<Vec<f64>>,
}

impl ModelState {
    /// All-zero initial point for `users` users in dimension `dim`.
    pub fn zeros(dim: usize, users: usize) -> Self {
        ModelState {
            w: vec![0.0; dim],
            thetas: vec![vec![0.0; dim]; users],
            round: 0,
            sum_w: vec![0.0; dim],
            sum_thetas: vec![vec![0.0; dim]; users],
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn users(&self) -> usize {
        self.thetas.len()
    }

    /// Folds the current iterate into the running average. The optimizer
    /// calls this once at the top of every round, so the average covers
    /// iterates 0..round-1 after `round` completed rounds.
    pub(crate) fn absorb_current_into_average(&mut self) {
        linalg::axpy(&mut self.sum_w, 1.0, &self.w);
        for (sum, theta) in self.sum_thetas.iter_mut().zip(&self.thetas) {
            linalg::axpy(sum, 1.0, theta);
        }
        self.round += 1;
    }

    /// Averaged shared block; the initial point itself before any round.
    pub fn averaged_w(&self) -> Vec<f64> {
        if self.round == 0 {
            return self.w.clone();
        }
        let scale = self.round as f64;
        self.sum_w.iter().map(|s| s / scale).collect()
    }

    /// Averaged personal blocks; the initial point itself before any round.
    pub fn averaged_thetas(&self) -> Vec<Vec<f64>> {
        if self.round == 0 {
            return self.thetas.clone();
        }
        let scale = self.round as f64;
        self.sum_thetas
            .iter()
            .map(|sum| sum.iter().map(|s| s / scale).collect())
            .collect()
    }

    /// True when every coordinate of every block is finite.
    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.w) && self.thetas.iter().all(|t| linalg::all_finite(t))
    }
}

// ===========================================================================
// Population risk
// ===========================================================================

/// Closed-form excess risk `(1/N) sum_i |w + theta_i - theta_i*|^2_Sigma`
/// for the Gaussian-feature linear model (label-noise floor excluded).
///
/// Pass the current or the averaged iterate, whichever the caller wants to
/// score.
pub fn population_risk_closed_form(
    w: &[f64],
    thetas: &[Vec<f64>],
    truth: &GroundTruth,
) -> Result<f64> {
    let (n, d) = (truth.users(), truth.dim());
    if thetas.len() != n || w.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "state is {} users x {} dims, truth is {} x {}",
            thetas.len(),
            w.len(),
            n,
            d
        )));
    }
    let mut total = 0.0;
    for (theta, theta_star) in thetas.iter().zip(&truth.theta_stars) {
        let mut user = 0.0;
        for k in 0..d {
            let e = w[k] + theta[k] - theta_star[k];
            user += truth.sigma_diag[k] * e * e;
        }
        total += user;
    }
    Ok(total / n as f64)
}

// ===========================================================================
// Tests
// ===========================================================================
