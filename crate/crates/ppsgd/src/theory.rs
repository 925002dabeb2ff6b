//! Closed-form convergence and privacy-utility bounds for the averaged SGD
//! iterate, plus the geometry helpers they rest on.
//!
//! All bounds cost O(1) to evaluate and treat `alpha = 0` and
//! `alpha = inf` as exact algebraic limits of the finite-`alpha` expression
//! (the products `L_alpha R^2` and `sigma_tot R` stay finite even where the
//! factors alone do not). The radius `R` handed to a bound must match the
//! mode:
//!
//! * finite `alpha` takes the joint norm `sqrt(alpha_norm_sq)` of a minimizer,
//! * `alpha = 0` takes the minimizer's personal-block norm (its `w` is 0),
//! * `alpha = inf` takes the minimizer's shared-block norm (its thetas are 0).
//!
//! `bound_radius` computes the right one.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{alpha_norm_sq, Alpha};

// ===========================================================================
// Problem constants and bound inputs
// ===========================================================================

/// Problem-level constants entering the bounds. The two gradient variances
/// are evaluated at the minimizer; pass the plain per-user averages for the
/// full-participation bound and the minibatch-weighted flavors for the
/// sampled bounds (see `weighted_grad_variance`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Joint smoothness constant of each per-sample loss.
    pub smoothness: f64,
    /// Almost-sure bound on per-sample gradient norms (clipping threshold).
    pub grad_bound: f64,
    /// Averaged shared-block gradient variance at the minimizer.
    pub sigma_w_sq: f64,
    /// Averaged personal-block gradient variance at the minimizer.
    pub sigma_theta_sq: f64,
    /// Client-selection fluctuation term (zero at interpolation, where all
    /// per-user shared gradients vanish at the minimizer).
    pub sigma_fluct_sq: f64,
    /// Dimension of the shared block.
    pub d_w: usize,
    /// Number of users.
    pub users: usize,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(Error::invalid("smoothness must be finite and positive"));
        }
        if !(self.grad_bound > 0.0) {
            return Err(Error::invalid("grad_bound must be positive"));
        }
        for (name, v) in [
            ("sigma_w_sq", self.sigma_w_sq),
            ("sigma_theta_sq", self.sigma_theta_sq),
            ("sigma_fluct_sq", self.sigma_fluct_sq),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if self.d_w == 0 || self.users == 0 {
            return Err(Error::invalid("d_w and users must be positive"));
        }
        Ok(())
    }
}

/// Everything a convergence bound needs besides the noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub constants: ProblemConstants,
    pub alpha: Alpha,
    /// Mode-matched reference radius `R`; see the module docs.
    pub radius: f64,
    /// Number of SGD rounds the average runs over.
    pub rounds: usize,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be positive"));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::invalid("radius must be >= 0"));
        }
        Ok(())
    }
}

// ===========================================================================
// Geometry pieces
// ===========================================================================

/// Effective smoothness `L_alpha = L * max(alpha, 1/N)` of the
/// preconditioned problem. Infinite in the fully-global mode; the bounds
/// use the finite limit products instead.
pub fn l_alpha(smoothness: f64, alpha: Alpha, users: usize) -> f64 {
    match alpha {
        Alpha::Zero => smoothness / users as f64,
        Alpha::Finite(a) => smoothness * a.max(1.0 / users as f64),
        Alpha::Infinite => f64::INFINITY,
    }
}

/// Effective noise scale
/// `sigma_tot = sqrt((alpha sigma_w^2 + sigma_theta^2)/N + alpha d_w
/// sigma_zeta^2)` combining sampling noise and privacy noise.
pub fn sigma_tot_alpha(c: &ProblemConstants, alpha: Alpha, sigma_zeta: f64) -> f64 {
    let n = c.users as f64;
    match alpha {
        Alpha::Zero => (c.sigma_theta_sq / n).sqrt(),
        Alpha::Finite(a) => {
            ((a * c.sigma_w_sq + c.sigma_theta_sq) / n
                + a * c.d_w as f64 * sigma_zeta * sigma_zeta)
                .sqrt()
        }
        Alpha::Infinite => f64::INFINITY,
    }
}

/// The mode-matched radius for a feasible point `(w, thetas)`; infinite
/// when the point is incompatible with the degenerate mode (nonzero `w` at
/// `alpha = 0`, nonzero personal blocks at `alpha = inf`).
pub fn bound_radius(w: &[f64], thetas: &[Vec<f64>], alpha: Alpha) -> f64 {
    match alpha {
        Alpha::Zero | Alpha::Finite(_) => alpha_norm_sq(w, thetas, alpha).sqrt(),
        Alpha::Infinite => {
            let personal: f64 = thetas.iter().map(|t| linalg::norm_sq(t)).sum();
            if personal > 0.0 {
                f64::INFINITY
            } else {
                linalg::norm(w)
            }
        }
    }
}

/// Limit-stable pair `(l_eff, sigma_eff)` such that every bound below is
/// `4 l_eff R^2 / n + 3 sigma_eff R / sqrt(n)` with the mode's radius.
fn effective_terms(c: &ProblemConstants, alpha: Alpha, sigma_zeta: f64) -> (f64, f64) {
    let n = c.users as f64;
    let d_w = c.d_w as f64;
    match alpha {
        Alpha::Zero | Alpha::Finite(_) => (
            l_alpha(c.smoothness, alpha, c.users),
            sigma_tot_alpha(c, alpha, sigma_zeta),
        ),
        Alpha::Infinite => (
            c.smoothness,
            (c.sigma_w_sq / n + d_w * sigma_zeta * sigma_zeta).sqrt(),
        ),
    }
}

// ===========================================================================
// Convergence bounds
// ===========================================================================

/// Full-participation expected excess risk bound at the averaged iterate:
/// `4 L_alpha R^2 / n + 3 sigma_tot R / sqrt(n)`.
pub fn excess_risk_bound(b: &BoundInputs, sigma_zeta: f64) -> Result<f64> {
    b.validate()?;
    check_noise(sigma_zeta)?;
    let (l_eff, sigma_eff) = effective_terms(&b.constants, b.alpha, sigma_zeta);
    Ok(two_term(l_eff, sigma_eff, b.radius, b.rounds))
}

/// The step size the full-participation bound is stated for:
/// `min(1 / (4 L_alpha), R / (sqrt(n) sigma_tot))`. Falls back to the
/// curvature branch when the noise scale is zero.
pub fn theory_step_size(b: &BoundInputs, sigma_zeta: f64) -> Result<f64> {
    b.validate()?;
    check_noise(sigma_zeta)?;
    let (l_eff, sigma_eff) = effective_terms(&b.constants, b.alpha, sigma_zeta);
    let curvature = 1.0 / (4.0 * l_eff);
    if sigma_eff == 0.0 {
        return Ok(curvature);
    }
    Ok(curvature.min(b.radius / ((b.rounds as f64).sqrt() * sigma_eff)))
}

/// Multipliers for the three-term generalization form; all 1 by default to
/// expose the raw scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeTermConstants {
    pub bias: f64,
    pub statistical: f64,
    pub privacy: f64,
}

impl Default for ThreeTermConstants {
    fn default() -> Self {
        ThreeTermConstants {
            bias: 1.0,
            statistical: 1.0,
            privacy: 1.0,
        }
    }
}

/// The three-term form of the full-participation bound after substituting
/// the calibrated noise: bias `L_alpha R^2 / n`, statistical
/// `R sqrt((alpha sigma_w^2 + sigma_theta^2) / (N n))`, and privacy
/// `R G sqrt(alpha d_w ln(1/delta)) / (N eps)` (the round count cancels in
/// the privacy term).
pub fn excess_risk_three_term(
    b: &BoundInputs,
    epsilon: f64,
    delta: f64,
    k: &ThreeTermConstants,
) -> Result<f64> {
    b.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must be in (0, 1)"));
    }
    let c = &b.constants;
    let (n_users, rounds) = (c.users as f64, b.rounds as f64);
    let r = b.radius;
    let log_inv_delta = (1.0 / delta).ln();
    let privacy_scale = c.grad_bound * (c.d_w as f64 * log_inv_delta).sqrt() / (n_users * epsilon);

    let (bias, statistical, privacy) = match b.alpha {
        Alpha::Zero => (
            c.smoothness / n_users * r * r / rounds,
            r * (c.sigma_theta_sq / (n_users * rounds)).sqrt(),
            0.0,
        ),
        Alpha::Finite(a) => (
            l_alpha(c.smoothness, b.alpha, c.users) * r * r / rounds,
            r * ((a * c.sigma_w_sq + c.sigma_theta_sq) / (n_users * rounds)).sqrt(),
            r * a.sqrt() * privacy_scale,
        ),
        Alpha::Infinite => (
            c.smoothness * r * r / rounds,
            r * (c.sigma_w_sq / (n_users * rounds)).sqrt(),
            r * privacy_scale,
        ),
    };
    Ok(k.bias * bias + k.statistical * statistical + k.privacy * privacy)
}

/// Sampled-participation, weighted-objective bound. `total_weight` is the
/// per-round weighted sample total `M = sum_i m_i` and `m_max` the largest
/// minibatch; the constants' variances must be the minibatch-weighted
/// flavors.
pub fn excess_risk_bound_sampled(
    b: &BoundInputs,
    sigma_zeta: f64,
    sampling_rate: f64,
    total_weight: f64,
    m_max: usize,
) -> Result<f64> {
    b.validate()?;
    check_noise(sigma_zeta)?;
    check_rate(sampling_rate)?;
    if !(total_weight > 0.0) || m_max == 0 {
        return Err(Error::invalid("total_weight and m_max must be positive"));
    }
    let c = &b.constants;
    let ratio = m_max as f64 / total_weight;
    let d_w = c.d_w as f64;
    let qm = sampling_rate * total_weight;
    let (l_eff, sigma_eff) = match b.alpha {
        Alpha::Zero => (
            c.smoothness * ratio,
            (c.sigma_theta_sq / qm).sqrt(),
        ),
        Alpha::Finite(a) => (
            c.smoothness * (a + a * ratio).max(ratio),
            ((a * (c.sigma_w_sq + c.sigma_fluct_sq) + c.sigma_theta_sq) / qm
                + a * d_w * sigma_zeta * sigma_zeta)
                .sqrt(),
        ),
        Alpha::Infinite => (
            c.smoothness * (1.0 + ratio),
            ((c.sigma_w_sq + c.sigma_fluct_sq) / qm + d_w * sigma_zeta * sigma_zeta).sqrt(),
        ),
    };
    Ok(two_term(l_eff, sigma_eff, b.radius, b.rounds))
}

/// Sampled-participation, uniform-average bound in its `m_min` upper-bound
/// form. The constants' variances are plain per-sample averages; minibatch
/// averaging is credited through the smallest minibatch.
pub fn excess_risk_bound_avg_user(
    b: &BoundInputs,
    sigma_zeta: f64,
    sampling_rate: f64,
    m_min: usize,
) -> Result<f64> {
    b.validate()?;
    check_noise(sigma_zeta)?;
    check_rate(sampling_rate)?;
    if m_min == 0 {
        return Err(Error::invalid("m_min must be positive"));
    }
    let c = &b.constants;
    let n = c.users as f64;
    let d_w = c.d_w as f64;
    let qn = sampling_rate * n;
    let m_min = m_min as f64;
    let (l_eff, sigma_eff) = match b.alpha {
        Alpha::Zero => (
            c.smoothness / n,
            (c.sigma_theta_sq / (qn * m_min)).sqrt(),
        ),
        Alpha::Finite(a) => (
            c.smoothness * (a + a / n).max(1.0 / n),
            ((a * c.sigma_w_sq + c.sigma_theta_sq) / (qn * m_min)
                + a * c.sigma_fluct_sq / qn
                + a * d_w * sigma_zeta * sigma_zeta)
                .sqrt(),
        ),
        Alpha::Infinite => (
            c.smoothness * (1.0 + 1.0 / n),
            (c.sigma_w_sq / (qn * m_min) + c.sigma_fluct_sq / qn + d_w * sigma_zeta * sigma_zeta)
                .sqrt(),
        ),
    };
    Ok(two_term(l_eff, sigma_eff, b.radius, b.rounds))
}

fn two_term(l_eff: f64, sigma_eff: f64, radius: f64, rounds: usize) -> f64 {
    let n = rounds as f64;
    4.0 * l_eff * radius * radius / n + 3.0 * sigma_eff * radius / n.sqrt()
}

/// Minibatch-weighted gradient variance `(1/M) sum_i m_i var_i` for the
/// weighted-objective bound.
pub fn weighted_grad_variance(minibatch_sizes: &[usize], per_user_var: &[f64]) -> Result<f64> {
    if minibatch_sizes.len() != per_user_var.len() || minibatch_sizes.is_empty() {
        return Err(Error::DimensionMismatch(
            "minibatch sizes and variances must pair up".into(),
        ));
    }
    let total: usize = minibatch_sizes.iter().sum();
    if total == 0 {
        return Err(Error::invalid("minibatch sizes must not all be zero"));
    }
    let weighted: f64 = minibatch_sizes
        .iter()
        .zip(per_user_var)
        .map(|(&m, &v)| m as f64 * v)
        .sum();
    Ok(weighted / total as f64)
}

/// Client-selection fluctuation `(1/M) sum_i q (1-q) m_i^2 |g_i|^2` from
/// the per-user shared-block gradient norms at the minimizer (all zero at
/// interpolation).
pub fn selection_fluctuation(
    minibatch_sizes: &[usize],
    sampling_rate: f64,
    grad_norms_at_opt: &[f64],
) -> Result<f64> {
    check_rate(sampling_rate)?;
    if minibatch_sizes.len() != grad_norms_at_opt.len() || minibatch_sizes.is_empty() {
        return Err(Error::DimensionMismatch(
            "minibatch sizes and gradient norms must pair up".into(),
        ));
    }
    let total: usize = minibatch_sizes.iter().sum();
    let q = sampling_rate;
    let sum: f64 = minibatch_sizes
        .iter()
        .zip(grad_norms_at_opt)
        .map(|(&m, &g)| q * (1.0 - q) * (m as f64) * (m as f64) * g * g)
        .sum();
    Ok(sum / total as f64)
}

// ===========================================================================
// Minimal-norm minimizer
// ===========================================================================

/// The minimal-joint-norm minimizer of a problem where every user shares
/// the same optimum. All personal blocks coincide, so one vector represents
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormMinimizer {
    pub w: Vec<f64>,
    /// Every user's personal block (they are identical).
    pub theta_each: Vec<f64>,
    /// Joint norm of the minimizer (the finite-alpha `R`).
    pub alpha_norm: f64,
}

/// Splits a shared optimum `v` between the blocks:
/// `w = alpha N / (alpha N + 1) v`, `theta_i = v / (alpha N + 1)`, with
/// joint norm `sqrt(N / (alpha N + 1)) |v|`. The degenerate modes put all
/// of `v` in one block.
pub fn min_norm_minimizer(v: &[f64], users: usize, alpha: Alpha) -> Result<MinNormMinimizer> {
    if users == 0 {
        return Err(Error::invalid("users must be positive"));
    }
    let n = users as f64;
    let v_norm = linalg::norm(v);
    Ok(match alpha {
        Alpha::Zero => MinNormMinimizer {
            w: vec![0.0; v.len()],
            theta_each: v.to_vec(),
            alpha_norm: n.sqrt() * v_norm,
        },
        Alpha::Finite(a) => {
            let denom = a * n + 1.0;
            MinNormMinimizer {
                w: v.iter().map(|x| a * n / denom * x).collect(),
                theta_each: v.iter().map(|x| x / denom).collect(),
                alpha_norm: (n / denom).sqrt() * v_norm,
            }
        }
        Alpha::Infinite => MinNormMinimizer {
            w: v.to_vec(),
            theta_each: vec![0.0; v.len()],
            alpha_norm: 0.0,
        },
    })
}

/// Heterogeneous generalization. For finite weights this is the
/// minimal-joint-norm interpolating point, `w = alpha N / (alpha N + 1) *
/// mean(theta*)` and `theta_i = theta_i* - w`. Infinite weight pins the
/// personal blocks at zero, so the returned point is instead the best
/// purely global model `w = mean(theta*)`; its risk is the heterogeneity
/// floor rather than zero, and the third value is the comparator radius
/// the infinite-weight analysis uses. Returns `(w, thetas, radius)`.
pub fn min_norm_minimizer_general(
    theta_stars: &[Vec<f64>],
    alpha: Alpha,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    if theta_stars.is_empty() {
        return Err(Error::invalid("need at least one user"));
    }
    let n = theta_stars.len() as f64;
    let d = theta_stars[0].len();
    let mut mean = vec![0.0; d];
    for t in theta_stars {
        if t.len() != d {
            return Err(Error::DimensionMismatch("user optima differ in dimension".into()));
        }
        linalg::axpy(&mut mean, 1.0, t);
    }
    linalg::scale(&mut mean, 1.0 / n);

    let shared_fraction = match alpha {
        Alpha::Zero => 0.0,
        Alpha::Finite(a) => a * n / (a * n + 1.0),
        Alpha::Infinite => 1.0,
    };
    let w: Vec<f64> = mean.iter().map(|x| shared_fraction * x).collect();
    let thetas: Vec<Vec<f64>> = if alpha.is_infinite() {
        vec![vec![0.0; d]; theta_stars.len()]
    } else {
        theta_stars
            .iter()
            .map(|t| t.iter().zip(&w).map(|(a, b)| a - b).collect())
            .collect()
    };
    let norm = bound_radius(&w, &thetas, alpha);
    Ok((w, thetas, norm))
}

// ===========================================================================
// Variance profile in alpha and the personalization threshold
// ===========================================================================

/// Inputs to the scalar variance profile `psi` traded off over `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiInputs {
    /// Per-sample gradient variance (both blocks, homogeneous case).
    pub grad_var: f64,
    /// Samples per user the profile is evaluated at. Real-valued so the
    /// profile can be probed at multiples of the (fractional) threshold.
    pub rounds: f64,
    pub users: usize,
    pub d_w: usize,
    pub grad_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// The bracket `a (alpha + 1) / (alpha N + 1) + b alpha / (alpha N + 1)`
/// with `a = grad_var / n` and `b = d_w G^2 ln(1/delta) / (N eps^2)`; the
/// squared variance term per unit `|v|^2`.
pub fn psi_variance_profile(alpha: f64, p: &PsiInputs) -> f64 {
    let (a, b, n_users) = psi_coefficients(p);
    (a * (alpha + 1.0) + b * alpha) / (alpha * n_users + 1.0)
}

/// Closed-form derivative of `psi_variance_profile` in `alpha`:
/// `(a (1 - N) + b) / (alpha N + 1)^2`. Its sign is constant in `alpha`,
/// which is what makes the threshold below meaningful.
pub fn psi_variance_profile_derivative(alpha: f64, p: &PsiInputs) -> f64 {
    let (a, b, n_users) = psi_coefficients(p);
    let denom = alpha * n_users + 1.0;
    (a * (1.0 - n_users) + b) / (denom * denom)
}

fn psi_coefficients(p: &PsiInputs) -> (f64, f64, f64) {
    let n_users = p.users as f64;
    let a = p.grad_var / p.rounds;
    let b = p.d_w as f64 * p.grad_bound * p.grad_bound * (1.0 / p.delta).ln()
        / (n_users * p.epsilon * p.epsilon);
    (a, b, n_users)
}

/// Variance term of the bound at the split minimizer for a shared optimum
/// of norm `v_norm`: `v_norm * sqrt(psi_variance_profile)`. At `alpha = 0`
/// this is `v_norm * sigma / sqrt(n)`.
pub fn variance_term_psi(v_norm: f64, alpha: f64, p: &PsiInputs) -> f64 {
    v_norm * psi_variance_profile(alpha, p).sqrt()
}

/// Sample-count threshold above which more personalization (smaller
/// `alpha`) reduces the variance term:
/// `factor * N (N - 1) grad_var eps^2 / (d_w G^2 ln(1/delta))`.
/// A single user always prefers sharing, so the threshold is 0 there.
pub fn personalization_threshold(
    users: usize,
    grad_var: f64,
    d_w: usize,
    grad_bound: f64,
    epsilon: f64,
    delta: f64,
    factor: f64,
) -> Result<f64> {
    if users == 0 {
        return Err(Error::invalid("users must be positive"));
    }
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("need epsilon > 0 and delta in (0, 1)"));
    }
    if !(grad_bound > 0.0) || d_w == 0 || !(factor > 0.0) {
        return Err(Error::invalid("grad_bound, d_w and factor must be positive"));
    }
    let n = users as f64;
    Ok(factor * n * (n - 1.0) * grad_var * epsilon * epsilon
        / (d_w as f64 * grad_bound * grad_bound * (1.0 / delta).ln()))
}

fn check_noise(sigma_zeta: f64) -> Result<()> {
    if !(sigma_zeta >= 0.0) || !sigma_zeta.is_finite() {
        return Err(Error::invalid("sigma_zeta must be finite and >= 0"));
    }
    Ok(())
}

fn check_rate(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling rate must be in (0, 1], got {q}")));
    }
    Ok(())
}

// ===========================================================================
// Tests
// ===========================================================================
