//! Noise calibration and Renyi-DP accounting for the released global
//! updates.
//!
//! The accountant tracks the composition of one mechanism per round: a sum
//! of per-client vectors, each clipped to norm `C`, plus Gaussian noise
//! whose std is `noise_multiplier * C` relative to that sum. Callers that
//! add noise to a *normalized* average must therefore hand the accountant
//! `normalizer * sigma_zeta / C` as the multiplier.
//!
//! Sampled rounds (each client present independently with probability `q`)
//! use the binomial expansion of the subsampled-Gaussian Renyi divergence
//! at integer orders. Fixed-size selection without replacement is accounted
//! with the same formula at `q = Q/N` and flagged upstream as an
//! approximation.

use crate::error::{Error, Result};

// ===========================================================================
// Closed-form calibrations
// ===========================================================================

/// Noise scale for full participation: `const * C * sqrt(n ln(1/delta)) /
/// (N * eps)` per round, for `n` rounds among `N` users.
pub fn calibrate_sigma_full_participation(
    constant: f64,
    clip: f64,
    rounds: usize,
    delta: f64,
    users: usize,
    epsilon: f64,
) -> Result<f64> {
    check_positive("constant", constant)?;
    check_positive("clip", clip)?;
    check_delta(delta)?;
    check_positive("epsilon", epsilon)?;
    if rounds == 0 || users == 0 {
        return Err(Error::invalid("rounds and users must be positive"));
    }
    let n = rounds as f64;
    Ok(constant * clip * (n * (1.0 / delta).ln()).sqrt() / (users as f64 * epsilon))
}

/// Result of the sampled-participation calibration. The closed form is only
/// a valid calibration in the regime `eps < regime_constant * q^2 * T`;
/// outside it the value is still returned but flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    pub sigma_zeta: f64,
    pub precondition_met: bool,
}

/// Noise scale for sampled participation: `const * C * sqrt(T ln(1/delta))
/// / (total_weight * eps)`. Pass the round-wise weighted sample total
/// (sum of minibatch sizes) as `total_weight` for the weighted objective,
/// or the user count for the uniform-average variant.
pub fn calibrate_sigma_sampled(
    constant: f64,
    clip: f64,
    rounds: usize,
    delta: f64,
    total_weight: f64,
    epsilon: f64,
    regime_constant: f64,
    sampling_rate: f64,
) -> Result<NoiseCalibration> {
    check_positive("constant", constant)?;
    check_positive("clip", clip)?;
    check_delta(delta)?;
    check_positive("epsilon", epsilon)?;
    check_positive("total_weight", total_weight)?;
    check_positive("regime_constant", regime_constant)?;
    check_sampling_rate(sampling_rate)?;
    if rounds == 0 {
        return Err(Error::invalid("rounds must be positive"));
    }
    let t = rounds as f64;
    let sigma_zeta = constant * clip * (t * (1.0 / delta).ln()).sqrt() / (total_weight * epsilon);
    let precondition_met = epsilon < regime_constant * sampling_rate * sampling_rate * t;
    Ok(NoiseCalibration {
        sigma_zeta,
        precondition_met,
    })
}

// ===========================================================================
// Per-step Renyi divergence
// ===========================================================================

/// Renyi divergence of order `order` between two unit-shifted Gaussians of
/// std `noise_multiplier`: `order / (2 sigma^2)`. Valid at every order > 1.
pub fn rdp_gaussian(noise_multiplier: f64, order: f64) -> Result<f64> {
    check_positive("noise_multiplier", noise_multiplier)?;
    if !(order > 1.0) || !order.is_finite() {
        return Err(Error::invalid(format!("order must be finite and > 1, got {order}")));
    }
    Ok(order / (2.0 * noise_multiplier * noise_multiplier))
}

/// Renyi divergence bound for the Poisson-subsampled Gaussian at an integer
/// order, via the exact binomial expansion
///
/// ```text
/// (1 / (order-1)) * ln sum_{j=0}^{order} C(order, j) (1-q)^(order-j) q^j
///                          * exp(j (j-1) / (2 sigma^2))
/// ```
///
/// evaluated in log space. Fractional orders have no closed form here and
/// are rejected by the signature; the accountant simply skips them for
/// sampled mechanisms.
pub fn rdp_subsampled_gaussian(
    sampling_rate: f64,
    noise_multiplier: f64,
    order: u32,
) -> Result<f64> {
    check_sampling_rate_inclusive(sampling_rate)?;
    check_positive("noise_multiplier", noise_multiplier)?;
    if order < 2 {
        return Err(Error::invalid(format!("integer order must be >= 2, got {order}")));
    }
    let q = sampling_rate;
    let sigma_sq = noise_multiplier * noise_multiplier;
    let lam = f64::from(order);

    // ln C(order, j), ln q^j and ln (1-q)^(order-j) accumulated per term;
    // q = 0 or 1 makes some weights exactly -inf, which log-sum-exp treats
    // as absent terms. A zero exponent contributes ln(p^0) = 0 even when
    // ln p is -inf, so the power is guarded rather than multiplied out.
    let ln_pow = |ln_p: f64, k: f64| if k == 0.0 { 0.0 } else { k * ln_p };
    let (ln_q, ln_1mq) = (q.ln(), (1.0 - q).ln());
    let mut terms = Vec::with_capacity(order as usize + 1);
    let mut ln_binom = 0.0;
    for j in 0..=order {
        let jf = f64::from(j);
        let weight = ln_binom + ln_pow(ln_q, jf) + ln_pow(ln_1mq, lam - jf);
        let term = if weight == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            weight + jf * (jf - 1.0) / (2.0 * sigma_sq)
        };
        terms.push(term);
        if j < order {
            ln_binom += (lam - jf).ln() - (jf + 1.0).ln();
        }
    }

    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0); // unreachable for valid q, kept for safety
    }
    let sum: f64 = terms
        .iter()
        .filter(|t| t.is_finite())
        .map(|t| (t - max).exp())
        .sum();
    Ok((max + sum.ln()) / (lam - 1.0))
}

// ===========================================================================
// Accountant
// ===========================================================================

/// One round's released mechanism, as seen by the accountant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSpec {
    /// Noise std over the mechanism's sensitivity (`normalizer * sigma_zeta
    /// / C` for the normalized averages this crate releases).
    pub noise_multiplier: f64,
    /// Per-client participation probability; 1 means full participation.
    pub sampling_rate: f64,
}

impl MechanismSpec {
    pub fn new(noise_multiplier: f64, sampling_rate: f64) -> Result<Self> {
        check_positive("noise_multiplier", noise_multiplier)?;
        check_sampling_rate(sampling_rate)?;
        Ok(MechanismSpec {
            noise_multiplier,
            sampling_rate,
        })
    }
}

/// Additive Renyi-DP ledger over a fixed grid of orders.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpAccountant {
    orders: Vec<f64>,
    rdp: Vec<f64>,
    steps: usize,
}

impl RdpAccountant {
    /// Ledger over a custom order grid (all orders must exceed 1).
    pub fn new(orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::invalid("order grid must be nonempty"));
        }
        for &o in &orders {
            if !(o > 1.0) || !o.is_finite() {
                return Err(Error::invalid(format!("orders must be finite and > 1, got {o}")));
            }
        }
        let rdp = vec![0.0; orders.len()];
        Ok(RdpAccountant {
            orders,
            rdp,
            steps: 0,
        })
    }

    /// Ledger over the grid from `default_orders`.
    pub fn with_default_orders() -> Self {
        RdpAccountant::new(default_orders()).expect("default grid is valid")
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Composes one more round of `mech` onto the ledger.
    ///
    /// Sampled mechanisms use the binomial bound at integer orders and
    /// fall back to the unsampled Gaussian curve elsewhere (see
    /// `per_order_rdp`), so every grid entry stays usable.
    pub fn step(&mut self, mech: &MechanismSpec) -> Result<()> {
        for (slot, &order) in self.rdp.iter_mut().zip(&self.orders) {
            *slot += per_order_rdp(mech, order)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Converts the ledger to an (eps, delta) guarantee:
    /// `min_order rdp(order) + ln(1/delta) / (order - 1)`.
    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let log_inv_delta = (1.0 / delta).ln();
        let eps = self
            .orders
            .iter()
            .zip(&self.rdp)
            .map(|(&order, &rdp)| rdp + log_inv_delta / (order - 1.0))
            .fold(f64::INFINITY, f64::min);
        Ok(eps)
    }
}

/// Per-round divergence bound for `mech` at one order.
///
/// The unsampled Gaussian curve is a valid bound at any sampling rate
/// (the subsampled mechanism is a mixture whose second component is
/// identical on adjacent datasets, and the divergence is jointly
/// quasi-convex), so sampled mechanisms take the smaller of the binomial
/// bound (integer orders only) and that curve. The minimum keeps the
/// reported budget monotone in the rate: without it, fractional orders
/// would be usable only at the full rate, and the budget there could dip
/// below a nearby sampled rate's integer-only minimum.
fn per_order_rdp(mech: &MechanismSpec, order: f64) -> Result<f64> {
    let plain = rdp_gaussian(mech.noise_multiplier, order)?;
    if mech.sampling_rate == 1.0 {
        return Ok(plain);
    }
    if order.fract() == 0.0 && order >= 2.0 && order <= f64::from(u32::MAX) {
        let sampled =
            rdp_subsampled_gaussian(mech.sampling_rate, mech.noise_multiplier, order as u32)?;
        return Ok(sampled.min(plain));
    }
    Ok(plain)
}

/// Privacy spent by `steps` identical rounds of `mech` on the default
/// grid. Matches stepping an accountant `steps` times to well below 1e-9
/// relative (the ledger sums what this multiplies).
pub fn epsilon_for_repeated(mech: &MechanismSpec, steps: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let log_inv_delta = (1.0 / delta).ln();
    let mut eps = f64::INFINITY;
    for order in default_orders() {
        let per_step = per_order_rdp(mech, order)?;
        eps = eps.min(steps as f64 * per_step + log_inv_delta / (order - 1.0));
    }
    Ok(eps)
}

/// The default order grid: fractional orders `1 + u` with `u` log-spaced
/// from 0.01 to 1 (plus a few between 2 and 5), all integers 2..=64, then
/// integers spaced by a factor of about 1.07 up to 2048.
///
/// Writing the composed budget as `A (1 + u) + B / u` in `u = order - 1`,
/// evaluating at `c u*` instead of the optimum `u*` inflates it by at most
/// a factor `(c + 1/c) / 2`, so keeping adjacent grid gaps below a ratio
/// of 1.32 bounds the loss against a dense scan by one percent. The small
/// fractional head matters for large compositions at full rate (optimal
/// `u*` scales like `sigma sqrt(ln(1/delta) / steps)`); the integer tail
/// matters for small sampling rates, where the optimal order scales like
/// `sigma / q` and can sit in the hundreds.
pub fn default_orders() -> Vec<f64> {
    let mut orders = Vec::new();
    let mut u = 0.01f64;
    while u < 1.0 {
        orders.push(1.0 + u);
        u *= 1.25;
    }
    orders.extend([2.25, 2.5, 2.75, 3.5, 4.5]);
    orders.extend((2..=64).map(f64::from));
    let mut order = 64.0f64;
    while order < 2048.0 {
        order = (order * 1.07).ceil();
        orders.push(order);
    }
    orders.sort_by(f64::total_cmp);
    orders
}

// ===========================================================================
// Shared parameter checks
// ===========================================================================

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_sampling_rate(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling rate must be in (0, 1], got {q}")));
    }
    Ok(())
}

fn check_sampling_rate_inclusive(q: f64) -> Result<()> {
    if !(q >= 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling rate must be in [0, 1], got {q}")));
    }
    Ok(())
}

// ===========================================================================
// Tests
// ===========================================================================
