//! Closed-form excess-risk bounds and the personalization threshold.
//!
//! Evaluates the full-participation convergence bound over sample counts
//! and personalization weights, with and without privacy noise, then
//! prints the per-user sample count at which the variance balance flips
//! from favoring the global end of the weight axis to the local end.
//!
//! Run with `cargo run --example theory_bounds`.

use ppsgd::model::Alpha;
use ppsgd::theory::{
    excess_risk_bound, min_norm_minimizer_general, personalization_threshold, theory_step_size,
    variance_term_psi, BoundInputs, ProblemConstants, PsiInputs,
};

fn main() -> ppsgd::Result<()> {
    // A homogeneous reference problem: identity covariance in dimension
    // 10, unit optima shared by 50 users.
    let users = 50;
    let d = 10;
    let theta_stars: Vec<Vec<f64>> = vec![vec![1.0 / (d as f64).sqrt(); d]; users];
    let constants = ProblemConstants {
        smoothness: 2.0,
        grad_bound: 1.0,
        sigma_w_sq: 1.0,
        sigma_theta_sq: 1.0,
        sigma_fluct_sq: 0.0,
        d_w: d,
        users,
    };

    for sigma_zeta in [0.0, 0.05] {
        println!("excess-risk bound, noise std {sigma_zeta}");
        println!("{:>8} {:>12} {:>12} {:>12}", "samples", "alpha=0", "alpha=1", "alpha=inf");
        for rounds in [100usize, 1000, 10000] {
            let mut row = format!("{rounds:>8}");
            for alpha in [Alpha::Zero, Alpha::new(1.0)?, Alpha::Infinite] {
                let (_, _, radius) = min_norm_minimizer_general(&theta_stars, alpha)?;
                let inputs = BoundInputs { constants, alpha, radius, rounds };
                let bound = excess_risk_bound(&inputs, sigma_zeta)?;
                row.push_str(&format!(" {bound:>12.6}"));
            }
            println!("{row}");
        }
        println!();
    }

    // The step size the analysis prescribes shrinks as noise grows.
    let alpha = Alpha::new(1.0)?;
    let (_, _, radius) = min_norm_minimizer_general(&theta_stars, alpha)?;
    let inputs = BoundInputs { constants, alpha, radius, rounds: 1000 };
    println!(
        "prescribed step size at alpha = 1, n = 1000: {:.6} noiseless, {:.6} noisy",
        theory_step_size(&inputs, 0.0)?,
        theory_step_size(&inputs, 0.05)?
    );

    // With fewer samples per user than this, pooling through the shared
    // block beats the privacy noise it costs and the global end of the
    // weight axis minimizes the variance profile; with more, each user's
    // own data suffices and the local end wins.
    let (epsilon, delta) = (1.0, 1e-5);
    let threshold =
        personalization_threshold(users, 1.0, d, 1.0, epsilon, delta, 1.0)?;
    println!();
    println!("variance-balance threshold at epsilon = {epsilon}: {threshold:.2} samples/user");

    // The variance profile confirms it: its slope in alpha keeps one sign
    // on each side of the threshold, and the signs differ.
    let psi = PsiInputs {
        grad_var: 1.0,
        rounds: threshold,
        users,
        d_w: d,
        grad_bound: 1.0,
        epsilon,
        delta,
    };
    let probe = |rounds: f64, alpha: f64| {
        let p = PsiInputs { rounds, ..psi };
        variance_term_psi(1.0, alpha, &p)
    };
    for (label, factor) in [("half", 0.5), ("double", 2.0)] {
        let n = factor * threshold;
        let (lo, mid, hi) = (probe(n, 0.05), probe(n, 1.0), probe(n, 20.0));
        println!(
            "  at {label} the threshold: psi(0.05) = {lo:.4}, psi(1) = {mid:.4}, psi(20) = {hi:.4}"
        );
    }
    Ok(())
}
