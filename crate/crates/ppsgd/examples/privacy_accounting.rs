//! Renyi-DP accounting for repeated noisy aggregation.
//!
//! Shows the three ways into the accountant: the one-shot helper for a
//! homogeneous schedule, the incremental ledger for mixed schedules, and
//! the calibration helpers that pick a noise scale for a target budget.
//!
//! Run with `cargo run --example privacy_accounting`.

use ppsgd::privacy::{
    calibrate_sigma_full_participation, calibrate_sigma_sampled, epsilon_for_repeated,
    MechanismSpec, RdpAccountant,
};

fn main() -> ppsgd::Result<()> {
    let delta = 1e-5;

    // Privacy cost of 1000 rounds as the noise multiplier grows, at full
    // participation and under client subsampling. Subsampling amplifies:
    // the same noise buys a much smaller epsilon.
    println!("epsilon after 1000 rounds, delta = {delta:.0e}");
    println!("{:>12} {:>12} {:>12}", "multiplier", "q = 1", "q = 0.05");
    for multiplier in [50.0, 100.0, 200.0, 400.0, 800.0] {
        let full = epsilon_for_repeated(&MechanismSpec::new(multiplier, 1.0)?, 1000, delta)?;
        let sampled = epsilon_for_repeated(&MechanismSpec::new(multiplier, 0.05)?, 1000, delta)?;
        println!("{multiplier:>12} {full:>12.5} {sampled:>12.5}");
    }

    // The incremental ledger composes heterogeneous rounds: a noisy
    // warm-up phase followed by a quieter main phase.
    let mut ledger = RdpAccountant::with_default_orders();
    let warmup = MechanismSpec::new(80.0, 1.0)?;
    let main_phase = MechanismSpec::new(300.0, 1.0)?;
    for _ in 0..100 {
        ledger.step(&warmup)?;
    }
    for _ in 0..900 {
        ledger.step(&main_phase)?;
    }
    println!();
    println!(
        "mixed schedule ({} steps): epsilon = {:.5}",
        ledger.steps(),
        ledger.epsilon(delta)?
    );

    // Calibration: pick the noise std for a target budget, then confirm
    // the accountant agrees. The full-participation form scales the clip
    // by sqrt(rounds * ln(1/delta)) over (users * epsilon).
    let (clip, rounds, users, epsilon) = (10.0, 500usize, 1000usize, 2.0);
    let sigma_zeta = calibrate_sigma_full_participation(2.0, clip, rounds, delta, users, epsilon)?;
    let mech = MechanismSpec::new(sigma_zeta * users as f64 / clip, 1.0)?;
    let spent = epsilon_for_repeated(&mech, rounds, delta)?;
    println!();
    println!("full participation, target epsilon = {epsilon}:");
    println!("  calibrated noise std {sigma_zeta:.6} spends {spent:.6}");

    // The sampled form also reports whether the requested budget sits in
    // the regime its closed form was derived for.
    let q = 0.02;
    let total_weight = 1000.0;
    let cal = calibrate_sigma_sampled(2.0, clip, 2000, delta, total_weight, 0.5, 1.0, q)?;
    let mech = MechanismSpec::new(cal.sigma_zeta * total_weight / clip, q)?;
    let spent = epsilon_for_repeated(&mech, 2000, delta)?;
    println!("sampled at q = {q}, target epsilon = 0.5:");
    println!(
        "  calibrated noise std {:.6} spends {spent:.6} (regime ok: {})",
        cal.sigma_zeta, cal.precondition_met
    );
    Ok(())
}
