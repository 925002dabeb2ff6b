//! Training from per-user CSV files instead of the synthetic source.
//!
//! Generates a small population, writes one CSV per user, loads them
//! back through the glob pattern, and trains with both epoch modes:
//! strict one-pass (fresh-sample semantics, refuses to wrap) and
//! reshuffled reuse.
//!
//! Run with `cargo run --example csv_datasets`.

use std::sync::Arc;

use ppsgd::data::{
    finite_streams, generate_ground_truth, load_user_csv, synthetic_streams, write_user_csv,
    EpochMode, SyntheticConfig,
};
use ppsgd::model::{population_risk_closed_form, Alpha, ModelState};
use ppsgd::optimizer::{ppsgd_run, HyperParams, TraceSpec};
use ppsgd::rng::RngPolicy;

fn main() -> ppsgd::Result<()> {
    let data_cfg = SyntheticConfig {
        users: 15,
        dim: 8,
        shared_coords: 7,
        theta0_std: 2.0,
        delta_std: 0.5,
        tau: 0.4,
        seed: 3,
    };
    let truth = Arc::new(generate_ground_truth(&data_cfg)?);

    // Materialize 120 samples per user on disk.
    let samples_per_user = 120usize;
    let policy = RngPolicy::new(88);
    let mut streams = synthetic_streams(&truth, &policy);
    let mut per_user = Vec::new();
    for stream in &mut streams {
        let mut rows = Vec::with_capacity(samples_per_user);
        for _ in 0..samples_per_user {
            rows.push(stream.draw()?);
        }
        per_user.push(rows);
    }
    let dir = std::env::temp_dir().join("ppsgd_csv_example");
    let paths = write_user_csv(&dir, &per_user)?;
    println!("wrote {} files under {}", paths.len(), dir.display());

    // Load them back; the pattern's single `*` ranges over user indices.
    let pattern = dir.join("user_*.csv");
    let loaded = load_user_csv(&pattern.to_string_lossy())?;
    assert_eq!(loaded.len(), 15);
    println!("loaded {} users, {} samples each", loaded.len(), loaded[0].len());

    let metric =
        |state: &ModelState| population_risk_closed_form(&state.w, &state.thetas, &truth).unwrap();
    let hp = HyperParams {
        eta: 0.2,
        alpha: Alpha::new(0.2)?,
        clip: 20.0,
        noise_std: 0.0,
        rounds: 60,
    };

    // One pass: minibatch 2 over 60 rounds consumes every sample exactly
    // once; a 61st round would error out rather than silently reuse data.
    let trace = TraceSpec::new(hp.rounds, &metric);
    let policy = RngPolicy::new(9);
    let mut one_pass = finite_streams(loaded.clone(), EpochMode::OnePass, &policy);
    let strict = ppsgd_run(&hp, &mut one_pass, 2, &policy, &trace, None)?;

    // Reshuffle: the same data supports three epochs of the same length.
    let hp_long = HyperParams { rounds: 180, ..hp };
    let trace = TraceSpec::new(hp_long.rounds, &metric);
    let policy = RngPolicy::new(9);
    let mut reshuffled = finite_streams(loaded, EpochMode::Reshuffle, &policy);
    let reused = ppsgd_run(&hp_long, &mut reshuffled, 2, &policy, &trace, None)?;

    println!(
        "risk after one pass: {:.5}; after three reshuffled epochs: {:.5}",
        strict.trace.last().map_or(f64::NAN, |r| r.metric),
        reused.trace.last().map_or(f64::NAN, |r| r.metric),
    );
    Ok(())
}
