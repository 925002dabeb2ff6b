//! Command-line front end for the personalized private training library.
//!
//! Four subcommands cover the experiment workflow: `run` executes the
//! configured sweep and writes `trace.csv`, `curve` additionally distills
//! privacy-utility curves into `curve.csv`, `bounds` tabulates the
//! closed-form guarantees into `bounds.csv`, and `gen` materializes a
//! synthetic dataset as per-user CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ppsgd::data::{generate_ground_truth, synthetic_streams, write_user_csv};
use ppsgd::harness::records::fmt_f64;
use ppsgd::harness::{
    bounds_table, emit_csv, run_sweep, tradeoff_curve, ExperimentConfig, TradeoffPoint,
};
use ppsgd::rng::RngPolicy;
use ppsgd::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ppsgd",
    about = "Personalized private federated SGD experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sweep and write trace.csv.
    Run(CommonArgs),
    /// Run the sweep, then write trace.csv and curve.csv.
    Curve(CommonArgs),
    /// Tabulate the closed-form bounds over the grid into bounds.csv.
    Bounds(CommonArgs),
    /// Generate synthetic per-user CSV files into the output directory.
    Gen(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list; overrides the config's seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker thread count; defaults to every available core.
    #[arg(long)]
    threads: Option<usize>,
    /// Trace stride; overrides the config's stride.
    #[arg(long)]
    stride: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("bad seed {s:?} in --seeds")))
                })
                .collect::<Result<Vec<u64>>>()?;
        }
        if let Some(stride) = self.stride {
            cfg.stride = stride;
        }
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| Error::io(cfg.output_dir.display().to_string(), e))?;
        Ok(cfg)
    }

    fn in_pool<T: Send>(&self, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(job),
            None => job(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::Curve(args) => cmd_run(args, true),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: &CommonArgs, with_curve: bool) -> Result<()> {
    let cfg = args.load()?;
    let outcome = args.in_pool(|| run_sweep(&cfg))?;
    let trace_path = cfg.output_dir.join("trace.csv");
    emit_csv(&trace_path, &outcome.records, &outcome.metadata)?;
    println!("wrote {} rows to {}", outcome.records.len(), trace_path.display());

    if with_curve {
        let curve = tradeoff_curve(&outcome.records, cfg.rounds)?;
        let curve_path = cfg.output_dir.join("curve.csv");
        let mut named: Vec<(&str, &[TradeoffPoint])> = Vec::new();
        let local_points;
        if let Some(local) = &curve.local {
            local_points = vec![local.clone()];
            named.push(("local", &local_points));
        }
        named.push(("global", &curve.global));
        named.push(("personalized", &curve.personalized));
        named.push(("envelope", &curve.envelope));
        write_curve_csv(&curve_path, cfg.rounds, curve.personalized_alpha, &named)?;
        let total: usize = named.iter().map(|(_, pts)| pts.len()).sum();
        println!("wrote {} points to {}", total, curve_path.display());
    }
    Ok(())
}

fn write_curve_csv(
    path: &std::path::Path,
    round: usize,
    personalized_alpha: Option<f64>,
    named: &[(&str, &[TradeoffPoint])],
) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut buf = std::io::BufWriter::new(file);
    use std::io::Write as _;
    writeln!(buf, "# round: {round}").map_err(|e| Error::io(display.clone(), e))?;
    if let Some(a) = personalized_alpha {
        writeln!(buf, "# personalized_alpha: {}", fmt_f64(a))
            .map_err(|e| Error::io(display.clone(), e))?;
    }
    let mut writer = csv::Writer::from_writer(buf);
    writer
        .write_record(["curve", "alpha", "sigma", "epsilon", "metric", "eta"])
        .map_err(Error::from)?;
    for (name, points) in named {
        for p in *points {
            writer
                .write_record([
                    name.to_string(),
                    fmt_f64(p.alpha),
                    fmt_f64(p.sigma),
                    p.epsilon.to_field(),
                    fmt_f64(p.metric),
                    fmt_f64(p.eta),
                ])
                .map_err(Error::from)?;
        }
    }
    writer.flush().map_err(|e| Error::io(display, e))?;
    Ok(())
}

fn cmd_bounds(args: &CommonArgs) -> Result<()> {
    let cfg = args.load()?;
    let rows = args.in_pool(|| bounds_table(&cfg))?;
    let path = cfg.output_dir.join("bounds.csv");
    let display = path.display().to_string();
    let file = std::fs::File::create(&path).map_err(|e| Error::io(display.clone(), e))?;
    let mut buf = std::io::BufWriter::new(file);
    use std::io::Write as _;
    writeln!(buf, "# rounds: {}", cfg.rounds).map_err(|e| Error::io(display.clone(), e))?;
    let mut writer = csv::Writer::from_writer(buf);
    writer
        .write_record(["alpha", "sigma", "sigma_zeta", "epsilon", "bound", "step_size"])
        .map_err(Error::from)?;
    for row in &rows {
        writer
            .write_record([
                fmt_f64(row.alpha),
                fmt_f64(row.sigma),
                fmt_f64(row.sigma_zeta),
                row.epsilon.to_field(),
                fmt_f64(row.bound),
                fmt_f64(row.step_size),
            ])
            .map_err(Error::from)?;
    }
    writer.flush().map_err(|e| Error::io(display, e))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_gen(args: &CommonArgs) -> Result<()> {
    let cfg = args.load()?;
    let truth = generate_ground_truth(&cfg.synthetic)?;
    let policy = RngPolicy::new(cfg.seeds[0]);
    let mut streams = synthetic_streams(&std::sync::Arc::new(truth), &policy);
    let mut users = Vec::with_capacity(streams.len());
    for stream in &mut streams {
        let mut samples = Vec::with_capacity(cfg.gen_samples_per_user);
        for _ in 0..cfg.gen_samples_per_user {
            samples.push(stream.draw()?);
        }
        users.push(samples);
    }
    write_user_csv(&cfg.output_dir, &users)?;
    println!(
        "wrote {} users x {} samples to {}",
        users.len(),
        cfg.gen_samples_per_user,
        cfg.output_dir.display()
    );
    Ok(())
}
