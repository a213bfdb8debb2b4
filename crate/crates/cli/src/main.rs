use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use legged_odom::estimators::Variant;
use legged_odom::eval::{emit_plot_data, evaluate, generate_synthetic, replay, MetricsReport, SyntheticConfig};
use legged_odom::io::{load_replay_config, parse_log, read_trajectory, write_trajectory, Pose};

#[derive(Parser)]
#[command(name = "legged-odom", version, about = "Legged robot odometry replay and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a log through one estimator.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// ekf, iekf, fl-single, fl-combined or dr. Defaults to the config's variant.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = legged_odom::eval::DEFAULT_RPE_DELTA)]
        rpe_delta: f64,
        /// TUM ground truth. Defaults to the log's ground-truth records.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Generate a synthetic gait log and its ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Add sensor noise and IMU bias.
        #[arg(long)]
        noise: bool,
    },
    /// Compare a TUM trajectory with TUM ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = legged_odom::eval::DEFAULT_RPE_DELTA)]
        rpe_delta: f64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sequence_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn report(metrics: &MetricsReport, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(metrics)?;
    println!("{text}");
    if let Some(path) = out {
        fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_replay(
    log: &Path,
    config: &Path,
    variant: Option<Variant>,
    out: &Path,
    rpe_delta: f64,
    gt: Option<&Path>,
) -> Result<()> {
    let config = load_replay_config(config).with_context(|| format!("loading {}", config.display()))?;
    let Some(variant) = variant.or(config.variant) else {
        bail!("no variant given on the command line or in the config");
    };
    let records = parse_log(log).with_context(|| format!("reading {}", log.display()))?;
    let output = replay(&records, &config, variant)?;
    let trajectory = output.trajectory();

    fs::create_dir_all(out)?;
    let name = variant.name();
    write_trajectory(out.join(format!("{name}.tum")), &trajectory)?;
    let reference: Vec<Pose> = match gt {
        Some(path) => read_trajectory(path).with_context(|| format!("reading {}", path.display()))?,
        None => output.ground_truth.clone(),
    };
    let reference = (!reference.is_empty()).then_some(reference);
    emit_plot_data(&[(name, &trajectory)], reference.as_deref(), out)?;
    eprintln!("{name}: {} poses, {} updates", trajectory.len(), output.updates);
    if let Some(reference) = reference {
        let metrics = evaluate(&trajectory, &reference, rpe_delta, &sequence_name(log))?;
        report(&metrics, Some(&out.join(format!("{name}_metrics.json"))))?;
    }
    Ok(())
}

fn run_synth(config: Option<&Path>, out: &Path, noise: bool) -> Result<()> {
    let mut config: SyntheticConfig = match config {
        Some(path) => toml::from_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => SyntheticConfig::default(),
    };
    config.noise |= noise;
    let log = generate_synthetic(&config)?;
    log.write(out)?;
    eprintln!(
        "wrote {} records and {} ground-truth poses to {}",
        log.records.len(),
        log.ground_truth.len(),
        out.display()
    );
    Ok(())
}

fn run_eval(est: &Path, gt: &Path, rpe_delta: f64, out: Option<&Path>) -> Result<()> {
    let estimate = read_trajectory(est).with_context(|| format!("reading {}", est.display()))?;
    let reference = read_trajectory(gt).with_context(|| format!("reading {}", gt.display()))?;
    let metrics = evaluate(&estimate, &reference, rpe_delta, &sequence_name(est))?;
    report(&metrics, out)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Replay {
            log,
            config,
            variant,
            out,
            rpe_delta,
            gt,
        } => run_replay(&log, &config, variant, &out, rpe_delta, gt.as_deref()),
        Command::Synth { config, out, noise } => run_synth(config.as_deref(), &out, noise),
        Command::Eval {
            est,
            gt,
            rpe_delta,
            out,
        } => run_eval(&est, &gt, rpe_delta, out.as_deref()),
    }
}
