//! `latent-change`: detect hierarchical changes in snapshot streams, generate
//! synthetic scenarios and run repeated-trial experiments.

mod config;

use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use latent_change::baselines::TbeConfig;
use latent_change::eval::{run_experiment, write_result_csv, ExperimentConfig};
use latent_change::io::{load_stream, save_json, save_reports, save_stream, write_reports, RunSummary};
use latent_change::stream::{generate, DEFAULT_NODES};
use latent_change::{HierarchicalDetector, ScenarioKind, WindowMode};

use config::{check_input, check_output, resolve_detector, sidecar_path, DetectorOverrides, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "latent-change", version, about = "Hierarchical MDL change detection for network snapshot streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a snapshot stream and raise level-identified alarms.
    Detect(DetectArgs),
    /// Write a synthetic stream and its ground truth.
    Generate(GenerateArgs),
    /// Compare the detector with the baselines over repeated synthetic trials.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct DetectorFlags {
    /// Confidence parameter of the level-3 (model) test.
    #[arg(long)]
    delta: Option<f64>,
    /// Confidence parameter of the level-1 (data given blocks) test.
    #[arg(long)]
    delta_xz: Option<f64>,
    /// Confidence parameter of the level-2 (block distribution) test.
    #[arg(long)]
    delta_z: Option<f64>,
    /// Largest block count considered.
    #[arg(long = "kmax")]
    k_max: Option<usize>,
    /// EM restarts per block count.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// pooled or per-snapshot.
    #[arg(long)]
    window_mode: Option<WindowMode>,
    /// Stop the block-count scan after this many non-improving counts; 0 scans all.
    #[arg(long)]
    patience: Option<usize>,
    /// TOML file of key = value settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl DetectorFlags {
    fn overrides(&self, h: Option<usize>) -> DetectorOverrides {
        DetectorOverrides {
            h,
            delta: self.delta,
            delta_xz: self.delta_xz,
            delta_z: self.delta_z,
            k_max: self.k_max,
            restarts: self.restarts,
            seed: self.seed,
            window_mode: self.window_mode,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Snapshot stream file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report CSV; a JSON summary is written next to it. Stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Window half-width in snapshots.
    #[arg(long)]
    h: Option<usize>,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// abrupt or gradual.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stream file; the ground truth goes to `<stem>.truth.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// abrupt or gradual.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Window half-widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    h: Vec<usize>,
    /// Skip the TBE and DeltaCon baselines.
    #[arg(long)]
    no_baselines: bool,
    /// Worker threads for trials; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Summary CSV; per-trial details go to a JSON file next to it. Stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorFlags,
}

fn detect(args: DetectArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.detector.config.as_deref())?;
    let config = resolve_detector(&args.detector.overrides(args.h), &file)?;
    let Some(input) = args.input.or(file.input) else {
        bail!("missing --input");
    };
    check_input(&input)?;
    let output = args.output.or(file.output);
    if let Some(out) = &output {
        check_output(out)?;
    }

    let stream = load_stream(&input).with_context(|| format!("loading {}", input.display()))?;
    log::info!("loaded {} snapshots of {} nodes", stream.len(), stream[0].n_nodes());
    let outcome = HierarchicalDetector::new(config)?.run(&stream)?;
    let summary = RunSummary::new(config, &stream, &outcome.reports);
    log::info!(
        "{} reports; alarms at level 3: {}, level 2: {}, level 1: {}",
        summary.n_reports,
        summary.alarms.level3.len(),
        summary.alarms.level2.len(),
        summary.alarms.level1.len()
    );
    match output {
        Some(out) => {
            save_reports(&out, &outcome.reports)?;
            save_json(sidecar_path(&out, "json"), &summary)?;
        }
        None => write_reports(BufWriter::new(io::stdout().lock()), &outcome.reports)?,
    }
    Ok(())
}

fn generate_stream(args: GenerateArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.config.as_deref())?;
    let scenario = match args.scenario {
        Some(s) => s,
        None => file.scenario()?.unwrap_or(ScenarioKind::Abrupt),
    };
    let nodes = args.nodes.or(file.nodes).unwrap_or(DEFAULT_NODES);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let Some(output) = args.output.or(file.output) else {
        bail!("missing --output");
    };
    check_output(&output)?;

    let generated = generate(scenario, nodes, seed)?;
    save_stream(&output, &generated.snapshots)?;
    save_json(sidecar_path(&output, "truth.json"), &generated.scenario)?;
    log::info!("wrote {} snapshots to {}", generated.snapshots.len(), output.display());
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.detector.config.as_deref())?;
    let detector = resolve_detector(&args.detector.overrides(None), &file)?;
    let h_values = if !args.h.is_empty() {
        args.h
    } else if let Some(h) = file.h_values.clone() {
        h
    } else {
        vec![detector.h]
    };
    let output = args.output.or(file.output.clone());
    if let Some(out) = &output {
        check_output(out)?;
    }
    let scenario = match args.scenario {
        Some(s) => s,
        None => file.scenario()?.unwrap_or(ScenarioKind::Abrupt),
    };
    let config = ExperimentConfig {
        scenario,
        n_nodes: args.nodes.or(file.nodes).unwrap_or(DEFAULT_NODES),
        trials: args.trials.or(file.trials).unwrap_or(20),
        h_values,
        detector,
        tbe: TbeConfig { k_max: detector.k_max, restarts: detector.restarts, ..TbeConfig::default() },
        baselines: !args.no_baselines && file.baselines.unwrap_or(true),
        seed: detector.seed,
        threads: args.threads.or(file.threads),
        ..ExperimentConfig::default()
    };

    let result = run_experiment(&config)?;
    match output {
        Some(out) => {
            let csv = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_result_csv(BufWriter::new(csv), &result)?;
            save_json(sidecar_path(&out, "json"), &result)?;
        }
        None => write_result_csv(BufWriter::new(io::stdout().lock()), &result)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Detect(args) => detect(args),
        Command::Generate(args) => generate_stream(args),
        Command::Experiment(args) => experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
