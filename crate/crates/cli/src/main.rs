// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgescale_cli::config::{ConfigError, Overrides, RunConfig};
use edgescale_cli::live::{LiveError, LiveOptions, LiveSession, Pacing};
use edgescale_core::run_headless;
use log::{error, info};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

/// Edge autoscaling sandbox: mobility simulator, location API, orchestrator
/// and occupancy-driven decision engine.
#[derive(Debug, Parser)]
#[command(name = "edgescale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start the HTTP services and run the control loop live.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        live: LiveFlags,
    },
    /// Run headless as fast as possible and write artifacts.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Check a run file and print the resolved configuration.
    Validate {
        #[arg(long, env = "EDGESCALE_CONFIG")]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Run file (TOML).
    #[arg(long, env = "EDGESCALE_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "EDGESCALE_GAMMA")]
    gamma: Option<f64>,
    /// Monitored zone.
    #[arg(long, env = "EDGESCALE_ZONE")]
    zone: Option<String>,
    /// Poll period in seconds of simulated time.
    #[arg(long, env = "EDGESCALE_POLL_PERIOD")]
    poll_period: Option<f64>,
    /// Sliding window size in samples.
    #[arg(long, env = "EDGESCALE_WINDOW")]
    window: Option<usize>,
    #[arg(long, env = "EDGESCALE_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "EDGESCALE_MIN_REPLICAS")]
    min_replicas: Option<u32>,
    #[arg(long, env = "EDGESCALE_MAX_REPLICAS")]
    max_replicas: Option<u32>,
    /// Cooldown between scale actions, seconds.
    #[arg(long, env = "EDGESCALE_COOLDOWN")]
    cooldown: Option<f64>,
    #[arg(long, env = "EDGESCALE_NAMESPACE")]
    namespace: Option<String>,
    #[arg(long, env = "EDGESCALE_DEPLOYMENT")]
    deployment: Option<String>,
    /// Number of ticks to run.
    #[arg(long, env = "EDGESCALE_TICKS")]
    ticks: Option<u64>,
    /// Artifact directory.
    #[arg(long, env = "EDGESCALE_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LiveFlags {
    #[arg(long, env = "EDGESCALE_LOCATION_ADDR")]
    location_addr: Option<String>,
    #[arg(long, env = "EDGESCALE_ORCHESTRATOR_ADDR")]
    orchestrator_addr: Option<String>,
    /// Serve dashboard assets from this directory.
    #[arg(long, env = "EDGESCALE_DASHBOARD_DIR")]
    dashboard_dir: Option<PathBuf>,
    /// Poll a remote location API instead of the in-process one.
    #[arg(long, env = "EDGESCALE_LOCATION_URL")]
    location_url: Option<String>,
    /// Scale through a remote orchestrator instead of the in-process one.
    #[arg(long, env = "EDGESCALE_ORCHESTRATOR_URL")]
    orchestrator_url: Option<String>,
    /// Tick as fast as possible instead of in real time.
    #[arg(long, env = "EDGESCALE_FAST")]
    fast: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            gamma: self.gamma,
            zone: self.zone.clone(),
            poll_period_s: self.poll_period,
            window: self.window,
            seed: self.seed,
            min_replicas: self.min_replicas,
            max_replicas: self.max_replicas,
            cooldown_s: self.cooldown,
            namespace: self.namespace.clone(),
            deployment: self.deployment.clone(),
            ticks: self.ticks,
            out: self.out.clone(),
            ..Overrides::default()
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path, overrides).map_err(|e| {
        error!("{e}");
        match e {
            ConfigError::Read { .. } => ExitCode::from(EXIT_IO),
            _ => ExitCode::from(EXIT_CONFIG),
        }
    })
}

fn bench(common: &Common) -> Result<(), ExitCode> {
    let cfg = load(&common.config, &common.overrides())?;
    let experiment = cfg.headless().map_err(|e| {
        error!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let report = run_headless(&experiment).map_err(|e| {
        error!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    report.write_artifacts(&cfg.output_dir).map_err(|e| {
        error!("{e}");
        ExitCode::from(EXIT_IO)
    })?;
    let summary = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
    println!("{summary}");
    info!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn run(common: &Common, flags: &LiveFlags) -> Result<(), ExitCode> {
    let overrides = Overrides {
        location_addr: flags.location_addr.clone(),
        orchestrator_addr: flags.orchestrator_addr.clone(),
        dashboard_dir: flags.dashboard_dir.clone(),
        location_url: flags.location_url.clone(),
        orchestrator_url: flags.orchestrator_url.clone(),
        fast: flags.fast,
        ..common.overrides()
    };
    let cfg = load(&common.config, &overrides)?;
    let opts = LiveOptions {
        pacing: if cfg.realtime { Pacing::Realtime } else { Pacing::Fast },
        max_ticks: cfg.duration_ticks,
        location_addr: cfg.location_addr,
        orchestrator_addr: cfg.orchestrator_addr,
        dashboard_dir: cfg.dashboard_dir.clone(),
        location_url: cfg.location_url.clone(),
        orchestrator_url: cfg.orchestrator_url.clone(),
        output_dir: Some(cfg.output_dir.clone()),
    };
    let live_err = |e: LiveError| {
        error!("{e}");
        match e {
            LiveError::Experiment(_) => ExitCode::from(EXIT_CONFIG),
            _ => ExitCode::from(EXIT_IO),
        }
    };
    let session = LiveSession::start(&cfg.experiment, opts).map_err(live_err)?;
    session.wait_for_end();
    let report = session.shutdown().map_err(live_err)?;
    info!(
        "stopped after {} ticks, {} scale actions; artifacts in {}",
        report.summary.ticks,
        report.summary.scale_actions,
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, live } => run(common, live),
        Command::Bench { common } => bench(common),
        Command::Validate { config } => load(config, &Overrides::default()).map(|cfg| {
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg.experiment).expect("config serializes")
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
