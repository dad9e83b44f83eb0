use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use reconsim::controller::ExperimentConfig;
use reconsim::reporting::{self, Axis};
use reconsim::{run_episode, Result};

#[derive(Parser)]
#[command(name = "reconsim", version, about = "Edge multi-view reconstruction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate camera availability and server latency traces.
    GenTraces(Common),
    /// Run one episode and write its per-frame log, summary and Q-tables.
    Run(Common),
    /// Run a policy comparison and write the table and plot data.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = AxisArg::Camera)]
        axis: AxisArg,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the policy and the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Camera,
    Server,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Camera => Axis::Camera,
            AxisArg::Server => Axis::Server,
        }
    }
}

fn load_config(common: &Common, preset: fn() -> ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => preset(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(frames) = common.frames {
        cfg.n_frames = frames;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen_traces(common: &Common) -> Result<()> {
    let cfg = load_config(common, ExperimentConfig::default)?;
    let traces = reporting::write_traces(&cfg, &common.out)?;
    println!(
        "wrote {} frames x {} cameras, {} servers to {}",
        traces.cameras.n_frames(),
        traces.cameras.n_cameras(),
        traces.servers.n_servers(),
        common.out.display()
    );
    Ok(())
}

fn run(common: &Common) -> Result<()> {
    let cfg = load_config(common, ExperimentConfig::default)?;
    let episode = run_episode(&cfg)?;
    reporting::write_run(&episode, &common.out)?;
    let s = episode.stats.summary();
    println!(
        "{} frames, {} reliable ({:.2}%), avg PQ {:.0}, avg total {:.2} s -> {}",
        s.frames,
        s.reliable_frames,
        s.reliability_pct,
        s.avg_pq,
        s.avg_total_s,
        common.out.display()
    );
    Ok(())
}

fn compare(common: &Common, axis: Axis) -> Result<()> {
    let preset = match axis {
        Axis::Camera => ExperimentConfig::camera_comparison,
        Axis::Server => ExperimentConfig::server_comparison,
    };
    let cfg = load_config(common, preset)?;
    let bundle = reporting::compare(&cfg, axis, &common.out)?;
    print!("{}", bundle.render_table());
    Ok(())
}

fn exit(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenTraces(c) => exit(gen_traces(c)),
        Command::Run(c) => exit(run(c)),
        Command::Compare { common, axis } => exit(compare(common, (*axis).into())),
    }
}
