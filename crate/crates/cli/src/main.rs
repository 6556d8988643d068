use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use neures::commands::{self, DatasetArgs, EvalCommand, RenderArgs, TrainArgs};
use neures::{exit_code, ConfigError};
use neures_core::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "neures", version, about = "Neural resonator workbench")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate modal training targets.
    Dataset(DatasetArgs),
    /// Fit the coefficient predictor to a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render a JSON scene to a WAV file.
    Render(RenderArgs),
    /// Run the websocket server for interactive use.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// 0 picks a free port; the bound address is printed.
        #[arg(long, default_value_t = 8765)]
        port: u16,
    },
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).context(ConfigError(format!("loading {}", p.display())))?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Dataset(a) => commands::cmd_dataset(&cfg, &a),
        Command::Train(a) => commands::cmd_train(&cfg, &a),
        Command::Eval(c) => commands::cmd_eval(&cfg, &c),
        Command::Render(a) => commands::cmd_render(&cfg, &a),
        Command::Serve {
            checkpoint,
            host,
            port,
        } => {
            let model = commands::load_model(&cfg, checkpoint.as_ref())?;
            let engine = commands::engine_config(&cfg, &model);
            engine.validate().map_err(|e| ConfigError(e.to_string()))?;
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()?;
            rt.block_on(neures::serve::serve(
                model,
                engine,
                cfg.material,
                SocketAddr::new(host, port),
            ))
        }
        Command::Config => {
            print!("{}", cfg.canonical());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
