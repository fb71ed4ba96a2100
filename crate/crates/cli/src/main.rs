//! `isomer` command-line driver.

mod commands;
mod run_dir;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isomer::Error;

use commands::{
    EvalArgs, FeaturesArgs, GenerateArgs, PredictArgs, ProjectArgs, SearchArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "isomer",
    version,
    about = "Find and predict the most compressible rotation of 360° video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic equirectangular test scene.
    Generate(GenerateArgs),
    /// Rotate an equirectangular video and convert it to packed cubemap frames.
    Project(ProjectArgs),
    /// Encode every grid orientation of every clip and record the sizes.
    Search(SearchArgs),
    /// Extract contour and motion feature tensors per clip.
    Features(FeaturesArgs),
    /// Train the orientation predictor on size tables and feature tensors.
    Train(TrainArgs),
    /// Predict the most compressible orientation of each clip.
    Predict(PredictArgs),
    /// Score orientation choices against size tables.
    Eval(EvalArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Environment(_) => 3,
        Error::Encode { .. } => 4,
        Error::Diverged { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Project(a) => commands::project(a),
        Command::Search(a) => commands::search(a),
        Command::Features(a) => commands::features(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Encode { log, .. } = e.root() {
                if !log.is_empty() {
                    eprintln!("{log}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
