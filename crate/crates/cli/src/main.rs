//! `modbal`: dataset preparation, training, evaluation and diagnostics.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 divergence, 4 I/O.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonFlags, ExtraFlags};

#[derive(Debug, Parser)]
#[command(name = "modbal", version, about = "Modality-balanced multimodal recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Flags {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    extra: ExtraFlags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter raw interactions to a k-core, split them and write a dataset directory
    Prepare(Flags),
    /// Generate a synthetic dataset with per-modality signal strength
    Synth(Flags),
    /// Train a uni-modal teacher for --modality
    TrainTeacher(Flags),
    /// Train the distilled multimodal student from teacher checkpoints
    TrainStudent(Flags),
    /// Evaluate a checkpoint on the validation or test split
    Eval(Flags),
    /// Record per-epoch uni-modal recall of a joint model and of solo teachers
    Pilot(Flags),
    /// Run the gradient-bridge experiment on a small synthetic problem
    Bridge(Flags),
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Failure { code: 4, msg: msg.into() }
    }
}

impl From<modbal_core::Error> for Failure {
    fn from(e: modbal_core::Error) -> Self {
        use modbal_core::Error as E;
        let code = match &e {
            E::Config(_) => 1,
            E::Parse { .. } | E::Data(_) | E::Index { .. } | E::Shape { .. } | E::Json(_) => 2,
            E::NonFinite(_) | E::Diverged { .. } => 3,
            E::Io { .. } => 4,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

type Handler = fn(&config::RunConfig) -> Result<(), Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    let (cmd, flags): (Handler, Flags) = match cli.command {
        Command::Prepare(f) => (commands::prepare, f),
        Command::Synth(f) => (commands::synth, f),
        Command::TrainTeacher(f) => (commands::train_teacher, f),
        Command::TrainStudent(f) => (commands::train_student, f),
        Command::Eval(f) => (commands::eval, f),
        Command::Pilot(f) => (commands::pilot, f),
        Command::Bridge(f) => (commands::bridge, f),
    };
    let rc = config::resolve(&flags.common, &flags.extra)?;
    cmd(&rc)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
