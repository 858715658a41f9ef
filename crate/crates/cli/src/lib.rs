//! Command-line driver for every pipeline stage, and the frame service.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod protocol;
pub mod serve;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{Command, JobConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Data(_) => EXIT_DATA,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn parts(&self) -> (&'static str, &str) {
        match self {
            Failure::Config(m) => ("config", m),
            Failure::Data(m) => ("data", m),
            Failure::Runtime(m) => ("runtime", m),
        }
    }
}

impl From<fovsplat::Error> for Failure {
    fn from(e: fovsplat::Error) -> Self {
        use fovsplat::Error as E;
        match e {
            E::Config(_) => Failure::Config(e.to_string()),
            E::Diverged { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'static str,
    exit_code: i32,
    message: &'a str,
}

#[derive(Parser, Debug)]
#[command(name = "fovsplat", version, about = "Foveated splat rendering pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML job file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input model (`paths.model`).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output directory (`paths.output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any config field, e.g. `--set train.gamma=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Render one view to PNG, workload and stats files.
    Render,
    /// Efficiency-aware pruning with fine-tuning.
    Prune,
    /// Derive foveated levels from a level-1 model.
    TrainFr,
    /// Perceptual metric between two images, as JSON.
    Hvsq { reference: Option<PathBuf>, altered: Option<PathBuf> },
    /// Accelerator timing for a workload file under all feature sets.
    Simulate { workload: Option<PathBuf> },
    /// Workload imbalance report, as JSON.
    Stats { workload: Option<PathBuf> },
    /// Stream frames over a websocket.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write a synthetic scene.
    Synth,
    /// Run the command named in the job file.
    Run,
}

impl Cmd {
    fn command(&self) -> Option<Command> {
        Some(match self {
            Cmd::Render => Command::Render,
            Cmd::Prune => Command::Prune,
            Cmd::TrainFr => Command::TrainFr,
            Cmd::Hvsq { .. } => Command::Hvsq,
            Cmd::Simulate { .. } => Command::Simulate,
            Cmd::Stats { .. } => Command::Stats,
            Cmd::Serve { .. } => Command::Serve,
            Cmd::Synth => Command::Synth,
            Cmd::Run => return None,
        })
    }
}

fn build_config(cli: &Cli) -> Result<(Command, JobConfig), Failure> {
    let mut table = match &cli.common.config {
        Some(p) => config::read_table(p)?,
        None => toml::Table::new(),
    };
    let c = &cli.common;
    let path = |p: &PathBuf| p.to_string_lossy().into_owned();
    let mut direct: Vec<(&str, toml::Value)> = Vec::new();
    if let Some(s) = c.seed {
        let s = i64::try_from(s).map_err(|_| Failure::Config("seed out of range".into()))?;
        direct.push(("seed", toml::Value::Integer(s)));
    }
    let mut paths: Vec<(&str, &PathBuf)> = Vec::new();
    paths.extend(c.model.as_ref().map(|p| ("model", p)));
    paths.extend(c.out.as_ref().map(|p| ("output", p)));
    match &cli.command {
        Cmd::Hvsq { reference, altered } => {
            paths.extend(reference.as_ref().map(|p| ("reference_image", p)));
            paths.extend(altered.as_ref().map(|p| ("altered_image", p)));
        }
        Cmd::Simulate { workload } | Cmd::Stats { workload } => {
            paths.extend(workload.as_ref().map(|p| ("workload", p)));
        }
        _ => {}
    }
    for (k, v) in direct {
        table.insert(k.into(), v);
    }
    for (k, p) in paths {
        config::set_value(&mut table, &format!("paths.{k}"), toml::Value::String(path(p)))?;
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config::set_key(&mut table, k.trim(), v.trim())?;
    }
    let bind = match &cli.command {
        Cmd::Serve { bind: Some(b) } => Some(b.clone()),
        _ => std::env::var(config::BIND_ENV).ok(),
    };
    if let Some(b) = bind {
        config::set_value(&mut table, "serve.bind", toml::Value::String(b))?;
    }
    let job = JobConfig::from_table(table)?;
    let command = match (cli.command.command(), job.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(Failure::Config(format!("job file is for `{b:?}` but `{a:?}` was requested")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(Failure::Config("`run` needs `command` in the job file".into())),
    };
    Ok((command, job))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = build_config(&cli).and_then(|(command, job)| commands::dispatch(command, &job));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (kind, message) = f.parts();
            let report = ErrorReport { kind, exit_code: f.exit_code(), message };
            eprintln!("{}", serde_json::json!({ "error": report }));
            f.exit_code()
        }
    }
}
