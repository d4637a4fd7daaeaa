use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use wlsep::config::read_pairs;
use wlsep::pipeline::{run_stages, Stage};
use wlsep::{DataSource, Error, ErrorKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "wlsep", version, about = "Winner/loser separability analysis for index components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean prices onto the index calendar and export panel and returns.
    Ingest(Opts),
    /// Score companies and export winner/middle/loser labels.
    Label(Opts),
    /// Leave-one-out k-NN error sweep over window lengths.
    Analyze(Opts),
    /// Pair-distance partitions and histograms.
    Hist(Opts),
    /// Elastic-map and principal-component embeddings.
    Embed(Opts),
    /// Generate a synthetic market with planted classes.
    Synth(Opts),
    /// Every analysis stage in sequence.
    Run(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of per-company CSVs, or a wide CSV. Omit to use synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Index trading calendar (one date per line).
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Comma-separated window lengths in months.
    #[arg(long)]
    windows: Option<String>,
    /// distance, proximity or both.
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic data.
    #[arg(long)]
    seed: Option<u64>,
}

impl Opts {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut pairs = match &self.config {
            Some(path) => read_pairs(path).map_err(|e| match e {
                Error::Io { .. } => Error::InvalidConfig(e.to_string()),
                other => other,
            })?,
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.insert(k.to_string(), v);
            }
        };
        set("data", self.data.as_ref().map(|p| p.display().to_string()));
        set("calendar", self.calendar.as_ref().map(|p| p.display().to_string()));
        set("windows", self.windows.clone());
        set("measure", self.measure.clone());
        set("k", self.k.map(|v| v.to_string()));
        set("bins", self.bins.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        RunConfig::from_pairs(&pairs)
    }
}

fn stages(command: &Command, cfg: &RunConfig) -> (Vec<Stage>, &'static str) {
    let synthetic = matches!(cfg.source, DataSource::Synth(_));
    match command {
        Command::Ingest(_) => (vec![Stage::Ingest], "ingest"),
        Command::Label(_) => (vec![Stage::Label], "label"),
        Command::Analyze(_) => (vec![Stage::Analyze], "analyze"),
        Command::Hist(_) => (vec![Stage::Hist], "hist"),
        Command::Embed(_) => (vec![Stage::Embed], "embed"),
        Command::Synth(_) => (vec![Stage::Synth], "synth"),
        Command::Run(_) => {
            let mut s = vec![Stage::Ingest, Stage::Label, Stage::Analyze, Stage::Hist, Stage::Embed];
            if synthetic {
                s.insert(0, Stage::Synth);
            }
            (s, "run")
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = match &cli.command {
        Command::Ingest(o)
        | Command::Label(o)
        | Command::Analyze(o)
        | Command::Hist(o)
        | Command::Embed(o)
        | Command::Synth(o)
        | Command::Run(o) => o,
    };
    let result = opts.load().and_then(|cfg| {
        let (stages, name) = stages(&cli.command, &cfg);
        info!("{name}: writing to {}", cfg.out_dir.display());
        let out = run_stages(&cfg, &stages)?;
        Ok((cfg, out))
    });
    match result {
        Ok((cfg, out)) => {
            if !out.summary.is_empty() {
                print!("{}", out.summary);
            }
            if !out.dropped.is_empty() {
                println!("dropped {} of {} companies", out.dropped.len(), out.n_input);
            }
            println!("wrote {} files to {}", out.artifacts.len(), cfg.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
