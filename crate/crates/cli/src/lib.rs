//! Command-line front end: config resolution, run directories and manifests.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod source;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{parse_list, parse_windows, RunConfig};
use manifest::OutDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "trajlab", version, about = "Trajectory-commitment experiments on small transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample completions and classify prompts by bifurcation status.
    Phase1(Flags),
    /// Cache same-prompt run pairs and measure where they diverge.
    Phase2(Flags),
    /// Activation patching sweeps and controls.
    Phase3(Flags),
    /// Step-0 regime probes and clustering.
    Probe(Flags),
    /// Consolidate a run directory into a summary.
    Report(Flags),
    /// Build a fork model and write its weights, vocabulary, oracle and prompts.
    SynthBuild(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON run config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Completions per prompt.
    #[arg(long)]
    samples: Option<usize>,
    /// Patch trials per prompt and cell.
    #[arg(long)]
    trials: Option<usize>,
    /// e.g. `0,2,4-6`
    #[arg(long)]
    layers: Option<String>,
    /// e.g. `1,2,3`
    #[arg(long)]
    steps: Option<String>,
    /// Semicolon-separated step sets, e.g. `1;1,2;1-4`
    #[arg(long)]
    windows: Option<String>,
    /// Replay recorded counts instead of running a model.
    #[arg(long)]
    fixture: bool,
}

impl Flags {
    fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                RunConfig::from_json(&text).map_err(|e| format!("config {}: {e}", p.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident => $e:expr),*) => { $(if let Some(v) = &self.$f { cfg.$f = $e(v)?; })* };
        }
        let some = |v: &PathBuf| Ok::<_, String>(Some(v.clone()));
        set!(model => some, dataset => some, out => some);
        set!(seed => |v: &u64| Ok::<_, String>(*v), samples => |v: &usize| Ok::<_, String>(*v), trials => |v: &usize| Ok::<_, String>(*v));
        set!(temperature => |v: &f64| Ok::<_, String>(Some(*v)));
        set!(layers => |v: &String| parse_list(v).map(Some), steps => |v: &String| parse_list(v), windows => |v: &String| parse_windows(v));
        cfg.fixture |= self.fixture;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (name, flags) = match &cli.command {
        Command::Phase1(f) => ("phase1", f),
        Command::Phase2(f) => ("phase2", f),
        Command::Phase3(f) => ("phase3", f),
        Command::Probe(f) => ("probe", f),
        Command::Report(f) => ("report", f),
        Command::SynthBuild(f) => ("synth-build", f),
    };
    let cfg = match flags.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(name, &cfg) {
        Ok(dir) => {
            println!("{}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// Runs `command` and returns its output directory.
pub fn execute(command: &str, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let run_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    // inputs are resolved before anything is written
    let src = commands::load_source(cfg, command)?;
    if command == "report" && !commands::PHASES.iter().any(|p| run_dir.join(p).join(manifest::MANIFEST).exists()) {
        anyhow::bail!("{} holds no phase outputs", run_dir.display());
    }
    let dir = match command {
        "synth-build" => run_dir.clone(),
        "report" => run_dir.join("report"),
        phase => run_dir.join(phase),
    };
    let out = OutDir::create(&dir)?;
    let result = match command {
        "phase1" => commands::phase1(cfg, src.as_ref(), &out),
        "phase2" => commands::phase2(cfg, src.as_ref().expect("phase2 loads a model"), &run_dir, &out),
        "phase3" => commands::phase3(cfg, src.as_ref(), &run_dir, &out),
        "probe" => commands::probe(cfg, src.as_ref(), &run_dir, &out),
        "report" => commands::report(&run_dir, &out),
        "synth-build" => commands::synth_build(cfg, &out),
        other => anyhow::bail!("unknown command {other}"),
    };
    let inputs = src.map(|s| s.inputs).unwrap_or_default();
    match result.and_then(|seeds| out.finish(command, cfg, seeds, inputs)) {
        Ok(_) => Ok(dir),
        Err(e) => {
            out.fail(&e);
            Err(e)
        }
    }
}
