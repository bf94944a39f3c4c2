use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use baker_core::analytic::enumerate_allowed;
use baker_core::bitcore::{render_diagram, render_history, CellLabel, DiagramStyle};
use baker_core::experiment::{entropy_csv, predict_csv, report_json, run_sweep, validate, ExperimentConfig};
use baker_core::{BakerError, BakerResult};

#[derive(Parser)]
#[command(name = "baker", version, about = "History probabilities and decoherence for the qubit baker map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the coarse-graining, partition, unitarity and (for small N) the dense oracle.
    Validate(Common),
    /// Entropy per depth for every l in the sweep, as CSV.
    EntropySweep(Common),
    /// Full decoherence reports as JSON.
    DecoherenceReport(Common),
    /// Closed-form predictions, as CSV.
    Predict(Common),
    /// Box diagram of the initial cell.
    Diagram {
        #[command(flatten)]
        common: Common,
        /// Also draw the first allowed history of length k_max.
        #[arg(long)]
        history: bool,
        /// Leave out the dot marking the momentum/position boundary.
        #[arg(long)]
        no_dot: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    prune_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    allow_deep_k: bool,
}

impl Common {
    fn load(&self) -> BakerResult<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| BakerError::Io(format!("{}: {e}", self.config.display())))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(threads) = self.threads {
            cfg.threads = Some(threads);
        }
        if let Some(tol) = self.prune_tol {
            cfg.prune_tol = tol;
        }
        if let Some(seed) = self.seed {
            cfg.sample_seed = seed;
        }
        if let Some(k) = self.k_max {
            cfg.k_max = k;
        }
        cfg.allow_deep_k |= self.allow_deep_k;
        Ok(cfg)
    }
}

fn emit(text: &str, path: Option<&Path>) -> BakerResult<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| BakerError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialise");
    text.push('\n');
    text
}

fn run(cli: Cli) -> BakerResult<i32> {
    match cli.command {
        Command::Validate(common) => {
            let cfg = common.load()?;
            let report = validate(&cfg)?;
            let status = if report.passed() { "ok" } else { "failed" };
            emit(&pretty(&json!({ "status": status, "checks": report.checks })), common.out.as_deref())?;
            Ok(if report.passed() { 0 } else { 2 })
        }
        Command::EntropySweep(common) => {
            let cfg = common.load()?;
            let points = run_sweep(&cfg)?;
            let out = common.out.clone().or(cfg.outputs.entropy_csv.clone());
            emit(&entropy_csv(&points), out.as_deref())?;
            Ok(0)
        }
        Command::DecoherenceReport(common) => {
            let cfg = common.load()?;
            let points = run_sweep(&cfg)?;
            let out = common.out.clone().or(cfg.outputs.report_json.clone());
            emit(&pretty(&report_json(&cfg, &points)?), out.as_deref())?;
            Ok(0)
        }
        Command::Predict(common) => {
            let cfg = common.load()?;
            let mut text = String::new();
            for spec in cfg.specs()? {
                text.push_str(&predict_csv(&spec, cfg.k_max));
                if cfg.l_sweep.is_some() {
                    break;
                }
            }
            let out = common.out.clone().or(cfg.outputs.predict_csv.clone());
            emit(&text, out.as_deref())?;
            Ok(0)
        }
        Command::Diagram { common, history, no_dot } => {
            let cfg = common.load()?;
            let spec = cfg.specs()?.remove(0);
            let x = CellLabel::parse(&spec, &cfg.x)?;
            let style = DiagramStyle { show_dot: !no_dot };
            let mut text = render_diagram(&spec, &x, style);
            text.push('\n');
            if history {
                if let Some(h) = enumerate_allowed(&spec, &x, cfg.k_max, 1 << 20)?.first() {
                    text.push('\n');
                    text.push_str(&render_history(&spec, h, style));
                    text.push('\n');
                }
            }
            emit(&text, common.out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            let report = json!({ "status": "error", "kind": err.kind(), "message": err.to_string() });
            eprintln!("{}", serde_json::to_string(&report).expect("json values always serialise"));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
