use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bagging::extraction::{extract_with_model, GmmConfig};
use bagging::geometry::polyline_perimeter;
use bagging::harness::{
    load_scenario, read_xyz, run_batch, run_pipeline, run_stages, write_outputs, HarnessError,
    LogRecord, RunReport, Stage,
};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "bagging",
    version,
    about = "Bag a rigid object with a deformable bag, in simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run extraction, generation, planning and servoing on one scenario.
    Run {
        scenario: PathBuf,
        /// Directory for log.jsonl, report.json and timing.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scenario in a directory with random object placements.
    Batch {
        dir: PathBuf,
        #[arg(long)]
        trials: usize,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Extract the ordered rim from an xyz point cloud.
    Extract {
        cloud: PathBuf,
        #[arg(long = "n-x", default_value_t = 32)]
        n_x: usize,
    },
    /// Plan the rim path for a scenario without servoing; prints path nodes
    /// as JSON lines.
    Plan {
        scenario: PathBuf,
        /// Write the nodes here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Validation,
    Parse,
    Extraction,
    Generation,
    Planning,
    Servo,
    Io,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Validation => "validation",
            Kind::Parse => "parse",
            Kind::Extraction => "extraction",
            Kind::Generation => "generation",
            Kind::Planning => "planning",
            Kind::Servo => "servo",
            Kind::Io => "io",
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Kind::Validation | Kind::Parse => 2,
            Kind::Extraction | Kind::Generation | Kind::Planning => 3,
            Kind::Servo => 4,
            Kind::Io => 5,
        }
    }
}

/// What goes to stderr when a command fails.
#[derive(Debug, Serialize)]
struct ErrorRecord {
    error: &'static str,
    exit_code: u8,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

impl ErrorRecord {
    fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            error: kind.name(),
            exit_code: kind.exit_code(),
            message: message.into(),
            source: None,
            line: None,
        }
    }
}

impl From<HarnessError> for ErrorRecord {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Parse {
                source_name,
                line,
                message,
            } => Self {
                source: Some(source_name),
                line: Some(line),
                ..Self::new(Kind::Parse, message)
            },
            HarnessError::Validation(m) => Self::new(Kind::Validation, m),
            HarnessError::Io { path, message } => Self {
                source: Some(path),
                ..Self::new(Kind::Io, message)
            },
        }
    }
}

fn stage_error(report: &RunReport) -> Option<ErrorRecord> {
    let kind = match report.failed_stage()? {
        Stage::Extraction => Kind::Extraction,
        Stage::Generation => Kind::Generation,
        Stage::Planning => Kind::Planning,
        Stage::Servoing => Kind::Servo,
    };
    Some(ErrorRecord::new(
        kind,
        report.failure_message().unwrap_or_default(),
    ))
}

fn stdout_line(value: &impl Serialize) -> Result<(), ErrorRecord> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)
        .map_err(|e| ErrorRecord::new(Kind::Io, e.to_string()))?;
    writeln!(out).map_err(|e| ErrorRecord::new(Kind::Io, e.to_string()))
}

fn run(scenario: &Path, out: &Path, seed: Option<u64>) -> Result<(), ErrorRecord> {
    let mut s = load_scenario(scenario)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let artifacts = run_pipeline(&s)?;
    write_outputs(out, &artifacts)?;
    let report = &artifacts.report;
    stdout_line(report)?;
    if let Some(e) = stage_error(report) {
        return Err(e);
    }
    if !report.success {
        return Err(ErrorRecord::new(
            Kind::Servo,
            format!(
                "final mean error {:.4} m is not below success_tol {:.4} m",
                report.final_error.unwrap_or(f64::NAN),
                report.success_tol
            ),
        ));
    }
    Ok(())
}

fn batch(dir: &Path, trials: usize, json: bool) -> Result<(), ErrorRecord> {
    let summary = run_batch(dir, trials)?;
    if json {
        stdout_line(&summary)
    } else {
        print!("{summary}");
        Ok(())
    }
}

#[derive(Serialize)]
struct Extracted {
    n_x: usize,
    soi: Vec<bagging::geometry::Point3>,
    rim_perimeter: f64,
    iterations: usize,
    converged: bool,
}

fn extract(cloud: &Path, n_x: usize) -> Result<(), ErrorRecord> {
    let cloud = read_xyz(cloud)?;
    let cfg = GmmConfig {
        n_x,
        ..Default::default()
    };
    cfg.validate()
        .map_err(|e| ErrorRecord::new(Kind::Validation, e.to_string()))?;
    let (soi, model) = extract_with_model(&cloud, &cfg, None)
        .map_err(|e| ErrorRecord::new(Kind::Extraction, e.to_string()))?;
    let rim_perimeter = polyline_perimeter(&soi.points)
        .map_err(|e| ErrorRecord::new(Kind::Extraction, e.to_string()))?;
    stdout_line(&Extracted {
        n_x,
        soi: soi.points,
        rim_perimeter,
        iterations: model.iterations,
        converged: model.converged,
    })
}

fn plan(scenario: &Path, out: Option<&Path>) -> Result<(), ErrorRecord> {
    let s = load_scenario(scenario)?;
    let artifacts = run_stages(&s, Stage::Planning)?;
    if let Some(e) = stage_error(&artifacts.report) {
        return Err(e);
    }
    let nodes: Vec<&LogRecord> = artifacts
        .records
        .iter()
        .filter(|r| matches!(r, LogRecord::PathNode { .. }))
        .collect();
    let mut text = Vec::new();
    for n in nodes {
        serde_json::to_writer(&mut text, n).expect("records serialize");
        text.push(b'\n');
    }
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| {
            ErrorRecord::from(HarnessError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        }),
        None => std::io::stdout()
            .lock()
            .write_all(&text)
            .map_err(|e| ErrorRecord::new(Kind::Io, e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            seed,
        } => run(scenario, out, *seed),
        Command::Batch { dir, trials, json } => batch(dir, *trials, *json),
        Command::Extract { cloud, n_x } => extract(cloud, *n_x),
        Command::Plan { scenario, out } => plan(scenario, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::to_string(&e).expect("error record serializes");
            eprintln!("{line}");
            ExitCode::from(e.exit_code)
        }
    }
}
