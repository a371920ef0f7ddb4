use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::generation::ConstraintReport;
use crate::geometry::{BottomFrame, Ellipse2D, Ellipse3D, Point3};
use crate::planning::Segment;
use crate::soi::Alignment;

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Scenario {
        name: String,
        seed: u64,
        perception_in_loop: bool,
    },
    /// The first capture of the bag.
    Cloud { points: Vec<Point3> },
    Extraction {
        soi: Vec<Point3>,
        /// Rim the cloud was drawn from, when simulated.
        truth: Option<Vec<Point3>>,
        iterations: usize,
        converged: bool,
        loglik: Vec<f64>,
        rim_perimeter: f64,
    },
    Generation {
        vertices: Vec<Point3>,
        frame: BottomFrame,
        ellipse: Ellipse2D,
        constraint_report: ConstraintReport,
        g_dag: Vec<Point3>,
        g_star: Vec<Point3>,
    },
    PathNode {
        index: usize,
        segment: Segment,
        points: Vec<Point3>,
        ellipse: Ellipse3D,
    },
    Step {
        t: u64,
        subgoal: usize,
        alignment: Alignment,
        x: Vec<Point3>,
        truth: Vec<Point3>,
        u: Option<Vec<f64>>,
        max_error: f64,
        mean_error: f64,
        jacobian_condition: Option<f64>,
    },
}

impl LogRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            LogRecord::Scenario { .. } => "scenario",
            LogRecord::Cloud { .. } => "cloud",
            LogRecord::Extraction { .. } => "extraction",
            LogRecord::Generation { .. } => "generation",
            LogRecord::PathNode { .. } => "path_node",
            LogRecord::Step { .. } => "step",
        }
    }
}

/// Appends records as one JSON object per line.
pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_log(path: &Path, records: &[LogRecord]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = LogWriter::new(std::io::BufWriter::new(file));
    for r in records {
        w.write(r).map_err(|e| HarnessError::io(path, e))?;
    }
    w.into_inner()
        .flush()
        .map_err(|e| HarnessError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| HarnessError::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
