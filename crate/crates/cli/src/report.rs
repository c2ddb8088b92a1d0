//! Report documents, schema validation and atomic output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use holoreg::exact::PropagationStats;
use holoreg::fit::LinearFit;
use holoreg::noise::SweepPoint;
use holoreg::MatrixRecord;
use serde::{Deserialize, Serialize};

use crate::config::{CommandKind, EngineKind, ExperimentConfig, SweepExperiment};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: CommandKind,
    /// Fully resolved config, defaults included.
    pub config: ExperimentConfig,
    pub results: Results,
    pub diagnostics: Diagnostics,
    /// Wall-clock figures; the only part of a report that varies between runs.
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "data")]
pub enum Results {
    Overlap(OverlapResults),
    Simulate(SimulateResults),
    Sweep(SweepResults),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutRecord {
    pub windings: Vec<i64>,
    pub gram: MatrixRecord,
    pub max_offdiagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapRow {
    pub delta_w: f64,
    pub continuum: f64,
    pub discrete_re: f64,
    pub discrete_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapResults {
    pub table: Vec<OverlapRow>,
    /// Largest `|discrete − continuum|` over the table.
    pub max_deviation: f64,
    pub layout: LayoutRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpLog {
    pub index: usize,
    pub op: String,
    /// `[cpb, cavity, modes…]` after the op.
    pub occupations: Vec<f64>,
    pub norm_deficit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateResults {
    pub engine: EngineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutRecord>,
    pub ops: Vec<OpLog>,
    /// Overlap of the final state with the initial one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_trip_fidelity: Option<f64>,
    /// Last Bell check in the program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bell_fidelity: Option<f64>,
    /// Classical engine: `|β₀|` against time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
    /// Classical engine: final `|β₀|` over its value after the first tilt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revival: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResults {
    pub experiment: SweepExperiment,
    pub points: Vec<SweepPoint>,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hilbert_dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub wall_seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    /// Parses a report and checks it against the current schema.
    pub fn validate_json(text: &str) -> Result<Self, String> {
        let report: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            ));
        }
        if report.command != report.config.command {
            return Err("report command does not match its config".into());
        }
        let matches = matches!(
            (&report.results, report.command),
            (Results::Overlap(_), CommandKind::Overlap)
                | (Results::Simulate(_), CommandKind::Simulate)
                | (Results::Sweep(_), CommandKind::Sweep)
        );
        if !matches {
            return Err("results do not match the report command".into());
        }
        report.config.validate()?;
        Ok(report)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        match &self.results {
            Results::Overlap(o) => format!(
                "overlap: {} table rows, max |discrete - continuum| = {:.3e}, layout max |G_ij| = {:.3e}",
                o.table.len(),
                o.max_deviation,
                o.layout.max_offdiagonal
            ),
            Results::Simulate(s) => {
                let mut line = format!("simulate ({:?} engine): {} ops", s.engine, s.ops.len());
                if let Some(f) = s.round_trip_fidelity {
                    let _ = write!(line, ", round-trip fidelity = {f:.6}");
                }
                if let Some(f) = s.bell_fidelity {
                    let _ = write!(line, ", Bell fidelity = {f:.6}");
                }
                for op in &s.ops {
                    if let (Some(c), Some(p)) = (op.cycles, op.predicted_cycles) {
                        let _ = write!(line, ", {} took {c} cycles (predicted {p})", op.op);
                    }
                }
                if let Some(r) = s.revival {
                    let _ = write!(line, ", revival = {r:.5}");
                }
                line
            }
            Results::Sweep(s) => format!(
                "sweep ({:?}): {} points, log-log slope = {:.4} ± {:.4}",
                s.experiment,
                s.points.len(),
                s.fit.slope,
                s.fit.slope_stderr
            ),
        }
    }

    /// Flat tab-separated tables, keyed by file name.
    pub fn tables(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let layout = match &self.results {
            Results::Overlap(o) => {
                let mut t = String::from("delta_w\tcontinuum\tdiscrete_re\tdiscrete_im\n");
                for r in &o.table {
                    let _ = writeln!(t, "{}\t{}\t{}\t{}", r.delta_w, r.continuum, r.discrete_re, r.discrete_im);
                }
                out.push(("overlap.tsv", t));
                Some(&o.layout)
            }
            Results::Simulate(s) => {
                if !s.ops.is_empty() {
                    let mut t = String::from("index\top\tnorm_deficit\toccupations\n");
                    for r in &s.ops {
                        let occ: Vec<String> = r.occupations.iter().map(f64::to_string).collect();
                        let _ = writeln!(t, "{}\t{}\t{}\t{}", r.index, r.op, r.norm_deficit, occ.join("\t"));
                    }
                    out.push(("ops.tsv", t));
                }
                if let Some(tr) = &s.trace {
                    let mut t = String::from("time\tsignal\n");
                    for (x, y) in tr.times.iter().zip(&tr.values) {
                        let _ = writeln!(t, "{x}\t{y}");
                    }
                    out.push(("trace.tsv", t));
                }
                s.layout.as_ref()
            }
            Results::Sweep(s) => {
                let mut t = String::from("x\tvalue\tstderr\n");
                for p in &s.points {
                    let _ = writeln!(t, "{}\t{}\t{}", p.x, p.value, p.stderr);
                }
                out.push(("sweep.tsv", t));
                None
            }
        };
        if let Some(l) = layout {
            let mut t = String::from("i\tj\tre\tim\n");
            for (i, (re, im)) in l.gram.re.iter().zip(&l.gram.im).enumerate() {
                for (j, (a, b)) in re.iter().zip(im).enumerate() {
                    let _ = writeln!(t, "{i}\t{j}\t{a}\t{b}");
                }
            }
            out.push(("gram.tsv", t));
        }
        out
    }
}

/// Writes each file through a temporary in `dir` and renames it into place.
/// Everything is staged before the first rename.
pub fn write_atomically(dir: &Path, files: &[(&str, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| e.error)?;
    }
    Ok(())
}
