//! Declarative corpus pipelines.
//!
//! A pipeline is a YAML file with a `common` section and an ordered list of
//! `steps`. Each step names an operation, its input and output datasets
//! (paths relative to the working directory; a list of paths is one set of
//! line-parallel files) and operation parameters:
//!
//! ```yaml
//! common: {seed: 7, workdir: data}
//! steps:
//!   - name: join
//!     op: concatenate
//!     inputs: [[a.en, a.fi], [b.en, b.fi]]
//!     outputs: [[all.en, all.fi]]
//! ```
//!
//! Steps run in dependency order. Outputs are written atomically, and a step
//! whose outputs are newer than its inputs and whose definition has not
//! changed is skipped on the next run.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod config;
mod exec;
pub mod ops;
pub mod sampling;
pub mod triangulate;

pub use config::{Common, DatasetRef, Op, PipelineConfig, Plan, StepSpec, OPERATIONS};
pub use exec::{RowReader, RowWriter};
pub use sampling::{materialize, temperature_sizes};
pub use triangulate::{triangulate, triangulate_pairs, PivotMatch};

const STATE_DIR: &str = ".bitextkit";

/// Random generator for one step, derived from the global seed and the step
/// name only, so adding or removing other steps does not change it.
pub fn step_rng(seed: u64, step: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(step.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    Done,
    Skipped,
    Failed,
    /// Not run because a step it depends on failed.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub name: String,
    pub op: String,
    pub status: StepStatus,
    pub lines_in: usize,
    pub lines_out: usize,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub steps: Vec<StepReport>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.steps
            .iter()
            .all(|s| matches!(s.status, StepStatus::Done | StepStatus::Skipped))
    }

    pub fn step(&self, name: &str) -> Option<&StepReport> {
        self.steps.iter().find(|s| s.name == name)
    }

    /// Plain-text table, one row per step.
    pub fn table(&self) -> String {
        let width = self
            .steps
            .iter()
            .map(|s| s.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut out = format!(
            "{:<width$}  {:<14}  {:<7}  {:>10}  {:>10}  {:>8}\n",
            "step", "op", "status", "in", "out", "seconds"
        );
        for s in &self.steps {
            let status = format!("{:?}", s.status).to_lowercase();
            let _ = writeln!(
                out,
                "{:<width$}  {:<14}  {:<7}  {:>10}  {:>10}  {:>8.2}",
                s.name, s.op, status, s.lines_in, s.lines_out, s.seconds
            );
            for note in &s.notes {
                let _ = writeln!(out, "{:<width$}    {note}", "");
            }
            if let Some(e) = &s.error {
                let _ = writeln!(out, "{:<width$}    error: {e}", "");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Number of independent steps allowed to run at once; 0 or 1 is sequential.
    pub jobs: usize,
    /// Always run every step and keep no stamps.
    pub stateless: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    fingerprint: String,
    lines_in: usize,
    lines_out: usize,
    notes: Vec<String>,
}

fn fingerprint(seed: u64, step: &StepSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(serde_json::to_vec(step).expect("step specs serialize"));
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn mtime(path: &Path) -> Option<SystemTime> {
    fs::metadata(path).and_then(|m| m.modified()).ok()
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    plans: Vec<Plan>,
    workdir: PathBuf,
    stateless: bool,
}

impl Runner<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn stamp_path(&self, step: &StepSpec) -> PathBuf {
        self.workdir
            .join(STATE_DIR)
            .join(format!("{}.stamp", step.name))
    }

    fn check_inputs(&self) -> Result<()> {
        let mut produced: HashSet<&Path> = HashSet::new();
        for step in &self.config.steps {
            for input in step.input_files() {
                if !produced.contains(input.as_path()) && !self.path(input).exists() {
                    return Err(Error::Validation {
                        step: step.name.clone(),
                        message: format!("input `{}` does not exist", input.display()),
                    });
                }
            }
            produced.extend(step.output_files().map(PathBuf::as_path));
        }
        Ok(())
    }

    fn up_to_date(&self, step: &StepSpec) -> Option<Stamp> {
        if self.config.common.overwrite {
            return None;
        }
        let stamp: Stamp = serde_json::from_slice(&fs::read(self.stamp_path(step)).ok()?).ok()?;
        if stamp.fingerprint != fingerprint(self.config.common.seed, step) {
            return None;
        }
        let oldest_output = step
            .output_files()
            .map(|p| mtime(&self.path(p)))
            .collect::<Option<Vec<_>>>()?
            .into_iter()
            .min();
        let newest_input = step
            .input_files()
            .map(|p| mtime(&self.path(p)))
            .collect::<Option<Vec<_>>>()?
            .into_iter()
            .max();
        match (oldest_output, newest_input) {
            (Some(out), Some(inp)) if out < inp => None,
            _ => Some(stamp),
        }
    }

    fn write_stamp(&self, step: &StepSpec, outcome: &exec::Outcome) -> Result<()> {
        let stamp = Stamp {
            fingerprint: fingerprint(self.config.common.seed, step),
            lines_in: outcome.lines_in,
            lines_out: outcome.lines_out,
            notes: outcome.notes.clone(),
        };
        let mut file = crate::io::AtomicFile::create(self.stamp_path(step))?;
        serde_json::to_writer(&mut file, &stamp)?;
        file.commit()?;
        Ok(())
    }

    fn run_step(&self, index: usize, force: bool) -> StepReport {
        let step = &self.config.steps[index];
        let start = Instant::now();
        let mut report = StepReport {
            name: step.name.clone(),
            op: step.op.clone(),
            status: StepStatus::Done,
            lines_in: 0,
            lines_out: 0,
            seconds: 0.0,
            notes: Vec::new(),
            error: None,
        };
        if !force && !self.stateless {
            if let Some(stamp) = self.up_to_date(step) {
                log::info!("step `{}` is up to date", step.name);
                report.status = StepStatus::Skipped;
                report.lines_in = stamp.lines_in;
                report.lines_out = stamp.lines_out;
                report.notes = stamp.notes;
                return report;
            }
        }
        log::info!("running step `{}` ({})", step.name, step.op);
        if !self.stateless {
            let _ = fs::remove_file(self.stamp_path(step));
        }
        let ctx = exec::Context {
            step,
            workdir: &self.workdir,
        };
        let mut rng = step_rng(self.config.common.seed, &step.name);
        let result = exec::execute(&self.plans[index].op, &ctx, &mut rng).and_then(|outcome| {
            if !self.stateless {
                self.write_stamp(step, &outcome)?;
            }
            Ok(outcome)
        });
        report.seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(outcome) => {
                report.lines_in = outcome.lines_in;
                report.lines_out = outcome.lines_out;
                report.notes = outcome.notes;
            }
            Err(e) => {
                log::error!("step `{}` failed: {e}", step.name);
                report.status = StepStatus::Failed;
                report.error = Some(e.to_string());
            }
        }
        report
    }
}

/// Validates `config`, checks that external inputs exist and runs all steps.
///
/// Validation problems are returned as errors before anything runs. Step
/// failures are recorded in the report: dependents of a failed step are
/// marked blocked while independent steps still run.
pub fn run(config: &PipelineConfig, options: &RunOptions) -> Result<RunReport> {
    let plans = config.validate()?;
    let runner = Runner {
        config,
        plans,
        workdir: config.common.workdir.clone(),
        stateless: options.stateless,
    };
    runner.check_inputs()?;

    let n = config.steps.len();
    let mut level = vec![0usize; n];
    for i in 0..n {
        level[i] = runner.plans[i]
            .depends_on
            .iter()
            .map(|&d| level[d] + 1)
            .max()
            .unwrap_or(0);
    }
    let mut reports: Vec<Option<StepReport>> = vec![None; n];
    let jobs = options.jobs.max(1);
    let max_level = level.iter().copied().max().unwrap_or(0);
    for current in 0..=max_level.min(n) {
        let mut ready = Vec::new();
        for i in (0..n).filter(|&i| level[i] == current) {
            let deps = &runner.plans[i].depends_on;
            let blocked = deps.iter().any(|&d| {
                matches!(
                    reports[d].as_ref().map(|r| r.status),
                    Some(StepStatus::Failed | StepStatus::Blocked)
                )
            });
            if blocked {
                let step = &config.steps[i];
                reports[i] = Some(StepReport {
                    name: step.name.clone(),
                    op: step.op.clone(),
                    status: StepStatus::Blocked,
                    lines_in: 0,
                    lines_out: 0,
                    seconds: 0.0,
                    notes: Vec::new(),
                    error: None,
                });
                continue;
            }
            let force = deps
                .iter()
                .any(|&d| reports[d].as_ref().map(|r| r.status) == Some(StepStatus::Done));
            ready.push((i, force));
        }
        for chunk in ready.chunks(jobs) {
            if chunk.len() == 1 {
                let (i, force) = chunk[0];
                reports[i] = Some(runner.run_step(i, force));
                continue;
            }
            let done: Vec<(usize, StepReport)> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&(i, force)| {
                        let runner = &runner;
                        scope.spawn(move || (i, runner.run_step(i, force)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("pipeline worker panicked"))
                    .collect()
            });
            for (i, report) in done {
                reports[i] = Some(report);
            }
        }
    }
    Ok(RunReport {
        steps: reports
            .into_iter()
            .map(|r| r.expect("every step visited"))
            .collect(),
    })
}
