use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use bitextkit::filters::{self, dump_scores, FilterRegistry, KeyParams};
use bitextkit::pipeline::config::FilterParams;
use bitextkit::pipeline::{
    self, Common, DatasetRef, PipelineConfig, PivotMatch, RowReader, RunOptions, RunReport,
    StepSpec,
};
use bitextkit::{LanguagePairKey, LanguageTag};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use crate::Global;

/// Comma-separated list of line-parallel files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset(pub Vec<PathBuf>);

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let files: Vec<PathBuf> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(PathBuf::from)
            .collect();
        if files.is_empty() {
            return Err("expected one or more comma-separated file names".into());
        }
        Ok(Dataset(files))
    }
}

impl Dataset {
    fn reference(&self) -> DatasetRef {
        DatasetRef::Parallel(self.0.clone())
    }
}

fn refs(sets: &[Dataset]) -> Vec<DatasetRef> {
    sets.iter().map(Dataset::reference).collect()
}

fn finish(g: &Global, report: &RunReport) -> anyhow::Result<()> {
    if !g.quiet {
        eprint!("{}", report.table());
    }
    g.write_report(&serde_json::to_value(report)?)?;
    if let Some(failed) = report.steps.iter().find(|s| s.error.is_some()) {
        bail!(
            "step `{}` failed: {}",
            failed.name,
            failed.error.as_deref().unwrap_or("unknown error")
        );
    }
    if !report.success() {
        bail!("pipeline did not complete");
    }
    Ok(())
}

/// Runs one operation as a single-step pipeline without stamps.
fn run_op(
    g: &Global,
    op: &str,
    inputs: Vec<DatasetRef>,
    outputs: Vec<DatasetRef>,
    params: serde_json::Value,
) -> anyhow::Result<()> {
    let step = StepSpec::new(op, op, inputs, outputs, params)?;
    let config = PipelineConfig {
        common: Common {
            seed: g.seed(),
            workdir: g.workdir(),
            overwrite: true,
        },
        steps: vec![step],
    };
    let report = pipeline::run(
        &config,
        &RunOptions {
            jobs: g.jobs(),
            stateless: true,
        },
    )?;
    finish(g, &report)
}

fn stdin_rows(arity: Option<usize>) -> impl Iterator<Item = anyhow::Result<Vec<String>>> {
    io::stdin()
        .lock()
        .lines()
        .enumerate()
        .map(move |(i, line)| {
            let line = line?;
            let row: Vec<String> = line.split('\t').map(str::to_owned).collect();
            match arity {
                Some(n) if row.len() != n => Err(anyhow!(
                    "stdin line {}: {} columns, expected {n}",
                    i + 1,
                    row.len()
                )),
                _ => Ok(row),
            }
        })
}

/// Collects rows, keeping the first error.
fn collect_rows(
    rows: impl Iterator<Item = anyhow::Result<Vec<String>>>,
) -> anyhow::Result<Vec<Vec<String>>> {
    rows.collect()
}

fn write_rows<'a>(rows: impl IntoIterator<Item = &'a Vec<String>>) -> anyhow::Result<usize> {
    let mut out = BufWriter::new(io::stdout().lock());
    let mut n = 0;
    for row in rows {
        writeln!(out, "{}", row.join("\t"))?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

#[derive(Subcommand, Debug)]
pub enum PipelineCommand {
    /// Run every out-of-date step.
    Run {
        config: PathBuf,
        /// Rerun steps even if their outputs are current.
        #[arg(long)]
        force: bool,
    },
    /// Check a pipeline file without running it.
    Validate { config: PathBuf },
}

fn load_pipeline(g: &Global, path: &Path) -> anyhow::Result<PipelineConfig> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(seed) = g.seed {
        config.common.seed = seed;
    }
    if let Some(dir) = &g.workdir {
        config.common.workdir = dir.clone();
    }
    Ok(config)
}

pub fn pipeline(g: &Global, command: PipelineCommand) -> anyhow::Result<()> {
    match command {
        PipelineCommand::Run { config, force } => {
            let mut config = load_pipeline(g, &config)?;
            config.common.overwrite |= force;
            let report = pipeline::run(
                &config,
                &RunOptions {
                    jobs: g.jobs(),
                    stateless: false,
                },
            )?;
            finish(g, &report)
        }
        PipelineCommand::Validate { config } => {
            let config = load_pipeline(g, &config)?;
            config.validate()?;
            g.note(format!("ok: {} steps", config.steps.len()));
            g.write_report(&json!({ "valid": true, "steps": config.steps.len() }))
        }
    }
}

#[derive(Args, Debug)]
pub struct FilterConfigArgs {
    /// YAML file with a list of filters, or a mapping with `filters` and
    /// optionally `languages`.
    #[arg(long)]
    pub filters: PathBuf,
    /// Language of each side, e.g. `en,fi`.
    #[arg(long, value_delimiter = ',')]
    pub langs: Vec<LanguageTag>,
}

impl FilterConfigArgs {
    fn params(&self, g: &Global) -> anyhow::Result<serde_json::Value> {
        let path = if self.filters.is_absolute() {
            self.filters.clone()
        } else {
            g.workdir().join(&self.filters)
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let yaml: serde_yaml::Value =
            serde_yaml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut value = serde_json::to_value(yaml)?;
        let (filters, languages) = match &mut value {
            serde_json::Value::Array(_) => (value.clone(), None),
            serde_json::Value::Object(map) => (
                map.remove("filters")
                    .ok_or_else(|| anyhow!("{}: no `filters` list", path.display()))?,
                map.remove("languages"),
            ),
            _ => bail!("{}: expected a list or a mapping", path.display()),
        };
        let languages = match (self.langs.is_empty(), languages) {
            (false, _) => serde_json::to_value(&self.langs)?,
            (true, Some(l)) => l,
            (true, None) => bail!("give --langs or a `languages` list in the filter file"),
        };
        Ok(json!({ "languages": languages, "filters": filters }))
    }
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub config: FilterConfigArgs,
    /// Input dataset; tab-separated stdin if omitted.
    #[arg(long, short, requires = "output")]
    pub input: Option<Dataset>,
    /// Output dataset; tab-separated stdout if omitted.
    #[arg(long, short, requires = "input")]
    pub output: Option<Dataset>,
}

pub fn filter(g: &Global, a: FilterArgs) -> anyhow::Result<()> {
    let params = a.config.params(g)?;
    if let (Some(i), Some(o)) = (&a.input, &a.output) {
        return run_op(
            g,
            "filter",
            vec![i.reference()],
            vec![o.reference()],
            params,
        );
    }
    let p: FilterParams = serde_json::from_value(params)?;
    let chain = FilterRegistry::default().build_chain(&p.specs(&g.workdir()))?;
    let mut error = None;
    let rows =
        stdin_rows(Some(p.languages.len())).map_while(|r| r.map_err(|e| error = Some(e)).ok());
    let mut kept = filters::apply_filters(rows, &chain);
    let mut out = BufWriter::new(io::stdout().lock());
    for unit in kept.by_ref() {
        writeln!(out, "{}", unit?.join("\t"))?;
    }
    out.flush()?;
    let counts = kept.into_counts();
    if let Some(e) = error {
        return Err(e);
    }
    let rejected: Vec<String> = counts
        .by_filter
        .iter()
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    g.note(format!(
        "kept {} of {} ({})",
        counts.kept,
        counts.seen,
        rejected.join(", ")
    ));
    g.write_report(&serde_json::to_value(&counts)?)
}

#[derive(Args, Debug)]
pub struct ScoresArgs {
    #[command(flatten)]
    pub config: FilterConfigArgs,
    /// Input dataset; tab-separated stdin if omitted.
    #[arg(long, short)]
    pub input: Option<Dataset>,
    /// JSON lines output; stdout if omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn scores(g: &Global, a: ScoresArgs) -> anyhow::Result<()> {
    let params = a.config.params(g)?;
    if let (Some(i), Some(o)) = (&a.input, &a.output) {
        return run_op(
            g,
            "score",
            vec![i.reference()],
            vec![DatasetRef::File(o.clone())],
            params,
        );
    }
    let p: FilterParams = serde_json::from_value(params)?;
    let workdir = g.workdir();
    let chain = FilterRegistry::default().build_chain(&p.specs(&workdir))?;
    let rows = match &a.input {
        Some(d) => {
            let paths: Vec<PathBuf> = d.0.iter().map(|f| workdir.join(f)).collect();
            RowReader::open(&paths)?
                .map(|r| r.map_err(anyhow::Error::from))
                .collect::<anyhow::Result<Vec<_>>>()?
        }
        None => collect_rows(stdin_rows(Some(p.languages.len())))?,
    };
    let mut out = BufWriter::new(io::stdout().lock());
    let n = dump_scores(rows, &chain, &mut out)?;
    g.note(format!("scored {n} units"));
    g.write_report(&json!({ "scored": n }))
}

#[derive(Args, Debug, Clone)]
pub struct KeyArgs {
    /// Sides that form the key, e.g. `0` or `0,1`; all sides by default.
    #[arg(long, value_delimiter = ',')]
    pub sides: Vec<usize>,
    /// Compare case-insensitively.
    #[arg(long)]
    pub fold_case: bool,
    /// Ignore everything but letters.
    #[arg(long)]
    pub letters_only: bool,
}

impl KeyArgs {
    fn params(&self) -> KeyParams {
        KeyParams {
            sides: (!self.sides.is_empty()).then(|| self.sides.clone()),
            fold_case: self.fold_case,
            letters_only: self.letters_only,
        }
    }
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    #[command(flatten)]
    pub key: KeyArgs,
    /// Input dataset; tab-separated stdin if omitted.
    #[arg(long, short, requires = "output")]
    pub input: Option<Dataset>,
    #[arg(long, short, requires = "input")]
    pub output: Option<Dataset>,
}

pub fn dedup(g: &Global, a: DedupArgs) -> anyhow::Result<()> {
    let params = a.key.params();
    if let (Some(i), Some(o)) = (&a.input, &a.output) {
        return run_op(
            g,
            "dedup",
            vec![i.reference()],
            vec![o.reference()],
            serde_json::to_value(&params)?,
        );
    }
    let mut error = None;
    let mut arity = None;
    let rows = stdin_rows(None).map_while(|r| {
        let checked = r.and_then(|row| match arity {
            None => {
                params.validate(row.len())?;
                arity = Some(row.len());
                Ok(row)
            }
            Some(n) if n != row.len() => bail!("stdin rows have {n} and {} columns", row.len()),
            Some(_) => Ok(row),
        });
        checked.map_err(|e| error = Some(e)).ok()
    });
    let mut out = BufWriter::new(io::stdout().lock());
    let (mut seen, mut kept) = (0usize, 0usize);
    for row in filters::dedup(rows.inspect(|_| seen += 1), &params) {
        writeln!(out, "{}", row.join("\t"))?;
        kept += 1;
    }
    out.flush()?;
    if let Some(e) = error {
        return Err(e);
    }
    g.note(format!("kept {kept} of {seen}"));
    g.write_report(&json!({ "seen": seen, "kept": kept }))
}

#[derive(Args, Debug)]
pub struct OverlapArgs {
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long, short)]
    pub input: Dataset,
    /// Units whose keys must not appear in the output.
    #[arg(long)]
    pub reference: Dataset,
    #[arg(long, short)]
    pub output: Dataset,
}

pub fn overlap(g: &Global, a: OverlapArgs) -> anyhow::Result<()> {
    run_op(
        g,
        "remove_overlap",
        vec![a.input.reference(), a.reference.reference()],
        vec![a.output.reference()],
        serde_json::to_value(a.key.params())?,
    )
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Temperature exponent in [0, 1].
    #[arg(long)]
    pub alpha: f64,
    /// Size given to the largest pair.
    #[arg(long)]
    pub max_size: u64,
    /// Language pair of each input, in order, e.g. `en-fi,fi-de`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pairs: Vec<LanguagePairKey>,
    /// One per pair.
    #[arg(long, short, required = true)]
    pub input: Vec<Dataset>,
    /// One per pair.
    #[arg(long, short, required = true)]
    pub output: Vec<Dataset>,
}

pub fn sample(g: &Global, a: SampleArgs) -> anyhow::Result<()> {
    run_op(
        g,
        "sample",
        refs(&a.input),
        refs(&a.output),
        json!({ "alpha": a.alpha, "max_size": a.max_size, "pairs": a.pairs }),
    )
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Share of units that go to the first output.
    #[arg(long)]
    pub proportion: f64,
    #[arg(long, short)]
    pub input: Dataset,
    /// Exactly two: the sampled part, then the rest.
    #[arg(long, short, num_args = 2, required = true)]
    pub output: Vec<Dataset>,
}

pub fn split(g: &Global, a: SplitArgs) -> anyhow::Result<()> {
    run_op(
        g,
        "split",
        vec![a.input.reference()],
        refs(&a.output),
        json!({ "proportion": a.proportion }),
    )
}

#[derive(Args, Debug)]
pub struct ProductArgs {
    /// One per language, listing its alternative translation files.
    #[arg(long, short, required = true)]
    pub input: Vec<Dataset>,
    /// One file per language.
    #[arg(long, short)]
    pub output: Dataset,
    /// Draw this many combinations per segment instead of all of them.
    #[arg(long)]
    pub sample: Option<usize>,
}

pub fn product(g: &Global, a: ProductArgs) -> anyhow::Result<()> {
    let params = match a.sample {
        Some(k) => json!({ "sample": k }),
        None => json!({}),
    };
    run_op(
        g,
        "product",
        refs(&a.input),
        vec![a.output.reference()],
        params,
    )
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PivotMode {
    Exact,
    Normalized,
}

#[derive(Args, Debug)]
pub struct TriangulateArgs {
    /// Pivot-X dataset, pivot side first.
    #[arg(long)]
    pub left: Dataset,
    /// Pivot-Y dataset, pivot side first.
    #[arg(long)]
    pub right: Dataset,
    /// X-Y output.
    #[arg(long, short)]
    pub output: Dataset,
    #[arg(long, value_enum, default_value = "exact")]
    pub pivot_match: PivotMode,
}

pub fn triangulate(g: &Global, a: TriangulateArgs) -> anyhow::Result<()> {
    let mode = match a.pivot_match {
        PivotMode::Exact => PivotMatch::Exact,
        PivotMode::Normalized => PivotMatch::Normalized,
    };
    run_op(
        g,
        "triangulate",
        vec![a.left.reference(), a.right.reference()],
        vec![a.output.reference()],
        json!({ "pivot_match": mode }),
    )
}

#[derive(Args, Debug)]
pub struct CeRetainArgs {
    /// One score per unit, higher is better.
    #[arg(long)]
    pub scores: PathBuf,
    /// Fraction of units to keep, in (0, 1].
    #[arg(long)]
    pub fraction: f64,
    /// Input dataset; tab-separated stdin if omitted.
    #[arg(long, short, requires = "output")]
    pub input: Option<Dataset>,
    #[arg(long, short, requires = "input")]
    pub output: Option<Dataset>,
}

pub fn ce_retain(g: &Global, a: CeRetainArgs) -> anyhow::Result<()> {
    if let (Some(i), Some(o)) = (&a.input, &a.output) {
        return run_op(
            g,
            "ce_retain",
            vec![i.reference(), DatasetRef::File(a.scores.clone())],
            vec![o.reference()],
            json!({ "fraction": a.fraction }),
        );
    }
    let workdir = g.workdir();
    let scores_path = if a.scores.is_absolute() {
        a.scores.clone()
    } else {
        workdir.join(&a.scores)
    };
    let scores = filters::read_score_file(&scores_path)?;
    let rows = collect_rows(stdin_rows(None))?;
    let seen = rows.len();
    let kept = filters::ce_retain(rows, &scores, a.fraction)?;
    let n = write_rows(&kept)?;
    g.note(format!("kept {n} of {seen}"));
    g.write_report(&json!({ "seen": seen, "kept": n }))
}
