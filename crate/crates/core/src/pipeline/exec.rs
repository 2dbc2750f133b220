//! File-level execution of planned operations.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{
    apply_filters, dump_scores, read_score_file, Deduplicator, FilterRegistry, OverlapFilter,
};
use crate::formats::{write_moses, write_tmx};
use crate::io::{self, AtomicFile};
use crate::model::{Bitext, SamplingSpec};
use crate::pipeline::config::{Op, StepSpec};
use crate::pipeline::ops::{self, Row};
use crate::pipeline::sampling::{materialize, temperature_sizes};
use crate::pipeline::triangulate::triangulate_pairs;
use crate::text::escape_controls;
use crate::xces::{filter_links, parse_document, resolve, AlignmentReader};

/// What a step did, for the run report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub lines_in: usize,
    pub lines_out: usize,
    pub notes: Vec<String>,
}

/// Streams line tuples out of a set of parallel files.
pub struct RowReader {
    files: Vec<(PathBuf, Box<dyn Iterator<Item = std::io::Result<String>>>)>,
    line: usize,
}

impl RowReader {
    pub fn open(paths: &[PathBuf]) -> Result<Self> {
        let files = paths
            .iter()
            .map(|p| {
                Ok((
                    p.clone(),
                    Box::new(io::lines(io::open(p)?)) as Box<dyn Iterator<Item = _>>,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(RowReader { files, line: 0 })
    }
}

impl Iterator for RowReader {
    type Item = Result<Row>;

    fn next(&mut self) -> Option<Result<Row>> {
        let mut row = Vec::with_capacity(self.files.len());
        let mut ended = Vec::new();
        for (path, lines) in &mut self.files {
            match lines.next() {
                Some(Ok(l)) => row.push(l),
                Some(Err(e)) => return Some(Err(Error::Io(e))),
                None => ended.push(path.clone()),
            }
        }
        if ended.len() == self.files.len() {
            return None;
        }
        if !ended.is_empty() {
            let short = ended[0].display().to_string();
            return Some(Err(Error::Invalid(format!(
                "parallel files differ in length: {short} ends after {} lines",
                self.line
            ))));
        }
        self.line += 1;
        Some(Ok(row))
    }
}

/// Runs `f` over the rows of `reader`, stopping at and returning the first
/// read error.
fn with_rows<T>(
    reader: RowReader,
    f: impl FnOnce(&mut dyn Iterator<Item = Row>) -> Result<T>,
) -> Result<T> {
    let mut error = None;
    let mut rows = reader.map_while(|r| match r {
        Ok(row) => Some(row),
        Err(e) => {
            error = Some(e);
            None
        }
    });
    let value = f(&mut rows);
    drop(rows);
    match error {
        Some(e) => Err(e),
        None => value,
    }
}

fn read_rows(paths: &[PathBuf]) -> Result<Vec<Row>> {
    RowReader::open(paths)?.collect()
}

/// Atomic writers for one parallel output dataset.
pub struct RowWriter {
    files: Vec<AtomicFile>,
    written: usize,
}

impl RowWriter {
    pub fn create(paths: &[PathBuf]) -> Result<Self> {
        Ok(RowWriter {
            files: paths
                .iter()
                .map(AtomicFile::create)
                .collect::<std::io::Result<_>>()?,
            written: 0,
        })
    }

    pub fn write(&mut self, row: &[String]) -> Result<()> {
        if row.len() != self.files.len() {
            return Err(Error::Invalid(format!(
                "row has {} sides, output has {} files",
                row.len(),
                self.files.len()
            )));
        }
        for (file, side) in self.files.iter_mut().zip(row) {
            if side.contains(['\n', '\r']) {
                file.write_all(escape_controls(side).as_bytes())?;
            } else {
                file.write_all(side.as_bytes())?;
            }
            file.write_all(b"\n")?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn write_all<'a>(&mut self, rows: impl IntoIterator<Item = &'a Row>) -> Result<()> {
        rows.into_iter().try_for_each(|r| self.write(r))
    }

    pub fn commit(self) -> Result<usize> {
        for file in self.files {
            file.commit()?;
        }
        Ok(self.written)
    }
}

pub struct Context<'a> {
    pub step: &'a StepSpec,
    pub workdir: &'a Path,
}

impl Context<'_> {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn input(&self, i: usize) -> Vec<PathBuf> {
        self.step.inputs[i]
            .files()
            .iter()
            .map(|p| self.path(p))
            .collect()
    }

    fn output(&self, i: usize) -> Vec<PathBuf> {
        self.step.outputs[i]
            .files()
            .iter()
            .map(|p| self.path(p))
            .collect()
    }
}

fn truncation_note(truncated: bool) -> Vec<String> {
    if truncated {
        vec!["requested range reaches past the end of the input".into()]
    } else {
        Vec::new()
    }
}

pub fn execute(op: &Op, ctx: &Context<'_>, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    match op {
        Op::Concatenate => {
            let mut out = RowWriter::create(&ctx.output(0))?;
            let mut lines = 0;
            for i in 0..ctx.step.inputs.len() {
                with_rows(RowReader::open(&ctx.input(i))?, |rows| {
                    for row in rows {
                        lines += 1;
                        out.write(&row)?;
                    }
                    Ok(())
                })?;
            }
            let written = out.commit()?;
            Ok(Outcome {
                lines_in: lines,
                lines_out: written,
                notes: Vec::new(),
            })
        }
        Op::Head(_) | Op::Tail(_) | Op::Slice { .. } | Op::Subset(_) => {
            let mut lines_in = 0;
            let (rows, notes) = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                let mut rows = rows.inspect(|_| lines_in += 1);
                Ok(match *op {
                    Op::Head(n) => {
                        let sel = ops::head(rows.by_ref(), n);
                        rows.for_each(drop);
                        (sel.rows, truncation_note(sel.truncated))
                    }
                    Op::Tail(n) => {
                        let sel = ops::tail(rows, n);
                        (sel.rows, truncation_note(sel.truncated))
                    }
                    Op::Slice { start, end } => {
                        let sel = ops::slice(rows, start, end)?;
                        (sel.rows, truncation_note(sel.truncated))
                    }
                    Op::Subset(size) => (ops::random_subset(rows, size, rng), Vec::new()),
                    _ => unreachable!(),
                })
            })?;
            let mut out = RowWriter::create(&ctx.output(0))?;
            out.write_all(&rows)?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes,
            })
        }
        Op::Split(proportion) => {
            let rows = read_rows(&ctx.input(0))?;
            let lines_in = rows.len();
            let (a, b) = ops::split(rows, *proportion, rng)?;
            let mut first = RowWriter::create(&ctx.output(0))?;
            let mut second = RowWriter::create(&ctx.output(1))?;
            first.write_all(&a)?;
            second.write_all(&b)?;
            let (na, nb) = (first.commit()?, second.commit()?);
            Ok(Outcome {
                lines_in,
                lines_out: na + nb,
                notes: vec![format!("{na} + {nb} lines")],
            })
        }
        Op::Product(mode) => {
            let sides = (0..ctx.step.inputs.len())
                .map(|i| {
                    ctx.input(i)
                        .iter()
                        .map(|p| Ok(io::read_lines(p)?))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let lines_in = sides.first().and_then(|s| s.first()).map_or(0, Vec::len);
            let rows = ops::combine_translations(&sides, *mode, rng)?;
            let mut out = RowWriter::create(&ctx.output(0))?;
            out.write_all(&rows)?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes: Vec::new(),
            })
        }
        Op::Preprocess(steps) => {
            let mut out = RowWriter::create(&ctx.output(0))?;
            let lines_in = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                let mut n = 0;
                for mut row in rows {
                    n += 1;
                    for p in steps {
                        p.apply(&mut row);
                    }
                    out.write(&row)?;
                }
                Ok(n)
            })?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes: Vec::new(),
            })
        }
        Op::Filter(params) => {
            let chain = FilterRegistry::default().build_chain(&params.specs(ctx.workdir))?;
            let mut out = RowWriter::create(&ctx.output(0))?;
            let counts = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                let mut kept = apply_filters(rows, &chain);
                for row in kept.by_ref() {
                    out.write(&row?)?;
                }
                Ok(kept.into_counts())
            })?;
            out.commit()?;
            Ok(Outcome {
                lines_in: counts.seen,
                lines_out: counts.kept,
                notes: counts
                    .by_filter
                    .iter()
                    .map(|(name, n)| format!("{name} rejected {n}"))
                    .collect(),
            })
        }
        Op::Score(params) => {
            let chain = FilterRegistry::default().build_chain(&params.specs(ctx.workdir))?;
            let mut out = AtomicFile::create(&ctx.output(0)[0])?;
            let n = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                dump_scores(rows, &chain, &mut out)
            })?;
            out.commit()?;
            Ok(Outcome {
                lines_in: n,
                lines_out: n,
                notes: Vec::new(),
            })
        }
        Op::Dedup(key) => {
            let mut dedup = Deduplicator::new(key.clone());
            let mut out = RowWriter::create(&ctx.output(0))?;
            let lines_in = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                let mut n = 0;
                for row in rows {
                    n += 1;
                    if dedup.keep(&row) {
                        out.write(&row)?;
                    }
                }
                Ok(n)
            })?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes: vec![format!("{} duplicates removed", dedup.removed())],
            })
        }
        Op::RemoveOverlap(key) => {
            let filter = with_rows(RowReader::open(&ctx.input(1))?, |rows| {
                Ok(OverlapFilter::new(rows, key.clone()))
            })?;
            let mut out = RowWriter::create(&ctx.output(0))?;
            let lines_in = with_rows(RowReader::open(&ctx.input(0))?, |rows| {
                let mut n = 0;
                for row in rows {
                    n += 1;
                    if filter.keep(&row) {
                        out.write(&row)?;
                    }
                }
                Ok(n)
            })?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes: Vec::new(),
            })
        }
        Op::CeRetain(fraction) => {
            let rows = read_rows(&ctx.input(0))?;
            let scores = read_score_file(&ctx.input(1)[0])?;
            let lines_in = rows.len();
            let kept = crate::filters::ce_retain(rows, &scores, *fraction)?;
            let mut out = RowWriter::create(&ctx.output(0))?;
            out.write_all(&kept)?;
            Ok(Outcome {
                lines_in,
                lines_out: out.commit()?,
                notes: Vec::new(),
            })
        }
        Op::Triangulate(mode) => {
            let to_pairs = |rows: Vec<Row>| -> Vec<(String, String)> {
                rows.into_iter()
                    .map(|mut r| {
                        let x = r.pop().unwrap_or_default();
                        (r.pop().unwrap_or_default(), x)
                    })
                    .collect()
            };
            let px = to_pairs(read_rows(&ctx.input(0))?);
            let py = to_pairs(read_rows(&ctx.input(1))?);
            let joined = triangulate_pairs(&px, &py, *mode);
            let mut out = RowWriter::create(&ctx.output(0))?;
            for (x, y) in joined {
                out.write(&[x, y])?;
            }
            Ok(Outcome {
                lines_in: px.len() + py.len(),
                lines_out: out.commit()?,
                notes: Vec::new(),
            })
        }
        Op::Sample {
            alpha,
            max_size,
            pairs,
        } => {
            let corpora = (0..ctx.step.inputs.len())
                .map(|i| read_rows(&ctx.input(i)))
                .collect::<Result<Vec<_>>>()?;
            let sizes = pairs
                .iter()
                .cloned()
                .zip(corpora.iter().map(|c| c.len() as u64))
                .collect();
            let targets = temperature_sizes(&SamplingSpec::new(*alpha, *max_size, sizes)?);
            let mut outcome = Outcome::default();
            for (i, (pair, rows)) in pairs.iter().zip(&corpora).enumerate() {
                let target = targets[pair];
                let sample = materialize(rows, target, rng);
                let mut out = RowWriter::create(&ctx.output(i))?;
                out.write_all(&sample)?;
                outcome.lines_in += rows.len();
                outcome.lines_out += out.commit()?;
                outcome
                    .notes
                    .push(format!("{pair}: {} -> {target}", rows.len()));
            }
            Ok(outcome)
        }
        Op::ReadAlignment {
            src_lang,
            trg_lang,
            root,
            links,
            dangling,
        } => {
            let root = ctx.path(root.as_deref().unwrap_or(Path::new(".")));
            let outputs = ctx.output(0);
            let mut src = AtomicFile::create(&outputs[0])?;
            let mut trg = AtomicFile::create(&outputs[1])?;
            let mut outcome = Outcome::default();
            let (mut filtered, mut skipped_empty, mut skipped_dangling) = (0, 0, 0);
            for group in AlignmentReader::new(io::open(&ctx.input(0)[0])?)? {
                let group = group?;
                let from_path = root.join(&group.from_doc);
                let to_path = root.join(&group.to_doc);
                let from = parse_document(io::open(&from_path)?, &group.from_doc)?;
                let to = parse_document(io::open(&to_path)?, &group.to_doc)?;
                let (bitext, stats) = resolve(&group, &from, &to, src_lang, trg_lang, *dangling)?;
                outcome.lines_in += group.links.len();
                skipped_dangling += stats.skipped_dangling;
                let before = bitext.len();
                let bitext = filter_links(bitext, links);
                filtered += before - bitext.len();
                let counts = write_moses(&bitext, &mut src, &mut trg)?;
                outcome.lines_out += counts.written;
                skipped_empty += counts.skipped_empty;
            }
            src.commit()?;
            trg.commit()?;
            outcome.notes = vec![
                format!("{filtered} links filtered"),
                format!("{skipped_empty} empty links skipped"),
                format!("{skipped_dangling} dangling links skipped"),
            ];
            Ok(outcome)
        }
        Op::Tmx { src_lang, trg_lang } => {
            let rows = read_rows(&ctx.input(0))?;
            let bitext = Bitext::from_pairs(
                src_lang.clone(),
                trg_lang.clone(),
                rows.iter().map(|r| (r[0].as_str(), r[1].as_str())),
            )?;
            let mut out = AtomicFile::create(&ctx.output(0)[0])?;
            let counts = write_tmx(&bitext, &mut out)?;
            out.commit()?;
            Ok(Outcome {
                lines_in: rows.len(),
                lines_out: counts.written,
                notes: vec![
                    format!("{} empty units skipped", counts.skipped_empty),
                    format!("{} duplicate units skipped", counts.skipped_duplicate),
                ],
            })
        }
    }
}
