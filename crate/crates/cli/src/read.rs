use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use bitextkit::formats::{write_moses, write_moses_tsv, write_tmx};
use bitextkit::xces::{
    filter_links, parse_document, parse_shapes, resolve, AlignmentReader, Bound,
    CertaintyPredicate, CorpusDocument, DanglingIds, LinkFilter,
};
use bitextkit::{io as kio, Bitext, LanguageTag};
use clap::{Args, ValueEnum};

use crate::Global;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Moses,
    Tmx,
    /// `source<TAB>target` lines.
    Tsv,
}

#[derive(Args, Debug)]
pub struct ReadArgs {
    /// XCES alignment file (plain or gzipped).
    #[arg(long)]
    pub alignment: PathBuf,
    /// Source document, instead of each link group's `fromDoc`.
    #[arg(long)]
    pub src_doc: Option<PathBuf>,
    /// Target document, instead of each link group's `toDoc`.
    #[arg(long)]
    pub trg_doc: Option<PathBuf>,
    /// Directory that `fromDoc`/`toDoc` paths are relative to.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Defaults to the first path component of `fromDoc`.
    #[arg(long)]
    pub src_lang: Option<LanguageTag>,
    /// Defaults to the first path component of `toDoc`.
    #[arg(long)]
    pub trg_lang: Option<LanguageTag>,
    #[arg(long, value_enum, default_value = "moses")]
    pub format: Format,
    /// Moses source file; default `<src>-<trg>.<src>`.
    #[arg(long)]
    pub src_out: Option<PathBuf>,
    /// Moses target file; default `<src>-<trg>.<trg>`.
    #[arg(long)]
    pub trg_out: Option<PathBuf>,
    /// TMX or TSV output; default stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Keep only links with one sentence on each side.
    #[arg(long, conflicts_with = "shapes")]
    pub one_to_one: bool,
    /// Allowed link shapes, e.g. `1-1,2-1`.
    #[arg(long)]
    pub shapes: Option<String>,
    /// Keep links with certainty at or above this value.
    #[arg(long, conflicts_with = "max_certainty")]
    pub min_certainty: Option<f64>,
    /// Keep links with certainty at or below this value.
    #[arg(long)]
    pub max_certainty: Option<f64>,
    /// Drop links pointing at missing sentences instead of failing.
    #[arg(long)]
    pub skip_dangling: bool,
}

fn lang_of(doc: &str) -> anyhow::Result<LanguageTag> {
    let first = doc.split(['/', '\\']).find(|p| !p.is_empty()).unwrap_or("");
    first
        .parse()
        .map_err(|_| anyhow!("cannot infer a language from `{doc}`; pass --src-lang/--trg-lang"))
}

struct DocCache {
    path: Option<PathBuf>,
    doc: Option<CorpusDocument>,
}

impl DocCache {
    fn get(&mut self, path: &Path) -> anyhow::Result<&CorpusDocument> {
        if self.path.as_deref() != Some(path) {
            let reader = kio::open(path).with_context(|| format!("opening {}", path.display()))?;
            self.doc = Some(parse_document(reader, &path.display().to_string())?);
            self.path = Some(path.to_path_buf());
        }
        Ok(self.doc.as_ref().expect("document loaded"))
    }
}

pub fn run(g: &Global, a: ReadArgs) -> anyhow::Result<()> {
    let workdir = g.workdir();
    let at = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            workdir.join(p)
        }
    };
    let root = at(a.root.as_deref().unwrap_or(Path::new(".")));
    let links = LinkFilter {
        shapes: match (&a.shapes, a.one_to_one) {
            (Some(s), _) => Some(parse_shapes(s)?),
            (None, true) => Some(vec![(1, 1)]),
            (None, false) => None,
        },
        certainty: match (a.min_certainty, a.max_certainty) {
            (Some(t), _) => Some(CertaintyPredicate {
                threshold: t,
                bound: Bound::Min,
            }),
            (None, Some(t)) => Some(CertaintyPredicate {
                threshold: t,
                bound: Bound::Max,
            }),
            (None, None) => None,
        },
    };
    let dangling = if a.skip_dangling {
        DanglingIds::Skip
    } else {
        DanglingIds::Error
    };

    let alignment = at(&a.alignment);
    let reader =
        kio::open(&alignment).with_context(|| format!("opening {}", alignment.display()))?;
    let mut from_cache = DocCache {
        path: None,
        doc: None,
    };
    let mut to_cache = DocCache {
        path: None,
        doc: None,
    };
    let mut all: Option<Bitext> = None;
    let (mut groups, mut links_in, mut filtered, mut dangling_skipped) = (0, 0, 0, 0);
    for group in AlignmentReader::new(reader)? {
        let group = group?;
        groups += 1;
        let src_lang = match &a.src_lang {
            Some(l) => l.clone(),
            None => lang_of(&group.from_doc)?,
        };
        let trg_lang = match &a.trg_lang {
            Some(l) => l.clone(),
            None => lang_of(&group.to_doc)?,
        };
        let from_path = a
            .src_doc
            .as_deref()
            .map(at)
            .unwrap_or_else(|| root.join(&group.from_doc));
        let to_path = a
            .trg_doc
            .as_deref()
            .map(at)
            .unwrap_or_else(|| root.join(&group.to_doc));
        let from = from_cache.get(&from_path)?;
        let to = to_cache.get(&to_path)?;
        let (bitext, stats) = resolve(&group, from, to, &src_lang, &trg_lang, dangling)?;
        links_in += group.links.len();
        dangling_skipped += stats.skipped_dangling;
        let before = bitext.len();
        let bitext = filter_links(bitext, &links);
        filtered += before - bitext.len();
        match &mut all {
            None => all = Some(bitext),
            Some(acc) => {
                if acc.src_lang() != bitext.src_lang() || acc.trg_lang() != bitext.trg_lang() {
                    bail!("link groups mix language pairs");
                }
                for unit in bitext.into_units() {
                    acc.push(unit)?;
                }
            }
        }
    }
    let Some(bitext) = all else {
        bail!("{} contains no link groups", alignment.display());
    };

    let (written, skipped_empty, skipped_duplicate) = match a.format {
        Format::Moses => {
            let pair = format!("{}-{}", bitext.src_lang(), bitext.trg_lang());
            let src_out = at(&a
                .src_out
                .clone()
                .unwrap_or_else(|| format!("{pair}.{}", bitext.src_lang()).into()));
            let trg_out = at(&a
                .trg_out
                .clone()
                .unwrap_or_else(|| format!("{pair}.{}", bitext.trg_lang()).into()));
            let mut src = kio::AtomicFile::create(&src_out)?;
            let mut trg = kio::AtomicFile::create(&trg_out)?;
            let counts = write_moses(&bitext, &mut src, &mut trg)?;
            src.commit()?;
            trg.commit()?;
            g.note(format!(
                "wrote {} and {}",
                src_out.display(),
                trg_out.display()
            ));
            (counts.written, counts.skipped_empty, 0)
        }
        Format::Tmx | Format::Tsv => {
            let mut sink: Box<dyn Write> = match &a.output {
                Some(p) => Box::new(BufWriter::new(File::create(at(p))?)),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            let out = if a.format == Format::Tmx {
                let c = write_tmx(&bitext, &mut sink)?;
                (c.written, c.skipped_empty, c.skipped_duplicate)
            } else {
                let c = write_moses_tsv(&bitext, &mut sink)?;
                (c.written, c.skipped_empty, 0)
            };
            sink.flush()?;
            out
        }
    };
    g.note(format!(
        "{groups} link groups, {links_in} links: {written} written, {filtered} filtered, \
         {skipped_empty} empty, {skipped_duplicate} duplicate, {dangling_skipped} dangling"
    ));
    g.write_report(&serde_json::json!({
        "groups": groups,
        "links": links_in,
        "written": written,
        "filtered": filtered,
        "skipped_empty": skipped_empty,
        "skipped_duplicate": skipped_duplicate,
        "skipped_dangling": dangling_skipped,
    }))
}
