use std::path::PathBuf;
use std::time::Duration;

use anyhow::bail;
use bitextkit::catalog::{
    Catalog, CatalogQuery, CorpusRecord, HttpTransport, ResourceKind, Scope,
    DEFAULT_DOWNLOAD_LIMIT, DEFAULT_ENDPOINT,
};
use bitextkit::LanguageTag;
use clap::{Args, Subcommand, ValueEnum};

use crate::Global;

#[derive(Args, Debug, Clone)]
pub struct Endpoint {
    /// Catalog API base URL.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    /// Minimum pause between requests, in milliseconds.
    #[arg(long, default_value_t = 100)]
    pub min_interval_ms: u64,
}

impl Endpoint {
    fn catalog(&self) -> anyhow::Result<Catalog<HttpTransport>> {
        Ok(Catalog::http(&self.endpoint)?
            .with_min_interval(Duration::from_millis(self.min_interval_ms)))
    }
}

#[derive(Args, Debug, Clone)]
pub struct QueryArgs {
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub source: Option<LanguageTag>,
    #[arg(long)]
    pub target: Option<LanguageTag>,
    #[arg(long)]
    pub preprocessing: Option<String>,
    #[arg(long)]
    pub version: Option<String>,
    /// Only the latest release of each corpus.
    #[arg(long)]
    pub latest: bool,
    #[command(flatten)]
    pub endpoint: Endpoint,
}

impl QueryArgs {
    fn query(&self) -> CatalogQuery {
        CatalogQuery {
            corpus: self.corpus.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
            preprocessing: self.preprocessing.clone(),
            version: self.version.clone(),
            latest_only: self.latest,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum CatalogCommand {
    /// List records matching the given fields.
    Query {
        #[command(flatten)]
        query: QueryArgs,
        /// Print records as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// List corpus or language names.
    List {
        #[arg(value_enum)]
        kind: Kind,
        /// Only resources of this corpus.
        #[arg(long, conflicts_with = "source")]
        corpus: Option<String>,
        /// Only resources with this source language.
        #[arg(long)]
        source: Option<LanguageTag>,
        #[command(flatten)]
        endpoint: Endpoint,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Kind {
    Corpora,
    Languages,
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Target directory; defaults to the working directory.
    #[arg(long)]
    pub dest: Option<PathBuf>,
    /// Start over instead of resuming partial downloads.
    #[arg(long)]
    pub no_resume: bool,
    /// Parallel downloads.
    #[arg(long, default_value_t = DEFAULT_DOWNLOAD_LIMIT)]
    pub limit: usize,
}

fn count(n: Option<u64>) -> String {
    n.map_or_else(|| "-".into(), |n| n.to_string())
}

pub fn table(records: &[CorpusRecord]) -> String {
    let header = [
        "corpus",
        "version",
        "preprocessing",
        "pair",
        "latest",
        "alignment_pairs",
        "source_tokens",
        "target_tokens",
        "size",
        "url",
    ];
    let rows: Vec<[String; 10]> = records
        .iter()
        .map(|r| {
            let pair = match &r.target {
                Some(t) => format!("{}-{t}", r.source),
                None => r.source.to_string(),
            };
            [
                r.corpus.clone(),
                r.version.clone(),
                r.preprocessing.clone(),
                pair,
                r.latest.to_string(),
                count(r.alignment_pairs),
                count(r.source_tokens),
                count(r.target_tokens),
                r.size.to_string(),
                r.url.clone(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  "));
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

pub fn run(g: &Global, command: CatalogCommand) -> anyhow::Result<()> {
    match command {
        CatalogCommand::Query { query, json } => {
            let result = query.endpoint.catalog()?.query(&query.query())?;
            if result.skipped > 0 {
                g.note(format!("skipped {} malformed records", result.skipped));
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&result.records)?);
            } else {
                print!("{}", table(&result.records));
            }
            g.write_report(&serde_json::json!({
                "records": result.records.len(),
                "skipped": result.skipped,
            }))
        }
        CatalogCommand::List {
            kind,
            corpus,
            source,
            endpoint,
        } => {
            let kind = match kind {
                Kind::Corpora => ResourceKind::Corpora,
                Kind::Languages => ResourceKind::Languages,
            };
            let scope = match (corpus, source) {
                (Some(c), _) => Some(Scope::Corpus(c)),
                (None, Some(s)) => Some(Scope::Source(s)),
                (None, None) => None,
            };
            let names = endpoint.catalog()?.list_resources(kind, scope.as_ref())?;
            for name in &names {
                println!("{name}");
            }
            g.write_report(&serde_json::json!({ "items": names.len() }))
        }
    }
}

pub fn fetch(g: &Global, args: FetchArgs) -> anyhow::Result<()> {
    let query = args.query.query();
    if query.is_empty() {
        bail!("refusing to download the whole catalog; give at least one query field");
    }
    let catalog = args
        .query
        .endpoint
        .catalog()?
        .with_download_limit(args.limit);
    let records = catalog.query(&query)?.records;
    if records.is_empty() {
        bail!("no catalog records match");
    }
    let dest = args.dest.unwrap_or_else(|| g.workdir());
    let results = catalog.download_all(&records, &dest, !args.no_resume);
    let mut failed = 0;
    let mut files = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(path) => {
                println!("{}", path.display());
                files.push(path.display().to_string());
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", record.url);
            }
        }
    }
    g.write_report(&serde_json::json!({ "downloaded": files, "failed": failed }))?;
    if failed > 0 {
        bail!("{failed} of {} downloads failed", records.len());
    }
    Ok(())
}
