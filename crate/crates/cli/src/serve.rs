use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::bail;
use bitextkit::serve::{
    Cached, DictionaryBackend, LocalService, RemoteTranslator, ResponseCache, Router, Server,
    ServiceConfig, Translator,
};
use bitextkit::LanguageTag;
use clap::Args;

use crate::Global;

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Route requests to backends listed in this JSON file.
    #[arg(long, conflicts_with = "dictionary")]
    pub routes: Option<PathBuf>,
    /// Serve a word-for-word dictionary (`source<TAB>target` lines).
    #[arg(long, requires_all = ["source", "target"])]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<LanguageTag>,
    #[arg(long)]
    pub target: Option<LanguageTag>,
    /// Split dictionary input into subword pieces marked with U+2581.
    #[arg(long)]
    pub spm: bool,
    /// Address for line-delimited JSON connections.
    #[arg(long)]
    pub duplex: Option<SocketAddr>,
    /// Address for HTTP (`POST /translate`, `GET /health`).
    #[arg(long)]
    pub http: Option<SocketAddr>,
    /// Response cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Maximum cached responses; unbounded if omitted.
    #[arg(long, requires = "cache")]
    pub cache_capacity: Option<usize>,
    /// Backend timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

fn with_cache(
    inner: impl Translator + 'static,
    cache: Option<ResponseCache>,
) -> Arc<dyn Translator> {
    match cache {
        Some(c) => Arc::new(Cached::new(inner, c)),
        None => Arc::new(inner),
    }
}

pub fn run(g: &Global, a: ServeArgs) -> anyhow::Result<()> {
    if a.duplex.is_none() && a.http.is_none() {
        bail!("give --duplex and/or --http");
    }
    let cache = a
        .cache
        .as_ref()
        .map(|p| ResponseCache::open_with_capacity(p, a.cache_capacity))
        .transpose()?;
    let translator = match (&a.routes, &a.dictionary) {
        (Some(routes), _) => {
            let config = ServiceConfig::load(routes)?;
            let remote = RemoteTranslator::new(Duration::from_secs(a.timeout));
            with_cache(Router::new(config, remote), cache)
        }
        (None, Some(dict)) => {
            let (source, target) = (
                a.source.clone().expect("required"),
                a.target.clone().expect("required"),
            );
            let backend = DictionaryBackend::load(dict, source, target, a.spm)?;
            let name = a
                .duplex
                .or(a.http)
                .map(|s| s.to_string())
                .unwrap_or_default();
            with_cache(LocalService::new(backend, name), cache)
        }
        (None, None) => bail!("give --routes or --dictionary"),
    };
    let routes: Vec<String> = translator
        .routes()
        .iter()
        .map(|(s, t)| format!("{s}-{t}"))
        .collect();
    let handle = Server::new(translator).start(a.duplex, a.http)?;
    if let Some(addr) = handle.duplex_addr {
        g.note(format!("duplex listening on {addr}"));
    }
    if let Some(addr) = handle.http_addr {
        g.note(format!("http listening on {addr}"));
    }
    g.note(format!("pairs: {}", routes.join(", ")));
    handle.wait();
    Ok(())
}
