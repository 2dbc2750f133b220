//! Client for the OPUS dataset catalog API.
//!
//! All requests go through a [`Transport`], so the client can be exercised
//! against local fixtures. [`HttpTransport`] is the real implementation.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::Url;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LanguageTag;

pub const DEFAULT_ENDPOINT: &str = "https://opus.nlpl.eu/opusapi/";
pub const DEFAULT_MIN_INTERVAL: Duration = Duration::from_millis(100);
pub const DEFAULT_DOWNLOAD_LIMIT: usize = 4;

/// One catalog entry. `size` is stored as served; the API does not document
/// its unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub corpus: String,
    pub version: String,
    #[serde(deserialize_with = "boolish")]
    pub latest: bool,
    pub preprocessing: String,
    pub source: LanguageTag,
    #[serde(default, deserialize_with = "optional_tag")]
    pub target: Option<LanguageTag>,
    pub url: String,
    #[serde(deserialize_with = "count")]
    pub size: u64,
    #[serde(default, deserialize_with = "optional_count")]
    pub documents: Option<u64>,
    #[serde(default, deserialize_with = "optional_count")]
    pub alignment_pairs: Option<u64>,
    #[serde(default, deserialize_with = "optional_count")]
    pub source_tokens: Option<u64>,
    #[serde(default, deserialize_with = "optional_count")]
    pub target_tokens: Option<u64>,
    #[serde(deserialize_with = "count")]
    pub id: u64,
}

impl CorpusRecord {
    fn check(&self) -> Result<()> {
        match Url::parse(&self.url) {
            Ok(u) if !u.cannot_be_a_base() => Ok(()),
            _ => Err(Error::Invalid(format!(
                "record {}: url `{}` is not absolute",
                self.id, self.url
            ))),
        }
    }

    /// `{corpus}_{version}_{preprocessing}_{source}[-{target}].{ext}`, where
    /// `ext` is everything after the first dot of the URL's file name.
    pub fn file_name(&self) -> String {
        let last = self.url.rsplit('/').next().unwrap_or("");
        let last = last.split(['?', '#']).next().unwrap_or("");
        let ext = last.split_once('.').map_or("dat", |(_, e)| e);
        let langs = match &self.target {
            Some(t) => format!("{}-{t}", self.source),
            None => self.source.to_string(),
        };
        format!(
            "{}_{}_{}_{langs}.{ext}",
            self.corpus, self.version, self.preprocessing
        )
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Loose {
    Bool(bool),
    Int(u64),
    Float(f64),
    Str(String),
    Null,
}

fn boolish<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    match Loose::deserialize(d)? {
        Loose::Bool(b) => Ok(b),
        Loose::Int(0) => Ok(false),
        Loose::Int(1) => Ok(true),
        Loose::Str(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            _ => Err(de::Error::custom(format!("`{s}` is not a boolean"))),
        },
        _ => Err(de::Error::custom("expected a boolean")),
    }
}

fn loose_count<E: de::Error>(value: Loose) -> std::result::Result<Option<u64>, E> {
    match value {
        Loose::Int(n) => Ok(Some(n)),
        Loose::Float(f) if f >= 0.0 && f.fract() == 0.0 => Ok(Some(f as u64)),
        Loose::Str(s) if s.trim().is_empty() => Ok(None),
        Loose::Str(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| E::custom(format!("`{s}` is not a count"))),
        Loose::Null => Ok(None),
        _ => Err(E::custom("expected a non-negative integer")),
    }
}

fn count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    loose_count(Loose::deserialize(d)?)?.ok_or_else(|| de::Error::custom("missing count"))
}

fn optional_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    loose_count(Loose::deserialize(d)?)
}

fn optional_tag<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<LanguageTag>, D::Error> {
    match Option::<String>::deserialize(d)? {
        None => Ok(None),
        Some(s) if s.is_empty() => Ok(None),
        Some(s) => s.parse().map(Some).map_err(de::Error::custom),
    }
}

/// Records of one query plus the number of entries that could not be parsed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryResult {
    pub records: Vec<CorpusRecord>,
    pub skipped: usize,
}

/// Parses an API response body with a top-level `corpora` array of records.
pub fn parse_records(body: &[u8]) -> Result<QueryResult> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    let items = value
        .get("corpora")
        .and_then(|c| c.as_array())
        .ok_or_else(|| Error::Protocol("response has no `corpora` array".into()))?;
    let mut result = QueryResult::default();
    for item in items {
        match CorpusRecord::deserialize(item)
            .map_err(|e| Error::Invalid(e.to_string()))
            .and_then(|r| r.check().map(|_| r))
        {
            Ok(record) => result.records.push(record),
            Err(e) => {
                log::warn!("skipping catalog record: {e}");
                result.skipped += 1;
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogQuery {
    pub corpus: Option<String>,
    pub source: Option<LanguageTag>,
    pub target: Option<LanguageTag>,
    pub preprocessing: Option<String>,
    pub version: Option<String>,
    pub latest_only: bool,
}

impl CatalogQuery {
    pub fn is_empty(&self) -> bool {
        self.corpus.is_none()
            && self.source.is_none()
            && self.target.is_none()
            && self.preprocessing.is_none()
            && self.version.is_none()
            && !self.latest_only
    }

    /// Query string parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        let mut params = Vec::new();
        if let Some(c) = &self.corpus {
            params.push(("corpus", c.clone()));
        }
        if let Some(s) = &self.source {
            params.push(("source", s.to_string()));
        }
        if let Some(t) = &self.target {
            params.push(("target", t.to_string()));
        }
        if let Some(p) = &self.preprocessing {
            params.push(("preprocessing", p.clone()));
        }
        if let Some(v) = &self.version {
            params.push(("version", v.clone()));
        }
        if self.latest_only {
            params.push(("latest", "True".into()));
        }
        params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Corpora,
    Languages,
}

impl ResourceKind {
    fn key(self) -> &'static str {
        match self {
            ResourceKind::Corpora => "corpora",
            ResourceKind::Languages => "languages",
        }
    }
}

/// Restricts a resource listing to one corpus or one source language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Corpus(String),
    Source(LanguageTag),
}

/// Parses a listing response: the array under `kind`'s key, sorted and unique.
pub fn parse_listing(body: &[u8], kind: ResourceKind) -> Result<Vec<String>> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    let items = value
        .get(kind.key())
        .and_then(|c| c.as_array())
        .ok_or_else(|| Error::Protocol(format!("response has no `{}` array", kind.key())))?;
    let mut names: Vec<String> = items
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::Protocol(format!("non-string entry {v} in `{}`", kind.key())))
        })
        .collect::<Result<_>>()?;
    names.sort();
    names.dedup();
    Ok(names)
}

/// A response from a [`Transport`].
pub struct Response {
    pub status: u16,
    /// Length of `body` when the server announced it.
    pub content_length: Option<u64>,
    pub body: Box<dyn Read + Send>,
}

impl Response {
    pub fn bytes(mut self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.body
            .read_to_end(&mut buf)
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(buf)
    }
}

pub trait Transport: Send + Sync {
    /// GET `url`; with `range_from`, ask for the bytes from that offset on.
    fn get(&self, url: &str, range_from: Option<u64>) -> Result<Response>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn get(&self, url: &str, range_from: Option<u64>) -> Result<Response> {
        (**self).get(url, range_from)
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!(
                env!("CARGO_PKG_NAME"),
                "/",
                env!("CARGO_PKG_VERSION")
            ))
            .connect_timeout(Duration::from_secs(30))
            .timeout(None)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, range_from: Option<u64>) -> Result<Response> {
        let mut request = self.client.get(url);
        if let Some(offset) = range_from {
            request = request.header(reqwest::header::RANGE, format!("bytes={offset}-"));
        }
        let response = request
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Response {
            status: response.status().as_u16(),
            content_length: response.content_length(),
            body: Box::new(response),
        })
    }
}

/// Catalog client with request spacing and a cap on parallel downloads.
pub struct Catalog<T = HttpTransport> {
    transport: T,
    endpoint: String,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
    download_limit: usize,
}

impl Catalog<HttpTransport> {
    pub fn http(endpoint: &str) -> Result<Self> {
        Ok(Catalog::new(HttpTransport::new()?, endpoint))
    }
}

impl<T: Transport> Catalog<T> {
    pub fn new(transport: T, endpoint: &str) -> Self {
        Catalog {
            transport,
            endpoint: endpoint.to_owned(),
            min_interval: DEFAULT_MIN_INTERVAL,
            last_request: Mutex::new(None),
            download_limit: DEFAULT_DOWNLOAD_LIMIT,
        }
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn with_download_limit(mut self, limit: usize) -> Self {
        self.download_limit = limit.max(1);
        self
    }

    fn get(&self, url: &str, range_from: Option<u64>) -> Result<Response> {
        {
            let mut last = self.last_request.lock().expect("rate limiter lock");
            if let Some(prev) = *last {
                let ready = prev + self.min_interval;
                let now = Instant::now();
                if ready > now {
                    std::thread::sleep(ready - now);
                }
            }
            *last = Some(Instant::now());
        }
        log::debug!("GET {url}");
        self.transport.get(url, range_from)
    }

    fn api_url(&self, params: &[(&str, String)]) -> Result<String> {
        Url::parse_with_params(&self.endpoint, params)
            .map(String::from)
            .map_err(|e| Error::Config(format!("endpoint `{}`: {e}", self.endpoint)))
    }

    fn api_get(&self, params: &[(&str, String)]) -> Result<Vec<u8>> {
        let response = self.get(&self.api_url(params)?, None)?;
        if response.status >= 400 {
            return Err(Error::Transport(format!(
                "catalog answered HTTP {}",
                response.status
            )));
        }
        response.bytes()
    }

    pub fn query(&self, q: &CatalogQuery) -> Result<QueryResult> {
        if q.is_empty() {
            return Err(Error::Config(
                "catalog query needs at least one criterion".into(),
            ));
        }
        parse_records(&self.api_get(&q.params())?)
    }

    pub fn list_resources(&self, kind: ResourceKind, scope: Option<&Scope>) -> Result<Vec<String>> {
        let mut params = vec![(kind.key(), "True".to_owned())];
        match scope {
            Some(Scope::Corpus(c)) => params.push(("corpus", c.clone())),
            Some(Scope::Source(s)) => params.push(("source", s.to_string())),
            None => {}
        }
        parse_listing(&self.api_get(&params)?, kind)
    }

    /// Downloads `record` into `dest`. A file already present under its
    /// final name is returned without any request. Data is written to a
    /// `.part` file that is renamed once complete; with `resume`, an existing
    /// `.part` file is continued with a range request.
    pub fn download(&self, record: &CorpusRecord, dest: &Path, resume: bool) -> Result<PathBuf> {
        let target = dest.join(record.file_name());
        if target.is_file() {
            return Ok(target);
        }
        fs::create_dir_all(dest)?;
        let part = dest.join(format!("{}.part", record.file_name()));
        let offset = match fs::metadata(&part) {
            Ok(m) if resume => m.len(),
            _ => 0,
        };
        let response = self.get(&record.url, (offset > 0).then_some(offset))?;
        if response.status >= 400 {
            return Err(Error::Download {
                status: response.status,
            });
        }
        let (mut file, start) = if offset > 0 && response.status == 206 {
            (OpenOptions::new().append(true).open(&part)?, offset)
        } else {
            (File::create(&part)?, 0)
        };
        let expected = response.content_length.map(|n| n + start);
        let mut body = response.body;
        let copied = io::copy(&mut body, &mut file).map_err(|e| Error::Transport(e.to_string()))?;
        file.flush()?;
        file.sync_all()?;
        let actual = start + copied;
        if let Some(expected) = expected {
            if expected != actual {
                return Err(Error::Integrity { expected, actual });
            }
        }
        fs::rename(&part, &target)?;
        Ok(target)
    }

    /// Downloads several records, at most `download_limit` at a time. Results
    /// are in input order.
    pub fn download_all(
        &self,
        records: &[CorpusRecord],
        dest: &Path,
        resume: bool,
    ) -> Vec<Result<PathBuf>> {
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<PathBuf>>>> =
            records.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.download_limit.min(records.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= records.len() {
                        break;
                    }
                    let r = self.download(&records[i], dest, resume);
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .expect("result slot")
                    .expect("every record visited")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;
    use std::io::Cursor;
    use std::sync::atomic::AtomicUsize;

    pub const EN_FI_LISTING: &str = r#"{
  "corpora": [
    {
      "alignment_pairs": 29903792,
      "corpus": "OpenSubtitles",
      "documents": 38969,
      "id": 328013,
      "latest": "True",
      "preprocessing": "xml",
      "size": 297683,
      "source": "en",
      "source_tokens": 257890401,
      "target": "fi",
      "target_tokens": 161280297,
      "url": "https://object.pouta.csc.fi/OPUS-OpenSubtitles/v2018/xml/en-fi.xml.gz",
      "version": "v2018"
    }
  ]
}"#;

    /// Serves canned responses and records requested URLs.
    struct Canned {
        responses: Mutex<VecDeque<(u16, Vec<u8>)>>,
        urls: Mutex<Vec<(String, Option<u64>)>>,
        calls: AtomicUsize,
    }

    impl Canned {
        fn new(responses: Vec<(u16, &[u8])>) -> Self {
            Canned {
                responses: Mutex::new(
                    responses
                        .into_iter()
                        .map(|(s, b)| (s, b.to_vec()))
                        .collect(),
                ),
                urls: Mutex::new(Vec::new()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Transport for Canned {
        fn get(&self, url: &str, range_from: Option<u64>) -> Result<Response> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.urls.lock().unwrap().push((url.to_owned(), range_from));
            let (status, body) = self
                .responses
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| Error::Transport("no more canned responses".into()))?;
            Ok(Response {
                status,
                content_length: Some(body.len() as u64),
                body: Box::new(Cursor::new(body)),
            })
        }
    }

    fn catalog(t: &Canned) -> Catalog<&Canned> {
        Catalog::new(t, "https://example.org/opusapi/").with_min_interval(Duration::ZERO)
    }

    #[test]
    fn opensubtitles_record() {
        let result = parse_records(EN_FI_LISTING.as_bytes()).unwrap();
        assert_eq!(result.skipped, 0);
        let r = &result.records[0];
        assert_eq!(r.corpus, "OpenSubtitles");
        assert_eq!(r.version, "v2018");
        assert!(r.latest);
        assert_eq!(r.alignment_pairs, Some(29903792));
        assert_eq!(r.source_tokens, Some(257890401));
        assert_eq!(r.target_tokens, Some(161280297));
        assert_eq!(r.documents, Some(38969));
        assert_eq!(r.size, 297683);
        assert_eq!(r.id, 328013);
        assert_eq!(r.source.as_str(), "en");
        assert_eq!(r.target.as_ref().unwrap().as_str(), "fi");
        assert_eq!(r.file_name(), "OpenSubtitles_v2018_xml_en-fi.xml.gz");
    }

    #[test]
    fn protocol_errors_and_skips() {
        assert!(parse_records(b"{\"corpora\": []}")
            .unwrap()
            .records
            .is_empty());
        assert!(matches!(parse_records(b"<html>"), Err(Error::Protocol(_))));
        assert!(matches!(
            parse_records(b"{\"items\": []}"),
            Err(Error::Protocol(_))
        ));
        let mixed = r#"{"corpora": [
            {"corpus": "A", "version": "v1", "latest": "False", "preprocessing": "moses", "source": "en",
             "target": "", "url": "https://x.org/a/en.txt.gz", "size": "12", "id": 1, "extra": 5},
            {"corpus": "B", "version": "v1", "latest": "maybe", "preprocessing": "moses", "source": "en",
             "url": "https://x.org/b", "size": 1, "id": 2},
            {"corpus": "C", "version": "v1", "latest": true, "preprocessing": "moses", "source": "en",
             "url": "relative/path", "size": 1, "id": 3}
        ]}"#;
        let result = parse_records(mixed.as_bytes()).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.skipped, 2);
        assert!(!result.records[0].latest);
        assert_eq!(result.records[0].target, None);
        assert_eq!(result.records[0].size, 12);
        assert_eq!(result.records[0].file_name(), "A_v1_moses_en.txt.gz");
    }

    #[test]
    fn query_builds_parameters() {
        let t = Canned::new(vec![(200, EN_FI_LISTING.as_bytes())]);
        let q = CatalogQuery {
            corpus: Some("OpenSubtitles".into()),
            source: Some("en".parse().unwrap()),
            target: Some("fi".parse().unwrap()),
            preprocessing: Some("xml".into()),
            latest_only: true,
            ..Default::default()
        };
        let result = catalog(&t).query(&q).unwrap();
        assert_eq!(result.records.len(), 1);
        let urls = t.urls.lock().unwrap();
        assert_eq!(
            urls[0].0,
            "https://example.org/opusapi/?corpus=OpenSubtitles&source=en&target=fi&preprocessing=xml&latest=True"
        );
        assert!(catalog(&t).query(&CatalogQuery::default()).is_err());
    }

    #[test]
    fn listing_is_sorted_and_unique() {
        let t = Canned::new(vec![(
            200,
            br#"{"corpora": ["b", "a", "b", "C"]}"#.as_slice(),
        )]);
        let names = catalog(&t)
            .list_resources(ResourceKind::Corpora, None)
            .unwrap();
        assert_eq!(names, ["C", "a", "b"]);
        assert!(t.urls.lock().unwrap()[0].0.ends_with("?corpora=True"));
        let t = Canned::new(vec![(200, br#"{"languages": []}"#.as_slice())]);
        assert!(catalog(&t)
            .list_resources(ResourceKind::Languages, Some(&Scope::Corpus("X".into())))
            .unwrap()
            .is_empty());
        assert!(t.urls.lock().unwrap()[0]
            .0
            .ends_with("?languages=True&corpus=X"));
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let t = Canned::new(vec![(200, b"{\"corpora\": []}".as_slice()); 3]);
        let c =
            Catalog::new(&t, "https://example.org/").with_min_interval(Duration::from_millis(100));
        let q = CatalogQuery {
            corpus: Some("X".into()),
            ..Default::default()
        };
        let start = Instant::now();
        for _ in 0..3 {
            c.query(&q).unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(200));
    }

    fn record(url: &str) -> CorpusRecord {
        let mut r = parse_records(EN_FI_LISTING.as_bytes())
            .unwrap()
            .records
            .remove(0);
        r.url = url.to_owned();
        r
    }

    #[test]
    fn download_is_idempotent_and_reports_status() {
        let dir = tempfile::tempdir().unwrap();
        let t = Canned::new(vec![(200, b"payload".as_slice()), (404, b"".as_slice())]);
        let c = catalog(&t);
        let rec = record("https://x.org/en-fi.xml.gz");
        let path = c.download(&rec, dir.path(), false).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"payload");
        assert_eq!(c.download(&rec, dir.path(), false).unwrap(), path);
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);

        let missing = record("https://x.org/other.xml.gz");
        let mut missing = missing;
        missing.corpus = "Other".into();
        assert!(matches!(
            c.download(&missing, dir.path(), false),
            Err(Error::Download { status: 404 })
        ));
    }

    #[test]
    fn short_body_is_an_integrity_error() {
        struct Short;
        impl Transport for Short {
            fn get(&self, _: &str, _: Option<u64>) -> Result<Response> {
                Ok(Response {
                    status: 200,
                    content_length: Some(10),
                    body: Box::new(Cursor::new(b"abc".to_vec())),
                })
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let c = Catalog::new(Short, "https://example.org/").with_min_interval(Duration::ZERO);
        let err = c
            .download(&record("https://x.org/a.xml.gz"), dir.path(), false)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::Integrity {
                expected: 10,
                actual: 3
            }
        ));
        assert!(!dir
            .path()
            .join(record("https://x.org/a.xml.gz").file_name())
            .exists());
    }
}
