//! Translation-service protocol: routing by language pair, pluggable
//! backends, alignment-bearing JSON responses and an on-disk response cache.
//!
//! Requests are `{"text", "source", "target"}` objects. Responses use the
//! field names below, with hyphenated segment keys:
//!
//! ```json
//! {
//!     "alignment": ["0-0 1-1 2-2"],
//!     "result": "Huomenta, Suomi",
//!     "segmentation": "spm",
//!     "server": "192.168.1.15:40002",
//!     "source": "sv",
//!     "source-segments": ["▁Godmorgon , ▁Finland"],
//!     "target": "fi",
//!     "target-segments": ["▁Huomenta , ▁Suomi"]
//! }
//! ```

mod backend;
mod cache;
mod config;
mod net;

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LanguageTag;

pub use backend::{Backend, BackendOutput, DictionaryBackend, IdentityBackend};
pub use cache::{cache_key, CacheStats, ResponseCache};
pub use config::{Route, ServiceConfig};
pub use net::{RemoteTranslator, Router, Server, ServerHandle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source: LanguageTag,
    pub target: LanguageTag,
}

impl TranslationRequest {
    pub fn new(text: impl Into<String>, source: LanguageTag, target: LanguageTag) -> Self {
        TranslationRequest {
            text: text.into(),
            source,
            target,
        }
    }
}

/// Fields are declared in alphabetical key order so serialization matches the
/// wire layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationResponse {
    pub alignment: Vec<String>,
    pub result: String,
    pub segmentation: String,
    pub server: String,
    pub source: LanguageTag,
    #[serde(rename = "source-segments")]
    pub source_segments: Vec<String>,
    pub target: LanguageTag,
    #[serde(rename = "target-segments")]
    pub target_segments: Vec<String>,
}

impl TranslationResponse {
    /// Four-space indented JSON with non-ASCII written as `\uXXXX`.
    pub fn to_pretty_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, AsciiFormatter::pretty());
        self.serialize(&mut ser).expect("response serializes");
        String::from_utf8(out).expect("ascii output")
    }

    /// Single-line JSON, non-ASCII escaped, as used on the duplex transport.
    pub fn to_line(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, AsciiFormatter::compact());
        self.serialize(&mut ser).expect("response serializes");
        String::from_utf8(out).expect("ascii output")
    }

    /// Checks every alignment string against the segment token counts.
    pub fn check_alignment(&self) -> Result<()> {
        if self.alignment.len() != self.source_segments.len()
            || self.alignment.len() != self.target_segments.len()
        {
            return Err(Error::Protocol(format!(
                "{} alignments for {} source and {} target segments",
                self.alignment.len(),
                self.source_segments.len(),
                self.target_segments.len()
            )));
        }
        for ((a, s), t) in self
            .alignment
            .iter()
            .zip(&self.source_segments)
            .zip(&self.target_segments)
        {
            let pairs = parse_alignment(a)?;
            check_pairs(
                &pairs,
                s.split_whitespace().count(),
                t.split_whitespace().count(),
            )?;
        }
        Ok(())
    }
}

/// Parses `"i-j i-j ..."`.
pub fn parse_alignment(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split_whitespace()
        .map(|p| {
            p.split_once('-')
                .and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)))
                .ok_or_else(|| Error::Protocol(format!("bad alignment pair `{p}`")))
        })
        .collect()
}

pub fn format_alignment(pairs: &[(usize, usize)]) -> String {
    pairs
        .iter()
        .map(|(i, j)| format!("{i}-{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_pairs(pairs: &[(usize, usize)], src: usize, trg: usize) -> Result<()> {
    match pairs.iter().find(|&&(i, j)| i >= src || j >= trg) {
        Some((i, j)) => Err(Error::Protocol(format!(
            "alignment {i}-{j} out of bounds for {src} source and {trg} target tokens"
        ))),
        None => Ok(()),
    }
}

/// Wraps serde_json's formatters and escapes every non-ASCII character.
struct AsciiFormatter {
    pretty: Option<serde_json::ser::PrettyFormatter<'static>>,
}

impl AsciiFormatter {
    fn pretty() -> Self {
        AsciiFormatter {
            pretty: Some(serde_json::ser::PrettyFormatter::with_indent(b"    ")),
        }
    }

    fn compact() -> Self {
        AsciiFormatter { pretty: None }
    }
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            match &mut self.pretty {
                Some(p) => p.$name(w $(, $arg)*),
                None => serde_json::ser::CompactFormatter.$name(w $(, $arg)*),
            }
        })*
    };
}

impl serde_json::ser::Formatter for AsciiFormatter {
    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }

    fn write_string_fragment<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        fragment: &str,
    ) -> io::Result<()> {
        let mut start = 0;
        for (i, c) in fragment.char_indices() {
            if c.is_ascii() {
                continue;
            }
            w.write_all(&fragment.as_bytes()[start..i])?;
            let mut units = [0u16; 2];
            for u in c.encode_utf16(&mut units) {
                write!(w, "\\u{u:04x}")?;
            }
            start = i + c.len_utf8();
        }
        w.write_all(&fragment.as_bytes()[start..])
    }
}

/// Anything that turns a request into a response.
pub trait Translator: Send + Sync {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResponse>;

    /// Supported `(source, target)` pairs, if known.
    fn routes(&self) -> Vec<(LanguageTag, LanguageTag)> {
        Vec::new()
    }
}

impl<T: Translator + ?Sized> Translator for std::sync::Arc<T> {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResponse> {
        (**self).translate(request)
    }

    fn routes(&self) -> Vec<(LanguageTag, LanguageTag)> {
        (**self).routes()
    }
}

/// Splits text into sentences at whitespace that follows `.`, `!` or `?`
/// and precedes a character that is not a lowercase letter.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut k = 0;
    while k < chars.len() {
        let (_, c) = chars[k];
        if matches!(c, '.' | '!' | '?') {
            let mut m = k + 1;
            while m < chars.len()
                && matches!(chars[m].1, '.' | '!' | '?' | '"' | '\'' | ')' | '\u{201d}')
            {
                m += 1;
            }
            let mut n = m;
            while n < chars.len() && chars[n].1.is_whitespace() {
                n += 1;
            }
            if n > m && n < chars.len() && !chars[n].1.is_lowercase() {
                let piece = text[start..chars[m].0].trim();
                if !piece.is_empty() {
                    out.push(piece.to_owned());
                }
                start = chars[n].0;
                k = n;
                continue;
            }
            k = m;
            continue;
        }
        k += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}

/// Turns segment tokens back into text for the given scheme.
pub fn detokenize(scheme: &str, tokens: &[String]) -> String {
    match scheme {
        "spm" => tokens.concat().replace('\u{2581}', " ").trim().to_owned(),
        _ => tokens.join(" "),
    }
}

/// Runs `request` through `backend`: sentence splitting, backend
/// segmentation and translation, alignment checks, detokenization.
pub fn translate<B: Backend + ?Sized>(
    request: &TranslationRequest,
    backend: &B,
    server: &str,
) -> Result<TranslationResponse> {
    let text = request.text.trim();
    if text.is_empty() {
        return Err(Error::Invalid("empty translation request".into()));
    }
    let scheme = backend.scheme().to_owned();
    let upstream = |e: Error| match e {
        e @ (Error::Upstream { .. } | Error::UnsupportedPair { .. }) => e,
        e => Error::Upstream {
            address: server.to_owned(),
            message: e.to_string(),
        },
    };
    let mut response = TranslationResponse {
        alignment: Vec::new(),
        result: String::new(),
        segmentation: scheme.clone(),
        server: server.to_owned(),
        source: request.source.clone(),
        source_segments: Vec::new(),
        target: request.target.clone(),
        target_segments: Vec::new(),
    };
    let mut results = Vec::new();
    for sentence in split_sentences(text) {
        let src_tokens = backend
            .segment(&sentence, &request.source)
            .map_err(upstream)?;
        let out = backend
            .translate(&src_tokens, &request.source, &request.target)
            .map_err(upstream)?;
        check_pairs(&out.alignment, src_tokens.len(), out.tokens.len())?;
        results.push(detokenize(&scheme, &out.tokens));
        response.source_segments.push(src_tokens.join(" "));
        response.target_segments.push(out.tokens.join(" "));
        response.alignment.push(format_alignment(&out.alignment));
    }
    response.result = results.join(" ");
    Ok(response)
}

/// A backend living in this process, labelled with a server address.
pub struct LocalService<B> {
    backend: B,
    server: String,
}

impl<B: Backend> LocalService<B> {
    pub fn new(backend: B, server: impl Into<String>) -> Self {
        LocalService {
            backend,
            server: server.into(),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }
}

impl<B: Backend> Translator for LocalService<B> {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResponse> {
        if !self.backend.supports(&request.source, &request.target) {
            return Err(Error::UnsupportedPair {
                source_lang: request.source.to_string(),
                target: request.target.to_string(),
                supported: self.backend.describe_pairs(),
            });
        }
        translate(request, &self.backend, &self.server)
    }

    fn routes(&self) -> Vec<(LanguageTag, LanguageTag)> {
        self.backend.pairs()
    }
}

/// Looks `request` up in `cache`, falling back to `translator` and storing
/// the answer.
pub fn cached_translate<T: Translator + ?Sized>(
    request: &TranslationRequest,
    cache: &ResponseCache,
    translator: &T,
) -> Result<TranslationResponse> {
    let key = cache_key(&request.source, &request.target, &request.text);
    if let Some(bytes) = cache.get(&key) {
        match serde_json::from_slice(&bytes) {
            Ok(response) => return Ok(response),
            Err(e) => log::warn!("discarding undecodable cache entry: {e}"),
        }
    }
    let response = translator.translate(request)?;
    cache.put(&key, response.to_line().as_bytes())?;
    Ok(response)
}

/// A translator with a response cache in front.
pub struct Cached<T> {
    inner: T,
    cache: ResponseCache,
}

impl<T: Translator> Cached<T> {
    pub fn new(inner: T, cache: ResponseCache) -> Self {
        Cached { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Translator> Translator for Cached<T> {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResponse> {
        cached_translate(request, &self.cache, &self.inner)
    }

    fn routes(&self) -> Vec<(LanguageTag, LanguageTag)> {
        self.inner.routes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> LanguageTag {
        s.parse().unwrap()
    }

    pub(crate) const SV_FI_RESPONSE: &str = r#"{
    "alignment": [
        "0-0 1-1 2-2"
    ],
    "result": "Huomenta, Suomi",
    "segmentation": "spm",
    "server": "192.168.1.15:40002",
    "source": "sv",
    "source-segments": [
        "\u2581Godmorgon , \u2581Finland"
    ],
    "target": "fi",
    "target-segments": [
        "\u2581Huomenta , \u2581Suomi"
    ]
}"#;

    fn sv_fi() -> LocalService<DictionaryBackend> {
        let backend = DictionaryBackend::spm(
            tag("sv"),
            tag("fi"),
            [("Godmorgon", "Huomenta"), ("Finland", "Suomi")],
        );
        LocalService::new(backend, "192.168.1.15:40002")
    }

    #[test]
    fn sv_fi_response_layout() {
        let r = sv_fi()
            .translate(&TranslationRequest::new(
                "Godmorgon, Finland",
                tag("sv"),
                tag("fi"),
            ))
            .unwrap();
        assert_eq!(r.to_pretty_json(), SV_FI_RESPONSE);
        let parsed: TranslationResponse = serde_json::from_str(SV_FI_RESPONSE).unwrap();
        assert_eq!(parsed, r);
        assert!(!r.to_line().contains('\n'));
    }

    #[test]
    fn identity_backend() {
        let svc = LocalService::new(IdentityBackend, "local");
        let r = svc
            .translate(&TranslationRequest::new("hello", tag("en"), tag("en")))
            .unwrap();
        assert_eq!(r.result, "hello");
        assert_eq!(r.alignment, ["0-0"]);
        assert_eq!(r.segmentation, "whitespace");
    }

    #[test]
    fn two_sentences_two_segments() {
        let svc = LocalService::new(IdentityBackend, "local");
        let r = svc
            .translate(&TranslationRequest::new(
                "Hello there. How are you?",
                tag("en"),
                tag("en"),
            ))
            .unwrap();
        assert_eq!(r.source_segments, ["Hello there.", "How are you?"]);
        assert_eq!(r.alignment, ["0-0 1-1", "0-0 1-1 2-2"]);
        assert_eq!(r.result, "Hello there. How are you?");
        r.check_alignment().unwrap();
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("One. Two! Three?"),
            ["One.", "Two!", "Three?"]
        );
        assert_eq!(split_sentences("e.g. this stays"), ["e.g. this stays"]);
        assert_eq!(
            split_sentences("He said \"Hi.\" Then left."),
            ["He said \"Hi.\"", "Then left."]
        );
        assert_eq!(split_sentences("  "), Vec::<String>::new());
    }

    #[test]
    fn empty_text_rejected() {
        let svc = LocalService::new(IdentityBackend, "local");
        assert!(svc
            .translate(&TranslationRequest::new("  ", tag("en"), tag("en")))
            .is_err());
    }

    #[test]
    fn unsupported_pair_from_local_backend() {
        let err = sv_fi()
            .translate(&TranslationRequest::new("Godmorgon", tag("sv"), tag("de")))
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedPair { .. }));
    }

    struct Broken;
    impl Backend for Broken {
        fn scheme(&self) -> &str {
            "whitespace"
        }
        fn translate(
            &self,
            tokens: &[String],
            _: &LanguageTag,
            _: &LanguageTag,
        ) -> Result<BackendOutput> {
            Ok(BackendOutput {
                tokens: tokens.to_vec(),
                alignment: vec![(0, tokens.len())],
            })
        }
    }

    #[test]
    fn out_of_bounds_alignment_is_protocol_error() {
        let err = translate(
            &TranslationRequest::new("a b", tag("en"), tag("en")),
            &Broken,
            "x",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn ascii_escaping_of_astral_chars() {
        let mut r = sv_fi()
            .translate(&TranslationRequest::new("Finland", tag("sv"), tag("fi")))
            .unwrap();
        r.result = "\u{1F600}é".into();
        let line = r.to_line();
        assert!(line.contains(r#""result":"\ud83d\ude00\u00e9""#));
        let back: TranslationResponse = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn cached_translate_counts_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path().join("cache.bin")).unwrap();
        let svc = LocalService::new(
            DictionaryBackend::spm(tag("sv"), tag("fi"), [("Godmorgon", "Huomenta")]),
            "s",
        );
        let req = TranslationRequest::new("Godmorgon", tag("sv"), tag("fi"));
        let first = cached_translate(&req, &cache, &svc).unwrap();
        let calls = svc.backend().calls();
        let padded = TranslationRequest::new("  Godmorgon \n", tag("sv"), tag("fi"));
        let second = cached_translate(&padded, &cache, &svc).unwrap();
        assert_eq!(svc.backend().calls(), calls);
        assert_eq!(first.to_line(), second.to_line());

        std::fs::remove_file(dir.path().join("cache.bin")).unwrap();
        cached_translate(&req, &cache, &svc).unwrap();
        assert_eq!(svc.backend().calls(), calls + 1);
        cached_translate(&req, &cache, &svc).unwrap();
        assert_eq!(svc.backend().calls(), calls + 1);
        assert!(dir.path().join("cache.bin").exists());
    }
}
