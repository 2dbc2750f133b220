use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::model::LanguageTag;

const SPM_MARK: char = '\u{2581}';

/// Target tokens plus `(source index, target index)` links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendOutput {
    pub tokens: Vec<String>,
    pub alignment: Vec<(usize, usize)>,
}

/// A translation engine. The backend owns segmentation so that subword
/// schemes stay consistent between its input and output.
pub trait Backend: Send + Sync {
    /// Segmentation label reported in responses.
    fn scheme(&self) -> &str;

    fn segment(&self, sentence: &str, _lang: &LanguageTag) -> Result<Vec<String>> {
        Ok(sentence.split_whitespace().map(str::to_owned).collect())
    }

    fn translate(
        &self,
        tokens: &[String],
        source: &LanguageTag,
        target: &LanguageTag,
    ) -> Result<BackendOutput>;

    fn supports(&self, _source: &LanguageTag, _target: &LanguageTag) -> bool {
        true
    }

    fn pairs(&self) -> Vec<(LanguageTag, LanguageTag)> {
        Vec::new()
    }

    fn describe_pairs(&self) -> String {
        let pairs = self.pairs();
        if pairs.is_empty() {
            return "any".into();
        }
        pairs
            .iter()
            .map(|(s, t)| format!("{s}-{t}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Copies its input; whitespace tokens, one-to-one alignment.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityBackend;

impl Backend for IdentityBackend {
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
            alignment: (0..tokens.len()).map(|i| (i, i)).collect(),
        })
    }
}

/// Word-for-word dictionary translator for one language pair. Unknown words
/// are copied. Counts its `translate` calls.
#[derive(Debug)]
pub struct DictionaryBackend {
    source: LanguageTag,
    target: LanguageTag,
    entries: HashMap<String, String>,
    spm: bool,
    calls: AtomicUsize,
}

impl DictionaryBackend {
    /// Whitespace tokenization.
    pub fn new<I, S, T>(source: LanguageTag, target: LanguageTag, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        DictionaryBackend {
            source,
            target,
            entries: entries
                .into_iter()
                .map(|(s, t)| (s.into(), t.into()))
                .collect(),
            spm: false,
            calls: AtomicUsize::new(0),
        }
    }

    /// SentencePiece-style tokens: punctuation split off, word starts marked
    /// with U+2581.
    pub fn spm<I, S, T>(source: LanguageTag, target: LanguageTag, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        DictionaryBackend {
            spm: true,
            ..Self::new(source, target, entries)
        }
    }

    /// Reads `source<TAB>target` lines.
    pub fn load(path: &Path, source: LanguageTag, target: LanguageTag, spm: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (s, t) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `source<TAB>target`",
                    path.display(),
                    n + 1
                ))
            })?;
            entries.push((s.to_owned(), t.to_owned()));
        }
        let mut backend = Self::new(source, target, entries);
        backend.spm = spm;
        Ok(backend)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, word: &str) -> String {
        self.entries
            .get(word)
            .cloned()
            .unwrap_or_else(|| word.to_owned())
    }
}

fn spm_pieces(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.split_whitespace() {
        let mut first = true;
        let mut current = String::new();
        let flush = |current: &mut String, first: &mut bool, out: &mut Vec<String>| {
            if !current.is_empty() {
                let piece = std::mem::take(current);
                out.push(if *first {
                    format!("{SPM_MARK}{piece}")
                } else {
                    piece
                });
                *first = false;
            }
        };
        for c in word.chars() {
            if c.is_alphanumeric() {
                current.push(c);
            } else {
                flush(&mut current, &mut first, &mut out);
                out.push(if first {
                    format!("{SPM_MARK}{c}")
                } else {
                    c.to_string()
                });
                first = false;
            }
        }
        flush(&mut current, &mut first, &mut out);
    }
    out
}

impl Backend for DictionaryBackend {
    fn scheme(&self) -> &str {
        if self.spm {
            "spm"
        } else {
            "whitespace"
        }
    }

    fn segment(&self, sentence: &str, _: &LanguageTag) -> Result<Vec<String>> {
        Ok(if self.spm {
            spm_pieces(sentence)
        } else {
            sentence.split_whitespace().map(str::to_owned).collect()
        })
    }

    fn translate(
        &self,
        tokens: &[String],
        _: &LanguageTag,
        _: &LanguageTag,
    ) -> Result<BackendOutput> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let out = tokens
            .iter()
            .map(|t| match t.strip_prefix(SPM_MARK) {
                Some(rest) if self.spm => format!("{SPM_MARK}{}", self.lookup(rest)),
                _ => self.lookup(t),
            })
            .collect::<Vec<_>>();
        Ok(BackendOutput {
            alignment: (0..out.len()).map(|i| (i, i)).collect(),
            tokens: out,
        })
    }

    fn supports(&self, source: &LanguageTag, target: &LanguageTag) -> bool {
        *source == self.source && *target == self.target
    }

    fn pairs(&self) -> Vec<(LanguageTag, LanguageTag)> {
        vec![(self.source.clone(), self.target.clone())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spm_segmentation() {
        assert_eq!(
            spm_pieces("Godmorgon, Finland"),
            ["▁Godmorgon", ",", "▁Finland"]
        );
        assert_eq!(
            spm_pieces("\"Hi\" there."),
            ["▁\"", "Hi", "\"", "▁there", "."]
        );
    }

    #[test]
    fn load_dictionary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.tsv");
        std::fs::write(&path, "hello\thei\n\nworld\tmaailma\n").unwrap();
        let b = DictionaryBackend::load(&path, "en".parse().unwrap(), "fi".parse().unwrap(), false)
            .unwrap();
        let out = b
            .translate(
                &["hello".into(), "big".into(), "world".into()],
                &"en".parse().unwrap(),
                &"fi".parse().unwrap(),
            )
            .unwrap();
        assert_eq!(out.tokens, ["hei", "big", "maailma"]);
        assert_eq!(b.calls(), 1);
        std::fs::write(&path, "broken line\n").unwrap();
        assert!(DictionaryBackend::load(
            &path,
            "en".parse().unwrap(),
            "fi".parse().unwrap(),
            false
        )
        .is_err());
    }
}
