//! Exact duplicate and overlap removal over segment tuples.
//!
//! Keys are hashed to 64 bits and every hash hit is verified against the
//! stored key text, so collisions never drop a unit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, Result};
use crate::text;

/// Separator between sides inside a key; never present in segment text.
const SIDE_SEP: char = '\t';

/// Set of strings stored in one arena, indexed by a 64-bit hash.
#[derive(Debug, Default)]
pub struct KeySet {
    arena: String,
    first: HashMap<u64, (usize, usize)>,
    overflow: HashMap<u64, Vec<(usize, usize)>>,
    len: usize,
}

impl KeySet {
    pub fn new() -> Self {
        Self::default()
    }

    fn slice(&self, (start, end): (usize, usize)) -> &str {
        &self.arena[start..end]
    }

    pub fn contains(&self, key: &str) -> bool {
        let h = xxh3_64(key.as_bytes());
        match self.first.get(&h) {
            None => false,
            Some(&span) if self.slice(span) == key => true,
            Some(_) => self
                .overflow
                .get(&h)
                .is_some_and(|spans| spans.iter().any(|&s| self.slice(s) == key)),
        }
    }

    /// Inserts `key`; returns false when it was already present.
    pub fn insert(&mut self, key: &str) -> bool {
        let h = xxh3_64(key.as_bytes());
        match self.first.get(&h) {
            None => {
                let span = self.push(key);
                self.first.insert(h, span);
            }
            Some(&span) => {
                if self.slice(span) == key {
                    return false;
                }
                if let Some(spans) = self.overflow.get(&h) {
                    if spans.iter().any(|&s| self.slice(s) == key) {
                        return false;
                    }
                }
                let span = self.push(key);
                self.overflow.entry(h).or_default().push(span);
            }
        }
        self.len += 1;
        true
    }

    fn push(&mut self, key: &str) -> (usize, usize) {
        let start = self.arena.len();
        self.arena.push_str(key);
        (start, self.arena.len())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// How a segment tuple is turned into a dedup key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyParams {
    /// Side indexes to include; `None` means all sides.
    #[serde(default)]
    pub sides: Option<Vec<usize>>,
    #[serde(default)]
    pub fold_case: bool,
    #[serde(default)]
    pub letters_only: bool,
}

impl KeyParams {
    pub fn validate(&self, arity: usize) -> Result<()> {
        if let Some(sides) = &self.sides {
            if sides.is_empty() {
                return Err(Error::Config("dedup side list is empty".into()));
            }
            if let Some(bad) = sides.iter().find(|&&s| s >= arity) {
                return Err(Error::Config(format!(
                    "dedup side {bad} out of range for {arity} sides"
                )));
            }
        }
        Ok(())
    }

    pub fn key<S: AsRef<str>>(&self, segments: &[S]) -> String {
        let mut key = String::new();
        let mut push_side = |n: usize, i: usize| {
            if n > 0 {
                key.push(SIDE_SEP);
            }
            self.normalize_into(segments[i].as_ref(), &mut key);
        };
        match &self.sides {
            Some(sides) => sides.iter().enumerate().for_each(|(n, &i)| push_side(n, i)),
            None => (0..segments.len()).for_each(|i| push_side(i, i)),
        }
        key
    }

    fn normalize_into(&self, segment: &str, out: &mut String) {
        let normalized = text::nfc(segment);
        for c in normalized.chars() {
            if self.letters_only && !text::is_letter(c) {
                continue;
            }
            if self.fold_case {
                out.extend(c.to_lowercase());
            } else {
                out.push(c);
            }
        }
    }
}

/// Streaming first-occurrence-wins duplicate filter.
pub struct Deduplicator {
    params: KeyParams,
    seen: KeySet,
    removed: usize,
}

impl Deduplicator {
    pub fn new(params: KeyParams) -> Self {
        Deduplicator {
            params,
            seen: KeySet::new(),
            removed: 0,
        }
    }

    /// Returns true when the unit is new and should be kept.
    pub fn keep<S: AsRef<str>>(&mut self, segments: &[S]) -> bool {
        let fresh = self.seen.insert(&self.params.key(segments));
        if !fresh {
            self.removed += 1;
        }
        fresh
    }

    pub fn removed(&self) -> usize {
        self.removed
    }
}

pub fn dedup<S: AsRef<str>>(
    units: impl IntoIterator<Item = Vec<S>>,
    params: &KeyParams,
) -> impl Iterator<Item = Vec<S>> {
    let mut d = Deduplicator::new(params.clone());
    units.into_iter().filter(move |u| d.keep(u))
}

/// Key set built from a reference corpus, used to drop overlapping units.
pub struct OverlapFilter {
    params: KeyParams,
    reference: KeySet,
}

impl OverlapFilter {
    pub fn new<S: AsRef<str>>(
        reference: impl IntoIterator<Item = Vec<S>>,
        params: KeyParams,
    ) -> Self {
        let mut keys = KeySet::new();
        for unit in reference {
            keys.insert(&params.key(&unit));
        }
        OverlapFilter {
            params,
            reference: keys,
        }
    }

    pub fn keep<S: AsRef<str>>(&self, segments: &[S]) -> bool {
        !self.reference.contains(&self.params.key(segments))
    }
}

pub fn remove_overlap<S: AsRef<str>, T: AsRef<str>>(
    units: impl IntoIterator<Item = Vec<S>>,
    reference: impl IntoIterator<Item = Vec<T>>,
    params: &KeyParams,
) -> impl Iterator<Item = Vec<S>> {
    let filter = OverlapFilter::new(reference, params.clone());
    units.into_iter().filter(move |u| filter.keep(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn rows(data: &[(&str, &str)]) -> Vec<Vec<String>> {
        data.iter()
            .map(|(a, b)| vec![a.to_string(), b.to_string()])
            .collect()
    }

    #[test]
    fn keyset_verifies_hash_hits() {
        // Plant a different key under the hash of "c" to simulate a collision.
        let mut set = KeySet::new();
        let planted = set.push("q");
        set.first.insert(xxh3_64(b"c"), planted);
        set.len = 1;
        assert!(!set.contains("c"));
        assert!(set.insert("c"));
        assert!(set.contains("c"));
        assert!(!set.insert("c"));
        assert!(set.insert("d"));
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn fold_case_and_letters_only() {
        let params = KeyParams {
            sides: None,
            fold_case: true,
            letters_only: true,
        };
        let kept: Vec<_> = dedup(rows(&[("A!", "b"), ("a", "b")]), &params).collect();
        assert_eq!(kept, rows(&[("A!", "b")]));
        let strict: Vec<_> =
            dedup(rows(&[("A!", "b"), ("a", "b")]), &KeyParams::default()).collect();
        assert_eq!(strict.len(), 2);
    }

    #[test]
    fn side_selection() {
        let params = KeyParams {
            sides: Some(vec![1]),
            ..Default::default()
        };
        let kept: Vec<_> = dedup(rows(&[("x", "b"), ("y", "b"), ("x", "c")]), &params).collect();
        assert_eq!(kept, rows(&[("x", "b"), ("x", "c")]));
        assert!(params.validate(2).is_ok());
        assert!(KeyParams {
            sides: Some(vec![2]),
            ..Default::default()
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn sides_do_not_bleed_into_each_other() {
        let kept: Vec<_> =
            dedup(rows(&[("ab", "c"), ("a", "bc")]), &KeyParams::default()).collect();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn overlap() {
        let corpus = rows(&[("a", "1"), ("b", "2"), ("c", "3")]);
        let reference = rows(&[("b", "2")]);
        let kept: Vec<_> =
            remove_overlap(corpus.clone(), reference, &KeyParams::default()).collect();
        assert_eq!(kept, rows(&[("a", "1"), ("c", "3")]));
        let empty: Vec<Vec<String>> = Vec::new();
        let all: Vec<_> = remove_overlap(corpus.clone(), empty, &KeyParams::default()).collect();
        assert_eq!(all, corpus);
        let none: Vec<_> = remove_overlap(corpus.clone(), corpus, &KeyParams::default()).collect();
        assert!(none.is_empty());
    }

    proptest! {
        #[test]
        fn dedup_matches_naive_and_is_idempotent(
            data in proptest::collection::vec(("[aAb!]{0,3}", "[xy]{0,2}"), 0..60),
            fold_case: bool,
            letters_only: bool,
        ) {
            let params = KeyParams { sides: None, fold_case, letters_only };
            let corpus: Vec<Vec<String>> = data.iter().map(|(a, b)| vec![a.clone(), b.clone()]).collect();
            let once: Vec<_> = dedup(corpus.clone(), &params).collect();
            let norm = |s: &str| -> String {
                s.chars()
                    .filter(|c| !letters_only || c.is_alphabetic())
                    .map(|c| if fold_case { c.to_ascii_lowercase() } else { c })
                    .collect()
            };
            let mut seen = HashSet::new();
            let naive: Vec<_> = corpus
                .iter()
                .filter(|u| seen.insert((norm(&u[0]), norm(&u[1]))))
                .cloned()
                .collect();
            prop_assert_eq!(&once, &naive);
            let twice: Vec<_> = dedup(once.clone(), &params).collect();
            prop_assert_eq!(twice, once);
        }
    }
}
