//! Segment-level score/accept filters and corpus-level cleaning.
//!
//! A filter maps a segment tuple to a [`ScoreVector`] (`score`) and decides
//! on that vector (`accept`). Filters are built from a [`FilterSpec`] through
//! a [`FilterRegistry`]; user code can register additional kinds.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{AlignedUnit, LanguageTag};

mod builtin;
pub mod dedup;
pub mod langid;
pub mod retain;

pub use builtin::{read_score_file, similarity, Comparator, LengthUnit, SimilarityDirection};
pub use dedup::{dedup, remove_overlap, Deduplicator, KeyParams, KeySet, OverlapFilter};
pub use langid::LanguageProfiles;
pub use retain::ce_retain;

/// One entry of a score vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreValue {
    Num(f64),
    Bool(bool),
}

impl ScoreValue {
    pub fn as_f64(&self) -> f64 {
        match *self {
            ScoreValue::Num(v) => v,
            ScoreValue::Bool(b) => b as u8 as f64,
        }
    }
}

impl Serialize for ScoreValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            ScoreValue::Bool(b) => s.serialize_bool(b),
            ScoreValue::Num(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => s.serialize_i64(v as i64),
            ScoreValue::Num(v) => s.serialize_f64(v),
        }
    }
}

/// Ordered scores, one per dimension declared by the filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<ScoreValue>);

impl ScoreVector {
    pub fn new(values: Vec<ScoreValue>) -> Self {
        ScoreVector(values)
    }

    pub fn numbers(values: impl IntoIterator<Item = f64>) -> Self {
        ScoreVector(values.into_iter().map(ScoreValue::Num).collect())
    }

    pub fn values(&self) -> &[ScoreValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(ScoreValue::as_f64)
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|v| match v {
            ScoreValue::Num(x) => x.is_finite(),
            ScoreValue::Bool(_) => true,
        })
    }
}

/// A segment tuple together with its position in the corpus stream.
#[derive(Debug, Clone, Copy)]
pub struct UnitRef<'a> {
    pub index: usize,
    pub segments: &'a [String],
}

/// A configured score/accept filter.
pub trait Filter: Send + Sync {
    /// Length of every score vector this filter produces.
    fn arity(&self) -> usize;

    /// Human-readable labels for each score dimension.
    fn columns(&self) -> Vec<String>;

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector>;

    fn accept(&self, score: &ScoreVector) -> bool;
}

/// Declarative filter configuration, as found in pipeline files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
    #[serde(default)]
    pub side_languages: Vec<LanguageTag>,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl FilterSpec {
    pub fn new(kind: &str, params: serde_json::Value, side_languages: Vec<LanguageTag>) -> Self {
        FilterSpec {
            kind: kind.to_owned(),
            name: None,
            params,
            side_languages,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_owned());
        self
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.kind)
    }

    /// Deserializes `params` into a kind-specific parameter struct.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("filter `{}`: {e}", self.display_name())))
    }
}

type Builder = Arc<dyn Fn(&FilterSpec) -> Result<Box<dyn Filter>> + Send + Sync>;

/// Maps filter kinds to constructors.
#[derive(Clone)]
pub struct FilterRegistry {
    builders: HashMap<String, Builder>,
}

impl fmt::Debug for FilterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut kinds: Vec<_> = self.builders.keys().collect();
        kinds.sort();
        f.debug_struct("FilterRegistry")
            .field("kinds", &kinds)
            .finish()
    }
}

impl Default for FilterRegistry {
    fn default() -> Self {
        let mut registry = FilterRegistry {
            builders: HashMap::new(),
        };
        builtin::register_all(&mut registry);
        registry
    }
}

impl FilterRegistry {
    /// A registry with no kinds at all.
    pub fn empty() -> Self {
        FilterRegistry {
            builders: HashMap::new(),
        }
    }

    pub fn register<F>(&mut self, kind: &str, builder: F)
    where
        F: Fn(&FilterSpec) -> Result<Box<dyn Filter>> + Send + Sync + 'static,
    {
        self.builders.insert(kind.to_owned(), Arc::new(builder));
    }

    pub fn kinds(&self) -> Vec<&str> {
        let mut kinds: Vec<_> = self.builders.keys().map(String::as_str).collect();
        kinds.sort_unstable();
        kinds
    }

    pub fn build(&self, spec: &FilterSpec) -> Result<Box<dyn Filter>> {
        let builder = self.builders.get(&spec.kind).ok_or_else(|| {
            Error::Config(format!(
                "unknown filter kind `{}` (known: {})",
                spec.kind,
                self.kinds().join(", ")
            ))
        })?;
        if spec.side_languages.is_empty() {
            return Err(Error::Config(format!(
                "filter `{}` declares no side languages",
                spec.display_name()
            )));
        }
        builder(spec)
    }

    /// Builds an ordered chain; display names must be unique.
    pub fn build_chain(&self, specs: &[FilterSpec]) -> Result<FilterChain> {
        let mut filters = Vec::with_capacity(specs.len());
        for spec in specs {
            let name = spec.display_name().to_owned();
            if filters.iter().any(|(n, _): &(String, _)| *n == name) {
                return Err(Error::Config(format!(
                    "duplicate filter name `{name}`; give each filter a distinct `name`"
                )));
            }
            filters.push((name, self.build(spec)?));
        }
        let arity = specs.first().map(|s| s.side_languages.len());
        if let Some(bad) = specs.iter().find(|s| Some(s.side_languages.len()) != arity) {
            return Err(Error::Config(format!(
                "filter `{}` expects {} sides, the chain expects {}",
                bad.display_name(),
                bad.side_languages.len(),
                arity.unwrap_or(0)
            )));
        }
        Ok(FilterChain {
            filters,
            sides: arity,
        })
    }
}

/// Named filters applied in order.
pub struct FilterChain {
    filters: Vec<(String, Box<dyn Filter>)>,
    sides: Option<usize>,
}

impl FilterChain {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.filters.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    fn check_arity(&self, unit: UnitRef<'_>) -> Result<()> {
        match self.sides {
            Some(n) if n != unit.segments.len() => Err(Error::Invalid(format!(
                "unit {} has {} segments, filters expect {n}",
                unit.index,
                unit.segments.len()
            ))),
            _ => Ok(()),
        }
    }

    fn score_one(&self, name: &str, filter: &dyn Filter, unit: UnitRef<'_>) -> Result<ScoreVector> {
        let score = filter.score(unit)?;
        if !score.is_finite() {
            return Err(Error::NonFinite(name.to_owned()));
        }
        debug_assert_eq!(score.len(), filter.arity());
        Ok(score)
    }

    /// Index of the first filter rejecting `unit`, or `None` if all accept.
    pub fn first_rejection(&self, unit: UnitRef<'_>) -> Result<Option<usize>> {
        self.check_arity(unit)?;
        for (i, (name, filter)) in self.filters.iter().enumerate() {
            let score = self.score_one(name, filter.as_ref(), unit)?;
            if !filter.accept(&score) {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// All filter scores for `unit`, in chain order.
    pub fn scores(&self, unit: UnitRef<'_>) -> Result<Vec<(&str, ScoreVector)>> {
        self.check_arity(unit)?;
        self.filters
            .iter()
            .map(|(name, filter)| Ok((name.as_str(), self.score_one(name, filter.as_ref(), unit)?)))
            .collect()
    }
}

/// Rejections attributed to the first filter that rejected each unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionCounts {
    pub seen: usize,
    pub kept: usize,
    pub by_filter: Vec<(String, usize)>,
}

/// Streaming conjunction of a filter chain; see [`apply_filters`].
pub struct ApplyFilters<'c, I> {
    units: I,
    chain: &'c FilterChain,
    counts: RejectionCounts,
}

impl<I> ApplyFilters<'_, I> {
    pub fn counts(&self) -> &RejectionCounts {
        &self.counts
    }

    pub fn into_counts(self) -> RejectionCounts {
        self.counts
    }
}

impl<I: Iterator<Item = Vec<String>>> Iterator for ApplyFilters<'_, I> {
    type Item = Result<Vec<String>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let unit = self.units.next()?;
            let index = self.counts.seen;
            self.counts.seen += 1;
            match self.chain.first_rejection(UnitRef {
                index,
                segments: &unit,
            }) {
                Ok(None) => {
                    self.counts.kept += 1;
                    return Some(Ok(unit));
                }
                Ok(Some(f)) => self.counts.by_filter[f].1 += 1,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Keeps a unit iff every filter in `chain` accepts it; order is preserved.
pub fn apply_filters<I>(units: I, chain: &FilterChain) -> ApplyFilters<'_, I::IntoIter>
where
    I: IntoIterator<Item = Vec<String>>,
{
    ApplyFilters {
        units: units.into_iter(),
        chain,
        counts: RejectionCounts {
            by_filter: chain.names().map(|n| (n.to_owned(), 0)).collect(),
            ..Default::default()
        },
    }
}

/// Writes one JSON object per unit mapping filter name to its score vector.
/// Returns the number of lines written.
pub fn dump_scores<I, W>(units: I, chain: &FilterChain, sink: &mut W) -> Result<usize>
where
    I: IntoIterator<Item = Vec<String>>,
    W: Write,
{
    let mut written = 0;
    let mut line = String::new();
    for (index, unit) in units.into_iter().enumerate() {
        line.clear();
        line.push('{');
        for (i, (name, score)) in chain
            .scores(UnitRef {
                index,
                segments: &unit,
            })?
            .into_iter()
            .enumerate()
        {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&serde_json::to_string(name)?);
            line.push(':');
            line.push_str(&serde_json::to_string(&score)?);
        }
        line.push_str("}\n");
        sink.write_all(line.as_bytes())?;
        written += 1;
    }
    sink.flush()?;
    Ok(written)
}

/// The text tuple of an aligned unit, in (source, target) order.
pub fn unit_segments(unit: &AlignedUnit) -> Vec<String> {
    vec![unit.src.text().to_owned(), unit.trg.text().to_owned()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn langs() -> Vec<LanguageTag> {
        vec!["en".parse().unwrap(), "fi".parse().unwrap()]
    }

    fn row(a: &str, b: &str) -> Vec<String> {
        vec![a.to_owned(), b.to_owned()]
    }

    #[test]
    fn unknown_kind_and_missing_params() {
        let reg = FilterRegistry::default();
        let err = reg
            .build(&FilterSpec::new("nope", json!({}), langs()))
            .err()
            .unwrap();
        assert!(err.to_string().contains("nope"));
        let err = reg
            .build(&FilterSpec::new("length", json!({"unit": "word"}), langs()))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let spec = FilterSpec::new("nonprintable", json!({}), langs());
        assert!(FilterRegistry::default()
            .build_chain(&[spec.clone(), spec.clone()])
            .is_err());
        assert!(FilterRegistry::default()
            .build_chain(&[spec.clone(), spec.named("again")])
            .is_ok());
    }

    #[test]
    fn empty_chain_is_identity() {
        let chain = FilterRegistry::default().build_chain(&[]).unwrap();
        let rows = vec![row("a", "b"), row("", "\u{7}")];
        let kept: Vec<_> = apply_filters(rows.clone(), &chain)
            .map(Result::unwrap)
            .collect();
        assert_eq!(kept, rows);
    }

    #[test]
    fn first_rejecting_filter_is_attributed() {
        let chain = FilterRegistry::default()
            .build_chain(&[
                FilterSpec::new(
                    "length",
                    json!({"unit": "word", "min_length": 1, "max_length": 3}),
                    langs(),
                ),
                FilterSpec::new("nonprintable", json!({}), langs()),
            ])
            .unwrap();
        let rows = vec![row("a b c d", "x"), row("a", "x\u{7}"), row("ok", "ok")];
        let mut run = apply_filters(rows, &chain);
        let kept: Vec<_> = run.by_ref().map(Result::unwrap).collect();
        assert_eq!(kept, vec![row("ok", "ok")]);
        assert_eq!(
            run.counts().by_filter,
            vec![("length".to_string(), 1), ("nonprintable".to_string(), 1)]
        );
        assert_eq!((run.counts().seen, run.counts().kept), (3, 1));
    }

    #[test]
    fn custom_filters_can_be_registered() {
        struct Always(bool);
        impl Filter for Always {
            fn arity(&self) -> usize {
                1
            }
            fn columns(&self) -> Vec<String> {
                vec!["always".into()]
            }
            fn score(&self, _: UnitRef<'_>) -> Result<ScoreVector> {
                Ok(ScoreVector::new(vec![ScoreValue::Bool(self.0)]))
            }
            fn accept(&self, s: &ScoreVector) -> bool {
                s.values()[0] == ScoreValue::Bool(true)
            }
        }
        let mut reg = FilterRegistry::default();
        reg.register("never", |_| Ok(Box::new(Always(false))));
        let chain = reg
            .build_chain(&[FilterSpec::new("never", json!({}), langs())])
            .unwrap();
        assert_eq!(apply_filters(vec![row("a", "b")], &chain).count(), 0);

        let mut out = Vec::new();
        dump_scores(vec![row("a", "b")], &chain, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "{\"never\":[false]}\n");
    }

    #[test]
    fn dump_scores_lines() {
        let chain = FilterRegistry::default()
            .build_chain(&[
                FilterSpec::new(
                    "length",
                    json!({"unit": "word", "min_length": 1, "max_length": 100}),
                    langs(),
                ),
                FilterSpec::new(
                    "length_ratio",
                    json!({"unit": "char", "threshold": 3}),
                    langs(),
                ),
            ])
            .unwrap();
        let mut out = Vec::new();
        assert_eq!(
            dump_scores(Vec::<Vec<String>>::new(), &chain, &mut out).unwrap(),
            0
        );
        assert!(out.is_empty());
        let n = dump_scores(
            vec![row("a b c", "x y"), row("abc", "ab")],
            &chain,
            &mut out,
        )
        .unwrap();
        assert_eq!(n, 2);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"length\":[3,2],\"length_ratio\":[1.6666666666666667]}\n{\"length\":[1,1],\"length_ratio\":[1.5]}\n"
        );
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let chain = FilterRegistry::default()
            .build_chain(&[FilterSpec::new("nonprintable", json!({}), langs())])
            .unwrap();
        let mut run = apply_filters(vec![vec!["one".to_string()]], &chain);
        assert!(run.next().unwrap().is_err());
    }
}
