//! Domain types shared by every module. Nothing in here touches I/O.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::text;

/// A language code such as `en`, `fin` or `pt_br`.
///
/// The base code is two or three lowercase ASCII letters, optionally followed
/// by `_` and a two to four letter region or script suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if Self::is_valid(&code) {
            Ok(LanguageTag(code))
        } else {
            Err(Error::Invalid(format!("language tag `{code}`")))
        }
    }

    fn is_valid(code: &str) -> bool {
        let (base, region) = match code.split_once('_') {
            Some((b, r)) => (b, Some(r)),
            None => (code, None),
        };
        let base_ok = (2..=3).contains(&base.len()) && base.bytes().all(|b| b.is_ascii_lowercase());
        let region_ok = region.is_none_or(|r| {
            (2..=4).contains(&r.len()) && r.bytes().all(|b| b.is_ascii_alphabetic())
        });
        base_ok && region_ok
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageTag::new(s)
    }
}

impl Serialize for LanguageTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LanguageTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        LanguageTag::new(s).map_err(serde::de::Error::custom)
    }
}

/// One text unit in one language together with the sentence IDs it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    lang: LanguageTag,
    text: String,
    ids: Vec<String>,
}

impl Segment {
    /// Strict constructor: rejects text with raw newlines/tabs and repeated IDs.
    pub fn new(lang: LanguageTag, text: impl Into<String>, ids: Vec<String>) -> Result<Self> {
        let text = text.into();
        if text.contains(['\n', '\t', '\r']) {
            return Err(Error::Invalid(format!(
                "segment text contains a newline or tab: {text:?}"
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Invalid(format!(
                "duplicate sentence id `{dup}` in segment"
            )));
        }
        Ok(Segment {
            lang,
            text: text::nfc(&text),
            ids,
        })
    }

    /// Ingest constructor: escapes newlines/tabs to spaces before validating.
    pub fn ingest(lang: LanguageTag, text: &str, ids: Vec<String>) -> Result<Self> {
        Segment::new(lang, text::escape_controls(text), ids)
    }

    pub fn lang(&self) -> &LanguageTag {
        &self.lang
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty() && self.ids.is_empty()
    }
}

/// A link of m source sentences to n target sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUnit {
    pub src: Segment,
    pub trg: Segment,
    pub certainty: Option<f64>,
    pub link_id: Option<String>,
}

impl AlignedUnit {
    pub fn new(src: Segment, trg: Segment) -> Self {
        AlignedUnit {
            src,
            trg,
            certainty: None,
            link_id: None,
        }
    }

    /// True when either side has no sentences at all.
    pub fn is_empty_link(&self) -> bool {
        self.src.is_empty() || self.trg.is_empty()
    }

    /// Link shape as (source sentence count, target sentence count).
    pub fn shape(&self) -> (usize, usize) {
        (self.src.ids.len(), self.trg.ids.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bitext {
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
    units: Vec<AlignedUnit>,
}

impl Bitext {
    pub fn new(src_lang: LanguageTag, trg_lang: LanguageTag) -> Self {
        Bitext {
            src_lang,
            trg_lang,
            units: Vec::new(),
        }
    }

    pub fn with_units(
        src_lang: LanguageTag,
        trg_lang: LanguageTag,
        units: Vec<AlignedUnit>,
    ) -> Result<Self> {
        let mut bitext = Bitext::new(src_lang, trg_lang);
        for unit in units {
            bitext.push(unit)?;
        }
        Ok(bitext)
    }

    /// Builds a bitext from plain text pairs (no IDs, no certainty).
    pub fn from_pairs<S: AsRef<str>>(
        src_lang: LanguageTag,
        trg_lang: LanguageTag,
        pairs: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self> {
        let mut bitext = Bitext::new(src_lang, trg_lang);
        for (s, t) in pairs {
            let src = Segment::ingest(bitext.src_lang.clone(), s.as_ref(), Vec::new())?;
            let trg = Segment::ingest(bitext.trg_lang.clone(), t.as_ref(), Vec::new())?;
            bitext.units.push(AlignedUnit::new(src, trg));
        }
        Ok(bitext)
    }

    pub fn push(&mut self, unit: AlignedUnit) -> Result<()> {
        if unit.src.lang != self.src_lang || unit.trg.lang != self.trg_lang {
            return Err(Error::Invalid(format!(
                "unit languages {}-{} do not match bitext {}-{}",
                unit.src.lang, unit.trg.lang, self.src_lang, self.trg_lang
            )));
        }
        self.units.push(unit);
        Ok(())
    }

    pub fn src_lang(&self) -> &LanguageTag {
        &self.src_lang
    }

    pub fn trg_lang(&self) -> &LanguageTag {
        &self.trg_lang
    }

    pub fn units(&self) -> &[AlignedUnit] {
        &self.units
    }

    pub fn into_units(self) -> Vec<AlignedUnit> {
        self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Keeps the units for which `keep` holds, preserving order.
    pub fn retain(mut self, keep: impl FnMut(&AlignedUnit) -> bool) -> Self {
        self.units.retain(keep);
        self
    }

    /// Swaps source and target.
    pub fn flipped(self) -> Self {
        Bitext {
            src_lang: self.trg_lang,
            trg_lang: self.src_lang,
            units: self
                .units
                .into_iter()
                .map(|u| AlignedUnit {
                    src: u.trg,
                    trg: u.src,
                    certainty: u.certainty,
                    link_id: u.link_id,
                })
                .collect(),
        }
    }

    pub fn text_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.units.iter().map(|u| (u.src.text(), u.trg.text()))
    }
}

/// Ordered (source, target) key, displayed as `en-fi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguagePairKey {
    pub source: LanguageTag,
    pub target: LanguageTag,
}

impl LanguagePairKey {
    pub fn new(source: LanguageTag, target: LanguageTag) -> Self {
        LanguagePairKey { source, target }
    }
}

impl fmt::Display for LanguagePairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LanguagePairKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Invalid(format!("language pair `{s}`")))?;
        Ok(LanguagePairKey::new(a.parse()?, b.parse()?))
    }
}

impl Serialize for LanguagePairKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguagePairKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inputs for temperature-based sampling across language pairs.
///
/// `alpha` is the temperature exponent applied to each pair's share
/// `p_l = n_l / Σn`; `max_size` is the sample size given to the largest pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    alpha: f64,
    max_size: u64,
    sizes: BTreeMap<LanguagePairKey, u64>,
}

impl SamplingSpec {
    pub fn new(alpha: f64, max_size: u64, sizes: BTreeMap<LanguagePairKey, u64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if max_size == 0 {
            return Err(Error::Config("max_size must be positive".into()));
        }
        if sizes.is_empty() {
            return Err(Error::Config(
                "sampling needs at least one language pair".into(),
            ));
        }
        if let Some((key, _)) = sizes.iter().find(|(_, &n)| n == 0) {
            return Err(Error::Config(format!("language pair {key} has no data")));
        }
        Ok(SamplingSpec {
            alpha,
            max_size,
            sizes,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_size(&self) -> u64 {
        self.max_size
    }

    pub fn sizes(&self) -> &BTreeMap<LanguagePairKey, u64> {
        &self.sizes
    }
}
