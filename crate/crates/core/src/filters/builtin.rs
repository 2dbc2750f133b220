use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;
use unicode_script::UnicodeScript;

use super::langid::LanguageProfiles;
use super::{Filter, FilterRegistry, FilterSpec, ScoreVector, UnitRef};
use crate::error::{Error, Result};
use crate::model::LanguageTag;
use crate::text::is_nonprintable;

pub(super) fn register_all(registry: &mut FilterRegistry) {
    registry.register("length", |spec| Ok(Box::new(Length::build(spec)?)));
    registry.register("length_ratio", |spec| {
        Ok(Box::new(LengthRatio::build(spec)?))
    });
    registry.register("char_score", |spec| Ok(Box::new(CharScore::build(spec)?)));
    registry.register("nonprintable", |spec| {
        Ok(Box::new(NonPrintable::build(spec)?))
    });
    registry.register("langid", |spec| Ok(Box::new(LangId::build(spec)?)));
    registry.register("similarity", |spec| Ok(Box::new(Similarity::build(spec)?)));
    registry.register("external", |spec| Ok(Box::new(External::build(spec)?)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Char,
    Word,
}

impl LengthUnit {
    fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Char => text.chars().count(),
            LengthUnit::Word => text.split_whitespace().count(),
        }
    }
}

fn side_labels(spec: &FilterSpec) -> Vec<String> {
    let name = spec.display_name();
    spec.side_languages
        .iter()
        .map(|l| format!("{name}.{l}"))
        .collect()
}

fn check_number(spec: &FilterSpec, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "filter `{}`: {what} must be finite",
            spec.display_name()
        )))
    }
}

/// Character or word count per side.
struct Length {
    unit: LengthUnit,
    min: f64,
    max: f64,
    columns: Vec<String>,
}

impl Length {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            unit: LengthUnit,
            min_length: f64,
            max_length: f64,
        }
        let p: Params = spec.params()?;
        check_number(spec, "min_length", p.min_length)?;
        check_number(spec, "max_length", p.max_length)?;
        if p.min_length > p.max_length {
            return Err(Error::Config(format!(
                "filter `{}`: min_length exceeds max_length",
                spec.display_name()
            )));
        }
        Ok(Length {
            unit: p.unit,
            min: p.min_length,
            max: p.max_length,
            columns: side_labels(spec),
        })
    }
}

impl Filter for Length {
    fn arity(&self) -> usize {
        self.columns.len()
    }

    fn columns(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers(
            unit.segments.iter().map(|s| self.unit.measure(s) as f64),
        ))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| self.min <= v && v <= self.max)
    }
}

/// Longest side divided by shortest side (shortest clamped to 1).
struct LengthRatio {
    unit: LengthUnit,
    threshold: f64,
    name: String,
}

impl LengthRatio {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            unit: LengthUnit,
            threshold: f64,
        }
        let p: Params = spec.params()?;
        check_number(spec, "threshold", p.threshold)?;
        Ok(LengthRatio {
            unit: p.unit,
            threshold: p.threshold,
            name: spec.display_name().to_owned(),
        })
    }
}

pub(crate) fn length_ratio(unit: LengthUnit, segments: &[String]) -> f64 {
    let lengths = segments.iter().map(|s| unit.measure(s));
    let (min, max) = lengths.fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
    if max == 0 {
        return 1.0;
    }
    max as f64 / min.max(1) as f64
}

impl Filter for LengthRatio {
    fn arity(&self) -> usize {
        1
    }

    fn columns(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers([length_ratio(
            self.unit,
            unit.segments,
        )]))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| v <= self.threshold)
    }
}

/// Share of alphabetic characters written in the expected script, per side.
/// A side without alphabetic characters scores 1.
struct CharScore {
    scripts: Vec<String>,
    threshold: f64,
    columns: Vec<String>,
}

impl CharScore {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            scripts: Vec<String>,
            threshold: f64,
        }
        let p: Params = spec.params()?;
        check_number(spec, "threshold", p.threshold)?;
        if p.scripts.len() != spec.side_languages.len() {
            return Err(Error::Config(format!(
                "filter `{}`: {} scripts for {} sides",
                spec.display_name(),
                p.scripts.len(),
                spec.side_languages.len()
            )));
        }
        Ok(CharScore {
            scripts: p.scripts.iter().map(|s| s.to_ascii_lowercase()).collect(),
            threshold: p.threshold,
            columns: side_labels(spec),
        })
    }
}

pub(crate) fn script_share(text: &str, script: &str) -> f64 {
    let (mut total, mut matching) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        total += 1;
        if c.script().full_name().eq_ignore_ascii_case(script) {
            matching += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        matching as f64 / total as f64
    }
}

impl Filter for CharScore {
    fn arity(&self) -> usize {
        self.columns.len()
    }

    fn columns(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers(
            unit.segments
                .iter()
                .zip(&self.scripts)
                .map(|(s, script)| script_share(s, script)),
        ))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| v >= self.threshold)
    }
}

/// Number of control or unassigned code points per side.
struct NonPrintable {
    columns: Vec<String>,
}

impl NonPrintable {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {}
        let _: Params = spec.params()?;
        Ok(NonPrintable {
            columns: side_labels(spec),
        })
    }
}

impl Filter for NonPrintable {
    fn arity(&self) -> usize {
        self.columns.len()
    }

    fn columns(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers(unit.segments.iter().map(|s| {
            s.chars().filter(|&c| is_nonprintable(c)).count() as f64
        })))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| v == 0.0)
    }
}

/// Identifier confidence for each side's declared language.
struct LangId {
    profiles: Arc<LanguageProfiles>,
    languages: Vec<LanguageTag>,
    threshold: f64,
    columns: Vec<String>,
}

impl LangId {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            threshold: f64,
            #[serde(default)]
            profiles: Option<PathBuf>,
        }
        let p: Params = spec.params()?;
        check_number(spec, "threshold", p.threshold)?;
        let profiles = match &p.profiles {
            Some(path) => LanguageProfiles::from_json(&std::fs::read_to_string(path)?)?,
            None => LanguageProfiles::bundled(),
        };
        if let Some(missing) = spec
            .side_languages
            .iter()
            .find(|l| profiles.get(l).is_none())
        {
            return Err(Error::Config(format!(
                "filter `{}`: no language profile for `{missing}`",
                spec.display_name()
            )));
        }
        Ok(LangId {
            profiles: Arc::new(profiles),
            languages: spec.side_languages.clone(),
            threshold: p.threshold,
            columns: side_labels(spec),
        })
    }
}

impl Filter for LangId {
    fn arity(&self) -> usize {
        self.columns.len()
    }

    fn columns(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers(
            unit.segments
                .iter()
                .zip(&self.languages)
                .map(|(s, lang)| self.profiles.confidence(s, lang)),
        ))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| v >= self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityDirection {
    /// Reject pairs that are too similar (copies, untranslated text).
    #[default]
    RejectHigh,
    RejectLow,
}

/// Normalized Levenshtein similarity between the two sides.
struct Similarity {
    threshold: f64,
    direction: SimilarityDirection,
    name: String,
}

impl Similarity {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            threshold: f64,
            #[serde(default)]
            direction: SimilarityDirection,
        }
        let p: Params = spec.params()?;
        check_number(spec, "threshold", p.threshold)?;
        if spec.side_languages.len() != 2 {
            return Err(Error::Config(format!(
                "filter `{}`: similarity compares exactly two sides",
                spec.display_name()
            )));
        }
        Ok(Similarity {
            threshold: p.threshold,
            direction: p.direction,
            name: spec.display_name().to_owned(),
        })
    }
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters; 1 for two empty strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    1.0 - prev[b.len()] as f64 / longest as f64
}

impl Filter for Similarity {
    fn arity(&self) -> usize {
        1
    }

    fn columns(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        Ok(ScoreVector::numbers([similarity(
            &unit.segments[0],
            &unit.segments[1],
        )]))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| match self.direction {
            SimilarityDirection::RejectHigh => v <= self.threshold,
            SimilarityDirection::RejectLow => v >= self.threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Comparator {
    #[serde(rename = "ge", alias = ">=")]
    AtLeast,
    #[serde(rename = "le", alias = "<=")]
    AtMost,
}

/// Scores read from a file with one number per corpus line.
struct External {
    values: Vec<f64>,
    comparator: Comparator,
    threshold: f64,
    name: String,
}

impl External {
    fn build(spec: &FilterSpec) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Params {
            path: PathBuf,
            comparator: Comparator,
            threshold: f64,
        }
        let p: Params = spec.params()?;
        check_number(spec, "threshold", p.threshold)?;
        let values = read_score_file(&p.path)?;
        Ok(External {
            values,
            comparator: p.comparator,
            threshold: p.threshold,
            name: spec.display_name().to_owned(),
        })
    }
}

/// Reads one finite decimal number per line.
pub fn read_score_file(path: &std::path::Path) -> Result<Vec<f64>> {
    crate::io::read_lines(path)?
        .iter()
        .enumerate()
        .map(|(n, line)| {
            let v: f64 = line.trim().parse().map_err(|_| {
                Error::Invalid(format!(
                    "{}:{}: `{line}` is not a number",
                    path.display(),
                    n + 1
                ))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Invalid(format!(
                    "{}:{}: non-finite score",
                    path.display(),
                    n + 1
                )))
            }
        })
        .collect()
}

impl Filter for External {
    fn arity(&self) -> usize {
        1
    }

    fn columns(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn score(&self, unit: UnitRef<'_>) -> Result<ScoreVector> {
        let value = self.values.get(unit.index).ok_or(Error::ScoreLength {
            available: self.values.len(),
            needed: unit.index + 1,
        })?;
        Ok(ScoreVector::numbers([*value]))
    }

    fn accept(&self, score: &ScoreVector) -> bool {
        score.iter_f64().all(|v| match self.comparator {
            Comparator::AtLeast => v >= self.threshold,
            Comparator::AtMost => v <= self.threshold,
        })
    }
}
