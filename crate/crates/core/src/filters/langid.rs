//! Rank-order character n-gram language identification.
//!
//! Each language is represented by its 400 most frequent character 1- to
//! 4-grams in rank order. A text is compared to a profile by summing, over
//! the text's own ranked n-grams, the displacement between the two ranks
//! (a fixed maximum penalty for n-grams the profile lacks). The summed
//! distance is normalized by its maximum and mapped to a confidence
//! `1 - distance / max_distance` in [0, 1].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LanguageTag;

pub const PROFILE_SIZE: usize = 400;
pub const MAX_ORDER: usize = 4;
pub const MIN_TRAINING_CHARS: usize = 1000;

/// Ranked n-grams of one text or language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    ngrams: Vec<String>,
    #[serde(skip)]
    ranks: HashMap<String, usize>,
}

impl Profile {
    pub fn from_text(text: &str) -> Self {
        Self::from_ranked(ranked_ngrams(text))
    }

    fn from_ranked(ngrams: Vec<String>) -> Self {
        let ranks = ngrams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Profile { ngrams, ranks }
    }

    pub fn ngrams(&self) -> &[String] {
        &self.ngrams
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    /// Confidence in [0, 1] that `text_profile` belongs to this profile.
    pub fn confidence(&self, text_profile: &Profile) -> f64 {
        if text_profile.is_empty() {
            return 0.0;
        }
        let max_penalty = PROFILE_SIZE;
        let distance: usize = text_profile
            .ngrams
            .iter()
            .enumerate()
            .map(|(rank, g)| match self.ranks.get(g) {
                Some(&r) => rank.abs_diff(r).min(max_penalty),
                None => max_penalty,
            })
            .sum();
        let max_distance = (text_profile.ngrams.len() * max_penalty) as f64;
        (1.0 - distance as f64 / max_distance).clamp(0.0, 1.0)
    }
}

fn ranked_ngrams(text: &str) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let lowered = text.to_lowercase();
    let mut chars: Vec<char> = Vec::new();
    for word in lowered
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
    {
        chars.clear();
        chars.push('_');
        chars.extend(word.chars());
        chars.push('_');
        for n in 1..=MAX_ORDER {
            for window in chars.windows(n) {
                if window.iter().all(|&c| c == '_') {
                    continue;
                }
                *counts.entry(window.iter().collect()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(PROFILE_SIZE);
    ranked.into_iter().map(|(g, _)| g).collect()
}

/// One profile per language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageProfiles {
    profiles: BTreeMap<LanguageTag, Profile>,
}

impl LanguageProfiles {
    pub fn train<S: AsRef<str>>(
        samples: impl IntoIterator<Item = (LanguageTag, S)>,
    ) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        for (lang, text) in samples {
            let text = text.as_ref();
            let chars = text.chars().count();
            if chars < MIN_TRAINING_CHARS {
                return Err(Error::Training(format!(
                    "sample for `{lang}` has {chars} characters, need at least {MIN_TRAINING_CHARS}"
                )));
            }
            profiles.insert(lang, Profile::from_text(text));
        }
        if profiles.is_empty() {
            return Err(Error::Training("no training samples".into()));
        }
        Ok(LanguageProfiles { profiles })
    }

    /// Profiles trained on the language samples shipped with the crate.
    pub fn bundled() -> Self {
        Self::train(
            bundled::TRAINING
                .iter()
                .map(|(code, text)| (code.parse::<LanguageTag>().expect("bundled tag"), *text)),
        )
        .expect("bundled samples are long enough")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut parsed: LanguageProfiles = serde_json::from_str(json)?;
        for profile in parsed.profiles.values_mut() {
            *profile = Profile::from_ranked(std::mem::take(&mut profile.ngrams));
        }
        Ok(parsed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profiles serialize")
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageTag> {
        self.profiles.keys()
    }

    pub fn get(&self, lang: &LanguageTag) -> Option<&Profile> {
        self.profiles.get(lang)
    }

    /// Confidence that `text` is written in `lang`; 0 for unknown languages.
    pub fn confidence(&self, text: &str, lang: &LanguageTag) -> f64 {
        match self.profiles.get(lang) {
            Some(p) => p.confidence(&Profile::from_text(text)),
            None => 0.0,
        }
    }

    /// All languages ranked by confidence, best first; ties by tag order.
    pub fn classify(&self, text: &str) -> Vec<(LanguageTag, f64)> {
        let text_profile = Profile::from_text(text);
        let mut scored: Vec<_> = self
            .profiles
            .iter()
            .map(|(lang, p)| (lang.clone(), p.confidence(&text_profile)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }
}

pub mod bundled {
    //! Small monolingual samples for five languages: a training part and
    //! held-out sentences (one per line).

    pub const TRAINING: [(&str, &str); 5] = [
        ("de", include_str!("../../data/langid/de.train.txt")),
        ("en", include_str!("../../data/langid/en.train.txt")),
        ("es", include_str!("../../data/langid/es.train.txt")),
        ("fi", include_str!("../../data/langid/fi.train.txt")),
        ("fr", include_str!("../../data/langid/fr.train.txt")),
    ];

    pub const HELD_OUT: [(&str, &str); 5] = [
        ("de", include_str!("../../data/langid/de.test.txt")),
        ("en", include_str!("../../data/langid/en.test.txt")),
        ("es", include_str!("../../data/langid/es.test.txt")),
        ("fi", include_str!("../../data/langid/fi.test.txt")),
        ("fr", include_str!("../../data/langid/fr.test.txt")),
    ];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> LanguageTag {
        s.parse().unwrap()
    }

    #[test]
    fn ngram_extraction() {
        let ranked = ranked_ngrams("ab ab");
        // "_ab_" twice: a, b, _a, ab, b_, _ab, ab_, _ab_
        assert_eq!(ranked.len(), 8);
        assert!(ranked.contains(&"_ab_".to_string()));
        assert!(!ranked.contains(&"_".to_string()));
        assert!(ranked_ngrams("12 !!").is_empty());
    }

    #[test]
    fn short_samples_are_rejected() {
        let err = LanguageProfiles::train([(tag("en"), "too short")]).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn empty_text_has_zero_confidence() {
        let profiles = LanguageProfiles::bundled();
        for (_, c) in profiles.classify("") {
            assert_eq!(c, 0.0);
        }
        assert_eq!(profiles.confidence("hello there", &tag("sv")), 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        assert_eq!(LanguageProfiles::bundled(), LanguageProfiles::bundled());
        for (code, text) in bundled::TRAINING {
            assert!(text.chars().count() >= MIN_TRAINING_CHARS, "{code}");
        }
    }

    #[test]
    fn json_round_trip() {
        let profiles = LanguageProfiles::bundled();
        let back = LanguageProfiles::from_json(&profiles.to_json()).unwrap();
        assert_eq!(back, profiles);
        let text = "Das Wetter ist heute wirklich sehr schön gewesen";
        assert_eq!(back.classify(text), profiles.classify(text));
    }

    #[test]
    fn identical_profile_is_fully_confident() {
        let p = Profile::from_text("the quick brown fox jumps over the lazy dog");
        assert_eq!(p.confidence(&p), 1.0);
    }
}
