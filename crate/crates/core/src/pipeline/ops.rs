//! Corpus preparation operations over parallel rows.
//!
//! A row is one line from each side of a parallel file set, so every
//! operation here keeps the sides in lockstep by construction.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::text::collapse_whitespace;

pub type Row = Vec<String>;

/// Concatenates row sets in the given order. All inputs must share an arity.
pub fn concat(inputs: Vec<Vec<Row>>) -> Result<Vec<Row>> {
    let mut arity = None;
    let mut out = Vec::with_capacity(inputs.iter().map(Vec::len).sum());
    for rows in inputs {
        if let Some(first) = rows.first() {
            match arity {
                None => arity = Some(first.len()),
                Some(a) if a != first.len() => {
                    return Err(Error::Invalid(format!(
                        "cannot concatenate {}-sided and {}-sided inputs",
                        a,
                        first.len()
                    )))
                }
                _ => {}
            }
        }
        out.extend(rows);
    }
    Ok(out)
}

/// Outcome of a line-range selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection<T> {
    pub rows: Vec<T>,
    /// Set when the request reached past the end of the input.
    pub truncated: bool,
}

pub fn head<T>(rows: impl IntoIterator<Item = T>, n: usize) -> Selection<T> {
    let rows: Vec<T> = rows.into_iter().take(n).collect();
    Selection {
        truncated: rows.len() < n,
        rows,
    }
}

pub fn tail<T>(rows: impl IntoIterator<Item = T>, n: usize) -> Selection<T> {
    let mut window = VecDeque::with_capacity(n.min(1 << 16));
    if n == 0 {
        return Selection {
            rows: Vec::new(),
            truncated: false,
        };
    }
    for row in rows {
        if window.len() == n {
            window.pop_front();
        }
        window.push_back(row);
    }
    Selection {
        truncated: window.len() < n,
        rows: window.into(),
    }
}

/// Lines `start..=end`, counted from 1.
pub fn slice<T>(
    rows: impl IntoIterator<Item = T>,
    start: usize,
    end: usize,
) -> Result<Selection<T>> {
    if start == 0 || end < start {
        return Err(Error::Config(format!(
            "slice needs 1 <= start <= end, got {start}..{end}"
        )));
    }
    let rows: Vec<T> = rows
        .into_iter()
        .skip(start - 1)
        .take(end - start + 1)
        .collect();
    Ok(Selection {
        truncated: rows.len() < end - start + 1,
        rows,
    })
}

/// Seeded reservoir sample of `size` rows without replacement, returned in
/// input order.
pub fn random_subset<T, R: Rng>(
    rows: impl IntoIterator<Item = T>,
    size: usize,
    rng: &mut R,
) -> Vec<T> {
    let mut reservoir: Vec<(usize, T)> = Vec::with_capacity(size.min(1 << 16));
    if size == 0 {
        return Vec::new();
    }
    for (i, row) in rows.into_iter().enumerate() {
        if reservoir.len() < size {
            reservoir.push((i, row));
        } else {
            let j = rng.gen_range(0..=i);
            if j < size {
                reservoir[j] = (i, row);
            }
        }
    }
    reservoir.sort_unstable_by_key(|(i, _)| *i);
    reservoir.into_iter().map(|(_, r)| r).collect()
}

/// Size of the first part: `proportion * n` rounded half up.
pub fn split_size(n: usize, proportion: f64) -> usize {
    let exact = proportion * n as f64;
    // tolerate representation error just below a .5 boundary
    ((exact + 0.5 + exact.abs() * 1e-12).floor() as usize).min(n)
}

/// Splits rows into two disjoint parts; membership is decided by a seeded
/// shuffle and each part keeps the original relative order.
pub fn split<T, R: Rng>(rows: Vec<T>, proportion: f64, rng: &mut R) -> Result<(Vec<T>, Vec<T>)> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::Config(format!(
            "split proportion must lie in (0, 1), got {proportion}"
        )));
    }
    let n = rows.len();
    let first = split_size(n, proportion);
    let mut in_first = vec![false; n];
    for i in index::sample(rng, n, first) {
        in_first[i] = true;
    }
    let (mut a, mut b) = (Vec::with_capacity(first), Vec::with_capacity(n - first));
    for (row, pick) in rows.into_iter().zip(in_first) {
        if pick {
            a.push(row)
        } else {
            b.push(row)
        }
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    All,
    /// `k` combinations per segment, drawn without replacement.
    Sample(usize),
}

/// Combines alternative translations of the same segments.
///
/// `sides[l][a][i]` is line `i` of alternative file `a` for side `l`. For each
/// segment index the output holds the cross product of the alternatives of
/// all sides (or a seeded sample of it), segment indexes ascending.
pub fn combine_translations<R: Rng>(
    sides: &[Vec<Vec<String>>],
    mode: CombineMode,
    rng: &mut R,
) -> Result<Vec<Row>> {
    if sides.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(empty) = sides.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!(
            "side {empty} has no alternative files"
        )));
    }
    let n = sides[0][0].len();
    for alternatives in sides {
        for file in alternatives {
            if file.len() != n {
                return Err(Error::LineCountMismatch {
                    left: n,
                    right: file.len(),
                });
            }
        }
    }
    let radices: Vec<usize> = sides.iter().map(Vec::len).collect();
    let total: usize = radices.iter().product();
    let mut out = Vec::new();
    let mut combo = vec![0usize; sides.len()];
    for i in 0..n {
        let picks: Vec<usize> = match mode {
            CombineMode::All => (0..total).collect(),
            CombineMode::Sample(k) if k >= total => (0..total).collect(),
            CombineMode::Sample(k) => {
                let mut picks = index::sample(rng, total, k).into_vec();
                picks.sort_unstable();
                picks
            }
        };
        for pick in picks {
            // mixed-radix decode, last side varies fastest
            let mut rest = pick;
            for (slot, radix) in combo.iter_mut().zip(&radices).rev() {
                *slot = rest % radix;
                rest /= radix;
            }
            out.push(
                combo
                    .iter()
                    .zip(sides)
                    .map(|(&a, alternatives)| alternatives[a][i].clone())
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Segment-level text preprocessors.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PreprocessorSpec {
    WhitespaceNormalize {
        #[serde(default)]
        sides: Option<Vec<usize>>,
    },
    RegexSub {
        pattern: String,
        replacement: String,
        #[serde(default)]
        sides: Option<Vec<usize>>,
    },
    Tokenize {
        #[serde(default)]
        sides: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone)]
pub enum Preprocessor {
    WhitespaceNormalize {
        sides: Option<Vec<usize>>,
    },
    RegexSub {
        regex: Regex,
        replacement: String,
        sides: Option<Vec<usize>>,
    },
    Tokenize {
        sides: Option<Vec<usize>>,
    },
}

impl Preprocessor {
    pub fn from_spec(spec: &PreprocessorSpec) -> Result<Self> {
        Ok(match spec {
            PreprocessorSpec::WhitespaceNormalize { sides } => Preprocessor::WhitespaceNormalize {
                sides: sides.clone(),
            },
            PreprocessorSpec::RegexSub {
                pattern,
                replacement,
                sides,
            } => Preprocessor::RegexSub {
                regex: Regex::new(pattern)
                    .map_err(|e| Error::Config(format!("regex `{pattern}`: {e}")))?,
                replacement: replacement.clone(),
                sides: sides.clone(),
            },
            PreprocessorSpec::Tokenize { sides } => Preprocessor::Tokenize {
                sides: sides.clone(),
            },
        })
    }

    fn sides(&self) -> Option<&[usize]> {
        match self {
            Preprocessor::WhitespaceNormalize { sides }
            | Preprocessor::RegexSub { sides, .. }
            | Preprocessor::Tokenize { sides } => sides.as_deref(),
        }
    }

    pub fn apply_text(&self, text: &str) -> String {
        match self {
            Preprocessor::WhitespaceNormalize { .. } => collapse_whitespace(text),
            Preprocessor::RegexSub {
                regex, replacement, ..
            } => regex.replace_all(text, replacement.as_str()).into_owned(),
            Preprocessor::Tokenize { .. } => tokenize(text),
        }
    }

    pub fn apply(&self, row: &mut Row) {
        for (i, side) in row.iter_mut().enumerate() {
            if self.sides().is_none_or(|s| s.contains(&i)) {
                *side = self.apply_text(side);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Word,
    Space,
    Punct(char),
}

fn class(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() || is_mark(c) {
        CharClass::Word
    } else {
        CharClass::Punct(c)
    }
}

fn is_mark(c: char) -> bool {
    use unicode_general_category::{get_general_category, GeneralCategory::*};
    matches!(
        get_general_category(c),
        NonspacingMark | SpacingMark | EnclosingMark
    )
}

/// Splits letter/digit runs from punctuation and symbols. Repeated identical
/// punctuation (`...`, `!!`) stays one token.
pub fn tokenize(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut prev = CharClass::Space;
    for c in text.chars() {
        let cur = class(c);
        if cur == CharClass::Space {
            prev = cur;
            out.push(' ');
            continue;
        }
        if prev != CharClass::Space && prev != cur {
            out.push(' ');
        }
        out.push(c);
        prev = cur;
    }
    collapse_whitespace(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(n: usize) -> Vec<Row> {
        (1..=n)
            .map(|i| vec![format!("s{i}"), format!("t{i}")])
            .collect()
    }

    #[test]
    fn concat_counts() {
        let out = concat(vec![rows(2), rows(3)]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(concat(vec![]).unwrap().is_empty());
        let three = concat(vec![rows(1), rows(4), rows(2)]).unwrap();
        assert!(three.iter().all(|r| r.len() == 2));
        assert_eq!(three.len(), 7);
        assert!(concat(vec![rows(1), vec![vec!["x".into()]]]).is_err());
    }

    #[test]
    fn ranges() {
        let h = head(rows(5), 2);
        assert_eq!(h.rows, rows(2));
        assert!(!h.truncated);
        assert!(head(rows(1), 2).truncated);

        let s = slice(rows(5), 2, 4).unwrap();
        assert_eq!(s.rows, rows(5)[1..4].to_vec());
        assert!(slice(rows(5), 4, 9).unwrap().truncated);
        assert!(slice(rows(5), 0, 2).is_err());
        assert!(slice(rows(5), 3, 2).is_err());

        assert!(tail(rows(5), 0).rows.is_empty());
        assert_eq!(tail(rows(5), 2).rows, rows(5)[3..].to_vec());
        assert!(tail(rows(2), 3).truncated);
    }

    #[test]
    fn subset_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_subset(rows(4), 10, &mut rng), rows(4));
        let a = random_subset(rows(50), 7, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_subset(rows(50), 7, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        // input order is kept
        let idx: Vec<usize> = a.iter().map(|r| r[0][1..].parse().unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subset_is_uniform() {
        let mut hits = [0u32; 10];
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pick = random_subset(0..10usize, 1, &mut rng);
            hits[pick[0]] += 1;
        }
        for h in hits {
            let freq = f64::from(h) / 10_000.0;
            assert!((freq - 0.1).abs() <= 0.01, "{hits:?}");
        }
    }

    #[test]
    fn split_sizes() {
        assert_eq!(split_size(4, 0.5), 2);
        assert_eq!(split_size(10, 0.8), 8);
        assert_eq!(split_size(5, 0.5), 3);
        assert_eq!(split_size(3, 0.5), 2);
        assert_eq!(split_size(10, 0.35), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = split(rows(10), 0.8, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<_> = a.into_iter().chain(b).collect();
        all.sort();
        let mut expected = rows(10);
        expected.sort();
        assert_eq!(all, expected);
        assert!(split(rows(3), 1.0, &mut rng).is_err());
    }

    fn alternatives(lang: &str, files: usize, lines: usize) -> Vec<Vec<String>> {
        (0..files)
            .map(|f| (0..lines).map(|i| format!("{lang}{f}-{i}")).collect())
            .collect()
    }

    #[test]
    fn product_of_alternatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sides = vec![alternatives("es", 3, 2), alternatives("fr", 3, 2)];
        let out = combine_translations(&sides, CombineMode::All, &mut rng).unwrap();
        assert_eq!(out.len(), 18);
        assert_eq!(out[0], ["es0-0", "fr0-0"]);
        assert_eq!(out[1], ["es0-0", "fr1-0"]);
        assert_eq!(out[8], ["es2-0", "fr2-0"]);
        assert_eq!(out[9], ["es0-1", "fr0-1"]);

        let one = vec![alternatives("a", 1, 3), alternatives("b", 1, 3)];
        let out = combine_translations(&one, CombineMode::All, &mut rng).unwrap();
        assert_eq!(
            out,
            vec![
                vec!["a0-0", "b0-0"],
                vec!["a0-1", "b0-1"],
                vec!["a0-2", "b0-2"]
            ]
        );
    }

    #[test]
    fn sampled_product_is_seeded() {
        let sides = vec![alternatives("es", 3, 4), alternatives("fr", 3, 4)];
        let run = |seed| {
            combine_translations(
                &sides,
                CombineMode::Sample(2),
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap()
        };
        let a = run(5);
        assert_eq!(a.len(), 8);
        assert_eq!(a, run(5));
        // no repeated combination within a segment
        for seg in a.chunks(2) {
            assert_ne!(seg[0], seg[1]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let uneven = vec![alternatives("es", 2, 3), vec![vec!["x".into(); 2]]];
        assert!(combine_translations(&uneven, CombineMode::All, &mut rng).is_err());
    }

    #[test]
    fn preprocessors() {
        let ws = Preprocessor::from_spec(&PreprocessorSpec::WhitespaceNormalize { sides: None })
            .unwrap();
        assert_eq!(ws.apply_text(" a\t b "), "a b");
        let re = Preprocessor::from_spec(&PreprocessorSpec::RegexSub {
            pattern: "[0-9]+".into(),
            replacement: "0".into(),
            sides: Some(vec![1]),
        })
        .unwrap();
        let mut row = vec!["page 42".to_string(), "page 42".to_string()];
        re.apply(&mut row);
        assert_eq!(row, ["page 42", "page 0"]);
        assert!(Preprocessor::from_spec(&PreprocessorSpec::RegexSub {
            pattern: "(".into(),
            replacement: String::new(),
            sides: None
        })
        .is_err());
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Hi, world."), "Hi , world .");
        assert_eq!(tokenize("Wait..."), "Wait ...");
        assert_eq!(tokenize("(3+4)=7"), "( 3 + 4 ) = 7");
        assert_eq!(tokenize("  Päivää!  "), "Päivää !");
        assert_eq!(tokenize(""), "");
    }
}
