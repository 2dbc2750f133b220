//! Pivot triangulation: derive an X-Y bitext from P-X and P-Y bitexts that
//! share pivot-language sentences.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Bitext;
use crate::text;

/// How pivot sentences are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotMatch {
    /// Identical text after NFC normalization.
    #[default]
    Exact,
    /// Lowercased, whitespace collapsed.
    Normalized,
}

impl PivotMatch {
    pub fn key(self, pivot: &str) -> String {
        let nfc = text::nfc(pivot);
        match self {
            PivotMatch::Exact => nfc,
            PivotMatch::Normalized => text::collapse_whitespace(&nfc.to_lowercase()),
        }
    }
}

/// Joins `(pivot, x)` and `(pivot, y)` pairs on matching pivots.
///
/// Output is grouped by pivot in order of first occurrence in `pivot_x`;
/// within a pivot, `x` follows `pivot_x` order and `y` follows `pivot_y`
/// order. Repeated `(x, y)` pairs are emitted once.
pub fn triangulate_pairs<A, B>(
    pivot_x: &[(A, A)],
    pivot_y: &[(B, B)],
    mode: PivotMatch,
) -> Vec<(String, String)>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    let mut y_by_pivot: HashMap<String, Vec<usize>> = HashMap::new();
    for (j, (p, _)) in pivot_y.iter().enumerate() {
        y_by_pivot.entry(mode.key(p.as_ref())).or_default().push(j);
    }
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut group_of: HashMap<String, usize> = HashMap::new();
    for (i, (p, _)) in pivot_x.iter().enumerate() {
        let key = mode.key(p.as_ref());
        if !y_by_pivot.contains_key(&key) {
            continue;
        }
        match group_of.get(&key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                group_of.insert(key.clone(), groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for (key, xs) in &groups {
        let ys = &y_by_pivot[key];
        for &i in xs {
            for &j in ys {
                let pair = (pivot_x[i].1.as_ref(), pivot_y[j].1.as_ref());
                if seen.insert(pair) {
                    out.push((pair.0.to_owned(), pair.1.to_owned()));
                }
            }
        }
    }
    out
}

/// Triangulates two bitexts whose source side is the pivot language.
pub fn triangulate(pivot_x: &Bitext, pivot_y: &Bitext, mode: PivotMatch) -> Result<Bitext> {
    let px: Vec<(&str, &str)> = pivot_x.text_pairs().collect();
    let py: Vec<(&str, &str)> = pivot_y.text_pairs().collect();
    Bitext::from_pairs(
        pivot_x.trg_lang().clone(),
        pivot_y.trg_lang().clone(),
        triangulate_pairs(&px, &py, mode),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(data: &[(&str, &str)]) -> Vec<(String, String)> {
        data.iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn brute_force(
        px: &[(String, String)],
        py: &[(String, String)],
        mode: PivotMatch,
    ) -> Vec<(String, String)> {
        let mut keys: Vec<String> = Vec::new();
        for (p, _) in px {
            let k = mode.key(p);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut out: Vec<(String, String)> = Vec::new();
        for k in &keys {
            for (p, x) in px {
                for (q, y) in py {
                    if mode.key(p) == *k && mode.key(q) == *k {
                        let pair = (x.clone(), y.clone());
                        if !out.contains(&pair) {
                            out.push(pair);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_match() {
        let out = triangulate_pairs(
            &pairs(&[("hello", "hei")]),
            &pairs(&[("hello", "hola")]),
            PivotMatch::Exact,
        );
        assert_eq!(out, pairs(&[("hei", "hola")]));
    }

    #[test]
    fn no_shared_pivot() {
        let out = triangulate_pairs(
            &pairs(&[("a", "x")]),
            &pairs(&[("b", "y")]),
            PivotMatch::Exact,
        );
        assert!(out.is_empty());
    }

    #[test]
    fn repeated_pivot_emits_product() {
        let px = pairs(&[("a", "x1"), ("a", "x2")]);
        let py = pairs(&[("a", "y1"), ("a", "y2")]);
        let out = triangulate_pairs(&px, &py, PivotMatch::Exact);
        assert_eq!(
            out,
            pairs(&[("x1", "y1"), ("x1", "y2"), ("x2", "y1"), ("x2", "y2")])
        );
        let dup = pairs(&[("a", "x1"), ("a", "x1")]);
        assert_eq!(triangulate_pairs(&dup, &py, PivotMatch::Exact).len(), 2);
    }

    #[test]
    fn normalized_matching() {
        let px = pairs(&[("Hello  World", "x")]);
        let py = pairs(&[("hello world", "y")]);
        assert!(triangulate_pairs(&px, &py, PivotMatch::Exact).is_empty());
        assert_eq!(
            triangulate_pairs(&px, &py, PivotMatch::Normalized),
            pairs(&[("x", "y")])
        );
    }

    #[test]
    fn bitext_languages() {
        let en_fi = Bitext::from_pairs(
            "en".parse().unwrap(),
            "fi".parse().unwrap(),
            [("hello", "hei")],
        )
        .unwrap();
        let en_es = Bitext::from_pairs(
            "en".parse().unwrap(),
            "es".parse().unwrap(),
            [("hello", "hola")],
        )
        .unwrap();
        let fi_es = triangulate(&en_fi, &en_es, PivotMatch::Exact).unwrap();
        assert_eq!(fi_es.src_lang().as_str(), "fi");
        assert_eq!(fi_es.trg_lang().as_str(), "es");
        assert_eq!(
            fi_es.text_pairs().collect::<Vec<_>>(),
            vec![("hei", "hola")]
        );
    }

    proptest! {
        #[test]
        fn equals_nested_loop_join(
            px in proptest::collection::vec(("[abA ]{1,2}", "[xy]{1,2}"), 0..40),
            py in proptest::collection::vec(("[abA ]{1,2}", "[uv]{1,2}"), 0..40),
            normalized: bool,
        ) {
            let mode = if normalized { PivotMatch::Normalized } else { PivotMatch::Exact };
            prop_assert_eq!(triangulate_pairs(&px, &py, mode), brute_force(&px, &py, mode));
        }
    }
}
