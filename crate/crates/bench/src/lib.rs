//! Synthetic inputs shared by the benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "the", "house", "is", "small", "and", "old", "talo", "on", "pieni", "ja", "vanha", "a", "cat",
    "kissa", "sleeps", "nukkuu", "under", "alla", "tree", "puu", "very", "hyvin", "Déjà", "vu",
];

/// `n` two-sided units with roughly 5% repeats.
pub fn units(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<String>> = Vec::with_capacity(n);
    for _ in 0..n {
        if !out.is_empty() && rng.gen_bool(0.05) {
            let i = rng.gen_range(0..out.len());
            out.push(out[i].clone());
            continue;
        }
        let side = |rng: &mut ChaCha8Rng| {
            let len = rng.gen_range(1..25);
            (0..len)
                .map(|_| *WORDS.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push(vec![side(&mut rng), side(&mut rng)]);
    }
    out
}

/// `(pivot, other)` pairs drawing pivots from a pool of `vocab` sentences.
pub fn pivot_pairs(n: usize, vocab: usize, tag: &str, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            (
                format!("pivot sentence {}", rng.gen_range(0..vocab)),
                format!("{tag} {i}"),
            )
        })
        .collect()
}

/// An XCES alignment with `n` links and the two documents it points to.
pub fn xces_fixture(n: usize) -> (String, String, String) {
    let mut align = String::from(
        "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<cesAlign version=\"1.0\">\n<linkGrp targType=\"s\" fromDoc=\"en/a.xml\" toDoc=\"fi/a.xml\">\n",
    );
    let mut src = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<document>\n");
    let mut trg = src.clone();
    for i in 1..=n {
        align.push_str(&format!(
            "<link certainty=\"0.{:03}\" xtargets=\"{i};{i}\" id=\"SL{i}\"/>\n",
            i % 1000
        ));
        src.push_str(&format!(
            "<s id=\"{i}\"><w>Sentence</w> <w>number</w> <w>{i}</w> .</s>\n"
        ));
        trg.push_str(&format!("<s id=\"{i}\">Lause numero {i} .</s>\n"));
    }
    align.push_str("</linkGrp>\n</cesAlign>\n");
    src.push_str("</document>\n");
    trg.push_str("</document>\n");
    (align, src, trg)
}
