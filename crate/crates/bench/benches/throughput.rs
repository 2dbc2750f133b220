use bitextkit::filters::{self, FilterRegistry, FilterSpec, KeyParams, LanguageProfiles};
use bitextkit::pipeline::{triangulate_pairs, PivotMatch};
use bitextkit::xces::{self, DanglingIds};
use bitextkit::LanguageTag;
use bitextkit_bench::{pivot_pairs, units, xces_fixture};
use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use serde_json::json;

fn langs() -> Vec<LanguageTag> {
    vec!["en".parse().unwrap(), "fi".parse().unwrap()]
}

fn filter_chain(c: &mut Criterion) {
    let data = units(20_000, 1);
    let specs = vec![
        FilterSpec::new(
            "length",
            json!({"unit": "word", "min_length": 1, "max_length": 20}),
            langs(),
        ),
        FilterSpec::new(
            "length_ratio",
            json!({"unit": "char", "threshold": 3.0}),
            langs(),
        ),
        FilterSpec::new("nonprintable", json!({}), langs()),
        FilterSpec::new("similarity", json!({"threshold": 0.9}), langs()),
    ];
    let chain = FilterRegistry::default().build_chain(&specs).unwrap();
    let mut g = c.benchmark_group("filters");
    g.throughput(Throughput::Elements(data.len() as u64));
    g.bench_function("four_filter_chain", |b| {
        b.iter_batched(
            || data.clone(),
            |d| {
                filters::apply_filters(d, &chain)
                    .filter(Result::is_ok)
                    .count()
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn dedup(c: &mut Criterion) {
    let data = units(100_000, 2);
    let mut g = c.benchmark_group("dedup");
    g.throughput(Throughput::Elements(data.len() as u64));
    for (name, params) in [
        ("exact", KeyParams::default()),
        (
            "folded",
            KeyParams {
                fold_case: true,
                letters_only: true,
                sides: None,
            },
        ),
    ] {
        g.bench_function(name, |b| {
            b.iter(|| filters::dedup(data.iter().cloned(), &params).count())
        });
    }
    g.finish();
}

fn triangulate(c: &mut Criterion) {
    let x = pivot_pairs(50_000, 40_000, "x", 3);
    let y = pivot_pairs(50_000, 40_000, "y", 4);
    let mut g = c.benchmark_group("triangulate");
    g.throughput(Throughput::Elements((x.len() + y.len()) as u64));
    g.bench_function("exact_50k", |b| {
        b.iter(|| triangulate_pairs(black_box(&x), black_box(&y), PivotMatch::Exact).len())
    });
    g.finish();
}

fn xces_parse(c: &mut Criterion) {
    let (align, src, trg) = xces_fixture(20_000);
    let (en, fi) = (langs()[0].clone(), langs()[1].clone());
    let mut g = c.benchmark_group("xces");
    g.throughput(Throughput::Elements(20_000));
    g.bench_function("parse_and_resolve", |b| {
        b.iter(|| {
            let groups = xces::parse_alignment(align.as_bytes()).unwrap();
            let from = xces::parse_document(src.as_bytes(), "en/a.xml").unwrap();
            let to = xces::parse_document(trg.as_bytes(), "fi/a.xml").unwrap();
            xces::resolve(&groups[0], &from, &to, &en, &fi, DanglingIds::Error)
                .unwrap()
                .0
                .len()
        })
    });
    g.finish();
}

fn langid(c: &mut Criterion) {
    let profiles = LanguageProfiles::bundled();
    let lines: Vec<String> = units(2_000, 5).into_iter().map(|u| u[0].clone()).collect();
    let mut g = c.benchmark_group("langid");
    g.throughput(Throughput::Elements(lines.len() as u64));
    g.bench_function("classify_bundled", |b| {
        b.iter(|| {
            lines
                .iter()
                .map(|l| profiles.classify(l).len())
                .sum::<usize>()
        })
    });
    g.finish();
}

criterion_group!(
    benches,
    filter_chain,
    dedup,
    triangulate,
    xces_parse,
    langid
);
criterion_main!(benches);
