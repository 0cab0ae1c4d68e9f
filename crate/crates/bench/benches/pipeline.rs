use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use infodemic_bench::{fixtures, page, COMPLETION};
use infodemic_core::agent::parse_action;
use infodemic_core::geoparse::{recognize_toponyms, Gazetteer};
use infodemic_core::ingest::extract_text;
use infodemic_core::summarize::chunk_text;
use infodemic_core::topic_model::synthetic::planted_corpus;
use infodemic_core::topic_model::{gibbs_sweep, LdaConfig, LdaModel};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use std::hint::black_box;

fn ingest(c: &mut Criterion) {
    let html = page("mayo", "mayo4");
    c.bench_function("extract_text/30kb", |b| b.iter(|| extract_text(black_box(&html)).unwrap()));
}

fn summarize(c: &mut Criterion) {
    let text = extract_text(&page("mayo", "mayo4")).unwrap().text;
    c.bench_function("chunk_text/30kb", |b| b.iter(|| chunk_text(black_box(&text), 3000, 100)));
}

fn geoparse(c: &mut Criterion) {
    let gazetteer = Gazetteer::load(&fixtures().join("gazetteer_mini.tsv")).unwrap();
    let text = extract_text(&page("bbc", "bbc1")).unwrap().text;
    c.bench_function("recognize_toponyms/article", |b| b.iter(|| recognize_toponyms(black_box(&text), &gazetteer)));
}

fn agent(c: &mut Criterion) {
    c.bench_function("parse_action", |b| b.iter(|| parse_action(black_box(COMPLETION)).unwrap()));
}

fn lda(c: &mut Criterion) {
    let (corpus, _) = planted_corpus(42);
    let config = LdaConfig { topics: 3, ..LdaConfig::default() };
    let model = LdaModel::initialize(&corpus, &config, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    c.bench_function("gibbs_sweep/planted", |b| {
        b.iter_batched_ref(|| model.clone(), |m| gibbs_sweep(m, &corpus, &mut rng), BatchSize::SmallInput)
    });
}

criterion_group!(benches, ingest, summarize, geoparse, agent, lda);
criterion_main!(benches);
