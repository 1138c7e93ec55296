use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use screenprio::lexical::{rank_topics, LexicalParams, Model, Ranker};
use screenprio::metrics::EvalOptions;
use screenprio::{evaluate, paired_ttest, ReprMode};

fn bench_evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for n in [100, 2_000] {
        let (topics, qrels, run) = screenprio_bench::judged_run(30, n, 0.05, 1);
        let opts = EvalOptions::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| evaluate(black_box(&run), &topics, &qrels, &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_rank(c: &mut Criterion) {
    let (topics, store) = screenprio_bench::corpus(5, 400, 2);
    let mut group = c.benchmark_group("rank");
    group.sample_size(20);
    for model in [Model::Bm25, Model::Qlm] {
        let ranker = Ranker::new(model, ReprMode::TiAb, LexicalParams::default()).unwrap();
        group.bench_function(ranker.default_tag(), |b| {
            b.iter(|| rank_topics(&ranker, black_box(&topics), &store, "bench").unwrap())
        });
    }
    group.finish();
}

fn bench_ttest(c: &mut Criterion) {
    let (a, b) = screenprio_bench::paired_samples(50, 3);
    c.bench_function("paired_ttest/50", |bench| {
        bench.iter(|| paired_ttest(black_box(&a), black_box(&b), 3).unwrap())
    });
}

criterion_group!(benches, bench_evaluate, bench_rank, bench_ttest);
criterion_main!(benches);
