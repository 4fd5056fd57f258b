use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use segeval_core::analysis::wasserstein1;
use segeval_core::crf::{train_crf, CrfConfig};
use segeval_core::lexicon::train_lexicon;
use segeval_core::metrics::{eval_corpus, levenshtein};
use segeval_core::synth::{generate_synthetic_corpus, SyntheticSpec};
use segeval_core::Word;

fn corpus_words(n: usize) -> Vec<Word> {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::agglutinative(200, 7));
    corpus.words().iter().take(n).cloned().collect()
}

fn crf(c: &mut Criterion) {
    let words = corpus_words(300);
    let (train, test) = words.split_at(200);
    let mut g = c.benchmark_group("crf");
    g.sample_size(10);
    for k in [0, 1, 2] {
        let config = CrfConfig::with_order(k);
        g.bench_function(format!("train_order{k}_200"), |b| b.iter(|| train_crf(black_box(train), &config).unwrap()));
        let (model, _) = train_crf(train, &config).unwrap();
        g.bench_function(format!("viterbi_order{k}_100"), |b| {
            b.iter(|| test.iter().map(|w| model.segment(black_box(w.surface())).len()).sum::<usize>())
        });
    }
    g.finish();
}

fn lexicon(c: &mut Criterion) {
    let words = corpus_words(2000);
    let (train, test) = words.split_at(1500);
    c.bench_function("lexicon_train_1500", |b| b.iter(|| train_lexicon(black_box(train)).unwrap()));
    let lex = train_lexicon(train).unwrap();
    c.bench_function("lexicon_segment_500", |b| {
        b.iter(|| test.iter().map(|w| lex.segment(black_box(w.surface())).len()).sum::<usize>())
    });
}

fn metrics(c: &mut Criterion) {
    let words = corpus_words(2000);
    let lex = train_lexicon(&words[..1000]).unwrap();
    let pairs: Vec<(Vec<String>, Vec<String>)> =
        words.iter().map(|w| (lex.segment(w.surface()), w.morphs().to_vec())).collect();
    c.bench_function("eval_corpus_2000", |b| b.iter(|| eval_corpus(black_box(&pairs))));
    let a: Vec<char> = "abcdefghijklmnopqrstuvwxyz".chars().collect();
    let z: Vec<char> = a.iter().rev().copied().collect();
    c.bench_function("levenshtein_26", |b| b.iter(|| levenshtein(black_box(&a), black_box(&z))));
}

fn wasserstein(c: &mut Criterion) {
    let a: Vec<f64> = (0..6000).map(|i| ((i * 7919) % 5) as f64 + 1.0).collect();
    let b: Vec<f64> = (0..4000).map(|i| ((i * 104729) % 4) as f64 + 1.0).collect();
    c.bench_function("wasserstein1_6000_4000", |bch| bch.iter(|| wasserstein1(black_box(&a), black_box(&b))));
}

criterion_group!(benches, crf, lexicon, metrics, wasserstein);
criterion_main!(benches);
