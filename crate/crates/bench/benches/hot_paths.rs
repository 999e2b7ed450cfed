use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use storyctl_bench::fixture;
use storyctl_core::autodiff::{lstm_cell, LstmWeights, Tensor};
use storyctl_core::corpus::Sentiment;
use storyctl_core::decoding::{decode, DecodeMethod};
use storyctl_core::metrics::{bleu2, rouge, RougeVariant};
use storyctl_core::model::{train, AttributeValue, TrainConfig};

fn filled(t: &mut Tensor, phase: f64) {
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v = 0.1 * (i as f64 * 0.7 + phase).sin();
    }
}

fn metrics(c: &mut Criterion) {
    let f = fixture(60);
    let pairs: Vec<(&[String], &[String])> = f
        .stories
        .windows(2)
        .map(|w| (w[0].continuation.as_slice(), w[1].continuation.as_slice()))
        .collect();
    c.bench_function("bleu2/59 pairs", |b| {
        b.iter(|| pairs.iter().map(|(x, y)| bleu2(black_box(x), black_box(y))).sum::<f64>())
    });
    c.bench_function("rouge_l/59 pairs", |b| {
        b.iter(|| pairs.iter().map(|(x, y)| rouge(black_box(x), black_box(y), RougeVariant::L)).sum::<f64>())
    });
}

fn cell(c: &mut Criterion) {
    let mut w = LstmWeights::zeros(32, 64);
    filled(&mut w.w_input, 0.0);
    filled(&mut w.w_hidden, 1.0);
    filled(&mut w.bias, 2.0);
    let mut x = Tensor::zeros(&[32]);
    filled(&mut x, 3.0);
    let h = Tensor::zeros(&[64]);
    c.bench_function("lstm_cell/32x64", |b| b.iter(|| lstm_cell(black_box(&x), &h, &h, &w).unwrap()));
}

fn decoding(c: &mut Criterion) {
    let f = fixture(20);
    let src = &f.examples[0].source;
    let value = AttributeValue::Sentiment(Sentiment::Positive);
    let mut group = c.benchmark_group("decode");
    group.sample_size(20);
    for (name, method) in [
        ("greedy", DecodeMethod::Greedy),
        ("beam3", DecodeMethod::Beam { width: 3, keep: 3 }),
        ("sample3", DecodeMethod::Sample { temperature: 0.6, n: 3, seed: 1 }),
    ] {
        group.bench_function(name, |b| b.iter(|| decode(&f.model, black_box(src), &value, &method, 30).unwrap()));
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let f = fixture(64);
    let (tr, dv) = f.examples.split_at(32);
    let cfg = TrainConfig { max_epochs: 1, batch_size: 32, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch/32 examples", |b| b.iter(|| train(f.model.clone(), tr, dv, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, metrics, cell, decoding, training);
criterion_main!(benches);
