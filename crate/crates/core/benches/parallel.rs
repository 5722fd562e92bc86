use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unic_core::diffusion::{sample_batch, GuidanceConfig, NoiseSchedule};
use unic_core::labeling::{label_corpus, LabelConfig};
use unic_core::models::{Denoiser, DenoiserConfig, UniClassifier, COND_DIM};
use unic_core::par::Workers;
use unic_core::rng::Rng;
use unic_core::toy_world::*;
use unic_tensor::Tensor;

fn pools() -> Vec<(String, Workers)> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);
    vec![
        ("sequential".into(), Workers::sequential()),
        (format!("parallel-{cores}"), Workers::new(cores)),
    ]
}

fn labeling(c: &mut Criterion) {
    let cfg = CorpusConfig {
        n_prompts: 8,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&cfg, &Rng::new(1), &Workers::sequential());
    let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
    let label = LabelConfig::default();
    let mut g = c.benchmark_group("label_corpus");
    g.sample_size(10);
    for (name, w) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, w| {
            b.iter(|| label_corpus(&frames, Variant::A, &label, &Rng::new(2), w))
        });
    }
    g.finish();
}

fn guided_sampling(c: &mut Criterion) {
    let den = Denoiser::init(DenoiserConfig::default(), &mut Rng::new(3));
    let mut clf = UniClassifier::new(&den);
    clf.head.insert("head.w", Rng::new(4).normal_tensor(&[1, clf.feature_dim()]));
    let schedule = NoiseSchedule::default();
    let guidance = GuidanceConfig {
        lambda: 2.0,
        steps: 4,
        ..GuidanceConfig::default()
    };
    let cond = Tensor::zeros(&[16, COND_DIM]);
    let latent = [1, FRAME_SIZE, FRAME_SIZE];
    let mut g = c.benchmark_group("guided_sampling");
    g.sample_size(10);
    for (name, w) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &w, |b, w| {
            b.iter(|| sample_batch(&den, Some(&clf), &cond, &latent, &guidance, &schedule, 4, w).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, labeling, guided_sampling);
criterion_main!(benches);
