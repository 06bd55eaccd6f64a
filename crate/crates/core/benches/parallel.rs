// Data-parallel core vs. one worker.
//
//   cargo bench -p cbm-fair                          # rayon pool vs 1-thread pool
//   cargo bench -p cbm-fair --no-default-features    # sequential build only
//
// Each workload runs under the default rayon pool ("parallel") and under a
// pool with a single thread ("single"). Outputs are identical either way;
// only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cbm_fair::bottleneck::{compute_activations, topk_filter};
use cbm_fair::fairness::{bias_amplification, FairnessConfig, Perturber};
use cbm_fair::heads::TrainConfig;
use cbm_fair::sweep::{run_sweep, SweepSpec};
use cbm_fair::synth::{generate, generate_embeddings, SynthConfig};

fn synth(n_images: usize, n_concepts: usize) -> SynthConfig {
    SynthConfig {
        n_images,
        n_classes: 10,
        n_concepts,
        signal_concepts_per_class: 2,
        proxy_concepts: 4,
        proxy_strength: 1.0,
        male_ratios: vec![],
        noise_std: 0.25,
        seed: 1,
    }
    .with_random_ratios(0.2, 0.8, 1)
}

/// Run `f` under each pool configuration available in this build.
fn modes(c: &mut Criterion, group: &str, mut f: impl FnMut() + Send) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new("parallel", rayon::current_num_threads()), |b| b.iter(&mut f));
        g.bench_function(BenchmarkId::new("single", 1), |b| b.iter(|| single.install(&mut f)));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function(BenchmarkId::new("sequential", 1), |b| b.iter(&mut f));
    g.finish();
}

fn activations(c: &mut Criterion) {
    let e = generate_embeddings(&synth(4000, 300)).unwrap();
    modes(c, "activations_4000x300", || {
        black_box(compute_activations(&e.images, &e.concepts).unwrap());
    });
    let a = e.planted;
    modes(c, "topk_4000x300_k20", || {
        black_box(topk_filter(&a, 20).unwrap());
    });
}

fn amplification(c: &mut Criterion) {
    let s = generate(&synth(20_000, 40)).unwrap();
    let preds = Perturber::new(s.labels.class_label(), 10, 7).unwrap().at_rate(0.4);
    let cfg = FairnessConfig::default();
    modes(c, "bias_amplification_20000x5runs", || {
        black_box(bias_amplification(&s.labels, &preds, &cfg).unwrap());
    });
}

fn sweep(c: &mut Criterion) {
    let s = generate(&synth(2000, 40)).unwrap();
    let spec = SweepSpec {
        lambdas: vec![0.01, 0.001],
        cutoffs: vec![0.0],
        ks: vec![5, 10, 20],
        quantize: vec![false, true],
        train: TrainConfig {
            learning_rate: 0.5,
            batch_size: 256,
            epochs: 10,
            patience: None,
            ..Default::default()
        },
        fairness: FairnessConfig {
            n_runs: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    modes(c, "sweep_8_points", || {
        black_box(run_sweep(&s.activations, &s.labels, &spec, None).unwrap());
    });
}

criterion_group!(benches, activations, amplification, sweep);
criterion_main!(benches);
