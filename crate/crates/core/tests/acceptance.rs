//! Acceptance criteria P1-P10. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cbm_fair::adversarial::{train_adversarial, AdvConfig};
use cbm_fair::bottleneck::{
    compute_activations, fit_quantizer, quantize, topk_filter, zero_concepts, BottleneckTransform,
};
use cbm_fair::concepts::{run_pipeline, ConceptSet, FilterConfig, Stage};
use cbm_fair::explain::concept_contributions;
use cbm_fair::fairness::{
    bias_amplification, closed_form_leakage, perturb_to_f1, trained_leakage, AttackerConfig,
    FairnessConfig, Perturber,
};
use cbm_fair::heads::{
    init_kaiming_uniform, mean_cross_entropy, predict, predict_labels, smooth_objective_and_gradient,
    soft_threshold, train_head, F1Average, HeadParams, Init, Samples, SplitData, TrainConfig,
};
use cbm_fair::io::{decode_cbmf, encode_cbmf, read_activations, write_activations, HEADER_LEN};
use cbm_fair::synth::{generate, SynthConfig};
use cbm_fair::{ActivationMatrix, DatasetLabels, EmbeddingMatrix, InputKind, LinearHead, MatrixView, Split};

type Outcome = (bool, String);

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn train_eval(
    a: &ActivationMatrix,
    d: &DatasetLabels,
    cfg: &TrainConfig,
) -> (LinearHead, SplitData, SplitData) {
    let tr = SplitData::new(a.view(), d, Split::Train).unwrap();
    let te = SplitData::new(a.view(), d, Split::Test).unwrap();
    let (head, _) = train_head(
        tr.samples(d.n_classes()).unwrap(),
        d.n_classes(),
        Some(te.samples(d.n_classes()).unwrap()),
        cfg,
        InputKind::ConceptActivation,
    )
    .unwrap();
    (head, tr, te)
}

/// Random categorical dataset: uneven class frequencies, per-class male
/// ratios uniform in [0, 1], 80/20 split.
fn random_labels(rng: &mut ChaCha8Rng) -> DatasetLabels {
    loop {
        let c = rng.random_range(2..=15);
        let n = rng.random_range(300..=3000);
        let weights: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let ratios: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
        let mut class_label = Vec::with_capacity(n);
        let mut sensitive = Vec::with_capacity(n);
        let mut split = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < c && u >= weights[k] {
                u -= weights[k];
                k += 1;
            }
            class_label.push(k);
            sensitive.push(u8::from(rng.random::<f64>() >= ratios[k]));
            split.push(if rng.random::<f64>() < 0.2 { Split::Test } else { Split::Train });
        }
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        let names = (0..c).map(|k| format!("c{k}")).collect();
        if let Ok(d) = DatasetLabels::new(ids, class_label, sensitive, split, names, "gender") {
            if !d.indices(Split::Test).is_empty() {
                return d;
            }
        }
    }
}

fn p1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = AttackerConfig::default();
    let n = 24;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let d = random_labels(&mut rng);
        let closed = closed_form_leakage(&d, d.class_label()).unwrap();
        let trained = trained_leakage(&d, d.class_label(), &cfg).unwrap();
        worst = worst.max((closed - trained).abs());
    }
    (
        worst <= 0.02,
        format!("max |trained - closed-form| = {worst:.4} over {n} datasets (tol 0.02)"),
    )
}

/// Datasets for P2-P4: ten classes, male ratios drawn from [0.2, 0.8].
fn proxy_config(seed: u64, n_images: usize, rho: f64) -> SynthConfig {
    SynthConfig {
        n_images,
        n_classes: 10,
        n_concepts: 40,
        signal_concepts_per_class: 2,
        proxy_concepts: 4,
        proxy_strength: rho,
        male_ratios: vec![],
        noise_std: 0.25,
        seed,
    }
    .with_random_ratios(0.2, 0.8, 100 + seed)
}

fn p2() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, rate) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let s = generate(&proxy_config(50 + i as u64, 20_000, 0.0)).unwrap();
        let d = &s.labels;
        let preds = Perturber::new(d.class_label(), d.n_classes(), 900 + i as u64)
            .unwrap()
            .at_rate(rate);
        let r = bias_amplification(d, &preds, &FairnessConfig::default()).unwrap();
        worst = worst.max(r.bias_amplification_mean.abs());
        parts.push(format!("{:+.4}@{rate}", r.bias_amplification_mean));
    }
    (
        worst <= 0.015,
        format!(
            "|amplification| of chance-error predictions: {} (tol 0.015)",
            parts.join(", ")
        ),
    )
}

fn p3_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.5,
        batch_size: 256,
        epochs: 60,
        seed,
        patience: None,
        ..Default::default()
    }
}

struct P3Run {
    accuracy: f64,
    amplification: f64,
    adv_accuracy: f64,
    adv_amplification: f64,
}

fn p3_runs() -> Vec<P3Run> {
    (0..5u64)
        .map(|seed| {
            let s = generate(&proxy_config(seed, 5000, 1.0)).unwrap();
            let (a, d) = (&s.activations, &s.labels);
            let fcfg = FairnessConfig {
                base_seed: seed,
                ..Default::default()
            };
            let base = p3_train_config(seed);
            let (head, tr, te) = train_eval(a, d, &base);
            let plain = bias_amplification(d, &predict_labels(&head, a.view()).unwrap(), &fcfg).unwrap();
            let acfg = AdvConfig {
                beta: 1.0,
                adv_learning_rate: 0.5,
                base,
                ..Default::default()
            };
            let adv = train_adversarial(
                tr.samples(10).unwrap(),
                &tr.sensitive,
                10,
                Some((te.samples(10).unwrap(), &te.sensitive)),
                &acfg,
                InputKind::ConceptActivation,
            )
            .unwrap();
            let debiased = bias_amplification(d, &predict_labels(&adv.head, a.view()).unwrap(), &fcfg).unwrap();
            P3Run {
                accuracy: plain.accuracy,
                amplification: plain.bias_amplification_mean,
                adv_accuracy: debiased.accuracy,
                adv_amplification: debiased.bias_amplification_mean,
            }
        })
        .collect()
}

fn p3(runs: &[P3Run]) -> Outcome {
    let amps: Vec<f64> = runs.iter().map(|r| r.amplification).collect();
    let m = mean(&amps);
    (
        m > 0.02,
        format!(
            "5-seed mean amplification {m:.4} (> 0.02); per seed {:?}",
            amps.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn p4(runs: &[P3Run]) -> Outcome {
    let before = mean(&runs.iter().map(|r| r.amplification).collect::<Vec<_>>());
    let after = mean(&runs.iter().map(|r| r.adv_amplification).collect::<Vec<_>>());
    let acc_before = mean(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let acc_after = mean(&runs.iter().map(|r| r.adv_accuracy).collect::<Vec<_>>());
    let reduction = 1.0 - after / before;
    let drop = acc_before - acc_after;
    (
        before > 0.0 && reduction >= 0.30 && drop <= 0.03,
        format!(
            "amplification {before:.4} -> {after:.4} ({:.1}% reduction, need >= 30%); accuracy {acc_before:.4} -> {acc_after:.4} (drop {drop:.4}, tol 0.03)",
            100.0 * reduction
        ),
    )
}

/// Accuracy and mean nonzero contributions per test image.
fn support_point(a: &ActivationMatrix, d: &DatasetLabels, cfg: &TrainConfig) -> (f64, f64) {
    let (head, _, te) = train_eval(a, d, cfg);
    let preds = predict_labels(&head, a.view()).unwrap();
    let mut hits = 0;
    let mut contribs = 0;
    for &r in &te.rows {
        hits += usize::from(preds[r] == d.class_label()[r]);
        contribs += a
            .row(r)
            .iter()
            .zip(head.weight_row(preds[r]))
            .filter(|(&x, &w)| x != 0.0 && w != 0.0)
            .count();
    }
    let n = te.rows.len() as f64;
    (hits as f64 / n, contribs as f64 / n)
}

/// Piecewise-linear accuracy of a (support, accuracy) curve at `s`,
/// clamped to the ends.
fn interpolate(curve: &[(f64, f64)], s: f64) -> f64 {
    let mut c = curve.to_vec();
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s <= c[0].0 {
        return c[0].1;
    }
    for w in c.windows(2) {
        if s <= w[1].0 {
            let t = if w[1].0 > w[0].0 { (s - w[0].0) / (w[1].0 - w[0].0) } else { 1.0 };
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    c.last().unwrap().1
}

fn p5() -> Outcome {
    let lambdas = [0.05, 0.04, 0.03, 0.025, 0.02, 0.01, 0.005];
    let ks = [10usize, 30, 100];
    let mut lam_pts = vec![(0.0, 0.0); lambdas.len()];
    let mut k_pts = vec![(0.0, 0.0); ks.len()];
    let seeds = 5u64;
    for seed in 0..seeds {
        let cfg = SynthConfig {
            n_images: 4000,
            n_classes: 10,
            n_concepts: 300,
            signal_concepts_per_class: 20,
            proxy_concepts: 0,
            proxy_strength: 0.0,
            male_ratios: vec![0.5; 10],
            noise_std: 0.3,
            seed,
        };
        let s = generate(&cfg).unwrap();
        for (i, &lambda) in lambdas.iter().enumerate() {
            let tc = TrainConfig {
                lambda,
                ..p3_train_config(seed)
            };
            let (acc, sup) = support_point(&s.activations, &s.labels, &tc);
            lam_pts[i].0 += sup / seeds as f64;
            lam_pts[i].1 += acc / seeds as f64;
        }
        for (i, &k) in ks.iter().enumerate() {
            let a = topk_filter(&s.activations, k).unwrap();
            let (acc, sup) = support_point(&a, &s.labels, &p3_train_config(seed));
            k_pts[i].0 += sup / seeds as f64;
            k_pts[i].1 += acc / seeds as f64;
        }
    }
    let cmp: Vec<String> = ks
        .iter()
        .zip(&k_pts)
        .map(|(k, &(sup, acc))| format!("k={k}: {acc:.3} vs {:.3} at support {sup:.1}", interpolate(&lam_pts, sup)))
        .collect();
    let low = k_pts[0];
    (
        low.1 > interpolate(&lam_pts, low.0),
        format!("top-k vs sparsity accuracy at matched support: {}", cmp.join("; ")),
    )
}

fn p6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, m, c) = (30, 6, 4);
    let x: Vec<f32> = (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<usize> = (0..n).map(|i| i % c).collect();
    let data = Samples::new(MatrixView::new(&x, n, m).unwrap(), &y, c).unwrap();
    let rows: Vec<usize> = (0..n).collect();
    let mut params = HeadParams::from_head(&init_kaiming_uniform(c, m, 3, InputKind::ConceptActivation).unwrap());
    params.bias = vec![0.1, -0.2, 0.05, 0.0];
    let (lambda, alpha) = (0.05, 0.3);
    let (_, grad) = smooth_objective_and_gradient(&params, data, &rows, lambda, alpha);
    let h = 1e-6;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for o in 0..c {
        for j in 0..m {
            let w = params.weight(o, j);
            let mut p = params.clone();
            p.set_weight(o, j, w + h);
            let up = smooth_objective_and_gradient(&p, data, &rows, lambda, alpha).0;
            p.set_weight(o, j, w - h);
            let down = smooth_objective_and_gradient(&p, data, &rows, lambda, alpha).0;
            let fd = (up - down) / (2.0 * h);
            num += (fd - grad.weight(o, j)).powi(2);
            den += grad.weight(o, j).powi(2);
        }
    }
    let rel = (num / den).sqrt();

    let (eta, lam, alp) = (1e-3, 1e-3, 0.99);
    let t = eta * lam * alp;
    let mut prox_ok = true;
    for i in -400..=400 {
        let w = i as f64 * t / 200.0;
        let zero = soft_threshold(w, t) == 0.0;
        prox_ok &= zero == (w.abs() <= t);
    }
    prox_ok &= soft_threshold(t, t) == 0.0 && soft_threshold(-t, t) == 0.0;
    prox_ok &= soft_threshold(t * 1.5, t) != 0.0;

    let zeros = HeadParams::zeros(c, m);
    let ce0 = mean_cross_entropy(&zeros, data, &rows);
    let cfg = TrainConfig {
        init: Init::Zeros,
        epochs: 1,
        ..Default::default()
    };
    let (_, trace) = train_head(data, c, None, &cfg, InputKind::ConceptActivation).unwrap();
    let ln_c = (c as f64).ln();
    let init_ok = (ce0 - ln_c).abs() < 1e-12 && (trace.initial_objective - ln_c).abs() < 1e-12;
    (
        rel <= 1e-4 && prox_ok && init_ok,
        format!(
            "gradient rel. error {rel:.2e} (tol 1e-4); prox zero iff |w| <= eta*lambda*alpha: {prox_ok}; zero-init loss {ce0:.12} vs ln C {ln_c:.12}"
        ),
    )
}

fn random_acts(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ActivationMatrix {
    ActivationMatrix::new(
        n,
        m,
        (0..n * m).map(|_| rng.random_range(0.01f32..1.0)).collect(),
        (0..n).map(|i| format!("i{i}")).collect(),
        (0..m).map(|j| format!("k{j}")).collect(),
    )
    .unwrap()
}

fn p7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fails = Vec::new();
    for trial in 0..50 {
        let (n, m) = (rng.random_range(5..40), rng.random_range(2..30));
        let a = random_acts(&mut rng, n, m);
        let k1 = rng.random_range(1..=m);
        let k2 = rng.random_range(k1..=m);
        let t1 = topk_filter(&a, k1).unwrap();
        let t2 = topk_filter(&a, k2).unwrap();
        for i in 0..n {
            let nz: Vec<usize> = (0..m).filter(|&j| t1.get(i, j) != 0.0).collect();
            if nz.len() != k1 {
                fails.push(format!("trial {trial}: support {} != k {k1}", nz.len()));
            }
            if nz.iter().any(|&j| t2.get(i, j) == 0.0) {
                fails.push(format!("trial {trial}: nesting"));
            }
        }
        if topk_filter(&t1, k1).unwrap().values() != t1.values() {
            fails.push(format!("trial {trial}: top-k idempotence"));
        }
        let rows: Vec<usize> = (0..n).collect();
        let step = rng.random_range(0.1..1.0);
        let qp = fit_quantizer(&a, &rows, step).unwrap();
        let q1 = quantize(&a, &qp).unwrap();
        if quantize(&q1, &qp).unwrap().values() != q1.values() {
            fails.push(format!("trial {trial}: quantize idempotence"));
        }
        for i in 0..n {
            for j in 0..m {
                let dv = (q1.get(i, j) as f64 - a.get(i, j) as f64).abs();
                if dv > step * qp.std[j] + 1e-6 {
                    fails.push(format!("trial {trial}: quantize moved {dv} > step*sigma"));
                }
            }
        }
        let c = rng.random_range(2..6);
        let w: Vec<f32> = (0..c * m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f32> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let head = LinearHead::new(c, m, w, b, InputKind::ConceptActivation).unwrap();
        let j0 = rng.random_range(0..m);
        let z = zero_concepts(&a, &[j0]).unwrap();
        let (logits, _) = predict(&head, z.view()).unwrap();
        for i in 0..n {
            for cls in 0..c {
                let cv = concept_contributions(&head, z.row(i), cls).unwrap();
                if cv.contributions[j0] != 0.0 {
                    fails.push(format!("trial {trial}: zeroed concept contributes"));
                }
                if (cv.logit() - logits[i * c + cls]).abs() > 1e-5 {
                    fails.push(format!("trial {trial}: contribution identity"));
                }
            }
        }
    }
    let ok = fails.is_empty();
    (
        ok,
        if ok {
            "top-k support/idempotence/nesting, quantize idempotence and step*sigma bound, zeroing and contribution identity (1e-5) over 50 random instances".into()
        } else {
            fails.into_iter().take(5).collect::<Vec<_>>().join("; ")
        },
    )
}

fn p8() -> Outcome {
    let mut fails = Vec::new();
    let cfg = proxy_config(8, 1500, 1.0);
    let s1 = generate(&cfg).unwrap();
    let s2 = generate(&cfg).unwrap();
    if s1 != s2 {
        fails.push("synthetic generation".to_string());
    }
    let tc = p3_train_config(8);
    let (h1, tr, te) = train_eval(&s1.activations, &s1.labels, &tc);
    let (h2, _, _) = train_eval(&s2.activations, &s2.labels, &tc);
    if h1 != h2 {
        fails.push("head training".into());
    }
    let preds = predict_labels(&h1, s1.activations.view()).unwrap();
    let fcfg = FairnessConfig::default();
    if bias_amplification(&s1.labels, &preds, &fcfg).unwrap() != bias_amplification(&s2.labels, &preds, &fcfg).unwrap() {
        fails.push("fairness report".into());
    }
    let acfg = AdvConfig {
        base: TrainConfig { epochs: 10, ..tc },
        ..Default::default()
    };
    let run_adv = || {
        train_adversarial(
            tr.samples(10).unwrap(),
            &tr.sensitive,
            10,
            Some((te.samples(10).unwrap(), &te.sensitive)),
            &acfg,
            InputKind::ConceptActivation,
        )
        .unwrap()
    };
    if run_adv() != run_adv() {
        fails.push("adversarial training".into());
    }
    let t = BottleneckTransform {
        topk: Some(5),
        quantize_step: Some(0.5),
        topk_first: false,
    };
    let train_rows = s1.labels.indices(Split::Train);
    let x = t.apply(&s1.activations, &train_rows).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.cbmf");
    let p2 = dir.path().join("b.cbmf");
    write_activations(&p1, &x).unwrap();
    let back = read_activations(&p1).unwrap();
    write_activations(&p2, &back).unwrap();
    let bits = |m: &ActivationMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if bits(&back) != bits(&x) || back != x {
        fails.push(".cbmf round trip".into());
    }
    if std::fs::read(&p1).unwrap() != std::fs::read(&p2).unwrap() {
        fails.push("re-encoded file bytes".into());
    }
    let one = encode_cbmf(1, 1, &[1.0]);
    if one[HEADER_LEN..] != [0x00, 0x00, 0x80, 0x3F] {
        fails.push("1x1 payload".into());
    }
    let odd = [f32::MIN_POSITIVE, -0.0, 1e-45, f32::MAX, 0.1];
    let (_, _, v) = decode_cbmf(&encode_cbmf(1, 5, &odd)).unwrap();
    if v.iter().map(|x| x.to_bits()).ne(odd.iter().map(|x| x.to_bits())) {
        fails.push("IEEE-754 edge values".into());
    }
    let ok = fails.is_empty();
    (
        ok,
        if ok {
            "generation, training, adversarial training, fairness and transforms reproduce bit-for-bit; .cbmf round trip and 1x1 payload exact".into()
        } else {
            format!("not reproducible: {}", fails.join(", "))
        },
    )
}

fn p9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..20)).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for target in [1.0, 0.9, 0.75, 0.5] {
        let p = perturb_to_f1(&labels, 20, target, 42, F1Average::Micro).unwrap();
        let hits = p.labels.iter().zip(&labels).filter(|(a, b)| a == b).count();
        let f1 = hits as f64 / labels.len() as f64;
        ok &= (f1 - target).abs() <= 0.005 && f1 == p.achieved_f1;
        parts.push(format!("{target} -> {f1:.4}"));
    }
    (ok, format!("micro-F1 {} (tol 0.005)", parts.join(", ")))
}

fn unit(angle: f64) -> Vec<f32> {
    vec![angle.cos() as f32, angle.sin() as f32, 0.0]
}

fn p10() -> Outcome {
    let mut fails = Vec::new();
    let a30 = "a".repeat(30);
    let a31 = "b".repeat(31);
    let class_angle = 0.0f64;
    // Concept names and directions; angles are relative to the class axis.
    let specs: Vec<(String, Vec<f32>)> = vec![
        (a30.clone(), unit(1.4)),
        (a31.clone(), unit(1.45)),
        ("at_class_threshold".into(), unit(0.85f64.acos())),
        ("over_class_threshold".into(), unit(0.86f64.acos())),
        ("long_and_class_like_concept_name".into(), unit(0.1)),
        ("base".into(), vec![0.0, 0.0, 1.0]),
        ("at_concept_threshold".into(), {
            let t = 0.9f64.acos();
            vec![0.0, t.sin() as f32, t.cos() as f32]
        }),
        ("over_concept_threshold".into(), {
            let t = 0.91f64.acos();
            vec![t.sin() as f32, 0.0, t.cos() as f32]
        }),
    ];
    let names: Vec<String> = specs.iter().map(|s| s.0.clone()).collect();
    let rows: Vec<Vec<f32>> = specs.iter().map(|s| s.1.clone()).collect();
    let cs = ConceptSet::new(EmbeddingMatrix::from_rows(&rows, Some(names.clone())).unwrap());
    let classes = EmbeddingMatrix::from_rows(&[unit(class_angle)], Some(vec!["class".into()])).unwrap();
    // Images: one per concept direction so every top-5 mean is high, plus
    // one concept-less direction.
    let mut imgs: Vec<Vec<f32>> = rows.clone();
    imgs.extend(std::iter::repeat_n(vec![0.0, 0.0, 1.0], 6));
    let images = EmbeddingMatrix::from_rows(&imgs, None).unwrap();
    let acts = compute_activations(&images, cs.embeddings()).unwrap();
    let cfg = FilterConfig {
        interpretability_cutoff: 0.01,
        ..Default::default()
    };
    let (kept, report) = run_pipeline(&cs, &classes, &acts, &cfg).unwrap();
    let kept_has = |n: &str| kept.names().iter().any(|k| k == n);
    for n in [&a30[..], "at_class_threshold", "base", "at_concept_threshold"] {
        if !kept_has(n) {
            fails.push(format!("{n} removed"));
        }
    }
    let expect = [
        (&a31[..], Stage::Length),
        ("long_and_class_like_concept_name", Stage::Length),
        ("over_class_threshold", Stage::ClassSimilarity),
        ("over_concept_threshold", Stage::ConceptSimilarity),
    ];
    for (n, stage) in expect {
        if report.stage_of(n) != Some(stage) {
            fails.push(format!("{n}: stage {:?}, expected {stage:?}", report.stage_of(n)));
        }
    }
    let (again, report2) = run_pipeline(&kept, &classes, &acts, &cfg).unwrap();
    if again.names() != kept.names() || report2 != Default::default() {
        fails.push("pipeline not idempotent".into());
    }
    // Interpretability cutoff: a concept no image activates strongly.
    let strict = FilterConfig {
        interpretability_cutoff: 0.999,
        ..Default::default()
    };
    let (_, r3) = run_pipeline(&cs, &classes, &acts, &strict).unwrap();
    if r3.stage_of("base") == Some(Stage::LowActivation) {
        fails.push("strongly activated concept dropped by cutoff".into());
    }
    if r3.stage_of(&a31) != Some(Stage::Length) {
        fails.push("earlier stage not credited first".into());
    }
    let ok = fails.is_empty();
    (
        ok,
        if ok {
            "30/31-char boundary, cosine exactly 0.85/0.9 kept, idempotent, removals credited to the first stage in order".into()
        } else {
            fails.join("; ")
        },
    )
}

fn run(id: &str, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f));
    let (ok, detail) = r.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    println!(
        "{id} {} {name}: {detail} [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );
    ok
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let mut all = true;
    all &= run("P1", "leakage oracle equivalence", p1);
    all &= run("P2", "bias-amplification null", p2);
    let t = Instant::now();
    let runs = catch_unwind(p3_runs).ok();
    let shared = t.elapsed().as_secs_f64();
    match &runs {
        Some(r) => {
            all &= run("P3", "amplification detection", || p3(r));
            all &= run("P4", "adversarial debiasing tradeoff", || p4(r));
        }
        None => {
            all &= run("P3", "amplification detection", || (false, "training failed".into()));
            all &= run("P4", "adversarial debiasing tradeoff", || (false, "training failed".into()));
        }
    }
    println!("   (P3/P4 shared training {shared:.1}s)");
    all &= run("P5", "top-k dominance at low support", p5);
    all &= run("P6", "numerical core", p6);
    all &= run("P7", "transform properties", p7);
    all &= run("P8", "determinism", p8);
    all &= run("P9", "perturb_to_f1 accuracy", p9);
    all &= run("P10", "concept-filter pipeline", p10);
    if !all {
        std::process::exit(1);
    }
}
