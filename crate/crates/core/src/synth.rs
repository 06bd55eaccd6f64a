//! Synthetic concept-activation datasets with planted class signal and a
//! gender proxy.
//!
//! Column layout: `signal_concepts_per_class` columns per class in class
//! order, then the proxy columns, then pure-noise columns. Every value is
//! a noise draw N(0.1, noise_std); signal columns of the image's class add
//! 0.3 and proxy columns add 0.3·ρ for male images. Values are clipped to
//! [0, 1].

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bottleneck::compute_activations;
use crate::data::{ActivationMatrix, DatasetLabels, EmbeddingMatrix, Split};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, stream_rng};

pub const SIGNAL_LIFT: f64 = 0.3;
pub const NOISE_MEAN: f64 = 0.1;
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_classes: usize,
    pub n_concepts: usize,
    pub signal_concepts_per_class: usize,
    pub proxy_concepts: usize,
    /// ρ in [0, 1].
    pub proxy_strength: f64,
    /// Probability of a male image, per class.
    pub male_ratios: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Ten classes with planted proxies at full strength, all ratios 0.5.
    fn default() -> Self {
        Self {
            signal_concepts_per_class: 2,
            proxy_concepts: 4,
            proxy_strength: 1.0,
            noise_std: 0.25,
            ..Self::balanced(5000, 10, 40, 0)
        }
    }
}

impl SynthConfig {
    /// Config with every class at male ratio 0.5.
    pub fn balanced(n_images: usize, n_classes: usize, n_concepts: usize, seed: u64) -> Self {
        Self {
            n_images,
            n_classes,
            n_concepts,
            signal_concepts_per_class: 1,
            proxy_concepts: 0,
            proxy_strength: 0.0,
            male_ratios: vec![0.5; n_classes],
            noise_std: 0.05,
            seed,
        }
    }

    /// Replace the ratios with uniform draws from `[lo, hi]`.
    pub fn with_random_ratios(mut self, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        self.male_ratios = (0..self.n_classes).map(|_| rng.random_range(lo..=hi)).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_classes < 2 {
            return bad("n_classes must be >= 2".into());
        }
        if self.n_images == 0 {
            return bad("n_images must be >= 1".into());
        }
        let needed = self.n_classes * self.signal_concepts_per_class + self.proxy_concepts;
        if self.n_concepts < needed || self.n_concepts == 0 {
            return bad(format!(
                "n_concepts {} < n_classes * signal + proxy = {needed}",
                self.n_concepts
            ));
        }
        if self.male_ratios.len() != self.n_classes {
            return bad(format!(
                "male_ratios has {} entries for {} classes",
                self.male_ratios.len(),
                self.n_classes
            ));
        }
        if self.male_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("male ratios must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.proxy_strength) {
            return bad("proxy_strength must lie in [0, 1]".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn signal_columns(&self, class: usize) -> std::ops::Range<usize> {
        let s = self.signal_concepts_per_class;
        class * s..(class + 1) * s
    }

    pub fn proxy_columns(&self) -> std::ops::Range<usize> {
        let start = self.n_classes * self.signal_concepts_per_class;
        start..start + self.proxy_concepts
    }

    pub fn concept_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_concepts);
        for c in 0..self.n_classes {
            for j in 0..self.signal_concepts_per_class {
                names.push(format!("signal_c{c}_{j}"));
            }
        }
        for j in 0..self.proxy_concepts {
            names.push(format!("proxy_{j}"));
        }
        let used = names.len();
        for j in 0..self.n_concepts - used {
            names.push(format!("noise_{j}"));
        }
        names
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes).map(|c| format!("class_{c}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub activations: ActivationMatrix,
    pub labels: DatasetLabels,
}

fn row_id(i: usize) -> String {
    format!("img{i:06}")
}

/// Generate a dataset. Row `i` draws from its own ChaCha stream, so the
/// output does not depend on the thread count.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let normal = Normal::new(NOISE_MEAN, cfg.noise_std)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let m = cfg.n_concepts;
    let proxy = cfg.proxy_columns();
    let rows = par::map_range(cfg.n_images, |i| {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let class = rng.random_range(0..cfg.n_classes);
        let male = rng.random::<f64>() < cfg.male_ratios[class];
        let signal = cfg.signal_columns(class);
        let values: Vec<f32> = (0..m)
            .map(|j| {
                let mut v = normal.sample(&mut rng);
                if signal.contains(&j) {
                    v += SIGNAL_LIFT;
                }
                if male && proxy.contains(&j) {
                    v += SIGNAL_LIFT * cfg.proxy_strength;
                }
                v.clamp(0.0, 1.0) as f32
            })
            .collect();
        (class, u8::from(!male), values)
    });

    let mut class_label = Vec::with_capacity(cfg.n_images);
    let mut sensitive = Vec::with_capacity(cfg.n_images);
    let mut values = Vec::with_capacity(cfg.n_images * m);
    for (c, s, v) in rows {
        class_label.push(c);
        sensitive.push(s);
        values.extend(v);
    }
    let split = stratified_split(&class_label, &sensitive, cfg.n_classes, cfg.seed);
    let row_ids: Vec<String> = (0..cfg.n_images).map(row_id).collect();
    let labels = DatasetLabels::new(
        row_ids.clone(),
        class_label,
        sensitive,
        split,
        cfg.class_names(),
        "gender",
    )?;
    let activations = ActivationMatrix::new(cfg.n_images, m, values, row_ids, cfg.concept_names())?;
    Ok(SynthData { activations, labels })
}

/// 80/20 split within every (class, sensitive) cell.
fn stratified_split(class_label: &[usize], sensitive: &[u8], n_classes: usize, seed: u64) -> Vec<Split> {
    let mut cells = vec![Vec::new(); n_classes * 2];
    for (i, (&c, &s)) in class_label.iter().zip(sensitive).enumerate() {
        cells[c * 2 + s as usize].push(i);
    }
    let mut rng = stream_rng(derive_seed(seed, 0x5911), 0);
    let mut split = vec![Split::Train; class_label.len()];
    for cell in &mut cells {
        cell.shuffle(&mut rng);
        let n_test = (cell.len() as f64 * TEST_FRACTION).round() as usize;
        for &i in &cell[..n_test] {
            split[i] = Split::Test;
        }
    }
    split
}

/// Σ_c max(r_c, 1 − r_c) / C.
pub fn expected_dataset_leakage(cfg: &SynthConfig) -> Result<f64> {
    cfg.validate()?;
    let sum: f64 = cfg.male_ratios.iter().map(|&r| r.max(1.0 - r)).sum();
    Ok(sum / cfg.n_classes as f64)
}

/// Embedding-level companion of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthEmbeddings {
    pub images: EmbeddingMatrix,
    pub concepts: EmbeddingMatrix,
    /// One text embedding per class, for zero-shot checks.
    pub classes: EmbeddingMatrix,
    pub labels: DatasetLabels,
    /// Planted activations before the cosine round trip.
    pub planted: ActivationMatrix,
}

/// Concept embeddings are the first `M` basis vectors of an `M + 1`
/// dimensional space; each image embedding is its planted activation row
/// with a constant `0.05` in the extra coordinate. Cosine activations are
/// then the planted rows divided by the image norm.
pub fn generate_embeddings(cfg: &SynthConfig) -> Result<SynthEmbeddings> {
    let data = generate(cfg)?;
    let m = cfg.n_concepts;
    let d = m + 1;
    let mut img = Vec::with_capacity(data.activations.n_images() * d);
    for row in data.activations.rows() {
        img.extend_from_slice(row);
        img.push(0.05);
    }
    let images = EmbeddingMatrix::new(data.activations.n_images(), d, img, data.activations.row_ids().to_vec())?;
    let mut con = vec![0.0f32; m * d];
    for j in 0..m {
        con[j * d + j] = 1.0;
    }
    let concepts = EmbeddingMatrix::new(m, d, con, cfg.concept_names())?;
    let mut cls = vec![0.0f32; cfg.n_classes * d];
    let s = cfg.signal_concepts_per_class.max(1) as f32;
    for c in 0..cfg.n_classes {
        for j in cfg.signal_columns(c) {
            cls[c * d + j] = 1.0 / s.sqrt();
        }
        if cfg.signal_concepts_per_class == 0 {
            cls[c * d + m] = 1.0;
        }
    }
    let classes = EmbeddingMatrix::new(cfg.n_classes, d, cls, cfg.class_names())?;
    Ok(SynthEmbeddings {
        images,
        concepts,
        classes,
        labels: data.labels,
        planted: data.activations,
    })
}

/// Cosine activations of a companion dataset.
pub fn companion_activations(e: &SynthEmbeddings) -> Result<ActivationMatrix> {
    compute_activations(&e.images, &e.concepts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::closed_form_leakage;

    fn cfg(n: usize, ratios: Vec<f64>, rho: f64) -> SynthConfig {
        SynthConfig {
            n_images: n,
            n_classes: ratios.len(),
            n_concepts: ratios.len() * 2 + 3 + 4,
            signal_concepts_per_class: 2,
            proxy_concepts: 3,
            proxy_strength: rho,
            male_ratios: ratios,
            noise_std: 0.05,
            seed: 11,
        }
    }

    #[test]
    fn expected_leakage_hand_cases() {
        assert_eq!(expected_dataset_leakage(&cfg(10, vec![0.5; 4], 0.0)).unwrap(), 0.5);
        assert!((expected_dataset_leakage(&cfg(10, vec![0.8, 0.2], 0.0)).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(500, vec![0.3, 0.7, 0.5], 1.0);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = SynthConfig { seed: 12, ..c.clone() };
        assert_ne!(generate(&c).unwrap().activations, generate(&other).unwrap().activations);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg(10, vec![0.5, 0.5], 0.5);
        c.n_concepts = 5;
        assert!(generate(&c).is_err());
        let mut c = cfg(10, vec![0.5, 1.5], 0.5);
        c.male_ratios[1] = 1.5;
        assert!(generate(&c).is_err());
        assert!(generate(&cfg(10, vec![0.5, 0.5], 1.2)).is_err());
        assert!(generate(&cfg(10, vec![0.5], 0.0)).is_err());
    }

    #[test]
    fn all_male_is_missing_a_sensitive_value() {
        let r = generate(&cfg(200, vec![1.0, 1.0], 0.0));
        assert!(matches!(r, Err(Error::MissingSensitiveValue(1))));
    }

    #[test]
    fn planted_structure_is_visible_in_means() {
        let c = cfg(4000, vec![0.5, 0.5], 1.0);
        let d = generate(&c).unwrap();
        let a = &d.activations;
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let mean_where = |col: usize, pred: &dyn Fn(usize) -> bool| {
            let rows: Vec<usize> = (0..a.n_images()).filter(|&i| pred(i)).collect();
            rows.iter().map(|&i| a.get(i, col) as f64).sum::<f64>() / rows.len() as f64
        };
        let cl = d.labels.class_label();
        let sx = d.labels.sensitive();
        assert!((mean_where(0, &|i| cl[i] == 0) - 0.4).abs() < 0.01);
        assert!((mean_where(0, &|i| cl[i] == 1) - 0.1).abs() < 0.01);
        let p = c.proxy_columns().start;
        assert!((mean_where(p, &|i| sx[i] == 0) - 0.4).abs() < 0.01);
        assert!((mean_where(p, &|i| sx[i] == 1) - 0.1).abs() < 0.01);
        let last = c.n_concepts - 1;
        assert!((mean_where(last, &|_| true) - 0.1).abs() < 0.01);
    }

    #[test]
    fn split_is_stratified() {
        let d = generate(&cfg(3000, vec![0.3, 0.6, 0.8], 0.0)).unwrap();
        let l = &d.labels;
        for c in 0..3 {
            for s in 0..2u8 {
                let cell: Vec<usize> = (0..l.len())
                    .filter(|&i| l.class_label()[i] == c && l.sensitive()[i] == s)
                    .collect();
                let test = cell.iter().filter(|&&i| l.split()[i] == Split::Test).count();
                assert_eq!(test, (cell.len() as f64 * 0.2).round() as usize);
            }
        }
    }

    #[test]
    fn balanced_ratios_give_no_leakage() {
        let d = generate(&cfg(5000, vec![0.5; 4], 0.0)).unwrap();
        let leak = closed_form_leakage(&d.labels, d.labels.class_label()).unwrap();
        assert!((leak - 0.5).abs() <= 0.02, "{leak}");
    }

    #[test]
    fn uniform_ratio_leakage_matches_majority() {
        let c = cfg(5000, vec![0.8; 4], 0.0);
        let d = generate(&c).unwrap();
        let leak = closed_form_leakage(&d.labels, d.labels.class_label()).unwrap();
        assert!((leak - 0.8).abs() <= 0.02, "{leak}");
        let c = cfg(6000, vec![0.2, 0.7, 0.9, 0.4], 0.0);
        let d = generate(&c).unwrap();
        let leak = closed_form_leakage(&d.labels, d.labels.class_label()).unwrap();
        assert!((leak - expected_dataset_leakage(&c).unwrap()).abs() <= 0.02, "{leak}");
    }

    #[test]
    fn companion_activations_are_scaled_planted_rows() {
        let c = cfg(50, vec![0.4, 0.6], 1.0);
        let e = generate_embeddings(&c).unwrap();
        let a = companion_activations(&e).unwrap();
        for i in 0..a.n_images() {
            let row = e.planted.row(i);
            let norm = (row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() + 0.0025).sqrt();
            for (j, &v) in row.iter().enumerate() {
                assert!((a.get(i, j) as f64 - v as f64 / norm).abs() < 1e-5);
            }
        }
    }
}
