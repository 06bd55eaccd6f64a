//! Hyperparameter sweeps over sparsity, interpretability cutoff, top-k and
//! quantization, written incrementally to CSV.
//!
//! Grid order: every (λ, cutoff) pair with no top-k, then every (k,
//! quantize) pair at `topk_lambda` and the first cutoff; each point is
//! repeated per seed. Rows are appended in that order, so an interrupted
//! sweep resumes by skipping setting ids already in the file.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bottleneck::BottleneckTransform;
use crate::concepts::top_activation_means;
use crate::data::{ActivationMatrix, DatasetLabels, InputKind, MatrixView, Split};
use crate::error::{Error, Result};
use crate::fairness::{bias_amplification, FairnessConfig};
use crate::heads::{gather_rows, predict_labels, train_head, Samples, TrainConfig};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub ks: Vec<usize>,
    pub quantize: Vec<bool>,
    pub quantize_step: f64,
    pub topk_first: bool,
    /// Penalty strength for the top-k block.
    pub topk_lambda: f64,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub fairness: FairnessConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.01, 0.005, 0.001, 0.0005],
            cutoffs: vec![0.25, 0.27, 0.29],
            ks: vec![5, 10, 20, 30, 50, 70, 100, 200, 500, 1000],
            quantize: vec![false, true],
            quantize_step: 0.5,
            topk_first: false,
            topk_lambda: TrainConfig::default().lambda,
            seeds: vec![0],
            train: TrainConfig::default(),
            fairness: FairnessConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParameter("cutoff and seed grids must be nonempty".into()));
        }
        if self.lambdas.is_empty() && (self.ks.is_empty() || self.quantize.is_empty()) {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        Ok(())
    }

    /// Grid points in emission order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        let mut settings = Vec::new();
        for &lambda in &self.lambdas {
            for &cutoff in &self.cutoffs {
                settings.push((lambda, cutoff, None, false));
            }
        }
        for &k in &self.ks {
            for &q in &self.quantize {
                settings.push((self.topk_lambda, self.cutoffs[0], Some(k), q));
            }
        }
        for (lambda, cutoff, k, quantize) in settings {
            for &seed in &self.seeds {
                out.push(SweepPoint {
                    lambda,
                    cutoff,
                    k,
                    quantize,
                    seed,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub cutoff: f64,
    pub k: Option<usize>,
    pub quantize: bool,
    pub seed: u64,
}

impl SweepPoint {
    pub fn setting_id(&self) -> String {
        let k = self.k.map_or("all".to_string(), |k| k.to_string());
        format!(
            "lam{}-cut{}-k{k}-q{}-s{}",
            self.lambda,
            self.cutoff,
            u8::from(self.quantize),
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub dataset_leakage: f64,
    pub model_leakage: f64,
    pub adjusted_leakage: f64,
    pub bias_amp_mean: f64,
    pub bias_amp_std: f64,
    pub avg_nonzero_weights: f64,
    pub avg_nonzero_contribs: f64,
    pub n_concepts: usize,
    /// Set when k was clamped to the concept count.
    pub note: Option<String>,
}

/// One CSV row. Metric cells are empty when the point failed; `status`
/// then carries the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting_id: String,
    pub lambda: f64,
    pub cutoff: f64,
    pub k: Option<usize>,
    pub quantize: bool,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub dataset_leakage: Option<f64>,
    pub model_leakage: Option<f64>,
    pub adjusted_leakage: Option<f64>,
    pub bias_amp_mean: Option<f64>,
    pub bias_amp_std: Option<f64>,
    pub avg_nonzero_weights: Option<f64>,
    pub avg_nonzero_contribs: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn new(p: &SweepPoint, r: Result<PointMetrics>) -> Self {
        let mut row = SweepRow {
            setting_id: p.setting_id(),
            lambda: p.lambda,
            cutoff: p.cutoff,
            k: p.k,
            quantize: p.quantize,
            seed: p.seed,
            accuracy: None,
            f1: None,
            dataset_leakage: None,
            model_leakage: None,
            adjusted_leakage: None,
            bias_amp_mean: None,
            bias_amp_std: None,
            avg_nonzero_weights: None,
            avg_nonzero_contribs: None,
            status: String::new(),
        };
        match r {
            Ok(m) => {
                row.accuracy = Some(m.accuracy);
                row.f1 = Some(m.f1);
                row.dataset_leakage = Some(m.dataset_leakage);
                row.model_leakage = Some(m.model_leakage);
                row.adjusted_leakage = Some(m.adjusted_leakage);
                row.bias_amp_mean = Some(m.bias_amp_mean);
                row.bias_amp_std = Some(m.bias_amp_std);
                row.avg_nonzero_weights = Some(m.avg_nonzero_weights);
                row.avg_nonzero_contribs = Some(m.avg_nonzero_contribs);
                row.status = match m.note {
                    Some(n) => format!("ok: {n}"),
                    None => "ok".into(),
                };
            }
            Err(e) => row.status = format!("error: {e}"),
        }
        row
    }

    pub fn is_ok(&self) -> bool {
        self.status.starts_with("ok")
    }
}

/// Concept columns whose mean top-5 activation reaches `cutoff`, matching
/// the low-activation concept filter.
pub fn columns_above_cutoff(acts: &ActivationMatrix, cutoff: f64) -> Result<Vec<usize>> {
    let means = top_activation_means(acts)?;
    Ok((0..means.len()).filter(|&j| means[j] >= cutoff).collect())
}

/// Train and score one grid point.
pub fn run_point(
    acts: &ActivationMatrix,
    d: &DatasetLabels,
    p: &SweepPoint,
    spec: &SweepSpec,
) -> Result<PointMetrics> {
    if acts.row_ids() != d.row_ids() {
        return Err(Error::Shape("activation rows do not match dataset rows".into()));
    }
    let cols = columns_above_cutoff(acts, p.cutoff)?;
    if cols.is_empty() {
        return Err(Error::Empty("concepts above the cutoff"));
    }
    let sub = acts.select_concepts(&cols)?;
    let mut note = None;
    let k = p.k.map(|k| {
        if k > sub.n_concepts() {
            note = Some(format!("k clamped from {k} to {}", sub.n_concepts()));
        }
        k.min(sub.n_concepts())
    });
    let train_rows = d.indices(Split::Train);
    let test_rows = d.indices(Split::Test);
    let t = BottleneckTransform {
        topk: k,
        quantize_step: p.quantize.then_some(spec.quantize_step),
        topk_first: spec.topk_first,
    };
    let x = t.apply(&sub, &train_rows)?;
    let m = x.n_concepts();

    let xtr = gather_rows(x.view(), &train_rows);
    let ytr: Vec<usize> = train_rows.iter().map(|&r| d.class_label()[r]).collect();
    let xte = gather_rows(x.view(), &test_rows);
    let yte: Vec<usize> = test_rows.iter().map(|&r| d.class_label()[r]).collect();
    let train = Samples::new(MatrixView::new(&xtr, train_rows.len(), m)?, &ytr, d.n_classes())?;
    let eval = Samples::new(MatrixView::new(&xte, test_rows.len(), m)?, &yte, d.n_classes())?;
    let cfg = TrainConfig {
        lambda: p.lambda,
        seed: p.seed,
        ..spec.train.clone()
    };
    let (head, _) = train_head(train, d.n_classes(), Some(eval), &cfg, InputKind::ConceptActivation)?;
    let preds = predict_labels(&head, x.view())?;
    let fcfg = FairnessConfig {
        base_seed: p.seed,
        ..spec.fairness.clone()
    };
    let report = bias_amplification(d, &preds, &fcfg)?;

    let nz = head.nonzero_per_output();
    let avg_nonzero_weights = nz.iter().sum::<usize>() as f64 / nz.len() as f64;
    let contribs: usize = test_rows
        .iter()
        .map(|&r| {
            let w = head.weight_row(preds[r]);
            x.row(r).iter().zip(w).filter(|(&a, &w)| a != 0.0 && w != 0.0).count()
        })
        .sum();
    Ok(PointMetrics {
        accuracy: report.accuracy,
        f1: report.f1,
        dataset_leakage: report.dataset_leakage,
        model_leakage: report.model_leakage,
        adjusted_leakage: report.adjusted_dataset_leakage,
        bias_amp_mean: report.bias_amplification_mean,
        bias_amp_std: report.bias_amplification_std,
        avg_nonzero_weights,
        avg_nonzero_contribs: contribs as f64 / test_rows.len() as f64,
        n_concepts: m,
        note,
    })
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Run the sweep. With `out`, rows are appended and flushed as each
/// parallel chunk finishes, and ids already present are skipped. Returns
/// the rows of the current grid in grid order.
pub fn run_sweep(
    acts: &ActivationMatrix,
    d: &DatasetLabels,
    spec: &SweepSpec,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points = spec.points();
    let mut done: HashMap<String, SweepRow> = HashMap::new();
    let mut writer = None;
    if let Some(path) = out {
        let exists = path.exists() && std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() > 0;
        if exists {
            for row in read_rows(path)? {
                done.insert(row.setting_id.clone(), row);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        writer = Some((
            csv::WriterBuilder::new().has_headers(!exists).from_writer(file),
            path,
        ));
    }
    let todo: Vec<SweepPoint> = points
        .iter()
        .filter(|p| !done.contains_key(&p.setting_id()))
        .copied()
        .collect();
    let chunk = par::current_num_threads().max(1);
    for batch in todo.chunks(chunk) {
        let rows = par::map_slice(batch, |p| SweepRow::new(p, run_point(acts, d, p, spec)));
        for row in rows {
            if let Some((w, path)) = writer.as_mut() {
                w.serialize(&row).map_err(|e| Error::csv(*path, e))?;
                w.flush().map_err(|e| Error::io(*path, e))?;
            }
            done.insert(row.setting_id.clone(), row);
        }
    }
    Ok(points
        .iter()
        .map(|p| done.remove(&p.setting_id()).expect("every point computed or resumed"))
        .collect())
}
