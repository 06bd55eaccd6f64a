use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use cbm_fair::adversarial::{debias_report, train_adversarial};
use cbm_fair::bottleneck::{compute_activations, BottleneckTransform};
use cbm_fair::concepts::{filter_low_activation, run_text_stages, ConceptSet, FilterConfig};
use cbm_fair::explain::{
    contribution_report, evaluate_removal, topn_contribution_predict, rank_biased_concepts, read_ratings, select_by_rating, select_removal,
    train_gender_head, BiasRanking, ShiftReport,
};
use cbm_fair::fairness::{bias_amplification, FairnessConfig, FairnessReport};
use cbm_fair::heads::{
    f1_score, predict_labels, train_dense_head, train_head, zero_shot_predict, F1Average, SplitData, TrainConfig,
    TrainTrace,
};
use cbm_fair::ingest::{build_dataset, GenderLexicon, IngestConfig, Metadata};
use cbm_fair::io::{self, HeadMeta, Predictions};
use cbm_fair::plot::emit_tradeoff_plot;
use cbm_fair::sweep::{read_rows, run_sweep, SweepSpec};
use cbm_fair::synth::{generate, generate_embeddings, SynthConfig};
use cbm_fair::{ActivationMatrix, DatasetLabels, InputKind, LabeledDataset, LinearHead, MatrixView, Split};

use crate::util::{
    check_aligned, echo_config, echo_matrix_config, load_config, load_labels, print_json, provenance, usage,
    write_labels,
};
use crate::*;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::FilterConcepts(a) => filter_concepts(a),
        Command::Activations(a) => activations(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Fairness(a) => fairness(a),
        Command::Sweep(a) => sweep(a),
        Command::DebiasAdv(a) => debias_adv(a),
        Command::RankBias(a) => rank_bias(a),
        Command::RemoveEval(a) => remove_eval(a),
        Command::ShiftReport(a) => shift_report(a),
        Command::ExplainImage(a) => explain_image(a),
        Command::Synth(a) => synth(a),
        Command::Plot(a) => plot(a),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestSettings {
    n_classes: usize,
    test_fraction: f64,
    seed: u64,
}

impl Default for IngestSettings {
    fn default() -> Self {
        let d = IngestConfig::default();
        Self {
            n_classes: d.n_classes,
            test_fraction: d.test_fraction,
            seed: d.seed,
        }
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut s: IngestSettings = load_config(a.config.as_deref())?;
    set(&mut s.n_classes, a.n_classes);
    set(&mut s.test_fraction, a.test_fraction);
    set(&mut s.seed, a.seed);
    let lexicon = match &a.lexicon {
        Some(p) => GenderLexicon::from_json_file(p)?,
        None => GenderLexicon::default(),
    };
    let meta: Metadata = io::read_json(&a.metadata)?;
    let emb = io::read_matrix(&a.embeddings)?;
    let cfg = IngestConfig {
        lexicon,
        n_classes: s.n_classes,
        test_fraction: s.test_fraction,
        seed: s.seed,
    };
    let (d, report) = build_dataset(&meta, &emb, &cfg)?;
    io::write_dataset(&a.out, &d)?;
    echo_matrix_config(&a.out, "ingest", &json!({ "settings": s, "lexicon": cfg.lexicon }))?;
    if let Some(p) = &a.report {
        io::write_json(p, &report)?;
    }
    print_json(&report)
}

fn filter_concepts(a: FilterArgs) -> Result<()> {
    let mut cfg: FilterConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.max_len, a.max_len);
    set(&mut cfg.class_sim_threshold, a.class_sim);
    set(&mut cfg.concept_sim_threshold, a.concept_sim);
    set(&mut cfg.interpretability_cutoff, a.cutoff);
    let cs = ConceptSet::new(io::read_matrix(&a.concepts)?);
    let classes = io::read_matrix(&a.classes)?;
    let images = io::read_matrix(&a.images)?;
    let (cs, mut report) = run_text_stages(&cs, &classes, &cfg)?;
    let acts = compute_activations(&images, cs.embeddings())?;
    let (kept, low) = filter_low_activation(&cs, &acts, cfg.interpretability_cutoff)?;
    report.low_activation = low;
    io::write_matrix(&a.out, kept.embeddings())?;
    echo_matrix_config(&a.out, "filter-concepts", &cfg)?;
    if let Some(p) = &a.report {
        io::write_json(p, &json!({ "kept": kept.names(), "removed": report, "cli": provenance("filter-concepts", &cfg)? }))?;
    }
    println!(
        "kept {} concepts; removed: length {}, class similarity {}, concept similarity {}, low activation {}",
        kept.len(),
        report.length.len(),
        report.class_similarity.len(),
        report.concept_similarity.len(),
        report.low_activation.len()
    );
    Ok(())
}

fn activations(a: ActivationArgs) -> Result<()> {
    let mut t: BottleneckTransform = load_config(a.config.as_deref())?;
    if a.topk.is_some() {
        t.topk = a.topk;
    }
    if a.quantize_step.is_some() {
        t.quantize_step = a.quantize_step;
    }
    t.topk_first |= a.topk_first;
    let images = io::read_matrix(&a.images)?;
    let concepts = io::read_matrix(&a.concepts)?;
    let acts = compute_activations(&images, &concepts)?;
    let train_rows = if t.quantize_step.is_some() {
        let labels = match &a.labels {
            Some(p) => load_labels(p)?,
            None => io::read_dataset_labels(&a.images)
                .map_err(|_| usage("quantization needs a train split: pass a dataset as --images or use --labels"))?,
        };
        check_aligned(&acts, &labels)?;
        labels.indices(Split::Train)
    } else {
        Vec::new()
    };
    let acts = t.apply(&acts, &train_rows)?;
    io::write_activations(&a.out, &acts)?;
    echo_matrix_config(&a.out, "activations", &t)?;
    println!("{} images x {} concepts", acts.n_images(), acts.n_concepts());
    Ok(())
}

/// Inputs for head training and prediction.
struct Inputs {
    values: Vec<f32>,
    n_rows: usize,
    n_cols: usize,
    row_ids: Vec<String>,
    input_names: Vec<String>,
    kind: InputKind,
}

impl Inputs {
    fn from_acts(acts: ActivationMatrix) -> Self {
        Self {
            values: acts.values().to_vec(),
            n_rows: acts.n_images(),
            n_cols: acts.n_concepts(),
            row_ids: acts.row_ids().to_vec(),
            input_names: acts.concept_names().to_vec(),
            kind: InputKind::ConceptActivation,
        }
    }

    fn from_dataset(d: &LabeledDataset) -> Self {
        let e = d.embeddings();
        Self {
            values: e.values().to_vec(),
            n_rows: e.n_rows(),
            n_cols: e.n_cols(),
            row_ids: e.row_ids().to_vec(),
            input_names: Vec::new(),
            kind: InputKind::ImageEmbedding,
        }
    }

    fn view(&self) -> MatrixView<'_> {
        MatrixView::new(&self.values, self.n_rows, self.n_cols).expect("shape checked on load")
    }

    fn check(&self, labels: &DatasetLabels) -> Result<()> {
        if self.row_ids != labels.row_ids() {
            return Err(cbm_fair::Error::Shape("input rows do not match label rows".into()).into());
        }
        Ok(())
    }
}

fn fit_head(x: &Inputs, d: &DatasetLabels, cfg: &TrainConfig) -> Result<(LinearHead, TrainTrace)> {
    let tr = SplitData::new(x.view(), d, Split::Train)?;
    let te = SplitData::new(x.view(), d, Split::Test)?;
    let c = d.n_classes();
    let eval = if te.rows.is_empty() { None } else { Some(te.samples(c)?) };
    let out = match x.kind {
        InputKind::ConceptActivation => train_head(tr.samples(c)?, c, eval, cfg, x.kind)?,
        InputKind::ImageEmbedding => train_dense_head(tr.samples(c)?, c, eval, cfg)?,
    };
    Ok(out)
}

fn save_head(
    path: &Path,
    head: &LinearHead,
    output_names: Vec<String>,
    input_names: Vec<String>,
    command: &str,
    config: &impl Serialize,
    trace: Option<&TrainTrace>,
) -> Result<()> {
    let meta = HeadMeta {
        output_names,
        input_names,
        config: Some(provenance(command, config)?),
        trace: trace.map(serde_json::to_value).transpose()?,
        ..HeadMeta::for_head(head)
    };
    Ok(io::write_head(path, head, &meta)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(a.config.as_deref())?;
    a.train.apply(&mut cfg);
    set(&mut cfg.seed, a.seed);
    let (x, labels) = match (&a.acts, &a.embeddings) {
        (Some(p), _) => {
            let lp = a.labels.as_ref().ok_or_else(|| usage("--acts needs --labels"))?;
            (Inputs::from_acts(io::read_activations(p)?), load_labels(lp)?)
        }
        (None, Some(p)) => {
            let d = io::read_dataset(p)?;
            let labels = match &a.labels {
                Some(lp) => load_labels(lp)?,
                None => d.labels().clone(),
            };
            (Inputs::from_dataset(&d), labels)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    x.check(&labels)?;
    let (head, trace) = fit_head(&x, &labels, &cfg)?;
    save_head(
        &a.out,
        &head,
        labels.class_names().to_vec(),
        x.input_names.clone(),
        "train",
        &cfg,
        Some(&trace),
    )?;
    let last = trace.last();
    match last {
        Some(e) => println!(
            "trained {:?} head: {} epochs, loss {:.6}, accuracy {:.4}, {:.1} nonzero weights per class",
            x.kind,
            trace.epochs.len(),
            e.loss,
            e.eval_accuracy,
            e.mean_nonzero_weights
        ),
        None => println!("trained {:?} head: 0 epochs", x.kind),
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (preds, row_ids) = if let Some(classes) = &a.zero_shot {
        let p = a.embeddings.as_ref().ok_or_else(|| usage("--zero-shot needs --embeddings"))?;
        let images = io::read_matrix(p)?;
        let class_text = io::read_matrix(classes)?;
        (zero_shot_predict(&images, &class_text)?, images.row_ids().to_vec())
    } else {
        let (head, _) = io::read_head(a.head.as_ref().expect("clap requires a model"))?;
        let x = match (head.input_kind(), &a.acts, &a.embeddings) {
            (InputKind::ConceptActivation, Some(p), _) => Inputs::from_acts(io::read_activations(p)?),
            (InputKind::ImageEmbedding, _, Some(p)) => Inputs::from_dataset(&io::read_dataset(p)?),
            (InputKind::ConceptActivation, None, _) => return Err(usage("concept head needs --acts")),
            (InputKind::ImageEmbedding, _, None) => return Err(usage("embedding head needs --embeddings")),
        };
        let preds = match (a.test_time_topk, head.input_kind()) {
            (None, _) => predict_labels(&head, x.view())?,
            (Some(n), InputKind::ConceptActivation) => {
                topn_contribution_predict(&head, &io::read_activations(a.acts.as_ref().expect("checked above"))?, n)?
            }
            (Some(_), InputKind::ImageEmbedding) => return Err(usage("--test-time-topk needs a concept head")),
        };
        (preds, x.row_ids)
    };
    let out = Predictions {
        row_ids: row_ids.clone(),
        labels: preds,
    };
    io::write_json(&a.out, &out)?;
    let labels = match (&a.labels, &a.embeddings) {
        (Some(p), _) => Some(load_labels(p)?),
        (None, Some(p)) => io::read_dataset_labels(p).ok(),
        (None, None) => None,
    };
    if let Some(d) = labels {
        let preds = out.aligned_to(d.row_ids())?;
        let rows: Vec<usize> = match a.split {
            SplitArg::Train => d.indices(Split::Train),
            SplitArg::Test => d.indices(Split::Test),
            SplitArg::All => (0..d.len()).collect(),
        };
        let p: Vec<usize> = rows.iter().map(|&r| preds[r]).collect();
        let t: Vec<usize> = rows.iter().map(|&r| d.class_label()[r]).collect();
        println!(
            "{:?} split: {} rows, accuracy {:.4}, macro F1 {:.4}",
            a.split,
            rows.len(),
            f1_score(&p, &t, F1Average::Micro)?,
            f1_score(&p, &t, F1Average::Macro)?
        );
    } else {
        println!("{} predictions written", row_ids.len());
    }
    Ok(())
}

fn print_report(r: &FairnessReport) {
    let lines = [
        ("accuracy", r.accuracy),
        ("f1", r.f1),
        ("dataset_leakage", r.dataset_leakage),
        ("model_leakage", r.model_leakage),
        ("adjusted_leakage", r.adjusted_dataset_leakage),
        ("bias_amp_mean", r.bias_amplification_mean),
        ("bias_amp_std", r.bias_amplification_std),
    ];
    for (k, v) in lines {
        println!("{k:<18} {v:>9.4}");
    }
    println!("{:<18} {:>9}", "n_runs", r.n_runs);
}

fn fairness(a: FairnessArgs) -> Result<()> {
    let mut cfg: FairnessConfig = load_config(a.config.as_deref())?;
    a.fairness.apply(&mut cfg);
    set(&mut cfg.base_seed, a.seed);
    let d = load_labels(&a.labels)?;
    let p: Predictions = io::read_json(&a.predictions)?;
    let r = bias_amplification(&d, &p.aligned_to(d.row_ids())?, &cfg)?;
    print_report(&r);
    if let Some(out) = &a.out {
        io::write_json(out, &json!({ "report": r, "cli": provenance("fairness", &cfg)? }))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut spec: SweepSpec = load_config(a.config.as_deref())?;
    set(&mut spec.lambdas, a.lambdas);
    set(&mut spec.cutoffs, a.cutoffs);
    set(&mut spec.ks, a.ks);
    set(&mut spec.seeds, a.seeds);
    if a.no_quantize {
        spec.quantize = vec![false];
    }
    a.train.apply(&mut spec.train);
    a.fairness.apply(&mut spec.fairness);
    let acts = io::read_activations(&a.acts)?;
    let d = load_labels(&a.labels)?;
    check_aligned(&acts, &d)?;
    let rows = run_sweep(&acts, &d, &spec, Some(&a.out))?;
    io::write_json(
        &io::sidecar_path(&a.out),
        &json!({ "cli": provenance("sweep", &spec)? }),
    )?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!("{} points, {failed} failed -> {}", rows.len(), a.out.display());
    Ok(())
}

fn write_shifts_csv(path: &Path, reports: &[ShiftReport], class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["class", "class_name", "concept_index", "concept", "before", "after", "shift"])?;
    for r in reports {
        let cname = class_names.get(r.class).map_or("", String::as_str);
        for s in &r.shifts {
            w.write_record([
                r.class.to_string(),
                cname.to_string(),
                s.index.to_string(),
                s.name.clone(),
                s.before.to_string(),
                s.after.to_string(),
                s.shift.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn debias_adv(a: DebiasArgs) -> Result<()> {
    let mut cfg: DebiasConfig = load_config(a.config.as_deref())?;
    let adv = &mut cfg.adversarial;
    a.train.apply(&mut adv.base);
    set(&mut adv.base.seed, a.seed);
    set(&mut adv.beta, a.beta);
    set(&mut adv.adv_learning_rate, a.adv_lr);
    set(&mut adv.adv_steps_per_main, a.adv_steps);
    set(&mut adv.warmup_epochs, a.warmup);
    a.fairness.apply(&mut cfg.fairness);
    set(&mut cfg.fairness.base_seed, a.seed);

    let acts = io::read_activations(&a.acts)?;
    let d = load_labels(&a.labels)?;
    check_aligned(&acts, &d)?;
    let x = Inputs::from_acts(acts.clone());
    let (plain, _) = fit_head(&x, &d, &cfg.adversarial.base)?;
    let tr = SplitData::new(acts.view(), &d, Split::Train)?;
    let te = SplitData::new(acts.view(), &d, Split::Test)?;
    let c = d.n_classes();
    let eval = if te.rows.is_empty() { None } else { Some((te.samples(c)?, te.sensitive.as_slice())) };
    let res = train_adversarial(tr.samples(c)?, &tr.sensitive, c, eval, &cfg.adversarial, InputKind::ConceptActivation)?;

    let before = bias_amplification(&d, &predict_labels(&plain, acts.view())?, &cfg.fairness)?;
    let after = bias_amplification(&d, &predict_labels(&res.head, acts.view())?, &cfg.fairness)?;
    let truth = a.truth.then(|| d.class_label());
    let shifts = debias_report(&plain, &res.head, &acts, truth)?;
    save_head(
        &a.out,
        &res.head,
        d.class_names().to_vec(),
        acts.concept_names().to_vec(),
        "debias-adv",
        &cfg,
        Some(&res.trace),
    )?;
    println!("plain head:");
    print_report(&before);
    println!("debiased head:");
    print_report(&after);
    if let Some(p) = &a.report {
        io::write_json(
            p,
            &json!({
                "before": before,
                "after": after,
                "adversary_eval_accuracy": res.trace.last().and_then(|e| e.adversary_eval_accuracy),
                "shifts": shifts,
                "cli": provenance("debias-adv", &cfg)?,
            }),
        )?;
    }
    if let Some(p) = &a.shifts_csv {
        write_shifts_csv(p, &shifts, d.class_names())?;
    }
    Ok(())
}

fn rank_bias(a: RankArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(a.config.as_deref())?;
    a.train.apply(&mut cfg);
    set(&mut cfg.seed, a.seed);
    let acts = io::read_activations(&a.acts)?;
    let d = load_labels(&a.labels)?;
    let (head, trace) = train_gender_head(&acts, &d, &cfg)?;
    let ranking = rank_biased_concepts(&head, acts.concept_names())?;
    io::write_json(&a.out, &ranking)?;
    echo_config(&a.out, "rank-bias", &cfg)?;
    if let Some(p) = &a.head_out {
        save_head(
            p,
            &head,
            vec!["male".into(), "female".into()],
            acts.concept_names().to_vec(),
            "rank-bias",
            &cfg,
            Some(&trace),
        )?;
    }
    for (label, list) in [("male", &ranking.male), ("female", &ranking.female)] {
        println!("{label}:");
        for r in list.iter().take(a.show) {
            println!("  {:>9.4}  {}", r.weight, r.name);
        }
    }
    Ok(())
}

fn remove_eval(a: RemoveArgs) -> Result<()> {
    let mut cfg: FairnessConfig = load_config(a.config.as_deref())?;
    a.fairness.apply(&mut cfg);
    set(&mut cfg.base_seed, a.seed);
    let (head, _) = io::read_head(&a.head)?;
    let acts = io::read_activations(&a.acts)?;
    let d = load_labels(&a.labels)?;
    check_aligned(&acts, &d)?;
    let indices = match (&a.ranking, &a.ratings) {
        (Some(p), _) => {
            let ranking: BiasRanking = io::read_json(p)?;
            if ranking.male.iter().chain(&ranking.female).any(|r| acts.concept_names().get(r.index) != Some(&r.name)) {
                return Err(cbm_fair::Error::Shape("ranking does not match the activation concepts".into()).into());
            }
            select_removal(&ranking, a.n, a.source.into())
        }
        (None, Some(p)) => select_by_rating(&read_ratings(p)?, acts.concept_names(), a.n)?,
        (None, None) => unreachable!("clap requires a selection"),
    };
    let (before, after) = evaluate_removal(&head, &acts, &d, &indices, &cfg)?;
    let removed: Vec<&str> = indices.iter().map(|&j| acts.concept_names()[j].as_str()).collect();
    println!("removed {} concepts", removed.len());
    println!("before:");
    print_report(&before);
    println!("after:");
    print_report(&after);
    if let Some(p) = &a.out {
        io::write_json(
            p,
            &json!({ "removed": removed, "before": before, "after": after, "cli": provenance("remove-eval", &cfg)? }),
        )?;
    }
    Ok(())
}

fn shift_report(a: ShiftArgs) -> Result<()> {
    let (before, _) = io::read_head(&a.before)?;
    let (after, meta) = io::read_head(&a.after)?;
    let acts = io::read_activations(&a.acts)?;
    let labels = a.labels.as_deref().map(load_labels).transpose()?;
    if let Some(d) = &labels {
        check_aligned(&acts, d)?;
    }
    let reports = debias_report(&before, &after, &acts, labels.as_ref().map(|d| d.class_label()))?;
    if let Some(p) = &a.out {
        io::write_json(p, &reports)?;
    }
    if let Some(p) = &a.csv {
        write_shifts_csv(p, &reports, &meta.output_names)?;
    }
    for r in &reports {
        let top = r.shifts.first().map_or(String::from("-"), |s| format!("{} {:+.4}", s.name, s.shift));
        println!("class {:>4}{}: largest shift {top}", r.class, if r.flagged { " (flagged)" } else { "" });
    }
    Ok(())
}

fn explain_image(a: ExplainArgs) -> Result<()> {
    let (head, _) = io::read_head(&a.head)?;
    let acts = io::read_activations(&a.acts)?;
    let i = acts
        .row_ids()
        .iter()
        .position(|id| *id == a.image)
        .ok_or_else(|| usage(format!("no image {:?} in {}", a.image, a.acts.display())))?;
    let class = match a.class {
        Some(c) => c,
        None => predict_labels(&head, MatrixView::new(acts.row(i), 1, acts.n_concepts())?)?[0],
    };
    let r = contribution_report(&head, &acts, i, class, a.top)?;
    if let Some(p) = &a.out {
        io::write_json(p, &r)?;
    }
    print_json(&r)
}

/// `{"synth": {...SynthConfig fields}, "ratio_range": [lo, hi]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSettings {
    synth: SynthConfig,
    /// Replace the ratios with uniform draws from this range.
    ratio_range: Option<[f64; 2]>,
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut s: SynthSettings = load_config(a.config.as_deref())?;
    let c = &mut s.synth;
    set(&mut c.seed, a.seed);
    set(&mut c.n_images, a.n_images);
    set(&mut c.n_classes, a.n_classes);
    set(&mut c.n_concepts, a.n_concepts);
    set(&mut c.signal_concepts_per_class, a.signal);
    set(&mut c.proxy_concepts, a.proxy);
    set(&mut c.proxy_strength, a.rho);
    set(&mut c.noise_std, a.noise_std);
    if let Some(r) = &a.ratio_range {
        let [lo, hi] = r[..] else {
            return Err(usage("--ratio-range takes two values: LO,HI"));
        };
        s.ratio_range = Some([lo, hi]);
    }
    let mut cfg = s.synth.clone();
    if let Some([lo, hi]) = s.ratio_range {
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(usage(format!("ratio range {lo},{hi} must satisfy 0 <= lo <= hi <= 1")));
        }
        let seed = cfg.seed;
        cfg = cfg.with_random_ratios(lo, hi, seed);
    } else if cfg.male_ratios.len() != cfg.n_classes && a.n_classes.is_some() {
        cfg.male_ratios = vec![0.5; cfg.n_classes];
    }
    let data = generate(&cfg)?;
    io::write_activations(&a.out, &data.activations)?;
    echo_matrix_config(&a.out, "synth", &cfg)?;
    write_labels(&a.labels_out, &data.labels)?;
    echo_config(&a.labels_out, "synth", &cfg)?;
    if a.dataset_out.is_some() || a.concepts_out.is_some() || a.classes_out.is_some() {
        let e = generate_embeddings(&cfg)?;
        if let Some(p) = &a.dataset_out {
            io::write_dataset(p, &LabeledDataset::new(e.images.clone(), e.labels.clone())?)?;
            echo_matrix_config(p, "synth", &cfg)?;
        }
        if let Some(p) = &a.concepts_out {
            io::write_matrix(p, &e.concepts)?;
            echo_matrix_config(p, "synth", &cfg)?;
        }
        if let Some(p) = &a.classes_out {
            io::write_matrix(p, &e.classes)?;
            echo_matrix_config(p, "synth", &cfg)?;
        }
    }
    println!(
        "{} images, {} classes, {} concepts; ratios {:?}",
        cfg.n_images, cfg.n_classes, cfg.n_concepts, cfg.male_ratios
    );
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let rows = read_rows(&a.sweep)?;
    let svg = emit_tradeoff_plot(&rows)?;
    std::fs::write(&a.out, svg).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} points -> {}", rows.iter().filter(|r| r.is_ok()).count(), a.out.display());
    Ok(())
}
