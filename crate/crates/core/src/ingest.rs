//! Build a labeled dataset from exported image embeddings and
//! situation-recognition metadata (agent string + verb per image).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetLabels, EmbeddingMatrix, LabeledDataset, Sex, Split};
use crate::error::{Error, Result};
use crate::io;

const DEFAULT_MALE: [&str; 11] = [
    "man", "male", "boy", "mister", "father", "brother", "uncle", "husband", "son", "dad", "groom",
];
const DEFAULT_FEMALE: [&str; 11] = [
    "woman", "female", "girl", "miss", "mom", "sister", "mother", "aunt", "wife", "daughter",
    "bride",
];

/// Word lists used to read a gender off an agent description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderLexicon {
    male: BTreeSet<String>,
    female: BTreeSet<String>,
}

impl Default for GenderLexicon {
    fn default() -> Self {
        Self {
            male: DEFAULT_MALE.iter().map(|s| s.to_string()).collect(),
            female: DEFAULT_FEMALE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GenderLexicon {
    pub fn new<I, J, S, T>(male: I, female: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let male: BTreeSet<String> = male.into_iter().map(Into::into).collect();
        let female: BTreeSet<String> = female.into_iter().map(Into::into).collect();
        if let Some(t) = male.iter().chain(&female).find(|t| t.to_lowercase() != **t || t.is_empty()) {
            return Err(Error::InvalidParameter(format!("lexicon token {t:?} must be lowercase and nonempty")));
        }
        if let Some(t) = male.intersection(&female).next() {
            return Err(Error::InvalidParameter(format!("token {t:?} is in both lists")));
        }
        Ok(Self { male, female })
    }

    /// Load `{"male": [...], "female": [...]}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            male: Vec<String>,
            female: Vec<String>,
        }
        let raw: Raw = io::read_json(path)?;
        Self::new(raw.male, raw.female)
    }

    pub fn male(&self) -> &BTreeSet<String> {
        &self.male
    }

    pub fn female(&self) -> &BTreeSet<String> {
        &self.female
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedGender {
    Male,
    Female,
    /// Neither list matched.
    Unknown,
    /// Both lists matched.
    Ambiguous,
}

impl ParsedGender {
    pub fn sex(self) -> Option<Sex> {
        match self {
            ParsedGender::Male => Some(Sex::Male),
            ParsedGender::Female => Some(Sex::Female),
            _ => None,
        }
    }
}

/// Token match (not substring), so "woman" never reads as "man".
pub fn parse_gender_detailed(agent: &str, lex: &GenderLexicon) -> ParsedGender {
    let lower = agent.to_lowercase();
    let mut male = false;
    let mut female = false;
    for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        male |= lex.male.contains(tok);
        female |= lex.female.contains(tok);
    }
    match (male, female) {
        (true, false) => ParsedGender::Male,
        (false, true) => ParsedGender::Female,
        (true, true) => ParsedGender::Ambiguous,
        (false, false) => ParsedGender::Unknown,
    }
}

/// Male, female, or `None` when neither or both lists match.
pub fn parse_gender(agent: &str, lex: &GenderLexicon) -> Option<Sex> {
    parse_gender_detailed(agent, lex).sex()
}

/// Indices of the `n` most populated classes, in original class order.
/// Equal counts are ranked by class name.
pub fn top_class_indices(class_label: &[usize], class_names: &[String], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of classes to keep must be >= 1".into()));
    }
    if class_label.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut counts = vec![0usize; class_names.len()];
    for &c in class_label {
        counts[c] += 1;
    }
    let mut present: Vec<usize> = (0..class_names.len()).filter(|&c| counts[c] > 0).collect();
    if n > present.len() {
        return Err(Error::InvalidParameter(format!(
            "asked for {n} classes but only {} are present",
            present.len()
        )));
    }
    present.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then_with(|| class_names[a].cmp(&class_names[b])));
    let mut kept = present[..n].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Keep images whose class is among the `n` largest, remapping class
/// indices densely in original class order.
pub fn select_top_classes(d: &LabeledDataset, n: usize) -> Result<LabeledDataset> {
    let labels = d.labels();
    let kept = top_class_indices(labels.class_label(), labels.class_names(), n)?;
    let mut remap = vec![usize::MAX; labels.n_classes()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let rows: Vec<usize> = (0..labels.len())
        .filter(|&i| remap[labels.class_label()[i]] != usize::MAX)
        .collect();
    let embeddings = d.embeddings().select_rows(&rows)?;
    let new_labels = DatasetLabels::new(
        rows.iter().map(|&i| labels.row_ids()[i].clone()).collect(),
        rows.iter().map(|&i| remap[labels.class_label()[i]]).collect(),
        rows.iter().map(|&i| labels.sensitive()[i]).collect(),
        rows.iter().map(|&i| labels.split()[i]).collect(),
        kept.iter().map(|&c| labels.class_names()[c].clone()).collect(),
        labels.attribute_name(),
    )?;
    LabeledDataset::new(embeddings, new_labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_male: usize,
    pub n_female: usize,
    pub overall_male_ratio: f64,
    /// Per-class majority-gender ratio, weighted by class size.
    pub weighted_majority_ratio: f64,
}

pub fn compute_stats(labels: &DatasetLabels) -> Result<DatasetStats> {
    if labels.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut per_class = vec![[0usize; 2]; labels.n_classes()];
    for (&c, &s) in labels.class_label().iter().zip(labels.sensitive()) {
        per_class[c][s as usize] += 1;
    }
    if let Some(c) = per_class.iter().position(|k| k[0] + k[1] == 0) {
        return Err(Error::EmptyClass(labels.class_names()[c].clone()));
    }
    let n = labels.len();
    let n_male: usize = per_class.iter().map(|k| k[0]).sum();
    // sum_c (|c|/N) * max/|c| = sum_c max / N
    let majority: usize = per_class.iter().map(|k| k[0].max(k[1])).sum();
    Ok(DatasetStats {
        n_images: n,
        n_male,
        n_female: n - n_male,
        overall_male_ratio: n_male as f64 / n as f64,
        weighted_majority_ratio: majority as f64 / n as f64,
    })
}

/// One image's metadata record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub agent: String,
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Image id -> record. Ordered so ingestion is deterministic.
pub type Metadata = BTreeMap<String, ImageRecord>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub stats: DatasetStats,
    pub n_records: usize,
    pub n_unknown_agent: usize,
    /// Agents naming both genders; dropped.
    pub n_ambiguous_agent: usize,
    pub n_missing_embedding: usize,
    pub n_classes_before: usize,
    pub n_classes_kept: usize,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub lexicon: GenderLexicon,
    pub n_classes: usize,
    /// Test fraction for records without a split tag.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            lexicon: GenderLexicon::default(),
            n_classes: 200,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Parse genders, drop non-person agents, keep the top classes, attach
/// embeddings and splits.
pub fn build_dataset(
    meta: &Metadata,
    embeddings: &EmbeddingMatrix,
    cfg: &IngestConfig,
) -> Result<(LabeledDataset, IngestReport)> {
    let emb_index: HashMap<&str, usize> = embeddings
        .row_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut n_unknown = 0;
    let mut n_ambiguous = 0;
    let mut n_missing = 0;
    // (id, verb, sex, split tag)
    let mut rows: Vec<(&str, &str, Sex, Option<Split>)> = Vec::new();
    for (id, rec) in meta {
        let sex = match parse_gender_detailed(&rec.agent, &cfg.lexicon) {
            ParsedGender::Unknown => {
                n_unknown += 1;
                continue;
            }
            ParsedGender::Ambiguous => {
                n_ambiguous += 1;
                continue;
            }
            g => g.sex().unwrap(),
        };
        if !emb_index.contains_key(id.as_str()) {
            n_missing += 1;
            continue;
        }
        let split = rec.split.as_deref().map(Split::parse).transpose()?;
        rows.push((id, &rec.verb, sex, split));
    }
    if rows.is_empty() {
        return Err(Error::Empty("no person images after gender parsing"));
    }

    let verbs: BTreeSet<&str> = rows.iter().map(|r| r.1).collect();
    let all_names: Vec<String> = verbs.iter().map(|s| s.to_string()).collect();
    let verb_index: HashMap<&str, usize> = verbs.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let class_label: Vec<usize> = rows.iter().map(|r| verb_index[r.1]).collect();
    let kept = top_class_indices(&class_label, &all_names, cfg.n_classes)?;
    let mut remap = vec![usize::MAX; all_names.len()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let selected: Vec<usize> = (0..rows.len()).filter(|&i| remap[class_label[i]] != usize::MAX).collect();
    let class_names: Vec<String> = kept.iter().map(|&c| all_names[c].clone()).collect();
    let labels_new: Vec<usize> = selected.iter().map(|&i| remap[class_label[i]]).collect();
    let sexes: Vec<u8> = selected.iter().map(|&i| rows[i].2.index()).collect();

    let splits = assign_splits(
        &selected.iter().map(|&i| rows[i].3).collect::<Vec<_>>(),
        &labels_new,
        &sexes,
        cfg.test_fraction,
        cfg.seed,
    );
    let ids: Vec<String> = selected.iter().map(|&i| rows[i].0.to_string()).collect();
    let emb_rows: Vec<usize> = ids.iter().map(|id| emb_index[id.as_str()]).collect();
    let emb = embeddings.select_rows(&emb_rows)?;
    let labels = DatasetLabels::new(ids, labels_new, sexes, splits, class_names, "gender")?;
    let stats = compute_stats(&labels)?;
    let report = IngestReport {
        stats,
        n_records: meta.len(),
        n_unknown_agent: n_unknown,
        n_ambiguous_agent: n_ambiguous,
        n_missing_embedding: n_missing,
        n_classes_before: all_names.len(),
        n_classes_kept: kept.len(),
    };
    Ok((LabeledDataset::new(emb, labels)?, report))
}

/// Keep given tags; untagged rows get a seeded split stratified by
/// (class, sex).
pub fn assign_splits(
    given: &[Option<Split>],
    class_label: &[usize],
    sensitive: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Vec<Split> {
    let mut groups: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..given.len() {
        if given[i].is_none() {
            groups.entry((class_label[i], sensitive[i])).or_default().push(i);
        }
    }
    let mut out: Vec<Split> = given.iter().map(|s| s.unwrap_or(Split::Train)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        for &i in &members[..n_test] {
            out[i] = Split::Test;
        }
    }
    out
}
