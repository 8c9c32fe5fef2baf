//! Joint training: ranking pairs for the preference head, annotated
//! stories for the aspect heads and the comment decoder, optional negative
//! stories, validation-based checkpoint selection and exact resume.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspects::CommentRecord;
use crate::corpus::{NegativeStory, RankedPair, Story};
use crate::error::{Error, Result};
use crate::metrics::pairwise_accuracy;
use crate::neural::{AdamWConfig, LrSchedule, OptimizerState, Tape, Tensor, Var};
use crate::objectives::{graph, AspectTarget, LossBreakdown};
use crate::rng;
use crate::text::{Dropout, ModelConfig, StoryModel, Vocabulary};

/// Which loss components are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskToggles {
    pub p_s: bool,
    pub aspects: bool,
    pub comments: bool,
    pub negatives: bool,
}

impl Default for TaskToggles {
    fn default() -> Self {
        Self {
            p_s: true,
            aspects: true,
            comments: true,
            negatives: false,
        }
    }
}

impl TaskToggles {
    pub fn preference_only() -> Self {
        Self {
            p_s: true,
            aspects: false,
            comments: false,
            negatives: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_s || self.aspects || self.comments) {
            return Err(Error::config("no task is enabled"));
        }
        if self.negatives && !self.p_s {
            return Err(Error::config("negatives require the preference task"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceObjective {
    /// Pairwise margin ranking.
    Margin,
    /// Binary cross-entropy with high = 1 and low = 0.
    Discrimination,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub p_s: f64,
    pub confidence: f64,
    pub rating: f64,
    pub comment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            p_s: 1.0,
            confidence: 1.0,
            rating: 1.0,
            comment: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// Annotated stories per step; the ranking batch size when unset.
    pub annotation_batch_size: Option<usize>,
    pub margin: f64,
    pub objective: PreferenceObjective,
    pub label_smoothing: f64,
    pub optimizer: AdamWConfig,
    /// One epoch of ranking pairs when unset.
    pub warmup_steps: Option<u64>,
    /// Validation interval; one epoch when unset.
    pub eval_every: Option<u64>,
    pub weights: LossWeights,
    pub normalize_confidence: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 16,
            annotation_batch_size: None,
            margin: crate::objectives::DEFAULT_MARGIN,
            objective: PreferenceObjective::Margin,
            label_smoothing: 0.0,
            optimizer: AdamWConfig::default(),
            warmup_steps: None,
            eval_every: None,
            weights: LossWeights::default(),
            normalize_confidence: false,
        }
    }
}

/// Input and output locations for file-based runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub stories: Option<PathBuf>,
    pub train_pairs: Option<PathBuf>,
    pub val_pairs: Option<PathBuf>,
    pub test_pairs: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub negatives: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tasks: TaskToggles,
    pub data: DataPaths,
}

impl RunConfig {
    /// Settings that train the compact model on a laptop in minutes.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.model.max_len = 128;
        c.model.max_comment_len = 24;
        c.model.dropout = 0.0;
        c.train.steps = 400;
        c.train.optimizer.lr = 5e-4;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.tasks.validate()?;
        let t = &self.train;
        if t.batch_size == 0 || t.annotation_batch_size == Some(0) {
            return Err(Error::config("batch sizes must be positive"));
        }
        if t.steps == 0 {
            return Err(Error::config("steps must be positive"));
        }
        if t.margin.is_nan() || t.margin <= 0.0 {
            return Err(Error::config("margin must be positive"));
        }
        if !(0.0..0.5).contains(&t.label_smoothing) {
            return Err(Error::config("label smoothing must be in [0, 0.5)"));
        }
        if self.tasks.negatives && t.objective == PreferenceObjective::Discrimination {
            return Err(Error::config(
                "negatives are only defined for the margin objective",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Dotted paths of the leaves where two configs differ.
pub fn config_diff(a: &RunConfig, b: &RunConfig) -> Vec<String> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        use serde_json::Value;
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let p = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(
                        &p,
                        x.get(k).unwrap_or(&Value::Null),
                        y.get(k).unwrap_or(&Value::Null),
                        out,
                    );
                }
            }
            _ if a != b => out.push(format!("{prefix}: {a} -> {b}")),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(
        "",
        &serde_json::to_value(a).expect("config serializes"),
        &serde_json::to_value(b).expect("config serializes"),
        &mut out,
    );
    out
}

/// Aspect and comment supervision for one story.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub story_id: String,
    pub target: AspectTarget,
    /// `(aspect, <bos> ... <eos> ids)`.
    pub comments: Vec<(usize, Vec<usize>)>,
}

/// Tokenized training material.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub stories: HashMap<String, Vec<usize>>,
    pub train_pairs: Vec<RankedPair>,
    pub val_pairs: Vec<RankedPair>,
    /// Negative stories by source story id.
    pub negatives: BTreeMap<String, Vec<Vec<usize>>>,
    pub annotations: Vec<Annotation>,
}

/// Raw material for [`TrainingData::build`].
#[derive(Clone, Copy, Debug)]
pub struct DataSources<'a> {
    pub stories: &'a [Story],
    pub train_pairs: &'a [RankedPair],
    pub val_pairs: &'a [RankedPair],
    /// Stories whose annotations must not be trained on (held-out splits).
    pub held_out_pairs: &'a [RankedPair],
    pub negatives: &'a [NegativeStory],
    pub comments: &'a [CommentRecord],
}

impl TrainingData {
    /// Tokenizes everything. Without `vocab`, one is built from the
    /// training-side texts, capped at `model.vocab_size`.
    pub fn build(src: DataSources, model: &ModelConfig, vocab: Option<Vocabulary>) -> Result<Self> {
        let held_out: HashSet<&str> = src
            .val_pairs
            .iter()
            .chain(src.held_out_pairs)
            .flat_map(|p| [p.high_id.as_str(), p.low_id.as_str()])
            .collect();
        let vocab = match vocab {
            Some(v) => v,
            None => {
                let texts = src
                    .stories
                    .iter()
                    .filter(|s| !held_out.contains(s.id.as_str()))
                    .map(|s| s.text.as_str())
                    .chain(src.negatives.iter().map(|n| n.text.as_str()))
                    .chain(src.comments.iter().map(|c| c.text.as_str()));
                Vocabulary::build(texts, model.vocab_size, model.num_aspects)?
            }
        };
        if vocab.num_aspects() != model.num_aspects {
            return Err(Error::config(format!(
                "vocabulary has {} aspect tokens, model expects {}",
                vocab.num_aspects(),
                model.num_aspects
            )));
        }
        let mut stories = HashMap::with_capacity(src.stories.len());
        for s in src.stories {
            stories.insert(s.id.clone(), vocab.tokenize(&s.text, model.max_len)?);
        }
        for p in src.train_pairs.iter().chain(src.val_pairs) {
            for id in [&p.high_id, &p.low_id] {
                if !stories.contains_key(id) {
                    return Err(Error::data(format!("pair refers to unknown story {id}")));
                }
            }
        }
        let mut negatives: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
        for n in src.negatives {
            if held_out.contains(n.source_story_id.as_str()) {
                continue;
            }
            negatives
                .entry(n.source_story_id.clone())
                .or_default()
                .push(vocab.tokenize(&n.text, model.max_len)?);
        }
        let train_side: Vec<&CommentRecord> = src
            .comments
            .iter()
            .filter(|c| {
                !held_out.contains(c.story_id.as_str()) && stories.contains_key(&c.story_id)
            })
            .collect();
        let annotations = build_annotations(&train_side, &vocab, model)?;
        Ok(Self {
            vocab,
            stories,
            train_pairs: src.train_pairs.to_vec(),
            val_pairs: src.val_pairs.to_vec(),
            negatives,
            annotations,
        })
    }
}

/// Groups comment records by story. An aspect is selected when a record
/// carries it with a rating; its target rating is the mean over records.
pub fn build_annotations(
    records: &[&CommentRecord],
    vocab: &Vocabulary,
    model: &ModelConfig,
) -> Result<Vec<Annotation>> {
    let mut by_story: BTreeMap<&str, Vec<&CommentRecord>> = BTreeMap::new();
    for r in records {
        r.validate(model.num_aspects)?;
        by_story.entry(&r.story_id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(by_story.len());
    for (story, recs) in by_story {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let mut comments = Vec::new();
        for r in &recs {
            let (Some(a), Some(rating)) = (r.aspect, r.rating) else {
                continue;
            };
            let e = sums.entry(a).or_default();
            e.0 += rating;
            e.1 += 1;
            if let Ok(ids) = vocab.comment_ids(&r.text, model.max_comment_len) {
                comments.push((a, ids));
            }
        }
        if sums.is_empty() {
            continue;
        }
        let ratings: Vec<(usize, f64)> = sums
            .into_iter()
            .map(|(a, (s, n))| (a, s / n as f64))
            .collect();
        let target = AspectTarget::new(model.num_aspects, &ratings)?;
        let crowd = recs
            .iter()
            .any(|r| r.source == crate::aspects::CommentSource::Crowd);
        target
            .validate(crowd)
            .map_err(|e| Error::data(format!("story {story}: {e}")))?;
        out.push(Annotation {
            story_id: story.to_string(),
            target,
            comments,
        });
    }
    Ok(out)
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub losses: LossBreakdown,
}

pub const LOG_HEADER: &str = "step,lr,L_ps,L_ac,L_ar,L_c,L_total";

impl LogRow {
    pub fn csv(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.lr, l.l_ps, l.l_ac, l.l_ar, l.l_c, l.total
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub step: u64,
    pub accuracy: f64,
}

/// Self-describing training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub step: u64,
    pub config: RunConfig,
    pub vocab: Vec<String>,
    pub params: Vec<(String, Tensor<f32>)>,
    /// Absent in best-model snapshots.
    pub optimizer: Option<OptimizerState>,
    pub best: Option<Validation>,
    pub history: Vec<Validation>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_lines(
            self.vocab.iter().map(String::as_str),
            self.config.model.num_aspects,
        )
    }

    pub fn model(&self) -> Result<StoryModel> {
        StoryModel::from_named(self.config.model.clone(), &self.params)
    }
}

pub struct Trainer {
    config: RunConfig,
    hash: String,
    data: TrainingData,
    model: StoryModel,
    optimizer: OptimizerState,
    schedule: LrSchedule,
    step: u64,
    best: Option<Validation>,
    best_params: Option<Vec<(String, Tensor<f32>)>>,
    history: Vec<Validation>,
    order_cache: HashMap<&'static str, (u64, Vec<usize>)>,
}

impl Trainer {
    /// Fresh run. The model vocabulary size is taken from `data.vocab`.
    pub fn new(mut config: RunConfig, data: TrainingData) -> Result<Self> {
        config.model.vocab_size = data.vocab.len();
        config.validate()?;
        if config.tasks.p_s && data.train_pairs.is_empty() {
            return Err(Error::EmptyInput("no training pairs".into()));
        }
        if (config.tasks.aspects || config.tasks.comments) && data.annotations.is_empty() {
            return Err(Error::config(
                "aspect or comment training needs annotated stories",
            ));
        }
        if config.tasks.comments && data.annotations.iter().all(|a| a.comments.is_empty()) {
            return Err(Error::config("comment training needs tokenizable comments"));
        }
        if config.tasks.negatives && data.negatives.is_empty() {
            return Err(Error::config("negative training needs negative stories"));
        }
        let model = StoryModel::new(config.model.clone(), config.seed)?;
        let optimizer = OptimizerState::new(config.train.optimizer, model.params());
        let epoch = data
            .train_pairs
            .len()
            .max(data.annotations.len())
            .div_ceil(config.train.batch_size) as u64;
        let warmup = config
            .train
            .warmup_steps
            .unwrap_or(epoch)
            .min(config.train.steps);
        let schedule = LrSchedule::new(warmup, config.train.steps, config.train.optimizer.lr)?;
        Ok(Self {
            hash: config.hash(),
            config,
            data,
            model,
            optimizer,
            schedule,
            step: 0,
            best: None,
            best_params: None,
            history: Vec::new(),
            order_cache: HashMap::new(),
        })
    }

    /// Continues from `ckpt`, refusing when its config differs.
    pub fn resume(config: RunConfig, data: TrainingData, ckpt: Checkpoint) -> Result<Self> {
        let mut t = Self::new(config, data)?;
        if ckpt.config_hash != t.hash {
            let diff = config_diff(&ckpt.config, &t.config);
            return Err(Error::HashMismatch {
                expected: ckpt.config_hash,
                found: format!("{} ({})", t.hash, diff.join("; ")),
            });
        }
        if ckpt.vocab != t.data.vocab.tokens() {
            return Err(Error::config(
                "checkpoint vocabulary differs from the data vocabulary",
            ));
        }
        let Some(opt) = ckpt.optimizer else {
            return Err(Error::config(
                "checkpoint has no optimizer state; it cannot be resumed",
            ));
        };
        t.model.params_mut().load_from(&ckpt.params)?;
        t.optimizer = opt;
        t.step = ckpt.step;
        t.best = ckpt.best;
        t.history = ckpt.history;
        Ok(t)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.train.steps
    }

    pub fn model(&self) -> &StoryModel {
        &self.model
    }

    pub fn data(&self) -> &TrainingData {
        &self.data
    }

    pub fn best(&self) -> Option<&Validation> {
        self.best.as_ref()
    }

    pub fn history(&self) -> &[Validation] {
        &self.history
    }

    /// The best-validation model, or the current one if none was recorded.
    pub fn best_model(&self) -> Result<StoryModel> {
        match &self.best_params {
            Some(p) => StoryModel::from_named(self.config.model.clone(), p),
            None => Ok(self.model.clone()),
        }
    }

    fn eval_every(&self) -> u64 {
        self.config
            .train
            .eval_every
            .unwrap_or_else(|| {
                self.data
                    .train_pairs
                    .len()
                    .div_ceil(self.config.train.batch_size) as u64
            })
            .max(1)
    }

    /// Item indices for this step: a fresh seeded permutation per epoch,
    /// derived from the step alone so that resumed runs match.
    fn batch(&mut self, name: &'static str, n: usize, size: usize) -> Vec<usize> {
        let start = self.step * size as u64;
        (start..start + size as u64)
            .map(|c| {
                let epoch = c / n as u64;
                let entry = self
                    .order_cache
                    .entry(name)
                    .or_insert((u64::MAX, Vec::new()));
                if entry.0 != epoch {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut rng::stream(
                        self.config.seed,
                        &format!("{name}/{epoch}"),
                    ));
                    *entry = (epoch, order);
                }
                entry.1[(c % n as u64) as usize]
            })
            .collect()
    }

    fn pick_negative(&self, pair: &RankedPair, rng: &mut rng::SeededRng) -> &[usize] {
        let own: Vec<&Vec<usize>> = [&pair.low_id, &pair.high_id]
            .into_iter()
            .filter_map(|id| self.data.negatives.get(id))
            .flatten()
            .collect();
        if let Some(n) = own.choose(rng) {
            return n;
        }
        let all: Vec<&Vec<usize>> = self.data.negatives.values().flatten().collect();
        all.choose(rng).expect("negatives checked at construction")
    }

    /// Runs one optimization step and returns its log row.
    pub fn step(&mut self) -> Result<LogRow> {
        let cfg = self.config.clone();
        let tasks = cfg.tasks;
        let b = cfg.train.batch_size;
        let ranking = if tasks.p_s {
            self.batch("ranking", self.data.train_pairs.len(), b)
        } else {
            Vec::new()
        };
        let annotated = if tasks.aspects || tasks.comments {
            let n = cfg.train.annotation_batch_size.unwrap_or(b);
            self.batch("annotations", self.data.annotations.len(), n)
        } else {
            Vec::new()
        };
        let mut neg_rng = rng::stream(cfg.seed, &format!("negatives/{}", self.step));
        let mut comment_rng = rng::stream(cfg.seed, &format!("comments/{}", self.step));
        let mut drop_rng = rng::stream(cfg.seed, &format!("dropout/{}", self.step));

        let data = &self.data;
        let model = &self.model;
        let mut tape = Tape::new(model.params());
        let mut dropout = (cfg.model.dropout > 0.0).then_some(Dropout {
            p: cfg.model.dropout,
            rng: &mut drop_rng,
        });

        let score =
            |tape: &mut Tape<f32>, ids: &[usize], dropout: &mut Option<Dropout>| -> Result<Var> {
                let enc = model.forward_encoder(tape, ids, dropout)?;
                Ok(model.forward_preference(tape, enc.pooled))
            };

        let mut ps_terms = Vec::new();
        for &i in &ranking {
            let pair = &data.train_pairs[i];
            let hi = score(&mut tape, &data.stories[&pair.high_id], &mut dropout)?;
            let lo = score(&mut tape, &data.stories[&pair.low_id], &mut dropout)?;
            let term = match cfg.train.objective {
                PreferenceObjective::Margin => {
                    let pref = graph::margin_rank_loss(&mut tape, hi, lo, cfg.train.margin);
                    if tasks.negatives {
                        let neg_ids = self.pick_negative(pair, &mut neg_rng).to_vec();
                        let neg = score(&mut tape, &neg_ids, &mut dropout)?;
                        let coh = graph::margin_rank_loss(&mut tape, lo, neg, cfg.train.margin);
                        tape.add(pref, coh)
                    } else {
                        pref
                    }
                }
                PreferenceObjective::Discrimination => {
                    let s = cfg.train.label_smoothing;
                    let a = graph::discrimination_loss(&mut tape, hi, true, s);
                    let c = graph::discrimination_loss(&mut tape, lo, false, s);
                    tape.add(a, c)
                }
            };
            ps_terms.push(term);
        }

        let (mut ac_terms, mut ar_terms, mut c_terms) = (Vec::new(), Vec::new(), Vec::new());
        for &i in &annotated {
            let ann = &data.annotations[i];
            let story = &data.stories[&ann.story_id];
            if tasks.aspects {
                let enc = model.forward_encoder(&mut tape, story, &mut dropout)?;
                let (a_c, a_r) = model.forward_aspects(&mut tape, enc.pooled);
                let y = ann.target.confidence_target(cfg.train.normalize_confidence);
                ac_terms.push(graph::confidence_loss(&mut tape, a_c, &y));
                if let Some(r) =
                    graph::rating_loss(&mut tape, a_r, &ann.target.ratings, &ann.target.selected)
                {
                    ar_terms.push(r);
                }
            }
            if tasks.comments {
                if let Some((aspect, ids)) = ann.comments.choose(&mut comment_rng) {
                    c_terms.push(model.forward_comment_nll(
                        &mut tape,
                        story,
                        *aspect,
                        ids,
                        &mut dropout,
                    )?);
                }
            }
        }

        let components = [
            graph::mean_of(&mut tape, &ps_terms),
            graph::mean_of(&mut tape, &ac_terms),
            graph::mean_of(&mut tape, &ar_terms),
            graph::mean_of(&mut tape, &c_terms),
        ];
        let w = cfg.train.weights;
        let weights = [w.p_s, w.confidence, w.rating, w.comment];
        let weighted: Vec<f64> = components
            .iter()
            .zip(weights)
            .map(|(c, w)| {
                c.map_or(0.0, |c| {
                    (tape.value(c).item() * <f32 as crate::neural::Scalar>::of(w)) as f64
                })
            })
            .collect();
        let total = graph::joint_loss(&mut tape, components, weights)
            .expect("at least one task is enabled");
        tape.check()?;
        let losses = LossBreakdown {
            l_ps: weighted[0],
            l_ac: weighted[1],
            l_ar: weighted[2],
            l_c: weighted[3],
            total: tape.item(total),
        };
        let grads = tape.backward(total)?;
        drop(tape);

        let lr = self.schedule.lr_at(self.step + 1);
        let params = self.model.params_mut();
        params.zero_grad();
        params.accumulate(&grads);
        self.optimizer.step(params, lr)?;
        self.step += 1;
        Ok(LogRow {
            step: self.step,
            lr,
            losses,
        })
    }

    /// Pairwise accuracy of the current model on the validation pairs.
    pub fn validate(&self) -> Result<Option<f64>> {
        if !self.config.tasks.p_s || self.data.val_pairs.is_empty() {
            return Ok(None);
        }
        let scores = score_pairs(&self.model, &self.data.stories, &self.data.val_pairs)?;
        Ok(Some(pairwise_accuracy(&scores)?))
    }

    /// Validates on schedule; returns the new record when the best
    /// accuracy improved.
    pub fn maybe_validate(&mut self) -> Result<Option<Validation>> {
        if !self.step.is_multiple_of(self.eval_every()) && !self.is_done() {
            return Ok(None);
        }
        if self.history.last().is_some_and(|v| v.step == self.step) {
            return Ok(None);
        }
        let Some(accuracy) = self.validate()? else {
            return Ok(None);
        };
        let v = Validation {
            step: self.step,
            accuracy,
        };
        self.history.push(v.clone());
        if self.best.as_ref().is_none_or(|b| accuracy >= b.accuracy) {
            self.best = Some(v.clone());
            self.best_params = Some(self.model.params().named_values());
            return Ok(Some(v));
        }
        Ok(None)
    }

    /// Full training state at the current step.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            step: self.step,
            config: self.config.clone(),
            vocab: self.data.vocab.tokens().to_vec(),
            params: self.model.params().named_values(),
            optimizer: Some(self.optimizer.clone()),
            best: self.best.clone(),
            history: self.history.clone(),
        }
    }

    /// Snapshot of the best-validation weights, if any.
    pub fn best_checkpoint(&self) -> Option<Checkpoint> {
        let best = self.best.clone()?;
        Some(Checkpoint {
            step: best.step,
            params: self.best_params.clone()?,
            optimizer: None,
            best: Some(best),
            ..self.checkpoint()
        })
    }

    /// Steps until done, validating on schedule; `on_row` sees every log row.
    pub fn run(&mut self, mut on_row: impl FnMut(&LogRow) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let row = self.step()?;
            on_row(&row)?;
            self.maybe_validate()?;
        }
        Ok(())
    }
}

/// `(p_high, p_low)` for each pair, scoring every story once.
pub fn score_pairs(
    model: &StoryModel,
    stories: &HashMap<String, Vec<usize>>,
    pairs: &[RankedPair],
) -> Result<Vec<(f64, f64)>> {
    let mut cache: HashMap<&str, f64> = HashMap::new();
    let mut get = |id: &str| -> Result<f64> {
        if let Some(&p) = cache.get(id) {
            return Ok(p);
        }
        let ids = stories
            .get(id)
            .ok_or_else(|| Error::data(format!("unknown story {id}")))?;
        let p = model.score(ids)?.p_s;
        Ok(*cache
            .entry(stories.get_key_value(id).expect("present").0)
            .or_insert(p))
    };
    pairs
        .iter()
        .map(|p| Ok((get(&p.high_id)?, get(&p.low_id)?)))
        .collect()
}
