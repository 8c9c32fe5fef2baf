//! The command implementations behind the `storyer` binary.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{create_dir, section_hash, write_json, write_jsonl, AppConfig, Manifest};
use crate::aspects::{
    augment_comments, comment_tokens, lda_fit, read_jsonl, select_num_topics,
    train_aspect_classifier, train_sentiment_scorer, AspectTaxonomy, AugmentAudit,
    ClassifierReport, CommentRecord, RawComment, TopicEntry, TopicMapping, TopicSelection,
};
use crate::corpus::{
    generate_negative, prepare, read_stories, DatasetStats, FilterReason, NegativeKind,
    NegativeStory, RankedPair, Reject, Story,
};
use crate::error::{Error, Result};
use crate::metrics::{
    bleu_avg, corpus_perplexity, correlation_pvalue, pairwise_accuracy, recall_at_k, render_table,
    rouge_l, score_distance, top_k, CommentExample, MetricReport, Statistic,
};
use crate::text::{generate_comment, vocab::segment, EvaluationOutput, StoryModel, Vocabulary};
use crate::train::{
    Checkpoint, DataSources, LogRow, Trainer, TrainingData, Validation, LOG_HEADER,
};

// ---------------------------------------------------------------- prepare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub config_hash: String,
    pub seed: u64,
    pub parsed: usize,
    pub rejected: Vec<Reject>,
    pub filtered: BTreeMap<FilterReason, usize>,
    pub kept: usize,
    pub splits: DatasetStats,
}

/// Filters, pairs and splits `input`; writes `{train,val,test}.jsonl`,
/// `stories.jsonl`, `stats.json` and `manifest.json` into `out`.
pub fn cmd_prepare(input: &Path, out: &Path, cfg: &AppConfig) -> Result<PrepareReport> {
    let hash = section_hash(cfg.seed, &cfg.prepare);
    let (stories, rejected) = read_stories(input)?;
    let parsed = stories.len();
    let prepared = prepare(stories, &cfg.prepare, cfg.seed)?;
    create_dir(out)?;
    for (name, pairs) in prepared.splits.named() {
        write_jsonl(&out.join(format!("{name}.jsonl")), pairs)?;
    }
    write_jsonl(&out.join("stories.jsonl"), &prepared.stories)?;
    let report = PrepareReport {
        config_hash: hash.clone(),
        seed: cfg.seed,
        parsed,
        rejected,
        filtered: prepared.filtered,
        kept: prepared.stories.len(),
        splits: prepared.stats,
    };
    write_json(&out.join("stats.json"), &report)?;
    let outputs = [
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "stories.jsonl",
        "stats.json",
    ];
    write_json(
        &out.join("manifest.json"),
        &Manifest::new("prepare-pairs", &hash, cfg.seed, &outputs),
    )?;
    Ok(report)
}

// -------------------------------------------------------------- negatives

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedNegative {
    pub story_id: String,
    pub kind: NegativeKind,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativesReport {
    pub config_hash: String,
    pub seed: u64,
    pub generated: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedNegative>,
}

/// One negative per story and configured kind; unsuitable stories are
/// skipped and listed.
pub fn cmd_make_negatives(stories: &Path, out: &Path, cfg: &AppConfig) -> Result<NegativesReport> {
    let hash = section_hash(cfg.seed, &cfg.negatives);
    let stories: Vec<StoryInput> = read_jsonl(stories)?;
    let mut negatives = Vec::new();
    let mut report = NegativesReport {
        config_hash: hash.clone(),
        seed: cfg.seed,
        generated: BTreeMap::new(),
        skipped: Vec::new(),
    };
    for s in &stories {
        for &kind in &cfg.negatives.kinds {
            match generate_negative(&s.id, &s.text, kind, cfg.seed) {
                Ok(n) => {
                    *report.generated.entry(kind.name().to_string()).or_default() += 1;
                    negatives.push(n);
                }
                Err(Error::Skipped { story_id, reason }) => report.skipped.push(SkippedNegative {
                    story_id,
                    kind,
                    reason,
                }),
                Err(e) => return Err(e),
            }
        }
    }
    create_dir(out)?;
    write_jsonl(&out.join("negatives.jsonl"), &negatives)?;
    write_json(&out.join("negatives_report.json"), &report)?;
    let outputs = ["negatives.jsonl", "negatives_report.json"];
    write_json(
        &out.join("manifest.json"),
        &Manifest::new("make-negatives", &hash, cfg.seed, &outputs),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------- aspects

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub config_hash: String,
    pub seed: u64,
    pub documents: usize,
    pub selection: TopicSelection,
    pub mapping: TopicMapping,
}

/// Chooses the topic count by coherence and writes the topic list for
/// the operator to map onto aspects (`topics.json`), plus the default
/// taxonomy (`taxonomy.json`).
pub fn cmd_extract_aspects(comments: &Path, out: &Path, cfg: &AppConfig) -> Result<TopicReport> {
    let a = &cfg.aspects;
    let hash = section_hash(cfg.seed, &(&a.candidates, a.top_n, &a.lda));
    let raw: Vec<RawComment> = read_jsonl(comments)?;
    let docs: Vec<Vec<String>> = raw
        .iter()
        .map(|c| comment_tokens(&c.text))
        .filter(|d| !d.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::EmptyInput("no comment has usable words".into()));
    }
    let selection = select_num_topics(&docs, &a.candidates, &a.lda, a.top_n, cfg.seed)?;
    let model = lda_fit(&docs, selection.best, &a.lda, cfg.seed)?;
    let coherence = selection
        .scores
        .iter()
        .find(|(t, _)| *t == selection.best)
        .map(|s| s.1)
        .expect("best is a candidate");
    let mapping = TopicMapping {
        num_topics: selection.best,
        coherence,
        topics: (0..selection.best)
            .map(|t| TopicEntry {
                topic: t,
                top_words: model
                    .top_words(t, a.top_n)
                    .into_iter()
                    .map(str::to_string)
                    .collect(),
                aspect: None,
            })
            .collect(),
    };
    let report = TopicReport {
        config_hash: hash.clone(),
        seed: cfg.seed,
        documents: docs.len(),
        selection,
        mapping,
    };
    create_dir(out)?;
    write_json(&out.join("topics.json"), &report)?;
    AspectTaxonomy::default().save(&out.join("taxonomy.json"))?;
    write_json(
        &out.join("manifest.json"),
        &Manifest::new(
            "extract-aspects",
            &hash,
            cfg.seed,
            &["topics.json", "taxonomy.json"],
        ),
    )?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub config_hash: String,
    pub seed: u64,
    pub audit: AugmentAudit,
    pub aspect_classifier: ClassifierReport,
    pub sentiment_scorer: ClassifierReport,
}

/// Trains both comment classifiers on crowd labels, then labels the raw
/// comments that pass the filters.
pub fn cmd_augment(
    crowd: &Path,
    raw: &Path,
    taxonomy: Option<&Path>,
    out: &Path,
    cfg: &AppConfig,
) -> Result<AugmentReport> {
    let hash = section_hash(cfg.seed, &(&cfg.aspects.classifier, &cfg.augment));
    let taxonomy = match taxonomy {
        Some(p) => AspectTaxonomy::load(p)?,
        None => AspectTaxonomy::default(),
    };
    let crowd: Vec<CommentRecord> = read_jsonl(crowd)?;
    for r in &crowd {
        r.validate(taxonomy.len())?;
    }
    let raw: Vec<RawComment> = read_jsonl(raw)?;
    let map_contract = |e: Error| match e {
        Error::Contract(m) => Error::data(m),
        other => other,
    };
    let (aspect_model, aspect_report) =
        train_aspect_classifier(&crowd, taxonomy.len(), &cfg.aspects.classifier, cfg.seed)
            .map_err(map_contract)?;
    let (sentiment_model, sentiment_report) =
        train_sentiment_scorer(&crowd, &cfg.aspects.classifier, cfg.seed).map_err(map_contract)?;
    let (records, audit) = augment_comments(&raw, &aspect_model, &sentiment_model, &cfg.augment)?;
    create_dir(out)?;
    write_jsonl(&out.join("augmented.jsonl"), &records)?;
    aspect_model.save(&out.join("aspect_classifier.json"))?;
    sentiment_model.save(&out.join("sentiment_scorer.json"))?;
    let report = AugmentReport {
        config_hash: hash.clone(),
        seed: cfg.seed,
        audit,
        aspect_classifier: aspect_report,
        sentiment_scorer: sentiment_report,
    };
    write_json(&out.join("audit.json"), &report)?;
    let outputs = [
        "augmented.jsonl",
        "audit.json",
        "aspect_classifier.json",
        "sentiment_scorer.json",
    ];
    write_json(
        &out.join("manifest.json"),
        &Manifest::new("augment-comments", &hash, cfg.seed, &outputs),
    )?;
    Ok(report)
}

// ------------------------------------------------------------------ train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seed: u64,
    pub steps: u64,
    pub best: Option<Validation>,
    pub history: Vec<Validation>,
    pub final_loss: Option<f64>,
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("data.{what} is not set")))
}

fn optional<T: serde::de::DeserializeOwned>(p: &Option<PathBuf>) -> Result<Vec<T>> {
    p.as_deref().map_or(Ok(Vec::new()), read_jsonl)
}

/// Loads the files named in `cfg.data` into training form.
pub fn load_training_data(cfg: &AppConfig) -> Result<TrainingData> {
    let d = &cfg.data;
    let stories: Vec<Story> = read_jsonl(required(&d.stories, "stories")?)?;
    let train: Vec<RankedPair> = optional(&d.train_pairs)?;
    let val: Vec<RankedPair> = optional(&d.val_pairs)?;
    let test: Vec<RankedPair> = optional(&d.test_pairs)?;
    let negatives: Vec<NegativeStory> = optional(&d.negatives)?;
    let comments: Vec<CommentRecord> = optional(&d.annotations)?;
    if let Some(p) = &d.taxonomy {
        let t = AspectTaxonomy::load(p)?;
        if t.len() != cfg.model.num_aspects {
            return Err(Error::config(format!(
                "taxonomy has {} aspects, model.num_aspects is {}",
                t.len(),
                cfg.model.num_aspects
            )));
        }
    }
    if (cfg.tasks.aspects || cfg.tasks.comments) && d.annotations.is_none() {
        return Err(Error::config(
            "aspect and comment tasks need data.annotations",
        ));
    }
    if cfg.tasks.negatives && d.negatives.is_none() {
        return Err(Error::config("the negatives task needs data.negatives"));
    }
    let vocab = d
        .vocab
        .as_deref()
        .map(|p| Vocabulary::load(p, cfg.model.num_aspects))
        .transpose()?;
    TrainingData::build(
        DataSources {
            stories: &stories,
            train_pairs: &train,
            val_pairs: &val,
            held_out_pairs: &test,
            negatives: &negatives,
            comments: &comments,
        },
        &cfg.model,
        vocab,
    )
}

/// Trains per `cfg`, writing `train_log.csv`, `checkpoint_best.json`,
/// `checkpoint_last.json`, `vocab.txt` and `summary.json` into `out`.
/// With `resume`, continues that checkpoint and appends to the log.
pub fn cmd_train(cfg: &AppConfig, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    let mut run = cfg.run();
    run.data.output = None;
    let data = load_training_data(cfg)?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(run, data, Checkpoint::load(p)?)?,
        None => Trainer::new(run, data)?,
    };
    create_dir(out)?;
    trainer.data().vocab.save(&out.join("vocab.txt"))?;
    let log_path = out.join("train_log.csv");
    let file = if resume.is_some() {
        std::fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
    } else {
        std::fs::File::create(&log_path)
    }
    .map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    if resume.is_none() {
        writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    }
    let mut last: Option<LogRow> = None;
    while !trainer.is_done() {
        let row = trainer.step()?;
        writeln!(log, "{}", row.csv()).map_err(|e| Error::io(&log_path, e))?;
        last = Some(row);
        if trainer.maybe_validate()?.is_some() {
            if let Some(best) = trainer.best_checkpoint() {
                best.save(&out.join("checkpoint_best.json"))?;
            }
        }
        let step = trainer.step_count();
        if !trainer.is_done() && trainer.history().last().is_some_and(|v| v.step == step) {
            // Lets an interrupted run continue from the last validation.
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            trainer
                .checkpoint()
                .save(&out.join("checkpoint_last.json"))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let ckpt = trainer.checkpoint();
    ckpt.save(&out.join("checkpoint_last.json"))?;
    if trainer.best().is_none() {
        // Without validation data the last weights are the best we have.
        Checkpoint {
            optimizer: None,
            ..ckpt
        }
        .save(&out.join("checkpoint_best.json"))?;
    }
    let summary = TrainSummary {
        config_hash: trainer.config_hash().to_string(),
        seed: trainer.config().seed,
        steps: trainer.step_count(),
        best: trainer.best().cloned(),
        history: trainer.history().to_vec(),
        final_loss: last.map(|r| r.losses.total),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

// ------------------------------------------------------------------ score

/// A story to score; prepared `stories.jsonl` records qualify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoryInput {
    pub id: String,
    #[serde(default)]
    pub prompt_id: Option<String>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreLine {
    Scored(EvaluationOutput),
    Failed { story_id: String, error: String },
}

/// A loaded checkpoint ready for inference.
pub struct Scorer {
    pub model: StoryModel,
    pub vocab: Vocabulary,
    pub config_hash: String,
}

impl Scorer {
    pub fn load(checkpoint: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(checkpoint)?;
        Ok(Self {
            model: ckpt.model()?,
            vocab: ckpt.vocabulary()?,
            config_hash: ckpt.config_hash,
        })
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        self.vocab.tokenize(text, self.model.config().max_len)
    }

    pub fn preference(&self, text: &str) -> Result<f64> {
        Ok(self.model.score(&self.tokenize(text)?)?.p_s)
    }

    /// Head outputs plus comments for the `comments` most confident aspects.
    pub fn evaluate(
        &self,
        id: &str,
        text: &str,
        comments: usize,
        decode: &crate::text::DecodeConfig,
    ) -> Result<EvaluationOutput> {
        let ids = self.tokenize(text)?;
        let heads = self.model.score(&ids)?;
        let k = comments.min(heads.a_c.len());
        let mut generated = BTreeMap::new();
        for aspect in top_k(&heads.a_c, k) {
            let out = generate_comment(&self.model, &ids, aspect, decode)?;
            generated.insert(aspect, self.vocab.decode(&out));
        }
        Ok(EvaluationOutput {
            story_id: id.to_string(),
            p_s: heads.p_s,
            a_c: heads.a_c,
            a_r: heads.a_r,
            comments: generated,
        })
    }
}

/// Scores every story; failures become error lines and the run goes on.
pub fn cmd_score(
    checkpoint: &Path,
    stories: &Path,
    out: &Path,
    cfg: &AppConfig,
) -> Result<Vec<ScoreLine>> {
    let scorer = Scorer::load(checkpoint)?;
    let hash = section_hash(cfg.seed, &(&cfg.score, &scorer.config_hash));
    let inputs: Vec<StoryInput> = read_jsonl(stories)?;
    let lines: Vec<ScoreLine> = inputs
        .iter()
        .map(
            |s| match scorer.evaluate(&s.id, &s.text, cfg.score.comments, &cfg.score.decode) {
                Ok(o) => ScoreLine::Scored(o),
                Err(e) => ScoreLine::Failed {
                    story_id: s.id.clone(),
                    error: e.to_string(),
                },
            },
        )
        .collect();
    write_jsonl(out, &lines)?;
    let name = out
        .file_name()
        .map_or("scores.jsonl".into(), |n| n.to_string_lossy().into_owned());
    let manifest = out.with_file_name(format!("{name}.manifest.json"));
    write_json(
        &manifest,
        &Manifest::new("score", &hash, cfg.seed, &[&name]),
    )?;
    Ok(lines)
}

// ---------------------------------------------------------------- compare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptComparison {
    pub prompt_id: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub shared_prompts: usize,
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
    /// Share of shared prompts where A's story scores strictly higher.
    pub a_preference: f64,
    pub b_preference: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub recommended: String,
    pub prompts: Vec<PromptComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub model_config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: CompareSummary,
}

/// Compares per-prompt scores; a prompt with several stories uses their
/// mean.
pub fn compare_scores(
    a: &BTreeMap<String, Vec<f64>>,
    b: &BTreeMap<String, Vec<f64>>,
) -> Result<CompareSummary> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let prompts: Vec<PromptComparison> = a
        .iter()
        .filter_map(|(p, xs)| {
            b.get(p).map(|ys| PromptComparison {
                prompt_id: p.clone(),
                a: mean(xs),
                b: mean(ys),
            })
        })
        .collect();
    if prompts.is_empty() {
        return Err(Error::EmptyInput(
            "the two story sets share no prompt".into(),
        ));
    }
    let n = prompts.len();
    let a_wins = prompts.iter().filter(|c| c.a > c.b).count();
    let b_wins = prompts.iter().filter(|c| c.b > c.a).count();
    Ok(CompareSummary {
        shared_prompts: n,
        a_wins,
        b_wins,
        ties: n - a_wins - b_wins,
        a_preference: a_wins as f64 / n as f64,
        b_preference: b_wins as f64 / n as f64,
        mean_a: prompts.iter().map(|c| c.a).sum::<f64>() / n as f64,
        mean_b: prompts.iter().map(|c| c.b).sum::<f64>() / n as f64,
        recommended: "pairwise".into(),
        prompts,
    })
}

fn scores_by_prompt(scorer: &Scorer, path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let stories: Vec<StoryInput> = read_jsonl(path)?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in stories {
        let prompt = s.prompt_id.ok_or_else(|| {
            Error::data(format!(
                "{}: story {} has no prompt_id",
                path.display(),
                s.id
            ))
        })?;
        out.entry(prompt)
            .or_default()
            .push(scorer.preference(&s.text)?);
    }
    Ok(out)
}

pub fn cmd_compare(
    checkpoint: &Path,
    a: &Path,
    b: &Path,
    cfg: &AppConfig,
) -> Result<CompareReport> {
    let scorer = Scorer::load(checkpoint)?;
    let summary = compare_scores(
        &scores_by_prompt(&scorer, a)?,
        &scores_by_prompt(&scorer, b)?,
    )?;
    Ok(CompareReport {
        config_hash: section_hash(cfg.seed, &scorer.config_hash),
        model_config_hash: scorer.config_hash,
        seed: cfg.seed,
        summary,
    })
}

// --------------------------------------------------------------- evaluate

/// A story with its mean human rating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub id: String,
    pub text: String,
    pub human_score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EvaluateInputs {
    pub pairs: Option<PathBuf>,
    pub stories: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub model_config_hash: String,
    pub seed: u64,
    pub metrics: MetricReport,
    /// Metrics that could not be computed, with the missing input.
    pub skipped: Vec<String>,
}

/// Acc and Dis from `(p_high, p_low)` scores.
pub fn ranking_metrics(report: &mut MetricReport, scores: &[(f64, f64)]) -> Result<()> {
    report.acc = Some(pairwise_accuracy(scores)?);
    report.dis = Some(score_distance(scores)?);
    Ok(())
}

/// Spearman and Kendall of model against human scores, with permutation
/// p-values.
pub fn correlation_metrics(
    report: &mut MetricReport,
    human: &[f64],
    model: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<()> {
    report.rho = Some(correlation_pvalue(
        human,
        model,
        Statistic::Spearman,
        n_perm,
        seed,
    )?);
    report.tau = Some(correlation_pvalue(
        human,
        model,
        Statistic::Kendall,
        n_perm,
        seed,
    )?);
    Ok(())
}

fn evaluate_annotations(
    report: &mut MetricReport,
    scorer: &Scorer,
    stories: &HashMap<String, String>,
    records: &[CommentRecord],
    cfg: &AppConfig,
) -> Result<()> {
    let k_max = scorer.model.config().num_aspects;
    let mut selected: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut refs: BTreeMap<(&str, usize), Vec<&str>> = BTreeMap::new();
    for r in records {
        let Some(a) = r.aspect else { continue };
        if !stories.contains_key(&r.story_id) {
            continue;
        }
        let s = selected.entry(&r.story_id).or_default();
        if !s.contains(&a) {
            s.push(a);
        }
        refs.entry((&r.story_id, a)).or_default().push(&r.text);
    }
    if selected.is_empty() {
        return Err(Error::EmptyInput(
            "no annotation refers to a known story".into(),
        ));
    }
    let mut ids: HashMap<&str, Vec<usize>> = HashMap::new();
    for id in selected.keys() {
        ids.insert(id, scorer.tokenize(&stories[*id])?);
    }
    let mut recalls = [Vec::new(), Vec::new(), Vec::new()];
    for (id, sel) in &selected {
        let a_c = scorer.model.score(&ids[id])?.a_c;
        for (slot, k) in [1, 3, 5].into_iter().enumerate() {
            if k <= k_max {
                recalls[slot].push(recall_at_k(&a_c, sel, k)?);
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    report.recall_at_1 = mean(&recalls[0]);
    report.recall_at_3 = mean(&recalls[1]);
    report.recall_at_5 = mean(&recalls[2]);

    let max_comment = scorer.model.config().max_comment_len;
    let (mut bleu, mut rouge, mut examples) = (Vec::new(), Vec::new(), Vec::new());
    for ((id, aspect), texts) in &refs {
        let story = &ids[id];
        let hyp = scorer.vocab.decode(&generate_comment(
            &scorer.model,
            story,
            *aspect,
            &cfg.evaluate.decode,
        )?);
        let hyp = segment(&hyp);
        let references: Vec<Vec<String>> = texts.iter().map(|t| segment(t)).collect();
        bleu.push(if hyp.is_empty() {
            0.0
        } else {
            bleu_avg(&hyp, &references)?
        });
        rouge.push(
            references
                .iter()
                .map(|r| rouge_l(&hyp, r))
                .fold(0.0, f64::max),
        );
        for t in texts {
            if let Ok(c) = scorer.vocab.comment_ids(t, max_comment) {
                examples.push(CommentExample {
                    story_ids: story.clone(),
                    aspect: *aspect,
                    comment_ids: c,
                });
            }
        }
    }
    report.bleu_avg = mean(&bleu);
    report.rouge = mean(&rouge);
    if !examples.is_empty() {
        report.ppl = Some(corpus_perplexity(&scorer.model, &examples)?);
    }
    Ok(())
}

/// Runs every metric the given inputs allow; returns the report and its
/// table rendering.
pub fn cmd_evaluate(
    checkpoint: &Path,
    inputs: &EvaluateInputs,
    cfg: &AppConfig,
) -> Result<(EvaluationReport, String)> {
    let scorer = Scorer::load(checkpoint)?;
    let mut metrics = MetricReport::default();
    let mut skipped = Vec::new();
    let stories: Option<HashMap<String, String>> = inputs
        .stories
        .as_deref()
        .map(|p| -> Result<_> {
            let v: Vec<StoryInput> = read_jsonl(p)?;
            Ok(v.into_iter().map(|s| (s.id, s.text)).collect())
        })
        .transpose()?;

    match (&inputs.pairs, &stories) {
        (Some(p), Some(st)) => {
            let pairs: Vec<RankedPair> = read_jsonl(p)?;
            let mut cache: HashMap<&str, f64> = HashMap::new();
            let mut scores = Vec::with_capacity(pairs.len());
            for pair in &pairs {
                let mut get = |id: &str| -> Result<f64> {
                    if let Some(&v) = cache.get(id) {
                        return Ok(v);
                    }
                    let (key, text) = st
                        .get_key_value(id)
                        .ok_or_else(|| Error::data(format!("pair refers to unknown story {id}")))?;
                    let v = scorer.preference(text)?;
                    cache.insert(key, v);
                    Ok(v)
                };
                scores.push((get(&pair.high_id)?, get(&pair.low_id)?));
            }
            ranking_metrics(&mut metrics, &scores)?;
        }
        _ => skipped.push("acc/dis: needs --pairs and --stories".to_string()),
    }

    match &inputs.judgments {
        Some(p) => {
            let judgments: Vec<Judgment> = read_jsonl(p)?;
            let human: Vec<f64> = judgments.iter().map(|j| j.human_score).collect();
            let model: Vec<f64> = judgments
                .iter()
                .map(|j| scorer.preference(&j.text))
                .collect::<Result<_>>()?;
            correlation_metrics(
                &mut metrics,
                &human,
                &model,
                cfg.evaluate.permutations,
                cfg.seed,
            )?;
        }
        None => skipped.push("rho/tau: needs --judgments".to_string()),
    }

    match (&inputs.annotations, &stories) {
        (Some(p), Some(st)) => {
            let records: Vec<CommentRecord> = read_jsonl(p)?;
            evaluate_annotations(&mut metrics, &scorer, st, &records, cfg)?;
        }
        _ => skipped.push("recall/bleu/rouge/ppl: needs --annotations and --stories".to_string()),
    }

    let report = EvaluationReport {
        config_hash: section_hash(cfg.seed, &(&cfg.evaluate, &scorer.config_hash)),
        model_config_hash: scorer.config_hash.clone(),
        seed: cfg.seed,
        metrics,
        skipped,
    };
    let table = render_table(&[("model", &report.metrics)]);
    Ok((report, table))
}
