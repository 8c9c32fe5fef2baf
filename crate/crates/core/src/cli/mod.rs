//! Command-line front end. Every subcommand reads one optional TOML file;
//! flags override the few values people change most often.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::*;
pub use config::{section_hash, write_json, write_jsonl, AppConfig, Manifest};

use crate::corpus::NegativeKind;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "storyer", version, about = "Preference-aware story evaluation")]
pub struct Cli {
    /// TOML configuration shared by all subcommands.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter stories, build ranked pairs and split them by prompt.
    PreparePairs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_words: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
        #[arg(long)]
        high_upvotes: Option<i64>,
        #[arg(long)]
        low_upvotes: Option<i64>,
    },
    /// Fit topic models on comments and write the topic list.
    ExtractAspects {
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label unlabeled comments with classifiers trained on crowd labels.
    AugmentComments {
        #[arg(long)]
        crowd: PathBuf,
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb stories into negative examples.
    MakeNegatives {
        #[arg(long)]
        stories: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of repeat, shuffle, substitute.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
    },
    /// Train the joint model.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compute every metric the given inputs allow.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        stories: Option<PathBuf>,
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score stories and generate comments.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two story sets written for the same prompts.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kinds(names: &[String]) -> Result<Vec<NegativeKind>> {
    let mut kinds = Vec::new();
    for n in names {
        let k: NegativeKind = n.trim().parse()?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::PreparePairs {
            input,
            out,
            min_words,
            max_words,
            high_upvotes,
            low_upvotes,
        } => {
            let p = &mut cfg.prepare;
            if let Some(v) = min_words {
                p.filter.min_words = v;
            }
            if let Some(v) = max_words {
                p.filter.max_words = v;
            }
            if let Some(v) = high_upvotes {
                p.pairs.high_min = v;
            }
            if let Some(v) = low_upvotes {
                p.pairs.low_max = v;
            }
            let report = cmd_prepare(&input, &out, &cfg)?;
            print_json(&report.splits)
        }
        Command::ExtractAspects { comments, out } => {
            let r = cmd_extract_aspects(&comments, &out, &cfg)?;
            print_json(&r.selection)
        }
        Command::AugmentComments {
            crowd,
            raw,
            taxonomy,
            out,
        } => {
            let r = cmd_augment(&crowd, &raw, taxonomy.as_deref(), &out, &cfg)?;
            print_json(&r.audit)
        }
        Command::MakeNegatives {
            stories,
            out,
            kinds,
        } => {
            if let Some(k) = kinds {
                cfg.negatives.kinds = parse_kinds(&k)?;
            }
            let r = cmd_make_negatives(&stories, &out, &cfg)?;
            print_json(&(&r.generated, r.skipped.len()))
        }
        Command::Train {
            out,
            steps,
            lr,
            resume,
        } => {
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if let Some(lr) = lr {
                cfg.train.optimizer.lr = lr;
            }
            let s = cmd_train(&cfg, &out, resume.as_deref())?;
            print_json(&(s.steps, s.best, s.final_loss))
        }
        Command::Evaluate {
            checkpoint,
            pairs,
            stories,
            judgments,
            annotations,
            out,
        } => {
            let inputs = EvaluateInputs {
                pairs,
                stories,
                judgments,
                annotations,
            };
            let (report, table) = cmd_evaluate(&checkpoint, &inputs, &cfg)?;
            print!("{table}");
            for s in &report.skipped {
                eprintln!("skipped {s}");
            }
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(())
        }
        Command::Score {
            checkpoint,
            stories,
            out,
        } => {
            let lines = cmd_score(&checkpoint, &stories, &out, &cfg)?;
            let failed = lines
                .iter()
                .filter(|l| matches!(l, ScoreLine::Failed { .. }))
                .count();
            eprintln!("scored {} stories, {failed} failed", lines.len() - failed);
            Ok(())
        }
        Command::Compare {
            checkpoint,
            a,
            b,
            out,
        } => {
            let report = cmd_compare(&checkpoint, &a, &b, &cfg)?;
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            print_json(&report)
        }
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
