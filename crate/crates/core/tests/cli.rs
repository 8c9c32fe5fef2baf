mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{fixture, Workspace};
use storyer::cli::{
    cmd_compare, cmd_evaluate, cmd_make_negatives, cmd_prepare, cmd_score, cmd_train,
    compare_scores, correlation_metrics, main_with, ranking_metrics, AppConfig, EvaluateInputs,
    ScoreLine,
};
use storyer::corpus::synth::SynthConfig;
use storyer::corpus::NegativeKind;
use storyer::metrics::{render_table, MetricReport};
use storyer::train::{Checkpoint, TaskToggles, LOG_HEADER};

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn prepare_config() -> AppConfig {
    let text = read(&fixture("prepare/config.toml"));
    toml::from_str(&text).unwrap()
}

#[test]
fn prepare_reproduces_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_config();
    let report = cmd_prepare(&fixture("prepare/stories.jsonl"), dir.path(), &cfg).unwrap();
    // Hand count: s08 is too short, s12 too long, s11 inside the excluded
    // window, and the record on line 7 has no date.
    assert_eq!(report.parsed, 12);
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.rejected[0].line, 7);
    assert_eq!(report.kept, 9);
    assert_eq!(report.filtered.values().sum::<usize>(), 3);
    for name in ["train.jsonl", "val.jsonl", "test.jsonl", "stats.json"] {
        assert_eq!(
            read(&dir.path().join(name)),
            read(&fixture(&format!("prepare/golden/{name}"))),
            "{name}"
        );
    }

    let again = tempfile::tempdir().unwrap();
    cmd_prepare(&fixture("prepare/stories.jsonl"), again.path(), &cfg).unwrap();
    for name in [
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "stories.jsonl",
        "stats.json",
        "manifest.json",
    ] {
        assert_eq!(
            read(&dir.path().join(name)),
            read(&again.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn golden_pairs_follow_the_thresholds() {
    // wp1: s01 (120) vs s02 (-2), s03 (10) in neither class.
    // wp2: s04 (55), s05 (80) vs s06 (0, 800 words).
    // wp3: s07 (50, 200 words) vs s09 (-1); s08 is filtered.
    // wp4: both lows are filtered, so no pair.
    let mut all: Vec<(String, String)> = Vec::new();
    for split in ["train", "val", "test"] {
        for line in read(&fixture(&format!("prepare/golden/{split}.jsonl"))).lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            all.push((
                v["high_id"].as_str().unwrap().into(),
                v["low_id"].as_str().unwrap().into(),
            ));
        }
    }
    all.sort();
    let expected = [
        ("s01", "s02"),
        ("s04", "s06"),
        ("s05", "s06"),
        ("s07", "s09"),
    ];
    assert_eq!(
        all,
        expected
            .map(|(h, l)| (h.to_string(), l.to_string()))
            .to_vec()
    );
}

#[test]
fn no_low_voted_stories_is_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("prepare/no_lows.jsonl");
    let code = main_with([
        "storyer",
        "prepare-pairs",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn config_and_io_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"seven\"\n").unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let input = fixture("prepare/stories.jsonl");
    let code = main_with([
        "storyer",
        "--config",
        bad.to_str().unwrap(),
        "prepare-pairs",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 2);
    let missing = dir.path().join("missing.jsonl");
    let code = main_with([
        "storyer",
        "prepare-pairs",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 5);
    assert_eq!(main_with(["storyer", "no-such-command"]), 2);
    let code = main_with([
        "storyer",
        "make-negatives",
        "--stories",
        input.to_str().unwrap(),
        "--out",
        out,
        "--kinds",
        "jumble",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn substitute_negative_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AppConfig {
        seed: 11,
        ..Default::default()
    };
    cfg.negatives.kinds = vec![NegativeKind::Substitute];
    let report = cmd_make_negatives(&fixture("negatives/story.jsonl"), dir.path(), &cfg).unwrap();
    assert_eq!(report.generated["substitute"], 1);
    let line = read(&dir.path().join("negatives.jsonl"));
    let neg: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(
        format!("{}\n", neg["text"].as_str().unwrap()),
        read(&fixture("negatives/substitute_seed11.txt"))
    );
}

#[test]
fn short_stories_are_listed_as_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.jsonl");
    std::fs::write(&input, "{\"id\":\"x\",\"text\":\"One. Two.\"}\n").unwrap();
    let report =
        cmd_make_negatives(&input, &dir.path().join("out"), &AppConfig::default()).unwrap();
    assert!(report.generated.is_empty());
    assert_eq!(report.skipped.len(), 3);
    assert!(report.skipped.iter().all(|s| s.story_id == "x"));
}

fn workspace(dir: &Path, steps: u64) -> Workspace {
    let synth = SynthConfig {
        prompts: 12,
        ..Default::default()
    };
    Workspace::new(dir, &synth, 5).tiny(steps)
}

#[test]
fn train_then_score_evaluate_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = workspace(dir.path(), 12);
    ws.config.train.eval_every = Some(4);
    ws.config.evaluate.permutations = 50;
    let out = ws.path("run");
    let summary = cmd_train(&ws.config, &out, None).unwrap();
    assert_eq!(summary.steps, 12);
    assert_eq!(summary.history.len(), 3);
    let log = read(&out.join("train_log.csv"));
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], LOG_HEADER);
    assert_eq!(rows.len(), 13);
    let best = Checkpoint::load(&out.join("checkpoint_best.json")).unwrap();
    assert_eq!(best.step, summary.best.as_ref().unwrap().step);
    assert!(best.optimizer.is_none());
    let ckpt = out.join("checkpoint_last.json");

    // Score: full vectors, comments for the top aspects, per-record errors.
    let scores = ws.path("scores.jsonl");
    let lines = cmd_score(&ckpt, &fixture("score/stories.jsonl"), &scores, &ws.config).unwrap();
    assert_eq!(lines.len(), 2);
    match &lines[0] {
        ScoreLine::Scored(o) => {
            assert_eq!(o.a_c.len(), 10);
            assert_eq!(o.a_r.len(), 10);
            assert!((o.a_c.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            assert_eq!(o.comments.len(), 3);
            assert!(o.p_s > 0.0 && o.p_s < 1.0);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(&lines[1], ScoreLine::Failed { story_id, .. } if story_id == "f2"));
    let again = ws.path("scores_again.jsonl");
    cmd_score(&ckpt, &fixture("score/stories.jsonl"), &again, &ws.config).unwrap();
    assert_eq!(read(&scores), read(&again));
    assert!(ws.path("scores.jsonl.manifest.json").exists());

    // Evaluate with ranking inputs only.
    let inputs = EvaluateInputs {
        pairs: ws.config.data.test_pairs.clone(),
        stories: ws.config.data.stories.clone(),
        ..Default::default()
    };
    let (report, table) = cmd_evaluate(&ckpt, &inputs, &ws.config).unwrap();
    let m = &report.metrics;
    assert!(m.acc.is_some() && m.dis.is_some());
    assert!(m.rho.is_none() && m.recall_at_1.is_none() && m.ppl.is_none());
    assert_eq!(report.skipped.len(), 2);
    assert!(table.starts_with("Model    Acc"));

    // Annotations fill the aspect and comment columns.
    let inputs = EvaluateInputs {
        annotations: ws.config.data.annotations.clone(),
        stories: ws.config.data.stories.clone(),
        ..Default::default()
    };
    let (report, _) = cmd_evaluate(&ckpt, &inputs, &ws.config).unwrap();
    let m = &report.metrics;
    for v in [
        m.recall_at_1,
        m.recall_at_3,
        m.recall_at_5,
        m.bleu_avg,
        m.rouge,
    ] {
        let v = v.unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(m.ppl.unwrap() > 1.0);
    assert_eq!(report.model_config_hash, summary.config_hash);

    // Comparing a story set with itself gives only ties.
    let stories = ws.config.data.stories.clone().unwrap();
    let report = cmd_compare(&ckpt, &stories, &stories, &ws.config).unwrap();
    let s = &report.summary;
    assert_eq!(s.shared_prompts, 12);
    assert_eq!((s.a_wins, s.b_wins, s.ties), (0, 0, 12));
    assert_eq!(s.a_preference, 0.0);
    assert_eq!(s.recommended, "pairwise");
}

#[test]
fn preference_only_training_logs_zero_aspect_losses() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = workspace(dir.path(), 6);
    ws.config.tasks = TaskToggles::preference_only();
    cmd_train(&ws.config, &ws.path("run"), None).unwrap();
    let log = read(&ws.path("run/train_log.csv"));
    for row in log.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[3..6], ["0", "0", "0"], "{row}");
    }
}

#[test]
fn same_seed_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path(), 8);
    cmd_train(&ws.config, &ws.path("a"), None).unwrap();
    cmd_train(&ws.config, &ws.path("b"), None).unwrap();
    assert_eq!(
        read(&ws.path("a/train_log.csv")),
        read(&ws.path("b/train_log.csv"))
    );
    let mut other = ws.config.clone();
    other.seed += 1;
    cmd_train(&other, &ws.path("c"), None).unwrap();
    assert_ne!(
        read(&ws.path("a/train_log.csv")),
        read(&ws.path("c/train_log.csv"))
    );
}

#[test]
fn resume_refuses_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path(), 4);
    let config = ws.path("config.toml");
    std::fs::write(&config, toml::to_string(&ws.config).unwrap()).unwrap();
    let out = ws.path("run");
    let args = |extra: &[&str]| {
        let mut v = vec![
            "storyer",
            "--config",
            config.to_str().unwrap(),
            "train",
            "--out",
            out.to_str().unwrap(),
        ];
        v.extend_from_slice(extra);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(main_with(args(&[])), 0);
    let before = read(&out.join("train_log.csv"));
    let ckpt = out.join("checkpoint_last.json");
    let ckpt = ckpt.to_str().unwrap();
    // The finished run has nothing left to do.
    assert_eq!(main_with(args(&["--resume", ckpt])), 0);
    assert_eq!(read(&out.join("train_log.csv")), before);
    assert_eq!(main_with(args(&["--resume", ckpt, "--lr", "0.5"])), 2);
}

#[test]
fn compare_matches_hand_computation() {
    let a: BTreeMap<String, Vec<f64>> = [
        ("p1", vec![0.9]),
        ("p2", vec![0.25, 0.75]),
        ("p3", vec![0.5]),
        ("p4", vec![0.7]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let b: BTreeMap<String, Vec<f64>> = [
        ("p1", vec![0.6]),
        ("p2", vec![0.625]),
        ("p3", vec![0.5]),
        ("p5", vec![0.1]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let s = compare_scores(&a, &b).unwrap();
    assert_eq!(s.shared_prompts, 3);
    assert_eq!((s.a_wins, s.b_wins, s.ties), (1, 1, 1));
    assert!((s.a_preference - 1.0 / 3.0).abs() < 1e-12);
    assert!((s.b_preference - 1.0 / 3.0).abs() < 1e-12);
    assert!((s.mean_a - 1.9 / 3.0).abs() < 1e-12);
    assert!((s.mean_b - 1.725 / 3.0).abs() < 1e-12);
    assert_eq!(s.prompts[1].a, 0.5);

    let higher: BTreeMap<String, Vec<f64>> = a
        .iter()
        .map(|(k, v)| (k.clone(), vec![v[0] + 1.0]))
        .collect();
    assert_eq!(compare_scores(&higher, &a).unwrap().a_preference, 1.0);

    let disjoint: BTreeMap<String, Vec<f64>> = [("zz".to_string(), vec![0.1])].into();
    assert_eq!(compare_scores(&a, &disjoint).unwrap_err().exit_code(), 3);
}

#[test]
fn evaluation_metrics_match_hand_computation() {
    let mut r = MetricReport::default();
    // Three of four pairs ordered; gaps 0.5, -0.1, 0.8, 0.05.
    ranking_metrics(&mut r, &[(0.8, 0.3), (0.6, 0.7), (0.9, 0.1), (0.55, 0.5)]).unwrap();
    assert_eq!(r.acc, Some(0.75));
    assert!((r.dis.unwrap() - 0.3125).abs() < 1e-12);
    // Model ranks 1 3 2 5 4 against 1..5: sum d^2 = 4, so rho = 1 - 24/120;
    // two discordant pairs of ten, so tau = 6/10.
    let human = [1.0, 2.0, 3.0, 4.0, 5.0];
    let model = [0.1, 0.3, 0.2, 0.5, 0.4];
    correlation_metrics(&mut r, &human, &model, 2000, 3).unwrap();
    let (rho, tau) = (r.rho.unwrap(), r.tau.unwrap());
    assert!((rho.value - 0.8).abs() < 1e-12);
    assert!((tau.value - 0.6).abs() < 1e-12);
    // With five items no correlation this weak is significant at 0.01.
    assert!(!rho.significant && !tau.significant);
    let table = render_table(&[("fixture", &r)]);
    assert_eq!(
        table,
        "Model      Acc    Dis    rho    tau\n-----------------------------------\nfixture  75.00  0.313  0.800  0.600\n"
    );
}

fn assert_close(actual: &serde_json::Value, golden: &serde_json::Value, path: &str) {
    use serde_json::Value;
    match (actual, golden) {
        (Value::Number(a), Value::Number(g)) => {
            let (a, g) = (a.as_f64().unwrap(), g.as_f64().unwrap());
            assert!((a - g).abs() < 1e-6, "{path}: {a} vs {g}");
        }
        (Value::Array(a), Value::Array(g)) => {
            assert_eq!(a.len(), g.len(), "{path}");
            for (i, (x, y)) in a.iter().zip(g).enumerate() {
                assert_close(x, y, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(a), Value::Object(g)) => {
            assert_eq!(
                a.keys().collect::<Vec<_>>(),
                g.keys().collect::<Vec<_>>(),
                "{path}"
            );
            for (k, x) in a {
                assert_close(x, &g[k], &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(actual, golden, "{path}"),
    }
}

/// Set `STORYER_BLESS=1` to rewrite the golden file after an intended
/// change in the model or its initialization.
#[test]
fn score_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path(), 10);
    cmd_train(&ws.config, &ws.path("run"), None).unwrap();
    let out = ws.path("scores.jsonl");
    cmd_score(
        &ws.path("run/checkpoint_last.json"),
        &fixture("score/stories.jsonl"),
        &out,
        &ws.config,
    )
    .unwrap();
    let golden = fixture("score/golden.jsonl");
    if std::env::var_os("STORYER_BLESS").is_some() {
        std::fs::copy(&out, &golden).unwrap();
    }
    let actual: Vec<serde_json::Value> = read(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let expected: Vec<serde_json::Value> = read(&golden)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_close(
        &serde_json::Value::Array(actual),
        &serde_json::Value::Array(expected),
        "scores",
    );
}
