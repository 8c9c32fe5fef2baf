//! Aggregated evaluation results and their plain-text table form.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::correlation::Correlation;

/// Every field is optional; an evaluation fills only what its inputs allow.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Correlation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Correlation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu_avg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
}

type Column = (&'static str, fn(&MetricReport) -> Option<String>);

fn pct(v: Option<f64>) -> Option<String> {
    v.map(|x| format!("{:.2}", 100.0 * x))
}

fn corr(c: Option<Correlation>) -> Option<String> {
    c.map(|c| format!("{:.3}{}", c.value, if c.significant { "*" } else { "" }))
}

const COLUMNS: [Column; 10] = [
    ("Acc", |r| pct(r.acc)),
    ("Dis", |r| r.dis.map(|v| format!("{v:.3}"))),
    ("rho", |r| corr(r.rho)),
    ("tau", |r| corr(r.tau)),
    ("R@1", |r| pct(r.recall_at_1)),
    ("R@3", |r| pct(r.recall_at_3)),
    ("R@5", |r| pct(r.recall_at_5)),
    ("B", |r| pct(r.bleu_avg)),
    ("R", |r| pct(r.rouge)),
    ("PPL", |r| r.ppl.map(|v| format!("{v:.2}"))),
];

/// Renders one row per named report, with only the columns some report
/// fills. Accuracies, recalls, BLEU and ROUGE are percentages; `*` marks a
/// correlation with p <= 0.01.
pub fn render_table(rows: &[(&str, &MetricReport)]) -> String {
    let cols: Vec<&Column> = COLUMNS
        .iter()
        .filter(|(_, f)| rows.iter().any(|(_, r)| f(r).is_some()))
        .collect();
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
        .chain(cols.iter().map(|(h, _)| h.to_string()))
        .collect()];
    for (name, r) in rows {
        cells.push(
            std::iter::once(name.to_string())
                .chain(cols.iter().map(|(_, f)| f(r).unwrap_or_else(|| "-".into())))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..=cols.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c == 0 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
        if i == 0 {
            writeln!(
                out,
                "{}",
                "-".repeat(widths.iter().sum::<usize>() + 2 * cols.len())
            )
            .expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_only_table() {
        let r = MetricReport {
            acc: Some(0.7393),
            dis: Some(0.228),
            ..Default::default()
        };
        let t = render_table(&[("ours", &r)]);
        assert_eq!(
            t,
            "Model    Acc    Dis\n-------------------\nours   73.93  0.228\n"
        );
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"acc":0.7393,"dis":0.228}"#);
    }

    #[test]
    fn stars_mark_significance() {
        let r = MetricReport {
            rho: Some(Correlation {
                value: 0.583,
                p_value: 0.001,
                significant: true,
            }),
            tau: Some(Correlation {
                value: 0.2,
                p_value: 0.3,
                significant: false,
            }),
            ..Default::default()
        };
        let t = render_table(&[("m", &r)]);
        assert!(t.contains("0.583*"));
        assert!(t.contains("0.200") && !t.contains("0.200*"));
    }
}
