//! Correlation with permutation p-values, ranking metrics and the
//! side-by-side report table.

use storyer::metrics::{
    correlation_pvalue, pairwise_accuracy, render_table, rouge_l, score_distance, MetricReport,
    Statistic,
};

fn main() -> storyer::Result<()> {
    let human = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 5.0, 6.0];
    let model = [0.1, 0.3, 0.2, 0.35, 0.6, 0.55, 0.8, 0.9];
    let pairs = [(0.8, 0.3), (0.6, 0.65), (0.9, 0.1)];

    let report = MetricReport {
        acc: Some(pairwise_accuracy(&pairs)?),
        dis: Some(score_distance(&pairs)?),
        rho: Some(correlation_pvalue(
            &human,
            &model,
            Statistic::Spearman,
            2000,
            0,
        )?),
        tau: Some(correlation_pvalue(
            &human,
            &model,
            Statistic::Kendall,
            2000,
            0,
        )?),
        ..Default::default()
    };
    print!("{}", render_table(&[("example", &report)]));

    let hyp = ["the", "ending", "was", "great"];
    let reference = ["the", "ending", "felt", "great"];
    println!("ROUGE-L {:.3}", rouge_l(&hyp, &reference));
    Ok(())
}
