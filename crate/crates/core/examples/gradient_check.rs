//! Builds a tiny double-precision model, takes the ranking loss of one
//! story pair through the tape, and checks the backward pass against
//! central differences.

use storyer::neural::{gradcheck, ParamStore, Tape, Var};
use storyer::objectives::graph;
use storyer::rng;
use storyer::text::{ModelConfig, StoryModel};

fn ranking_loss<'p>(
    model: &StoryModel<f64>,
    store: &'p ParamStore<f64>,
    high: &[usize],
    low: &[usize],
) -> storyer::Result<(Tape<'p, f64>, Var)> {
    let mut tape = Tape::new(store);
    let h = model.forward_encoder(&mut tape, high, &mut None)?.pooled;
    let l = model.forward_encoder(&mut tape, low, &mut None)?.pooled;
    let ph = model.forward_preference(&mut tape, h);
    let pl = model.forward_preference(&mut tape, l);
    let root = graph::margin_rank_loss(&mut tape, ph, pl, 0.3);
    Ok((tape, root))
}

fn main() -> storyer::Result<()> {
    let cfg = ModelConfig::tiny(40, 4);
    let model = StoryModel::<f64>::new(cfg, 1)?;
    let high = [0, 20, 21, 22, 23, 24, 25];
    let low = [0, 30, 31, 32, 33];

    let (tape, root) = ranking_loss(&model, model.params(), &high, &low)?;
    println!("ranking loss {:.6}", tape.item(root));

    let mut store = model.params().clone();
    let report = gradcheck::check(
        &mut store,
        |s| {
            let (t, r) = ranking_loss(&model, s, &high, &low)?;
            Ok(t.item(r))
        },
        |s| {
            let (t, r) = ranking_loss(&model, s, &high, &low)?;
            t.backward(r)
        },
        1e-5,
        3,
        &mut rng::stream(0, "example"),
    )?;
    let worst = report.worst(1e-6).expect("probes");
    println!(
        "{} probes, max relative error {:.2e} ({}[{}])",
        report.probes.len(),
        report.max_rel_error(1e-6),
        worst.param,
        worst.index
    );
    Ok(())
}
