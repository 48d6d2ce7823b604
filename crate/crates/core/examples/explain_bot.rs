//! Explain one detected Bot flow with both explainers.

use flowsage::cli::pipeline::{class_targets, fit_detector_surrogate, train_detector, train_explainer};
use flowsage::cli::PipelineConfig;
use flowsage::explain::{EdgeExplainer, ExplainContext, GnnExplainer};
use flowsage::synthgen::{generate, Preset};

fn main() -> flowsage::Result<()> {
    let mut config = PipelineConfig { seed: 5, ..Default::default() };
    config.data.preset = Preset::BotInfiltration;
    config.encoder.hidden = 64;
    config.gbdt.n_trees = 100;
    let config = config.resolved();
    let (flows, _) = generate(&config.data.preset.config(config.seed))?;
    let det = train_detector(&flows, &config)?;
    let surrogate = fit_detector_surrogate(&det, &config)?;
    let pg = train_explainer(&det, &surrogate, &config)?;
    let gnn = GnnExplainer::new(config.gnnexplainer.clone());

    let g = &det.data.test_graph;
    let ctx = ExplainContext::new(g, &det.dgi.encoder, &surrogate)?;
    let Some(&target) = class_targets(&ctx, "Bot", 1).first() else {
        println!("no correctly classified Bot flow in the test split");
        return Ok(());
    };
    let flow = g.edge(target).flow_id;
    for ex in [&pg as &dyn EdgeExplainer, &gnn] {
        let mask = ex.explain(&ctx, flow, config.explain.sparsity)?;
        println!("{} on flow {flow}: {} of {} edges important", ex.name(), mask.important.len(), mask.candidate_count());
        for row in mask.ranked(g).iter().take(8) {
            println!("  #{:<2} flow {:>6} {:<13} weight {:.3}{}", row.rank, row.flow_id, row.label, row.weight, if row.important { " *" } else { "" });
        }
    }
    Ok(())
}
