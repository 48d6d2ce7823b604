//! Fidelity+ of both explainers and a random control across sparsity levels,
//! plus the class make-up of their important sets.
//!
//!     cargo run --release --example fidelity_sweep -- [seed]

use flowsage::cli::pipeline::{evaluate_xai, fit_detector_surrogate, train_detector, train_explainer, GNN_NAME, PG_NAME, RANDOM_NAME};
use flowsage::cli::PipelineConfig;
use flowsage::detect::Metric;
use flowsage::synthgen::{generate, Preset};

fn main() -> flowsage::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = PipelineConfig { seed, ..Default::default() }.resolved();
    let (flows, _) = generate(&Preset::Benchmark.config(seed))?;
    let det = train_detector(&flows, &config)?;
    let surrogate = fit_detector_surrogate(&det, &config)?;
    let pg = train_explainer(&det, &surrogate, &config)?;
    let run = evaluate_xai(&det, &surrogate, &pg, &config)?;

    let levels = &config.xai.levels;
    println!("{:>10} {:>13} {}", "metric", "explainer", levels.iter().map(|l| format!("{l:>8}")).collect::<String>());
    for metric in Metric::ALL {
        for (table, name) in [(&run.table, PG_NAME), (&run.table, GNN_NAME), (&run.control, RANDOM_NAME)] {
            let cells: String = levels.iter().map(|&l| format!("{:>+8.4}", table.value(name, l, metric).unwrap_or(f64::NAN))).collect();
            println!("{:>10} {name:>13} {cells}", metric.name());
        }
        println!("{:>10} PG >= GNN at {}/{} levels", "", run.table.levels_at_least(PG_NAME, GNN_NAME, metric), levels.len());
    }
    for (name, d) in &run.distributions {
        let shares: Vec<String> = d.shares.iter().map(|(c, s)| format!("{c} {s:.3}")).collect();
        println!("{:>13} on {:<13} targets: {}", name, d.target_class, shares.join(", "));
    }
    Ok(())
}
