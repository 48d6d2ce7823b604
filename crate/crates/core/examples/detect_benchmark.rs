//! Full detector on the 20k-flow benchmark against the unsupervised baselines.
//!
//!     cargo run --release --example detect_benchmark -- [seed]

use std::time::Instant;

use flowsage::cli::pipeline::{evaluate_baselines, train_detector};
use flowsage::cli::PipelineConfig;
use flowsage::synthgen::{generate, Preset};

fn main() -> flowsage::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = Instant::now();
    let (flows, _) = generate(&Preset::Benchmark.config(seed))?;
    let config = PipelineConfig { seed, ..Default::default() }.resolved();
    let det = train_detector(&flows, &config)?;
    let m = det.test_metrics;
    println!("embeddings + boosted trees ({:.0}s)", start.elapsed().as_secs_f64());
    println!("  f1-macro {:.4}  accuracy {:.4}  dr {:.4}", m.f1_macro, m.accuracy, m.detection_rate.unwrap_or(f64::NAN));
    println!("  confusion {:?}", m.confusion);
    for b in evaluate_baselines(&det, seed)? {
        println!(
            "{:<16} f1-macro {:.4}  dr {:.4}  (best possible cut {:.4})",
            b.name,
            b.metrics.f1_macro,
            b.metrics.detection_rate.unwrap_or(f64::NAN),
            b.best_f1
        );
    }
    Ok(())
}
