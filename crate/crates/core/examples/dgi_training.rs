//! Self-supervised encoder training and a held-out discriminator check.

use flowsage::dgi::{self, DgiConfig};
use flowsage::egsage::EncoderConfig;
use flowsage::flowdata::{apply_scaler, fit_scaler};
use flowsage::netgraph::build_graph;
use flowsage::synthgen::{generate, Preset};

fn main() -> flowsage::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let (flows, _) = generate(&Preset::Small.config(3))?;
    let g = build_graph(&apply_scaler(&fit_scaler(&flows)?, &flows)?)?;
    let enc = EncoderConfig { hidden: 64, ..Default::default() };
    let model = dgi::train(&g, &enc, &DgiConfig { epochs, seed: 3, ..Default::default() })?;
    for (epoch, loss) in model.loss_history.iter().enumerate().step_by((epochs / 10).max(1)) {
        println!("epoch {epoch:>4}  loss {loss:.4}");
    }
    println!("real-vs-corrupted AUC on fresh corruptions: {:.4}", model.discriminator_auc(&g, 77, 5)?);
    let mut log = Vec::new();
    model.write_log(&mut log)?;
    println!("training log has {} lines", String::from_utf8_lossy(&log).lines().count());
    Ok(())
}
