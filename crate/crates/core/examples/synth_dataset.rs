//! Generate a labelled synthetic scenario and write it as CSV.
//!
//!     cargo run --example synth_dataset -- [preset] [seed] [out.csv]

use std::fs::File;
use std::io::BufWriter;

use flowsage::synthgen::{generate_with_meta, Preset};

fn main() -> flowsage::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset: Preset = args.first().map(|s| s.parse()).transpose()?.unwrap_or(Preset::Small);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate_with_meta(&preset.config(seed))?;

    let mut counts = std::collections::BTreeMap::new();
    for r in &data.dataset.records {
        *counts.entry(r.label.as_ref().map_or("unlabelled", |l| l.as_str()).to_string()).or_insert(0usize) += 1;
    }
    println!("{} flows, {:.2}% attacks, {} features", data.dataset.len(), 100.0 * data.dataset.attack_fraction(), data.dataset.feature_dim());
    for (label, n) in &counts {
        println!("  {label:<14} {n}");
    }
    for (name, inst) in &data.ground_truth.instances {
        println!("  {name}: {:?} hub {} over {} hosts, {} flows", inst.kind, inst.hub, inst.hosts.len(), inst.flow_ids.len());
    }

    if let Some(path) = args.get(2) {
        data.write_csv(BufWriter::new(File::create(path).map_err(|e| flowsage::Error::io(path, e))?))?;
        println!("wrote {path}");
    }
    Ok(())
}
