//! Every CLI stage in a scratch directory, then a rerun from a manifest.

use flowsage::cli::{rerun_manifest, run_command, Command, PipelineConfig};
use flowsage::synthgen::Preset;

fn main() -> flowsage::Result<()> {
    let dir = std::env::temp_dir().join(format!("flowsage-e2e-{}", std::process::id()));
    let mut config = PipelineConfig { seed: 1, ..Default::default() };
    config.paths.data = dir.join("data");
    config.paths.models = dir.join("models");
    config.paths.reports = dir.join("reports");
    config.data.preset = Preset::Small;
    config.encoder.hidden = 32;
    config.dgi.epochs = 30;
    config.gbdt.n_trees = 50;
    let config = config.resolved();

    for cmd in [Command::Synth, Command::Train, Command::Explain, Command::EvalXai, Command::Report] {
        let m = run_command(cmd, &config)?;
        println!("{:<9} {} artifacts", cmd.name(), m.artifacts.len());
    }
    let again = rerun_manifest(&Command::Train.manifest_path(&config))?;
    println!("train rerun reproduced {} artifacts bit-for-bit", again.artifacts.len());
    let report = std::fs::read_to_string(config.paths.reports.join("report.md")).map_err(|e| flowsage::Error::io("report.md", e))?;
    println!("\n{}", report.lines().take(20).collect::<Vec<_>>().join("\n"));
    println!("\noutputs kept in {}", dir.display());
    Ok(())
}
