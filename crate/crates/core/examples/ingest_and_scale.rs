//! Round-trip flows through CSV, split them and fit the train-only scaler.

use flowsage::flowdata::{apply_scaler, fit_scaler, parse_csv_reader, split};
use flowsage::synthgen::{generate_with_meta, Preset};

fn main() -> flowsage::Result<()> {
    let config = Preset::Small.config(1);
    let synthetic = generate_with_meta(&config)?;
    let mut csv = Vec::new();
    synthetic.write_csv(&mut csv)?;
    println!("csv header: {}", String::from_utf8_lossy(&csv).lines().next().unwrap_or(""));

    // The generator's schema tells the parser which columns are features.
    let flows = parse_csv_reader(csv.as_slice(), &config.schema())?;
    assert_eq!(flows.records, synthetic.dataset.records);

    let (train, test) = split(&flows, 0.7, 1)?;
    println!("train {} / test {} (attack share {:.3} / {:.3})", train.len(), test.len(), train.attack_fraction(), test.attack_fraction());
    let scaler = fit_scaler(&train)?;
    let scaled = apply_scaler(&scaler, &train)?;
    let names = flows.schema.feature_names();
    for (k, name) in names.iter().enumerate().take(4) {
        let col: Vec<f64> = scaled.records.iter().map(|r| r.features[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        println!("  {name:<28} raw mean {:>12.2}  scaled mean {mean:+.3}", scaler.means[k]);
    }
    println!("scaler as stored:\n{}", scaler.to_toml().lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}
