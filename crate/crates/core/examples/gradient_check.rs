//! Central-difference check of the encoder and DGI gradients on a toy graph.

use flowsage::dgi::{self, corrupt, DgiConfig, DgiModel};
use flowsage::egsage::EncoderConfig;
use flowsage::flowdata::{apply_scaler, fit_scaler, FlowDataset};
use flowsage::netgraph::{build_graph, SamplePlan};
use flowsage::numcore::{max_relative_error, DenseMatrix};
use flowsage::synthgen::{generate, Preset};

fn main() -> flowsage::Result<()> {
    let (flows, _) = generate(&Preset::Small.config(0))?;
    let few = FlowDataset::new(flows.schema.clone(), flows.records[..30].to_vec());
    let g = build_graph(&apply_scaler(&fit_scaler(&few)?, &few)?)?;
    let enc = EncoderConfig { hidden: 3, depth: 1, sample_size: 3 };
    for seed in 0..5 {
        let m = DgiModel::init(g.feature_dim(), &enc, &DgiConfig { seed, ..Default::default() })?;
        let c = corrupt(&g, seed + 1)?;
        let plan = SamplePlan::sampled(&g, 3, seed, 0);
        let (loss, grads) = dgi::loss_and_grads(&m.encoder, &m.disc, &g, &c, &plan)?;
        let mut point = m.encoder.flatten();
        let n_enc = point.len();
        point.extend_from_slice(m.disc.as_slice());
        let mut analytic: Vec<f64> = grads.encoder.iter().flat_map(|l| l.as_slice().to_vec()).collect();
        analytic.extend_from_slice(grads.disc.as_slice());
        let side = m.disc.rows();
        let err = max_relative_error(&point, &analytic, |x| {
            let e = m.encoder.with_flat(&x[..n_enc]).expect("same shape");
            let d = DenseMatrix::from_vec(side, side, x[n_enc..].to_vec()).expect("same shape");
            dgi::loss_and_grads(&e, &d, &g, &c, &plan).expect("valid inputs").0
        });
        println!("seed {seed}: loss {loss:.5}, {} parameters, max relative error {err:.2e}", point.len());
    }
    Ok(())
}
