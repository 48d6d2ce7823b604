//! Deep Graph Infomax over edges: edge-feature corruption, sigmoid-mean
//! readout, bilinear discriminator and the BCE training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::metrics::roc_auc;
use crate::egsage::{self, EncoderConfig, EncoderParams, ForwardOptions};
use crate::error::{Error, Result};
use crate::netgraph::{FlowGraph, SamplePlan};
use crate::numcore::{dot, log_sigmoid, sigmoid, AdamConfig, AdamState, DenseMatrix, TensorContainer};

pub const MODEL_KIND: &str = "flowsage.dgi";
pub const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgiConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DgiConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgiModel {
    pub encoder: EncoderParams,
    pub disc: DenseMatrix,
    pub config: DgiConfig,
    /// Loss before each update, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Derives independent sub-seeds from one seed.
pub(crate) fn subseed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffles edge feature rows across edges; topology is untouched.
pub fn corrupt(graph: &FlowGraph, seed: u64) -> Result<FlowGraph> {
    if graph.edge_count() == 0 {
        return Err(Error::InvalidInput("cannot corrupt an empty graph".into()));
    }
    if graph.edge_count() == 1 {
        log::warn!("corrupting a single-edge graph: the permutation is the identity");
    }
    let mut perm: Vec<usize> = (0..graph.edge_count()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    corrupt_with(graph, &perm)
}

/// Edge `i` receives the features of edge `perm[i]`.
pub fn corrupt_with(graph: &FlowGraph, perm: &[usize]) -> Result<FlowGraph> {
    let d = graph.feature_dim();
    if perm.len() != graph.edge_count() {
        return Err(Error::shape("corruption permutation", graph.edge_count(), perm.len()));
    }
    let src = graph.all_edge_features();
    let mut feats = Vec::with_capacity(src.len());
    for &j in perm {
        feats.extend_from_slice(&src[j * d..(j + 1) * d]);
    }
    graph.with_edge_features(feats)
}

pub fn readout(embeddings: &DenseMatrix) -> Result<Vec<f64>> {
    if embeddings.rows() == 0 {
        return Err(Error::InvalidInput("readout needs at least one embedding".into()));
    }
    let mut mean = vec![0.0; embeddings.cols()];
    for r in 0..embeddings.rows() {
        for (m, x) in mean.iter_mut().zip(embeddings.row(r)) {
            *m += x;
        }
    }
    let n = embeddings.rows() as f64;
    Ok(mean.into_iter().map(|m| sigmoid(m / n)).collect())
}

pub fn discriminate(disc: &DenseMatrix, z: &[f64], s: &[f64]) -> Result<f64> {
    if disc.rows() != z.len() || disc.cols() != s.len() {
        return Err(Error::shape(
            "discriminate",
            format!("{}x{}", disc.rows(), disc.cols()),
            format!("z {} s {}", z.len(), s.len()),
        ));
    }
    Ok(sigmoid(dot(z, &disc.matvec(s)?)))
}

pub fn dgi_loss(scores_real: &[f64], scores_corrupt: &[f64]) -> Result<f64> {
    if scores_real.is_empty() || scores_corrupt.is_empty() {
        return Err(Error::InvalidInput("dgi_loss needs real and corrupted scores".into()));
    }
    let c = |p: f64| p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let total: f64 = scores_real.iter().map(|&p| c(p).ln()).sum::<f64>() + scores_corrupt.iter().map(|&p| (1.0 - c(p)).ln()).sum::<f64>();
    Ok(-total / (scores_real.len() + scores_corrupt.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgiGrads {
    pub encoder: Vec<DenseMatrix>,
    pub disc: DenseMatrix,
}

/// Per-node sums over outgoing and incoming edges.
struct EndpointSums {
    out: Vec<f64>,
    inc: Vec<f64>,
}

fn endpoint_sums(graph: &FlowGraph, per_edge: &[f64]) -> EndpointSums {
    let mut s = EndpointSums {
        out: vec![0.0; graph.node_count()],
        inc: vec![0.0; graph.node_count()],
    };
    for (e, &g) in graph.edges().iter().zip(per_edge) {
        s.out[e.src.0] += g;
        s.inc[e.dst.0] += g;
    }
    s
}

/// Edge logits `z_e^T W s` computed at node level: with `w = W s`,
/// the logit is `z_src · w[..H] + z_dst · w[H..]`.
fn edge_logits(graph: &FlowGraph, states: &DenseMatrix, ws: &[f64]) -> Vec<f64> {
    let h = states.cols();
    let alpha: Vec<f64> = (0..graph.node_count()).map(|v| dot(states.row(v), &ws[..h])).collect();
    let beta: Vec<f64> = (0..graph.node_count()).map(|v| dot(states.row(v), &ws[h..])).collect();
    graph.edges().iter().map(|e| alpha[e.src.0] + beta[e.dst.0]).collect()
}

fn summary(graph: &FlowGraph, states: &DenseMatrix) -> Vec<f64> {
    let h = states.cols();
    let mut mean = vec![0.0; 2 * h];
    for e in graph.edges() {
        for (m, x) in mean[..h].iter_mut().zip(states.row(e.src.0)) {
            *m += x;
        }
        for (m, x) in mean[h..].iter_mut().zip(states.row(e.dst.0)) {
            *m += x;
        }
    }
    let p = graph.edge_count() as f64;
    mean.into_iter().map(|m| sigmoid(m / p)).collect()
}

/// Loss and exact gradients for one real/corrupted pair under a shared plan.
pub fn loss_and_grads(
    encoder: &EncoderParams,
    disc: &DenseMatrix,
    graph: &FlowGraph,
    corrupted: &FlowGraph,
    plan: &SamplePlan,
) -> Result<(f64, DgiGrads)> {
    let p = graph.edge_count();
    if p == 0 || corrupted.edge_count() != p {
        return Err(Error::InvalidInput("DGI needs matching non-empty real and corrupted graphs".into()));
    }
    let h = encoder.hidden();
    if disc.shape() != (2 * h, 2 * h) {
        return Err(Error::shape("discriminator", format!("{0}x{0}", 2 * h), format!("{:?}", disc.shape())));
    }
    let (zr, cache_r) = egsage::forward(graph, encoder, plan, ForwardOptions::default())?;
    let (zc, cache_c) = egsage::forward(corrupted, encoder, plan, ForwardOptions::default())?;
    let s = summary(graph, &zr);
    let ws = disc.matvec(&s)?;
    let a_real = edge_logits(graph, &zr, &ws);
    let a_fake = edge_logits(corrupted, &zc, &ws);

    let n = (2 * p) as f64;
    let loss = -(a_real.iter().map(|&a| log_sigmoid(a)).sum::<f64>() + a_fake.iter().map(|&a| log_sigmoid(-a)).sum::<f64>()) / n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("DGI loss is {loss}")));
    }
    let g_real: Vec<f64> = a_real.iter().map(|&a| (sigmoid(a) - 1.0) / n).collect();
    let g_fake: Vec<f64> = a_fake.iter().map(|&a| sigmoid(a) / n).collect();
    let gr = endpoint_sums(graph, &g_real);
    let gf = endpoint_sums(corrupted, &g_fake);

    // q = Σ_e g_e z_e over both edge sets.
    let mut q = vec![0.0; 2 * h];
    for v in 0..graph.node_count() {
        for j in 0..h {
            q[j] += gr.out[v] * zr.get(v, j) + gf.out[v] * zc.get(v, j);
            q[h + j] += gr.inc[v] * zr.get(v, j) + gf.inc[v] * zc.get(v, j);
        }
    }
    let mut d_disc = DenseMatrix::zeros(2 * h, 2 * h);
    d_disc.add_outer(1.0, &q, &s)?;
    let d_s = disc.matvec_t(&q)?;
    let d_mean: Vec<f64> = d_s.iter().zip(&s).map(|(g, s)| g * s * (1.0 - s)).collect();

    let counts = endpoint_sums(graph, &vec![1.0 / p as f64; p]);
    let mut dzr = DenseMatrix::zeros(graph.node_count(), h);
    let mut dzc = DenseMatrix::zeros(graph.node_count(), h);
    for v in 0..graph.node_count() {
        let r = dzr.row_mut(v);
        for j in 0..h {
            r[j] = gr.out[v] * ws[j] + gr.inc[v] * ws[h + j] + counts.out[v] * d_mean[j] + counts.inc[v] * d_mean[h + j];
        }
        let c = dzc.row_mut(v);
        for j in 0..h {
            c[j] = gf.out[v] * ws[j] + gf.inc[v] * ws[h + j];
        }
    }
    let mut enc = egsage::backward(graph, encoder, plan, &cache_r, &dzr, None)?.layers;
    let enc_c = egsage::backward(corrupted, encoder, plan, &cache_c, &dzc, None)?.layers;
    for (a, b) in enc.iter_mut().zip(&enc_c) {
        for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *x += y;
        }
    }
    Ok((loss, DgiGrads { encoder: enc, disc: d_disc }))
}

impl DgiModel {
    pub fn init(feature_dim: usize, encoder: &EncoderConfig, config: &DgiConfig) -> Result<Self> {
        let enc = EncoderParams::init(feature_dim, encoder, subseed(config.seed, 1))?;
        let side = 2 * encoder.hidden;
        let disc = DenseMatrix::glorot_uniform(side, side, &mut ChaCha8Rng::seed_from_u64(subseed(config.seed, 2)));
        Ok(Self {
            encoder: enc,
            disc,
            config: config.clone(),
            loss_history: Vec::new(),
        })
    }

    fn plan(&self, graph: &FlowGraph, epoch: u64) -> SamplePlan {
        SamplePlan::sampled(graph, self.encoder.sample_size(), subseed(self.config.seed, 3), epoch)
    }

    fn corruption_seed(&self, epoch: u64) -> u64 {
        subseed(subseed(self.config.seed, 4), epoch)
    }

    /// Loss at the current parameters for a given epoch's sampling and corruption.
    pub fn loss_at(&self, graph: &FlowGraph, epoch: u64) -> Result<f64> {
        let corrupted = corrupt(graph, self.corruption_seed(epoch))?;
        Ok(loss_and_grads(&self.encoder, &self.disc, graph, &corrupted, &self.plan(graph, epoch))?.0)
    }

    /// Discriminator scores for the real edges and for `rounds` fresh
    /// corruptions, using full neighbourhoods.
    pub fn held_out_scores(&self, graph: &FlowGraph, seed: u64, rounds: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let plan = SamplePlan::full(graph);
        let (zr, _) = egsage::forward(graph, &self.encoder, &plan, ForwardOptions::default())?;
        let s = summary(graph, &zr);
        let ws = self.disc.matvec(&s)?;
        let real = edge_logits(graph, &zr, &ws).into_iter().map(sigmoid).collect();
        let mut fake = Vec::new();
        for r in 0..rounds {
            let cg = corrupt(graph, subseed(seed, 1000 + r as u64))?;
            let (zc, _) = egsage::forward(&cg, &self.encoder, &plan, ForwardOptions::default())?;
            fake.extend(edge_logits(&cg, &zc, &ws).into_iter().map(sigmoid));
        }
        Ok((real, fake))
    }

    pub fn discriminator_auc(&self, graph: &FlowGraph, seed: u64, rounds: usize) -> Result<f64> {
        let (real, fake) = self.held_out_scores(graph, seed, rounds)?;
        let scores: Vec<f64> = real.iter().chain(&fake).copied().collect();
        let labels: Vec<bool> = real.iter().map(|_| true).chain(fake.iter().map(|_| false)).collect();
        roc_auc(&scores, &labels)
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new(MODEL_KIND)
            .with_meta("dgi.epochs", self.config.epochs as u64)
            .with_meta("dgi.learning_rate", self.config.learning_rate)
            .with_meta("dgi.seed", self.config.seed);
        self.encoder.write_into(&mut c);
        c.push("disc.W", self.disc.clone());
        c.push_vec("dgi.loss_history", self.loss_history.clone());
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let encoder = EncoderParams::read_from(c)?;
        let disc = c.tensor("disc.W")?.clone();
        let side = encoder.embedding_dim();
        if disc.shape() != (side, side) {
            return Err(Error::shape("disc.W", format!("{side}x{side}"), format!("{:?}", disc.shape())));
        }
        Ok(Self {
            encoder,
            disc,
            config: DgiConfig {
                epochs: c.meta_u64("dgi.epochs")? as usize,
                learning_rate: c.meta_f64("dgi.learning_rate")?,
                seed: c.meta_u64("dgi.seed")?,
            },
            loss_history: c.tensor("dgi.loss_history")?.as_slice().to_vec(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&TensorContainer::load(path, MODEL_KIND)?)
    }

    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<training log>", e);
        writeln!(w, "epoch,loss").map_err(io)?;
        for (i, l) in self.loss_history.iter().enumerate() {
            writeln!(w, "{i},{l}").map_err(io)?;
        }
        Ok(())
    }
}

pub fn train(graph: &FlowGraph, encoder: &EncoderConfig, config: &DgiConfig) -> Result<DgiModel> {
    let mut model = DgiModel::init(graph.feature_dim(), encoder, config)?;
    if config.epochs == 0 {
        return Ok(model);
    }
    if graph.edge_count() == 0 {
        return Err(Error::InvalidInput("cannot train DGI on an empty graph".into()));
    }
    let mut shapes: Vec<(String, usize)> = model
        .encoder
        .layers()
        .iter()
        .enumerate()
        .map(|(k, w)| (format!("encoder.W{}", k + 1), w.as_slice().len()))
        .collect();
    shapes.push(("disc.W".into(), model.disc.as_slice().len()));
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &shapes);
    for epoch in 0..config.epochs as u64 {
        let corrupted = corrupt(graph, model.corruption_seed(epoch))?;
        let plan = model.plan(graph, epoch);
        let (loss, grads) = loss_and_grads(&model.encoder, &model.disc, graph, &corrupted, &plan)
            .map_err(|e| Error::Numeric(format!("DGI epoch {epoch}: {e}")))?;
        model.loss_history.push(loss);
        log::debug!("dgi epoch {epoch} loss {loss:.6}");
        let DgiModel { encoder: enc, disc, .. } = &mut model;
        let mut params: Vec<&mut [f64]> = enc.layers_mut().iter_mut().map(|w| w.as_mut_slice()).collect();
        params.push(disc.as_mut_slice());
        let mut g: Vec<&[f64]> = grads.encoder.iter().map(|w| w.as_slice()).collect();
        g.push(grads.disc.as_slice());
        adam.step(&mut params, &g)?;
    }
    Ok(model)
}
