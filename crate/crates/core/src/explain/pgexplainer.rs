//! Shared mask network: one MLP predicts every edge's importance from the
//! candidate and target embeddings, trained with a concrete relaxation.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dgi::subseed;
use crate::egsage::EncoderParams;
use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, FlowGraph};
use crate::numcore::{axpy, sigmoid, AdamConfig, AdamState, DenseMatrix, TensorContainer};

use super::objective::{regularizer, TargetProblem};
use super::surrogate::SurrogateHead;
use super::{EdgeExplainer, ExplainContext};

pub const MODEL_KIND: &str = "flowsage.pgexplainer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub size_coef: f64,
    pub entropy_coef: f64,
    /// Training instances, balanced by predicted class.
    pub train_targets: usize,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 30,
            learning_rate: 0.001,
            tau_start: 5.0,
            tau_end: 1.0,
            size_coef: 0.01,
            entropy_coef: 0.1,
            train_targets: 256,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    /// Geometric schedule from `tau_start` to `tau_end`.
    pub fn temperature(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.tau_end;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(t)
    }
}

/// `ω = w2 · relu(P0 s_a + P1 s_b + P2 s_u + P3 s_v + b1) + b2` for candidate
/// edge a→b and target u→v; the four blocks of the first layer act on the
/// four node states of the concatenated input.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerNet {
    pub config: ExplainerConfig,
    pub blocks: Vec<DenseMatrix>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub loss_history: Vec<f64>,
}

/// Forward record for one target.
#[derive(Debug, Clone)]
pub struct NetCache {
    slots: HashMap<usize, usize>,
    nodes: Vec<usize>,
    target_nodes: [usize; 2],
    pre: Vec<Vec<f64>>,
    ends: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub blocks: Vec<DenseMatrix>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl NetGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }
}

impl ExplainerNet {
    pub fn init(state_dim: usize, config: &ExplainerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 10));
        let full = DenseMatrix::glorot_uniform(config.hidden, 4 * state_dim, &mut rng);
        let blocks = (0..4)
            .map(|b| {
                let mut m = DenseMatrix::zeros(config.hidden, state_dim);
                for r in 0..config.hidden {
                    m.row_mut(r).copy_from_slice(&full.row(r)[b * state_dim..(b + 1) * state_dim]);
                }
                m
            })
            .collect();
        let bound = (6.0 / (config.hidden + 1) as f64).sqrt();
        let w2 = (0..config.hidden).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            config: config.clone(),
            blocks,
            b1: vec![0.0; config.hidden],
            w2,
            b2: 0.0,
            loss_history: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.blocks[0].cols()
    }

    pub fn flatten(&self) -> Vec<f64> {
        NetGrads {
            blocks: self.blocks.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2,
        }
        .flatten()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let (h, s) = (self.config.hidden, self.state_dim());
        let expect = 4 * h * s + 2 * h + 1;
        if flat.len() != expect {
            return Err(Error::shape("explainer parameters", expect, flat.len()));
        }
        let mut out = self.clone();
        for (b, block) in out.blocks.iter_mut().enumerate() {
            block.as_mut_slice().copy_from_slice(&flat[b * h * s..(b + 1) * h * s]);
        }
        let rest = &flat[4 * h * s..];
        out.b1.copy_from_slice(&rest[..h]);
        out.w2.copy_from_slice(&rest[h..2 * h]);
        out.b2 = rest[2 * h];
        Ok(out)
    }

    /// Mask logits for `edges` conditioned on `target`.
    pub fn omegas(&self, graph: &FlowGraph, states: &DenseMatrix, target: EdgeId, edges: &[EdgeId]) -> Result<(Vec<f64>, NetCache)> {
        if states.cols() != self.state_dim() {
            return Err(Error::shape("explainer state width", self.state_dim(), states.cols()));
        }
        let t = graph.edge(target);
        let mut tgt = self.b1.clone();
        axpy(1.0, &self.blocks[2].matvec(states.row(t.src.0))?, &mut tgt);
        axpy(1.0, &self.blocks[3].matvec(states.row(t.dst.0))?, &mut tgt);

        let mut slots = HashMap::new();
        let mut nodes = Vec::new();
        let mut proj = Vec::new();
        let mut ends = Vec::with_capacity(edges.len());
        for &e in edges {
            let fe = graph.edge(e);
            let mut slot_of = |v: usize| -> Result<usize> {
                if let Some(&s) = slots.get(&v) {
                    return Ok(s);
                }
                let s = nodes.len();
                slots.insert(v, s);
                nodes.push(v);
                proj.push([self.blocks[0].matvec(states.row(v))?, self.blocks[1].matvec(states.row(v))?]);
                Ok(s)
            };
            let a = slot_of(fe.src.0)?;
            let b = slot_of(fe.dst.0)?;
            ends.push((a, b));
        }
        let mut pre = Vec::with_capacity(edges.len());
        let mut omega = Vec::with_capacity(edges.len());
        for &(a, b) in &ends {
            let p: Vec<f64> = (0..self.config.hidden).map(|k| proj[a][0][k] + proj[b][1][k] + tgt[k]).collect();
            omega.push(self.b2 + p.iter().zip(&self.w2).map(|(&x, &w)| x.max(0.0) * w).sum::<f64>());
            pre.push(p);
        }
        Ok((
            omega,
            NetCache {
                slots,
                nodes,
                target_nodes: [t.src.0, t.dst.0],
                pre,
                ends,
            },
        ))
    }

    pub fn omega_backward(&self, states: &DenseMatrix, cache: &NetCache, d_omega: &[f64]) -> Result<NetGrads> {
        let (h, s) = (self.config.hidden, self.state_dim());
        let mut g = NetGrads {
            blocks: (0..4).map(|_| DenseMatrix::zeros(h, s)).collect(),
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        };
        let mut d_proj = vec![[vec![0.0; h], vec![0.0; h]]; cache.nodes.len()];
        for (i, &dw) in d_omega.iter().enumerate() {
            if dw == 0.0 {
                continue;
            }
            let pre = &cache.pre[i];
            g.b2 += dw;
            let (a, b) = cache.ends[i];
            for k in 0..h {
                if pre[k] > 0.0 {
                    g.w2[k] += dw * pre[k];
                    let dp = dw * self.w2[k];
                    g.b1[k] += dp;
                    d_proj[a][0][k] += dp;
                    d_proj[b][1][k] += dp;
                }
            }
        }
        for (slot, &v) in cache.nodes.iter().enumerate() {
            g.blocks[0].add_outer(1.0, &d_proj[slot][0], states.row(v))?;
            g.blocks[1].add_outer(1.0, &d_proj[slot][1], states.row(v))?;
        }
        let d_tgt = g.b1.clone();
        g.blocks[2].add_outer(1.0, &d_tgt, states.row(cache.target_nodes[0]))?;
        g.blocks[3].add_outer(1.0, &d_tgt, states.row(cache.target_nodes[1]))?;
        debug_assert_eq!(cache.slots.len(), cache.nodes.len());
        Ok(g)
    }

    /// Relaxed-mask objective for one target with fixed logistic `noise`.
    pub fn loss_and_grads(&self, states: &DenseMatrix, problem: &TargetProblem<'_>, noise: &[f64], tau: f64) -> Result<(f64, NetGrads)> {
        if noise.len() != problem.len() {
            return Err(Error::shape("mask noise", problem.len(), noise.len()));
        }
        let (omega, cache) = self.omegas(problem.graph, states, problem.target, &problem.subgraph)?;
        let m: Vec<f64> = omega.iter().zip(noise).map(|(&w, &e)| sigmoid((w + e) / tau)).collect();
        let (ce, dce) = problem.loss_and_grad(&m)?;
        let (reg, dreg) = regularizer(&m, self.config.size_coef, self.config.entropy_coef);
        let d_omega: Vec<f64> = m
            .iter()
            .zip(dce.iter().zip(&dreg))
            .map(|(&mi, (a, b))| (a + b) * mi * (1.0 - mi) / tau)
            .collect();
        Ok((ce + reg, self.omega_backward(states, &cache, &d_omega)?))
    }

    pub fn to_container(&self) -> Result<TensorContainer> {
        let mut c = TensorContainer::new(MODEL_KIND)
            .with_meta("explainer.config", serde_json::to_value(&self.config)?)
            .with_meta("explainer.b2", self.b2);
        for (i, b) in self.blocks.iter().enumerate() {
            c.push(format!("explainer.P{i}"), b.clone());
        }
        c.push_vec("explainer.b1", self.b1.clone());
        c.push_vec("explainer.w2", self.w2.clone());
        c.push_vec("explainer.loss_history", self.loss_history.clone());
        Ok(c)
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let config: ExplainerConfig = serde_json::from_value(c.metadata.get("explainer.config").cloned().unwrap_or_default())?;
        let blocks = (0..4).map(|i| c.tensor(&format!("explainer.P{i}")).cloned()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            blocks,
            b1: c.tensor("explainer.b1")?.as_slice().to_vec(),
            w2: c.tensor("explainer.w2")?.as_slice().to_vec(),
            b2: c.meta_f64("explainer.b2")?,
            loss_history: c.tensor("explainer.loss_history")?.as_slice().to_vec(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&TensorContainer::load(path, MODEL_KIND)?)
    }
}

fn logistic_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(1e-6..1.0 - 1e-6);
            u.ln() - (1.0 - u).ln()
        })
        .collect()
}

/// Trains the shared network on class-balanced targets of `graph`; encoder and
/// surrogate stay frozen.
pub fn train_pgexplainer(graph: &FlowGraph, encoder: &EncoderParams, surrogate: &SurrogateHead, config: &ExplainerConfig) -> Result<ExplainerNet> {
    let ctx = ExplainContext::new(graph, encoder, surrogate)?;
    let targets = ctx.training_targets(config.train_targets, subseed(config.seed, 12));
    let problems = targets.iter().map(|&t| ctx.problem(t)).collect::<Result<Vec<_>>>()?;
    let mut net = ExplainerNet::init(encoder.hidden(), config);
    let mut flat = net.flatten();
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &[("explainer", flat.len())]);
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 13));
    let mut order: Vec<usize> = (0..problems.len()).collect();
    for epoch in 0..config.epochs {
        let tau = config.temperature(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let noise = logistic_noise(&mut rng, problems[i].len());
            let (loss, grads) = net.loss_and_grads(&ctx.states, &problems[i], &noise, tau)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("explainer loss not finite at epoch {epoch}")));
            }
            total += loss;
            adam.step(&mut [flat.as_mut_slice()], &[grads.flatten().as_slice()])?;
            net = net.with_flat(&flat)?;
        }
        let mean = total / problems.len().max(1) as f64;
        log::debug!("explainer epoch {epoch}: tau {tau:.3} loss {mean:.5}");
        net.loss_history.push(mean);
    }
    Ok(net)
}

impl EdgeExplainer for ExplainerNet {
    fn name(&self) -> &'static str {
        "PGExplainer"
    }

    fn edge_logits(&self, ctx: &ExplainContext<'_>, target: EdgeId) -> Result<(Vec<EdgeId>, Vec<f64>)> {
        let edges = crate::netgraph::computation_subgraph(ctx.graph, target, ctx.encoder.depth());
        let (omega, _) = self.omegas(ctx.graph, &ctx.states, target, &edges)?;
        Ok((edges, omega))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::objective::tests::random_setup;
    use crate::netgraph::SamplePlan;
    use crate::numcore::max_relative_error;

    pub(crate) fn net_gradcheck(seed: u64) -> f64 {
        let (g, p, s) = random_setup(seed);
        let plan = SamplePlan::full(&g);
        let states = crate::egsage::encode_nodes_full(&g, &p).unwrap();
        let problem = TargetProblem::new(&g, &p, &s, &plan, g.edge_by_flow(0).unwrap()).unwrap();
        let cfg = ExplainerConfig { hidden: 4, seed, ..Default::default() };
        let mut net = ExplainerNet::init(p.hidden(), &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        net.b2 = rng.random_range(-0.5..0.5);
        let noise = logistic_noise(&mut rng, problem.len());
        let tau = 2.0;
        let (_, grads) = net.loss_and_grads(&states, &problem, &noise, tau).unwrap();
        max_relative_error(&net.flatten(), &grads.flatten(), |x| {
            net.with_flat(x).unwrap().loss_and_grads(&states, &problem, &noise, tau).unwrap().0
        })
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let err = net_gradcheck(seed);
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn temperature_schedule_is_geometric() {
        let c = ExplainerConfig { epochs: 5, ..Default::default() };
        assert!((c.temperature(0) - 5.0).abs() < 1e-12);
        assert!((c.temperature(4) - 1.0).abs() < 1e-12);
        let r1 = c.temperature(1) / c.temperature(0);
        let r2 = c.temperature(3) / c.temperature(2);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn flatten_round_trips_and_container_persists() {
        let net = ExplainerNet::init(6, &ExplainerConfig { hidden: 3, seed: 2, ..Default::default() });
        assert_eq!(net.with_flat(&net.flatten()).unwrap(), net);
        let c = net.to_container().unwrap();
        let back = TensorContainer::from_bytes(&c.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(ExplainerNet::from_container(&back).unwrap(), net);
    }
}
