//! Edge-mask explanations of the encoder + classifier pipeline.

pub mod gnnexplainer;
pub mod mask;
pub mod objective;
pub mod pgexplainer;
pub mod surrogate;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::egsage::{edge_embedding, encode_nodes_full, EncoderParams};
use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, FlowGraph, SamplePlan};
use crate::numcore::{sigmoid, DenseMatrix};

pub use gnnexplainer::{GnnExplainer, GnnExplainerConfig};
pub use mask::{apply_mask, important_count, top_indices, ExplanationMask, MaskMode, MaskTarget, RankedEdge};
pub use objective::{regularizer, TargetProblem};
pub use pgexplainer::{train_pgexplainer, ExplainerConfig, ExplainerNet};
pub use surrogate::{fit_surrogate, SurrogateConfig, SurrogateHead};

/// Frozen pieces shared by every explanation on one graph.
#[derive(Debug)]
pub struct ExplainContext<'a> {
    pub graph: &'a FlowGraph,
    pub encoder: &'a EncoderParams,
    pub surrogate: &'a SurrogateHead,
    pub plan: SamplePlan,
    /// Unmasked node states.
    pub states: DenseMatrix,
}

impl<'a> ExplainContext<'a> {
    pub fn new(graph: &'a FlowGraph, encoder: &'a EncoderParams, surrogate: &'a SurrogateHead) -> Result<Self> {
        Ok(Self {
            graph,
            encoder,
            surrogate,
            plan: SamplePlan::full(graph),
            states: encode_nodes_full(graph, encoder)?,
        })
    }

    pub fn problem(&self, target: EdgeId) -> Result<TargetProblem<'_>> {
        TargetProblem::new(self.graph, self.encoder, self.surrogate, &self.plan, target)
    }

    /// Surrogate attack probability of every edge on the unmasked graph.
    pub fn surrogate_probs(&self) -> Vec<f64> {
        (0..self.graph.edge_count())
            .map(|e| self.surrogate.prob(&edge_embedding(self.graph, &self.states, e)))
            .collect()
    }

    pub fn target_by_flow(&self, flow_id: u64) -> Result<EdgeId> {
        self.graph
            .edge_by_flow(flow_id)
            .ok_or_else(|| Error::InvalidInput(format!("flow {flow_id} is not an edge of the graph")))
    }

    /// Up to `n` edges, half predicted attack and half predicted benign where
    /// possible, in ascending edge order.
    pub fn balanced_targets(&self, n: usize, seed: u64) -> Vec<EdgeId> {
        let probs = self.surrogate_probs();
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..probs.len()).partition(|&e| probs[e] >= 0.5);
        let want_pos = (n / 2).min(pos.len());
        let want_neg = (n - want_pos).min(neg.len());
        let want_pos = (n - want_neg).min(pos.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<EdgeId> = sample(&mut rng, pos.len(), want_pos).into_iter().map(|i| EdgeId(pos[i])).collect();
        out.extend(sample(&mut rng, neg.len(), want_neg).into_iter().map(|i| EdgeId(neg[i])));
        out.sort_unstable();
        out
    }

    /// `n` training targets split evenly between the two predicted classes;
    /// a class with too few edges is cycled. Falls back to one class when
    /// the surrogate never predicts the other.
    pub fn training_targets(&self, n: usize, seed: u64) -> Vec<EdgeId> {
        let probs = self.surrogate_probs();
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..probs.len()).partition(|&e| probs[e] >= 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |pool: &[usize], k: usize| -> Vec<EdgeId> {
            let mut out = Vec::with_capacity(k);
            while out.len() < k {
                let take = (k - out.len()).min(pool.len());
                out.extend(sample(&mut rng, pool.len(), take).into_iter().map(|i| EdgeId(pool[i])));
            }
            out
        };
        match (pos.is_empty(), neg.is_empty()) {
            (true, true) => Vec::new(),
            (true, false) => draw(&neg, n),
            (false, true) => draw(&pos, n),
            (false, false) => {
                let mut out = draw(&pos, n / 2);
                out.extend(draw(&neg, n - n / 2));
                out
            }
        }
    }
}

pub trait EdgeExplainer {
    fn name(&self) -> &'static str;

    /// Mask logits of every computation-subgraph edge of `target`.
    fn edge_logits(&self, ctx: &ExplainContext<'_>, target: EdgeId) -> Result<(Vec<EdgeId>, Vec<f64>)>;

    /// Importance in (0, 1) of every computation-subgraph edge of `target`.
    fn edge_weights(&self, ctx: &ExplainContext<'_>, target: EdgeId) -> Result<(Vec<EdgeId>, Vec<f64>)> {
        let (edges, logits) = self.edge_logits(ctx, target)?;
        Ok((edges, logits.into_iter().map(sigmoid).collect()))
    }

    fn explain(&self, ctx: &ExplainContext<'_>, flow_id: u64, sparsity: f64) -> Result<ExplanationMask> {
        let target = ctx.target_by_flow(flow_id)?;
        let (edges, logits) = self.edge_logits(ctx, target)?;
        ExplanationMask::from_logits(MaskTarget::Edge(flow_id), edges, logits, sparsity)
    }

    /// Graph-wide mask. Each target ranks its own subgraph; an edge scores
    /// its best percentile `1 − rank/M_i` over the targets that reach it
    /// and 0 when none does. Binarising at `s` then approximates the union
    /// of every target's top `1 − s`.
    fn global_mask(&self, ctx: &ExplainContext<'_>, targets: &[EdgeId], sparsity: f64) -> Result<ExplanationMask> {
        let mut score = vec![0.0f64; ctx.graph.edge_count()];
        for &t in targets {
            let (edges, logits) = self.edge_logits(ctx, t)?;
            for (e, p) in edges.iter().zip(percentiles(&logits)) {
                score[e.0] = score[e.0].max(p);
            }
        }
        let edges = (0..ctx.graph.edge_count()).map(EdgeId).collect();
        ExplanationMask::new(MaskTarget::Global, edges, score, sparsity)
    }
}

/// `1 − rank/n` per entry, rank 0 for the largest; tied values share the
/// best rank of their group.
pub fn percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut out = vec![0.0; n];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[i] != values[order[pos - 1]] {
            rank = pos;
        }
        out[i] = 1.0 - rank as f64 / n as f64;
    }
    out
}

/// Uniformly random importance weights; the control explainer.
#[derive(Debug, Clone, Copy)]
pub struct RandomExplainer {
    pub seed: u64,
}

impl RandomExplainer {
    pub fn global_mask(&self, graph: &FlowGraph, sparsity: f64) -> Result<ExplanationMask> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let weights = (0..graph.edge_count()).map(|_| rng.random_range(0.0..1.0)).collect();
        ExplanationMask::new(MaskTarget::Global, (0..graph.edge_count()).map(EdgeId).collect(), weights, sparsity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egsage::EncoderConfig;
    use crate::flowdata::{FlowDataset, FlowLabel, FlowRecord, FlowSchema};
    use crate::netgraph::build_graph;
    use rand::Rng;

    /// A hub receiving five bot spokes hidden among fifty benign flows.
    pub(crate) fn bot_star(seed: u64) -> FlowDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        let mut push = |src: String, dst: &str, attack: bool, rng: &mut ChaCha8Rng| {
            let centre = if attack { [2.0, -1.5, 1.0] } else { [-0.5, 0.5, -0.3] };
            recs.push(FlowRecord {
                flow_id: recs.len() as u64,
                src_endpoint: src,
                dst_endpoint: dst.into(),
                features: centre.iter().map(|c| c + rng.random_range(-0.4..0.4)).collect(),
                label: Some(if attack { FlowLabel::Attack("Bot".into()) } else { FlowLabel::Benign }),
            });
        };
        for s in 0..5 {
            push(format!("spoke{s}"), "hub", true, &mut rng);
        }
        for i in 0..50 {
            push(format!("client{}", i % 10), if i % 5 == 0 { "server" } else { "hub" }, false, &mut rng);
        }
        FlowDataset::new(FlowSchema::simple("s", "d", &["f0", "f1", "f2"], Some("Label")), recs)
    }

    pub(crate) fn star_setup(seed: u64) -> (FlowGraph, EncoderParams, SurrogateHead) {
        let g = build_graph(&bot_star(seed)).unwrap();
        let enc = EncoderParams::init(3, &EncoderConfig { hidden: 16, ..Default::default() }, seed).unwrap();
        let states = encode_nodes_full(&g, &enc).unwrap();
        let x = crate::egsage::edge_embedding_matrix(&g, &states).unwrap();
        let probs: Vec<f64> = g.edges().iter().map(|e| if e.is_attack() { 0.95 } else { 0.05 }).collect();
        let s = fit_surrogate(&x, &probs, &SurrogateConfig::default()).unwrap();
        (g, enc, s)
    }

    /// The planted star pushed through the real pipeline: DGI encoder,
    /// boosted classifier, distilled head.
    fn synthetic_star(seed: u64) -> (FlowGraph, EncoderParams, SurrogateHead) {
        let g = build_graph(&bot_star(seed)).unwrap();
        let enc_cfg = EncoderConfig { hidden: 32, ..Default::default() };
        let dgi = crate::dgi::train(&g, &enc_cfg, &crate::dgi::DgiConfig { epochs: 50, seed, ..Default::default() }).unwrap();
        let x = crate::egsage::edge_embedding_matrix(&g, &encode_nodes_full(&g, &dgi.encoder).unwrap()).unwrap();
        let y: Vec<bool> = g.edges().iter().map(|e| e.is_attack()).collect();
        let gbdt = crate::detect::fit_gbdt(&x, &y, &crate::detect::GbdtParams { n_trees: 50, min_samples_leaf: 1, min_samples_split: 2, seed, ..Default::default() }).unwrap();
        let probs: Vec<f64> = gbdt.predict_matrix(&x).unwrap().iter().map(|p| p.clamp(1e-4, 1.0 - 1e-4)).collect();
        let s = fit_surrogate(&x, &probs, &SurrogateConfig::default()).unwrap();
        (g, dgi.encoder, s)
    }

    #[test]
    fn planted_star_spokes_rank_first() {
        for seed in 0..5 {
            let (g, enc, s) = synthetic_star(seed);
            let net = train_pgexplainer(&g, &enc, &s, &ExplainerConfig { seed, ..Default::default() }).unwrap();
            let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
            let target = g.edges().iter().find(|e| e.is_attack()).unwrap().flow_id;
            let subgraph = ctx.problem(ctx.target_by_flow(target).unwrap()).unwrap().len();
            let sparsity = 1.0 - 5.0 / subgraph as f64;
            let m = net.explain(&ctx, target, sparsity).unwrap();
            assert_eq!(m.important.len(), 5);
            let spokes = m.important.iter().filter(|&&e| g.edge(e).is_attack()).count();
            assert!(spokes >= 4, "seed {seed}: {:?}", m.ranked(&g));
        }
    }

    #[test]
    fn huge_size_penalty_drives_weights_to_zero() {
        let (g, enc, s) = star_setup(1);
        let cfg = ExplainerConfig { size_coef: 1e4, learning_rate: 0.01, train_targets: 20, epochs: 10, seed: 1, ..Default::default() };
        let net = train_pgexplainer(&g, &enc, &s, &cfg).unwrap();
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let mut max = 0.0f64;
        for t in ctx.balanced_targets(20, 0) {
            let (_, w) = net.edge_weights(&ctx, t).unwrap();
            max = w.into_iter().fold(max, f64::max);
        }
        assert!(max < 0.05, "max weight {max}");
    }

    #[test]
    fn training_and_explanations_are_deterministic() {
        let (g, enc, s) = star_setup(2);
        let cfg = ExplainerConfig { train_targets: 10, epochs: 3, seed: 5, ..Default::default() };
        let a = train_pgexplainer(&g, &enc, &s, &cfg).unwrap();
        assert_eq!(a, train_pgexplainer(&g, &enc, &s, &cfg).unwrap());
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let first = a.explain(&ctx, 0, 0.5).unwrap();
        let other = a.explain(&ctx, 7, 0.5).unwrap();
        assert_eq!(a.explain(&ctx, 0, 0.5).unwrap(), first);
        assert_ne!(first, other);
        let gnn = GnnExplainer::new(GnnExplainerConfig::default());
        assert_eq!(gnn.explain(&ctx, 3, 0.5).unwrap(), gnn.explain(&ctx, 3, 0.5).unwrap());
    }

    #[test]
    fn zero_step_gnnexplainer_is_uniform() {
        let (g, enc, s) = star_setup(0);
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let gnn = GnnExplainer::new(GnnExplainerConfig { steps: 0, ..Default::default() });
        let m = gnn.explain(&ctx, 0, 0.0).unwrap();
        assert!(m.weights.iter().all(|&w| w == crate::numcore::sigmoid(1.0)));
        assert_eq!(m.important.len(), m.edges.len());
    }

    #[test]
    fn weights_are_probabilities_and_errors_surface() {
        let (g, enc, s) = star_setup(0);
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let net = ExplainerNet::init(16, &ExplainerConfig::default());
        let m = net.explain(&ctx, 4, 0.3).unwrap();
        assert!(m.weights.iter().all(|&w| w > 0.0 && w < 1.0));
        assert!(net.explain(&ctx, 9999, 0.3).is_err());
        assert!(net.explain(&ctx, 4, 1.0).is_err());
    }

    #[test]
    fn balanced_targets_mix_both_predictions() {
        let (g, enc, s) = star_setup(0);
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let t = ctx.balanced_targets(10, 3);
        assert_eq!(t.len(), 10);
        let probs = ctx.surrogate_probs();
        assert_eq!(t.iter().filter(|e| probs[e.0] >= 0.5).count(), 5);
        assert_eq!(ctx.balanced_targets(10, 3), t);
    }

    #[test]
    fn training_targets_cycle_the_rare_class() {
        let (g, enc, s) = star_setup(0);
        let ctx = ExplainContext::new(&g, &enc, &s).unwrap();
        let probs = ctx.surrogate_probs();
        let rare = (0..probs.len()).filter(|&e| probs[e] >= 0.5).count();
        let t = ctx.training_targets(4 * rare, 1);
        assert_eq!(t.len(), 4 * rare);
        let pos: Vec<EdgeId> = t.iter().copied().filter(|e| probs[e.0] >= 0.5).collect();
        assert_eq!(pos.len(), 2 * rare);
        let mut distinct = pos.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), rare);
    }
}
