//! Per-target explanation objective: cross-entropy of the surrogate on the
//! masked target embedding against the unmasked prediction.

use crate::egsage::{backward, forward, EncoderParams, ForwardOptions};
use crate::error::{Error, Result};
use crate::netgraph::{computation_subgraph, EdgeId, FlowGraph, NodeId, SamplePlan};
use crate::numcore::{bce_with_logit, DenseMatrix};

use super::surrogate::SurrogateHead;

/// Everything needed to score masks for one target edge.
#[derive(Debug)]
pub struct TargetProblem<'a> {
    pub graph: &'a FlowGraph,
    pub encoder: &'a EncoderParams,
    pub surrogate: &'a SurrogateHead,
    pub plan: &'a SamplePlan,
    pub target: EdgeId,
    /// Computation subgraph of the target.
    pub subgraph: Vec<EdgeId>,
    /// Original predicted class under the surrogate: 1.0 attack, 0.0 benign.
    pub label: f64,
    roots: [NodeId; 2],
}

impl<'a> TargetProblem<'a> {
    pub fn new(graph: &'a FlowGraph, encoder: &'a EncoderParams, surrogate: &'a SurrogateHead, plan: &'a SamplePlan, target: EdgeId) -> Result<Self> {
        if target.0 >= graph.edge_count() {
            return Err(Error::InvalidInput(format!("target edge {} out of range", target.0)));
        }
        if surrogate.dim() != 2 * encoder.hidden() {
            return Err(Error::shape("surrogate width", 2 * encoder.hidden(), surrogate.dim()));
        }
        let edge = graph.edge(target);
        let mut p = Self {
            graph,
            encoder,
            surrogate,
            plan,
            target,
            subgraph: computation_subgraph(graph, target, encoder.depth()),
            label: 0.0,
            roots: [edge.src, edge.dst],
        };
        let ones = vec![1.0; p.subgraph.len()];
        p.label = if p.prob(&ones)? >= 0.5 { 1.0 } else { 0.0 };
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.subgraph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraph.is_empty()
    }

    fn full_weights(&self, sub_weights: &[f64]) -> Result<Vec<f64>> {
        if sub_weights.len() != self.subgraph.len() {
            return Err(Error::shape("subgraph mask", self.subgraph.len(), sub_weights.len()));
        }
        let mut w = vec![1.0; self.graph.edge_count()];
        for (e, &m) in self.subgraph.iter().zip(sub_weights) {
            w[e.0] = m;
        }
        Ok(w)
    }

    fn target_embedding(&self, states: &DenseMatrix) -> Vec<f64> {
        let mut z = states.row(self.roots[0].0).to_vec();
        z.extend_from_slice(states.row(self.roots[1].0));
        z
    }

    /// Surrogate attack probability with subgraph messages scaled by `sub_weights`.
    pub fn prob(&self, sub_weights: &[f64]) -> Result<f64> {
        let w = self.full_weights(sub_weights)?;
        let opts = ForwardOptions {
            edge_weights: Some(&w),
            roots: Some(&self.roots),
        };
        let (states, _) = forward(self.graph, self.encoder, self.plan, opts)?;
        Ok(self.surrogate.prob(&self.target_embedding(&states)))
    }

    /// Probability of the original class when only `keep` survives in the subgraph.
    pub fn retention(&self, keep: &[EdgeId]) -> Result<f64> {
        let sub: Vec<f64> = self.subgraph.iter().map(|e| if keep.contains(e) { 1.0 } else { 0.0 }).collect();
        let p = self.prob(&sub)?;
        Ok(if self.label == 1.0 { p } else { 1.0 - p })
    }

    /// Prediction loss and its gradient on the subgraph weights.
    pub fn loss_and_grad(&self, sub_weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        let w = self.full_weights(sub_weights)?;
        let opts = ForwardOptions {
            edge_weights: Some(&w),
            roots: Some(&self.roots),
        };
        let (states, cache) = forward(self.graph, self.encoder, self.plan, opts)?;
        let z = self.target_embedding(&states);
        let (loss, g) = bce_with_logit(self.surrogate.logit(&z), self.label);
        let h = self.encoder.hidden();
        let mut d_states = DenseMatrix::zeros(self.graph.node_count(), h);
        for k in 0..h {
            let (a, b) = (self.roots[0].0, self.roots[1].0);
            d_states.set(a, k, d_states.get(a, k) + g * self.surrogate.weights[k]);
            d_states.set(b, k, d_states.get(b, k) + g * self.surrogate.weights[h + k]);
        }
        let grads = backward(self.graph, self.encoder, self.plan, &cache, &d_states, Some(&w))?;
        let de = grads.edge_weights.expect("weighted backward");
        Ok((loss, self.subgraph.iter().map(|e| de[e.0]).collect()))
    }
}

/// Summed size penalty plus mean binary entropy, with their gradient.
pub fn regularizer(mask: &[f64], size_coef: f64, entropy_coef: f64) -> (f64, Vec<f64>) {
    const EPS: f64 = 1e-12;
    let n = mask.len().max(1) as f64;
    let mut value = 0.0;
    let grad = mask
        .iter()
        .map(|&m| {
            let mc = m.clamp(EPS, 1.0 - EPS);
            let ent = -(mc * mc.ln() + (1.0 - mc) * (1.0 - mc).ln());
            value += size_coef * m + entropy_coef * ent / n;
            size_coef + entropy_coef * ((1.0 - mc) / mc).ln() / n
        })
        .collect();
    (value, grad)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::egsage::EncoderConfig;
    use crate::netgraph::build_graph;
    use crate::numcore::max_relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_setup(seed: u64) -> (FlowGraph, EncoderParams, SurrogateHead) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = vec![("u", "v")];
        let names = ["u", "v", "a", "b", "c", "d"];
        for _ in 0..6 {
            let s = names[rng.random_range(0..6)];
            let t = names[rng.random_range(0..2)];
            pairs.push(if rng.random_bool(0.5) { (s, t) } else { (t, s) });
        }
        let mut ds = crate::netgraph::tests::records(&pairs, 3);
        for r in &mut ds.records {
            r.features = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        let g = build_graph(&ds).unwrap();
        let p = EncoderParams::init(3, &EncoderConfig { hidden: 5, ..Default::default() }, seed).unwrap();
        let s = SurrogateHead {
            weights: (0..10).map(|_| rng.random_range(-2.0..2.0)).collect(),
            bias: rng.random_range(-0.5..0.5),
            mean_abs_dev: 0.0,
        };
        (g, p, s)
    }

    #[test]
    fn mask_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (g, p, s) = random_setup(seed);
            let plan = SamplePlan::full(&g);
            let target = g.edge_by_flow(0).unwrap();
            let prob = TargetProblem::new(&g, &p, &s, &plan, target).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let point: Vec<f64> = (0..prob.len()).map(|_| rng.random_range(0.2..0.9)).collect();
            let (_, analytic) = prob.loss_and_grad(&point).unwrap();
            let err = max_relative_error(&point, &analytic, |w| prob.loss_and_grad(w).unwrap().0);
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn regularizer_gradient_and_values() {
        let (v, _) = regularizer(&[0.5, 0.5], 0.0, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let (v, _) = regularizer(&[1.0, 0.0], 0.01, 0.0);
        assert!((v - 0.01).abs() < 1e-15);
        let (v, _) = regularizer(&[0.5; 8], 0.0, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let point = [0.3, 0.7, 0.9];
        let (_, g) = regularizer(&point, 0.01, 0.1);
        assert!(max_relative_error(&point, &g, |m| regularizer(m, 0.01, 0.1).0) < 1e-6);
    }

    #[test]
    fn unit_weights_reproduce_the_unmasked_prediction() {
        let (g, p, s) = random_setup(3);
        let plan = SamplePlan::full(&g);
        let t = g.edge_by_flow(0).unwrap();
        let prob = TargetProblem::new(&g, &p, &s, &plan, t).unwrap();
        let states = crate::egsage::encode_nodes_full(&g, &p).unwrap();
        let z = crate::egsage::edge_embedding(&g, &states, t.0);
        assert_eq!(prob.prob(&vec![1.0; prob.len()]).unwrap(), s.prob(&z));
    }
}
