//! Edge masks, their binarisation, and masked inference.

use serde::{Deserialize, Serialize};

use crate::egsage::{edge_embedding_matrix, forward, EncoderParams, ForwardOptions};
use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, FlowGraph, SamplePlan};
use crate::numcore::{sigmoid, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskTarget {
    Edge(u64),
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMask {
    pub target: MaskTarget,
    /// Candidate edges, with `weights[i]` the importance of `edges[i]`.
    pub edges: Vec<EdgeId>,
    pub weights: Vec<f64>,
    /// Ranking key, monotone in `weights`; the raw logits when the explainer
    /// has them, so saturated weights still rank.
    pub scores: Vec<f64>,
    /// Binarised important set, most important first.
    pub important: Vec<EdgeId>,
    pub sparsity: f64,
}

/// Size of the important set for `m` candidates at `sparsity`.
pub fn important_count(m: usize, sparsity: f64) -> usize {
    ((1.0 - sparsity) * m as f64).round() as usize
}

/// Indices of the `round((1 - sparsity)·M)` largest weights, ties broken by
/// position. An empty set is bumped to one edge.
pub fn top_indices(weights: &[f64], sparsity: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidInput(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    if weights.is_empty() {
        return Err(Error::InvalidInput("cannot binarise an empty mask".into()));
    }
    let mut k = important_count(weights.len(), sparsity);
    if k == 0 {
        log::warn!("sparsity {sparsity} leaves no edge among {}; keeping one", weights.len());
        k = 1;
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

impl ExplanationMask {
    pub fn new(target: MaskTarget, edges: Vec<EdgeId>, weights: Vec<f64>, sparsity: f64) -> Result<Self> {
        let scores = weights.clone();
        Self::with_scores(target, edges, weights, scores, sparsity)
    }

    /// Weights `σ(logit)`, ranked by the logits themselves.
    pub fn from_logits(target: MaskTarget, edges: Vec<EdgeId>, logits: Vec<f64>, sparsity: f64) -> Result<Self> {
        let weights = logits.iter().map(|&l| sigmoid(l)).collect();
        Self::with_scores(target, edges, weights, logits, sparsity)
    }

    fn with_scores(target: MaskTarget, edges: Vec<EdgeId>, weights: Vec<f64>, scores: Vec<f64>, sparsity: f64) -> Result<Self> {
        if edges.len() != weights.len() {
            return Err(Error::shape("mask weights", edges.len(), weights.len()));
        }
        if scores.len() != weights.len() {
            return Err(Error::shape("mask scores", weights.len(), scores.len()));
        }
        let important = top_indices(&scores, sparsity)?.into_iter().map(|i| edges[i]).collect();
        Ok(Self {
            target,
            edges,
            weights,
            scores,
            important,
            sparsity,
        })
    }

    /// Same weights, binarised at another level.
    pub fn at_sparsity(&self, sparsity: f64) -> Result<Self> {
        Self::with_scores(self.target, self.edges.clone(), self.weights.clone(), self.scores.clone(), sparsity)
    }

    pub fn candidate_count(&self) -> usize {
        self.edges.len()
    }

    /// `true` at every important edge, over all edges of `graph`.
    pub fn removal_flags(&self, graph: &FlowGraph) -> Vec<bool> {
        let mut flags = vec![false; graph.edge_count()];
        for e in &self.important {
            flags[e.0] = true;
        }
        flags
    }

    /// Rows of (flow_id, weight, rank, label, important) in rank order.
    pub fn ranked(&self, graph: &FlowGraph) -> Vec<RankedEdge> {
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
            .iter()
            .enumerate()
            .map(|(rank, &i)| {
                let e = graph.edge(self.edges[i]);
                RankedEdge {
                    flow_id: e.flow_id,
                    weight: self.weights[i],
                    rank: rank + 1,
                    label: e.label.as_ref().map_or("Unlabelled", |l| l.as_str()).to_string(),
                    important: rank < self.important.len(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEdge {
    pub flow_id: u64,
    pub weight: f64,
    pub rank: usize,
    pub label: String,
    pub important: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Messages scaled by the weight.
    Soft,
    /// Edges with weight 0 drop out; any other weight counts as 1.
    Hard,
}

/// Edge embeddings (every edge of the graph) with messages masked by
/// `weights`. Masked edges keep their own rows.
pub fn apply_mask(graph: &FlowGraph, encoder: &EncoderParams, weights: &[f64], mode: MaskMode) -> Result<DenseMatrix> {
    if weights.len() != graph.edge_count() {
        return Err(Error::shape("apply_mask weights", graph.edge_count(), weights.len()));
    }
    let (states, _) = match mode {
        MaskMode::Soft => forward(
            graph,
            encoder,
            &SamplePlan::full(graph),
            ForwardOptions {
                edge_weights: Some(weights),
                roots: None,
            },
        )?,
        MaskMode::Hard => {
            let removed: Vec<bool> = weights.iter().map(|&w| w == 0.0).collect();
            forward(graph, encoder, &SamplePlan::without_edges(graph, &removed)?, ForwardOptions::default())?
        }
    };
    edge_embedding_matrix(graph, &states)
}
