//! E-GraphSAGE encoder: mean aggregation of `[h_u ; e_uv]` messages, a
//! bias-free affine + ReLU update per layer, and edge embeddings formed by
//! concatenating endpoint states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{FlowGraph, NeighborSample, NodeId, SamplePlan};
use crate::numcore::{axpy, dot, DenseMatrix, TensorContainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub depth: usize,
    pub sample_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            depth: 1,
            sample_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    feature_dim: usize,
    hidden: usize,
    sample_size: usize,
    layers: Vec<DenseMatrix>,
}

impl EncoderParams {
    pub fn init(feature_dim: usize, config: &EncoderConfig, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.depth == 0 || feature_dim == 0 {
            return Err(Error::InvalidInput(format!(
                "encoder needs hidden > 0, depth >= 1 and feature_dim >= 1 (got {}, {}, {feature_dim})",
                config.hidden, config.depth
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.depth)
            .map(|k| {
                let prev = if k == 0 { feature_dim } else { config.hidden };
                DenseMatrix::glorot_uniform(config.hidden, 2 * prev + feature_dim, &mut rng)
            })
            .collect();
        Ok(Self {
            feature_dim,
            hidden: config.hidden,
            sample_size: config.sample_size,
            layers,
        })
    }

    pub fn from_layers(feature_dim: usize, sample_size: usize, layers: Vec<DenseMatrix>) -> Result<Self> {
        let hidden = layers.first().map(DenseMatrix::rows).unwrap_or(0);
        if hidden == 0 || feature_dim == 0 {
            return Err(Error::InvalidInput("encoder needs at least one non-empty layer".into()));
        }
        for (k, w) in layers.iter().enumerate() {
            let prev = if k == 0 { feature_dim } else { hidden };
            let want = (hidden, 2 * prev + feature_dim);
            if w.shape() != want {
                return Err(Error::shape("EncoderParams layer", format!("{want:?}"), format!("{:?}", w.shape())));
            }
        }
        Ok(Self {
            feature_dim,
            hidden,
            sample_size,
            layers,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    /// Width of `h^k`: the input features at k = 0, `hidden` above.
    fn state_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.feature_dim
        } else {
            self.hidden
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let total: usize = self.layers.iter().map(|w| w.as_slice().len()).sum();
        if flat.len() != total {
            return Err(Error::shape("EncoderParams::with_flat", total, flat.len()));
        }
        let mut out = self.clone();
        let mut off = 0;
        for w in &mut out.layers {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(out)
    }

    pub fn write_into(&self, c: &mut TensorContainer) {
        c.metadata.insert("encoder.feature_dim".into(), (self.feature_dim as u64).into());
        c.metadata.insert("encoder.sample_size".into(), (self.sample_size as u64).into());
        c.metadata.insert("encoder.depth".into(), (self.layers.len() as u64).into());
        for (k, w) in self.layers.iter().enumerate() {
            c.push(format!("encoder.W{}", k + 1), w.clone());
        }
    }

    pub fn read_from(c: &TensorContainer) -> Result<Self> {
        let d = c.meta_u64("encoder.feature_dim")? as usize;
        let s = c.meta_u64("encoder.sample_size")? as usize;
        let depth = c.meta_u64("encoder.depth")? as usize;
        let layers = (1..=depth)
            .map(|k| c.tensor(&format!("encoder.W{k}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(d, s, layers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEmbedding {
    pub flow_id: u64,
    pub vector: Vec<f64>,
}

/// Unweighted mean of `[h_u ; e_uv]` over a sample; zeros for an empty one.
pub fn aggregate_neighborhood(graph: &FlowGraph, sample: &NeighborSample, states: &DenseMatrix) -> Result<Vec<f64>> {
    if states.rows() != graph.node_count() {
        return Err(Error::shape("aggregate_neighborhood states", graph.node_count(), states.rows()));
    }
    let dh = states.cols();
    let d = graph.feature_dim();
    let mut acc = vec![0.0; dh + d];
    for inc in &sample.entries {
        axpy(1.0, states.row(inc.neighbor.0), &mut acc[..dh]);
        axpy(1.0, graph.edge_features(inc.edge), &mut acc[dh..]);
    }
    if !sample.entries.is_empty() {
        let n = sample.entries.len() as f64;
        acc.iter_mut().for_each(|x| *x /= n);
    }
    Ok(acc)
}

/// Optional knobs for one forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    /// Per-edge message weights; each message is scaled by its weight
    /// inside the neighbourhood mean, `Σ m·msg / N`.
    pub edge_weights: Option<&'a [f64]>,
    /// Only these nodes' final states are needed; others stay zero.
    pub roots: Option<&'a [NodeId]>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    nodes: Vec<usize>,
    inputs: Vec<f64>,
    pre: Vec<f64>,
    counts: Vec<f64>,
}

/// Forward-pass record needed by [`backward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    fingerprint: u64,
    weighted: bool,
    /// `states[k]` holds `h^k` for every node (zero rows where not computed).
    states: Vec<DenseMatrix>,
    layers: Vec<LayerCache>,
}

impl EncoderCache {
    pub fn node_states(&self) -> &DenseMatrix {
        self.states.last().expect("at least the input layer")
    }
}

fn check_weights(graph: &FlowGraph, w: Option<&[f64]>) -> Result<()> {
    if let Some(w) = w {
        if w.len() != graph.edge_count() {
            return Err(Error::shape("edge weights", graph.edge_count(), w.len()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("edge weights".into()));
        }
    }
    Ok(())
}

pub fn forward(graph: &FlowGraph, params: &EncoderParams, plan: &SamplePlan, opts: ForwardOptions<'_>) -> Result<(DenseMatrix, EncoderCache)> {
    if graph.feature_dim() != params.feature_dim {
        return Err(Error::shape("encoder feature dim", params.feature_dim, graph.feature_dim()));
    }
    if plan.node_count() != graph.node_count() {
        return Err(Error::shape("sample plan nodes", graph.node_count(), plan.node_count()));
    }
    check_weights(graph, opts.edge_weights)?;
    let n = graph.node_count();
    let depth = params.depth();

    // needed[k]: nodes whose h^k must be computed, for k = 1..=depth.
    let mut needed: Vec<Vec<usize>> = vec![Vec::new(); depth + 1];
    needed[depth] = match opts.roots {
        Some(r) => {
            let mut v: Vec<usize> = r.iter().map(|x| x.0).collect();
            v.sort_unstable();
            v.dedup();
            if v.last().is_some_and(|&m| m >= n) {
                return Err(Error::InvalidInput("root node out of range".into()));
            }
            v
        }
        None => (0..n).collect(),
    };
    for k in (1..depth).rev() {
        let mut mark = vec![false; n];
        for &v in &needed[k + 1] {
            mark[v] = true;
            for inc in plan.neighborhood(NodeId(v)) {
                mark[inc.neighbor.0] = true;
            }
        }
        needed[k] = (0..n).filter(|&v| mark[v]).collect();
    }

    let d = params.feature_dim;
    let mut states = vec![DenseMatrix::filled(n, d, 1.0)];
    let mut layers = Vec::with_capacity(depth);
    for k in 1..=depth {
        let w = &params.layers[k - 1];
        let dp = params.state_dim(k - 1);
        let in_dim = 2 * dp + d;
        let prev = &states[k - 1];
        let nodes = needed[k].clone();
        let mut inputs = vec![0.0; nodes.len() * in_dim];
        let mut pre = vec![0.0; nodes.len() * params.hidden];
        let mut counts = vec![0.0; nodes.len()];
        let mut next = DenseMatrix::zeros(n, params.hidden);
        for (slot, &v) in nodes.iter().enumerate() {
            let input = &mut inputs[slot * in_dim..(slot + 1) * in_dim];
            input[..dp].copy_from_slice(prev.row(v));
            let (agg_h, agg_e) = input[dp..].split_at_mut(dp);
            let mut count = 0usize;
            for inc in plan.neighborhood(NodeId(v)) {
                let m = opts.edge_weights.map_or(1.0, |ws| ws[inc.edge.0]);
                axpy(m, prev.row(inc.neighbor.0), agg_h);
                axpy(m, graph.edge_features(inc.edge), agg_e);
                count += 1;
            }
            if count > 0 {
                let nf = count as f64;
                input[dp..].iter_mut().for_each(|x| *x /= nf);
            }
            counts[slot] = count as f64;
            let z = w.matvec(input)?;
            let out = next.row_mut(v);
            for (j, &p) in z.iter().enumerate() {
                out[j] = p.max(0.0);
            }
            pre[slot * params.hidden..(slot + 1) * params.hidden].copy_from_slice(&z);
        }
        states.push(next);
        layers.push(LayerCache {
            nodes,
            inputs,
            pre,
            counts,
        });
    }
    let out = states.last().expect("depth >= 1").clone();
    Ok((
        out,
        EncoderCache {
            fingerprint: plan.fingerprint(),
            weighted: opts.edge_weights.is_some(),
            states,
            layers,
        },
    ))
}

/// Node states with sampled neighbourhoods for the given epoch.
pub fn encode_nodes(graph: &FlowGraph, params: &EncoderParams, seed: u64, epoch: u64) -> Result<DenseMatrix> {
    let plan = SamplePlan::sampled(graph, params.sample_size, seed, epoch);
    Ok(forward(graph, params, &plan, ForwardOptions::default())?.0)
}

/// Node states with every incident edge aggregated.
pub fn encode_nodes_full(graph: &FlowGraph, params: &EncoderParams) -> Result<DenseMatrix> {
    Ok(forward(graph, params, &SamplePlan::full(graph), ForwardOptions::default())?.0)
}

pub fn edge_embedding(graph: &FlowGraph, states: &DenseMatrix, e: usize) -> Vec<f64> {
    let edge = &graph.edges()[e];
    let mut z = Vec::with_capacity(2 * states.cols());
    z.extend_from_slice(states.row(edge.src.0));
    z.extend_from_slice(states.row(edge.dst.0));
    z
}

pub fn encode_edges(graph: &FlowGraph, states: &DenseMatrix) -> Result<Vec<EdgeEmbedding>> {
    if states.rows() != graph.node_count() {
        return Err(Error::shape("encode_edges states", graph.node_count(), states.rows()));
    }
    Ok((0..graph.edge_count())
        .map(|e| EdgeEmbedding {
            flow_id: graph.edges()[e].flow_id,
            vector: edge_embedding(graph, states, e),
        })
        .collect())
}

/// Edge embeddings as an `|E| × 2·hidden` matrix in edge-index order.
pub fn edge_embedding_matrix(graph: &FlowGraph, states: &DenseMatrix) -> Result<DenseMatrix> {
    if states.rows() != graph.node_count() {
        return Err(Error::shape("edge_embedding_matrix states", graph.node_count(), states.rows()));
    }
    let h = states.cols();
    let mut data = Vec::with_capacity(graph.edge_count() * 2 * h);
    for e in graph.edges() {
        data.extend_from_slice(states.row(e.src.0));
        data.extend_from_slice(states.row(e.dst.0));
    }
    DenseMatrix::from_vec(graph.edge_count(), 2 * h, data)
}

/// Folds upstream gradients on edge embeddings onto the endpoint states.
pub fn edge_grads_to_node_grads(graph: &FlowGraph, d_edges: &DenseMatrix) -> Result<DenseMatrix> {
    if d_edges.rows() != graph.edge_count() || !d_edges.cols().is_multiple_of(2) {
        return Err(Error::shape("edge gradient matrix", graph.edge_count(), d_edges.rows()));
    }
    let h = d_edges.cols() / 2;
    let mut d_nodes = DenseMatrix::zeros(graph.node_count(), h);
    for (i, e) in graph.edges().iter().enumerate() {
        let g = d_edges.row(i);
        axpy(1.0, &g[..h], d_nodes.row_mut(e.src.0));
        axpy(1.0, &g[h..], d_nodes.row_mut(e.dst.0));
    }
    Ok(d_nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<DenseMatrix>,
    /// Gradient on the per-edge weights when the forward pass was weighted.
    pub edge_weights: Option<Vec<f64>>,
}

/// Gradients of a scalar loss given `d_states = dL/dh^K`.
pub fn backward(
    graph: &FlowGraph,
    params: &EncoderParams,
    plan: &SamplePlan,
    cache: &EncoderCache,
    d_states: &DenseMatrix,
    edge_weights: Option<&[f64]>,
) -> Result<EncoderGrads> {
    if plan.fingerprint() != cache.fingerprint {
        return Err(Error::InvalidInput("sampling realization differs between forward and backward".into()));
    }
    if cache.weighted != edge_weights.is_some() {
        return Err(Error::InvalidInput("edge weights must be supplied to both forward and backward".into()));
    }
    check_weights(graph, edge_weights)?;
    let n = graph.node_count();
    if d_states.shape() != (n, params.hidden) {
        return Err(Error::shape("encoder upstream gradient", format!("({n}, {})", params.hidden), format!("{:?}", d_states.shape())));
    }
    let d = params.feature_dim;
    let depth = params.depth();
    let mut grads: Vec<DenseMatrix> = params.layers.iter().map(|w| DenseMatrix::zeros(w.rows(), w.cols())).collect();
    let mut d_edge = edge_weights.map(|_| vec![0.0; graph.edge_count()]);
    let mut d_h = d_states.clone();

    for k in (1..=depth).rev() {
        let w = &params.layers[k - 1];
        let lc = &cache.layers[k - 1];
        let dp = params.state_dim(k - 1);
        let in_dim = 2 * dp + d;
        let prev = &cache.states[k - 1];
        let mut d_prev = DenseMatrix::zeros(n, dp);
        let mut msg = vec![0.0; dp + d];
        for (slot, &v) in lc.nodes.iter().enumerate() {
            let pre = &lc.pre[slot * params.hidden..(slot + 1) * params.hidden];
            let dpre: Vec<f64> = d_h.row(v).iter().zip(pre).map(|(&g, &p)| if p > 0.0 { g } else { 0.0 }).collect();
            if dpre.iter().all(|&g| g == 0.0) {
                continue;
            }
            let input = &lc.inputs[slot * in_dim..(slot + 1) * in_dim];
            grads[k - 1].add_outer(1.0, &dpre, input)?;
            let d_in = w.matvec_t(&dpre)?;
            if k > 1 {
                axpy(1.0, &d_in[..dp], d_prev.row_mut(v));
            }
            let total = lc.counts[slot];
            if total == 0.0 {
                continue;
            }
            let d_agg = &d_in[dp..];
            for inc in plan.neighborhood(NodeId(v)) {
                let m = edge_weights.map_or(1.0, |ws| ws[inc.edge.0]);
                if k > 1 {
                    axpy(m / total, &d_agg[..dp], d_prev.row_mut(inc.neighbor.0));
                }
                if let Some(de) = d_edge.as_mut() {
                    msg[..dp].copy_from_slice(prev.row(inc.neighbor.0));
                    msg[dp..].copy_from_slice(graph.edge_features(inc.edge));
                    let mut s = 0.0;
                    for j in 0..dp + d {
                        s += d_agg[j] * msg[j];
                    }
                    de[inc.edge.0] += s / total;
                }
            }
        }
        d_h = d_prev;
    }
    Ok(EncoderGrads {
        layers: grads,
        edge_weights: d_edge,
    })
}

/// Gradient on the encoder weights from upstream gradients on z_uv.
pub fn encoder_backward(graph: &FlowGraph, params: &EncoderParams, plan: &SamplePlan, cache: &EncoderCache, d_edges: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    let d_nodes = edge_grads_to_node_grads(graph, d_edges)?;
    Ok(backward(graph, params, plan, cache, &d_nodes, None)?.layers)
}

/// `Σ_e <g_e, z_e>` for fixed `g`; a handy scalar probe for gradient checks.
pub fn probe_loss(graph: &FlowGraph, states: &DenseMatrix, g: &DenseMatrix) -> f64 {
    (0..graph.edge_count()).map(|e| dot(&edge_embedding(graph, states, e), g.row(e))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdata::{FlowDataset, FlowLabel, FlowRecord, FlowSchema};
    use crate::netgraph::{build_graph, sample_neighbors, EdgeId};
    use crate::numcore::max_relative_error;
    use proptest::prelude::*;
    use rand::Rng;

    fn graph_from(edges: &[(&str, &str, Vec<f64>)]) -> FlowGraph {
        let d = edges.first().map_or(1, |e| e.2.len());
        let recs = edges
            .iter()
            .enumerate()
            .map(|(i, (s, t, f))| FlowRecord {
                flow_id: i as u64,
                src_endpoint: s.to_string(),
                dst_endpoint: t.to_string(),
                features: f.clone(),
                label: Some(FlowLabel::Benign),
            })
            .collect();
        let names: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        build_graph(&FlowDataset::new(FlowSchema::simple("s", "d", &refs, None), recs)).unwrap()
    }

    pub(crate) fn random_graph(seed: u64, nodes: usize, edges: usize, d: usize) -> FlowGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..nodes).map(|i| format!("n{i}")).collect();
        let list: Vec<(&str, &str, Vec<f64>)> = (0..edges)
            .map(|_| {
                let a = rng.random_range(0..nodes);
                let b = rng.random_range(0..nodes);
                let f = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (names[a].as_str(), names[b].as_str(), f)
            })
            .collect();
        graph_from(&list)
    }

    fn small_params(d: usize, hidden: usize, depth: usize, seed: u64) -> EncoderParams {
        let cfg = EncoderConfig {
            hidden,
            depth,
            sample_size: 10,
        };
        EncoderParams::init(d, &cfg, seed).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let g = graph_from(&[("A", "B", vec![2.0])]);
        let b = g.find_node("B").unwrap();
        let ones = DenseMatrix::filled(2, 1, 1.0);
        let s = sample_neighbors(&g, b, 10, 0, 0).unwrap();
        assert_eq!(aggregate_neighborhood(&g, &s, &ones).unwrap(), vec![1.0, 2.0]);

        let g = graph_from(&[("A", "X", vec![0.0]), ("B", "X", vec![2.0])]);
        let states = DenseMatrix::from_rows(&[vec![1.0], vec![3.0], vec![0.0]]).unwrap();
        let x = g.find_node("X").unwrap();
        let s = sample_neighbors(&g, x, 10, 0, 0).unwrap();
        assert_eq!(aggregate_neighborhood(&g, &s, &states).unwrap(), vec![2.0, 1.0]);

        let empty = NeighborSample { center: x, entries: vec![] };
        assert_eq!(aggregate_neighborhood(&g, &empty, &states).unwrap(), vec![0.0, 0.0]);
        let bad = DenseMatrix::zeros(2, 1);
        assert!(aggregate_neighborhood(&g, &s, &bad).is_err());
    }

    #[test]
    fn hand_computed_forward() {
        let g = graph_from(&[("A", "B", vec![2.0])]);
        let p = EncoderParams::from_layers(1, 10, vec![DenseMatrix::filled(1, 3, 1.0)]).unwrap();
        let z = encode_nodes(&g, &p, 0, 0).unwrap();
        assert_eq!(z.as_slice(), &[4.0, 4.0]);

        let zero = EncoderParams::from_layers(1, 10, vec![DenseMatrix::zeros(3, 3)]).unwrap();
        assert!(encode_nodes(&g, &zero, 0, 0).unwrap().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_embeddings_concatenate_endpoints() {
        let g = graph_from(&[("A", "B", vec![1.0]), ("C", "C", vec![1.0])]);
        let states = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let emb = encode_edges(&g, &states).unwrap();
        assert_eq!(emb[0].vector, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(emb[1].vector, vec![5.0, 6.0, 5.0, 6.0]);
        let m = edge_embedding_matrix(&g, &states).unwrap();
        assert_eq!(m.row(1), emb[1].vector.as_slice());
    }

    #[test]
    fn default_hidden_gives_512_wide_embeddings() {
        let g = random_graph(1, 5, 8, 4);
        let p = EncoderParams::init(4, &EncoderConfig::default(), 3).unwrap();
        assert_eq!(p.layers()[0].shape(), (256, 12));
        let emb = encode_edges(&g, &encode_nodes_full(&g, &p).unwrap()).unwrap();
        assert!(emb.iter().all(|e| e.vector.len() == 512 && e.vector.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let g = random_graph(2, 6, 12, 3);
        let p = small_params(3, 4, 1, 1);
        let plan = SamplePlan::full(&g);
        let (_, cache) = forward(&g, &p, &plan, ForwardOptions::default()).unwrap();
        let dw = encoder_backward(&g, &p, &plan, &cache, &DenseMatrix::zeros(12, 8)).unwrap();
        assert_eq!(dw[0].max_abs(), 0.0);
    }

    #[test]
    fn mismatched_sampling_realization_is_rejected() {
        let g = random_graph(3, 4, 40, 2);
        let p = small_params(2, 3, 1, 1);
        let plan_a = SamplePlan::sampled(&g, 2, 1, 0);
        let plan_b = SamplePlan::sampled(&g, 2, 1, 1);
        let (_, cache) = forward(&g, &p, &plan_a, ForwardOptions::default()).unwrap();
        let up = DenseMatrix::filled(40, 6, 1.0);
        assert!(encoder_backward(&g, &p, &plan_b, &cache, &up).is_err());
    }

    fn weight_gradcheck(seed: u64, depth: usize) -> f64 {
        let g = random_graph(seed, 6, 14, 3);
        let p = small_params(3, 4, depth, seed);
        let plan = SamplePlan::sampled(&g, 3, seed, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        let up_data: Vec<f64> = (0..14 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up = DenseMatrix::from_vec(14, 8, up_data).unwrap();
        let (_, cache) = forward(&g, &p, &plan, ForwardOptions::default()).unwrap();
        let dw = encoder_backward(&g, &p, &plan, &cache, &up).unwrap();
        let analytic: Vec<f64> = dw.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        max_relative_error(&p.flatten(), &analytic, |flat| {
            let q = p.with_flat(flat).unwrap();
            let (z, _) = forward(&g, &q, &plan, ForwardOptions::default()).unwrap();
            probe_loss(&g, &z, &up)
        })
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let err = weight_gradcheck(seed, 1);
            assert!(err < 1e-3, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn two_layer_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = weight_gradcheck(seed, 2);
            assert!(err < 1e-3, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn edge_weight_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let g = random_graph(seed, 5, 12, 3);
            let p = small_params(3, 4, 1, seed);
            let plan = SamplePlan::full(&g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
            let w0: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..1.0)).collect();
            let up = DenseMatrix::from_vec(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let opts = ForwardOptions {
                edge_weights: Some(&w0),
                roots: None,
            };
            let (_, cache) = forward(&g, &p, &plan, opts).unwrap();
            let grads = backward(&g, &p, &plan, &cache, &up, Some(&w0)).unwrap();
            let err = max_relative_error(&w0, grads.edge_weights.as_ref().unwrap(), |w| {
                let (z, _) = forward(&g, &p, &plan, ForwardOptions { edge_weights: Some(w), roots: None }).unwrap();
                z.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
            });
            assert!(err < 1e-3, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn parallel_edges_double_the_gradient() {
        let p = small_params(2, 3, 1, 4);
        let single = graph_from(&[("A", "B", vec![0.5, -0.2])]);
        let double = graph_from(&[("A", "B", vec![0.5, -0.2]), ("A", "B", vec![0.5, -0.2])]);
        let up_row = vec![0.3, -0.1, 0.7, 0.2, 0.5, -0.4];
        let grad = |g: &FlowGraph| {
            let plan = SamplePlan::full(g);
            let (_, cache) = forward(g, &p, &plan, ForwardOptions::default()).unwrap();
            let rows: Vec<Vec<f64>> = (0..g.edge_count()).map(|_| up_row.clone()).collect();
            encoder_backward(g, &p, &plan, &cache, &DenseMatrix::from_rows(&rows).unwrap()).unwrap()[0].clone()
        };
        let g1 = grad(&single);
        let g2 = grad(&double);
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_weights_are_bit_exact_and_zero_weights_empty_the_aggregate() {
        let g = random_graph(7, 6, 20, 3);
        let p = small_params(3, 5, 1, 2);
        let plan = SamplePlan::full(&g);
        let (plain, _) = forward(&g, &p, &plan, ForwardOptions::default()).unwrap();
        let ones = vec![1.0; 20];
        let (masked, _) = forward(&g, &p, &plan, ForwardOptions { edge_weights: Some(&ones), roots: None }).unwrap();
        assert_eq!(plain, masked);

        let zeros = vec![0.0; 20];
        let (zeroed, _) = forward(&g, &p, &plan, ForwardOptions { edge_weights: Some(&zeros), roots: None }).unwrap();
        let w = &p.layers()[0];
        let mut x = vec![1.0; 3];
        x.extend([0.0; 6]);
        let expect: Vec<f64> = w.matvec(&x).unwrap().into_iter().map(|v| v.max(0.0)).collect();
        for v in 0..g.node_count() {
            assert_eq!(zeroed.row(v), expect.as_slice());
        }
    }

    #[test]
    fn zero_weight_on_a_parallel_edge_halves_the_pair() {
        let g = graph_from(&[("A", "B", vec![1.0]), ("A", "B", vec![3.0])]);
        let p = EncoderParams::from_layers(1, 10, vec![DenseMatrix::filled(1, 3, 1.0)]).unwrap();
        let plan = SamplePlan::full(&g);
        let (plain, _) = forward(&g, &p, &plan, ForwardOptions::default()).unwrap();
        // 1 (self) + mean neighbour state 1 + mean edge feature 2
        assert_eq!(plain.row(0), &[4.0]);
        let (z, _) = forward(&g, &p, &plan, ForwardOptions { edge_weights: Some(&[0.0, 1.0]), roots: None }).unwrap();
        // 1 (self) + half the surviving state 0.5 + half the surviving feature 1.5
        assert_eq!(z.row(0), &[3.0]);
        let removed = SamplePlan::without_edges(&g, &[true, false]).unwrap();
        let (hard, _) = forward(&g, &p, &removed, ForwardOptions::default()).unwrap();
        // hard removal leaves the survivor alone in the mean: 1 + 1 + 3
        assert_eq!(hard.row(0), &[5.0]);
    }

    #[test]
    fn roots_restrict_computation_without_changing_results() {
        let g = random_graph(8, 10, 30, 3);
        let p = small_params(3, 4, 2, 5);
        let plan = SamplePlan::full(&g);
        let (all, _) = forward(&g, &p, &plan, ForwardOptions::default()).unwrap();
        let roots = [NodeId(2), NodeId(5)];
        let (some, _) = forward(&g, &p, &plan, ForwardOptions { edge_weights: None, roots: Some(&roots) }).unwrap();
        for r in roots {
            assert_eq!(all.row(r.0), some.row(r.0));
        }
    }

    #[test]
    fn large_sample_size_matches_full_neighbourhood() {
        let g = random_graph(9, 8, 40, 3);
        let max_deg = (0..g.node_count()).map(|v| g.degree(NodeId(v))).max().unwrap();
        let mut p = small_params(3, 4, 1, 5);
        p.sample_size = max_deg;
        assert_eq!(encode_nodes(&g, &p, 1, 0).unwrap(), encode_nodes_full(&g, &p).unwrap());
        assert_eq!(encode_nodes(&g, &p, 1, 0).unwrap(), encode_nodes(&g, &p, 2, 9).unwrap());
    }

    #[test]
    fn container_round_trip() {
        let p = small_params(3, 4, 2, 5);
        let mut c = TensorContainer::new("test");
        p.write_into(&mut c);
        assert_eq!(EncoderParams::read_from(&c).unwrap(), p);
    }

    proptest! {
        #[test]
        fn relabeling_nodes_preserves_edge_embeddings(seed in 0u64..200) {
            use rand::seq::SliceRandom;
            let g = random_graph(seed, 7, 25, 2);
            let p = small_params(2, 3, 1, seed);
            let mut perm: Vec<usize> = (0..g.node_count()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let h = g.permute_nodes(&perm).unwrap();
            let mut p_small = p.clone();
            p_small.sample_size = 2;
            let a = encode_edges(&g, &encode_nodes(&g, &p_small, 3, 1).unwrap()).unwrap();
            let b = encode_edges(&h, &encode_nodes(&h, &p_small, 3, 1).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn embeddings_have_twice_hidden_width(seed in 0u64..50, hidden in 1usize..9) {
            let g = random_graph(seed, 5, 10, 2);
            let p = small_params(2, hidden, 1, seed);
            let emb = encode_edges(&g, &encode_nodes(&g, &p, seed, 0).unwrap()).unwrap();
            prop_assert!(emb.iter().all(|e| e.vector.len() == 2 * hidden));
            prop_assert_eq!(emb.iter().map(|e| e.flow_id).collect::<Vec<_>>(), g.edges().iter().map(|e| e.flow_id).collect::<Vec<_>>());
        }
    }

    #[test]
    fn edge_ids_are_stable() {
        let g = random_graph(1, 4, 6, 2);
        assert_eq!(g.edge_by_flow(3), Some(EdgeId(3)));
    }
}
