//! Attributed flow multigraph, deterministic neighbour sampling, and the
//! graph binary format.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{FlowDataset, FlowLabel};
use crate::numcore::container::ByteReader;

pub const GRAPH_MAGIC: &[u8; 8] = b"FSAGEGRF";
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow_id: u64,
    pub label: Option<FlowLabel>,
}

impl FlowEdge {
    pub fn is_loop(&self) -> bool {
        self.src == self.dst
    }

    pub fn is_attack(&self) -> bool {
        self.label.as_ref().is_some_and(FlowLabel::is_attack)
    }
}

/// One edge seen from one of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Incidence {
    pub neighbor: NodeId,
    pub edge: EdgeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    node_keys: Vec<String>,
    feature_dim: usize,
    edges: Vec<FlowEdge>,
    edge_features: Vec<f64>,
    adjacency: Vec<Vec<Incidence>>,
}

impl FlowGraph {
    /// Assembles a graph from parts, validating shapes and rebuilding the
    /// adjacency lists.
    pub fn from_parts(node_keys: Vec<String>, feature_dim: usize, edges: Vec<FlowEdge>, edge_features: Vec<f64>) -> Result<Self> {
        if edge_features.len() != edges.len() * feature_dim {
            return Err(Error::shape("FlowGraph::from_parts", edges.len() * feature_dim, edge_features.len()));
        }
        if let Some(i) = edge_features.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("edge feature of flow {}", edges[i / feature_dim.max(1)].flow_id)));
        }
        let n = node_keys.len();
        if let Some(e) = edges.iter().find(|e| e.src.0 >= n || e.dst.0 >= n) {
            return Err(Error::InvalidInput(format!("edge of flow {} references a missing node", e.flow_id)));
        }
        let mut g = Self {
            node_keys,
            feature_dim,
            edges,
            edge_features,
            adjacency: Vec::new(),
        };
        g.adjacency = g.rebuild_adjacency();
        Ok(g)
    }

    /// Incidence lists in edge-index order. A loop appears once in its node's list.
    pub fn rebuild_adjacency(&self) -> Vec<Vec<Incidence>> {
        let mut adj = vec![Vec::new(); self.node_keys.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.src.0].push(Incidence {
                neighbor: e.dst,
                edge: EdgeId(i),
            });
            if !e.is_loop() {
                adj[e.dst.0].push(Incidence {
                    neighbor: e.src,
                    edge: EdgeId(i),
                });
            }
        }
        adj
    }

    pub fn node_count(&self) -> usize {
        self.node_keys.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn node_key(&self, v: NodeId) -> &str {
        &self.node_keys[v.0]
    }

    pub fn node_keys(&self) -> &[String] {
        &self.node_keys
    }

    pub fn find_node(&self, key: &str) -> Option<NodeId> {
        self.node_keys.binary_search_by(|k| k.as_str().cmp(key)).ok().map(NodeId)
    }

    /// Node input features: all ones, one entry per edge feature.
    pub fn node_features(&self, _v: NodeId) -> Vec<f64> {
        vec![1.0; self.feature_dim]
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &FlowEdge {
        &self.edges[e.0]
    }

    pub fn edge_features(&self, e: EdgeId) -> &[f64] {
        &self.edge_features[e.0 * self.feature_dim..(e.0 + 1) * self.feature_dim]
    }

    pub fn all_edge_features(&self) -> &[f64] {
        &self.edge_features
    }

    pub fn incident(&self, v: NodeId) -> &[Incidence] {
        &self.adjacency[v.0]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.0].len()
    }

    pub fn loop_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_loop()).count()
    }

    pub fn edge_by_flow(&self, flow_id: u64) -> Option<EdgeId> {
        self.edges.binary_search_by_key(&flow_id, |e| e.flow_id).ok().map(EdgeId)
    }

    /// Same topology with edge feature rows replaced.
    pub fn with_edge_features(&self, edge_features: Vec<f64>) -> Result<Self> {
        if edge_features.len() != self.edge_features.len() {
            return Err(Error::shape("FlowGraph::with_edge_features", self.edge_features.len(), edge_features.len()));
        }
        Ok(Self {
            edge_features,
            ..self.clone()
        })
    }

    /// Renumbers nodes: old node `i` becomes `perm[i]`. Keys travel with
    /// their nodes, so the lexicographic ordering no longer holds afterwards.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        let distinct: BTreeSet<usize> = perm.iter().copied().collect();
        if perm.len() != n || distinct.len() != n || distinct.iter().next_back().is_some_and(|&m| m >= n) {
            return Err(Error::InvalidInput("node permutation is not a bijection".into()));
        }
        let mut keys = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            keys[new] = self.node_keys[old].clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| FlowEdge {
                src: NodeId(perm[e.src.0]),
                dst: NodeId(perm[e.dst.0]),
                ..e.clone()
            })
            .collect();
        Self::from_parts(keys, self.feature_dim, edges, self.edge_features.clone())
    }

    /// Edges labelled as attacks, for quick summaries.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            let k = e.label.as_ref().map(|l| l.to_string()).unwrap_or_else(|| "unlabeled".into());
            *m.entry(k).or_insert(0) += 1;
        }
        m
    }
}

/// One node per distinct endpoint (sorted lexicographically), one edge per
/// record (sorted by flow id), directed src → dst.
pub fn build_graph(records: &FlowDataset) -> Result<FlowGraph> {
    let d = records.feature_dim();
    let keys: BTreeSet<&str> = records
        .records
        .iter()
        .flat_map(|r| [r.src_endpoint.as_str(), r.dst_endpoint.as_str()])
        .collect();
    let node_keys: Vec<String> = keys.into_iter().map(String::from).collect();
    let index = |k: &str| NodeId(node_keys.binary_search_by(|x| x.as_str().cmp(k)).expect("key collected"));

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records.records[i].flow_id);
    let mut edges = Vec::with_capacity(records.len());
    let mut feats = Vec::with_capacity(records.len() * d);
    for i in order {
        let r = &records.records[i];
        if r.features.len() != d {
            return Err(Error::shape("build_graph", d, format!("{} (flow {})", r.features.len(), r.flow_id)));
        }
        if edges.last().is_some_and(|e: &FlowEdge| e.flow_id == r.flow_id) {
            return Err(Error::InvalidInput(format!("duplicate flow id {}", r.flow_id)));
        }
        edges.push(FlowEdge {
            src: index(&r.src_endpoint),
            dst: index(&r.dst_endpoint),
            flow_id: r.flow_id,
            label: r.label.clone(),
        });
        feats.extend_from_slice(&r.features);
    }
    FlowGraph::from_parts(node_keys, d, edges, feats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub center: NodeId,
    pub entries: Vec<Incidence>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Counter-based stream key: depends only on (seed, node key, epoch), so
/// samplers need no shared state and node renumbering does not move samples.
pub fn stream_key(seed: u64, node_key: &str, epoch: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ fnv1a(node_key.as_bytes())) ^ epoch)
}

pub fn sample_neighbors(graph: &FlowGraph, v: NodeId, sample_size: usize, seed: u64, epoch: u64) -> Result<NeighborSample> {
    if v.0 >= graph.node_count() {
        return Err(Error::InvalidInput(format!("node {} not in graph", v.0)));
    }
    let all = graph.incident(v);
    let entries = if all.len() <= sample_size {
        all.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_key(seed, graph.node_key(v), epoch));
        let mut picked = rand::seq::index::sample(&mut rng, all.len(), sample_size).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| all[i]).collect()
    };
    Ok(NeighborSample { center: v, entries })
}

/// Neighbourhoods used for one forward pass over the whole graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    neighborhoods: Vec<Vec<Incidence>>,
    fingerprint: u64,
}

impl SamplePlan {
    fn from_neighborhoods(neighborhoods: Vec<Vec<Incidence>>) -> Self {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for (v, list) in neighborhoods.iter().enumerate() {
            h = splitmix64(h ^ v as u64 ^ ((list.len() as u64) << 32));
            for inc in list {
                h = splitmix64(h ^ inc.edge.0 as u64);
            }
        }
        Self {
            neighborhoods,
            fingerprint: h,
        }
    }

    pub fn sampled(graph: &FlowGraph, sample_size: usize, seed: u64, epoch: u64) -> Self {
        let lists = (0..graph.node_count())
            .map(|v| sample_neighbors(graph, NodeId(v), sample_size, seed, epoch).expect("node in range").entries)
            .collect();
        Self::from_neighborhoods(lists)
    }

    pub fn full(graph: &FlowGraph) -> Self {
        Self::from_neighborhoods(graph.adjacency.clone())
    }

    /// Full neighbourhoods with the flagged edges dropped from message passing.
    pub fn without_edges(graph: &FlowGraph, removed: &[bool]) -> Result<Self> {
        if removed.len() != graph.edge_count() {
            return Err(Error::shape("SamplePlan::without_edges", graph.edge_count(), removed.len()));
        }
        let lists = graph
            .adjacency
            .iter()
            .map(|l| l.iter().copied().filter(|inc| !removed[inc.edge.0]).collect())
            .collect();
        Ok(Self::from_neighborhoods(lists))
    }

    pub fn neighborhood(&self, v: NodeId) -> &[Incidence] {
        &self.neighborhoods[v.0]
    }

    pub fn node_count(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Edges whose messages can reach the embedding of `target` under a
/// `depth`-layer encoder: all edges incident to nodes within `depth - 1`
/// hops of either endpoint. Sorted by edge index.
pub fn computation_subgraph(graph: &FlowGraph, target: EdgeId, depth: usize) -> Vec<EdgeId> {
    let e = graph.edge(target);
    let mut frontier: BTreeSet<NodeId> = [e.src, e.dst].into_iter().collect();
    let mut seen = frontier.clone();
    for _ in 1..depth.max(1) {
        let mut next = BTreeSet::new();
        for &v in &frontier {
            for inc in graph.incident(v) {
                if seen.insert(inc.neighbor) {
                    next.insert(inc.neighbor);
                }
            }
        }
        frontier = next;
    }
    let edges: BTreeSet<EdgeId> = seen.iter().flat_map(|&v| graph.incident(v).iter().map(|i| i.edge)).collect();
    edges.into_iter().collect()
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl FlowGraph {
    /// Layout: magic, u32 version, u64 node/edge counts, u64 feature dim,
    /// node keys, edge table (src, dst, flow id, label tag [+ name]), then the
    /// edge feature block as little-endian f64. Strings are u32-length-prefixed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.edges.len() * (32 + 8 * self.feature_dim));
        out.extend_from_slice(GRAPH_MAGIC);
        out.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
        for n in [self.node_keys.len(), self.edges.len(), self.feature_dim] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for k in &self.node_keys {
            write_str(&mut out, k);
        }
        for e in &self.edges {
            for x in [e.src.0 as u64, e.dst.0 as u64, e.flow_id] {
                out.extend_from_slice(&x.to_le_bytes());
            }
            match &e.label {
                None => out.push(0),
                Some(FlowLabel::Benign) => out.push(1),
                Some(FlowLabel::Attack(name)) => {
                    out.push(2);
                    write_str(&mut out, name);
                }
            }
        }
        for x in &self.edge_features {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, origin };
        if r.take(8)? != GRAPH_MAGIC {
            return Err(Error::format(origin, "not a flow graph file (bad magic)"));
        }
        let version = r.u32()?;
        if version != GRAPH_VERSION {
            return Err(Error::format(origin, format!("graph format version {version} (expected {GRAPH_VERSION})")));
        }
        let n = r.u64()? as usize;
        let m = r.u64()? as usize;
        let d = r.u64()? as usize;
        let node_keys = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let src = NodeId(r.u64()? as usize);
            let dst = NodeId(r.u64()? as usize);
            let flow_id = r.u64()?;
            let label = match r.take(1)?[0] {
                0 => None,
                1 => Some(FlowLabel::Benign),
                2 => Some(FlowLabel::Attack(r.string()?)),
                t => return Err(Error::format(origin, format!("unknown label tag {t}"))),
            };
            edges.push(FlowEdge { src, dst, flow_id, label });
        }
        let feats = (0..m * d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after graph payload"));
        }
        Self::from_parts(node_keys, d, edges, feats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn debug_json(&self) -> String {
        #[derive(Serialize)]
        struct Edge<'a> {
            flow_id: u64,
            src: &'a str,
            dst: &'a str,
            label: Option<String>,
            features: &'a [f64],
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            format_version: u32,
            feature_dim: usize,
            nodes: &'a [String],
            edges: Vec<Edge<'a>>,
        }
        let edges = (0..self.edge_count())
            .map(|i| {
                let e = &self.edges[i];
                Edge {
                    flow_id: e.flow_id,
                    src: &self.node_keys[e.src.0],
                    dst: &self.node_keys[e.dst.0],
                    label: e.label.as_ref().map(|l| l.to_string()),
                    features: self.edge_features(EdgeId(i)),
                }
            })
            .collect();
        serde_json::to_string_pretty(&Dump {
            format_version: GRAPH_VERSION,
            feature_dim: self.feature_dim,
            nodes: &self.node_keys,
            edges,
        })
        .expect("graph dump serialises")
    }
}
