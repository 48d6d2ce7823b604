//! Explanation quality: sparsity, fidelity+, sparsity sweeps and the class
//! make-up of important sets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detect::{evaluate, DetectionMetrics, GbdtModel, Metric};
use crate::egsage::{edge_embedding_matrix, forward, EncoderParams, ForwardOptions};
use crate::error::{Error, Result};
use crate::explain::ExplanationMask;
use crate::netgraph::{FlowGraph, SamplePlan};

pub const DEFAULT_LEVELS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// The real detector: encoder embeddings fed to the boosted classifier.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub encoder: &'a EncoderParams,
    pub classifier: &'a GbdtModel,
}

impl<'a> Pipeline<'a> {
    pub fn new(encoder: &'a EncoderParams, classifier: &'a GbdtModel) -> Result<Self> {
        if classifier.n_features != encoder.embedding_dim() {
            return Err(Error::shape("pipeline classifier input", encoder.embedding_dim(), classifier.n_features));
        }
        Ok(Self { encoder, classifier })
    }

    /// Attack probability of every edge with `removed` edges taken out of
    /// message passing. The removed edges keep their own rows.
    pub fn probabilities(&self, graph: &FlowGraph, removed: Option<&[bool]>) -> Result<Vec<f64>> {
        let plan = match removed {
            Some(r) => SamplePlan::without_edges(graph, r)?,
            None => SamplePlan::full(graph),
        };
        let (states, _) = forward(graph, self.encoder, &plan, ForwardOptions::default())?;
        self.classifier.predict_matrix(&edge_embedding_matrix(graph, &states)?)
    }

    pub fn predict(&self, graph: &FlowGraph, removed: Option<&[bool]>) -> Result<Vec<bool>> {
        Ok(self.probabilities(graph, removed)?.into_iter().map(|p| p >= 0.5).collect())
    }

    /// Metrics over the labelled edges of `graph`.
    pub fn metrics(&self, graph: &FlowGraph, removed: Option<&[bool]>) -> Result<DetectionMetrics> {
        let pred = self.predict(graph, removed)?;
        let (mut p, mut y) = (Vec::new(), Vec::new());
        for (e, &guess) in graph.edges().iter().zip(&pred) {
            if e.label.is_some() {
                p.push(guess);
                y.push(e.is_attack());
            }
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("no labelled edges to score".into()));
        }
        evaluate(&p, &y)
    }
}

/// `(1/K)·Σ (1 − |m_i| / |M_i|)` from `(|m_i|, |M_i|)` pairs.
pub fn sparsity_from_counts(counts: &[(usize, usize)]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::InvalidInput("sparsity needs at least one graph".into()));
    }
    let mut total = 0.0;
    for &(m, all) in counts {
        if all == 0 {
            return Err(Error::InvalidInput("sparsity of an empty graph is undefined".into()));
        }
        if m > all {
            return Err(Error::InvalidInput(format!("important set of {m} exceeds the {all} candidate edges")));
        }
        total += 1.0 - m as f64 / all as f64;
    }
    Ok(total / counts.len() as f64)
}

pub fn sparsity(masks: &[&ExplanationMask]) -> Result<f64> {
    let counts: Vec<(usize, usize)> = masks.iter().map(|m| (m.important.len(), m.candidate_count())).collect();
    sparsity_from_counts(&counts)
}

/// `(1/K)·Σ [F(G_i) − F(G_i^{1−m_i})]` from `(before, after)` scores.
pub fn fidelity_from_scores(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("fidelity needs at least one graph".into()));
    }
    Ok(pairs.iter().map(|(before, after)| before - after).sum::<f64>() / pairs.len() as f64)
}

/// One evaluation graph with its (already binarised) explanation.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub graph: &'a FlowGraph,
    pub mask: &'a ExplanationMask,
}

fn check_case(case: &EvalCase<'_>) -> Result<()> {
    let n = case.graph.edge_count();
    match case.mask.important.iter().find(|e| e.0 >= n) {
        Some(e) => Err(Error::InvalidInput(format!("mask edge {} is not in a graph of {n} edges", e.0))),
        None => Ok(()),
    }
}

/// Fidelity+ for every metric at once; the unmasked scores are shared.
pub fn fidelity_plus_all(pipeline: &Pipeline<'_>, cases: &[EvalCase<'_>]) -> Result<BTreeMap<Metric, f64>> {
    let mut pairs: BTreeMap<Metric, Vec<(f64, f64)>> = BTreeMap::new();
    for case in cases {
        check_case(case)?;
        let before = pipeline.metrics(case.graph, None)?;
        let after = if case.mask.important.is_empty() {
            before
        } else {
            pipeline.metrics(case.graph, Some(&case.mask.removal_flags(case.graph)))?
        };
        for m in Metric::ALL {
            pairs.entry(m).or_default().push((before.get(m)?, after.get(m)?));
        }
    }
    Metric::ALL.iter().map(|&m| Ok((m, fidelity_from_scores(pairs.get(&m).map_or(&[][..], |v| v))?))).collect()
}

pub fn fidelity_plus(pipeline: &Pipeline<'_>, cases: &[EvalCase<'_>], metric: Metric) -> Result<f64> {
    Ok(fidelity_plus_all(pipeline, cases)?[&metric])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub explainer: String,
    pub sparsity: f64,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub levels: Vec<f64>,
    /// Number of evaluation graphs averaged per cell.
    pub graphs: usize,
    pub rows: Vec<SweepRow>,
}

/// Weighted masks of one explainer, one per evaluation graph.
#[derive(Debug, Clone)]
pub struct ExplainerMasks<'a> {
    pub name: String,
    pub masks: Vec<&'a ExplanationMask>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one sparsity level".into()));
    }
    if levels.iter().any(|l| !(0.0..1.0).contains(l)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!("sparsity levels must increase strictly within [0, 1): {levels:?}")));
    }
    Ok(())
}

/// Binarises every explainer's masks at each level and scores fidelity+
/// on all three metrics.
pub fn sweep(pipeline: &Pipeline<'_>, graphs: &[&FlowGraph], explainers: &[ExplainerMasks<'_>], levels: &[f64]) -> Result<SweepTable> {
    check_levels(levels)?;
    let before = graphs.iter().map(|g| pipeline.metrics(g, None)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(explainers.len() * levels.len() * 3);
    for ex in explainers {
        if ex.masks.len() != graphs.len() {
            return Err(Error::shape("sweep masks per graph", graphs.len(), ex.masks.len()));
        }
        for &level in levels {
            let mut pairs: BTreeMap<Metric, Vec<(f64, f64)>> = BTreeMap::new();
            for ((g, mask), b) in graphs.iter().zip(&ex.masks).zip(&before) {
                let bin = mask.at_sparsity(level)?;
                check_case(&EvalCase { graph: g, mask: &bin })?;
                let after = pipeline.metrics(g, Some(&bin.removal_flags(g)))?;
                for m in Metric::ALL {
                    pairs.entry(m).or_default().push((b.get(m)?, after.get(m)?));
                }
            }
            for m in Metric::ALL {
                rows.push(SweepRow {
                    explainer: ex.name.clone(),
                    sparsity: level,
                    metric: m,
                    value: fidelity_from_scores(&pairs[&m])?,
                });
            }
        }
    }
    Ok(SweepTable {
        levels: levels.to_vec(),
        graphs: graphs.len(),
        rows,
    })
}

impl SweepTable {
    pub fn value(&self, explainer: &str, sparsity: f64, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.explainer == explainer && r.sparsity == sparsity && r.metric == metric)
            .map(|r| r.value)
    }

    /// Levels at which `a` scores at least as high as `b` on `metric`.
    pub fn levels_at_least(&self, a: &str, b: &str, metric: Metric) -> usize {
        self.levels
            .iter()
            .filter(|&&l| matches!((self.value(a, l, metric), self.value(b, l, metric)), (Some(x), Some(y)) if x >= y))
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["explainer", "sparsity", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([r.explainer.clone(), r.sparsity.to_string(), r.metric.name().to_string(), r.value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("sweep csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub target_class: String,
    /// Distinct edges in the union of important sets.
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub shares: BTreeMap<String, f64>,
}

impl ClassDistribution {
    pub fn share(&self, class: &str) -> f64 {
        self.shares.get(class).copied().unwrap_or(0.0)
    }

    /// Most frequent class; ties go to the alphabetically first.
    pub fn modal(&self) -> &str {
        let mut best: Option<(&String, usize)> = None;
        for (c, &n) in &self.counts {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((c, n));
            }
        }
        best.map_or("", |(c, _)| c.as_str())
    }
}

/// Class counts over the union of the masks' important sets.
pub fn class_distribution(masks: &[ExplanationMask], graph: &FlowGraph, target_class: &str) -> Result<ClassDistribution> {
    let union: BTreeSet<usize> = masks.iter().flat_map(|m| m.important.iter().map(|e| e.0)).collect();
    if union.is_empty() {
        return Err(Error::InvalidInput("class distribution needs at least one important edge".into()));
    }
    if let Some(&e) = union.iter().find(|&&e| e >= graph.edge_count()) {
        return Err(Error::InvalidInput(format!("mask edge {e} is not in the graph")));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for &e in &union {
        let label = graph.edges()[e].label.as_ref().map_or("Unlabelled", |l| l.as_str());
        *counts.entry(label.to_string()).or_default() += 1;
    }
    let total = union.len();
    let shares = counts.iter().map(|(c, &n)| (c.clone(), n as f64 / total as f64)).collect();
    Ok(ClassDistribution {
        target_class: target_class.to_string(),
        total,
        counts,
        shares,
    })
}

/// JSON summary written next to the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XaiSummary {
    pub levels: Vec<f64>,
    pub graphs: usize,
    pub sweep: Vec<SweepRow>,
    pub distributions: Vec<ClassDistribution>,
}

impl XaiSummary {
    pub fn new(table: &SweepTable, distributions: Vec<ClassDistribution>) -> Self {
        Self {
            levels: table.levels.clone(),
            graphs: table.graphs,
            sweep: table.rows.clone(),
            distributions,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
