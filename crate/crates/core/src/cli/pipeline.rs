//! Library-level pipeline stages shared by the commands, the examples and the
//! integration tests.

use log::info;

use super::config::PipelineConfig;
use crate::detect::metrics::{best_threshold_f1, quantile_threshold};
use crate::detect::{confusion, fit_gbdt, fit_hbos, fit_iforest, fit_pca_detector, AnomalyDetector, Confusion, DetectionMetrics, GbdtModel};
use crate::dgi::{self, DgiModel};
use crate::egsage::{edge_embedding_matrix, encode_nodes_full};
use crate::error::{Error, Result};
use crate::explain::{
    fit_surrogate, train_pgexplainer, EdgeExplainer, ExplainContext, ExplainerNet, ExplanationMask, GnnExplainer, RandomExplainer,
    SurrogateHead,
};
use crate::flowdata::{apply_scaler, fit_scaler, split, FeatureScaler, FlowDataset};
use crate::netgraph::{build_graph, EdgeId, FlowGraph};
use crate::numcore::DenseMatrix;
use crate::xaieval::{class_distribution, sweep, ClassDistribution, ExplainerMasks, Pipeline, SweepTable};

pub const PG_NAME: &str = "PGExplainer";
pub const GNN_NAME: &str = "GNNExplainer";
pub const RANDOM_NAME: &str = "Random";

/// Scaled train/test splits and their graphs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scaler: FeatureScaler,
    pub train: FlowDataset,
    pub test: FlowDataset,
    pub train_graph: FlowGraph,
    pub test_graph: FlowGraph,
}

pub fn prepare(dataset: &FlowDataset, train_fraction: f64, seed: u64) -> Result<PreparedData> {
    let (train, test) = split(dataset, train_fraction, seed)?;
    let scaler = fit_scaler(&train)?;
    let train = apply_scaler(&scaler, &train)?;
    let test = apply_scaler(&scaler, &test)?;
    let train_graph = build_graph(&train)?;
    let test_graph = build_graph(&test)?;
    Ok(PreparedData {
        scaler,
        train,
        test,
        train_graph,
        test_graph,
    })
}

fn labels(graph: &FlowGraph) -> Vec<bool> {
    graph.edges().iter().map(|e| e.is_attack()).collect()
}

#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub data: PreparedData,
    pub dgi: DgiModel,
    pub gbdt: GbdtModel,
    pub train_embeddings: DenseMatrix,
    pub test_embeddings: DenseMatrix,
    pub test_confusion: Confusion,
    pub test_metrics: DetectionMetrics,
}

impl TrainedDetector {
    pub fn pipeline(&self) -> Result<Pipeline<'_>> {
        Pipeline::new(&self.dgi.encoder, &self.gbdt)
    }

    pub fn train_probabilities(&self) -> Result<Vec<f64>> {
        self.gbdt.predict_matrix(&self.train_embeddings)
    }
}

/// Embeddings of every edge of `graph` under the full neighbourhood.
pub fn embed(graph: &FlowGraph, model: &DgiModel) -> Result<DenseMatrix> {
    edge_embedding_matrix(graph, &encode_nodes_full(graph, &model.encoder)?)
}

/// Classifier fit and test evaluation on top of a trained encoder.
pub fn finish_detector(data: PreparedData, dgi: DgiModel, config: &PipelineConfig) -> Result<TrainedDetector> {
    let train_embeddings = embed(&data.train_graph, &dgi)?;
    let gbdt = fit_gbdt(&train_embeddings, &labels(&data.train_graph), &config.gbdt)?;
    assemble_with(data, dgi, gbdt, train_embeddings)
}

/// Rebuilds a detector from stored models without refitting anything.
pub fn assemble(data: PreparedData, dgi: DgiModel, gbdt: GbdtModel) -> Result<TrainedDetector> {
    let train_embeddings = embed(&data.train_graph, &dgi)?;
    assemble_with(data, dgi, gbdt, train_embeddings)
}

fn assemble_with(data: PreparedData, dgi: DgiModel, gbdt: GbdtModel, train_embeddings: DenseMatrix) -> Result<TrainedDetector> {
    let test_embeddings = embed(&data.test_graph, &dgi)?;
    let probs = gbdt.predict_matrix(&test_embeddings)?;
    let preds: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
    let test_confusion = confusion(&preds, &labels(&data.test_graph))?;
    let test_metrics = test_confusion.metrics();
    info!(
        "test f1-macro {:.4} accuracy {:.4} dr {:?}",
        test_metrics.f1_macro, test_metrics.accuracy, test_metrics.detection_rate
    );
    Ok(TrainedDetector {
        data,
        dgi,
        gbdt,
        train_embeddings,
        test_embeddings,
        test_confusion,
        test_metrics,
    })
}

/// split → scale → graphs → DGI → embeddings → GBDT → test metrics.
pub fn train_detector(dataset: &FlowDataset, config: &PipelineConfig) -> Result<TrainedDetector> {
    let data = prepare(dataset, config.data.train_fraction, config.seed)?;
    info!(
        "train graph {} nodes / {} edges, test graph {} nodes / {} edges",
        data.train_graph.node_count(),
        data.train_graph.edge_count(),
        data.test_graph.node_count(),
        data.test_graph.edge_count()
    );
    let model = dgi::train(&data.train_graph, &config.encoder, &config.dgi)?;
    info!(
        "dgi loss {:.4} -> {:.4}",
        model.loss_history.first().copied().unwrap_or(f64::NAN),
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    finish_detector(data, model, config)
}

pub const PCA_COMPONENTS: usize = 10;
pub const HBOS_BINS: usize = 10;
pub const IFOREST_TREES: usize = 100;
pub const IFOREST_SUBSAMPLE: usize = 256;

/// One unsupervised baseline scored on the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub name: &'static str,
    /// Flagging the top training-attack-fraction of scores.
    pub metrics: DetectionMetrics,
    /// Best F1-macro over every cut of the test scores.
    pub best_f1: f64,
}

/// PCA, HBOS and isolation forest fitted on the benign training embeddings.
pub fn evaluate_baselines(det: &TrainedDetector, seed: u64) -> Result<Vec<BaselineResult>> {
    let train_labels = labels(&det.data.train_graph);
    let test_labels = labels(&det.data.test_graph);
    let x = &det.train_embeddings;
    let benign: Vec<Vec<f64>> = (0..x.rows()).filter(|&r| !train_labels[r]).map(|r| x.row(r).to_vec()).collect();
    if benign.is_empty() {
        return Err(Error::InvalidInput("baselines need benign training edges".into()));
    }
    let benign = DenseMatrix::from_rows(&benign)?;
    let fraction = train_labels.iter().filter(|&&l| l).count() as f64 / train_labels.len() as f64;
    let detectors: Vec<Box<dyn AnomalyDetector>> = vec![
        Box::new(fit_pca_detector(&benign, PCA_COMPONENTS.min(benign.cols()))?),
        Box::new(fit_hbos(&benign, HBOS_BINS)?),
        Box::new(fit_iforest(&benign, IFOREST_TREES, IFOREST_SUBSAMPLE, seed)?),
    ];
    detectors
        .iter()
        .map(|d| {
            let threshold = quantile_threshold(&d.score_matrix(x)?, fraction)?;
            let scores = d.score_matrix(&det.test_embeddings)?;
            let preds: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
            let metrics = confusion(&preds, &test_labels)?.metrics();
            let (best_f1, _) = best_threshold_f1(&scores, &test_labels)?;
            info!("{} f1-macro {:.4} (best cut {:.4})", d.name(), metrics.f1_macro, best_f1);
            Ok(BaselineResult { name: d.name(), metrics, best_f1 })
        })
        .collect()
}

/// Surrogate distilled from the classifier on the training embeddings.
pub fn fit_detector_surrogate(det: &TrainedDetector, config: &PipelineConfig) -> Result<SurrogateHead> {
    let head = fit_surrogate(&det.train_embeddings, &det.train_probabilities()?, &config.surrogate)?;
    info!("surrogate mean abs deviation {:.4}", head.mean_abs_dev);
    Ok(head)
}

pub fn train_explainer(det: &TrainedDetector, surrogate: &SurrogateHead, config: &PipelineConfig) -> Result<ExplainerNet> {
    train_pgexplainer(&det.data.train_graph, &det.dgi.encoder, surrogate, &config.explainer)
}

/// Test edges of `class` that the surrogate classifies correctly.
pub fn class_targets(ctx: &ExplainContext<'_>, class: &str, limit: usize) -> Vec<EdgeId> {
    let probs = ctx.surrogate_probs();
    ctx.graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(e, edge)| {
            edge.label.as_ref().map(|l| l.as_str()) == Some(class) && (probs[*e] >= 0.5) == edge.is_attack()
        })
        .take(limit)
        .map(|(e, _)| EdgeId(e))
        .collect()
}

pub fn explain_targets(ex: &dyn EdgeExplainer, ctx: &ExplainContext<'_>, targets: &[EdgeId], sparsity: f64) -> Result<Vec<ExplanationMask>> {
    targets
        .iter()
        .map(|&t| ex.explain(ctx, ctx.graph.edge(t).flow_id, sparsity))
        .collect()
}

/// Fidelity sweeps and class distributions on the test graph.
#[derive(Debug, Clone)]
pub struct XaiRun {
    /// PGExplainer and GNNExplainer.
    pub table: SweepTable,
    /// The random-mask control on the same levels.
    pub control: SweepTable,
    /// One entry per explainer and class with at least one target.
    pub distributions: Vec<(String, ClassDistribution)>,
}

pub fn evaluate_xai(det: &TrainedDetector, surrogate: &SurrogateHead, pg: &ExplainerNet, config: &PipelineConfig) -> Result<XaiRun> {
    let graph = &det.data.test_graph;
    let ctx = ExplainContext::new(graph, &det.dgi.encoder, surrogate)?;
    let gnn = GnnExplainer::new(config.gnnexplainer.clone());
    let all: Vec<EdgeId> = (0..graph.edge_count()).map(EdgeId).collect();
    let levels = &config.xai.levels;
    let pg_mask = pg.global_mask(&ctx, &all, levels[0])?;
    info!("pg global mask done");
    let gnn_mask = gnn.global_mask(&ctx, &all, levels[0])?;
    info!("gnn global mask done");
    let random_mask = RandomExplainer { seed: config.seed }.global_mask(graph, levels[0])?;
    let pipeline = det.pipeline()?;
    let table = sweep(
        &pipeline,
        &[graph],
        &[
            ExplainerMasks { name: PG_NAME.into(), masks: vec![&pg_mask] },
            ExplainerMasks { name: GNN_NAME.into(), masks: vec![&gnn_mask] },
        ],
        levels,
    )?;
    let control = sweep(
        &pipeline,
        &[graph],
        &[ExplainerMasks { name: RANDOM_NAME.into(), masks: vec![&random_mask] }],
        levels,
    )?;

    let mut classes: Vec<String> = graph.edges().iter().filter_map(|e| e.label.as_ref().map(|l| l.as_str().to_string())).collect();
    classes.sort();
    classes.dedup();
    let mut distributions = Vec::new();
    for class in &classes {
        let targets = class_targets(&ctx, class, config.xai.class_targets);
        if targets.is_empty() {
            continue;
        }
        for ex in [pg as &dyn EdgeExplainer, &gnn] {
            let masks = explain_targets(ex, &ctx, &targets, config.xai.class_sparsity)?;
            distributions.push((ex.name().to_string(), class_distribution(&masks, graph, class)?));
        }
    }
    Ok(XaiRun { table, control, distributions })
}
