use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::Value;

use super::config::PipelineConfig;
use super::manifest::{check_csv_header, read_json_document, Manifest, Run};
use super::pipeline::{
    assemble, class_targets, evaluate_xai, explain_targets, fit_detector_surrogate, prepare, train_detector, train_explainer,
    TrainedDetector, GNN_NAME, PG_NAME, RANDOM_NAME,
};
use crate::detect::{Confusion, DetectionMetrics, GbdtModel};
use crate::dgi::DgiModel;
use crate::error::{Error, Result};
use crate::explain::{EdgeExplainer, ExplainContext, ExplainerNet, GnnExplainer, RankedEdge, SurrogateHead};
use crate::flowdata::{parse_csv_reader, FlowDataset};
use crate::numcore::TensorContainer;
use crate::synthgen::generate_with_meta;
use crate::xaieval::{SweepTable, XaiSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Explain,
    EvalXai,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Explain => "explain",
            Command::EvalXai => "eval-xai",
            Command::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Command::Synth, Command::Train, Command::Explain, Command::EvalXai, Command::Report]
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown command {name:?}")))
    }

    /// Where the command's manifest is written.
    pub fn manifest_path(self, config: &PipelineConfig) -> PathBuf {
        let dir = match self {
            Command::Synth => &config.paths.data,
            Command::Train => &config.paths.models,
            _ => &config.paths.reports,
        };
        dir.join(format!("{}.manifest.json", self.name()))
    }
}

/// File layout under the configured directories.
pub mod layout {
    pub const GROUND_TRUTH: &str = "ground_truth.json";
    pub const SCALER: &str = "scaler.toml";
    pub const DGI: &str = "dgi.bin";
    pub const GBDT: &str = "gbdt.bin";
    pub const EMBEDDINGS: &str = "embeddings.bin";
    pub const SURROGATE: &str = "surrogate.json";
    pub const PGEXPLAINER: &str = "pgexplainer.bin";
    pub const METRICS: &str = "metrics.json";
    pub const DGI_LOG: &str = "dgi_log.csv";
    pub const EXPLANATIONS: &str = "explanations";
    pub const FIDELITY: &str = "fidelity.csv";
    pub const FIDELITY_CONTROL: &str = "fidelity_control.csv";
    pub const CLASS_DISTRIBUTION: &str = "class_distribution.json";
    pub const XAI_SUMMARY: &str = "xai_summary.json";
    pub const REPORT_MD: &str = "report.md";
    pub const REPORT_JSON: &str = "report.json";
}

/// Runs one command and writes its manifest, also when the command fails.
pub fn run_command(command: Command, config: &PipelineConfig) -> Result<Manifest> {
    config.validate()?;
    check_inputs(command, config)?;
    let mut run = Run::new(command.name(), config);
    let outcome = match command {
        Command::Synth => synth(&mut run, config),
        Command::Train => train(&mut run, config),
        Command::Explain => explain(&mut run, config),
        Command::EvalXai => eval_xai(&mut run, config),
        Command::Report => report(&mut run, config),
    };
    let path = command.manifest_path(config);
    match outcome {
        Ok(()) => run.finish(&path, None),
        Err(e) => {
            run.finish(&path, Some(&e))?;
            Err(e)
        }
    }
}

/// Reruns the command recorded in a manifest and checks every artifact hash.
pub fn rerun_manifest(path: &Path) -> Result<Manifest> {
    let recorded = Manifest::load(path)?;
    let command = Command::parse(&recorded.command)?;
    let fresh = match run_command(command, &recorded.config) {
        Ok(m) => m,
        Err(e) => {
            recorded.save(path)?;
            return Err(e);
        }
    };
    let diff = recorded.mismatches(&fresh);
    if !diff.is_empty() {
        fresh.save(&path.with_extension("rerun.json"))?;
        recorded.save(path)?;
        return Err(Error::Numeric(format!("rerun differs from manifest in {diff:?}")));
    }
    Ok(fresh)
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} not found; {hint}", path.display())))
    }
}

fn check_inputs(command: Command, config: &PipelineConfig) -> Result<()> {
    let models = &config.paths.models;
    let reports = &config.paths.reports;
    match command {
        Command::Synth => Ok(()),
        Command::Train => require(&config.flows_path(), "run `synth` or point paths.data at a flow CSV"),
        Command::Explain | Command::EvalXai => {
            require(&config.flows_path(), "the training data is needed to rebuild the graphs")?;
            for f in [layout::DGI, layout::GBDT, layout::SCALER] {
                require(&models.join(f), "run `train` first")?;
            }
            Ok(())
        }
        Command::Report => {
            require(&reports.join(layout::METRICS), "run `train` first")?;
            require(&reports.join(layout::FIDELITY), "run `eval-xai` first")?;
            require(&reports.join(layout::CLASS_DISTRIBUTION), "run `eval-xai` first")
        }
    }
}

fn synth(run: &mut Run, config: &PipelineConfig) -> Result<()> {
    let scenario = config.data.preset.config(config.seed);
    let data = generate_with_meta(&scenario)?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    run.write_csv(&config.flows_path(), &csv)?;
    run.write_json(&config.paths.data.join(layout::GROUND_TRUTH), &data.ground_truth)?;
    println!(
        "synth: {} flows ({:.2}% attacks) -> {}",
        data.dataset.len(),
        100.0 * data.dataset.attack_fraction(),
        config.flows_path().display()
    );
    Ok(())
}

pub fn load_flows(config: &PipelineConfig) -> Result<FlowDataset> {
    let path = config.flows_path();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    check_csv_header(&text, &path)?;
    parse_csv_reader(text.as_bytes(), &config.schema())
}

fn stamp(c: TensorContainer, run: &Run, config: &PipelineConfig) -> TensorContainer {
    c.with_meta("format_version", run.provenance.format_version as u64)
        .with_meta("config_hash", run.provenance.config_hash.clone())
        .with_meta("train_hash", config.train_hash())
        .with_meta("seed", config.seed)
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    split: &'static str,
    flows: usize,
    confusion: &'a Confusion,
    metrics: &'a DetectionMetrics,
}

fn train(run: &mut Run, config: &PipelineConfig) -> Result<()> {
    let dataset = load_flows(config)?;
    let det = train_detector(&dataset, config)?;
    let models = &config.paths.models;
    let scaler = format!("{}{}", run.provenance.csv_header(), det.data.scaler.to_toml());
    run.write(&models.join(layout::SCALER), scaler.as_bytes())?;
    run.write(&models.join(layout::DGI), &stamp(det.dgi.to_container(), run, config).to_bytes())?;
    run.write(&models.join(layout::GBDT), &stamp(det.gbdt.to_container()?, run, config).to_bytes())?;
    let mut emb = stamp(TensorContainer::new("flowsage.embeddings"), run, config).with_meta("split", "test");
    emb.push("test", det.test_embeddings.clone());
    run.write(&models.join(layout::EMBEDDINGS), &emb.to_bytes())?;
    let mut log = Vec::new();
    det.dgi.write_log(&mut log)?;
    run.write_csv(&config.paths.reports.join(layout::DGI_LOG), &log)?;
    let report = MetricsReport {
        split: "test",
        flows: det.data.test_graph.edge_count(),
        confusion: &det.test_confusion,
        metrics: &det.test_metrics,
    };
    run.write_json(&config.paths.reports.join(layout::METRICS), &report)?;
    let m = &det.test_metrics;
    println!(
        "train: test F1-macro {:.4}  accuracy {:.4}  DR {}",
        m.f1_macro,
        m.accuracy,
        m.detection_rate.map_or("n/a".into(), |d| format!("{d:.4}"))
    );
    Ok(())
}

fn load_stamped(path: &Path, kind: &str, config: &PipelineConfig) -> Result<TensorContainer> {
    let c = TensorContainer::load(path, kind)?;
    if c.meta_u64("format_version")? != super::manifest::FORMAT_VERSION as u64 {
        return Err(Error::format(path, "artifact format version mismatch"));
    }
    if c.meta_str("train_hash")? != config.train_hash() {
        return Err(Error::Config(format!(
            "{} was trained with different settings; rerun `train`",
            path.display()
        )));
    }
    Ok(c)
}

/// Rebuilds the trained detector from the stored models.
pub fn load_detector(config: &PipelineConfig) -> Result<TrainedDetector> {
    let models = &config.paths.models;
    let dgi = DgiModel::from_container(&load_stamped(&models.join(layout::DGI), crate::dgi::MODEL_KIND, config)?)?;
    let gbdt = GbdtModel::from_container(&load_stamped(&models.join(layout::GBDT), crate::detect::gbdt::MODEL_KIND, config)?)?;
    let data = prepare(&load_flows(config)?, config.data.train_fraction, config.seed)?;
    let scaler_path = models.join(layout::SCALER);
    let text = std::fs::read_to_string(&scaler_path).map_err(|e| Error::io(&scaler_path, e))?;
    check_csv_header(&text, &scaler_path)?;
    let stored = crate::flowdata::FeatureScaler::from_toml(&text, &scaler_path)?;
    if stored != data.scaler {
        return Err(Error::Config("flow data changed since `train`; rerun `train`".into()));
    }
    assemble(data, dgi, gbdt)
}

fn explainer_hash(config: &PipelineConfig) -> String {
    use sha2::{Digest, Sha256};
    let body = serde_json::json!({
        "train": config.train_hash(),
        "surrogate": config.surrogate,
        "explainer": config.explainer,
    });
    hex::encode(Sha256::digest(body.to_string().as_bytes()))
}

/// Fits the surrogate and trains PGExplainer, or loads both when a previous
/// command already did so with identical settings.
fn ensure_explainer(run: &mut Run, det: &TrainedDetector, config: &PipelineConfig) -> Result<(SurrogateHead, ExplainerNet)> {
    let models = &config.paths.models;
    let (sp, pp) = (models.join(layout::SURROGATE), models.join(layout::PGEXPLAINER));
    let want = explainer_hash(config);
    if sp.exists() && pp.exists() {
        let doc = read_json_document(&sp)?;
        let c = TensorContainer::load(&pp, crate::explain::pgexplainer::MODEL_KIND)?;
        if doc.get("explainer_hash").and_then(Value::as_str) == Some(want.as_str()) && c.meta_str("explainer_hash").ok() == Some(want.as_str()) {
            let head: SurrogateHead = serde_json::from_value(doc["head"].clone())?;
            info!("reusing surrogate and PGExplainer from {}", models.display());
            run.reuse(&sp);
            run.reuse(&pp);
            return Ok((head, ExplainerNet::from_container(&c)?));
        }
    }
    let head = fit_detector_surrogate(det, config)?;
    let net = train_explainer(det, &head, config)?;
    run.write_json(&sp, &serde_json::json!({ "explainer_hash": want, "head": head }))?;
    let c = stamp(net.to_container()?, run, config).with_meta("explainer_hash", want);
    run.write(&pp, &c.to_bytes())?;
    Ok((head, net))
}

#[derive(Serialize)]
struct ExplanationDoc<'a> {
    explainer: &'a str,
    flow_id: u64,
    target_class: &'a str,
    sparsity: f64,
    important: Vec<u64>,
    edges: Vec<RankedEdge>,
}

fn explain(run: &mut Run, config: &PipelineConfig) -> Result<()> {
    let det = load_detector(config)?;
    let (head, pg) = ensure_explainer(run, &det, config)?;
    let graph = &det.data.test_graph;
    let ctx = ExplainContext::new(graph, &det.dgi.encoder, &head)?;
    let opts = &config.explain;
    let targets = class_targets(&ctx, &opts.target_class, opts.max_targets);
    if targets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no correctly classified test flows of class {:?}",
            opts.target_class
        )));
    }
    let gnn = GnnExplainer::new(config.gnnexplainer.clone());
    let dir = config.paths.reports.join(layout::EXPLANATIONS);
    for (ex, sub) in [(&pg as &dyn EdgeExplainer, "pgexplainer"), (&gnn, "gnnexplainer")] {
        for mask in explain_targets(ex, &ctx, &targets, opts.sparsity)? {
            let crate::explain::MaskTarget::Edge(flow_id) = mask.target else {
                unreachable!("per-target explanation")
            };
            let doc = ExplanationDoc {
                explainer: ex.name(),
                flow_id,
                target_class: &opts.target_class,
                sparsity: opts.sparsity,
                important: mask.important.iter().map(|&e| graph.edge(e).flow_id).collect(),
                edges: mask.ranked(graph),
            };
            run.write_json(&dir.join(sub).join(format!("flow_{flow_id}.json")), &doc)?;
        }
    }
    println!(
        "explain: {} {} targets at sparsity {} -> {}",
        targets.len(),
        opts.target_class,
        opts.sparsity,
        dir.display()
    );
    Ok(())
}

fn table_csv(table: &SweepTable) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    table.write_csv(&mut out)?;
    Ok(out)
}

fn eval_xai(run: &mut Run, config: &PipelineConfig) -> Result<()> {
    let det = load_detector(config)?;
    let (head, pg) = ensure_explainer(run, &det, config)?;
    let xai = evaluate_xai(&det, &head, &pg, config)?;
    let reports = &config.paths.reports;
    run.write_csv(&reports.join(layout::FIDELITY), &table_csv(&xai.table)?)?;
    run.write_csv(&reports.join(layout::FIDELITY_CONTROL), &table_csv(&xai.control)?)?;
    let dists: Vec<Value> = xai
        .distributions
        .iter()
        .map(|(ex, d)| serde_json::json!({ "explainer": ex, "distribution": d }))
        .collect();
    let class_doc = serde_json::json!({ "sparsity": config.xai.class_sparsity, "targets_per_class": config.xai.class_targets, "results": dists });
    run.write_json(&reports.join(layout::CLASS_DISTRIBUTION), &class_doc)?;
    let pg_dists = xai.distributions.iter().filter(|(ex, _)| ex == PG_NAME).map(|(_, d)| d.clone()).collect();
    run.write_json(&reports.join(layout::XAI_SUMMARY), &XaiSummary::new(&xai.table, pg_dists))?;
    println!("eval-xai: {} rows -> {}", xai.table.rows.len(), reports.join(layout::FIDELITY).display());
    for m in crate::detect::Metric::ALL {
        println!(
            "  {:<8} PG >= GNN at {}/{} levels",
            m.name(),
            xai.table.levels_at_least(PG_NAME, GNN_NAME, m),
            xai.table.levels.len()
        );
    }
    Ok(())
}

fn read_sweep_csv(path: &Path) -> Result<Vec<(String, String, String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    check_csv_header(&text, path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok((r[0].to_string(), r[1].to_string(), r[2].to_string(), r[3].to_string()))
        })
        .collect()
}

fn report(run: &mut Run, config: &PipelineConfig) -> Result<()> {
    let reports = &config.paths.reports;
    let metrics = read_json_document(&reports.join(layout::METRICS))?;
    let classes = read_json_document(&reports.join(layout::CLASS_DISTRIBUTION))?;
    let rows = read_sweep_csv(&reports.join(layout::FIDELITY))?;
    let control_path = reports.join(layout::FIDELITY_CONTROL);
    let control = if control_path.exists() { read_sweep_csv(&control_path)? } else { Vec::new() };

    let grid = format!("{:?}", config.xai.levels);
    let mut md = String::new();
    md.push_str("# flowsage report\n\n");
    md.push_str(&format!("config hash: `{}`  seed: {}\n\n", run.provenance.config_hash, config.seed));
    md.push_str("## Detection (test split)\n\n");
    let m = &metrics["metrics"];
    md.push_str(&format!(
        "| F1-macro | Accuracy | DR |\n|---|---|---|\n| {} | {} | {} |\n\n",
        m["f1_macro"], m["accuracy"], m["detection_rate"]
    ));
    let c = &metrics["confusion"];
    md.push_str(&format!("confusion: TP {} FN {} FP {} TN {}\n\n", c["tp"], c["fn_"], c["fp"], c["tn"]));
    md.push_str("## Fidelity+\n\n");
    md.push_str(&format!("sparsity levels: {grid}\n\n"));
    md.push_str("| explainer | metric |");
    for l in &config.xai.levels {
        md.push_str(&format!(" {l} |"));
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(config.xai.levels.len()));
    md.push('\n');
    let mut keys: Vec<(String, String)> = Vec::new();
    for (ex, _, metric, _) in rows.iter().chain(&control) {
        if !keys.contains(&(ex.clone(), metric.clone())) {
            keys.push((ex.clone(), metric.clone()));
        }
    }
    for (ex, metric) in &keys {
        md.push_str(&format!("| {ex} | {metric} |"));
        for (_, _, _, v) in rows.iter().chain(&control).filter(|r| &r.0 == ex && &r.2 == metric) {
            let v: f64 = v.parse().map_err(|_| Error::format(reports.join(layout::FIDELITY), format!("bad value {v:?}")))?;
            md.push_str(&format!(" {v:.4} |"));
        }
        md.push('\n');
    }
    md.push_str("\n## Important-set class shares\n\n");
    md.push_str(&format!("sparsity {}\n\n", classes["sparsity"]));
    for r in classes["results"].as_array().map(Vec::as_slice).unwrap_or_default() {
        let d = &r["distribution"];
        let shares: Vec<String> = d["shares"]
            .as_object()
            .map(|o| o.iter().map(|(k, v)| format!("{k} {:.3}", v.as_f64().unwrap_or(f64::NAN))).collect())
            .unwrap_or_default();
        md.push_str(&format!(
            "- {} targets, {}: {} ({} edges)\n",
            d["target_class"].as_str().unwrap_or("?"),
            r["explainer"].as_str().unwrap_or("?"),
            shares.join(", "),
            d["total"]
        ));
    }
    run.write(&reports.join(layout::REPORT_MD), md.as_bytes())?;
    let doc = serde_json::json!({
        "sparsity_levels": config.xai.levels,
        "detection": metrics,
        "fidelity": rows.iter().chain(&control).map(|(e, s, m, v)| serde_json::json!({"explainer": e, "sparsity": s, "metric": m, "value": v})).collect::<Vec<_>>(),
        "class_distribution": classes,
        "control": RANDOM_NAME,
    });
    run.write_json(&reports.join(layout::REPORT_JSON), &doc)?;
    print!("{md}");
    Ok(())
}
