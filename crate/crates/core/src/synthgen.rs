//! Seeded synthetic flow datasets with planted attack motifs and a
//! ground-truth sidecar naming the planted edges of every attack instance.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{FlowDataset, FlowLabel, FlowRecord, FlowSchema, NodeKey};

pub const BASE_FEATURE_DIM: usize = 8;
pub const GROUND_TRUTH_VERSION: u32 = 1;
pub const DEFAULT_C2_HUB: &str = "203.0.113.50";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackKind {
    Bot,
    Infiltration,
    DDoS,
    BruteForce,
}

impl AttackKind {
    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Bot => "Bot",
            AttackKind::Infiltration => "Infiltration",
            AttackKind::DDoS => "DDoS",
            AttackKind::BruteForce => "BruteForce",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub count: usize,
    /// Endpoint where the motif converges: C2 server for Bot, victim for
    /// DDoS/BruteForce, entry point for Infiltration.
    #[serde(default)]
    pub hub: Option<String>,
    /// Number of participating hosts besides the hub (infected clients, flood
    /// sources, or chain length).
    #[serde(default)]
    pub participants: Option<usize>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, count: usize) -> Self {
        Self {
            kind,
            count,
            hub: None,
            participants: None,
        }
    }

    pub fn with_hub(mut self, hub: impl Into<String>) -> Self {
        self.hub = Some(hub.into());
        self
    }

    fn default_participants(&self) -> usize {
        match self.kind {
            AttackKind::Bot => 12,
            AttackKind::Infiltration => 4,
            AttackKind::DDoS => 24,
            AttackKind::BruteForce => 1,
        }
    }

    fn default_hub(&self, index: usize) -> String {
        match self.kind {
            AttackKind::Bot if index == 0 => DEFAULT_C2_HUB.into(),
            AttackKind::Bot => format!("203.0.113.{}", 50 + index),
            AttackKind::Infiltration => format!("198.51.100.{}", 23 + index),
            AttackKind::DDoS => format!("10.9.0.{}", 1 + index),
            AttackKind::BruteForce => format!("10.9.1.{}", 22 + index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// `None` derives the benign count from `attack_fraction`.
    pub n_benign: Option<usize>,
    pub attacks: Vec<AttackSpec>,
    pub n_hosts: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub attack_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_benign: None,
            attacks: Vec::new(),
            n_hosts: 200,
            feature_dim: BASE_FEATURE_DIM,
            seed: 0,
            attack_fraction: 0.12,
        }
    }
}

/// Named scenario presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Benign traffic with a Bot star and an Infiltration chain, 10k flows.
    BotInfiltration,
    /// All four motifs, 20k flows at 12% attacks.
    Benchmark,
    /// 1k flows for quick experiments.
    Small,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bot-infiltration" => Ok(Preset::BotInfiltration),
            "benchmark" => Ok(Preset::Benchmark),
            "small" => Ok(Preset::Small),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected bot-infiltration, benchmark or small)"
            ))),
        }
    }
}

impl Preset {
    pub fn config(self, seed: u64) -> ScenarioConfig {
        use AttackKind::*;
        let attacks = match self {
            Preset::BotInfiltration => vec![AttackSpec::new(Bot, 800), AttackSpec::new(Infiltration, 400)],
            Preset::Benchmark => vec![
                AttackSpec::new(Bot, 1000),
                AttackSpec::new(Infiltration, 400),
                AttackSpec::new(DDoS, 600),
                AttackSpec::new(BruteForce, 400),
            ],
            Preset::Small => vec![AttackSpec::new(Bot, 80), AttackSpec::new(Infiltration, 40)],
        };
        ScenarioConfig {
            attacks,
            n_hosts: if self == Preset::Small { 40 } else { 200 },
            seed,
            ..ScenarioConfig::default()
        }
    }
}

impl ScenarioConfig {
    /// Schema of the CSV this scenario emits, with noise columns appended up to
    /// `feature_dim`.
    pub fn schema(&self) -> FlowSchema {
        let mut schema = FlowSchema::default();
        for k in 0..self.feature_dim.saturating_sub(BASE_FEATURE_DIM) {
            schema.numeric_columns.push(format!("NOISE_{k}"));
        }
        schema
    }

    pub fn n_attack(&self) -> usize {
        self.attacks.iter().map(|a| a.count).sum()
    }

    pub fn resolved_benign(&self) -> usize {
        self.n_benign.unwrap_or_else(|| {
            let f = self.attack_fraction;
            (self.n_attack() as f64 * (1.0 - f) / f).round() as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackInstance {
    pub kind: AttackKind,
    pub hub: String,
    pub hosts: Vec<String>,
    pub flow_ids: Vec<u64>,
}

/// Sidecar document: attack instance name → planted edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub seed: u64,
    pub instances: BTreeMap<String, AttackInstance>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: Self = serde_json::from_str(&text)?;
        if gt.format_version != GROUND_TRUTH_VERSION {
            return Err(Error::format(path, format!("ground truth version {}", gt.format_version)));
        }
        Ok(gt)
    }

    pub fn flows_of(&self, kind: AttackKind) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .instances
            .values()
            .filter(|i| i.kind == kind)
            .flat_map(|i| i.flow_ids.iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Log-space location/scale of (bytes, packets, duration) plus the
/// response ratio and transport protocol.
#[derive(Debug, Clone, Copy)]
struct FlowProfile {
    mu: [f64; 3],
    sigma: [f64; 3],
    out_ratio: f64,
    protocol: u8,
    dst_port: u16,
}

const fn profile(mu: [f64; 3], sigma: [f64; 3], out_ratio: f64, protocol: u8, dst_port: u16) -> FlowProfile {
    FlowProfile {
        mu,
        sigma,
        out_ratio,
        protocol,
        dst_port,
    }
}

const WEB: FlowProfile = profile([8.0, 2.8, 6.0], [1.0, 0.6, 1.2], 2.0, 6, 443);
const DNS: FlowProfile = profile([4.4, 0.3, 1.0], [0.3, 0.2, 0.6], 0.8, 17, 53);
const APP: FlowProfile = profile([7.0, 2.2, 5.0], [0.9, 0.5, 1.0], -0.5, 6, 8080);
const BOT: FlowProfile = profile([6.2, 1.8, 3.0], [0.12, 0.1, 0.2], 0.3, 6, 8443);
const INFILTRATION: FlowProfile = profile([10.5, 4.0, 7.5], [0.6, 0.4, 0.5], -2.0, 6, 445);
const DDOS: FlowProfile = profile([3.6, 0.0, 0.3], [0.15, 0.05, 0.3], -6.0, 17, 80);
const BRUTE: FlowProfile = profile([7.3, 2.6, 5.2], [0.1, 0.08, 0.15], 0.1, 6, 22);

/// Correlation between log-bytes, log-packets and log-duration.
const CHOLESKY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.8, 0.6, 0.0], [0.5, 0.166_666_666_666_666_66, 0.849_836_585_598_797_4]];

struct Draft {
    src: String,
    dst: String,
    src_port: u16,
    dst_port: u16,
    features: Vec<f64>,
    label: FlowLabel,
    instance: Option<String>,
}

fn draw(rng: &mut ChaCha8Rng, p: &FlowProfile, noise_dims: usize) -> Vec<f64> {
    let n: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let mut c = [0.0; 3];
    for (i, row) in CHOLESKY.iter().enumerate() {
        c[i] = row.iter().zip(&n).map(|(l, x)| l * x).sum();
    }
    let in_bytes = (p.mu[0] + p.sigma[0] * c[0]).exp().round().max(1.0);
    let in_pkts = (p.mu[1] + p.sigma[1] * c[1]).exp().round().max(1.0);
    let duration = (p.mu[2] + p.sigma[2] * c[2]).exp().round();
    let ratio_noise: f64 = rng.sample(StandardNormal);
    let out_bytes = (in_bytes * (p.out_ratio + 0.3 * ratio_noise).exp()).round();
    let out_pkts = (in_pkts * (0.5 * p.out_ratio + 0.2 * ratio_noise).exp()).round();
    let mut f = vec![in_bytes, out_bytes, in_pkts, out_pkts, duration];
    for _ in 0..noise_dims {
        let x: f64 = rng.sample(StandardNormal);
        f.push((x * 1e6).round() / 1e6);
    }
    f.extend([6u8, 17, 1].map(|proto| if proto == p.protocol { 1.0 } else { 0.0 }));
    f
}

fn host_addr(i: usize) -> String {
    format!("10.0.{}.{}", i / 250, i % 250 + 1)
}

/// Per-flow columns that are written to CSV but are not model features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowMeta {
    pub start_ms: u64,
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: FlowDataset,
    pub ground_truth: GroundTruth,
    pub meta: Vec<FlowMeta>,
}

impl SyntheticData {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_dataset_csv(&self.dataset, &self.meta, writer)
    }
}

pub fn generate(config: &ScenarioConfig) -> Result<(FlowDataset, GroundTruth)> {
    let data = generate_with_meta(config)?;
    Ok((data.dataset, data.ground_truth))
}

pub fn generate_with_meta(config: &ScenarioConfig) -> Result<SyntheticData> {
    if config.n_hosts < 4 {
        return Err(Error::InvalidInput(format!("n_hosts must be at least 4, got {}", config.n_hosts)));
    }
    if config.feature_dim < BASE_FEATURE_DIM {
        return Err(Error::InvalidInput(format!(
            "feature_dim must be at least {BASE_FEATURE_DIM}, got {}",
            config.feature_dim
        )));
    }
    if config.n_benign.is_none() && !(config.attack_fraction > 0.0 && config.attack_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "attack_fraction must be in (0, 1), got {}",
            config.attack_fraction
        )));
    }
    let noise_dims = config.feature_dim - BASE_FEATURE_DIM;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_servers = (config.n_hosts / 8).max(1);
    let servers: Vec<usize> = (0..n_servers).collect();
    let mut clients: Vec<usize> = (n_servers..config.n_hosts).collect();
    let service = |s: usize| match s % 3 {
        0 => &WEB,
        1 => &DNS,
        _ => &APP,
    };

    let mut drafts: Vec<Draft> = Vec::new();
    let n_benign = config.resolved_benign();
    for _ in 0..n_benign {
        let c = clients[rng.random_range(0..clients.len())];
        let s = servers[rng.random_range(0..servers.len())];
        drafts.push(Draft {
            src: host_addr(c),
            dst: host_addr(s),
            src_port: rng.random_range(49152..=65535),
            dst_port: service(s).dst_port,
            features: draw(&mut rng, service(s), noise_dims),
            label: FlowLabel::Benign,
            instance: None,
        });
    }

    // Internal hosts taking part in attacks are drawn without replacement so
    // motifs do not overlap.
    clients.shuffle(&mut rng);
    let mut pool = clients.into_iter();
    let mut instances = BTreeMap::new();
    let mut kind_index: BTreeMap<AttackKind, usize> = BTreeMap::new();
    for spec in &config.attacks {
        let idx = *kind_index.entry(spec.kind).and_modify(|i| *i += 1).or_insert(0);
        let name = format!("{}#{idx}", spec.kind);
        let hub = spec.hub.clone().unwrap_or_else(|| spec.default_hub(idx));
        let participants = spec.participants.unwrap_or_else(|| spec.default_participants());
        if spec.count == 0 {
            continue;
        }
        if participants == 0 {
            return Err(Error::InvalidInput(format!("{name}: participants must be positive")));
        }
        let mut take_internal = |n: usize| -> Result<Vec<String>> {
            let hosts: Vec<String> = pool.by_ref().take(n).map(host_addr).collect();
            if hosts.len() < n {
                return Err(Error::InvalidInput(format!(
                    "{name}: needs {n} distinct client hosts, not enough remain of n_hosts={}",
                    config.n_hosts
                )));
            }
            Ok(hosts)
        };
        let (hosts, edges, prof): (Vec<String>, Vec<(String, String)>, &FlowProfile) = match spec.kind {
            AttackKind::Bot => {
                let hosts = take_internal(participants)?;
                let edges = hosts.iter().map(|h| (h.clone(), hub.clone())).collect();
                (hosts, edges, &BOT)
            }
            AttackKind::Infiltration => {
                let hosts = take_internal(participants)?;
                let mut path = vec![hub.clone()];
                path.extend(hosts.iter().cloned());
                let edges = path.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
                (hosts, edges, &INFILTRATION)
            }
            AttackKind::DDoS => {
                let hosts: Vec<String> = (0..participants)
                    .map(|k| format!("198.18.{}.{}", idx * 4 + k / 250, k % 250 + 1))
                    .collect();
                let edges = hosts.iter().map(|h| (h.clone(), hub.clone())).collect();
                (hosts, edges, &DDOS)
            }
            AttackKind::BruteForce => {
                let hosts: Vec<String> = (0..participants).map(|k| format!("192.0.2.{}", 66 + idx * 8 + k)).collect();
                let edges = hosts.iter().map(|h| (h.clone(), hub.clone())).collect();
                (hosts, edges, &BRUTE)
            }
        };
        for k in 0..spec.count {
            // Chains are walked hop by hop; stars pick a random spoke per flow.
            let (src, dst) = if spec.kind == AttackKind::Infiltration {
                edges[k % edges.len()].clone()
            } else {
                edges[rng.random_range(0..edges.len())].clone()
            };
            drafts.push(Draft {
                src,
                dst,
                src_port: rng.random_range(49152..=65535),
                dst_port: prof.dst_port,
                features: draw(&mut rng, prof, noise_dims),
                label: FlowLabel::Attack(spec.kind.label().into()),
                instance: Some(name.clone()),
            });
        }
        instances.insert(
            name,
            AttackInstance {
                kind: spec.kind,
                hub,
                hosts,
                flow_ids: Vec::new(),
            },
        );
    }

    drafts.shuffle(&mut rng);
    let schema = config.schema();
    let mut records = Vec::with_capacity(drafts.len());
    let mut meta = Vec::with_capacity(drafts.len());
    let mut clock: u64 = 1_700_000_000_000;
    for (row, d) in drafts.into_iter().enumerate() {
        let flow_id = row as u64;
        clock += rng.random_range(1..50u64);
        meta.push(FlowMeta {
            start_ms: clock,
            src_port: d.src_port,
            dst_port: d.dst_port,
        });
        if let Some(name) = &d.instance {
            instances.get_mut(name).expect("instance registered").flow_ids.push(flow_id);
        }
        let (src, dst) = match schema.node_key {
            NodeKey::Ip => (d.src, d.dst),
            NodeKey::IpPort => (format!("{}:{}", d.src, d.src_port), d.dst),
        };
        records.push(FlowRecord {
            flow_id,
            src_endpoint: src,
            dst_endpoint: dst,
            features: d.features,
            label: Some(d.label),
        });
    }
    let dataset = FlowDataset::new(schema, records);
    let truth = GroundTruth {
        format_version: GROUND_TRUTH_VERSION,
        seed: config.seed,
        instances,
    };
    Ok(SyntheticData {
        dataset,
        ground_truth: truth,
        meta,
    })
}

/// Destination port and start time are not features but appear in the CSV so
/// the file looks like a NetFlow export.
pub fn write_dataset_csv<W: Write>(dataset: &FlowDataset, meta: &[FlowMeta], writer: W) -> Result<()> {
    if meta.len() != dataset.len() {
        return Err(Error::shape("write_dataset_csv", dataset.len(), meta.len()));
    }
    let schema = &dataset.schema;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "FLOW_ID".to_string(),
        "FLOW_START_MS".to_string(),
        schema.src_column.clone(),
        schema.dst_column.clone(),
        "L4_SRC_PORT".to_string(),
        "L4_DST_PORT".to_string(),
    ];
    header.extend(schema.numeric_columns.iter().cloned());
    header.push("PROTOCOL".into());
    header.push("Label".into());
    wtr.write_record(&header)?;

    let n_num = schema.numeric_columns.len();
    for (r, m) in dataset.records.iter().zip(meta) {
        let proto = ["6", "17", "1"]
            .iter()
            .zip(&r.features[n_num..])
            .find(|(_, &v)| v == 1.0)
            .map(|(p, _)| *p)
            .unwrap_or("");
        let mut row = vec![
            r.flow_id.to_string(),
            m.start_ms.to_string(),
            r.src_endpoint.clone(),
            r.dst_endpoint.clone(),
            m.src_port.to_string(),
            m.dst_port.to_string(),
        ];
        row.extend(r.features[..n_num].iter().map(|v| v.to_string()));
        row.push(proto.to_string());
        row.push(r.label.as_ref().map(|l| l.to_string()).unwrap_or_default());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
