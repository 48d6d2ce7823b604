//! Flow-record ingestion: CSV parsing against a configurable schema,
//! leakage-free feature scaling, and stratified train/test splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class tag of a flow. Anything other than `Benign` is an attack class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowLabel {
    Benign,
    Attack(String),
}

impl FlowLabel {
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        if raw.eq_ignore_ascii_case("benign") {
            FlowLabel::Benign
        } else {
            FlowLabel::Attack(raw.to_string())
        }
    }

    pub fn is_attack(&self) -> bool {
        matches!(self, FlowLabel::Attack(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            FlowLabel::Benign => "Benign",
            FlowLabel::Attack(name) => name,
        }
    }
}

impl fmt::Display for FlowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub src_endpoint: String,
    pub dst_endpoint: String,
    pub features: Vec<f64>,
    pub label: Option<FlowLabel>,
}

impl FlowRecord {
    pub fn is_attack(&self) -> bool {
        self.label.as_ref().is_some_and(FlowLabel::is_attack)
    }
}

/// How endpoints are turned into graph node identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKey {
    #[default]
    Ip,
    IpPort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalColumn {
    pub name: String,
    /// Known category values; each becomes one indicator feature. Values not
    /// listed encode as all zeros.
    pub categories: Vec<String>,
}

/// Column layout of a flow CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSchema {
    pub flow_id_column: Option<String>,
    pub src_column: String,
    pub dst_column: String,
    pub src_port_column: Option<String>,
    pub dst_port_column: Option<String>,
    pub node_key: NodeKey,
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<CategoricalColumn>,
    /// `None` means the dataset is unlabeled.
    pub label_column: Option<String>,
}

impl Default for FlowSchema {
    /// NetFlow-v2 style column names, as emitted by the synthetic generator.
    fn default() -> Self {
        Self {
            flow_id_column: Some("FLOW_ID".into()),
            src_column: "IPV4_SRC_ADDR".into(),
            dst_column: "IPV4_DST_ADDR".into(),
            src_port_column: Some("L4_SRC_PORT".into()),
            dst_port_column: Some("L4_DST_PORT".into()),
            node_key: NodeKey::Ip,
            numeric_columns: ["IN_BYTES", "OUT_BYTES", "IN_PKTS", "OUT_PKTS", "FLOW_DURATION_MILLISECONDS"]
                .map(String::from)
                .to_vec(),
            categorical_columns: vec![CategoricalColumn {
                name: "PROTOCOL".into(),
                categories: vec!["6".into(), "17".into(), "1".into()],
            }],
            label_column: Some("Label".into()),
        }
    }
}

impl FlowSchema {
    /// Minimal schema: two endpoint columns, numeric features, optional label.
    pub fn simple(src: &str, dst: &str, numeric: &[&str], label: Option<&str>) -> Self {
        Self {
            flow_id_column: None,
            src_column: src.into(),
            dst_column: dst.into(),
            src_port_column: None,
            dst_port_column: None,
            node_key: NodeKey::Ip,
            numeric_columns: numeric.iter().map(|s| s.to_string()).collect(),
            categorical_columns: Vec::new(),
            label_column: label.map(String::from),
        }
    }

    /// Feature names after one-hot expansion, in feature-vector order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.numeric_columns.clone();
        for cat in &self.categorical_columns {
            names.extend(cat.categories.iter().map(|c| format!("{}={c}", cat.name)));
        }
        names
    }

    pub fn feature_dim(&self) -> usize {
        self.numeric_columns.len() + self.categorical_columns.iter().map(|c| c.categories.len()).sum::<usize>()
    }

    fn endpoint(&self, ip: &str, port: Option<&str>) -> String {
        match (self.node_key, port) {
            (NodeKey::IpPort, Some(p)) => format!("{ip}:{p}"),
            _ => ip.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDataset {
    pub schema: FlowSchema,
    pub records: Vec<FlowRecord>,
}

impl FlowDataset {
    pub fn new(schema: FlowSchema, records: Vec<FlowRecord>) -> Self {
        Self { schema, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.schema.feature_dim()
    }

    pub fn attack_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.is_attack()).count() as f64 / self.records.len() as f64
    }

    fn with_records(&self, records: Vec<FlowRecord>) -> Self {
        Self {
            schema: self.schema.clone(),
            records,
        }
    }
}

pub fn parse_csv(path: &Path, schema: &FlowSchema) -> Result<FlowDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, schema)
}

/// Parses flow rows from any reader. Lines starting with `#` are comments.
/// Row numbers in errors count data rows from 1.
pub fn parse_csv_reader<R: Read>(reader: R, schema: &FlowSchema) -> Result<FlowDataset> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let opt_col = |name: &Option<String>| -> Result<Option<usize>> { name.as_deref().map(col).transpose() };

    let flow_id_idx = opt_col(&schema.flow_id_column)?;
    let src_idx = col(&schema.src_column)?;
    let dst_idx = col(&schema.dst_column)?;
    let (src_port_idx, dst_port_idx) = match schema.node_key {
        NodeKey::IpPort => (opt_col(&schema.src_port_column)?, opt_col(&schema.dst_port_column)?),
        NodeKey::Ip => (None, None),
    };
    let numeric_idx = schema.numeric_columns.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let cat_idx = schema
        .categorical_columns
        .iter()
        .map(|c| col(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = opt_col(&schema.label_column)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |idx: usize| row.get(idx).unwrap_or("");

        let flow_id = match flow_id_idx {
            Some(idx) => cell(idx).parse::<u64>().map_err(|e| Error::Parse {
                row: row_no,
                column: headers[idx].to_string(),
                message: e.to_string(),
            })?,
            None => i as u64,
        };
        if !seen.insert(flow_id) {
            return Err(Error::Parse {
                row: row_no,
                column: schema.flow_id_column.clone().unwrap_or_else(|| "<row>".into()),
                message: format!("duplicate flow id {flow_id}"),
            });
        }

        let mut features = Vec::with_capacity(schema.feature_dim());
        for &idx in &numeric_idx {
            let raw = cell(idx);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: headers[idx].to_string(),
                message: format!("non-numeric value {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: headers[idx].to_string(),
                    message: format!("non-finite value {raw:?}"),
                });
            }
            features.push(v);
        }
        for (cat, &idx) in schema.categorical_columns.iter().zip(&cat_idx) {
            let raw = cell(idx);
            features.extend(cat.categories.iter().map(|c| if c == raw { 1.0 } else { 0.0 }));
        }

        records.push(FlowRecord {
            flow_id,
            src_endpoint: schema.endpoint(cell(src_idx), src_port_idx.map(cell)),
            dst_endpoint: schema.endpoint(cell(dst_idx), dst_port_idx.map(cell)),
            features,
            label: label_idx.map(|idx| FlowLabel::parse(cell(idx))),
        });
    }
    Ok(FlowDataset::new(schema.clone(), records))
}

/// Writes a dataset back in the column layout of its schema. One-hot groups
/// are folded back into their category value.
pub fn write_csv<W: Write>(dataset: &FlowDataset, writer: W) -> Result<()> {
    let schema = &dataset.schema;
    let mut wtr = csv::Writer::from_writer(writer);
    let split_ports = schema.node_key == NodeKey::IpPort;
    let mut header: Vec<String> = Vec::new();
    if let Some(c) = &schema.flow_id_column {
        header.push(c.clone());
    }
    header.push(schema.src_column.clone());
    header.push(schema.dst_column.clone());
    if split_ports {
        header.extend(schema.src_port_column.clone());
        header.extend(schema.dst_port_column.clone());
    }
    header.extend(schema.numeric_columns.iter().cloned());
    header.extend(schema.categorical_columns.iter().map(|c| c.name.clone()));
    header.extend(schema.label_column.clone());
    wtr.write_record(&header)?;

    let split = |ep: &str| -> (String, String) {
        match ep.rsplit_once(':') {
            Some((ip, port)) if split_ports => (ip.to_string(), port.to_string()),
            _ => (ep.to_string(), String::new()),
        }
    };
    for r in &dataset.records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if schema.flow_id_column.is_some() {
            row.push(r.flow_id.to_string());
        }
        let (src_ip, src_port) = split(&r.src_endpoint);
        let (dst_ip, dst_port) = split(&r.dst_endpoint);
        row.push(src_ip);
        row.push(dst_ip);
        if split_ports {
            if schema.src_port_column.is_some() {
                row.push(src_port);
            }
            if schema.dst_port_column.is_some() {
                row.push(dst_port);
            }
        }
        let n_num = schema.numeric_columns.len();
        row.extend(r.features[..n_num].iter().map(|v| v.to_string()));
        let mut offset = n_num;
        for cat in &schema.categorical_columns {
            let group = &r.features[offset..offset + cat.categories.len()];
            let value = group
                .iter()
                .position(|&v| v == 1.0)
                .map(|k| cat.categories[k].clone())
                .unwrap_or_default();
            row.push(value);
            offset += cat.categories.len();
        }
        if schema.label_column.is_some() {
            row.push(r.label.as_ref().map(|l| l.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub const SCALER_FORMAT_VERSION: u32 = 1;
pub const STD_FLOOR: f64 = 1e-8;
pub const CLIP_SIGMAS: f64 = 5.0;

/// Per-feature clip-then-standardise transform, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScaler {
    pub format_version: u32,
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
    pub clip_lo: Vec<f64>,
    pub clip_hi: Vec<f64>,
}

pub fn fit_scaler(train: &FlowDataset) -> Result<FeatureScaler> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot fit a scaler on an empty dataset".into()));
    }
    let d = train.feature_dim();
    let n = train.len() as f64;
    let mut means = vec![0.0; d];
    for r in &train.records {
        check_dim(r, d, "fit_scaler")?;
        for (m, x) in means.iter_mut().zip(&r.features) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for r in &train.records {
        for ((v, m), x) in vars.iter_mut().zip(&means).zip(&r.features) {
            *v += (x - m) * (x - m);
        }
    }
    let stdevs: Vec<f64> = vars.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    let clip_lo = means.iter().zip(&stdevs).map(|(m, s)| m - CLIP_SIGMAS * s).collect();
    let clip_hi = means.iter().zip(&stdevs).map(|(m, s)| m + CLIP_SIGMAS * s).collect();
    Ok(FeatureScaler {
        format_version: SCALER_FORMAT_VERSION,
        means,
        stdevs,
        clip_lo,
        clip_hi,
    })
}

fn check_dim(r: &FlowRecord, d: usize, ctx: &'static str) -> Result<()> {
    if r.features.len() != d {
        return Err(Error::shape(ctx, d, format!("{} (flow {})", r.features.len(), r.flow_id)));
    }
    Ok(())
}

impl FeatureScaler {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(j, &x)| (x.clamp(self.clip_lo[j], self.clip_hi[j]) - self.means[j]) / self.stdevs[j])
            .collect()
    }

    pub fn inverse(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(j, &z)| z * self.stdevs[j] + self.means[j])
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scaler serialises")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if s.format_version != SCALER_FORMAT_VERSION {
            return Err(Error::format(
                origin,
                format!("scaler format version {} (expected {SCALER_FORMAT_VERSION})", s.format_version),
            ));
        }
        let d = s.means.len();
        if [s.stdevs.len(), s.clip_lo.len(), s.clip_hi.len()].iter().any(|&l| l != d) {
            return Err(Error::format(origin, "scaler vectors differ in length"));
        }
        Ok(s)
    }
}

pub fn apply_scaler(scaler: &FeatureScaler, data: &FlowDataset) -> Result<FlowDataset> {
    let d = scaler.dim();
    let records = data
        .records
        .iter()
        .map(|r| {
            check_dim(r, d, "apply_scaler")?;
            Ok(FlowRecord {
                features: scaler.transform(&r.features),
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.with_records(records))
}

/// Stratified, seeded train/test split.
///
/// Per class the train share is `floor(train_fraction * n_class)`; the
/// leftover of `round(train_fraction * n)` is handed out one record at a
/// time to the classes with the largest fractional remainders. Classes with
/// fewer than two members go wholly to train. Both parts keep input order.
pub fn split(data: &FlowDataset, train_fraction: f64, seed: u64) -> Result<(FlowDataset, FlowDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train_fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut classes: BTreeMap<Option<&FlowLabel>, Vec<usize>> = BTreeMap::new();
    for (i, r) in data.records.iter().enumerate() {
        classes.entry(r.label.as_ref()).or_default().push(i);
    }

    let mut quotas: Vec<(usize, f64)> = Vec::with_capacity(classes.len());
    let mut stratifiable = 0usize;
    for (label, members) in &classes {
        if members.len() < 2 {
            log::warn!(
                "class {:?} has {} member(s); assigning it wholly to the training split",
                label.map(FlowLabel::as_str),
                members.len()
            );
            quotas.push((members.len(), 0.0));
        } else {
            let exact = train_fraction * members.len() as f64;
            quotas.push((exact.floor() as usize, exact - exact.floor()));
            stratifiable += members.len();
        }
    }
    let target = (train_fraction * stratifiable as f64).round() as usize;
    let assigned: usize = classes
        .values()
        .zip(&quotas)
        .filter(|(m, _)| m.len() >= 2)
        .map(|(_, q)| q.0)
        .sum();
    let mut order: Vec<usize> = (0..quotas.len()).filter(|&k| quotas[k].1 > 0.0).collect();
    order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        quotas[k].0 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.len()];
    for (members, (quota, _)) in classes.values().zip(&quotas) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..*quota] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &t) in data.records.iter().zip(&in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((data.with_records(train), data.with_records(test)))
}
