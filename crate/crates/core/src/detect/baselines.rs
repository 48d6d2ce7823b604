//! Unsupervised anomaly scorers fitted on benign rows only.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{dot, DenseMatrix};

pub trait AnomalyDetector {
    fn name(&self) -> &'static str;
    fn n_features(&self) -> usize;
    /// Larger is more anomalous.
    fn score_row(&self, x: &[f64]) -> f64;

    fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::shape("anomaly score", self.n_features(), x.len()));
        }
        Ok(self.score_row(x))
    }

    fn score_matrix(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        (0..x.rows()).map(|r| self.score(x.row(r))).collect()
    }
}

fn check_train(x: &DenseMatrix, what: &str) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidInput(format!("{what} needs a non-empty benign training set")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("{what} training data")));
    }
    Ok(())
}

/// Squared residual after projecting standardised rows onto the leading
/// eigenvectors of the benign correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDetector {
    n_features: usize,
    /// Retained (non-constant) feature indices with their mean and stdev.
    kept: Vec<(usize, f64, f64)>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-12;

pub fn fit_pca_detector(benign: &DenseMatrix, n_components: usize) -> Result<PcaDetector> {
    check_train(benign, "PCA")?;
    let (n, d) = benign.shape();
    let mut kept = Vec::new();
    for f in 0..d {
        let mean = (0..n).map(|r| benign.get(r, f)).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (benign.get(r, f) - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-12 {
            kept.push((f, mean, var.sqrt()));
        }
    }
    let k = kept.len();
    if k == 0 {
        return Err(Error::InvalidInput("PCA input has zero variance in every feature".into()));
    }
    if n_components >= k {
        return Err(Error::InvalidInput(format!(
            "n_components {n_components} must be below the {k} non-constant features"
        )));
    }
    let mut z = vec![0.0; n * k];
    for r in 0..n {
        for (j, &(f, m, s)) in kept.iter().enumerate() {
            z[r * k + j] = (benign.get(r, f) - m) / s;
        }
    }
    let mut corr = DenseMatrix::zeros(k, k);
    for r in 0..n {
        corr.add_outer(1.0 / n as f64, &z[r * k..(r + 1) * k], &z[r * k..(r + 1) * k])?;
    }

    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    for c in 0..n_components {
        let mut v: Vec<f64> = (0..k).map(|i| 1.0 + ((i * 7919 + c * 104729) % 97) as f64 / 97.0).collect();
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERS {
            orthogonalise(&mut v, &components);
            let norm = dot(&v, &v).sqrt();
            if norm < 1e-300 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = corr.matvec(&v)?;
            let next = dot(&v, &w);
            let done = (next - lambda).abs() <= POWER_TOL * next.abs().max(1.0);
            lambda = next;
            v = w;
            if done {
                break;
            }
        }
        orthogonalise(&mut v, &components);
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-12 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        eigenvalues.push(lambda);
        components.push(v);
    }
    Ok(PcaDetector {
        n_features: d,
        kept,
        components,
        eigenvalues,
    })
}

fn orthogonalise(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
    }
}

impl AnomalyDetector for PcaDetector {
    fn name(&self) -> &'static str {
        "PCA"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = self.kept.iter().map(|&(f, m, s)| (x[f] - m) / s).collect();
        let total = dot(&z, &z);
        let explained: f64 = self.components.iter().map(|c| dot(&z, c).powi(2)).sum();
        (total - explained).max(0.0)
    }
}

/// Histogram-based outlier score with equal-width bins per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Hbos {
    lo: Vec<f64>,
    width: Vec<f64>,
    /// Fraction of training rows per bin, feature-major.
    density: Vec<Vec<f64>>,
}

pub const HBOS_EPS: f64 = 1e-9;

pub fn fit_hbos(benign: &DenseMatrix, n_bins: usize) -> Result<Hbos> {
    if n_bins < 2 {
        return Err(Error::InvalidInput(format!("HBOS needs at least 2 bins, got {n_bins}")));
    }
    check_train(benign, "HBOS")?;
    let (n, d) = benign.shape();
    let mut lo = Vec::with_capacity(d);
    let mut width = Vec::with_capacity(d);
    let mut density = Vec::with_capacity(d);
    for f in 0..d {
        let col: Vec<f64> = (0..n).map(|r| benign.get(r, f)).collect();
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = (max - min) / n_bins as f64;
        let mut counts = vec![0.0; n_bins];
        for &v in &col {
            counts[bin_of(v, min, w, n_bins).unwrap_or(0)] += 1.0;
        }
        counts.iter_mut().for_each(|c| *c /= n as f64);
        lo.push(min);
        width.push(w);
        density.push(counts);
    }
    Ok(Hbos { lo, width, density })
}

fn bin_of(v: f64, lo: f64, width: f64, n_bins: usize) -> Option<usize> {
    if width <= 0.0 {
        return (v == lo).then_some(0);
    }
    let pos = (v - lo) / width;
    if pos < 0.0 || pos > n_bins as f64 {
        return None;
    }
    Some((pos as usize).min(n_bins - 1))
}

impl AnomalyDetector for Hbos {
    fn name(&self) -> &'static str {
        "HBOS"
    }

    fn n_features(&self) -> usize {
        self.lo.len()
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|f| {
                let bins = &self.density[f];
                let d = bin_of(x[f], self.lo[f], self.width[f], bins.len()).map_or(0.0, |b| bins[b]);
                -(d + HBOS_EPS).ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum INode {
    Split { feature: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    n_features: usize,
    subsample: usize,
    trees: Vec<Vec<INode>>,
}

/// Average unsuccessful-search path length in a binary search tree of `n` keys.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + 0.577_215_664_901_532_9) - 2.0 * (n - 1.0) / n
        }
    }
}

pub fn fit_iforest(benign: &DenseMatrix, n_trees: usize, subsample: usize, seed: u64) -> Result<IsolationForest> {
    if n_trees < 1 {
        return Err(Error::InvalidInput("isolation forest needs at least one tree".into()));
    }
    if subsample < 2 {
        return Err(Error::InvalidInput(format!("subsample must be at least 2, got {subsample}")));
    }
    check_train(benign, "isolation forest")?;
    let n = benign.rows();
    let psi = subsample.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_trees)
        .map(|_| {
            let rows = sample(&mut rng, n, psi).into_vec();
            let mut nodes = Vec::new();
            grow_itree(benign, rows, 0, height_limit, &mut rng, &mut nodes);
            nodes
        })
        .collect();
    Ok(IsolationForest {
        n_features: benign.cols(),
        subsample: psi,
        trees,
    })
}

fn grow_itree(x: &DenseMatrix, rows: Vec<usize>, depth: usize, limit: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<INode>) -> usize {
    let id = nodes.len();
    nodes.push(INode::Leaf { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let ranges: Vec<(usize, f64, f64)> = (0..x.cols())
        .filter_map(|f| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(x.get(r, f)), hi.max(x.get(r, f)))
            });
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return id;
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let value = rng.random_range(lo..hi);
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&row| x.get(row, feature) < value);
    let left = grow_itree(x, l, depth + 1, limit, rng, nodes);
    let right = grow_itree(x, r, depth + 1, limit, rng, nodes);
    nodes[id] = INode::Split { feature, value, left, right };
    id
}

impl IsolationForest {
    fn path_length(tree: &[INode], x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match tree[node] {
                INode::Leaf { size } => return depth + c_factor(size),
                INode::Split { feature, value, left, right } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

impl AnomalyDetector for IsolationForest {
    fn name(&self) -> &'static str {
        "IsolationForest"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        let mean = self.trees.iter().map(|t| Self::path_length(t, x)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / c_factor(self.subsample).max(f64::MIN_POSITIVE))
    }
}
