use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with attack as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Recall of the attack class; `None` when there are no actual attacks.
    pub fn detection_rate(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    /// Mean F1 over the classes present in labels or predictions.
    pub fn f1_macro(&self) -> f64 {
        let f1 = |tp: u64, fp: u64, fn_: u64| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        let mut scores = Vec::with_capacity(2);
        if self.tp + self.fn_ + self.fp > 0 {
            scores.push(f1(self.tp, self.fp, self.fn_));
        }
        if self.tn + self.fp + self.fn_ > 0 {
            scores.push(f1(self.tn, self.fn_, self.fp));
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    pub fn metrics(&self) -> DetectionMetrics {
        DetectionMetrics {
            f1_macro: self.f1_macro(),
            accuracy: self.accuracy(),
            detection_rate: self.detection_rate(),
            confusion: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub f1_macro: f64,
    pub accuracy: f64,
    pub detection_rate: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    F1Macro,
    Accuracy,
    DetectionRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::F1Macro, Metric::Accuracy, Metric::DetectionRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1Macro => "F1-Macro",
            Metric::Accuracy => "Accuracy",
            Metric::DetectionRate => "DR",
        }
    }
}

impl DetectionMetrics {
    pub fn get(&self, metric: Metric) -> Result<f64> {
        match metric {
            Metric::F1Macro => Ok(self.f1_macro),
            Metric::Accuracy => Ok(self.accuracy),
            Metric::DetectionRate => self
                .detection_rate
                .ok_or_else(|| Error::InvalidInput("metric DR is undefined: no actual attacks among the labels".into())),
        }
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::shape("evaluate", labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("evaluate needs at least one prediction".into()));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(predictions: &[bool], labels: &[bool]) -> Result<DetectionMetrics> {
    Ok(confusion(predictions, labels)?.metrics())
}

/// Area under the ROC curve (ties count one half).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc", labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("roc_auc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// Threshold at the `(1 - attack_fraction)` quantile of training scores:
/// scores strictly above it are flagged.
pub fn quantile_threshold(train_scores: &[f64], attack_fraction: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::InvalidInput("no scores to threshold".into()));
    }
    let mut s = train_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let q = (1.0 - attack_fraction).clamp(0.0, 1.0);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

/// Best F1-macro over all cut points `score > t`, with the threshold used.
pub fn best_threshold_f1(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::shape("best_threshold_f1", labels.len(), scores.len()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    // Start with nothing flagged, then flag scores from the top down.
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: pos,
        tn: neg,
    };
    let mut best = (c.f1_macro(), f64::INFINITY);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] {
                c.tp += 1;
                c.fn_ -= 1;
            } else {
                c.fp += 1;
                c.tn -= 1;
            }
            i += 1;
        }
        let f = c.f1_macro();
        if f > best.0 {
            let next = idx.get(i).map_or(f64::NEG_INFINITY, |&k| scores[k]);
            best = (f, if next.is_finite() { (t + next) / 2.0 } else { t - 1.0 });
        }
    }
    Ok(best)
}
