//! Agreement, ranking and event-level metrics over 1 Hz masks and traces.

mod report;
mod stats;

pub use report::{evaluate, render_csv, EvalSummary, MetricsReport, RecordingEval, REPORT_HEADER};
pub use stats::{
    annotation_stats, detection_by_duration, AnnotationStats, DurationBin, EventStat,
    DEFAULT_DURATION_EDGES,
};

use crate::error::{Error, Result};
use crate::signal::Event;

/// Confusion counts over aligned boolean masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.true_neg, self.true_neg + self.false_pos)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.true_neg, self.true_neg + self.false_neg)
    }

    pub fn error_rate(&self) -> Option<f64> {
        ratio(self.false_pos + self.false_neg, self.total())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn confusion(pred: &[bool], reference: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "mask lengths differ: {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    let mut c = ConfusionCounts { true_pos: 0, false_pos: 0, true_neg: 0, false_neg: 0 };
    for (&p, &r) in pred.iter().zip(reference) {
        match (p, r) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation coefficient; zero when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let tp = c.true_pos as f64;
    let fp = c.false_pos as f64;
    let tn = c.true_neg as f64;
    let fneg = c.false_neg as f64;
    let factors = [tp + fp, tp + fneg, tn + fp, tn + fneg];
    if factors.iter().any(|&f| f == 0.0) {
        return 0.0;
    }
    (tp * tn - fp * fneg) / factors.iter().product::<f64>().sqrt()
}

/// Cohen's kappa with the chance term taken from the pooled marginal, so that
/// two raters give exactly the Fleiss value.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "mask lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("kappa over empty masks".into()));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pos = (count_true(a) + count_true(b)) as f64 / (2.0 * n);
    let chance = pos * pos + (1.0 - pos) * (1.0 - pos);
    Ok(kappa_from(observed, chance))
}

/// Fleiss' kappa for binary ratings, raters in `masks`, items along each mask.
pub fn fleiss_kappa(masks: &[&[bool]]) -> Result<f64> {
    if masks.len() < 2 {
        return Err(Error::InvalidArgument(
            "fleiss kappa needs at least two raters".into(),
        ));
    }
    let n = masks[0].len();
    if n == 0 {
        return Err(Error::InvalidArgument("kappa over empty masks".into()));
    }
    if masks.iter().any(|m| m.len() != n) {
        return Err(Error::Shape("rater masks have differing lengths".into()));
    }
    let m = masks.len() as f64;
    let mut agree_sum = 0.0;
    let mut pos_total = 0u64;
    for i in 0..n {
        let k = masks.iter().filter(|r| r[i]).count() as f64;
        pos_total += k as u64;
        agree_sum += (k * (k - 1.0) + (m - k) * (m - k - 1.0)) / (m * (m - 1.0));
    }
    let observed = agree_sum / n as f64;
    let pos = pos_total as f64 / (n as f64 * m);
    let chance = pos * pos + (1.0 - pos) * (1.0 - pos);
    Ok(kappa_from(observed, chance))
}

fn kappa_from(observed: f64, chance: f64) -> f64 {
    if chance == 1.0 {
        // No variation anywhere: full credit only for perfect agreement.
        if observed == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (observed - chance) / (1.0 - chance)
    }
}

fn count_true(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

/// Area under the ROC curve via the rank-sum statistic with midranks for ties.
/// `None` when only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_scored(scores, labels)?;
    let pos = count_true(labels);
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied entries share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64)))
}

/// Average precision by stepwise summation over the precision-recall curve,
/// plus the variant restricted to recall above one half and rescaled to [0, 1].
/// `None` when only one class is present.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<(f64, f64)>> {
    check_scored(scores, labels)?;
    let pos = count_true(labels);
    if pos == 0 || pos == labels.len() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let total_pos = pos as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut ap50 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            if labels[idx] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        ap50 += (recall.max(0.5) - prev_recall.max(0.5)) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(Some((ap, 2.0 * ap50)))
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "scores and labels differ: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("ranking metric over empty input".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidData("non-finite score".into()));
    }
    Ok(())
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (va * vb).sqrt()))
}

/// Mean unweighted binary cross entropy between probabilities and a mask,
/// with probabilities clamped away from 0 and 1.
pub fn cross_entropy(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "probabilities and labels differ: {} vs {}",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::InvalidArgument("cross entropy over empty input".into()));
    }
    let floor = crate::tensor::PROB_FLOOR;
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let q = p.clamp(floor, 1.0 - floor);
        total += if y { -q.ln() } else { -(1.0 - q).ln() };
    }
    Ok(total / probs.len() as f64)
}

/// Collapse a trace to one value per second by averaging; a trailing partial
/// second averages the samples it has.
pub fn mean_per_second(trace: &[f64], rate: usize) -> Result<Vec<f64>> {
    if rate == 0 {
        return Err(Error::InvalidArgument("per-second mean needs rate > 0".into()));
    }
    let mut out = Vec::with_capacity(trace.len().div_ceil(rate));
    let mut i = 0;
    while i < trace.len() {
        let j = (i + rate).min(trace.len());
        out.push(trace[i..j].iter().sum::<f64>() / (j - i) as f64);
        i = j;
    }
    Ok(out)
}

/// False detections per hour: predicted events sharing no time at all with any
/// reference event, divided by the record duration in hours.
pub fn fd_per_hour(pred: &[Event], reference: &[Event], duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let false_count = pred
        .iter()
        .filter(|p| !reference.iter().any(|r| p.intersects(r)))
        .count();
    Ok(false_count as f64 / (duration_s / 3600.0))
}

/// Seizure minutes in each clock hour of a 1 Hz mask; the last partial hour
/// counts as a bin of its own.
pub fn burden_minutes_per_hour(mask: &[bool]) -> Vec<f64> {
    mask.chunks(3600)
        .map(|chunk| chunk.iter().filter(|&&b| b).count() as f64 / 60.0)
        .collect()
}

/// Pearson correlation between per-hour seizure burdens of two masks.
/// `None` when fewer than two hour bins exist or a burden series is constant.
pub fn seizure_burden_r(pred: &[bool], reference: &[bool]) -> Result<Option<f64>> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "mask lengths differ: {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    let bp = burden_minutes_per_hour(pred);
    let br = burden_minutes_per_hour(reference);
    if bp.len() < 2 {
        return Ok(None);
    }
    pearson(&bp, &br)
}

/// Unanimous consensus: a second is positive only where every mask agrees.
pub fn consensus(masks: &[Vec<bool>]) -> Result<Vec<bool>> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("consensus of zero masks".into()))?;
    if masks.iter().any(|m| m.len() != first.len()) {
        return Err(Error::Shape("consensus masks have differing lengths".into()));
    }
    Ok((0..first.len()).map(|i| masks.iter().all(|m| m[i])).collect())
}
