//! Per-recording and pooled metric reports over aligned 1 Hz traces and masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    auc, average_precision, burden_minutes_per_hour, confusion, cohen_kappa, cross_entropy, mcc,
    pearson,
};
use crate::signal::mask_to_events;

/// Evaluation inputs for one recording: a per-second probability trace and the
/// binarized prediction and reference masks, all on the same 1 Hz grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingEval {
    pub id: String,
    pub probs: Vec<f64>,
    pub pred_mask: Vec<bool>,
    pub ref_mask: Vec<bool>,
}

impl RecordingEval {
    fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "recording {:?} is empty",
                self.id
            )));
        }
        if self.probs.len() != self.pred_mask.len() || self.probs.len() != self.ref_mask.len() {
            return Err(Error::Shape(format!(
                "recording {:?}: trace {} vs pred {} vs ref {}",
                self.id,
                self.probs.len(),
                self.pred_mask.len(),
                self.ref_mask.len()
            )));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidData(format!(
                "recording {:?}: probabilities outside [0, 1]",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seconds: u64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub pearson_r: Option<f64>,
    pub cross_entropy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub error_rate: f64,
    pub mcc: f64,
    pub kappa: f64,
    pub fd_per_hour: f64,
    pub burden_r: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Reports in recording-id order.
    pub per_recording: Vec<(String, MetricsReport)>,
    /// One report over all recordings pooled; events never merge across
    /// recording boundaries.
    pub concatenated: MetricsReport,
}

/// Compute every metric per recording and over the pooled set.
pub fn evaluate(recordings: &[RecordingEval]) -> Result<EvalSummary> {
    if recordings.is_empty() {
        return Err(Error::InvalidArgument("no recordings to evaluate".into()));
    }
    for rec in recordings {
        rec.validate()?;
    }
    let mut order: Vec<usize> = (0..recordings.len()).collect();
    order.sort_by(|&i, &j| recordings[i].id.cmp(&recordings[j].id));
    for pair in order.windows(2) {
        if recordings[pair[0]].id == recordings[pair[1]].id {
            return Err(Error::InvalidData(format!(
                "duplicate recording id {:?}",
                recordings[pair[0]].id
            )));
        }
    }

    let mut per_recording = Vec::with_capacity(order.len());
    let mut cat_probs = Vec::new();
    let mut cat_pred = Vec::new();
    let mut cat_ref = Vec::new();
    let mut cat_false_events = 0usize;
    let mut cat_bins_pred = Vec::new();
    let mut cat_bins_ref = Vec::new();
    for &i in &order {
        let rec = &recordings[i];
        let false_events = false_event_count(&rec.pred_mask, &rec.ref_mask)?;
        let bins_pred = burden_minutes_per_hour(&rec.pred_mask);
        let bins_ref = burden_minutes_per_hour(&rec.ref_mask);
        let report = single_report(
            &rec.probs,
            &rec.pred_mask,
            &rec.ref_mask,
            false_events,
            &bins_pred,
            &bins_ref,
        )?;
        cat_probs.extend_from_slice(&rec.probs);
        cat_pred.extend_from_slice(&rec.pred_mask);
        cat_ref.extend_from_slice(&rec.ref_mask);
        cat_false_events += false_events;
        cat_bins_pred.extend(bins_pred);
        cat_bins_ref.extend(bins_ref);
        per_recording.push((rec.id.clone(), report));
    }
    let concatenated = single_report(
        &cat_probs,
        &cat_pred,
        &cat_ref,
        cat_false_events,
        &cat_bins_pred,
        &cat_bins_ref,
    )?;
    Ok(EvalSummary { per_recording, concatenated })
}

fn false_event_count(pred: &[bool], reference: &[bool]) -> Result<usize> {
    let pred_events = mask_to_events(pred);
    let ref_events = mask_to_events(reference);
    Ok(pred_events
        .iter()
        .filter(|p| !ref_events.iter().any(|r| p.intersects(r)))
        .count())
}

fn single_report(
    probs: &[f64],
    pred: &[bool],
    reference: &[bool],
    false_events: usize,
    bins_pred: &[f64],
    bins_ref: &[f64],
) -> Result<MetricsReport> {
    let mut notes = Vec::new();
    let seconds = probs.len() as u64;

    let auc_v = auc(probs, reference)?;
    if auc_v.is_none() {
        notes.push("auc: reference has a single class".to_string());
    }
    let ap_pair = average_precision(probs, reference)?;
    if ap_pair.is_none() {
        notes.push("ap: reference has a single class".to_string());
    }
    let ref_f: Vec<f64> = reference.iter().map(|&b| b as u8 as f64).collect();
    let pearson_v = if probs.len() < 2 {
        notes.push("pearson: fewer than two seconds".to_string());
        None
    } else {
        let r = pearson(probs, &ref_f)?;
        if r.is_none() {
            notes.push("pearson: constant series".to_string());
        }
        r
    };
    let ce = cross_entropy(probs, reference)?;

    let counts = confusion(pred, reference)?;
    let sensitivity = counts.sensitivity();
    if sensitivity.is_none() {
        notes.push("sensitivity: no positive reference seconds".to_string());
    }
    let specificity = counts.specificity();
    if specificity.is_none() {
        notes.push("specificity: no negative reference seconds".to_string());
    }
    let ppv = counts.ppv();
    if ppv.is_none() {
        notes.push("ppv: no positive predictions".to_string());
    }
    let npv = counts.npv();
    if npv.is_none() {
        notes.push("npv: no negative predictions".to_string());
    }
    let error_rate = counts.error_rate().unwrap_or(0.0);
    let mcc_v = mcc(&counts);
    let kappa_v = cohen_kappa(pred, reference)?;

    // The false count comes from the caller so that pooled reports can sum
    // per-recording counts instead of merging events across boundaries.
    let fd_v = false_events as f64 / (seconds as f64 / 3600.0);

    let burden_r = if bins_pred.len() < 2 {
        notes.push("burden_r: fewer than two hour bins".to_string());
        None
    } else {
        let r = pearson(bins_pred, bins_ref)?;
        if r.is_none() {
            notes.push("burden_r: constant burden series".to_string());
        }
        r
    };

    Ok(MetricsReport {
        seconds,
        auc: auc_v,
        ap: ap_pair.map(|p| p.0),
        ap50: ap_pair.map(|p| p.1),
        pearson_r: pearson_v,
        cross_entropy: ce,
        sensitivity,
        specificity,
        ppv,
        npv,
        error_rate,
        mcc: mcc_v,
        kappa: kappa_v,
        fd_per_hour: fd_v,
        burden_r,
        notes,
    })
}

pub const REPORT_HEADER: &str = "recording,seconds,auc,ap,ap50,pearson_r,cross_entropy,\
sensitivity,specificity,ppv,npv,error_rate,mcc,kappa,fd_per_hour,burden_r,notes";

/// Render a summary as CSV with one row per recording plus a pooled `all` row.
pub fn render_csv(summary: &EvalSummary) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (id, report) in &summary.per_recording {
        render_row(&mut out, id, report);
    }
    render_row(&mut out, "all", &summary.concatenated);
    out
}

fn render_row(out: &mut String, id: &str, r: &MetricsReport) {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    out.push_str(&format!(
        "{},{},{},{},{},{},{:.6},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
        id,
        r.seconds,
        cell(r.auc),
        cell(r.ap),
        cell(r.ap50),
        cell(r.pearson_r),
        r.cross_entropy,
        cell(r.sensitivity),
        cell(r.specificity),
        cell(r.ppv),
        cell(r.npv),
        r.error_rate,
        r.mcc,
        r.kappa,
        r.fd_per_hour,
        cell(r.burden_r),
        r.notes.join("; "),
    ));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_of(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&b| b != 0).collect()
    }

    fn simple_recording(id: &str) -> RecordingEval {
        let ref_mask = mask_of(&[0, 0, 1, 1, 1, 0, 0, 0, 1, 1]);
        let probs: Vec<f64> = ref_mask.iter().map(|&b| if b { 0.9 } else { 0.1 }).collect();
        RecordingEval { id: id.into(), probs, pred_mask: ref_mask.clone(), ref_mask }
    }

    #[test]
    fn perfect_prediction_maxes_the_binary_metrics() {
        let summary = evaluate(&[simple_recording("a")]).unwrap();
        let (_, r) = &summary.per_recording[0];
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.mcc, 1.0);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.specificity, Some(1.0));
        assert_eq!(r.error_rate, 0.0);
        assert_eq!(r.fd_per_hour, 0.0);
        assert!((r.pearson_r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_recording_pool_equals_per_recording() {
        let summary = evaluate(&[simple_recording("a")]).unwrap();
        let (_, per) = &summary.per_recording[0];
        let cc = &summary.concatenated;
        assert_eq!(per.auc, cc.auc);
        assert_eq!(per.ap, cc.ap);
        assert_eq!(per.mcc, cc.mcc);
        assert_eq!(per.kappa, cc.kappa);
        assert_eq!(per.fd_per_hour, cc.fd_per_hour);
        assert_eq!(per.burden_r, cc.burden_r);
        assert_eq!(per.cross_entropy, cc.cross_entropy);
    }

    #[test]
    fn recordings_are_ordered_by_id() {
        let summary = evaluate(&[simple_recording("zeta"), simple_recording("alpha")]).unwrap();
        assert_eq!(summary.per_recording[0].0, "alpha");
        assert_eq!(summary.per_recording[1].0, "zeta");
    }

    #[test]
    fn pooled_binary_metrics_match_manual_concatenation() {
        let a = simple_recording("a");
        let mut b = simple_recording("b");
        b.pred_mask = mask_of(&[1, 0, 1, 1, 0, 0, 1, 0, 1, 1]);
        let summary = evaluate(&[a.clone(), b.clone()]).unwrap();

        let mut pred = a.pred_mask.clone();
        pred.extend_from_slice(&b.pred_mask);
        let mut refm = a.ref_mask.clone();
        refm.extend_from_slice(&b.ref_mask);
        let counts = confusion(&pred, &refm).unwrap();
        assert_eq!(summary.concatenated.mcc, mcc(&counts));
        assert_eq!(
            summary.concatenated.kappa,
            cohen_kappa(&pred, &refm).unwrap()
        );
    }

    #[test]
    fn false_events_do_not_merge_across_recordings() {
        // Each hour-long recording ends or starts with a false detection that
        // would fuse into one event if the masks were naively stitched.
        let mut a = RecordingEval {
            id: "a".into(),
            probs: vec![0.0; 3600],
            pred_mask: vec![false; 3600],
            ref_mask: vec![false; 3600],
        };
        for s in 3590..3600 {
            a.pred_mask[s] = true;
            a.probs[s] = 0.9;
        }
        a.ref_mask[0] = true;
        a.probs[0] = 0.2;
        let mut b = RecordingEval {
            id: "b".into(),
            probs: vec![0.0; 3600],
            pred_mask: vec![false; 3600],
            ref_mask: vec![false; 3600],
        };
        for s in 0..10 {
            b.pred_mask[s] = true;
            b.probs[s] = 0.9;
        }
        b.ref_mask[3599] = true;
        b.probs[3599] = 0.2;
        let summary = evaluate(&[a, b]).unwrap();
        assert_eq!(summary.concatenated.fd_per_hour, 1.0);
    }

    #[test]
    fn absent_metrics_carry_notes() {
        let rec = RecordingEval {
            id: "quiet".into(),
            probs: vec![0.1; 30],
            pred_mask: vec![false; 30],
            ref_mask: vec![false; 30],
        };
        let summary = evaluate(&[rec]).unwrap();
        let (_, r) = &summary.per_recording[0];
        assert_eq!(r.auc, None);
        assert_eq!(r.sensitivity, None);
        assert_eq!(r.ppv, None);
        assert_eq!(r.burden_r, None);
        assert!(r.notes.iter().any(|n| n.contains("auc")));
        assert!(r.notes.iter().any(|n| n.contains("burden_r")));
    }

    #[test]
    fn burden_r_pools_hour_bins_across_recordings() {
        // Two half-hour recordings each give one bin, so only the pooled
        // report can correlate burdens.
        let make = |id: &str, minutes: usize| {
            let mut m = vec![false; 1800];
            for s in 0..minutes * 60 {
                m[s] = true;
            }
            RecordingEval {
                id: id.into(),
                probs: m.iter().map(|&b| if b { 0.8 } else { 0.2 }).collect(),
                pred_mask: m.clone(),
                ref_mask: m,
            }
        };
        let summary = evaluate(&[make("a", 5), make("b", 20)]).unwrap();
        assert_eq!(summary.per_recording[0].1.burden_r, None);
        assert_eq!(summary.concatenated.burden_r, Some(1.0));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(evaluate(&[]).is_err());
        let dup = simple_recording("a");
        assert!(evaluate(&[dup.clone(), dup]).is_err());
        let mut bad = simple_recording("a");
        bad.probs[0] = 1.5;
        assert!(evaluate(&[bad]).is_err());
        let mut short = simple_recording("a");
        short.pred_mask.pop();
        assert!(evaluate(&[short]).is_err());
    }

    #[test]
    fn csv_has_header_and_pooled_row() {
        let summary = evaluate(&[simple_recording("a"), simple_recording("b")]).unwrap();
        let csv = render_csv(&summary);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("recording,seconds,auc"));
        assert!(lines[1].starts_with("a,10,"));
        assert!(lines[3].starts_with("all,20,"));
    }

    #[test]
    fn csv_leaves_absent_cells_empty() {
        let rec = RecordingEval {
            id: "quiet".into(),
            probs: vec![0.1; 30],
            pred_mask: vec![false; 30],
            ref_mask: vec![false; 30],
        };
        let csv = render_csv(&evaluate(&[rec]).unwrap());
        let row = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[2], "");
        assert!(cells.last().unwrap().contains("auc"));
    }
}
