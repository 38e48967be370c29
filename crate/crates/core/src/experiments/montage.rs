//! Montage-degradation stress: zero contiguous runs in per-channel
//! probability traces, re-globalize, and measure the metric drop. Operates on
//! saved model outputs, so it needs no model and runs in milliseconds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{binarize, channel_max, DEFAULT_THRESHOLD, TRACE_RATE};
use crate::metrics::{auc, confusion, mcc, mean_per_second};
use crate::signal::events_to_mask;
use crate::train::stream_rng;

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.10, 0.25, 0.50, 1.00];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MontageCell {
    pub fraction: f64,
    pub affected: usize,
    pub auc_degradation_pct: f64,
    pub mcc_degradation_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MontageStressResult {
    pub baseline_auc: f64,
    pub baseline_mcc: f64,
    pub trials: usize,
    pub seed: u64,
    pub cells: Vec<MontageCell>,
}

/// AUC and MCC of the channel-max globalization of 4 Hz traces against a 1 s
/// reference mask.
pub fn stress_metrics(traces: &[Vec<f64>], ref_mask: &[bool], threshold: f64) -> Result<(f64, f64)> {
    let views: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
    let global = channel_max(&views)?;
    if global.len() != ref_mask.len() * TRACE_RATE {
        return Err(Error::Shape(format!(
            "trace length {} does not cover {} reference seconds at {TRACE_RATE} Hz",
            global.len(),
            ref_mask.len()
        )));
    }
    let per_second = mean_per_second(&global, TRACE_RATE)?;
    let auc_v = auc(&per_second, ref_mask)?.ok_or_else(|| {
        Error::InvalidData("reference mask has a single class; AUC undefined".into())
    })?;
    let pred_mask = events_to_mask(&binarize(&global, threshold), ref_mask.len() as f64)?;
    let mcc_v = mcc(&confusion(&pred_mask, ref_mask)?);
    Ok((auc_v, mcc_v))
}

/// Zero `len` samples of one trace starting at `start`.
pub fn zero_run(trace: &mut [f64], start: usize, len: usize) {
    for v in &mut trace[start..start + len] {
        *v = 0.0;
    }
}

/// Sweep drop fractions and affected-channel counts; each cell averages the
/// percentage metric drop over independent randomized trials.
pub fn montage_stress(
    traces: &[Vec<f64>],
    ref_mask: &[bool],
    fractions: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MontageStressResult> {
    let channel_count = traces.len();
    if channel_count < 2 {
        return Err(Error::InvalidArgument(
            "montage stress needs at least two channels".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("montage stress needs at least one trial".into()));
    }
    if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument("drop fractions must lie in [0, 1]".into()));
    }
    let (baseline_auc, baseline_mcc) = stress_metrics(traces, ref_mask, DEFAULT_THRESHOLD)?;
    if baseline_auc == 0.0 || baseline_mcc == 0.0 {
        return Err(Error::InvalidData(
            "baseline AUC or MCC is zero; relative degradation undefined".into(),
        ));
    }
    let trace_len = traces[0].len();

    // Channel picks and run centers are drawn once per (affected, trial) and
    // shared across fractions. A larger fraction then zeroes a superset of the
    // samples a smaller one does, so the fraction sweep compares like with
    // like instead of resampling placement noise.
    let mut draws: Vec<Vec<(Vec<usize>, Vec<f64>)>> = Vec::with_capacity(channel_count - 1);
    for affected in 1..channel_count {
        let mut per_trial = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut rng = stream_rng(seed, 6, ((affected as u64) << 16) | trial as u64);
            let picks = rand::seq::index::sample(&mut rng, channel_count, affected).into_vec();
            let centers: Vec<f64> =
                picks.iter().map(|_| rng.random::<f64>() * trace_len as f64).collect();
            per_trial.push((picks, centers));
        }
        draws.push(per_trial);
    }

    let mut cells = Vec::new();
    for &fraction in fractions {
        let run_len = (trace_len as f64 * fraction).round() as usize;
        for affected in 1..channel_count {
            let mut auc_drop = 0.0;
            let mut mcc_drop = 0.0;
            for (picks, centers) in &draws[affected - 1] {
                let mut work = traces.to_vec();
                for (&c, &center) in picks.iter().zip(centers) {
                    let start = ((center - run_len as f64 / 2.0).round() as i64)
                        .clamp(0, (trace_len - run_len) as i64) as usize;
                    zero_run(&mut work[c], start, run_len);
                }
                let (a, m) = stress_metrics(&work, ref_mask, DEFAULT_THRESHOLD)?;
                auc_drop += 100.0 * (baseline_auc - a) / baseline_auc;
                mcc_drop += 100.0 * (baseline_mcc - m) / baseline_mcc;
            }
            cells.push(MontageCell {
                fraction,
                affected,
                auc_degradation_pct: auc_drop / trials as f64,
                mcc_degradation_pct: mcc_drop / trials as f64,
            });
        }
    }
    Ok(MontageStressResult { baseline_auc, baseline_mcc, trials, seed, cells })
}
