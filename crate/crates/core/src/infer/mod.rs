//! Sliding-window inference: per-channel probability traces at 4 Hz,
//! smoothing, thresholding and channel-max globalization.

mod io;

pub use io::{
    parse_prediction_csv, render_events_csv, render_plain_events_csv, render_prediction_csv,
    ParsedChannel, EVENTS_HEADER, GLOBAL_CHANNEL, PREDICTION_HEADER,
};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::signal::{events_to_mask, reject_artifacts, Event, PreprocessedRecording};
use crate::tensor::Tensor;

/// Probability samples per second.
pub const TRACE_RATE: usize = 4;
/// Window stride in samples at 64 Hz (0.25 s).
pub const STRIDE_SAMPLES: usize = 16;
/// Smoothing span: 32 s at 4 Hz.
pub const SMOOTH_TAPS: usize = 128;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Number of sliding windows over `n_samples` with the given window length.
pub fn window_count(n_samples: usize, window_samples: usize) -> usize {
    if n_samples < window_samples {
        0
    } else {
        (n_samples - window_samples) / STRIDE_SAMPLES + 1
    }
}

#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub name: String,
    /// Window probabilities hold-extended to the 4 Hz grid; invalid windows
    /// contribute probability zero.
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct PredictionTrace {
    pub id: String,
    pub threshold: f64,
    pub duration_s: f64,
    pub channels: Vec<ChannelTrace>,
    /// Instantwise channel maximum of the smoothed traces.
    pub global_smoothed: Vec<f64>,
    pub channel_events: Vec<Vec<Event>>,
    pub global_events: Vec<Event>,
}

impl PredictionTrace {
    pub fn is_empty(&self) -> bool {
        self.global_smoothed.is_empty()
    }

    pub fn channel_mask_1hz(&self, channel: usize) -> Result<Vec<bool>> {
        events_to_mask(&self.channel_events[channel], self.duration_s)
    }

    pub fn global_mask_1hz(&self) -> Result<Vec<bool>> {
        events_to_mask(&self.global_events, self.duration_s)
    }
}

/// Probabilities and validity for every sliding window of one channel.
/// Validity comes from the artifact stream; invalid windows score zero.
pub fn window_probs(
    model: &Model,
    filtered: &[f64],
    artifact: &[f64],
) -> Result<(Vec<f64>, Vec<bool>)> {
    if filtered.len() != artifact.len() {
        return Err(Error::Shape(format!(
            "filtered and artifact streams differ: {} vs {}",
            filtered.len(),
            artifact.len()
        )));
    }
    let window = model.config().input_length;
    let count = window_count(filtered.len(), window);
    let mut probs = Vec::with_capacity(count);
    let mut valid = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * STRIDE_SAMPLES;
        let ok = reject_artifacts(&artifact[start..start + window]).is_none();
        if ok {
            let input = Tensor::new(1, window, filtered[start..start + window].to_vec())?;
            probs.push(model.forward(&input)?);
        } else {
            probs.push(0.0);
        }
        valid.push(ok);
    }
    Ok((probs, valid))
}

/// Spread window values over the full 4 Hz grid. Interior instants take the
/// window centered on them; instants within half a window of either edge hold
/// the nearest full window's value.
pub fn hold_extend<T: Copy>(window_vals: &[T], n_samples: usize, window_samples: usize) -> Vec<T> {
    let trace_len = n_samples.div_ceil(STRIDE_SAMPLES);
    let half = window_samples / STRIDE_SAMPLES / 2;
    let mut out = Vec::with_capacity(trace_len);
    for i in 0..trace_len {
        let idx = (i as i64 - half as i64).clamp(0, window_vals.len() as i64 - 1) as usize;
        out.push(window_vals[idx]);
    }
    out
}

/// Centered 32 s moving average; edge windows are truncated and renormalized.
pub fn smooth(trace: &[f64]) -> Vec<f64> {
    let half = SMOOTH_TAPS / 2;
    let n = trace.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half - 1).min(n - 1);
        let sum: f64 = trace[lo..=hi].iter().sum();
        out.push(sum / (hi - lo + 1) as f64);
    }
    out
}

/// Threshold a 4 Hz trace (at-or-above) and merge contiguous runs into events
/// with 0.25 s resolution.
pub fn binarize(trace: &[f64], threshold: f64) -> Vec<Event> {
    let step = 1.0 / TRACE_RATE as f64;
    let mut events = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=trace.len() {
        let on = i < trace.len() && trace[i] >= threshold;
        match (run_start, on) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                events.push(Event { onset_s: s as f64 * step, offset_s: i as f64 * step });
                run_start = None;
            }
            _ => {}
        }
    }
    events
}

/// Instantwise maximum across channel traces.
pub fn channel_max(traces: &[&[f64]]) -> Result<Vec<f64>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("channel max of zero channels".into()))?;
    if traces.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Shape("channel traces differ in length".into()));
    }
    Ok((0..first.len())
        .map(|i| traces.iter().map(|t| t[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Full inference for one preprocessed recording: slide, hold-extend, smooth,
/// threshold per channel, and globalize by channel max.
pub fn sliding_predict(
    model: &Model,
    pre: &PreprocessedRecording,
    threshold: f64,
) -> Result<PredictionTrace> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    let window = model.config().input_length;
    let n = pre.samples_per_channel();
    let duration_s = pre.duration_s();
    if window_count(n, window) == 0 {
        return Ok(PredictionTrace {
            id: pre.id.clone(),
            threshold,
            duration_s,
            channels: Vec::new(),
            global_smoothed: Vec::new(),
            channel_events: Vec::new(),
            global_events: Vec::new(),
        });
    }
    let mut channels = Vec::with_capacity(pre.channel_names.len());
    let mut channel_events = Vec::with_capacity(pre.channel_names.len());
    for (c, name) in pre.channel_names.iter().enumerate() {
        let (w_probs, w_valid) = window_probs(model, &pre.filtered[c], &pre.artifact[c])?;
        let raw = hold_extend(&w_probs, n, window);
        let valid = hold_extend(&w_valid, n, window);
        let smoothed = smooth(&raw);
        channel_events.push(binarize(&smoothed, threshold));
        channels.push(ChannelTrace { name: name.clone(), raw, smoothed, valid });
    }
    let views: Vec<&[f64]> = channels.iter().map(|c| c.smoothed.as_slice()).collect();
    let global_smoothed = channel_max(&views)?;
    let global_events = binarize(&global_smoothed, threshold);
    Ok(PredictionTrace {
        id: pre.id.clone(),
        threshold,
        duration_s,
        channels,
        global_smoothed,
        channel_events,
        global_events,
    })
}
