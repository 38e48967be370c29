//! Recording ingestion, filtering, resampling, artifact rejection,
//! segmentation and mask plumbing.

mod filter;
mod io;
mod resample;

pub use filter::{bandpass, butter_bandpass, SosFilter, BAND_HIGH_HZ, BAND_LOW_HZ};
pub use io::{read_annotations, read_recording, write_annotations, write_recording};
pub use resample::{output_length, resample_to_64, TARGET_RATE};

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// 16 s windows, stepped by 4 s.
pub const SEGMENT_SECONDS: usize = 16;
pub const STEP_SECONDS: usize = 4;
pub const SEGMENT_SAMPLES: usize = SEGMENT_SECONDS * TARGET_RATE as usize;
pub const STEP_SAMPLES: usize = STEP_SECONDS * TARGET_RATE as usize;
/// A segment is a seizure iff at least this much of it is annotated.
pub const LABEL_OVERLAP_SECONDS: f64 = 8.0;
/// Artifact rules: a contiguous run of exact zeros at least this long, or a
/// segment standard deviation above 1 mV.
pub const ZERO_RUN_SAMPLES: usize = TARGET_RATE as usize;
pub const AMPLITUDE_STD_LIMIT_UV: f64 = 1000.0;

/// One annotated interval in seconds, half-open `[onset, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Event {
    pub onset_s: f64,
    pub offset_s: f64,
}

impl Event {
    pub fn new(onset_s: f64, offset_s: f64) -> Self {
        Self { onset_s, offset_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }

    pub fn overlap_s(&self, other: &Event) -> f64 {
        (self.offset_s.min(other.offset_s) - self.onset_s.max(other.onset_s)).max(0.0)
    }

    pub fn intersects(&self, other: &Event) -> bool {
        self.onset_s < other.offset_s && other.onset_s < self.offset_s
    }
}

/// Sorts events and merges overlapping ones; rejects empty or negative
/// intervals and negative onsets.
pub fn normalize_events(events: &[Event]) -> Result<Vec<Event>> {
    for e in events {
        if !(e.onset_s >= 0.0 && e.onset_s < e.offset_s) || !e.offset_s.is_finite() {
            return Err(Error::InvalidData(format!(
                "bad event [{}, {})",
                e.onset_s, e.offset_s
            )));
        }
    }
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    let mut merged: Vec<Event> = Vec::with_capacity(sorted.len());
    for e in sorted {
        match merged.last_mut() {
            Some(last) if e.onset_s < last.offset_s => {
                last.offset_s = last.offset_s.max(e.offset_s);
            }
            _ => merged.push(e),
        }
    }
    Ok(merged)
}

/// 1 s-resolution binary mask; second `i` is set iff it intersects an event.
pub fn events_to_mask(events: &[Event], duration_s: f64) -> Result<Vec<bool>> {
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidArgument(format!("bad duration {duration_s}")));
    }
    let seconds = duration_s.ceil() as usize;
    let mut mask = vec![false; seconds];
    for e in normalize_events(events)? {
        if e.offset_s > duration_s + 1e-9 {
            return Err(Error::InvalidData(format!(
                "event [{}, {}) extends beyond the {duration_s} s recording",
                e.onset_s, e.offset_s
            )));
        }
        let first = e.onset_s.floor() as usize;
        let last = seconds.min(e.offset_s.ceil() as usize);
        for (i, m) in mask.iter_mut().enumerate().take(last).skip(first) {
            let second = Event::new(i as f64, (i + 1) as f64);
            if second.intersects(&e) {
                *m = true;
            }
        }
    }
    Ok(mask)
}

/// Merges adjacent positive seconds into integer-second events.
pub fn mask_to_events(mask: &[bool]) -> Vec<Event> {
    let mut events = Vec::new();
    let mut start = None;
    for (i, on) in mask.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push(Event::new(s as f64, i as f64));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        events.push(Event::new(s as f64, mask.len() as f64));
    }
    events
}

/// A multichannel recording in microvolts.
#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub rate: u32,
    pub channel_names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(
        id: String,
        rate: u32,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !matches!(rate, 64 | 200 | 256 | 500) {
            return Err(Error::UnsupportedRate(rate));
        }
        if channel_names.len() != channels.len() || channels.is_empty() {
            return Err(Error::InvalidData(format!(
                "recording {id}: {} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidData(format!("recording {id}: unequal channel lengths")));
        }
        Ok(Self { id, rate, channel_names, channels })
    }

    pub fn duration_s(&self) -> f64 {
        self.channels[0].len() as f64 / self.rate as f64
    }
}

/// All events of one annotator over one recording: global (`*`) events plus
/// per-channel lists keyed by channel name.
#[derive(Debug, Clone, Default)]
pub struct AnnotationSet {
    pub annotator: String,
    pub global: Vec<Event>,
    pub per_channel: BTreeMap<String, Vec<Event>>,
}

impl AnnotationSet {
    pub fn new(annotator: &str) -> Self {
        Self { annotator: annotator.to_string(), ..Default::default() }
    }

    pub fn channel_events(&self, channel: &str) -> &[Event] {
        self.per_channel.get(channel).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Union of the global list and every per-channel list, normalized:
    /// the "any channel" view of this annotator.
    pub fn global_events(&self) -> Result<Vec<Event>> {
        let mut all = self.global.clone();
        for events in self.per_channel.values() {
            all.extend_from_slice(events);
        }
        normalize_events(&all)
    }

    /// Normalizes every event list in place.
    pub fn normalize(&mut self) -> Result<()> {
        self.global = normalize_events(&self.global)?;
        for events in self.per_channel.values_mut() {
            *events = normalize_events(events)?;
        }
        Ok(())
    }

    pub fn validate_duration(&self, duration_s: f64) -> Result<()> {
        let all = self.global.iter().chain(self.per_channel.values().flatten());
        for e in all {
            if e.offset_s > duration_s + 1e-9 {
                return Err(Error::InvalidData(format!(
                    "annotator {}: event [{}, {}) beyond the {duration_s} s recording",
                    self.annotator, e.onset_s, e.offset_s
                )));
            }
        }
        Ok(())
    }
}

/// Why a segment was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RejectReason {
    ZeroRun,
    Amplitude,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::ZeroRun => write!(f, "zero-run"),
            RejectReason::Amplitude => write!(f, "amplitude"),
        }
    }
}

impl RejectReason {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "zero-run" => Some(RejectReason::ZeroRun),
            "amplitude" => Some(RejectReason::Amplitude),
            _ => None,
        }
    }
}

/// Artifact check for a 64 Hz segment. `None` means the segment is usable.
pub fn reject_artifacts(samples: &[f64]) -> Option<RejectReason> {
    let mut run = 0usize;
    for v in samples {
        if *v == 0.0 {
            run += 1;
            if run >= ZERO_RUN_SAMPLES {
                return Some(RejectReason::ZeroRun);
            }
        } else {
            run = 0;
        }
    }
    let n = samples.len() as f64;
    let mean: f64 = samples.iter().sum::<f64>() / n;
    let var: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var.sqrt() > AMPLITUDE_STD_LIMIT_UV {
        return Some(RejectReason::Amplitude);
    }
    None
}

/// One 16 s model input with its label and validity.
#[derive(Debug, Clone)]
pub struct LabeledSegment {
    pub channel: usize,
    pub start_s: f64,
    pub samples: Vec<f64>,
    pub label: bool,
    pub valid: bool,
    pub reason: Option<RejectReason>,
}

/// A recording brought to the 64 Hz model timeline. `filtered` fed to the
/// model; `artifact` is the unfiltered stream the artifact rules see (exact
/// zeros and raw amplitudes survive only there).
#[derive(Debug, Clone)]
pub struct PreprocessedRecording {
    pub id: String,
    pub channel_names: Vec<String>,
    pub filtered: Vec<Vec<f64>>,
    pub artifact: Vec<Vec<f64>>,
}

impl PreprocessedRecording {
    pub fn samples_per_channel(&self) -> usize {
        self.filtered.first().map(Vec::len).unwrap_or(0)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples_per_channel() as f64 / TARGET_RATE as f64
    }
}

/// Band-pass, then resample every channel to 64 Hz.
pub fn preprocess(rec: &Recording) -> Result<PreprocessedRecording> {
    let mut filtered = Vec::with_capacity(rec.channels.len());
    let mut artifact = Vec::with_capacity(rec.channels.len());
    for raw in &rec.channels {
        filtered.push(resample_to_64(&bandpass(raw, rec.rate)?, rec.rate)?);
        artifact.push(resample_to_64(raw, rec.rate)?);
    }
    Ok(PreprocessedRecording {
        id: rec.id.clone(),
        channel_names: rec.channel_names.clone(),
        filtered,
        artifact,
    })
}

/// Cuts 16 s segments every 4 s from each channel and labels them with the
/// >= 8 s rule against that channel's reference events.
pub fn segment(
    pre: &PreprocessedRecording,
    events_per_channel: &[Vec<Event>],
) -> Result<Vec<LabeledSegment>> {
    if events_per_channel.len() != pre.filtered.len() {
        return Err(Error::InvalidArgument(format!(
            "{} event lists for {} channels",
            events_per_channel.len(),
            pre.filtered.len()
        )));
    }
    let n = pre.samples_per_channel();
    let duration = pre.duration_s();
    let mut segments = Vec::new();
    for (c, (samples, events)) in pre.filtered.iter().zip(events_per_channel).enumerate() {
        let events = normalize_events(events)?;
        for e in &events {
            if e.offset_s > duration + 1e-9 {
                return Err(Error::InvalidData(format!(
                    "event [{}, {}) beyond the {duration} s recording",
                    e.onset_s, e.offset_s
                )));
            }
        }
        let mut start = 0usize;
        while start + SEGMENT_SAMPLES <= n {
            let start_s = (start / TARGET_RATE as usize) as f64;
            let window = Event::new(start_s, start_s + SEGMENT_SECONDS as f64);
            let overlap: f64 = events.iter().map(|e| e.overlap_s(&window)).sum();
            let reason = reject_artifacts(&pre.artifact[c][start..start + SEGMENT_SAMPLES]);
            segments.push(LabeledSegment {
                channel: c,
                start_s,
                samples: samples[start..start + SEGMENT_SAMPLES].to_vec(),
                label: overlap >= LABEL_OVERLAP_SECONDS,
                valid: reason.is_none(),
                reason,
            });
            start += STEP_SAMPLES;
        }
    }
    Ok(segments)
}
