//! Synthetic EEG: rhythmic-burst seizures over 1/f-ish background noise,
//! with exact second-aligned annotations. A stand-in for clinical data that
//! keeps every downstream mechanism testable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AnnotationSet, Event, Recording};
use crate::train::{stream_rng, TrainSegment};

pub const MIN_EVENT_S: u64 = 20;
pub const MAX_EVENT_S: u64 = 180;
pub const MIN_GAP_S: u64 = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub neonates: usize,
    pub channels: usize,
    /// Per-neonate duration in seconds.
    pub duration_s: u64,
    /// Fraction of time spent in seizure; 1/51 approximates 50:1.
    pub prevalence: f64,
    pub burst_low_hz: f64,
    pub burst_high_hz: f64,
    /// Peak seizure oscillation amplitude.
    pub burst_uv: f64,
    /// Background noise scale.
    pub background_uv: f64,
    /// Probability that a channel joins any given event.
    pub participation: f64,
    pub rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            neonates: 4,
            channels: 8,
            duration_s: 1800,
            prevalence: 1.0 / 51.0,
            burst_low_hz: 1.0,
            burst_high_hz: 4.0,
            burst_uv: 60.0,
            background_uv: 10.0,
            participation: 0.6,
            rate: 64,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neonates == 0 || self.channels == 0 || self.duration_s == 0 {
            return Err(Error::InvalidArgument(
                "cohort needs neonates, channels and duration".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.prevalence) {
            return Err(Error::InvalidArgument("prevalence must be in [0, 1)".into()));
        }
        if !(self.burst_low_hz > 0.0) || self.burst_high_hz < self.burst_low_hz {
            return Err(Error::InvalidArgument("bad burst frequency band".into()));
        }
        if !(0.0..=1.0).contains(&self.participation) {
            return Err(Error::InvalidArgument("participation must be in [0, 1]".into()));
        }
        let budget = (self.duration_s as f64 * self.prevalence) as u64;
        if self.prevalence > 0.0 && budget < MIN_EVENT_S {
            return Err(Error::InvalidArgument(format!(
                "prevalence {} over {} s leaves no room for a {MIN_EVENT_S} s event",
                self.prevalence, self.duration_s
            )));
        }
        Ok(())
    }
}

/// One generated neonate.
#[derive(Debug, Clone)]
pub struct SynthNeonate {
    pub recording: Recording,
    pub annotations: AnnotationSet,
}

/// Generate the whole cohort deterministically from the seed.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<SynthNeonate>> {
    config.validate()?;
    (0..config.neonates)
        .map(|i| synth_neonate(config, i))
        .collect()
}

fn synth_neonate(config: &SynthConfig, index: usize) -> Result<SynthNeonate> {
    let mut rng = stream_rng(config.seed, 4, index as u64);
    let events = place_events(config, &mut rng)?;

    // Channel participation per event; every event involves at least one.
    let mut per_channel_events: Vec<Vec<Event>> = vec![Vec::new(); config.channels];
    let mut participants: Vec<Vec<usize>> = Vec::with_capacity(events.len());
    for event in &events {
        let mut chosen: Vec<usize> =
            (0..config.channels).filter(|_| rng.random_bool(config.participation)).collect();
        if chosen.is_empty() {
            chosen.push(rng.random_range(0..config.channels));
        }
        for &c in &chosen {
            per_channel_events[c].push(event.clone());
        }
        participants.push(chosen);
    }

    let n = (config.duration_s * config.rate as u64) as usize;
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(config.channels);
    for _ in 0..config.channels {
        channels.push(background(n, config.background_uv, &mut rng));
    }
    for (event, chosen) in events.iter().zip(&participants) {
        for &c in chosen {
            add_burst(&mut channels[c], event, config, &mut rng);
        }
    }

    let id = format!("n{index:02}");
    let channel_names: Vec<String> = (0..config.channels).map(|c| format!("ch{c:02}")).collect();
    let recording = Recording::new(id.clone(), config.rate, channel_names.clone(), channels)?;

    let mut annotations = AnnotationSet::new("synth");
    annotations.global = events;
    for (name, list) in channel_names.iter().zip(per_channel_events) {
        if !list.is_empty() {
            annotations.per_channel.insert(name.clone(), list);
        }
    }
    annotations.validate_duration(config.duration_s as f64)?;
    Ok(SynthNeonate { recording, annotations })
}

/// Second-aligned, non-overlapping events filling roughly the prevalence
/// budget, separated by at least the minimum gap.
fn place_events<R: Rng>(config: &SynthConfig, rng: &mut R) -> Result<Vec<Event>> {
    let budget = (config.duration_s as f64 * config.prevalence).round() as u64;
    if budget < MIN_EVENT_S {
        return Ok(Vec::new());
    }
    let mut durations: Vec<u64> = Vec::new();
    let mut total = 0u64;
    while total < budget {
        let remaining = budget - total;
        let hi = MAX_EVENT_S.min(remaining.max(MIN_EVENT_S));
        let d = rng.random_range(MIN_EVENT_S..=hi);
        durations.push(d);
        total += d;
    }
    let k = durations.len() as u64;
    let free = config
        .duration_s
        .checked_sub(total)
        .filter(|&f| f >= (k + 1) * MIN_GAP_S)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "prevalence {} leaves no room for gaps over {} s",
                config.prevalence, config.duration_s
            ))
        })?;

    // Split the slack beyond the minimum gaps at k+1 random points.
    let slack = free - (k + 1) * MIN_GAP_S;
    let mut cuts: Vec<u64> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(slack);
    let mut events = Vec::with_capacity(durations.len());
    let mut t = 0u64;
    for (i, d) in durations.iter().enumerate() {
        t += MIN_GAP_S + (cuts[i + 1] - cuts[i]);
        events.push(Event { onset_s: t as f64, offset_s: (t + d) as f64 });
        t += d;
    }
    Ok(events)
}

/// White noise plus a leaky integrator of it, scaled to the target spread;
/// crudely 1/f-shaped, which is all the harness needs.
fn background<R: Rng>(n: usize, scale_uv: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut brown = 0.0;
    for _ in 0..n {
        let white: f64 = rng.random::<f64>() * 2.0 - 1.0;
        brown = 0.98 * brown + white;
        out.push(scale_uv * (0.6 * white + 0.12 * brown));
    }
    out
}

/// Rhythmic oscillation with a rising amplitude envelope over the event span.
fn add_burst<R: Rng>(samples: &mut [f64], event: &Event, config: &SynthConfig, rng: &mut R) {
    let rate = config.rate as f64;
    let freq = rng.random_range(config.burst_low_hz..=config.burst_high_hz);
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let start = (event.onset_s * rate) as usize;
    let end = ((event.offset_s * rate) as usize).min(samples.len());
    let span = (end - start).max(1) as f64;
    for (i, slot) in samples[start..end].iter_mut().enumerate() {
        let progress = i as f64 / span;
        let envelope = 0.3 + 0.7 * progress;
        let t = (start + i) as f64 / rate;
        *slot += config.burst_uv * envelope * (std::f64::consts::TAU * freq * t + phase).sin();
    }
}

/// Linearly separable 16 s segments for harness runs: high-SNR 10 Hz bursts
/// against low noise. Labels are trivially learnable by design.
pub fn separable_segments(
    n_pos: usize,
    n_neg: usize,
    segment_samples: usize,
    seed: u64,
) -> Vec<TrainSegment> {
    let mut rng = stream_rng(seed, 5, 0);
    let mut out = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let amp = rng.random_range(30.0..50.0);
        let samples = (0..segment_samples)
            .map(|t| {
                let osc = (std::f64::consts::TAU * 10.0 * t as f64 / 64.0 + phase).sin();
                amp * osc + rng.random::<f64>() * 4.0 - 2.0
            })
            .collect();
        out.push(TrainSegment { samples, label: true });
    }
    for _ in 0..n_neg {
        let samples = (0..segment_samples)
            .map(|_| rng.random::<f64>() * 8.0 - 4.0)
            .collect();
        out.push(TrainSegment { samples, label: false });
    }
    out
}
