//! CSV formats for probability traces and derived events.

use crate::error::{Error, Result};
use crate::infer::{PredictionTrace, TRACE_RATE};
use crate::signal::Event;

pub const PREDICTION_HEADER: &str = "channel,t_s,probability,valid";
pub const EVENTS_HEADER: &str = "channel,onset_s,offset_s";
/// Channel name for recording-level (global) rows.
pub const GLOBAL_CHANNEL: &str = "*";

/// One channel parsed back from a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedChannel {
    pub name: String,
    pub probs: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Smoothed per-channel probabilities, one row per 0.25 s instant.
pub fn render_prediction_csv(trace: &PredictionTrace) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    let step = 1.0 / TRACE_RATE as f64;
    for channel in &trace.channels {
        for (i, (&p, &v)) in channel.smoothed.iter().zip(&channel.valid).enumerate() {
            out.push_str(&format!(
                "{},{:.2},{:.6},{}\n",
                channel.name,
                i as f64 * step,
                p,
                v as u8
            ));
        }
    }
    out
}

/// Per-channel events plus global rows under the `*` channel.
pub fn render_events_csv(trace: &PredictionTrace) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for (channel, events) in trace.channels.iter().zip(&trace.channel_events) {
        for e in events {
            out.push_str(&format!("{},{:.2},{:.2}\n", channel.name, e.onset_s, e.offset_s));
        }
    }
    for e in &trace.global_events {
        out.push_str(&format!("{GLOBAL_CHANNEL},{:.2},{:.2}\n", e.onset_s, e.offset_s));
    }
    out
}

/// Parse a prediction file back into per-channel traces. Channels keep file
/// order; rows of one channel must be contiguous and time-ordered.
pub fn parse_prediction_csv(text: &str) -> Result<Vec<ParsedChannel>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PREDICTION_HEADER => {}
        _ => {
            return Err(Error::InvalidData(format!(
                "prediction file must start with {PREDICTION_HEADER:?}"
            )))
        }
    }
    let step = 1.0 / TRACE_RATE as f64;
    let mut channels: Vec<ParsedChannel> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::InvalidData(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let t: f64 = fields[1].parse().map_err(|_| {
            Error::InvalidData(format!("line {}: bad time {:?}", lineno + 1, fields[1]))
        })?;
        let p: f64 = fields[2].parse().map_err(|_| {
            Error::InvalidData(format!("line {}: bad probability {:?}", lineno + 1, fields[2]))
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidData(format!(
                "line {}: probability {p} outside [0, 1]",
                lineno + 1
            )));
        }
        let valid = match fields[3].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidData(format!(
                    "line {}: valid flag must be 0 or 1, got {other:?}",
                    lineno + 1
                )))
            }
        };
        let name = fields[0];
        if channels.last().map(|c| c.name.as_str()) != Some(name) {
            if channels.iter().any(|c| c.name == name) {
                return Err(Error::InvalidData(format!(
                    "line {}: channel {name:?} rows are not contiguous",
                    lineno + 1
                )));
            }
            channels.push(ParsedChannel { name: name.to_string(), probs: Vec::new(), valid: Vec::new() });
        }
        let channel = channels.last_mut().unwrap();
        let expected = channel.probs.len() as f64 * step;
        if (t - expected).abs() > 1e-6 {
            return Err(Error::InvalidData(format!(
                "line {}: expected t={expected}, got {t}",
                lineno + 1
            )));
        }
        channel.probs.push(p);
        channel.valid.push(valid);
    }
    if channels.is_empty() {
        return Err(Error::InvalidData("prediction file holds no rows".into()));
    }
    let len = channels[0].probs.len();
    if channels.iter().any(|c| c.probs.len() != len) {
        return Err(Error::InvalidData("channels differ in trace length".into()));
    }
    Ok(channels)
}

/// Render plain events (no trace context), used by mask conversions.
pub fn render_plain_events_csv(channel: &str, events: &[Event]) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&format!("{channel},{:.2},{:.2}\n", e.onset_s, e.offset_s));
    }
    out
}
