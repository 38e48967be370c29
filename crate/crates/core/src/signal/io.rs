//! On-disk formats: the recording container (a directory with a JSON `meta`
//! file plus one little-endian f32 raw file per channel) and the annotation
//! CSV (`annotator,channel,onset_s,offset_s`, channel `*` meaning global).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{AnnotationSet, Event, Recording};

#[derive(Serialize, Deserialize)]
struct Meta {
    id: String,
    rate: u32,
    channels: Vec<String>,
    duration_s: f64,
}

fn channel_file(index: usize) -> String {
    format!("ch{index:02}.raw")
}

pub fn write_recording(rec: &Recording, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = Meta {
        id: rec.id.clone(),
        rate: rec.rate,
        channels: rec.channel_names.clone(),
        duration_s: rec.duration_s(),
    };
    std::fs::write(dir.join("meta"), serde_json::to_string_pretty(&meta)?)?;
    for (i, samples) in rec.channels.iter().enumerate() {
        let mut buf = Vec::with_capacity(samples.len() * 4);
        for v in samples {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(dir.join(channel_file(i)), buf)?;
    }
    Ok(())
}

pub fn read_recording(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join("meta");
    let meta: Meta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| {
        Error::InvalidData(format!("cannot read {}: {e}", meta_path.display()))
    })?)?;
    let mut channels = Vec::with_capacity(meta.channels.len());
    for i in 0..meta.channels.len() {
        let path = dir.join(channel_file(i));
        let buf = std::fs::read(&path)
            .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))?;
        if buf.len() % 4 != 0 {
            return Err(Error::InvalidData(format!(
                "{} has {} bytes, not a whole number of 4-byte samples",
                path.display(),
                buf.len()
            )));
        }
        channels.push(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect::<Vec<f64>>(),
        );
    }
    let rec = Recording::new(meta.id, meta.rate, meta.channels, channels)?;
    if (rec.duration_s() - meta.duration_s).abs() > 1.0 {
        return Err(Error::InvalidData(format!(
            "recording {}: meta claims {} s but channels hold {} s",
            rec.id,
            meta.duration_s,
            rec.duration_s()
        )));
    }
    Ok(rec)
}

const ANNOTATION_HEADER: &str = "annotator,channel,onset_s,offset_s";

pub fn write_annotations(sets: &[AnnotationSet], path: &Path) -> Result<()> {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for set in sets {
        for e in &set.global {
            out.push_str(&format!("{},*,{},{}\n", set.annotator, e.onset_s, e.offset_s));
        }
        for (channel, events) in &set.per_channel {
            for e in events {
                out.push_str(&format!("{},{},{},{}\n", set.annotator, channel, e.onset_s, e.offset_s));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads annotation sets grouped by annotator, in order of first appearance.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == ANNOTATION_HEADER => {}
        other => {
            return Err(Error::InvalidData(format!(
                "annotation file must start with `{ANNOTATION_HEADER}`, got {other:?}"
            )))
        }
    }
    let mut sets: Vec<AnnotationSet> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::InvalidData(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| {
                Error::InvalidData(format!("line {}: bad {what} `{s}`", lineno + 2))
            })
        };
        let annotator = fields[0].trim();
        let channel = fields[1].trim();
        let event = Event::new(parse(fields[2], "onset")?, parse(fields[3], "offset")?);
        if !(event.onset_s >= 0.0 && event.onset_s < event.offset_s) {
            return Err(Error::InvalidData(format!(
                "line {}: bad event [{}, {})",
                lineno + 2,
                event.onset_s,
                event.offset_s
            )));
        }
        let set = match sets.iter_mut().find(|s| s.annotator == annotator) {
            Some(s) => s,
            None => {
                sets.push(AnnotationSet::new(annotator));
                sets.last_mut().unwrap()
            }
        };
        if channel == "*" {
            set.global.push(event);
        } else {
            set.per_channel.entry(channel.to_string()).or_default().push(event);
        }
    }
    Ok(sets)
}
