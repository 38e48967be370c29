//! Descriptive statistics over multi-channel annotations and reference events.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::fleiss_kappa;
use crate::signal::{normalize_events, Event};

/// One global annotated event: the union of channel events linked by
/// transitive temporal overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStat {
    pub onset_s: f64,
    pub offset_s: f64,
    /// Channels contributing at least one second inside the event span.
    pub channels: usize,
    /// Fleiss kappa with channels as raters over the seconds of the span;
    /// absent for single-channel montages.
    pub kappa: Option<f64>,
}

impl EventStat {
    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationStats {
    pub events: Vec<EventStat>,
    /// Total annotated seizure minutes per channel, in montage order.
    pub channel_minutes: Vec<(String, f64)>,
}

/// Group per-channel events into global events and describe each one.
pub fn annotation_stats(
    per_channel: &BTreeMap<String, Vec<Event>>,
    channel_names: &[String],
) -> Result<AnnotationStats> {
    for name in per_channel.keys() {
        if !channel_names.iter().any(|c| c == name) {
            return Err(Error::InvalidData(format!("unknown channel {name:?}")));
        }
    }
    let mut normalized: Vec<(usize, Vec<Event>)> = Vec::new();
    for (idx, name) in channel_names.iter().enumerate() {
        let events = per_channel.get(name).cloned().unwrap_or_default();
        normalized.push((idx, normalize_events(&events)?));
    }

    let mut tagged: Vec<(usize, Event)> = normalized
        .iter()
        .flat_map(|(idx, evs)| evs.iter().map(move |e| (*idx, e.clone())))
        .collect();
    tagged.sort_by(|a, b| {
        a.1.onset_s
            .total_cmp(&b.1.onset_s)
            .then(a.1.offset_s.total_cmp(&b.1.offset_s))
    });

    let mut events = Vec::new();
    let mut group: Vec<(usize, Event)> = Vec::new();
    let mut end = f64::NEG_INFINITY;
    for (idx, ev) in tagged {
        if !group.is_empty() && ev.onset_s >= end {
            events.push(describe_group(&group, end, channel_names.len())?);
            group.clear();
        }
        end = if group.is_empty() { ev.offset_s } else { end.max(ev.offset_s) };
        group.push((idx, ev));
    }
    if !group.is_empty() {
        events.push(describe_group(&group, end, channel_names.len())?);
    }

    let channel_minutes = channel_names
        .iter()
        .zip(&normalized)
        .map(|(name, (_, evs))| {
            let secs: f64 = evs.iter().map(Event::duration_s).sum();
            (name.clone(), secs / 60.0)
        })
        .collect();
    Ok(AnnotationStats { events, channel_minutes })
}

fn describe_group(group: &[(usize, Event)], end: f64, channels: usize) -> Result<EventStat> {
    let onset = group[0].1.onset_s;
    let span = Event { onset_s: onset, offset_s: end };
    let mut seconds_inside = vec![0.0; channels];
    for (idx, ev) in group {
        seconds_inside[*idx] += ev.overlap_s(&span);
    }
    let participating = seconds_inside.iter().filter(|&&s| s >= 1.0).count();

    let kappa = if channels >= 2 {
        let first = onset.floor() as i64;
        let last = end.ceil() as i64;
        let width = (last - first).max(1) as usize;
        let mut masks = vec![vec![false; width]; channels];
        for (idx, ev) in group {
            for (i, slot) in masks[*idx].iter_mut().enumerate() {
                let sec_start = (first + i as i64) as f64;
                if ev.onset_s < sec_start + 1.0 && ev.offset_s > sec_start {
                    *slot = true;
                }
            }
        }
        let views: Vec<&[bool]> = masks.iter().map(|m| m.as_slice()).collect();
        Some(fleiss_kappa(&views)?)
    } else {
        None
    };
    Ok(EventStat { onset_s: onset, offset_s: end, channels: participating, kappa })
}

pub const DEFAULT_DURATION_EDGES: [f64; 4] = [30.0, 60.0, 120.0, 300.0];

/// Detection outcome for reference events whose duration falls in one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationBin {
    pub min_s: f64,
    /// Upper edge, exclusive; `None` for the open-ended last bin.
    pub max_s: Option<f64>,
    pub total: usize,
    pub detected: usize,
}

impl DurationBin {
    pub fn rate(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.detected as f64 / self.total as f64)
        }
    }
}

/// Bin reference events by duration and count how many are overlapped by at
/// least one predicted event.
pub fn detection_by_duration(
    pred: &[Event],
    reference: &[Event],
    edges: &[f64],
) -> Result<Vec<DurationBin>> {
    if edges.is_empty() {
        return Err(Error::InvalidArgument("duration bins need at least one edge".into()));
    }
    if edges.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::InvalidArgument("duration edges must be positive".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "duration edges must be strictly increasing".into(),
        ));
    }
    let mut bins: Vec<DurationBin> = Vec::with_capacity(edges.len() + 1);
    let mut lo = 0.0;
    for &e in edges {
        bins.push(DurationBin { min_s: lo, max_s: Some(e), total: 0, detected: 0 });
        lo = e;
    }
    bins.push(DurationBin { min_s: lo, max_s: None, total: 0, detected: 0 });

    for r in reference {
        let d = r.duration_s();
        let slot = match edges.iter().position(|&e| d < e) {
            Some(i) => i,
            None => edges.len(),
        };
        bins[slot].total += 1;
        if pred.iter().any(|p| p.intersects(r)) {
            bins[slot].detected += 1;
        }
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(onset: f64, offset: f64) -> Event {
        Event { onset_s: onset, offset_s: offset }
    }

    fn montage(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("ch{i:02}")).collect()
    }

    #[test]
    fn chained_overlap_forms_one_event() {
        let names = montage(3);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 10.0)]);
        per.insert(names[1].clone(), vec![ev(9.0, 20.0)]);
        per.insert(names[2].clone(), vec![ev(19.0, 30.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.events.len(), 1);
        let e = &stats.events[0];
        assert_eq!((e.onset_s, e.offset_s), (0.0, 30.0));
        assert_eq!(e.channels, 3);
    }

    #[test]
    fn touching_events_stay_separate() {
        let names = montage(2);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 10.0)]);
        per.insert(names[1].clone(), vec![ev(10.0, 20.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.events.len(), 2);
    }

    #[test]
    fn sub_second_participation_not_counted() {
        let names = montage(2);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 10.0)]);
        per.insert(names[1].clone(), vec![ev(9.5, 10.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.events.len(), 1);
        assert_eq!(stats.events[0].channels, 1);
    }

    #[test]
    fn identical_spans_give_unit_kappa() {
        let names = montage(8);
        let mut per = BTreeMap::new();
        for name in &names {
            per.insert(name.clone(), vec![ev(5.0, 25.0)]);
        }
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.events.len(), 1);
        assert_eq!(stats.events[0].kappa, Some(1.0));
        assert_eq!(stats.events[0].channels, 8);
    }

    #[test]
    fn event_kappa_hand_value() {
        // Two channels over a 4 s span: 1111 vs 1100 gives kappa -1/3.
        let names = montage(2);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 4.0)]);
        per.insert(names[1].clone(), vec![ev(0.0, 2.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        let k = stats.events[0].kappa.unwrap();
        assert!((k + 1.0 / 3.0).abs() < 1e-12, "kappa {k}");
    }

    #[test]
    fn single_channel_montage_has_no_kappa() {
        let names = montage(1);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 5.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.events[0].kappa, None);
        assert_eq!(stats.events[0].channels, 1);
    }

    #[test]
    fn channel_minutes_sum_durations() {
        let names = montage(2);
        let mut per = BTreeMap::new();
        per.insert(names[0].clone(), vec![ev(0.0, 60.0), ev(120.0, 180.0)]);
        let stats = annotation_stats(&per, &names).unwrap();
        assert_eq!(stats.channel_minutes[0], (names[0].clone(), 2.0));
        assert_eq!(stats.channel_minutes[1], (names[1].clone(), 0.0));
    }

    #[test]
    fn unknown_channel_rejected() {
        let names = montage(2);
        let mut per = BTreeMap::new();
        per.insert("mystery".to_string(), vec![ev(0.0, 5.0)]);
        assert!(annotation_stats(&per, &names).is_err());
    }

    #[test]
    fn duration_bins_route_and_score_events() {
        let refs = [ev(0.0, 10.0), ev(100.0, 145.0), ev(300.0, 390.0), ev(500.0, 700.0), ev(1000.0, 1400.0)];
        let preds = [ev(5.0, 8.0), ev(310.0, 320.0), ev(1100.0, 1150.0)];
        let bins = detection_by_duration(&preds, &refs, &DEFAULT_DURATION_EDGES).unwrap();
        assert_eq!(bins.len(), 5);
        let totals: Vec<usize> = bins.iter().map(|b| b.total).collect();
        assert_eq!(totals, vec![1, 1, 1, 1, 1]);
        let detected: Vec<usize> = bins.iter().map(|b| b.detected).collect();
        assert_eq!(detected, vec![1, 0, 1, 0, 1]);
        assert_eq!(bins[0].rate(), Some(1.0));
        assert_eq!(bins[1].rate(), Some(0.0));
        assert_eq!(bins[4].max_s, None);
    }

    #[test]
    fn empty_bin_has_no_rate() {
        let refs = [ev(0.0, 10.0)];
        let bins = detection_by_duration(&[], &refs, &DEFAULT_DURATION_EDGES).unwrap();
        assert_eq!(bins[0].rate(), Some(0.0));
        assert_eq!(bins[1].rate(), None);
    }

    #[test]
    fn bad_edges_rejected() {
        let refs = [ev(0.0, 10.0)];
        assert!(detection_by_duration(&[], &refs, &[]).is_err());
        assert!(detection_by_duration(&[], &refs, &[30.0, 30.0]).is_err());
        assert!(detection_by_duration(&[], &refs, &[-1.0, 30.0]).is_err());
    }

    #[test]
    fn boundary_duration_goes_to_upper_bin() {
        let refs = [ev(0.0, 30.0)];
        let bins = detection_by_duration(&[], &refs, &DEFAULT_DURATION_EDGES).unwrap();
        assert_eq!(bins[0].total, 0);
        assert_eq!(bins[1].total, 1);
    }
}
