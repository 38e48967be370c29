//! Command-line front end tying the pipeline together: preprocess, train,
//! predict, evaluate, the equivalence test and the experiment harnesses.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::equivalence::{bootstrap_test, NeonateMasks};
use crate::error::{Error, Result};
use crate::experiments::{
    montage_csv, montage_stress, montage_svg, scaling_csv, scaling_run, scaling_svg,
    synth_generate, ScalingAxis, ScalingConfig, SynthConfig, DEFAULT_FRACTIONS,
};
use crate::infer::{
    binarize, channel_max, parse_prediction_csv, render_events_csv, render_prediction_csv,
    sliding_predict, ParsedChannel, DEFAULT_THRESHOLD, PREDICTION_HEADER, TRACE_RATE,
};
use crate::metrics::{consensus, evaluate as evaluate_recordings, mean_per_second, render_csv, RecordingEval};
use crate::model::{load_weights, save_weights, ModelConfig, Variant};
use crate::signal::{
    events_to_mask, mask_to_events, preprocess, read_annotations, read_recording, segment,
    write_annotations, write_recording, AnnotationSet, Event, Recording, RejectReason,
    TARGET_RATE,
};
use crate::train::{train, render_log_csv, TrainConfig, TrainSegment};

const SEGMENTS_FILE: &str = "segments.csv";
const SEGMENTS_HEADER: &str = "channel,start_s,label,valid,reason";
const ANNOTATIONS_FILE: &str = "annotations.csv";

#[derive(Parser)]
#[command(
    name = "seizr",
    version,
    about = "Neonatal EEG seizure detection: preprocessing, training, inference, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band-pass, resample to 64 Hz, cut labeled 16 s segments.
    Preprocess {
        /// Recording directory (meta + chNN.raw, optionally annotations.csv).
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Keep artifact-rejected segments in the index (marked invalid).
        #[arg(long)]
        keep_invalid: bool,
        /// Annotator whose events label the segments; default: first in file.
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Train a model on a preprocessed directory.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// nano|small|medium|large|xl, or: custom DEPTH WIDTH
        #[arg(long, num_args(1..=3), default_values_t = [String::from("nano")])]
        model: Vec<String>,
        /// Training config as JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Weights output; a training log lands next to it as <OUT>.log.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sliding-window inference over a raw recording directory.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        /// Probability-trace CSV; events land next to it as <OUT>.events.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Score a prediction file against reference annotations.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        /// Annotation CSV (annotator,channel,onset_s,offset_s).
        #[arg(long, value_name = "CSV")]
        r#ref: PathBuf,
        /// Annotators to pool; default: all in the file.
        #[arg(long, value_delimiter = ',')]
        annotators: Vec<String>,
        /// Consensus rule over the chosen annotators.
        #[arg(long, default_value = "unanimous")]
        consensus: String,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional probability-trace plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Bootstrap the expert-equivalence test on per-neonate masks.
    KappaTest {
        /// Three annotation CSVs, one per expert, annotator column = neonate id.
        #[arg(long, num_args(3))]
        experts: Vec<PathBuf>,
        /// AI detections: prediction CSVs (one neonate each) and/or annotation
        /// CSVs keyed by neonate id.
        #[arg(long, num_args(1..))]
        ai: Vec<PathBuf>,
        /// Per-neonate duration for annotation-format AI files.
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full result as JSON, bootstrap sample included.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cohort of recordings with exact annotations.
    Synth {
        /// Cohort config as JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Data/model scaling sweep on the separable synthetic task.
    ScalingRun {
        /// segments | neonates | model
        #[arg(long)]
        axis: String,
        /// Segment or neonate counts, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        /// Model ladder for the model axis.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, num_args(1..=3), default_values_t = [String::from("nano")])]
        model: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Samples per training segment (multiple of 32).
        #[arg(long, default_value_t = 1024)]
        segment_samples: usize,
        #[arg(long, default_value_t = 64)]
        segments_per_neonate: usize,
        /// Pool size on the model axis.
        #[arg(long, default_value_t = 1400)]
        pool: usize,
        #[arg(long, default_value_t = 40)]
        holdout_pos: usize,
        #[arg(long, default_value_t = 200)]
        holdout_neg: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Channel-dropout stress on a saved prediction file.
    MontageStress {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_name = "CSV")]
        r#ref: PathBuf,
        /// Annotator providing the reference events; default: first in file.
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

pub fn run() -> Result<()> {
    dispatch(Cli::parse())
}

/// Entry point for tests; parses the given argv instead of the process one.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch(Cli::parse_from(args))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { r#in, out, keep_invalid, annotator } => {
            cmd_preprocess(&r#in, &out, keep_invalid, annotator.as_deref())
        }
        Command::Train { data, model, config, out } => {
            cmd_train(&data, &model, config.as_deref(), &out)
        }
        Command::Predict { weights, r#in, out, threshold } => {
            cmd_predict(&weights, &r#in, &out, threshold)
        }
        Command::Evaluate { pred, r#ref, annotators, consensus, threshold, out, svg } => {
            cmd_evaluate(&pred, &r#ref, &annotators, &consensus, threshold, &out, svg.as_deref())
        }
        Command::KappaTest { experts, ai, duration_s, threshold, iterations, seed, out } => {
            cmd_kappa_test(&experts, &ai, duration_s, threshold, iterations, seed, &out)
        }
        Command::Synth { config, out } => cmd_synth(config.as_deref(), &out),
        Command::ScalingRun {
            axis,
            grid,
            variants,
            model,
            config,
            trials,
            segment_samples,
            segments_per_neonate,
            pool,
            holdout_pos,
            holdout_neg,
            seed,
            out,
        } => cmd_scaling_run(
            &axis,
            grid,
            &variants,
            &model,
            config.as_deref(),
            trials,
            segment_samples,
            segments_per_neonate,
            pool,
            holdout_pos,
            holdout_neg,
            seed,
            &out,
        ),
        Command::MontageStress { pred, r#ref, annotator, fractions, trials, seed, out } => {
            cmd_montage_stress(&pred, &r#ref, annotator.as_deref(), &fractions, trials, seed, &out)
        }
    }
}

fn parse_model(tokens: &[String]) -> Result<ModelConfig> {
    match tokens {
        [name] => Variant::from_name(name).map(ModelConfig::variant).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown model `{name}`; use nano|small|medium|large|xl or `custom D W`"
            ))
        }),
        [word, d, w] if word == "custom" => {
            let depth = d.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("custom model depth `{d}` is not a number"))
            })?;
            let width = w.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("custom model width `{w}` is not a number"))
            })?;
            ModelConfig::new(depth, width)
        }
        _ => Err(Error::InvalidArgument(
            "--model takes a size name or `custom DEPTH WIDTH`".into(),
        )),
    }
}

fn read_json_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(T::default()),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(suffix);
    PathBuf::from(os)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "rec".into())
}

/// Events labeling each channel: the channel's own track when the annotator
/// drew one, the global track otherwise.
fn labeling_events(set: &AnnotationSet, channel_names: &[String]) -> Vec<Vec<Event>> {
    channel_names
        .iter()
        .map(|name| {
            let own = set.channel_events(name);
            if own.is_empty() { set.global.clone() } else { own.to_vec() }
        })
        .collect()
}

fn pick_annotator<'a>(
    sets: &'a [AnnotationSet],
    wanted: Option<&str>,
    path: &Path,
) -> Result<&'a AnnotationSet> {
    match wanted {
        Some(name) => sets.iter().find(|s| s.annotator == name).ok_or_else(|| {
            Error::InvalidArgument(format!("annotator `{name}` not in {}", path.display()))
        }),
        None => sets.first().ok_or_else(|| {
            Error::InvalidData(format!("{} holds no annotations", path.display()))
        }),
    }
}

fn cmd_preprocess(
    in_dir: &Path,
    out_dir: &Path,
    keep_invalid: bool,
    annotator: Option<&str>,
) -> Result<()> {
    let rec = read_recording(in_dir)?;
    let pre = preprocess(&rec)?;

    let ann_path = in_dir.join(ANNOTATIONS_FILE);
    let events = if ann_path.exists() {
        let sets = read_annotations(&ann_path)?;
        labeling_events(pick_annotator(&sets, annotator, &ann_path)?, &rec.channel_names)
    } else {
        vec![Vec::new(); rec.channel_names.len()]
    };
    let segments = segment(&pre, &events)?;

    let out_rec = Recording::new(
        pre.id.clone(),
        TARGET_RATE,
        pre.channel_names.clone(),
        pre.filtered.clone(),
    )?;
    write_recording(&out_rec, out_dir)?;

    let mut csv = String::from(SEGMENTS_HEADER);
    csv.push('\n');
    let mut kept = 0usize;
    let mut seizure = 0usize;
    for s in &segments {
        if !s.valid && !keep_invalid {
            continue;
        }
        kept += 1;
        seizure += usize::from(s.label && s.valid);
        let reason = s.reason.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{reason}",
            s.channel,
            s.start_s,
            u8::from(s.label),
            u8::from(s.valid),
        );
    }
    std::fs::write(out_dir.join(SEGMENTS_FILE), csv)?;
    println!(
        "preprocessed {}: {} segments written ({} of {} valid seizure), {} dropped",
        pre.id,
        kept,
        seizure,
        segments.iter().filter(|s| s.valid).count(),
        segments.len() - kept,
    );
    Ok(())
}

fn parse_segments_csv(text: &str, path: &Path) -> Result<Vec<(usize, f64, bool, bool, Option<RejectReason>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SEGMENTS_HEADER => {}
        other => {
            return Err(Error::InvalidData(format!(
                "{}: expected header `{SEGMENTS_HEADER}`, got {other:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::InvalidData(format!(
                "{} line {}: expected 5 fields",
                path.display(),
                lineno + 2
            )));
        }
        let bad = |what: &str| {
            Error::InvalidData(format!("{} line {}: bad {what}", path.display(), lineno + 2))
        };
        let channel = fields[0].parse::<usize>().map_err(|_| bad("channel"))?;
        let start_s = fields[1].parse::<f64>().map_err(|_| bad("start_s"))?;
        let label = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label")),
        };
        let valid = match fields[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("valid")),
        };
        let reason = match fields[4] {
            "" => None,
            name => Some(RejectReason::from_name(name).ok_or_else(|| bad("reason"))?),
        };
        rows.push((channel, start_s, label, valid, reason));
    }
    Ok(rows)
}

fn load_train_segments(data: &Path) -> Result<Vec<TrainSegment>> {
    let rec = read_recording(data)?;
    if rec.rate != TARGET_RATE {
        return Err(Error::InvalidData(format!(
            "training data must be preprocessed to {TARGET_RATE} Hz, found {} Hz",
            rec.rate
        )));
    }
    let csv_path = data.join(SEGMENTS_FILE);
    let text = std::fs::read_to_string(&csv_path)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", csv_path.display())))?;
    let rows = parse_segments_csv(&text, &csv_path)?;
    let mut segments = Vec::new();
    for (channel, start_s, label, valid, _) in rows {
        if !valid {
            continue;
        }
        let samples = rec.channels.get(channel).ok_or_else(|| {
            Error::InvalidData(format!("segment references channel {channel} beyond recording"))
        })?;
        let start = (start_s * TARGET_RATE as f64).round() as usize;
        let end = start + crate::signal::SEGMENT_SAMPLES;
        if (start_s * TARGET_RATE as f64).fract() != 0.0 || end > samples.len() {
            return Err(Error::InvalidData(format!(
                "segment at {start_s} s does not lie on the {TARGET_RATE} Hz grid"
            )));
        }
        segments.push(TrainSegment { samples: samples[start..end].to_vec(), label });
    }
    Ok(segments)
}

fn cmd_train(
    data: &Path,
    model_tokens: &[String],
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let model_config = parse_model(model_tokens)?;
    let train_config: TrainConfig = read_json_config(config)?;
    let segments = load_train_segments(data)?;
    let outcome = train(&segments, &model_config, &train_config)?;

    save_weights(&outcome.model, out)?;
    let log_path = sibling(out, ".log.csv");
    std::fs::write(&log_path, render_log_csv(&outcome.log))?;

    if let Some((step, loss)) = outcome.diverged {
        eprintln!(
            "last finite weights kept at {}; log at {}",
            out.display(),
            log_path.display()
        );
        return Err(Error::Diverged { step, loss });
    }
    let tail = outcome.log.last();
    println!(
        "trained {} on {} segments, {} steps; final loss {}, train AUC {}",
        model_config.variant_name(),
        segments.len(),
        outcome.steps,
        tail.map(|l| format!("{:.4}", l.loss)).unwrap_or_default(),
        tail.and_then(|l| l.train_auc).map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into()),
    );
    Ok(())
}

fn cmd_predict(weights: &Path, in_dir: &Path, out: &Path, threshold: f64) -> Result<()> {
    let model = load_weights(weights)?;
    let rec = read_recording(in_dir)?;
    let pre = preprocess(&rec)?;
    let trace = sliding_predict(&model, &pre, threshold)?;
    std::fs::write(out, render_prediction_csv(&trace))?;
    let events_path = sibling(out, ".events.csv");
    std::fs::write(&events_path, render_events_csv(&trace))?;
    println!(
        "predicted {}: {} channels over {} s, {} global events -> {}, {}",
        trace.id,
        trace.channels.len(),
        trace.duration_s,
        trace.global_events.len(),
        out.display(),
        events_path.display(),
    );
    Ok(())
}

/// Build the 1 Hz global probability trace and the thresholded mask from a
/// parsed prediction file.
fn global_from_channels(
    channels: &[ParsedChannel],
    threshold: f64,
) -> Result<(Vec<f64>, Vec<bool>, Vec<f64>)> {
    let views: Vec<&[f64]> = channels.iter().map(|c| c.probs.as_slice()).collect();
    let global = channel_max(&views)?;
    let probs_1hz = mean_per_second(&global, TRACE_RATE)?;
    let seconds = probs_1hz.len();
    let pred_mask = events_to_mask(&binarize(&global, threshold), seconds as f64)?;
    Ok((global, pred_mask, probs_1hz))
}

fn reference_mask(
    sets: &[AnnotationSet],
    annotators: &[String],
    rule: &str,
    seconds: usize,
) -> Result<Vec<bool>> {
    if rule != "unanimous" {
        return Err(Error::InvalidArgument(format!(
            "unsupported consensus rule `{rule}`; only `unanimous` exists"
        )));
    }
    let chosen: Vec<&AnnotationSet> = if annotators.is_empty() {
        sets.iter().collect()
    } else {
        annotators
            .iter()
            .map(|name| {
                sets.iter().find(|s| &s.annotator == name).ok_or_else(|| {
                    Error::InvalidArgument(format!("annotator `{name}` not in reference file"))
                })
            })
            .collect::<Result<_>>()?
    };
    let masks: Vec<Vec<bool>> = chosen
        .iter()
        .map(|set| events_to_mask(&set.global_events()?, seconds as f64))
        .collect::<Result<_>>()?;
    consensus(&masks)
}

fn cmd_evaluate(
    pred: &Path,
    ref_csv: &Path,
    annotators: &[String],
    rule: &str,
    threshold: f64,
    out: &Path,
    svg: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(pred)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", pred.display())))?;
    let channels = parse_prediction_csv(&text)?;
    let (global, pred_mask, probs_1hz) = global_from_channels(&channels, threshold)?;
    let seconds = probs_1hz.len();
    let sets = read_annotations(ref_csv)?;
    let ref_mask = reference_mask(&sets, annotators, rule, seconds)?;

    let eval = RecordingEval {
        id: file_stem(pred),
        probs: probs_1hz,
        pred_mask,
        ref_mask: ref_mask.clone(),
    };
    let summary = evaluate_recordings(std::slice::from_ref(&eval))?;
    std::fs::write(out, render_csv(&summary))?;
    if let Some(svg_path) = svg {
        std::fs::write(svg_path, trace_svg(&global, &ref_mask, threshold))?;
    }
    let report = &summary.concatenated;
    println!(
        "evaluated {} over {seconds} s: auc {}, mcc {:.4}, fd/h {:.4} -> {}",
        eval.id,
        report.auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        report.mcc,
        report.fd_per_hour,
        out.display(),
    );
    Ok(())
}

/// Probability trace against the reference mask: shaded seizure seconds, the
/// smoothed global trace, and the decision threshold.
fn trace_svg(global_4hz: &[f64], ref_mask: &[bool], threshold: f64) -> String {
    const W: f64 = 960.0;
    const H: f64 = 240.0;
    const L: f64 = 48.0;
    const B: f64 = 28.0;
    const T: f64 = 12.0;
    let seconds = ref_mask.len().max(1) as f64;
    let x = |t_s: f64| L + (t_s / seconds) * (W - L - 8.0);
    let y = |p: f64| H - B - p.clamp(0.0, 1.0) * (H - T - B);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"11\">"
    );
    for e in mask_to_events(ref_mask) {
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{T}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#fdd\"/>",
            x(e.onset_s),
            x(e.offset_s) - x(e.onset_s),
            H - T - B,
        );
    }
    let _ = writeln!(
        out,
        "<line x1=\"{L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#888\" \
         stroke-dasharray=\"4 3\"/>",
        y(threshold),
        W - 8.0,
        y(threshold),
    );
    // Decimate long traces; plots stay readable and files bounded.
    let step = (global_4hz.len() / 1920).max(1);
    let mut path = String::new();
    for (i, p) in global_4hz.iter().step_by(step).enumerate() {
        let t = (i * step) as f64 / TRACE_RATE as f64;
        let cmd = if path.is_empty() { 'M' } else { 'L' };
        let _ = write!(path, "{cmd} {:.1} {:.1} ", x(t), y(*p));
    }
    let _ = writeln!(out, "<path d=\"{}\" fill=\"none\" stroke=\"#1f77b4\"/>", path.trim_end());
    let _ = writeln!(
        out,
        "<path d=\"M {L} {T} L {L} {:.1} L {:.1} {:.1}\" fill=\"none\" stroke=\"black\"/>",
        H - B,
        W - 8.0,
        H - B,
    );
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\">time / s</text>", W / 2.0, H - 8.0);
    let _ = writeln!(out, "<text x=\"4\" y=\"{:.1}\">p</text>", (T + H - B) / 2.0);
    out.push_str("</svg>\n");
    out
}

/// One neonate parsed from an AI input file.
fn ai_neonates(
    paths: &[PathBuf],
    duration_s: Option<f64>,
    threshold: f64,
) -> Result<Vec<(String, Vec<bool>)>> {
    let mut out: Vec<(String, Vec<bool>)> = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))?;
        let first = text.lines().next().map(str::trim).unwrap_or_default();
        if first == PREDICTION_HEADER {
            let channels = parse_prediction_csv(&text)?;
            let (_, pred_mask, _) = global_from_channels(&channels, threshold)?;
            out.push((file_stem(path), pred_mask));
        } else {
            let duration = duration_s.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{} is an annotation-format AI file; --duration-s is required",
                    path.display()
                ))
            })?;
            for set in read_annotations(path)? {
                let mask = events_to_mask(&set.global_events()?, duration)?;
                out.push((set.annotator.clone(), mask));
            }
        }
    }
    for pair in out.windows(2) {
        if out.iter().filter(|(id, _)| *id == pair[0].0).count() > 1 {
            return Err(Error::InvalidData(format!("duplicate AI neonate id `{}`", pair[0].0)));
        }
    }
    Ok(out)
}

fn cmd_kappa_test(
    experts: &[PathBuf],
    ai: &[PathBuf],
    duration_s: Option<f64>,
    threshold: f64,
    iterations: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ai_masks = ai_neonates(ai, duration_s, threshold)?;
    let known: Vec<&str> = ai_masks.iter().map(|(id, _)| id.as_str()).collect();

    let mut expert_sets: Vec<Vec<AnnotationSet>> = Vec::with_capacity(experts.len());
    for path in experts {
        let sets = read_annotations(path)?;
        for set in &sets {
            if !known.contains(&set.annotator.as_str()) {
                return Err(Error::InvalidData(format!(
                    "{}: neonate `{}` has no AI detections",
                    path.display(),
                    set.annotator
                )));
            }
        }
        expert_sets.push(sets);
    }

    let mut neonates = Vec::with_capacity(ai_masks.len());
    for (id, ai_mask) in &ai_masks {
        let seconds = ai_mask.len() as f64;
        let mut expert_masks = Vec::with_capacity(expert_sets.len());
        for sets in &expert_sets {
            let mask = match sets.iter().find(|s| &s.annotator == id) {
                Some(set) => events_to_mask(&set.global_events()?, seconds)?,
                None => vec![false; ai_mask.len()],
            };
            expert_masks.push(mask);
        }
        neonates.push(NeonateMasks { id: id.clone(), experts: expert_masks, ai: ai_mask.clone() });
    }

    let result = bootstrap_test(&neonates, iterations, seed)?;
    std::fs::write(out, serde_json::to_string_pretty(&result)?)?;
    println!(
        "delta kappa {:.4} over {} neonates, 95% CI [{:.4}, {:.4}], p {:.4}: {} -> {}",
        result.point.delta,
        neonates.len(),
        result.ci_low,
        result.ci_high,
        result.p_value,
        if result.equivalent { "equivalent" } else { "not equivalent" },
        out.display(),
    );
    Ok(())
}

fn cmd_synth(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: SynthConfig = read_json_config(config)?;
    let cohort = synth_generate(&cfg)?;
    for neonate in &cohort {
        let dir = out.join(&neonate.recording.id);
        write_recording(&neonate.recording, &dir)?;
        write_annotations(
            std::slice::from_ref(&neonate.annotations),
            &dir.join(ANNOTATIONS_FILE),
        )?;
    }
    let events: usize = cohort.iter().map(|n| n.annotations.global.len()).sum();
    println!(
        "wrote {} neonates ({} channels, {} s each, {} events) under {}",
        cohort.len(),
        cfg.channels,
        cfg.duration_s,
        events,
        out.display(),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_scaling_run(
    axis: &str,
    grid: Vec<usize>,
    variant_names: &[String],
    model_tokens: &[String],
    config: Option<&Path>,
    trials: usize,
    segment_samples: usize,
    segments_per_neonate: usize,
    pool: usize,
    holdout_pos: usize,
    holdout_neg: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let axis = ScalingAxis::from_name(axis).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown axis `{axis}`; use segments|neonates|model"))
    })?;
    let model = parse_model(model_tokens)?.with_input_length(segment_samples)?;
    let variants = variant_names
        .iter()
        .map(|name| {
            Variant::from_name(name)
                .map(ModelConfig::variant)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{name}`")))
                .and_then(|c| c.with_input_length(segment_samples))
        })
        .collect::<Result<Vec<_>>>()?;
    let train: TrainConfig = read_json_config(config)?;
    let config = ScalingConfig {
        axis,
        grid,
        variants,
        model,
        train,
        trials,
        segments_per_neonate,
        pool_segments: pool,
        holdout_pos,
        holdout_neg,
        seed,
    };
    let result = scaling_run(&config)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("scaling.json"), serde_json::to_string_pretty(&result)?)?;
    std::fs::write(out.join("scaling.csv"), scaling_csv(&result))?;
    std::fs::write(out.join("scaling.svg"), scaling_svg(&result))?;
    for point in &result.points {
        println!(
            "{} {}: median auc {} mcc {}",
            result.axis.name(),
            point.label,
            point.auc.map(|b| format!("{:.4}", b.median)).unwrap_or_else(|| "-".into()),
            point.mcc.map(|b| format!("{:.4}", b.median)).unwrap_or_else(|| "-".into()),
        );
    }
    if let Some(fit) = &result.mcc_fit {
        println!("mcc power-law exponent {:.4} over {} points", fit.exponent, fit.points);
    }
    println!("results under {}", out.display());
    Ok(())
}

fn cmd_montage_stress(
    pred: &Path,
    ref_csv: &Path,
    annotator: Option<&str>,
    fractions: &[f64],
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(pred)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", pred.display())))?;
    let channels = parse_prediction_csv(&text)?;
    let traces: Vec<Vec<f64>> = channels.into_iter().map(|c| c.probs).collect();
    let trace_len = traces.first().map(Vec::len).unwrap_or(0);
    if trace_len == 0 || trace_len % TRACE_RATE != 0 {
        return Err(Error::InvalidData(format!(
            "prediction trace of {trace_len} samples is not whole seconds at {TRACE_RATE} Hz"
        )));
    }
    let seconds = trace_len / TRACE_RATE;
    let sets = read_annotations(ref_csv)?;
    let set = pick_annotator(&sets, annotator, ref_csv)?;
    let ref_mask = events_to_mask(&set.global_events()?, seconds as f64)?;

    let fractions = if fractions.is_empty() { &DEFAULT_FRACTIONS[..] } else { fractions };
    let result = montage_stress(&traces, &ref_mask, fractions, trials, seed)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("montage.json"), serde_json::to_string_pretty(&result)?)?;
    std::fs::write(out.join("montage.csv"), montage_csv(&result))?;
    std::fs::write(out.join("montage.svg"), montage_svg(&result))?;
    let worst = result
        .cells
        .iter()
        .max_by(|a, b| a.mcc_degradation_pct.total_cmp(&b.mcc_degradation_pct));
    println!(
        "baseline auc {:.4} mcc {:.4}; worst cell: {} -> {}",
        result.baseline_auc,
        result.baseline_mcc,
        worst
            .map(|c| format!(
                "fraction {:.2} x {} ch: auc -{:.2}% mcc -{:.2}%",
                c.fraction, c.affected, c.auc_degradation_pct, c.mcc_degradation_pct
            ))
            .unwrap_or_default(),
        out.display(),
    );
    Ok(())
}
