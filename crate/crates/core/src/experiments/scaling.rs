//! Scaling sweeps: train one model per grid point and trial on nested data
//! subsets (or a ladder of model sizes), evaluate on a fixed held-out split,
//! and fit a log-log linear trend per metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auc, confusion, cross_entropy, mcc};
use crate::model::{count_params, Model, ModelConfig};
use crate::tensor::Tensor;
use crate::train::{train, TrainConfig, TrainSegment};

use super::synth::separable_segments;

/// Negatives interleaved after each positive in the master pool, so every
/// prefix keeps roughly this class ratio.
const NEG_PER_POS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    Segments,
    Neonates,
    Model,
}

impl ScalingAxis {
    pub fn name(self) -> &'static str {
        match self {
            ScalingAxis::Segments => "segments",
            ScalingAxis::Neonates => "neonates",
            ScalingAxis::Model => "model",
        }
    }

    pub fn from_name(name: &str) -> Option<ScalingAxis> {
        match name.to_ascii_lowercase().as_str() {
            "segments" => Some(ScalingAxis::Segments),
            "neonates" => Some(ScalingAxis::Neonates),
            "model" => Some(ScalingAxis::Model),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub axis: ScalingAxis,
    /// Segment counts or neonate counts; unused on the model axis.
    pub grid: Vec<usize>,
    /// Model ladder for the model axis, smallest first.
    pub variants: Vec<ModelConfig>,
    /// Fixed model for the data axes.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub trials: usize,
    pub segments_per_neonate: usize,
    /// Training-pool size on the model axis, where the grid carries no sizes.
    pub pool_segments: usize,
    pub holdout_pos: usize,
    pub holdout_neg: usize,
    pub seed: u64,
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("scaling run needs at least one trial".into()));
        }
        if self.holdout_pos == 0 || self.holdout_neg == 0 {
            return Err(Error::InvalidArgument(
                "held-out split needs segments of both classes".into(),
            ));
        }
        match self.axis {
            ScalingAxis::Model => {
                if self.variants.is_empty() {
                    return Err(Error::InvalidArgument(
                        "model axis needs a ladder of model configs".into(),
                    ));
                }
                if self.variants.iter().any(|v| v.input_length != self.model.input_length) {
                    return Err(Error::InvalidArgument(
                        "all ladder models must share one input length".into(),
                    ));
                }
                if self.pool_segments == 0 {
                    return Err(Error::InvalidArgument("model axis needs a pool size".into()));
                }
            }
            _ => {
                if self.grid.is_empty() {
                    return Err(Error::InvalidArgument("scaling grid is empty".into()));
                }
                if self.grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument(
                        "scaling grid must be strictly increasing".into(),
                    ));
                }
                if self.axis == ScalingAxis::Neonates && self.segments_per_neonate == 0 {
                    return Err(Error::InvalidArgument(
                        "neonate axis needs segments per neonate".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Training-subset sizes, one per grid point; subsets are prefixes of one
    /// master pool, so each is nested in the next.
    pub fn subset_sizes(&self) -> Vec<usize> {
        match self.axis {
            ScalingAxis::Segments => self.grid.clone(),
            ScalingAxis::Neonates => {
                self.grid.iter().map(|&k| k * self.segments_per_neonate).collect()
            }
            ScalingAxis::Model => vec![self.pool_segments; self.variants.len()],
        }
    }
}

/// Per-trial seed, exposed so a single point reproduces a plain training run.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    base ^ ((point as u64 + 1) << 40) ^ ((trial as u64 + 1) << 20)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub seed: u64,
    /// Held-out metrics; absent when the trial diverged and the final weights
    /// are unusable.
    pub auc: Option<f64>,
    pub mcc: Option<f64>,
    pub cross_entropy: Option<f64>,
    pub final_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricBand {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

fn band(values: &[f64]) -> Option<MetricBand> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Some(MetricBand { median, min: sorted[0], max: sorted[n - 1] })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// Grid coordinate: subset size on data axes, parameter count on the
    /// model axis.
    pub x: f64,
    pub label: String,
    pub subset_len: usize,
    pub trials: Vec<TrialMetrics>,
    /// Bands over non-diverged trials; absent when every trial diverged.
    pub auc: Option<MetricBand>,
    pub mcc: Option<MetricBand>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub points: usize,
}

/// OLS in log-log space over points with positive coordinates and values.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Option<PowerLawFit> {
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let exponent = sxy / sxx;
    Some(PowerLawFit { exponent, coefficient: (my - exponent * mx).exp(), points: n })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRunResult {
    pub axis: ScalingAxis,
    pub seed: u64,
    pub points: Vec<ScalingPoint>,
    pub auc_fit: Option<PowerLawFit>,
    pub mcc_fit: Option<PowerLawFit>,
}

/// Master training pool (positives interleaved with negatives, so prefixes
/// stay class-balanced) plus a disjoint held-out split.
pub fn build_pools(config: &ScalingConfig) -> Result<(Vec<TrainSegment>, Vec<TrainSegment>)> {
    config.validate()?;
    let capacity = config.subset_sizes().into_iter().max().unwrap_or(0);
    if capacity == 0 {
        return Err(Error::InvalidArgument("empty training subset".into()));
    }
    let units = capacity.div_ceil(1 + NEG_PER_POS);
    let total_pos = units + config.holdout_pos;
    let total_neg = units * NEG_PER_POS + config.holdout_neg;
    let all = separable_segments(total_pos, total_neg, config.model.input_length, config.seed);
    let (pos, neg) = all.split_at(total_pos);

    let mut pool = Vec::with_capacity(units * (1 + NEG_PER_POS));
    for u in 0..units {
        pool.push(pos[u].clone());
        pool.extend(neg[u * NEG_PER_POS..(u + 1) * NEG_PER_POS].iter().cloned());
    }
    let mut holdout = Vec::with_capacity(config.holdout_pos + config.holdout_neg);
    holdout.extend(pos[units..].iter().cloned());
    holdout.extend(neg[units * NEG_PER_POS..].iter().cloned());
    Ok((pool, holdout))
}

/// AUC, MCC at 0.5 and cross entropy of a trained model on held-out segments.
pub fn holdout_metrics(model: &Model, holdout: &[TrainSegment]) -> Result<(f64, f64, f64)> {
    let mut probs = Vec::with_capacity(holdout.len());
    let mut labels = Vec::with_capacity(holdout.len());
    for seg in holdout {
        let input = Tensor::new(1, seg.samples.len(), seg.samples.clone())?;
        probs.push(model.forward(&input)?);
        labels.push(seg.label);
    }
    let auc_v = auc(&probs, &labels)?
        .ok_or_else(|| Error::InvalidData("held-out split has a single class".into()))?;
    let preds: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
    let mcc_v = mcc(&confusion(&preds, &labels)?);
    let ce = cross_entropy(&probs, &labels)?;
    Ok((auc_v, mcc_v, ce))
}

fn run_trial(
    subset: &[TrainSegment],
    model_config: &ModelConfig,
    base: &TrainConfig,
    seed: u64,
    holdout: &[TrainSegment],
) -> Result<TrialMetrics> {
    let mut tc = base.clone();
    tc.seed = seed;
    let outcome = train(subset, model_config, &tc)?;
    if outcome.diverged.is_some() {
        return Ok(TrialMetrics {
            seed,
            auc: None,
            mcc: None,
            cross_entropy: None,
            final_loss: outcome.log.last().map(|l| l.loss),
            diverged: true,
        });
    }
    let (auc_v, mcc_v, ce) = holdout_metrics(&outcome.model, holdout)?;
    Ok(TrialMetrics {
        seed,
        auc: Some(auc_v),
        mcc: Some(mcc_v),
        cross_entropy: Some(ce),
        final_loss: outcome.log.last().map(|l| l.loss),
        diverged: false,
    })
}

pub fn scaling_run(config: &ScalingConfig) -> Result<ScalingRunResult> {
    config.validate()?;
    let (pool, holdout) = build_pools(config)?;
    let sizes = config.subset_sizes();
    let mut points = Vec::with_capacity(sizes.len());
    for (p, &size) in sizes.iter().enumerate() {
        if size > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "grid point {size} exceeds pool of {}",
                pool.len()
            )));
        }
        let subset = &pool[..size];
        let model_config = match config.axis {
            ScalingAxis::Model => config.variants[p],
            _ => config.model,
        };
        let mut trials = Vec::with_capacity(config.trials);
        for t in 0..config.trials {
            trials.push(run_trial(
                subset,
                &model_config,
                &config.train,
                trial_seed(config.seed, p, t),
                &holdout,
            )?);
        }
        let (x, label) = match config.axis {
            ScalingAxis::Segments => (size as f64, size.to_string()),
            ScalingAxis::Neonates => {
                (config.grid[p] as f64, format!("{}n", config.grid[p]))
            }
            ScalingAxis::Model => {
                (count_params(&model_config) as f64, model_config.variant_name())
            }
        };
        let aucs: Vec<f64> = trials.iter().filter_map(|t| t.auc).collect();
        let mccs: Vec<f64> = trials.iter().filter_map(|t| t.mcc).collect();
        points.push(ScalingPoint {
            x,
            label,
            subset_len: size,
            trials,
            auc: band(&aucs),
            mcc: band(&mccs),
        });
    }
    let fit_over = |select: fn(&ScalingPoint) -> Option<MetricBand>| {
        let pairs: Vec<(f64, f64)> =
            points.iter().filter_map(|p| select(p).map(|b| (p.x, b.median))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        power_law_fit(&xs, &ys)
    };
    let auc_fit = fit_over(|p| p.auc);
    let mcc_fit = fit_over(|p| p.mcc);
    Ok(ScalingRunResult { axis: config.axis, seed: config.seed, points, auc_fit, mcc_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(axis: ScalingAxis, grid: Vec<usize>) -> ScalingConfig {
        let model = ModelConfig::new(1, 1).unwrap().with_input_length(256).unwrap();
        let train = TrainConfig {
            epochs: 2,
            batch_size: 8,
            peak_lr: 1e-3,
            floor_lr: 1e-5,
            ..TrainConfig::default()
        };
        ScalingConfig {
            axis,
            grid,
            variants: Vec::new(),
            model,
            train,
            trials: 1,
            segments_per_neonate: 14,
            pool_segments: 0,
            holdout_pos: 12,
            holdout_neg: 60,
            seed: 0,
        }
    }

    #[test]
    fn power_law_fit_recovers_exact_exponent() {
        let xs: Vec<f64> = vec![10.0, 100.0, 1000.0, 10000.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(-0.37)).collect();
        let fit = power_law_fit(&xs, &ys).unwrap();
        assert!((fit.exponent + 0.37).abs() < 1e-6, "{}", fit.exponent);
        assert!((fit.coefficient - 2.5).abs() < 1e-6, "{}", fit.coefficient);
        assert_eq!(fit.points, 4);
    }

    #[test]
    fn power_law_fit_ignores_nonpositive_points() {
        let xs = vec![1.0, 10.0, 100.0, 1000.0];
        let ys = vec![0.0, 3.0 * 10f64.powf(0.5), -1.0, 3.0 * 1000f64.powf(0.5)];
        let fit = power_law_fit(&xs, &ys).unwrap();
        assert_eq!(fit.points, 2);
        assert!((fit.exponent - 0.5).abs() < 1e-9);
        assert!(power_law_fit(&xs[..1], &ys[..1]).is_none());
        assert!(power_law_fit(&[5.0, 5.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn grid_must_increase_strictly() {
        let mut config = tiny_config(ScalingAxis::Segments, vec![70, 70]);
        assert!(config.validate().is_err());
        config.grid = vec![70, 35];
        assert!(config.validate().is_err());
        config.grid = vec![35, 70];
        assert!(config.validate().is_ok());
    }

    #[test]
    fn subsets_are_nested_prefixes() {
        let config = tiny_config(ScalingAxis::Neonates, vec![1, 2, 4]);
        let sizes = config.subset_sizes();
        assert_eq!(sizes, vec![14, 28, 56]);
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
        // Prefixes of one pool: the smaller subset is literally the head of
        // the larger one.
        let (pool, holdout) = build_pools(&config).unwrap();
        assert!(pool.len() >= 56);
        assert_eq!(holdout.len(), 72);
        let small: Vec<bool> = pool[..14].iter().map(|s| s.label).collect();
        let large: Vec<bool> = pool[..28].iter().map(|s| s.label).collect();
        assert_eq!(&large[..14], &small[..]);
    }

    #[test]
    fn pool_prefixes_keep_the_class_ratio() {
        let config = tiny_config(ScalingAxis::Segments, vec![140]);
        let (pool, _) = build_pools(&config).unwrap();
        for prefix in [14, 70, 140] {
            let pos = pool[..prefix].iter().filter(|s| s.label).count();
            assert_eq!(pos, prefix / 7, "prefix {prefix}");
        }
    }

    #[test]
    fn single_point_matches_plain_training_bit_exactly() {
        let config = tiny_config(ScalingAxis::Segments, vec![42]);
        let result = scaling_run(&config).unwrap();
        assert_eq!(result.points.len(), 1);

        let (pool, holdout) = build_pools(&config).unwrap();
        let mut tc = config.train.clone();
        tc.seed = trial_seed(config.seed, 0, 0);
        let outcome = train(&pool[..42], &config.model, &tc).unwrap();
        let (auc_v, mcc_v, ce) = holdout_metrics(&outcome.model, &holdout).unwrap();

        let got = &result.points[0].trials[0];
        assert_eq!(got.auc, Some(auc_v));
        assert_eq!(got.mcc, Some(mcc_v));
        assert_eq!(got.cross_entropy, Some(ce));
        assert!(!got.diverged);
    }

    #[test]
    fn mcc_median_non_decreasing_over_the_grid() {
        let mut config = tiny_config(ScalingAxis::Segments, vec![28, 210]);
        config.trials = 3;
        let result = scaling_run(&config).unwrap();
        let medians: Vec<f64> =
            result.points.iter().map(|p| p.mcc.unwrap().median).collect();
        assert!(
            medians[1] >= medians[0] - 1e-12,
            "mcc fell with more data: {medians:?}"
        );
        let band = result.points[1].auc.unwrap();
        assert!(band.min <= band.max);
    }

    #[test]
    fn model_axis_walks_the_ladder() {
        let mut config = tiny_config(ScalingAxis::Model, Vec::new());
        config.variants = vec![
            ModelConfig::new(1, 1).unwrap().with_input_length(256).unwrap(),
            ModelConfig::new(1, 2).unwrap().with_input_length(256).unwrap(),
        ];
        config.pool_segments = 35;
        config.train.epochs = 1;
        let result = scaling_run(&config).unwrap();
        assert_eq!(result.points.len(), 2);
        assert!(result.points[0].x < result.points[1].x);
        assert_eq!(result.points[0].label, "nano");
        assert_eq!(result.points[0].subset_len, 35);
        assert_eq!(result.points[1].subset_len, 35);
    }

    #[test]
    fn divergence_is_flagged_but_does_not_abort() {
        let mut config = tiny_config(ScalingAxis::Segments, vec![14, 28]);
        // One update at this rate overflows the stem conv on the next forward.
        config.train.peak_lr = 1e305;
        config.train.floor_lr = 1e300;
        config.train.clip_norm = 1e30;
        let result = scaling_run(&config).unwrap();
        assert_eq!(result.points.len(), 2);
        let diverged: Vec<&TrialMetrics> = result
            .points
            .iter()
            .flat_map(|p| &p.trials)
            .filter(|t| t.diverged)
            .collect();
        assert!(!diverged.is_empty(), "expected at least one diverged trial");
        assert!(diverged.iter().all(|t| t.auc.is_none() && t.mcc.is_none()));
    }
}
