//! Training: dynamic undersampling, weighted loss, the four-phase log
//! learning-rate schedule, flip/cutout augmentation and the epoch loop.

mod optim;

pub use optim::AdamW;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::model::{Model, ModelConfig};
use crate::tensor::{weighted_bce_value, Gradients, Tape, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Non-seizure to seizure ratio after undersampling.
    pub undersample_ratio: usize,
    /// Loss weight on positive seconds; defaults to the undersample ratio so
    /// the effective class balance returns to 1:1.
    pub pos_weight: f64,
    pub neg_weight: f64,
    pub peak_lr: f64,
    pub floor_lr: f64,
    /// Phase lengths in steps; all zero means derive them from the run length
    /// with a 10/40/40/10 split.
    pub warmup_steps: usize,
    pub freeze_max_steps: usize,
    pub cooldown_steps: usize,
    pub freeze_min_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub flip_prob: f64,
    pub cutout_prob: f64,
    /// Longest cutout run as a fraction of the segment (default 2 s of 16 s).
    pub cutout_max_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            undersample_ratio: 5,
            pos_weight: 5.0,
            neg_weight: 1.0,
            peak_lr: 3e-4,
            floor_lr: 3e-6,
            warmup_steps: 0,
            freeze_max_steps: 0,
            cooldown_steps: 0,
            freeze_min_steps: 0,
            batch_size: 64,
            epochs: 4,
            weight_decay: 0.05,
            clip_norm: 1.0,
            flip_prob: 0.5,
            cutout_prob: 0.5,
            cutout_max_fraction: 0.125,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.undersample_ratio < 1 {
            return Err(Error::InvalidArgument("undersample ratio must be >= 1".into()));
        }
        if !(self.pos_weight > 0.0) || !(self.neg_weight > 0.0) {
            return Err(Error::InvalidArgument("class weights must be positive".into()));
        }
        if !(self.floor_lr > 0.0) || !(self.peak_lr >= self.floor_lr) {
            return Err(Error::InvalidArgument(
                "learning rates must satisfy 0 < floor <= peak".into(),
            ));
        }
        for (p, name) in [
            (self.flip_prob, "flip"),
            (self.cutout_prob, "cutout"),
            (self.cutout_max_fraction, "cutout fraction"),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} probability must be in [0, 1]"
                )));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("clip norm must be positive".into()));
        }
        Ok(())
    }

    /// Explicit phase lengths, or the default 10/40/40/10 split of the run.
    pub fn phases(&self, total_steps: usize) -> [usize; 4] {
        let configured =
            self.warmup_steps + self.freeze_max_steps + self.cooldown_steps + self.freeze_min_steps;
        if configured > 0 {
            return [
                self.warmup_steps,
                self.freeze_max_steps,
                self.cooldown_steps,
                self.freeze_min_steps,
            ];
        }
        let warmup = total_steps / 10;
        let freeze_max = total_steps * 4 / 10;
        let cooldown = total_steps * 4 / 10;
        [warmup, freeze_max, cooldown, total_steps - warmup - freeze_max - cooldown]
    }
}

/// Indices selected for one epoch: every seizure segment plus this epoch's
/// slice of the cycling non-seizure stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub seizure: Vec<usize>,
    pub nonseizure: Vec<usize>,
}

/// Select segment indices for an epoch. Non-seizure indices come from an
/// endless stream of fresh pool permutations, so the pool is consumed without
/// replacement across epochs and reshuffled only when exhausted.
pub fn plan_epoch(
    seizure_count: usize,
    nonseizure_count: usize,
    ratio: usize,
    epoch: usize,
    seed: u64,
) -> Result<EpochPlan> {
    if seizure_count == 0 {
        return Err(Error::InvalidArgument("no seizure segments to train on".into()));
    }
    if ratio < 1 {
        return Err(Error::InvalidArgument("undersample ratio must be >= 1".into()));
    }
    let need = seizure_count * ratio;
    if nonseizure_count < need {
        return Err(Error::InvalidArgument(format!(
            "need {need} non-seizure segments per epoch, pool has {nonseizure_count}"
        )));
    }
    let start = epoch * need;
    let mut nonseizure = Vec::with_capacity(need);
    let mut cycle = start / nonseizure_count;
    let mut offset = start % nonseizure_count;
    while nonseizure.len() < need {
        let perm = pool_permutation(nonseizure_count, seed, cycle);
        let take = (need - nonseizure.len()).min(nonseizure_count - offset);
        nonseizure.extend_from_slice(&perm[offset..offset + take]);
        cycle += 1;
        offset = 0;
    }
    Ok(EpochPlan { seizure: (0..seizure_count).collect(), nonseizure })
}

fn pool_permutation(count: usize, seed: u64, cycle: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, 1, cycle as u64);
    let mut perm: Vec<usize> = (0..count).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Independent RNG stream for (seed, domain, index); stream 0 is reserved for
/// weight initialization. Domains 1 and 2 belong to the training loop.
pub(crate) fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | (index & 0xffff_ffff_ffff));
    rng
}

/// Weighted binary cross entropy on one probability.
pub fn weighted_loss(p: f64, label: bool, pos_weight: f64, neg_weight: f64) -> f64 {
    weighted_bce_value(p, if label { 1.0 } else { 0.0 }, pos_weight, neg_weight)
}

/// Four-phase schedule: log-linear warmup, hold at peak, log-linear cooldown,
/// hold at floor.
pub fn lr_at(step: usize, phases: [usize; 4], floor: f64, peak: f64) -> f64 {
    let [warmup, freeze_max, cooldown, _] = phases;
    if step < warmup {
        floor * (peak / floor).powf(step as f64 / warmup as f64)
    } else if step < warmup + freeze_max {
        peak
    } else if step < warmup + freeze_max + cooldown {
        let progress = (step - warmup - freeze_max) as f64 / cooldown as f64;
        peak * (floor / peak).powf(progress)
    } else {
        floor
    }
}

/// Invert every amplitude in place (polarity flip).
pub fn augment_flip(samples: &mut [f64]) {
    for v in samples.iter_mut() {
        *v = -*v;
    }
}

/// Zero one contiguous run covering at most `max_fraction` of the segment.
pub fn augment_cutout<R: Rng>(samples: &mut [f64], max_fraction: f64, rng: &mut R) {
    let max_len = (samples.len() as f64 * max_fraction).floor() as usize;
    if max_len == 0 {
        return;
    }
    let len = rng.random_range(1..=max_len);
    let start = rng.random_range(0..=samples.len() - len);
    for v in &mut samples[start..start + len] {
        *v = 0.0;
    }
}

/// One training example: a single-channel segment and its label.
#[derive(Debug, Clone)]
pub struct TrainSegment {
    pub samples: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub train_auc: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub steps: usize,
    /// Set when a non-finite loss or gradient stopped the run early; the model
    /// holds the last finite state.
    pub diverged: Option<(usize, f64)>,
}

pub fn render_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss,lr,train_auc\n");
    for entry in log {
        let auc_cell = entry
            .train_auc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{:.6e},{}\n",
            entry.epoch, entry.loss, entry.lr, auc_cell
        ));
    }
    out
}

/// Run the full fixed-length schedule; no early stopping. Deterministic for a
/// given seed. On divergence the loop halts and returns the last finite state
/// with the offending step recorded.
pub fn train(
    segments: &[TrainSegment],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let input_length = model_config.input_length;
    if segments.iter().any(|s| s.samples.len() != input_length) {
        return Err(Error::Shape(format!(
            "every training segment must hold {input_length} samples"
        )));
    }
    let seizure_idx: Vec<usize> =
        (0..segments.len()).filter(|&i| segments[i].label).collect();
    let nonseizure_idx: Vec<usize> =
        (0..segments.len()).filter(|&i| !segments[i].label).collect();

    let plan_size = seizure_idx.len() + seizure_idx.len() * config.undersample_ratio;
    let steps_per_epoch = plan_size.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let phases = config.phases(total_steps);

    let mut model = Model::build(*model_config, config.seed)?;
    let mut opt = AdamW::new(
        model.params(),
        config.beta1,
        config.beta2,
        config.epsilon,
        config.weight_decay,
    )?;

    let mut log = Vec::with_capacity(config.epochs);
    let mut global_step = 0usize;
    let mut diverged = None;
    'epochs: for epoch in 0..config.epochs {
        let plan = plan_epoch(
            seizure_idx.len(),
            nonseizure_idx.len(),
            config.undersample_ratio,
            epoch,
            config.seed,
        )?;
        let mut order: Vec<usize> = plan
            .seizure
            .iter()
            .map(|&i| seizure_idx[i])
            .chain(plan.nonseizure.iter().map(|&i| nonseizure_idx[i]))
            .collect();
        let mut rng = stream_rng(config.seed, 2, epoch as u64);
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_lr = lr_at(global_step, phases, config.floor_lr, config.peak_lr);
        let mut probs = Vec::with_capacity(order.len());
        let mut labels = Vec::with_capacity(order.len());
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(model.params());
            let mut batch_loss = 0.0;
            for &idx in batch {
                let mut samples = segments[idx].samples.clone();
                if rng.random_bool(config.flip_prob) {
                    augment_flip(&mut samples);
                }
                if rng.random_bool(config.cutout_prob) {
                    augment_cutout(&mut samples, config.cutout_max_fraction, &mut rng);
                }
                let input = Tensor::new(1, input_length, samples)?;
                let mut tape = Tape::new(model.params());
                let label = segments[idx].label;
                let (prob_node, loss_node) = model.taped_loss(
                    &mut tape,
                    &input,
                    if label { 1.0 } else { 0.0 },
                    config.pos_weight,
                    config.neg_weight,
                )?;
                batch_loss += tape.scalar_value(loss_node)?;
                probs.push(tape.scalar_value(prob_node)?);
                labels.push(label);
                grads.accumulate(&tape.backward(loss_node)?)?;
            }
            batch_loss /= batch.len() as f64;
            grads.scale(1.0 / batch.len() as f64);
            let norm = grads.global_norm();
            if !batch_loss.is_finite() || !norm.is_finite() {
                diverged = Some((global_step, batch_loss));
                break 'epochs;
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            let lr = lr_at(global_step, phases, config.floor_lr, config.peak_lr);
            opt.step(model.params_mut(), &grads, lr)?;
            epoch_loss += batch_loss * batch.len() as f64;
            epoch_lr = lr;
            global_step += 1;
        }
        let train_auc = auc(&probs, &labels)?;
        log.push(EpochLog {
            epoch,
            loss: epoch_loss / order.len() as f64,
            lr: epoch_lr,
            train_auc,
        });
    }
    Ok(TrainOutcome { model, log, steps: global_step, diverged })
}
