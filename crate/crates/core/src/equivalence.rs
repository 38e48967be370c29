//! Expert-equivalence testing: the change in Fleiss kappa when the model
//! replaces one human annotator, bootstrapped over neonates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::fleiss_kappa;

pub const EXPERT_COUNT: usize = 3;

/// Per-second annotations for one neonate: three expert masks and the model
/// mask, all on the same 1 Hz grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeonateMasks {
    pub id: String,
    pub experts: Vec<Vec<bool>>,
    pub ai: Vec<bool>,
}

impl NeonateMasks {
    fn validate(&self) -> Result<()> {
        if self.experts.len() != EXPERT_COUNT {
            return Err(Error::InvalidArgument(format!(
                "neonate {:?}: expected exactly {EXPERT_COUNT} expert masks, got {}; \
                 other annotator counts are not supported",
                self.id,
                self.experts.len()
            )));
        }
        let n = self.ai.len();
        if n == 0 {
            return Err(Error::InvalidArgument(format!(
                "neonate {:?}: empty masks",
                self.id
            )));
        }
        if self.experts.iter().any(|e| e.len() != n) {
            return Err(Error::Shape(format!(
                "neonate {:?}: expert and model masks differ in length",
                self.id
            )));
        }
        Ok(())
    }
}

/// Point estimate of the agreement change when the model stands in for each
/// expert in turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaKappa {
    pub kappa_experts: f64,
    pub kappa_ai: [f64; EXPERT_COUNT],
    pub delta_per_expert: [f64; EXPERT_COUNT],
    pub delta: f64,
}

/// Fleiss kappa among the experts and with the model substituted for each
/// expert, over one pooled stretch of seconds.
pub fn delta_kappa(experts: &[&[bool]], ai: &[bool]) -> Result<DeltaKappa> {
    if experts.len() != EXPERT_COUNT {
        return Err(Error::InvalidArgument(format!(
            "expected exactly {EXPERT_COUNT} expert masks, got {}; \
             other annotator counts are not supported",
            experts.len()
        )));
    }
    let kappa_experts = fleiss_kappa(experts)?;
    let mut kappa_ai = [0.0; EXPERT_COUNT];
    let mut delta_per_expert = [0.0; EXPERT_COUNT];
    for a in 0..EXPERT_COUNT {
        let mut raters: Vec<&[bool]> = experts.to_vec();
        raters[a] = ai;
        kappa_ai[a] = fleiss_kappa(&raters)?;
        delta_per_expert[a] = kappa_experts - kappa_ai[a];
    }
    let delta = delta_per_expert.iter().sum::<f64>() / EXPERT_COUNT as f64;
    Ok(DeltaKappa { kappa_experts, kappa_ai, delta_per_expert, delta })
}

/// Full bootstrap result, including every replicate for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaTestResult {
    pub point: DeltaKappa,
    pub iterations: usize,
    pub seed: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Whether the 95% interval contains zero.
    pub equivalent: bool,
    pub bootstrap: Vec<f64>,
}

/// Bootstrap the overall delta by resampling neonates with replacement.
/// Each iteration draws from its own RNG stream, so results are reproducible
/// and independent of evaluation order.
pub fn bootstrap_test(
    neonates: &[NeonateMasks],
    iterations: usize,
    seed: u64,
) -> Result<KappaTestResult> {
    if neonates.len() < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least two neonates".into(),
        ));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one iteration".into()));
    }
    for n in neonates {
        n.validate()?;
    }
    let all: Vec<usize> = (0..neonates.len()).collect();
    let point = pooled_delta(neonates, &all)?;

    let mut bootstrap = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(iter as u64 + 1);
        let picks: Vec<usize> = (0..neonates.len())
            .map(|_| rng.random_range(0..neonates.len()))
            .collect();
        bootstrap.push(pooled_delta(neonates, &picks)?.delta);
    }

    let mut sorted = bootstrap.clone();
    sorted.sort_by(f64::total_cmp);
    let ci_low = percentile(&sorted, 0.025);
    let ci_high = percentile(&sorted, 0.975);
    let below = bootstrap.iter().filter(|&&d| d <= 0.0).count() as f64;
    let above = bootstrap.iter().filter(|&&d| d >= 0.0).count() as f64;
    let m = bootstrap.len() as f64;
    let p_value = (2.0 * (below / m).min(above / m)).min(1.0);
    let equivalent = ci_low <= 0.0 && 0.0 <= ci_high;
    Ok(KappaTestResult {
        point,
        iterations,
        seed,
        ci_low,
        ci_high,
        p_value,
        equivalent,
        bootstrap,
    })
}

fn pooled_delta(neonates: &[NeonateMasks], picks: &[usize]) -> Result<DeltaKappa> {
    let total: usize = picks.iter().map(|&i| neonates[i].ai.len()).sum();
    let mut experts = vec![Vec::with_capacity(total); EXPERT_COUNT];
    let mut ai = Vec::with_capacity(total);
    for &i in picks {
        for (slot, mask) in experts.iter_mut().zip(&neonates[i].experts) {
            slot.extend_from_slice(mask);
        }
        ai.extend_from_slice(&neonates[i].ai);
    }
    let views: Vec<&[bool]> = experts.iter().map(|e| e.as_slice()).collect();
    delta_kappa(&views, &ai)
}

/// Quantile of a sorted sample with linear interpolation between order
/// statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
