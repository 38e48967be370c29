//! Desk-scale experiment harnesses: synthetic cohorts, scaling sweeps and
//! montage-degradation stress.

mod montage;
mod report;
mod scaling;
mod synth;

pub use montage::{
    montage_stress, stress_metrics, zero_run, MontageCell, MontageStressResult, DEFAULT_FRACTIONS,
};
pub use report::{
    montage_csv, montage_svg, scaling_csv, scaling_svg, MONTAGE_CSV_HEADER, SCALING_CSV_HEADER,
};
pub use scaling::{
    build_pools, holdout_metrics, power_law_fit, scaling_run, trial_seed, MetricBand, PowerLawFit,
    ScalingAxis, ScalingConfig, ScalingPoint, ScalingRunResult, TrialMetrics,
};
pub use synth::{
    separable_segments, synth_generate, SynthConfig, SynthNeonate, MAX_EVENT_S, MIN_EVENT_S,
    MIN_GAP_S,
};
