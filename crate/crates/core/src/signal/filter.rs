//! Zero-phase Butterworth band-pass filtering.
//!
//! An order-4 low-pass prototype is transformed to a band-pass (8 poles),
//! discretized by the bilinear transform with frequency pre-warping, and run
//! as a cascade of biquads forward and backward (zero phase). Initial
//! conditions are the per-section steady state scaled by the first sample,
//! with odd-symmetric edge extension, so step edges do not ring.

use num_complex::Complex64;

use crate::{Error, Result};

pub const BAND_LOW_HZ: f64 = 0.3;
pub const BAND_HIGH_HZ: f64 = 30.0;
const PROTOTYPE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn response_magnitude(&self, w: f64) -> f64 {
        let z = Complex64::new(0.0, -w).exp();
        let num = Complex64::new(self.b0, 0.0) + z * self.b1 + z * z * self.b2;
        let den = Complex64::new(1.0, 0.0) + z * self.a1 + z * z * self.a2;
        (num / den).norm()
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

/// Designs the Butterworth band-pass for the given rate.
pub fn butter_bandpass(low_hz: f64, high_hz: f64, rate: f64) -> Result<SosFilter> {
    if !(0.0 < low_hz && low_hz < high_hz && high_hz < rate / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "band edges {low_hz}-{high_hz} Hz do not fit below Nyquist at {rate} Hz"
        )));
    }
    let fs2 = 2.0 * rate;
    // pre-warp the band edges so the bilinear transform lands them exactly
    let wl = fs2 * (std::f64::consts::PI * low_hz / rate).tan();
    let wh = fs2 * (std::f64::consts::PI * high_hz / rate).tan();
    let w0 = (wl * wh).sqrt();
    let bw = wh - wl;

    let mut sections = Vec::with_capacity(PROTOTYPE_ORDER);
    let n = PROTOTYPE_ORDER as f64;
    for k in 0..PROTOTYPE_ORDER / 2 {
        // upper-half-plane prototype pole
        let theta = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n);
        let proto = Complex64::new(theta.cos(), theta.sin());
        // low-pass -> band-pass: each prototype pole splits in two
        let a = proto * (bw / 2.0);
        let d = (a * a - Complex64::new(w0 * w0, 0.0)).sqrt();
        for s in [a + d, a - d] {
            // bilinear transform; the conjugate pole comes from the
            // conjugate prototype, so each s yields one real biquad
            let z = (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s);
            sections.push(Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * z.re,
                a2: z.norm_sqr(),
            });
        }
    }

    // normalize each section to unit gain at the warped center frequency
    let w_center = 2.0 * (w0 / fs2).atan();
    for sec in &mut sections {
        let mag = sec.response_magnitude(w_center);
        sec.b0 /= mag;
        sec.b2 /= mag;
    }
    Ok(SosFilter { sections })
}

impl SosFilter {
    fn run(&self, x: &mut [f64]) {
        for sec in &self.sections {
            // steady-state initial conditions for a step of the first value
            let h1 = (sec.b0 + sec.b1 + sec.b2) / (1.0 + sec.a1 + sec.a2);
            let mut s1 = x[0] * (h1 - sec.b0);
            let mut s2 = x[0] * (sec.b2 - sec.a2 * h1);
            for v in x.iter_mut() {
                let inp = *v;
                let out = sec.b0 * inp + s1;
                s1 = sec.b1 * inp - sec.a1 * out + s2;
                s2 = sec.b2 * inp - sec.a2 * out;
                *v = out;
            }
        }
    }

    /// Forward-backward application (zero phase).
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = 3 * (2 * self.sections.len() + 1);
        if x.len() <= pad {
            return Err(Error::InvalidData(format!(
                "signal of {} samples is too short to filter (needs > {pad})",
                x.len()
            )));
        }
        let mut ext = Vec::with_capacity(x.len() + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        let last = x.len() - 1;
        for i in 1..=pad {
            ext.push(2.0 * x[last] - x[last - i]);
        }
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + x.len()].to_vec())
    }
}

/// The pipeline's band-pass: 0.3-30 Hz, zero phase, at the native rate.
pub fn bandpass(samples: &[f64], rate: u32) -> Result<Vec<f64>> {
    if rate <= 60 {
        return Err(Error::InvalidArgument(format!(
            "band-pass needs a rate above 60 Hz, got {rate}"
        )));
    }
    butter_bandpass(BAND_LOW_HZ, BAND_HIGH_HZ, rate as f64)?.filtfilt(samples)
}
