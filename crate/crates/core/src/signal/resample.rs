//! Polyphase rational resampling to the model rate of 64 Hz.
//!
//! A rate of R Hz maps to the ratio L/M = 64/R reduced to lowest terms
//! (200 -> 8/25, 256 -> 1/4, 500 -> 16/125). The anti-alias low-pass is a
//! Kaiser-windowed sinc evaluated on the virtual upsampled grid; each
//! polyphase branch is normalized to unit sum, so constants pass through
//! exactly. Edges are handled by holding the first/last sample.

use crate::{Error, Result};

pub const TARGET_RATE: u32 = 64;
const KAISER_BETA: f64 = 5.0;
const HALF_LENGTH_FACTOR: usize = 10;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function I0 by its power series.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Length after resampling: round(n * 64 / rate), half away from zero.
pub fn output_length(input_length: usize, rate: u32) -> usize {
    ((input_length as u64 * TARGET_RATE as u64 + rate as u64 / 2) / rate as u64) as usize
}

/// Resamples one channel to 64 Hz. A 64 Hz input is returned unchanged.
pub fn resample_to_64(samples: &[f64], rate: u32) -> Result<Vec<f64>> {
    if rate == TARGET_RATE {
        return Ok(samples.to_vec());
    }
    if !matches!(rate, 200 | 256 | 500) {
        return Err(Error::UnsupportedRate(rate));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let g = gcd(TARGET_RATE as usize, rate as usize);
    let up = TARGET_RATE as usize / g; // L
    let down = rate as usize / g; // M
    let m = up.max(down);
    let half = HALF_LENGTH_FACTOR * m;

    // Kaiser-windowed sinc on the upsampled grid, cutoff pi/m
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let frac = t / half as f64;
            let window = bessel_i0(KAISER_BETA * (1.0 - frac * frac).max(0.0).sqrt())
                / bessel_i0(KAISER_BETA);
            sinc(t / m as f64) / m as f64 * window
        })
        .collect();

    // per-branch tap sums: branch r collects taps at offsets == r (mod up)
    let mut branch_sum = vec![0.0; up];
    for (i, h) in taps.iter().enumerate() {
        let t = i as i64 - half as i64;
        let r = t.rem_euclid(up as i64) as usize;
        branch_sum[r] += h;
    }

    let n_out = output_length(samples.len(), rate);
    let last = samples.len() as i64 - 1;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let u = (n * down) as i64; // position on the upsampled grid
        let mut acc = 0.0;
        // taps with (u - t) divisible by up hit real input samples; start
        // from the smallest such offset >= -half
        let r = u.rem_euclid(up as i64);
        let lo = -(half as i64);
        let mut t = r - ((r - lo) / up as i64) * up as i64;
        while t <= half as i64 {
            let k = (u - t) / up as i64;
            let k = k.clamp(0, last) as usize; // edge hold
            acc += taps[(t + half as i64) as usize] * samples[k];
            t += up as i64;
        }
        out.push(acc / branch_sum[u.rem_euclid(up as i64) as usize]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid_fit(samples: &[f64], freq_hz: f64, rate: f64) -> f64 {
        let (mut ss, mut sc) = (0.0, 0.0);
        for (i, v) in samples.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * freq_hz * i as f64 / rate;
            ss += v * w.sin();
            sc += v * w.cos();
        }
        let n = samples.len() as f64 / 2.0;
        ((ss / n).powi(2) + (sc / n).powi(2)).sqrt()
    }

    #[test]
    fn four_to_one_length() {
        let y = resample_to_64(&vec![0.0; 2560], 256).unwrap();
        assert_eq!(y.len(), 640);
    }

    #[test]
    fn rounded_lengths() {
        assert_eq!(output_length(1000, 200), 320);
        assert_eq!(output_length(1001, 200), 320); // 320.32 rounds down
        assert_eq!(output_length(1004, 200), 321); // 321.28 rounds down to 321
        assert_eq!(output_length(125, 500), 16);
        assert_eq!(output_length(126, 500), 16); // 16.128
    }

    #[test]
    fn constant_passes_exactly() {
        for rate in [200u32, 256, 500] {
            let x = vec![42.5; 3 * rate as usize];
            let y = resample_to_64(&x, rate).unwrap();
            assert_eq!(y.len(), 3 * 64);
            for v in &y {
                assert!((v - 42.5).abs() < 1e-12, "rate {rate}: {v}");
            }
        }
    }

    #[test]
    fn sinusoid_amplitude_preserved() {
        for rate in [200u32, 256, 500] {
            let seconds = 20.0;
            let n = (rate as f64 * seconds) as usize;
            let x: Vec<f64> = (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / rate as f64).sin())
                .collect();
            let y = resample_to_64(&x, rate).unwrap();
            // trim a second from each edge before fitting
            let amp = sinusoid_fit(&y[64..y.len() - 64], 5.0, 64.0);
            assert!((amp - 1.0).abs() < 0.05, "rate {rate}: amplitude {amp}");
        }
    }

    #[test]
    fn high_frequencies_do_not_alias() {
        // 90 Hz at 200 Hz sampling would fold to 26 Hz at 64 Hz if unfiltered
        let n = 200 * 20;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 90.0 * i as f64 / 200.0).sin())
            .collect();
        let y = resample_to_64(&x, 200).unwrap();
        let folded = sinusoid_fit(&y[64..y.len() - 64], 26.0, 64.0);
        assert!(folded < 0.02, "aliased amplitude {folded}");
    }

    #[test]
    fn identity_at_64() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(resample_to_64(&x, 64).unwrap(), x);
    }

    #[test]
    fn unsupported_rates_rejected() {
        assert!(matches!(resample_to_64(&[0.0; 10], 123), Err(Error::UnsupportedRate(123))));
        assert!(resample_to_64(&[0.0; 10], 1000).is_err());
    }

    #[test]
    fn zeros_stay_exact() {
        let y = resample_to_64(&vec![0.0; 5000], 500).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }
}
