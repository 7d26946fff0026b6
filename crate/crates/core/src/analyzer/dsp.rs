//! Window-level signal math shared by the streaming pipeline and its tests.

use std::f64::consts::TAU;

use crate::siggen::SAMPLE_RATE_HZ;

/// Root mean square, summed in sample order.
pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for x in samples {
        acc += x * x;
    }
    (acc / samples.len() as f64).sqrt()
}

/// Complex value as (re, im).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// `self · conj(other)`
    pub fn mul_conj(self, other: Phasor) -> Phasor {
        Phasor {
            re: self.re * other.re + self.im * other.im,
            im: self.im * other.re - self.re * other.im,
        }
    }
}

/// Single-frequency correlation `Σ x[n]·e^{-jωn}` via the Goertzel recurrence.
/// `omega` is in radians per sample and need not fall on a DFT bin.
pub fn goertzel(samples: &[f64], omega: f64) -> Phasor {
    let coeff = 2.0 * omega.cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &x in samples {
        let s0 = x + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    // One extra zero-input step gives y = e^{jωN}·X.
    let s0 = coeff * s1 - s2;
    let (c, s) = (omega.cos(), omega.sin());
    let y = Phasor {
        re: s0 - c * s1,
        im: s * s1,
    };
    let n = samples.len() as f64;
    let (rc, rs) = ((omega * n).cos(), (omega * n).sin());
    Phasor {
        re: y.re * rc + y.im * rs,
        im: y.im * rc - y.re * rs,
    }
}

/// Peak amplitude of the component at `frequency` Hz.
pub fn tone_amplitude(samples: &[f64], frequency: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let omega = TAU * frequency / SAMPLE_RATE_HZ;
    2.0 * goertzel(samples, omega).norm() / samples.len() as f64
}

/// Peak magnitudes of harmonic orders 1..=N at multiples of `fundamental`.
pub fn harmonic_magnitudes<const N: usize>(samples: &[f64], fundamental: f64) -> [f64; N] {
    std::array::from_fn(|k| tone_amplitude(samples, (k + 1) as f64 * fundamental))
}

/// THD in percent, undefined when the fundamental does not exceed `floor`.
pub fn thd_with_floor(magnitudes: &[f64], floor: f64) -> Option<f64> {
    let (&fundamental, rest) = magnitudes.split_first()?;
    if !(fundamental > floor) {
        return None;
    }
    let distortion: f64 = rest.iter().map(|m| m * m).sum();
    Some(100.0 * distortion.sqrt() / fundamental)
}

/// THD in percent of `magnitudes[0]` (the fundamental); undefined for a zero
/// fundamental.
pub fn compute_thd(magnitudes: &[f64]) -> Option<f64> {
    thd_with_floor(magnitudes, 0.0)
}

/// Per-phase power quantities over one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePower {
    pub active: f64,
    pub reactive: f64,
    pub apparent: f64,
    pub power_factor: f64,
}

/// P from the instantaneous product, S from the RMS values, and Q as the
/// remaining leg of the power triangle, signed positive for lagging current.
/// The lag sign comes from the fundamental phasors at `fundamental` Hz; when
/// that is indeterminate, `lag_hint_deg` decides.
pub fn phase_power(v: &[f64], i: &[f64], fundamental: f64, lag_hint_deg: f64) -> PhasePower {
    debug_assert_eq!(v.len(), i.len());
    let n = v.len().max(1) as f64;
    let mut acc = 0.0;
    for (a, b) in v.iter().zip(i) {
        acc += a * b;
    }
    let active = acc / n;
    let apparent = rms(v) * rms(i);
    let magnitude = (apparent * apparent - active * active).max(0.0).sqrt();
    let sign = lag_sign(v, i, fundamental, lag_hint_deg);
    PhasePower {
        active,
        reactive: sign * magnitude,
        apparent,
        power_factor: if apparent > 0.0 { active / apparent } else { 0.0 },
    }
}

fn lag_sign(v: &[f64], i: &[f64], fundamental: f64, lag_hint_deg: f64) -> f64 {
    let omega = TAU * fundamental / SAMPLE_RATE_HZ;
    let (pv, pi) = (goertzel(v, omega), goertzel(i, omega));
    let cross = pv.mul_conj(pi);
    let scale = pv.norm() * pi.norm();
    if scale > 0.0 && cross.im.abs() > 1e-12 * scale {
        // arg(V) − arg(I) > 0 means current lags.
        cross.im.signum()
    } else if lag_hint_deg.to_radians().sin() < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Result of zero-crossing frequency estimation on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyEstimate {
    Measured(f64),
    /// Fewer than two positive-going crossings.
    NoCrossings,
}

/// Frequency from interpolated positive-going zero crossings:
/// `(crossings − 1) / (t_last − t_first)`.
pub fn zero_crossing_frequency(samples: &[f64]) -> FrequencyEstimate {
    let mut first = None;
    let mut last = 0.0;
    let mut count = 0usize;
    for k in 1..samples.len() {
        let (a, b) = (samples[k - 1], samples[k]);
        if a < 0.0 && b >= 0.0 {
            let t = (k - 1) as f64 + (-a) / (b - a);
            first.get_or_insert(t);
            last = t;
            count += 1;
        }
    }
    match first {
        Some(t0) if count >= 2 && last > t0 => {
            FrequencyEstimate::Measured((count - 1) as f64 * SAMPLE_RATE_HZ / (last - t0))
        }
        _ => FrequencyEstimate::NoCrossings,
    }
}
