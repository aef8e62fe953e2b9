//! YIN fundamental-frequency estimation on a single analysis window.
//!
//! The window is split into an integration span of `len - tau_max` samples
//! and a lag range `1..=tau_max`. A frame is voiced when the cumulative-mean
//! normalized difference dips below the threshold somewhere in the admissible
//! lag range and the frame carries enough energy.

/// Lowest admissible fundamental frequency in Hz.
pub const MIN_F0: f64 = 75.0;
/// Highest admissible fundamental frequency in Hz.
pub const MAX_F0: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YinConfig {
    pub min_f0: f64,
    pub max_f0: f64,
    /// Absolute threshold on the normalized difference minimum.
    pub threshold: f64,
    /// Frames with RMS below this are unvoiced regardless of periodicity.
    pub rms_gate: f64,
}

impl Default for YinConfig {
    fn default() -> Self {
        Self {
            min_f0: MIN_F0,
            max_f0: MAX_F0,
            threshold: 0.15,
            rms_gate: 1e-4,
        }
    }
}

pub fn rms(window: &[f32]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let sum: f64 = window.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    (sum / window.len() as f64).sqrt()
}

/// Squared-difference sum between `a` and `b` (equal lengths), with lane
/// accumulators so the loop vectorizes.
fn sq_diff(a: &[f32], b: &[f32]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut total: f64 = acc.iter().map(|&v| f64::from(v)).sum();
    for (x, y) in ra.iter().zip(rb) {
        let d = f64::from(*x) - f64::from(*y);
        total += d * d;
    }
    total
}

/// Estimates F0 with the default configuration.
pub fn estimate_f0(window: &[f32], sample_rate: u32) -> Option<f64> {
    estimate_f0_with(window, sample_rate, &YinConfig::default())
}

pub fn estimate_f0_with(window: &[f32], sample_rate: u32, cfg: &YinConfig) -> Option<f64> {
    if rms(window) < cfg.rms_gate {
        return None;
    }
    let sr = f64::from(sample_rate);
    let tau_max = (sr / cfg.min_f0).floor() as usize;
    let tau_min = ((sr / cfg.max_f0).floor() as usize).max(2);
    if window.len() < 2 * tau_max || tau_min >= tau_max {
        return None;
    }
    let span = window.len() - tau_max;
    let head = &window[..span];

    let mut cmnd = vec![1.0f64; tau_max + 2];
    let mut running = 0.0f64;
    let mut diff = vec![0.0f64; tau_max + 2];
    for tau in 1..=tau_max + 1 {
        if tau + span > window.len() {
            // The parabola needs one lag past tau_max; reuse the last value.
            diff[tau] = diff[tau - 1];
        } else {
            diff[tau] = sq_diff(head, &window[tau..tau + span]);
        }
        running += diff[tau];
        cmnd[tau] = if running > 0.0 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }

    let mut tau = tau_min;
    let mut found = None;
    while tau <= tau_max {
        if cmnd[tau] < cfg.threshold {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            found = Some(tau);
            break;
        }
        tau += 1;
    }
    let tau = found?;

    let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let f0 = sr / (tau as f64 + shift);
    (cfg.min_f0..=cfg.max_f0).contains(&f0).then_some(f0)
}
