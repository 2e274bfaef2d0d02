//! Kinematic "treadmill" estimate of body speed from foot motion.

use serde::{Deserialize, Serialize};

use crate::cpg::LEGS;
use crate::{Error, Result};

/// Feet within this distance (m) of a leg's deepest point in the window are
/// treated as in stance.
pub const STANCE_BAND: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    /// s
    pub t: f64,
    /// rad/s
    pub omega: f64,
    /// Per-leg foot position `[x, y]`, m.
    pub feet: [[f64; 2]; LEGS],
}

/// Mean of `-dx/dt` over consecutive samples where the foot is in stance.
///
/// The window must span at least one gait cycle at the window's mean
/// frequency; a stationary window (mean frequency ~0) reports 0.
pub fn estimate_body_speed(window: &[SpeedSample]) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::InvalidInput("speed window needs at least two samples"));
    }
    let mean_omega = window.iter().map(|s| s.omega).sum::<f64>() / window.len() as f64;
    if !mean_omega.is_finite() {
        return Err(Error::InvalidInput("non-finite frequency in speed window"));
    }
    if mean_omega.abs() < 1e-9 {
        return Ok(0.0);
    }
    let period = std::f64::consts::TAU / mean_omega.abs();
    let span = window[window.len() - 1].t - window[0].t;
    if span + 1e-9 < period {
        return Err(Error::InvalidInput("speed window shorter than one gait cycle"));
    }

    let mut sum = 0.0;
    let mut count = 0usize;
    for leg in 0..LEGS {
        let deepest = window
            .iter()
            .map(|s| s.feet[leg][1])
            .fold(f64::NEG_INFINITY, f64::max);
        let threshold = deepest - STANCE_BAND;
        for pair in window.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let dt = b.t - a.t;
            if dt <= 0.0 {
                continue;
            }
            if a.feet[leg][1] >= threshold && b.feet[leg][1] >= threshold {
                sum += -(b.feet[leg][0] - a.feet[leg][0]) / dt;
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
