//! Joint-to-motor calibration and servo pulse-width mapping.

use serde::{Deserialize, Serialize};

use crate::cpg::LEGS;
use crate::kinematics::JointPair;
use crate::scalar::{ensure_finite, Real};
use crate::{Error, Result};

/// `motor = scale * joint + offset`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap<T> {
    pub scale: T,
    pub offset: T,
}

impl<T: Real> AffineMap<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            offset: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("calibration", &[self.scale, self.offset])
            .map_err(|_| Error::Config("calibration coefficients must be finite".into()))?;
        if self.scale == T::zero() {
            return Err(Error::Config("calibration scale must be nonzero".into()));
        }
        Ok(())
    }

    pub fn forward(&self, joint: T) -> T {
        self.scale * joint + self.offset
    }

    pub fn inverse(&self, motor: T) -> T {
        (motor - self.offset) / self.scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCalibration<T> {
    pub hip: AffineMap<T>,
    pub knee: AffineMap<T>,
}

impl<T: Real> JointCalibration<T> {
    pub fn identity() -> Self {
        Self {
            hip: AffineMap::identity(),
            knee: AffineMap::identity(),
        }
    }

    /// Default mounting: hip motor zero at 5pi/8 (hip link 22.5 degrees behind
    /// vertical), knee motor zero at pi. Centers the shipped gait envelopes
    /// inside the actuator ranges.
    pub fn centered() -> Self {
        Self {
            hip: AffineMap {
                scale: T::one(),
                offset: -T::lit(5.0 * std::f64::consts::FRAC_PI_8),
            },
            knee: AffineMap {
                scale: T::one(),
                offset: -T::PI(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hip.validate()?;
        self.knee.validate()
    }
}

/// Linear pulse-width map between two (angle, pulse) endpoints, saturating
/// at the pulse endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwmMap<T> {
    pub min_angle: T,
    pub max_angle: T,
    /// µs at `min_angle`
    pub min_pulse_us: T,
    /// µs at `max_angle`
    pub max_pulse_us: T,
}

impl<T: Real> Default for PwmMap<T> {
    fn default() -> Self {
        Self {
            min_angle: T::lit(-135f64.to_radians()),
            max_angle: T::lit(135f64.to_radians()),
            min_pulse_us: T::lit(500.0),
            max_pulse_us: T::lit(2500.0),
        }
    }
}

impl<T: Real> PwmMap<T> {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "pwm map",
            &[self.min_angle, self.max_angle, self.min_pulse_us, self.max_pulse_us],
        )?;
        if self.max_angle > self.min_angle && self.max_pulse_us > self.min_pulse_us {
            Ok(())
        } else {
            Err(Error::Config("pwm map endpoints must be increasing".into()))
        }
    }
}

/// Per-leg joint calibration plus the shared PWM map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration<T> {
    pub legs: [JointCalibration<T>; LEGS],
    pub pwm: PwmMap<T>,
}

impl<T: Real> Default for Calibration<T> {
    fn default() -> Self {
        Self {
            legs: [JointCalibration::centered(); LEGS],
            pwm: PwmMap::default(),
        }
    }
}

impl<T: Real> Calibration<T> {
    pub fn validate(&self) -> Result<()> {
        for leg in &self.legs {
            leg.validate()?;
        }
        self.pwm.validate()
    }
}

pub fn joints_to_motor<T: Real>(q: JointPair<T>, cal: &JointCalibration<T>) -> Result<JointPair<T>> {
    cal.validate()?;
    Ok(JointPair::new(cal.hip.forward(q.hip), cal.knee.forward(q.knee)))
}

pub fn motor_to_joints<T: Real>(m: JointPair<T>, cal: &JointCalibration<T>) -> Result<JointPair<T>> {
    cal.validate()?;
    Ok(JointPair::new(cal.hip.inverse(m.hip), cal.knee.inverse(m.knee)))
}

/// Pulse width in µs for a motor angle, saturated to the map's pulse range.
pub fn motor_to_pwm<T: Real>(angle: T, map: &PwmMap<T>) -> T {
    let frac = (angle - map.min_angle) / (map.max_angle - map.min_angle);
    let pulse = map.min_pulse_us + frac * (map.max_pulse_us - map.min_pulse_us);
    if pulse.is_nan() {
        return map.min_pulse_us;
    }
    pulse.max(map.min_pulse_us).min(map.max_pulse_us)
}
