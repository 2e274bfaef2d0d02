//! Closed-form kinematics of the two-link planar leg and joint limit
//! enforcement.
//!
//! Leg frame: origin at the hip, `x` forward, `y` downward. `q_hip` is the
//! absolute angle of the hip link, `q_knee = kappa + q_hip` where `kappa` in
//! `[0, pi]` is the knee bend (0 = fully extended).

use serde::{Deserialize, Serialize};

use crate::scalar::{ensure_finite, Real, Vec2};
use crate::{Error, Result};

/// Radial margin kept from both workspace boundaries, m.
pub const WORKSPACE_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry<T> {
    /// Hip link length, m.
    pub l1: T,
    /// Knee link length, m.
    pub l2: T,
}

impl<T: Real> Default for LegGeometry<T> {
    fn default() -> Self {
        Self {
            l1: T::lit(0.120),
            l2: T::lit(0.120),
        }
    }
}

impl<T: Real> LegGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("link lengths", &[self.l1, self.l2])?;
        if self.l1 > T::zero() && self.l2 > T::zero() {
            Ok(())
        } else {
            Err(Error::Config("link lengths must be > 0".into()))
        }
    }

    pub fn min_reach(&self) -> T {
        (self.l1 - self.l2).abs()
    }

    pub fn max_reach(&self) -> T {
        self.l1 + self.l2
    }
}

/// Actuator position and speed limits, applied in the motor frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimits<T> {
    /// Symmetric hip range `[-hip_range, hip_range]`, rad.
    pub hip_range: T,
    pub knee_range: T,
    /// rad/s
    pub hip_speed_max: T,
    pub knee_speed_max: T,
}

impl<T: Real> Default for JointLimits<T> {
    fn default() -> Self {
        Self {
            hip_range: T::lit(45f64.to_radians()),
            knee_range: T::lit(70f64.to_radians()),
            hip_speed_max: T::lit(461f64.to_radians()),
            knee_speed_max: T::lit(461f64.to_radians()),
        }
    }
}

impl<T: Real> JointLimits<T> {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "joint limits",
            &[
                self.hip_range,
                self.knee_range,
                self.hip_speed_max,
                self.knee_speed_max,
            ],
        )?;
        if [
            self.hip_range,
            self.knee_range,
            self.hip_speed_max,
            self.knee_speed_max,
        ]
        .iter()
        .all(|v| *v > T::zero())
        {
            Ok(())
        } else {
            Err(Error::Config("joint limits must be > 0".into()))
        }
    }
}

/// A (hip, knee) pair, used for joint angles and motor angles alike.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointPair<T> {
    pub hip: T,
    pub knee: T,
}

impl<T: Real> JointPair<T> {
    pub fn new(hip: T, knee: T) -> Self {
        Self { hip, knee }
    }

    pub fn to_array(self) -> [T; 2] {
        [self.hip, self.knee]
    }
}

/// Inverse kinematics solution with its intermediate angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointAngles<T> {
    pub q_hip: T,
    pub q_knee: T,
    /// Knee bend, in `[0, pi]`.
    pub kappa: T,
    /// Angle between the hip link and the hip-foot line.
    pub zeta: T,
    /// Direction of the hip-foot line.
    pub theta: T,
    /// Hip-foot distance, m.
    pub l3: T,
}

impl<T: Real> JointAngles<T> {
    pub fn joints(&self) -> JointPair<T> {
        JointPair::new(self.q_hip, self.q_knee)
    }
}

fn zeta_of<T: Real>(kappa: T, geom: &LegGeometry<T>) -> T {
    (geom.l2 * kappa.sin()).atan2(geom.l1 + geom.l2 * kappa.cos())
}

pub fn inverse_kinematics<T: Real>(x: T, y: T, geom: &LegGeometry<T>) -> Result<JointAngles<T>> {
    ensure_finite("endpoint", &[x, y])?;
    geom.validate()?;
    let l3 = x.hypot(y);
    if l3 == T::zero() {
        return Err(Error::Singular);
    }
    let (min, max) = (geom.min_reach(), geom.max_reach());
    if l3 > max || l3 < min {
        return Err(Error::Workspace {
            radius: l3.as_f64(),
            min: min.as_f64(),
            max: max.as_f64(),
        });
    }
    let theta = y.atan2(x);
    let cos_kappa = (l3 * l3 - geom.l1 * geom.l1 - geom.l2 * geom.l2)
        / (T::lit(2.0) * geom.l1 * geom.l2);
    let kappa = cos_kappa.max(-T::one()).min(T::one()).acos();
    let zeta = zeta_of(kappa, geom);
    let q_hip = theta + zeta;
    Ok(JointAngles {
        q_hip,
        q_knee: kappa + q_hip,
        kappa,
        zeta,
        theta,
        l3,
    })
}

/// Result of forward kinematics. `singular` is set when the leg is folded
/// onto the hip (`l3 = 0`) and the position is reported as the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSolution<T> {
    pub x: T,
    pub y: T,
    pub singular: bool,
}

pub fn forward_kinematics<T: Real>(q_hip: T, q_knee: T, geom: &LegGeometry<T>) -> Result<ForwardSolution<T>> {
    ensure_finite("joint angles", &[q_hip, q_knee])?;
    geom.validate()?;
    let kappa = q_knee - q_hip;
    if kappa < T::zero() || kappa > T::PI() {
        return Err(Error::InvalidConfiguration {
            kappa: kappa.as_f64(),
        });
    }
    let l3_sq = geom.l1 * geom.l1 + geom.l2 * geom.l2 + T::lit(2.0) * geom.l1 * geom.l2 * kappa.cos();
    let l3 = l3_sq.max(T::zero()).sqrt();
    if l3 <= T::epsilon().sqrt() * geom.max_reach() {
        return Ok(ForwardSolution {
            x: T::zero(),
            y: T::zero(),
            singular: true,
        });
    }
    let theta = q_hip - zeta_of(kappa, geom);
    Ok(ForwardSolution {
        x: l3 * theta.cos(),
        y: l3 * theta.sin(),
        singular: false,
    })
}

fn margin_bounds<T: Real>(geom: &LegGeometry<T>) -> (T, T) {
    let eps = T::lit(WORKSPACE_MARGIN);
    (geom.min_reach() + eps, geom.max_reach() - eps)
}

/// True iff the point lies inside the reachable annulus shrunk by the margin.
pub fn workspace_contains<T: Real>(x: T, y: T, geom: &LegGeometry<T>) -> bool {
    let r = x.hypot(y);
    let (lo, hi) = margin_bounds(geom);
    r.is_finite() && r >= lo && r <= hi
}

/// Moves a point radially onto the margin-shrunk annulus. Returns the point
/// and whether it moved. Points at the origin are sent straight down.
pub fn project_to_workspace<T: Real>(p: Vec2<T>, geom: &LegGeometry<T>) -> (Vec2<T>, bool) {
    if workspace_contains(p.x, p.y, geom) {
        return (p, false);
    }
    let (lo, hi) = margin_bounds(geom);
    let r = p.norm();
    if !(r > T::zero()) || !r.is_finite() {
        return (Vec2::new(T::zero(), lo), true);
    }
    let target = if r < lo { lo } else { hi };
    (p * (target / r), true)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlags {
    pub hip_position: bool,
    pub hip_rate: bool,
    pub knee_position: bool,
    pub knee_rate: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.hip_position || self.hip_rate || self.knee_position || self.knee_rate
    }
}

fn clamp_axis<T: Real>(cmd: T, prev: T, range: T, rate: T, dt: T) -> (T, bool, bool) {
    let positioned = cmd.max(-range).min(range);
    let position_hit = positioned != cmd;
    let step = rate * dt;
    let limited = positioned.max(prev - step).min(prev + step);
    (limited, position_hit, limited != positioned)
}

/// Clamps a motor-frame command to the position range, then rate-limits it
/// against the previous command.
pub fn clamp_joint_command<T: Real>(
    command: JointPair<T>,
    previous: JointPair<T>,
    limits: &JointLimits<T>,
    dt: T,
) -> (JointPair<T>, ClampFlags) {
    let (hip, hip_position, hip_rate) = clamp_axis(
        command.hip,
        previous.hip,
        limits.hip_range,
        limits.hip_speed_max,
        dt,
    );
    let (knee, knee_position, knee_rate) = clamp_axis(
        command.knee,
        previous.knee,
        limits.knee_range,
        limits.knee_speed_max,
        dt,
    );
    (
        JointPair::new(hip, knee),
        ClampFlags {
            hip_position,
            hip_rate,
            knee_position,
            knee_rate,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn geom() -> LegGeometry<f64> {
        LegGeometry::default()
    }

    #[test]
    fn full_extension() {
        let ik = inverse_kinematics(0.0, 0.24, &geom()).unwrap();
        assert!(ik.kappa.abs() < 1e-7);
        assert!(ik.zeta.abs() < 1e-7);
        assert!((ik.theta - FRAC_PI_2).abs() < 1e-15);
        assert!((ik.q_hip - FRAC_PI_2).abs() < 1e-7);
        assert!((ik.q_knee - FRAC_PI_2).abs() < 1e-7);
        let fk = forward_kinematics(FRAC_PI_2, FRAC_PI_2, &geom()).unwrap();
        assert!(fk.x.abs() < 1e-15 && (fk.y - 0.24).abs() < 1e-15 && !fk.singular);
    }

    #[test]
    fn out_of_reach_and_singular() {
        match inverse_kinematics(0.0, 0.30, &geom()) {
            Err(Error::Workspace { radius, .. }) => assert!((radius - 0.30).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(inverse_kinematics(0.0, 0.0, &geom()), Err(Error::Singular));
        let uneven = LegGeometry { l1: 0.15, l2: 0.1 };
        assert!(matches!(
            inverse_kinematics(0.0, 0.03, &uneven),
            Err(Error::Workspace { .. })
        ));
    }

    #[test]
    fn folded_leg_is_flagged_singular() {
        let fk = forward_kinematics(1.0, 1.0 + PI, &geom()).unwrap();
        assert!(fk.singular);
        assert_eq!((fk.x, fk.y), (0.0, 0.0));
    }

    #[test]
    fn invalid_configuration() {
        assert!(matches!(
            forward_kinematics(1.0, 0.5, &geom()),
            Err(Error::InvalidConfiguration { .. })
        ));
        assert!(forward_kinematics(0.0, 3.5, &geom()).is_err());
    }

    #[test]
    fn round_trip_example_with_grid_cross_check() {
        let ik = inverse_kinematics(0.05, 0.20, &geom()).unwrap();
        let fk = forward_kinematics(ik.q_hip, ik.q_knee, &geom()).unwrap();
        assert!((fk.x - 0.05).abs() < 1e-9 && (fk.y - 0.20).abs() < 1e-9);

        // Independent brute-force search over (q_hip, kappa) using direct
        // link-sum forward kinematics.
        let direct = |qh: f64, kappa: f64| {
            let g = geom();
            let knee = (g.l1 * qh.cos(), g.l1 * qh.sin());
            let shank = qh + kappa;
            (knee.0 + g.l2 * shank.cos(), knee.1 + g.l2 * shank.sin())
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let n = 800;
        for a in 0..=n {
            let qh = PI * a as f64 / n as f64;
            for b in 0..=n {
                let kappa = PI * b as f64 / n as f64;
                let (x, y) = direct(qh, -kappa);
                let d = (x - 0.05).hypot(y - 0.20);
                if d < best.0 {
                    best = (d, qh, kappa);
                }
            }
        }
        assert!(best.0 < 5e-4, "grid miss {}", best.0);
        assert!((best.1 - ik.q_hip).abs() < 0.01, "{} vs {}", best.1, ik.q_hip);
        assert!((best.2 - ik.kappa).abs() < 0.01);
    }

    #[test]
    fn workspace_examples() {
        assert!(workspace_contains(0.0, 0.22, &geom()));
        assert!(!workspace_contains(0.0, 0.24, &geom()));
        assert!(!workspace_contains(0.0, 0.0, &geom()));
        let (p, moved) = project_to_workspace(Vec2::new(0.0, 0.3), &geom());
        assert!(moved && (p.y - 0.239).abs() < 1e-15);
        let (p, moved) = project_to_workspace(Vec2::new(0.0, 0.2), &geom());
        assert!(!moved && p.y == 0.2);
    }

    #[test]
    fn clamp_examples() {
        let limits = JointLimits::<f64>::default();
        let prev = JointPair::new(0.1, -0.2);
        let (out, flags) = clamp_joint_command(JointPair::new(0.11, -0.21), prev, &limits, 0.02);
        assert_eq!(out, JointPair::new(0.11, -0.21));
        assert!(!flags.any());

        let prev = JointPair::new(45f64.to_radians(), 0.0);
        let (out, flags) = clamp_joint_command(JointPair::new(60f64.to_radians(), 0.0), prev, &limits, 0.02);
        assert!((out.hip - 45f64.to_radians()).abs() < 1e-15);
        assert!(flags.hip_position && !flags.hip_rate);

        let (out, flags) = clamp_joint_command(
            JointPair::new(20f64.to_radians(), 0.0),
            JointPair::new(0.0, 0.0),
            &limits,
            0.02,
        );
        assert!((out.hip.to_degrees() - 9.22).abs() < 1e-9);
        assert!(flags.hip_rate && !flags.hip_position);
    }

    #[test]
    fn single_precision_round_trip() {
        let g = LegGeometry::<f32>::default();
        let ik = inverse_kinematics(0.03f32, 0.2, &g).unwrap();
        let fk = forward_kinematics(ik.q_hip, ik.q_knee, &g).unwrap();
        assert!((fk.x - 0.03).abs() < 1e-5 && (fk.y - 0.2).abs() < 1e-5);
    }

    fn annulus_point() -> impl Strategy<Value = (f64, f64)> {
        (0.001f64..0.239, 0.0f64..std::f64::consts::TAU).prop_map(|(r, a)| (r * a.cos(), r * a.sin()))
    }

    proptest! {
        #[test]
        fn fk_inverts_ik((x, y) in annulus_point()) {
            let ik = inverse_kinematics(x, y, &geom()).unwrap();
            prop_assert!((0.0..=PI).contains(&ik.kappa));
            let fk = forward_kinematics(ik.q_hip, ik.q_knee, &geom()).unwrap();
            prop_assert!((fk.x - x).hypot(fk.y - y) < 1e-9);
        }

        #[test]
        fn ik_is_continuous(
            (x, y) in (0.02f64..0.2, 0.0f64..std::f64::consts::TAU).prop_map(|(r, a)| (r * a.cos(), r * a.sin())),
            dir in 0.0f64..std::f64::consts::TAU,
        ) {
            let (x2, y2) = (x + 1e-3 * dir.cos(), y + 1e-3 * dir.sin());
            prop_assume!(workspace_contains(x2, y2, &geom()) && y > 0.0 && y2 > 0.0);
            let a = inverse_kinematics(x, y, &geom()).unwrap();
            let b = inverse_kinematics(x2, y2, &geom()).unwrap();
            prop_assert!((a.q_hip - b.q_hip).abs() < 0.1);
            prop_assert!((a.q_knee - b.q_knee).abs() < 0.1);
        }

        #[test]
        fn clamp_always_respects_limits(
            cmd in proptest::array::uniform2(-4.0f64..4.0),
            prev_frac in proptest::array::uniform2(-1.0f64..1.0),
            dt in 0.001f64..0.05,
        ) {
            let limits = JointLimits::<f64>::default();
            let prev = JointPair::new(prev_frac[0] * limits.hip_range, prev_frac[1] * limits.knee_range);
            let (out, _) = clamp_joint_command(JointPair::new(cmd[0], cmd[1]), prev, &limits, dt);
            prop_assert!(out.hip.abs() <= limits.hip_range);
            prop_assert!(out.knee.abs() <= limits.knee_range);
            prop_assert!((out.hip - prev.hip).abs() <= limits.hip_speed_max * dt * (1.0 + 1e-12));
            prop_assert!((out.knee - prev.knee).abs() <= limits.knee_speed_max * dt * (1.0 + 1e-12));
        }
    }
}
