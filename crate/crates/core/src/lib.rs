//! Gait generation for a planar-leg quadruped.
//!
//! A four-oscillator phase network drives polynomial foot trajectories; the
//! filtered endpoints go through two-link inverse kinematics, actuator limits
//! and a servo pulse map. [`runtime::GaitRuntime`] ties the stages together
//! at a fixed command rate.
//!
//! The math modules are generic over [`Real`] (`f32` / `f64`); the aliases
//! below fix them to `f64`, which the runtime and file formats use.

pub mod actuation;
pub mod cpg;
mod error;
pub mod fit;
pub mod kinematics;
pub mod library;
pub mod runtime;
pub mod scalar;
pub mod speed;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

pub use library::{GaitLibrary, GAIT_NAMES};
pub use runtime::{Ack, Command, GaitRuntime, LegFlags, RuntimeConfig, TelemetryFrame};
pub use speed::{estimate_body_speed, SpeedSample};
pub use trajectory::TurnDirection;

pub use cpg::LEGS;

pub type Vec2 = scalar::Vec2<f64>;
pub type Coupling = cpg::Coupling<f64>;
pub type CpgConfig = cpg::CpgConfig<f64>;
pub type CpgState = cpg::CpgState<f64>;
pub type GaitDefinition = trajectory::GaitDefinition<f64>;
pub type TurnState = trajectory::TurnState<f64>;
pub type BasisVector = trajectory::BasisVector<f64>;
pub type FitSample = fit::FitSample<f64>;
pub type LegFit = fit::LegFit<f64>;
pub type LegGeometry = kinematics::LegGeometry<f64>;
pub type JointLimits = kinematics::JointLimits<f64>;
pub type JointAngles = kinematics::JointAngles<f64>;
pub type JointPair = kinematics::JointPair<f64>;
pub type Calibration = actuation::Calibration<f64>;
pub type JointCalibration = actuation::JointCalibration<f64>;
pub type PwmMap = actuation::PwmMap<f64>;
