//! Fixed-rate gait pipeline.
//!
//! Each command tick integrates the oscillator network for
//! `1 / (command_rate_hz * internal_dt)` internal steps, then turns the
//! filtered foot endpoints into clamped motor commands and servo pulses:
//!
//! phases -> desired endpoints -> tracking filter -> turn scaling ->
//! workspace projection -> IK -> calibration -> clamp -> PWM
//!
//! The runtime never reads a clock; given the same config and the same
//! commands at the same ticks it produces bit-identical frames.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::actuation::{joints_to_motor, motor_to_pwm, Calibration};
use crate::cpg::{locked_phases, Coupling, CpgConfig, CpgState, EndpointTarget, LEGS};
use crate::kinematics::{
    clamp_joint_command, inverse_kinematics, project_to_workspace, ClampFlags, JointLimits,
    JointPair, LegGeometry,
};
use crate::library::GaitLibrary;
use crate::scalar::Vec2;
use crate::speed::{estimate_body_speed, SpeedSample};
use crate::trajectory::{
    apply_turning, basis_at, endpoint_from_weights, step_turn_filter, BasisVector, TurnDirection,
    TurnState, WeightMatrix, BASIS_LEN,
};
use crate::{Error, Result};

impl Default for GaitLibrary {
    fn default() -> Self {
        Self::shipped()
    }
}

/// Oscillator gains as stored in the runtime configuration file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpgGains {
    pub alpha_omega: f64,
    pub alpha_endpoint: f64,
    pub alpha_offset: f64,
    pub coupling: Coupling<f64>,
}

impl Default for CpgGains {
    fn default() -> Self {
        Self {
            alpha_omega: 10.0,
            alpha_endpoint: 25.0,
            alpha_offset: 5.0,
            coupling: Coupling::all_to_all(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub command_rate_hz: f64,
    pub internal_dt: f64,
    pub cpg: CpgGains,
    /// Turn coefficient filter gain, 1/s.
    pub turn_gain: f64,
    pub geometry: LegGeometry<f64>,
    pub limits: JointLimits<f64>,
    pub calibration: Calibration<f64>,
    /// Defaults to the first gait in the library.
    pub initial_gait: Option<String>,
    /// Defaults to the initial gait's nominal frequency.
    pub initial_frequency_hz: Option<f64>,
    pub max_frequency_hz: f64,
    /// Number of frames kept for the speed estimate.
    pub speed_window: usize,
    /// Labels for legs 1..4, used in exports.
    pub leg_names: [String; LEGS],
    #[serde(skip)]
    pub gaits: GaitLibrary,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            command_rate_hz: 50.0,
            internal_dt: 0.002,
            cpg: CpgGains::default(),
            turn_gain: 3.0,
            geometry: LegGeometry::default(),
            limits: JointLimits::default(),
            calibration: Calibration::default(),
            initial_gait: None,
            initial_frequency_hz: None,
            max_frequency_hz: 3.0,
            speed_window: 250,
            leg_names: ["front_left", "front_right", "hind_left", "hind_right"].map(String::from),
            gaits: GaitLibrary::shipped(),
        }
    }
}

impl RuntimeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Internal steps per command tick.
    pub fn substeps(&self) -> Result<u32> {
        let ratio = 1.0 / (self.command_rate_hz * self.internal_dt);
        let n = ratio.round();
        if !(ratio.is_finite() && n >= 1.0 && (ratio - n).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "internal_dt {} does not divide the command period 1/{} Hz",
                self.internal_dt, self.command_rate_hz
            )));
        }
        Ok(n as u32)
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.command_rate_hz
    }

    pub fn initial_gait_name(&self) -> &str {
        self.initial_gait
            .as_deref()
            .unwrap_or_else(|| self.gaits.first().name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.command_rate_hz.is_finite() && self.command_rate_hz > 0.0) {
            return Err(Error::Config("command_rate_hz must be > 0".into()));
        }
        if !(self.internal_dt.is_finite() && self.internal_dt > 0.0) {
            return Err(Error::Config("internal_dt must be > 0".into()));
        }
        self.substeps()?;
        let gains = [
            self.cpg.alpha_omega,
            self.cpg.alpha_endpoint,
            self.cpg.alpha_offset,
            self.turn_gain,
        ];
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Config("filter gains must be finite and >= 0".into()));
        }
        self.cpg.coupling.validate()?;
        self.geometry.validate()?;
        self.limits.validate()?;
        self.calibration.validate()?;
        if !(self.max_frequency_hz.is_finite() && self.max_frequency_hz >= 0.0) {
            return Err(Error::Config("max_frequency_hz must be >= 0".into()));
        }
        if self.speed_window < 2 {
            return Err(Error::Config("speed_window must be >= 2".into()));
        }
        let name = self.initial_gait_name();
        let gait = self
            .gaits
            .get(name)
            .ok_or_else(|| Error::Config(format!("initial gait '{name}' not in library")))?;
        let hz = self
            .initial_frequency_hz
            .unwrap_or(gait.nominal_frequency / TAU);
        if !(hz.is_finite() && hz >= 0.0 && hz <= self.max_frequency_hz) {
            return Err(Error::Config(format!(
                "initial frequency {hz} Hz outside [0, {}]",
                self.max_frequency_hz
            )));
        }
        Ok(())
    }
}

/// Operator commands, applied at tick boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetGait { gait: String },
    SetTurn { direction: TurnDirection },
    SetFrequency { hz: f64 },
    Stop,
    /// Adds `(dx, dy)` m/s to the endpoint velocity of leg `leg` (1-based)
    /// for the next tick only.
    InjectDelta { leg: usize, dx: f64, dy: f64 },
}

/// Whether an accepted command changed anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ack {
    Applied,
    Unchanged,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegFlags {
    /// The commanded endpoint was outside the workspace and was moved onto it.
    pub projected: bool,
    #[serde(flatten)]
    pub clamp: ClampFlags,
}

/// Snapshot of one command tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    /// Simulated time at the end of the tick, s.
    pub t: f64,
    pub gait: String,
    pub omega: f64,
    pub omega_target: f64,
    pub phases: [f64; LEGS],
    pub offsets: [f64; LEGS],
    pub target_offsets: [f64; LEGS],
    pub turn: [f64; LEGS],
    /// Commanded endpoints after turn scaling and projection, m.
    pub feet: [[f64; 2]; LEGS],
    pub desired: [[f64; 2]; LEGS],
    pub filtered: [[f64; 2]; LEGS],
    /// Inverse kinematics joint angles `[hip, knee]`, rad.
    pub joints: [[f64; 2]; LEGS],
    /// Clamped motor commands `[hip, knee]`, rad.
    pub motors: [[f64; 2]; LEGS],
    pub pwm: [[f64; 2]; LEGS],
    pub flags: [LegFlags; LEGS],
    pub speed: f64,
}

impl TelemetryFrame {
    pub fn speed_sample(&self) -> SpeedSample {
        SpeedSample {
            t: self.t,
            omega: self.omega,
            feet: self.filtered,
        }
    }

    pub fn is_finite(&self) -> bool {
        let arrays = [&self.phases, &self.offsets, &self.target_offsets, &self.turn];
        let pairs = [
            &self.feet,
            &self.desired,
            &self.filtered,
            &self.joints,
            &self.motors,
            &self.pwm,
        ];
        self.t.is_finite()
            && self.omega.is_finite()
            && self.speed.is_finite()
            && arrays.iter().all(|a| a.iter().all(|v| v.is_finite()))
            && pairs.iter().all(|a| a.iter().flatten().all(|v| v.is_finite()))
    }
}

type Weights = (WeightMatrix<f64>, WeightMatrix<f64>);

/// Linear cross-fade between two weight sets.
#[derive(Clone, Debug, PartialEq)]
struct WeightBlend {
    from: Weights,
    to: Weights,
    progress: f64,
    duration: f64,
}

impl WeightBlend {
    fn settled(weights: Weights) -> Self {
        Self {
            from: weights,
            to: weights,
            progress: 1.0,
            duration: 0.0,
        }
    }

    fn current(&self) -> Weights {
        if self.progress >= 1.0 {
            return self.to;
        }
        let s = self.progress;
        let mix = |a: &WeightMatrix<f64>, b: &WeightMatrix<f64>| -> WeightMatrix<f64> {
            std::array::from_fn(|leg| {
                std::array::from_fn(|j| a[leg][j] + (b[leg][j] - a[leg][j]) * s)
            })
        };
        (mix(&self.from.0, &self.to.0), mix(&self.from.1, &self.to.1))
    }

    fn advance(&mut self, dt: f64) {
        if self.progress < 1.0 {
            self.progress = if self.duration > 0.0 {
                (self.progress + dt / self.duration).min(1.0)
            } else {
                1.0
            };
        }
    }
}

fn derivative_basis(u: f64) -> BasisVector<f64> {
    let powers = basis_at(u).0;
    let mut d = [0.0; BASIS_LEN];
    for j in 1..BASIS_LEN {
        d[j] = j as f64 * powers[j - 1] / TAU;
    }
    BasisVector(d)
}

fn desired_at(weights: &Weights, leg: usize, phi: f64) -> EndpointTarget<f64> {
    let u = phi / TAU;
    EndpointTarget {
        position: endpoint_from_weights(&basis_at(u), &weights.0[leg], &weights.1[leg]),
        phase_derivative: endpoint_from_weights(&derivative_basis(u), &weights.0[leg], &weights.1[leg]),
    }
}

/// Owns the oscillator state and turns it into motor commands once per tick.
#[derive(Clone, Debug)]
pub struct GaitRuntime {
    config: RuntimeConfig,
    substeps: u32,
    cpg: CpgConfig<f64>,
    state: CpgState<f64>,
    turn: TurnState<f64>,
    gait: String,
    blend: WeightBlend,
    previous_motors: [JointPair<f64>; LEGS],
    history: VecDeque<SpeedSample>,
    tick: u64,
}

impl GaitRuntime {
    pub fn new(config: RuntimeConfig) -> Result<Self> {
        config.validate()?;
        let substeps = config.substeps()?;
        let gait = config
            .gaits
            .get(config.initial_gait_name())
            .cloned()
            .expect("validated initial gait");
        let hz = config
            .initial_frequency_hz
            .unwrap_or(gait.nominal_frequency / TAU);
        let cpg = CpgConfig {
            omega_target: TAU * hz,
            alpha_omega: config.cpg.alpha_omega,
            coupling: config.cpg.coupling,
            phase_offsets: gait.target_offsets,
            alpha_endpoint: config.cpg.alpha_endpoint,
            alpha_offset: config.cpg.alpha_offset,
        };
        cpg.validate()?;

        let weights = (gait.weights_x, gait.weights_y);
        let phases = locked_phases(&gait.target_offsets, 0.0);
        let endpoints: [Vec2<f64>; LEGS] =
            std::array::from_fn(|leg| desired_at(&weights, leg, phases[leg]).position);

        let mut previous_motors = [JointPair::default(); LEGS];
        for leg in 0..LEGS {
            let (p, _) = project_to_workspace(endpoints[leg], &config.geometry);
            let ik = inverse_kinematics(p.x, p.y, &config.geometry)?;
            let m = joints_to_motor(ik.joints(), &config.calibration.legs[leg])?;
            previous_motors[leg] = JointPair::new(
                m.hip.clamp(-config.limits.hip_range, config.limits.hip_range),
                m.knee.clamp(-config.limits.knee_range, config.limits.knee_range),
            );
        }

        Ok(Self {
            substeps,
            state: CpgState {
                omega: 0.0,
                phases,
                endpoints,
                current_offsets: gait.target_offsets,
                delta_input: [Vec2::zero(); LEGS],
            },
            cpg,
            turn: TurnState::default(),
            gait: gait.name.clone(),
            blend: WeightBlend::settled(weights),
            previous_motors,
            history: VecDeque::with_capacity(config.speed_window),
            tick: 0,
            config,
        })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn state(&self) -> &CpgState<f64> {
        &self.state
    }

    pub fn turn_state(&self) -> &TurnState<f64> {
        &self.turn
    }

    pub fn gait(&self) -> &str {
        &self.gait
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn omega_target(&self) -> f64 {
        self.cpg.omega_target
    }

    pub fn apply(&mut self, command: &Command) -> Result<Ack> {
        match command {
            Command::SetGait { gait } => self.set_gait(gait),
            Command::SetTurn { direction } => Ok(self.set_turn(*direction)),
            Command::SetFrequency { hz } => self.set_frequency(*hz),
            Command::Stop => self.set_frequency(0.0),
            Command::InjectDelta { leg, dx, dy } => self.inject_delta(*leg, *dx, *dy),
        }
    }

    /// Switches the target offsets and cross-fades the weights over
    /// `3 / alpha_offset` seconds.
    pub fn set_gait(&mut self, name: &str) -> Result<Ack> {
        if name == self.gait {
            return Ok(Ack::Unchanged);
        }
        let next = self
            .config
            .gaits
            .get(name)
            .ok_or_else(|| Error::Command(format!("unknown gait '{name}'")))?;
        let duration = if self.cpg.alpha_offset > 0.0 {
            3.0 / self.cpg.alpha_offset
        } else {
            0.0
        };
        self.blend = WeightBlend {
            from: self.blend.current(),
            to: (next.weights_x, next.weights_y),
            progress: 0.0,
            duration,
        };
        self.cpg.phase_offsets = next.target_offsets;
        self.gait = next.name.clone();
        Ok(Ack::Applied)
    }

    pub fn set_turn(&mut self, direction: TurnDirection) -> Ack {
        if self.turn.target == direction {
            return Ack::Unchanged;
        }
        self.turn.target = direction;
        Ack::Applied
    }

    pub fn set_frequency(&mut self, hz: f64) -> Result<Ack> {
        if !(hz.is_finite() && hz >= 0.0 && hz <= self.config.max_frequency_hz) {
            return Err(Error::Command(format!(
                "frequency {hz} Hz outside [0, {}] Hz",
                self.config.max_frequency_hz
            )));
        }
        let omega = TAU * hz;
        if omega == self.cpg.omega_target {
            return Ok(Ack::Unchanged);
        }
        self.cpg.omega_target = omega;
        Ok(Ack::Applied)
    }

    pub fn inject_delta(&mut self, leg: usize, dx: f64, dy: f64) -> Result<Ack> {
        if !(1..=LEGS).contains(&leg) {
            return Err(Error::Command(format!("leg {leg} outside 1..={LEGS}")));
        }
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::Command("delta must be finite".into()));
        }
        let d = &mut self.state.delta_input[leg - 1];
        *d = *d + Vec2::new(dx, dy);
        Ok(Ack::Applied)
    }

    /// Advances one command period and returns the resulting frame.
    pub fn tick(&mut self) -> Result<TelemetryFrame> {
        let dt = self.config.internal_dt;
        for _ in 0..self.substeps {
            let weights = self.blend.current();
            self.state = self
                .state
                .advance(&self.cpg, dt, |leg, phi| desired_at(&weights, leg, phi))?;
            self.turn = step_turn_filter(&self.turn, dt, self.config.turn_gain);
            self.blend.advance(dt);
        }
        self.state.delta_input = [Vec2::zero(); LEGS];
        if !self.state.is_finite() {
            return Err(Error::InvalidInput("oscillator state became non-finite"));
        }
        self.tick += 1;
        Ok(self.build_frame())
    }

    fn build_frame(&mut self) -> TelemetryFrame {
        let weights = self.blend.current();
        let filtered = self.state.endpoints;
        let turned_x = apply_turning(filtered.map(|p| p.x), &self.turn);
        let tick_dt = self.config.tick_dt();

        let mut frame = TelemetryFrame {
            tick: self.tick,
            t: self.tick as f64 * tick_dt,
            gait: self.gait.clone(),
            omega: self.state.omega,
            omega_target: self.cpg.omega_target,
            phases: self.state.phases,
            offsets: self.state.current_offsets,
            target_offsets: self.cpg.phase_offsets,
            turn: self.turn.coefficients,
            feet: [[0.0; 2]; LEGS],
            desired: [[0.0; 2]; LEGS],
            filtered: filtered.map(Vec2::to_array),
            joints: [[0.0; 2]; LEGS],
            motors: [[0.0; 2]; LEGS],
            pwm: [[0.0; 2]; LEGS],
            flags: [LegFlags::default(); LEGS],
            speed: 0.0,
        };

        for leg in 0..LEGS {
            frame.desired[leg] = desired_at(&weights, leg, self.state.phases[leg])
                .position
                .to_array();
            let commanded = Vec2::new(turned_x[leg], filtered[leg].y);
            let (target, projected) = project_to_workspace(commanded, &self.config.geometry);
            frame.feet[leg] = target.to_array();
            frame.flags[leg].projected = projected;

            let cal = &self.config.calibration.legs[leg];
            let previous = self.previous_motors[leg];
            let (joints, motor_cmd) = match inverse_kinematics(target.x, target.y, &self.config.geometry)
                .and_then(|ik| Ok((ik.joints(), joints_to_motor(ik.joints(), cal)?)))
            {
                Ok(v) => v,
                // Unreachable after projection; hold the previous command.
                Err(_) => (JointPair::new(f64::NAN, f64::NAN), previous),
            };
            let (motors, clamp) = clamp_joint_command(motor_cmd, previous, &self.config.limits, tick_dt);
            self.previous_motors[leg] = motors;
            frame.joints[leg] = if joints.hip.is_nan() {
                [cal.hip.inverse(motors.hip), cal.knee.inverse(motors.knee)]
            } else {
                joints.to_array()
            };
            frame.motors[leg] = motors.to_array();
            let pwm = &self.config.calibration.pwm;
            frame.pwm[leg] = [motor_to_pwm(motors.hip, pwm), motor_to_pwm(motors.knee, pwm)];
            frame.flags[leg].clamp = clamp;
        }

        if self.history.len() == self.config.speed_window {
            self.history.pop_front();
        }
        self.history.push_back(frame.speed_sample());
        frame.speed = estimate_body_speed(self.history.make_contiguous()).unwrap_or(0.0);
        frame
    }

    /// Runs `ticks` ticks, collecting frames.
    pub fn run(&mut self, ticks: usize) -> Result<Vec<TelemetryFrame>> {
        (0..ticks).map(|_| self.tick()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runtime() -> GaitRuntime {
        GaitRuntime::new(RuntimeConfig::default()).unwrap()
    }

    #[test]
    fn default_config_validates_and_has_ten_substeps() {
        let cfg = RuntimeConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.substeps().unwrap(), 10);
    }

    #[test]
    fn non_dividing_dt_is_rejected() {
        let cfg = RuntimeConfig {
            internal_dt: 0.003,
            ..RuntimeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_gait_leaves_state_unchanged() {
        let mut rt = runtime();
        rt.run(5).unwrap();
        let before = rt.clone();
        assert!(matches!(rt.set_gait("moonwalk"), Err(Error::Command(_))));
        assert_eq!(rt.gait(), before.gait());
        assert_eq!(rt.cpg, before.cpg);
        assert_eq!(rt.blend, before.blend);
    }

    #[test]
    fn same_gait_is_a_no_op() {
        let mut rt = runtime();
        assert_eq!(rt.set_gait("trot").unwrap(), Ack::Unchanged);
        assert_eq!(rt.blend.progress, 1.0);
    }

    #[test]
    fn frequency_cap() {
        let mut rt = runtime();
        assert!(rt.set_frequency(5.0).is_err());
        assert!(rt.set_frequency(-0.1).is_err());
        assert!(rt.set_frequency(f64::NAN).is_err());
        assert_eq!(rt.set_frequency(3.0).unwrap(), Ack::Applied);
    }

    #[test]
    fn frequency_command_settles_within_one_percent() {
        let mut rt = runtime();
        rt.set_frequency(1.5).unwrap();
        let frames = rt.run(25).unwrap();
        let omega = frames.last().unwrap().omega;
        let target = 3.0 * std::f64::consts::PI;
        assert!((omega - target).abs() < 0.01 * target, "{omega}");
    }

    #[test]
    fn stationary_frames_are_identical() {
        let cfg = RuntimeConfig {
            initial_frequency_hz: Some(0.0),
            ..RuntimeConfig::default()
        };
        let mut rt = GaitRuntime::new(cfg).unwrap();
        let frames = rt.run(20).unwrap();
        for pair in frames[5..].windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert_eq!(a.phases, b.phases);
            assert_eq!(a.filtered, b.filtered);
            assert_eq!(a.motors, b.motors);
            assert_eq!(a.pwm, b.pwm);
        }
    }

    #[test]
    fn inject_delta_applies_for_one_tick() {
        let cfg = RuntimeConfig {
            initial_frequency_hz: Some(0.0),
            ..RuntimeConfig::default()
        };
        let mut base = GaitRuntime::new(cfg).unwrap();
        let mut pushed = base.clone();
        pushed.inject_delta(2, 0.05, 0.0).unwrap();
        let a = base.tick().unwrap();
        let b = pushed.tick().unwrap();
        assert!(b.filtered[1][0] > a.filtered[1][0]);
        assert_eq!(pushed.state.delta_input, [Vec2::zero(); LEGS]);
        assert!(pushed.inject_delta(0, 0.0, 0.0).is_err());
        assert!(pushed.inject_delta(5, 0.0, 0.0).is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = RuntimeConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RuntimeConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = RuntimeConfig::from_toml_str("command_rate_hz = 50.0\n[cpg]\nalpha_offset = 4.0\n").unwrap();
        assert_eq!(partial.cpg.alpha_offset, 4.0);
        assert_eq!(partial.cpg.alpha_endpoint, 25.0);
        assert!(RuntimeConfig::from_toml_str("bogus = 1\n").is_err());
    }
}
