//! Coupled phase-oscillator network with its first-order filters.
//!
//! Four oscillators (one per leg) share a filtered frequency `omega` and are
//! pulled toward a configured offset pattern by sinusoidal coupling. Each leg's
//! foot endpoint is driven by a tracking filter whose feed-forward term is the
//! phase rate times the derivative of the desired trajectory, so periodic
//! targets pass through while high-frequency content is attenuated.
//!
//! Integration scheme per internal step:
//! - frequency, offsets: exact exponential update (unconditionally stable)
//! - phases: classical RK4, then wrap to `[0, 2pi)`
//! - endpoints: explicit Euler
//!
//! All functions are pure; state is passed by value.

use serde::{Deserialize, Serialize};

use crate::scalar::{ensure_finite, Real, Vec2};
use crate::{Error, Result};

pub const LEGS: usize = 4;

/// Coupling gains `K[i][j]` (stored as magnitudes) and the global sign applied
/// to the sinusoidal coupling term.
///
/// With `sign = -1` the locked pattern is `phi_i + offset_i` equal across legs;
/// with `sign = +1` that pattern is an unstable equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling<T> {
    pub gains: [[T; LEGS]; LEGS],
    pub sign: T,
}

impl<T: Real> Coupling<T> {
    pub const DEFAULT_SIGN: f64 = -1.0;

    pub fn all_to_all(gain: T) -> Self {
        let mut gains = [[gain; LEGS]; LEGS];
        for (i, row) in gains.iter_mut().enumerate() {
            row[i] = T::zero();
        }
        Self {
            gains,
            sign: T::lit(Self::DEFAULT_SIGN),
        }
    }

    pub fn none() -> Self {
        Self {
            gains: [[T::zero(); LEGS]; LEGS],
            sign: T::lit(Self::DEFAULT_SIGN),
        }
    }

    pub fn with_sign(mut self, sign: T) -> Self {
        self.sign = sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.gains.iter().enumerate() {
            ensure_finite("coupling gain", row)?;
            if row.iter().any(|k| *k < T::zero()) {
                return Err(Error::Config("coupling gains must be >= 0".into()));
            }
            if row[i] != T::zero() {
                return Err(Error::Config("coupling diagonal must be zero".into()));
            }
        }
        if !(self.sign == T::one() || self.sign == -T::one()) {
            return Err(Error::Config("coupling sign must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Oscillator network parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpgConfig<T> {
    /// Target angular frequency, rad/s.
    pub omega_target: T,
    /// Frequency filter gain, 1/s.
    pub alpha_omega: T,
    pub coupling: Coupling<T>,
    /// Target phase offsets, rad, each in `[0, 2pi)`.
    pub phase_offsets: [T; LEGS],
    /// Endpoint tracking filter gain, 1/s.
    pub alpha_endpoint: T,
    /// Offset transition gain, 1/s.
    pub alpha_offset: T,
}

impl<T: Real> CpgConfig<T> {
    pub fn new(omega_target: T, phase_offsets: [T; LEGS]) -> Self {
        Self {
            omega_target,
            alpha_omega: T::lit(10.0),
            coupling: Coupling::all_to_all(T::lit(1.0)),
            phase_offsets,
            alpha_endpoint: T::lit(25.0),
            alpha_offset: T::lit(5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "cpg gains",
            &[
                self.omega_target,
                self.alpha_omega,
                self.alpha_endpoint,
                self.alpha_offset,
            ],
        )?;
        if self.alpha_omega < T::zero() || self.alpha_endpoint < T::zero() || self.alpha_offset < T::zero() {
            return Err(Error::Config("filter gains must be >= 0".into()));
        }
        self.coupling.validate()?;
        ensure_finite("phase offsets", &self.phase_offsets)?;
        if self
            .phase_offsets
            .iter()
            .any(|p| *p < T::zero() || *p >= T::two_pi())
        {
            return Err(Error::Config("phase offsets must lie in [0, 2pi)".into()));
        }
        Ok(())
    }
}

/// Difference `phi_i - phi_j` (wrapped to `[0, 2pi)`) that the network locks
/// to for the given offsets when the default coupling sign is used.
pub fn locked_difference<T: Real>(offsets: &[T; LEGS], i: usize, j: usize) -> T {
    wrap_unchecked(offsets[j] - offsets[i])
}

/// Phases of a network already locked to `offsets`, with leg 1 at `leg1_phase`.
pub fn locked_phases<T: Real>(offsets: &[T; LEGS], leg1_phase: T) -> [T; LEGS] {
    std::array::from_fn(|i| wrap_unchecked(leg1_phase + offsets[0] - offsets[i]))
}

/// Evolving network state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpgState<T> {
    pub omega: T,
    pub phases: [T; LEGS],
    /// Filtered foot endpoints, m.
    pub endpoints: [Vec2<T>; LEGS],
    /// Offsets currently applied by the coupling (filtered toward the target).
    pub current_offsets: [T; LEGS],
    /// Event input added to the endpoint velocity, m/s.
    pub delta_input: [Vec2<T>; LEGS],
}

/// Desired endpoint and its phase derivative for one leg.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndpointTarget<T> {
    pub position: Vec2<T>,
    pub phase_derivative: Vec2<T>,
}

impl<T: Real> CpgState<T> {
    pub fn is_finite(&self) -> bool {
        self.omega.is_finite()
            && self.phases.iter().all(|p| p.is_finite())
            && self.endpoints.iter().all(|e| e.is_finite())
            && self.current_offsets.iter().all(|p| p.is_finite())
    }

    /// Advances every filter and the phase dynamics by one internal step.
    ///
    /// `target(leg, phase)` supplies the desired endpoint at a phase. All
    /// right-hand sides are evaluated at the state at the start of the step.
    pub fn advance<F>(&self, config: &CpgConfig<T>, dt: T, mut target: F) -> Result<Self>
    where
        F: FnMut(usize, T) -> EndpointTarget<T>,
    {
        let rates = phase_rates(
            &self.phases,
            self.omega,
            &config.coupling,
            &self.current_offsets,
        );
        let mut endpoints = self.endpoints;
        for (leg, endpoint) in endpoints.iter_mut().enumerate() {
            let desired = target(leg, self.phases[leg]);
            *endpoint = step_endpoint_filter(
                *endpoint,
                desired.position,
                desired.phase_derivative,
                rates[leg],
                config.alpha_endpoint,
                self.delta_input[leg],
                dt,
            )?;
        }
        let phases = step_phases(
            &self.phases,
            self.omega,
            &config.coupling,
            &self.current_offsets,
            dt,
        )?;
        let omega = step_frequency(self.omega, config.omega_target, config.alpha_omega, dt)?;
        let current_offsets = step_offset_filter(
            &self.current_offsets,
            &config.phase_offsets,
            config.alpha_offset,
            dt,
        )?;
        Ok(Self {
            omega,
            phases,
            endpoints,
            current_offsets,
            delta_input: self.delta_input,
        })
    }
}

fn check_dt<T: Real>(dt: T) -> Result<()> {
    if dt.is_finite() && dt > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidInput("dt must be finite and > 0"))
    }
}

/// One step of `omega' = alpha (omega_target - omega)` using the exact
/// exponential solution over `dt`.
pub fn step_frequency<T: Real>(omega: T, omega_target: T, alpha: T, dt: T) -> Result<T> {
    ensure_finite("frequency filter", &[omega, omega_target, alpha])?;
    check_dt(dt)?;
    if alpha < T::zero() {
        return Err(Error::InvalidInput("alpha_omega must be >= 0"));
    }
    Ok(first_order_step(omega, omega_target, alpha, dt))
}

#[inline]
pub(crate) fn first_order_step<T: Real>(value: T, target: T, gain: T, dt: T) -> T {
    value + (target - value) * (-(-gain * dt).exp_m1())
}

#[inline]
pub(crate) fn wrap_unchecked<T: Real>(phi: T) -> T {
    let tau = T::two_pi();
    let mut r = phi % tau;
    if r < T::zero() {
        r = r + tau;
    }
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Wraps a phase to `[0, 2pi)`.
pub fn wrap_phase<T: Real>(phi: T) -> Result<T> {
    ensure_finite("phase", &[phi])?;
    Ok(wrap_unchecked(phi))
}

/// Wraps an angle difference to `(-pi, pi]`.
pub fn wrap_signed<T: Real>(angle: T) -> T {
    let r = wrap_unchecked(angle);
    if r > T::PI() {
        r - T::two_pi()
    } else {
        r
    }
}

/// Instantaneous phase rates `omega + sign * sum_j K_ij sin(phi_i - phi_j + off_i - off_j)`.
pub fn phase_rates<T: Real>(
    phases: &[T; LEGS],
    omega: T,
    coupling: &Coupling<T>,
    offsets: &[T; LEGS],
) -> [T; LEGS] {
    std::array::from_fn(|i| {
        let mut sum = T::zero();
        for j in 0..LEGS {
            let k = coupling.gains[i][j];
            if k != T::zero() {
                sum += k * (phases[i] - phases[j] + offsets[i] - offsets[j]).sin();
            }
        }
        omega + coupling.sign * sum
    })
}

/// One RK4 step of the coupled phase dynamics, wrapped to `[0, 2pi)`.
pub fn step_phases<T: Real>(
    phases: &[T; LEGS],
    omega: T,
    coupling: &Coupling<T>,
    offsets: &[T; LEGS],
    dt: T,
) -> Result<[T; LEGS]> {
    ensure_finite("phases", phases)?;
    ensure_finite("offsets", offsets)?;
    ensure_finite("omega", &[omega])?;
    check_dt(dt)?;

    let half = dt / T::lit(2.0);
    let shifted = |base: &[T; LEGS], k: &[T; LEGS], h: T| -> [T; LEGS] {
        std::array::from_fn(|i| base[i] + h * k[i])
    };
    let k1 = phase_rates(phases, omega, coupling, offsets);
    let k2 = phase_rates(&shifted(phases, &k1, half), omega, coupling, offsets);
    let k3 = phase_rates(&shifted(phases, &k2, half), omega, coupling, offsets);
    let k4 = phase_rates(&shifted(phases, &k3, dt), omega, coupling, offsets);
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    Ok(std::array::from_fn(|i| {
        wrap_unchecked(phases[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
    }))
}

/// One explicit step of `X' = phase_rate * X'_d + alpha (X_d - X) + delta`.
pub fn step_endpoint_filter<T: Real>(
    endpoint: Vec2<T>,
    desired: Vec2<T>,
    desired_phase_derivative: Vec2<T>,
    phase_rate: T,
    alpha: T,
    delta: Vec2<T>,
    dt: T,
) -> Result<Vec2<T>> {
    ensure_finite(
        "endpoint filter",
        &[
            endpoint.x,
            endpoint.y,
            desired.x,
            desired.y,
            desired_phase_derivative.x,
            desired_phase_derivative.y,
            phase_rate,
            alpha,
            delta.x,
            delta.y,
        ],
    )?;
    check_dt(dt)?;
    let velocity = desired_phase_derivative * phase_rate + (desired - endpoint) * alpha + delta;
    Ok(endpoint + velocity * dt)
}

/// Moves offsets toward their targets along the shortest angular path using
/// the exact exponential solution, then wraps to `[0, 2pi)`.
pub fn step_offset_filter<T: Real>(
    offsets: &[T; LEGS],
    targets: &[T; LEGS],
    alpha: T,
    dt: T,
) -> Result<[T; LEGS]> {
    ensure_finite("offsets", offsets)?;
    ensure_finite("target offsets", targets)?;
    ensure_finite("alpha_offset", &[alpha])?;
    check_dt(dt)?;
    let fraction = -(-alpha * dt).exp_m1();
    Ok(std::array::from_fn(|i| {
        let error = wrap_signed(targets[i] - offsets[i]);
        wrap_unchecked(offsets[i] + error * fraction)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn circ(a: f64, b: f64) -> f64 {
        wrap_signed(a - b).abs()
    }

    #[test]
    fn frequency_fixed_point_and_zero_gain() {
        assert_eq!(step_frequency(6.28, 6.28, 10.0, 0.002).unwrap(), 6.28);
        assert_eq!(step_frequency(3.0, 7.0, 0.0, 0.01).unwrap(), 3.0);
    }

    #[test]
    fn frequency_matches_closed_form() {
        let mut w = 0.0;
        for _ in 0..50 {
            w = step_frequency(w, TAU, 10.0, 0.002).unwrap();
        }
        let expected = TAU * (1.0 - (-1.0f64).exp());
        assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        assert!((w - 3.972).abs() < 1e-3);
    }

    #[test]
    fn frequency_rejects_non_finite() {
        assert!(step_frequency(f64::NAN, 1.0, 1.0, 0.01).is_err());
        assert!(step_frequency(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_phase(TAU).unwrap(), 0.0);
        assert!((wrap_phase(-PI / 2.0).unwrap() - 1.5 * PI).abs() < 1e-12);
        assert!((wrap_phase(7.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(wrap_phase(-1e-18).unwrap(), 0.0);
        assert!(wrap_phase(f64::INFINITY).is_err());
    }

    #[test]
    fn uncoupled_phases_advance_by_omega_dt() {
        let out = step_phases(&[0.0; 4], TAU, &Coupling::none(), &[0.0; 4], 0.01).unwrap();
        for p in out {
            assert!((p - 0.0628318530717958).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_phases_zero_offsets_advance_uniformly() {
        let phases = [1.3f64; 4];
        let out = step_phases(&phases, 2.0, &Coupling::all_to_all(4.0), &[0.0; 4], 0.01).unwrap();
        for p in out {
            assert!((p - 1.32).abs() < 1e-12);
        }
    }

    #[test]
    fn two_oscillators_lock_to_antiphase() {
        // Oracle: psi' = -2K sin(psi + d) has a stable equilibrium at psi = -d.
        let mut coupling = Coupling::<f64>::none();
        coupling.gains[0][1] = 4.0;
        coupling.gains[1][0] = 4.0;
        let offsets = [0.0, PI, 0.0, 0.0];
        let mut phases = [0.3, 5.1, 0.0, 0.0];
        for _ in 0..5000 {
            phases = step_phases(&phases, TAU, &coupling, &offsets, 0.002).unwrap();
        }
        assert!(circ(phases[0] - phases[1], PI) < 1e-3);
    }

    #[test]
    fn endpoint_filter_examples() {
        let x = Vec2::new(0.01f64, 0.2);
        let same = step_endpoint_filter(x, x, Vec2::zero(), 6.0, 25.0, Vec2::zero(), 0.002).unwrap();
        assert_eq!(same, x);
        let shifted = step_endpoint_filter(
            Vec2::<f64>::zero(),
            Vec2::zero(),
            Vec2::zero(),
            6.0,
            0.0,
            Vec2::new(0.1, 0.0),
            0.01,
        )
        .unwrap();
        assert!((shifted.x - 0.001).abs() < 1e-15);
        assert_eq!(shifted.y, 0.0);
    }

    #[test]
    fn offset_filter_takes_shortest_path() {
        let out = step_offset_filter(&[0.1; 4], &[TAU - 0.1; 4], 5.0, 0.002).unwrap();
        assert!(out[0] < 0.1, "moved the long way: {}", out[0]);
        let fixed = step_offset_filter(&[1.0; 4], &[1.0; 4], 5.0, 0.002).unwrap();
        assert_eq!(fixed, [1.0; 4]);
    }

    #[test]
    fn offset_filter_settles_within_one_and_a_half_seconds() {
        let mut off = [0.0; 4];
        for _ in 0..750 {
            off = step_offset_filter(&off, &[PI; 4], 5.0, 0.002).unwrap();
        }
        assert!((off[0] - PI).abs() < 0.01);
        assert!(((-7.5f64).exp() * PI) < 0.01);
    }

    #[test]
    fn positive_sign_does_not_lock_trot() {
        let offsets = [0.0, PI, PI, 0.0];
        let coupling = Coupling::all_to_all(4.0).with_sign(1.0);
        let mut phases = locked_phases(&offsets, 0.0);
        phases[1] += 0.01;
        for _ in 0..5000 {
            phases = step_phases(&phases, TAU, &coupling, &offsets, 0.002).unwrap();
        }
        let err = circ(phases[0] - phases[1], locked_difference(&offsets, 0, 1));
        assert!(err > 0.1, "sign +1 unexpectedly locked: {err}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = CpgConfig::new(TAU, [0.0, PI, PI, 0.0]);
        assert!(cfg.validate().is_ok());
        cfg.coupling.gains[2][2] = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = CpgConfig::new(TAU, [0.0, TAU, 0.0, 0.0]);
        assert!(cfg.validate().is_err());
        cfg.phase_offsets = [0.0; 4];
        cfg.alpha_omega = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_precision_uncoupled_step() {
        let out = step_phases(&[0.0f32; 4], std::f32::consts::TAU, &Coupling::none(), &[0.0; 4], 0.01).unwrap();
        assert!((out[0] - 0.0628318).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn wrap_range_and_periodicity(phi in -1e4f64..1e4) {
            let w = wrap_phase(phi).unwrap();
            prop_assert!((0.0..TAU).contains(&w));
            let shifted = wrap_phase(phi + TAU).unwrap();
            prop_assert!(circ(w, shifted) <= 1e-12 * (1.0 + phi.abs()));
        }

        #[test]
        fn frequency_step_is_strictly_between(w in -20.0f64..20.0, target in -20.0f64..20.0, alpha in 0.1f64..50.0) {
            prop_assume!((w - target).abs() > 1e-6);
            let next = step_frequency(w, target, alpha, 0.002).unwrap();
            prop_assert!(next > w.min(target) && next < w.max(target));
        }

        #[test]
        fn uncoupled_advance_matches_closed_form(
            p0 in proptest::array::uniform4(0.0f64..TAU),
            omega in 0.0f64..20.0,
            n in 1usize..500,
        ) {
            let dt = 0.002;
            let mut phases = p0;
            for _ in 0..n {
                phases = step_phases(&phases, omega, &Coupling::none(), &[0.0; 4], dt).unwrap();
            }
            for i in 0..4 {
                let expected = wrap_unchecked(p0[i] + n as f64 * omega * dt);
                prop_assert!(circ(phases[i], expected) <= 1e-12, "leg {} off by {}", i, circ(phases[i], expected));
            }
        }

        #[test]
        fn steps_are_deterministic(p0 in proptest::array::uniform4(0.0f64..TAU)) {
            let offsets = [0.0, PI, PI, 0.0];
            let c = Coupling::all_to_all(4.0);
            let a = step_phases(&p0, 9.0, &c, &offsets, 0.002).unwrap();
            let b = step_phases(&p0, 9.0, &c, &offsets, 0.002).unwrap();
            prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }
}
