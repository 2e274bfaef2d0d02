//! Foot trajectories as weighted sums of polynomial motion primitives, plus
//! abduction-free turning by per-leg stride scaling.
//!
//! The basis is the monomials of normalized phase `u = phi / 2pi`:
//! `[1, u, u^2, u^3, u^4, u^5]`.

use serde::{Deserialize, Serialize};

use crate::cpg::{first_order_step, LEGS};
use crate::scalar::{Real, Vec2};
use crate::{Error, Result};

pub const BASIS_LEN: usize = 6;

/// Values of the six motion primitives at one phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisVector<T>(pub [T; BASIS_LEN]);

impl<T: Real> BasisVector<T> {
    pub fn dot(&self, weights: &[T; BASIS_LEN]) -> T {
        self.0
            .iter()
            .zip(weights)
            .fold(T::zero(), |acc, (f, w)| acc + *f * *w)
    }
}

fn check_phase<T: Real>(phi: T) -> Result<()> {
    if phi.is_finite() && phi >= T::zero() && phi < T::two_pi() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "phase {:?} outside [0, 2pi); wrap before evaluating",
            phi
        )))
    }
}

/// Basis values at a wrapped phase.
pub fn eval_basis<T: Real>(phi: T) -> Result<BasisVector<T>> {
    check_phase(phi)?;
    Ok(basis_at(phi / T::two_pi()))
}

/// Basis values at normalized phase `u` (not range checked).
pub fn basis_at<T: Real>(u: T) -> BasisVector<T> {
    let mut values = [T::one(); BASIS_LEN];
    for j in 1..BASIS_LEN {
        values[j] = values[j - 1] * u;
    }
    BasisVector(values)
}

/// Derivative of each basis function with respect to the raw phase (per rad).
pub fn eval_basis_derivative<T: Real>(phi: T) -> Result<BasisVector<T>> {
    check_phase(phi)?;
    let u = phi / T::two_pi();
    let powers = basis_at(u).0;
    let mut values = [T::zero(); BASIS_LEN];
    for j in 1..BASIS_LEN {
        values[j] = T::lit(j as f64) * powers[j - 1] / T::two_pi();
    }
    Ok(BasisVector(values))
}

/// Per-leg weight rows for one coordinate.
pub type WeightMatrix<T> = [[T; BASIS_LEN]; LEGS];

/// A named gait: coordination offsets plus per-leg trajectory weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitDefinition<T> {
    pub name: String,
    pub weights_x: WeightMatrix<T>,
    pub weights_y: WeightMatrix<T>,
    /// Target phase offsets, rad.
    pub target_offsets: [T; LEGS],
    /// Nominal angular frequency, rad/s.
    pub nominal_frequency: T,
}

impl<T: Real> GaitDefinition<T> {
    /// Gait with the same weight rows on every leg.
    pub fn uniform(
        name: impl Into<String>,
        wx: [T; BASIS_LEN],
        wy: [T; BASIS_LEN],
        target_offsets: [T; LEGS],
        nominal_frequency: T,
    ) -> Self {
        Self {
            name: name.into(),
            weights_x: [wx; LEGS],
            weights_y: [wy; LEGS],
            target_offsets,
            nominal_frequency,
        }
    }

    pub fn endpoint(&self, leg: usize, phi: T) -> Result<Vec2<T>> {
        eval_endpoint(self, leg, phi)
    }

    pub fn endpoint_derivative(&self, leg: usize, phi: T) -> Result<Vec2<T>> {
        eval_endpoint_derivative(self, leg, phi)
    }

    /// `(1 - s) * self + s * other` on weights only.
    pub fn blend_weights(&self, other: &Self, s: T) -> (WeightMatrix<T>, WeightMatrix<T>) {
        let mix = |a: &WeightMatrix<T>, b: &WeightMatrix<T>| -> WeightMatrix<T> {
            std::array::from_fn(|leg| {
                std::array::from_fn(|j| a[leg][j] + (b[leg][j] - a[leg][j]) * s)
            })
        };
        (
            mix(&self.weights_x, &other.weights_x),
            mix(&self.weights_y, &other.weights_y),
        )
    }
}

fn check_leg(leg: usize) -> Result<()> {
    if leg < LEGS {
        Ok(())
    } else {
        Err(Error::Contract(format!("leg index {leg} out of range 0..{LEGS}")))
    }
}

/// Desired endpoint of `leg` (zero based) at a wrapped phase.
pub fn eval_endpoint<T: Real>(gait: &GaitDefinition<T>, leg: usize, phi: T) -> Result<Vec2<T>> {
    check_leg(leg)?;
    let basis = eval_basis(phi)?;
    Ok(endpoint_from_weights(
        &basis,
        &gait.weights_x[leg],
        &gait.weights_y[leg],
    ))
}

pub fn endpoint_from_weights<T: Real>(
    basis: &BasisVector<T>,
    wx: &[T; BASIS_LEN],
    wy: &[T; BASIS_LEN],
) -> Vec2<T> {
    Vec2::new(basis.dot(wx), basis.dot(wy))
}

/// `dX_d / dphi` of `leg` at a wrapped phase, m/rad.
pub fn eval_endpoint_derivative<T: Real>(
    gait: &GaitDefinition<T>,
    leg: usize,
    phi: T,
) -> Result<Vec2<T>> {
    check_leg(leg)?;
    let basis = eval_basis_derivative(phi)?;
    Ok(endpoint_from_weights(
        &basis,
        &gait.weights_x[leg],
        &gait.weights_y[leg],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Left,
    Right,
    #[default]
    None,
}

impl TurnDirection {
    /// Stride scale vector for the direction, in leg index order.
    pub fn coefficients<T: Real>(self) -> [T; LEGS] {
        let v: [f64; LEGS] = match self {
            TurnDirection::Left => [1.0, 0.0, 0.0, 1.0],
            TurnDirection::Right => [0.0, 1.0, 1.0, 0.0],
            TurnDirection::None => [1.0, 1.0, 1.0, 1.0],
        };
        v.map(T::lit)
    }
}

impl std::str::FromStr for TurnDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "none" => Ok(Self::None),
            other => Err(Error::Command(format!("unknown turn direction '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnState<T> {
    pub coefficients: [T; LEGS],
    pub target: TurnDirection,
}

impl<T: Real> Default for TurnState<T> {
    fn default() -> Self {
        Self {
            coefficients: TurnDirection::None.coefficients(),
            target: TurnDirection::None,
        }
    }
}

/// Scales the forward coordinate of each leg by its turn coefficient.
pub fn apply_turning<T: Real>(x_targets: [T; LEGS], turn: &TurnState<T>) -> [T; LEGS] {
    std::array::from_fn(|i| turn.coefficients[i] * x_targets[i])
}

/// Exponential approach of each coefficient toward the target direction's vector.
pub fn step_turn_filter<T: Real>(turn: &TurnState<T>, dt: T, gain: T) -> TurnState<T> {
    let target = turn.target.coefficients::<T>();
    TurnState {
        coefficients: std::array::from_fn(|i| {
            first_order_step(turn.coefficients[i], target[i], gain, dt)
        }),
        target: turn.target,
    }
}
