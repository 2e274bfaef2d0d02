//! Least-squares fitting of sampled foot paths onto the motion-primitive basis.
//!
//! Shipped gait weights come from [`StanceSwingPath`] references run through
//! [`fit_weights_periodic`]; `examples/fit_default_gaits.rs` regenerates the
//! committed library file.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::trajectory::{basis_at, BASIS_LEN};
use crate::{Error, Result};

/// One sampled point of a foot path: phase (rad, in `[0, 2pi)`) and position (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSample<T> {
    pub phi: T,
    pub x: T,
    pub y: T,
}

/// Fitted weight rows for one leg and the largest absolute sample residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegFit<T> {
    pub weights_x: [T; BASIS_LEN],
    pub weights_y: [T; BASIS_LEN],
    pub max_residual: T,
}

/// Solves `min |A w - b|` by Householder QR. Returns an error if `A` is
/// numerically rank deficient.
pub fn least_squares<T: Real, const N: usize>(rows: &[[T; N]], rhs: &[T]) -> Result<[T; N]> {
    let m = rows.len();
    if rhs.len() != m {
        return Err(Error::Fit("row and right-hand side counts differ".into()));
    }
    if m < N {
        return Err(Error::Fit(format!(
            "underdetermined: {m} samples for {N} unknowns"
        )));
    }
    let mut a: Vec<[T; N]> = rows.to_vec();
    let mut b: Vec<T> = rhs.to_vec();
    let mut diag = [T::zero(); N];

    for k in 0..N {
        let norm = (k..m)
            .fold(T::zero(), |acc, i| acc + a[i][k] * a[i][k])
            .sqrt();
        if norm == T::zero() {
            return Err(Error::Fit(format!("rank deficient at column {k}")));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        // v = a[k.., k] - alpha e_1, stored in place.
        a[k][k] = a[k][k] - alpha;
        let vnorm2 = (k..m).fold(T::zero(), |acc, i| acc + a[i][k] * a[i][k]);
        if vnorm2 > T::zero() {
            for col in (k + 1)..N {
                let dot = (k..m).fold(T::zero(), |acc, i| acc + a[i][k] * a[i][col]);
                let scale = T::lit(2.0) * dot / vnorm2;
                for i in k..m {
                    let vi = a[i][k];
                    a[i][col] = a[i][col] - scale * vi;
                }
            }
            let dot = (k..m).fold(T::zero(), |acc, i| acc + a[i][k] * b[i]);
            let scale = T::lit(2.0) * dot / vnorm2;
            for i in k..m {
                b[i] = b[i] - scale * a[i][k];
            }
        }
        diag[k] = alpha;
    }

    let largest = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = largest * T::epsilon().powf(T::lit(0.75)) * T::lit(m as f64);
    if let Some(k) = diag.iter().position(|d| d.abs() <= tol) {
        return Err(Error::Fit(format!("rank deficient at column {k}")));
    }

    let mut w = [T::zero(); N];
    for k in (0..N).rev() {
        let mut acc = b[k];
        for col in (k + 1)..N {
            acc = acc - a[k][col] * w[col];
        }
        w[k] = acc / diag[k];
    }
    Ok(w)
}

fn normalized<T: Real>(samples: &[FitSample<T>]) -> Result<Vec<T>> {
    samples
        .iter()
        .map(|s| {
            if !(s.phi.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::Fit("non-finite sample".into()));
            }
            if s.phi < T::zero() || s.phi >= T::two_pi() {
                return Err(Error::Fit("sample phase outside [0, 2pi)".into()));
            }
            Ok(s.phi / T::two_pi())
        })
        .collect()
}

fn residual<T: Real>(samples: &[FitSample<T>], us: &[T], wx: &[T; 6], wy: &[T; 6]) -> T {
    samples.iter().zip(us).fold(T::zero(), |acc, (s, &u)| {
        let f = basis_at(u);
        acc.max((f.dot(wx) - s.x).abs()).max((f.dot(wy) - s.y).abs())
    })
}

/// Unconstrained least-squares fit of one leg's samples onto the basis.
pub fn fit_weights<T: Real>(samples: &[FitSample<T>]) -> Result<LegFit<T>> {
    if samples.len() < BASIS_LEN {
        return Err(Error::Fit(format!(
            "need at least {BASIS_LEN} samples, got {}",
            samples.len()
        )));
    }
    let us = normalized(samples)?;
    let rows: Vec<[T; BASIS_LEN]> = us.iter().map(|&u| basis_at(u).0).collect();
    let xs: Vec<T> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<T> = samples.iter().map(|s| s.y).collect();
    let wx = least_squares(&rows, &xs)?;
    let wy = least_squares(&rows, &ys)?;
    Ok(LegFit {
        weights_x: wx,
        weights_y: wy,
        max_residual: residual(samples, &us, &wx, &wy),
    })
}

/// Columns spanning the weights whose polynomial has equal value and equal
/// slope at `u = 0` and `u = 1` (free parameters `w0, w3, w4, w5`).
fn periodic_nullspace<T: Real>() -> [[T; BASIS_LEN]; 4] {
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.5, -1.5, 1.0, 0.0, 0.0],
        [0.0, 1.0, -2.0, 0.0, 1.0, 0.0],
        [0.0, 1.5, -2.5, 0.0, 0.0, 1.0],
    ]
    .map(|col| col.map(T::lit))
}

/// Least-squares fit restricted to trajectories that close with matching
/// position and slope across the phase wrap.
pub fn fit_weights_periodic<T: Real>(samples: &[FitSample<T>]) -> Result<LegFit<T>> {
    if samples.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 samples for a periodic fit, got {}",
            samples.len()
        )));
    }
    let us = normalized(samples)?;
    let cols = periodic_nullspace::<T>();
    let rows: Vec<[T; 4]> = us
        .iter()
        .map(|&u| {
            let f = basis_at(u);
            std::array::from_fn(|c| f.dot(&cols[c]))
        })
        .collect();
    let expand = |z: [T; 4]| -> [T; BASIS_LEN] {
        std::array::from_fn(|j| (0..4).fold(T::zero(), |acc, c| acc + cols[c][j] * z[c]))
    };
    let xs: Vec<T> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<T> = samples.iter().map(|s| s.y).collect();
    let wx = expand(least_squares(&rows, &xs)?);
    let wy = expand(least_squares(&rows, &ys)?);
    Ok(LegFit {
        weights_x: wx,
        weights_y: wy,
        max_residual: residual(samples, &us, &wx, &wy),
    })
}

/// Reference foot path: a straight stance stroke at constant height followed
/// by a semi-elliptic swing back to the start.
///
/// Phase 0 is the start of stance (foot forward, `x = +stride/2`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceSwingPath {
    /// Fore-aft sweep of the foot, m.
    pub stride: f64,
    /// Swing apex above the stance line, m.
    pub clearance: f64,
    /// Hip-to-foot height during stance, m.
    pub height: f64,
    /// Fraction of the cycle spent in stance.
    pub duty: f64,
}

impl StanceSwingPath {
    /// Point at normalized phase `u` in `[0, 1)`.
    pub fn point(&self, u: f64) -> (f64, f64) {
        let half = self.stride / 2.0;
        if u < self.duty {
            (half - self.stride * u / self.duty, self.height)
        } else {
            let v = (u - self.duty) / (1.0 - self.duty);
            let angle = std::f64::consts::PI * v;
            (-half * angle.cos(), self.height - self.clearance * angle.sin())
        }
    }

    /// Root-mean-square distance between a fitted trajectory and this path
    /// over `grid` evenly spaced phases.
    pub fn rms_error(&self, fit: &LegFit<f64>, grid: usize) -> f64 {
        let sum: f64 = (0..grid)
            .map(|k| {
                let u = k as f64 / grid as f64;
                let (x, y) = self.point(u);
                let f = basis_at(u);
                (f.dot(&fit.weights_x) - x).powi(2) + (f.dot(&fit.weights_y) - y).powi(2)
            })
            .sum();
        (sum / grid as f64).sqrt()
    }

    /// `count` samples at evenly spaced phases.
    pub fn samples(&self, count: usize) -> Vec<FitSample<f64>> {
        (0..count)
            .map(|k| {
                let u = k as f64 / count as f64;
                let (x, y) = self.point(u);
                FitSample {
                    phi: std::f64::consts::TAU * u,
                    x,
                    y,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn samples_from(wx: [f64; 6], wy: [f64; 6], n: usize) -> Vec<FitSample<f64>> {
        (0..n)
            .map(|k| {
                let phi = TAU * k as f64 / n as f64;
                let f = basis_at(phi / TAU);
                FitSample {
                    phi,
                    x: f.dot(&wx),
                    y: f.dot(&wy),
                }
            })
            .collect()
    }

    #[test]
    fn recovers_in_span_weights() {
        let wx = [0.05, -0.3, 0.8, -1.1, 0.9, -0.2];
        let wy = [0.22, 0.01, -0.4, 0.7, -0.5, 0.17];
        let fit = fit_weights(&samples_from(wx, wy, 64)).unwrap();
        assert!(fit.max_residual < 1e-10);
        for j in 0..6 {
            assert!((fit.weights_x[j] - wx[j]).abs() < 1e-8);
            assert!((fit.weights_y[j] - wy[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_interpolation_with_six_samples() {
        let wx = [0.01, 0.02, 0.03, -0.04, 0.05, -0.06];
        let fit = fit_weights(&samples_from(wx, wx, 6)).unwrap();
        assert!(fit.max_residual < 1e-10);
    }

    #[test]
    fn underdetermined_and_rank_deficient_are_errors() {
        let s = samples_from([0.0; 6], [0.0; 6], 3);
        assert!(matches!(fit_weights(&s), Err(Error::Fit(_))));
        let mut dup = samples_from([0.0; 6], [0.0; 6], 5);
        dup.push(dup[0]);
        assert!(matches!(fit_weights(&dup), Err(Error::Fit(_))));
    }

    #[test]
    fn least_squares_matches_normal_equations_on_line() {
        let rows = [[1.0f64, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let b = [2.1, 4.9, 8.1, 10.9];
        let w = least_squares(&rows, &b).unwrap();
        // Normal equations: [[4, 6], [6, 14]] w = [sum b, sum x b]
        let sb: f64 = b.iter().sum();
        let sxb: f64 = rows.iter().zip(&b).map(|(r, v)| r[1] * v).sum();
        let det = 4.0 * 14.0 - 36.0;
        let w0 = (14.0 * sb - 6.0 * sxb) / det;
        let w1 = (4.0 * sxb - 6.0 * sb) / det;
        assert!((w[0] - w0).abs() < 1e-12 && (w[1] - w1).abs() < 1e-12);
    }

    #[test]
    fn periodic_fit_closes_the_loop() {
        let path = StanceSwingPath {
            stride: 0.1,
            clearance: 0.04,
            height: 0.22,
            duty: 0.5,
        };
        let fit = fit_weights_periodic(&path.samples(64)).unwrap();
        let start = basis_at(0.0).dot(&fit.weights_x);
        let end = basis_at(1.0).dot(&fit.weights_x);
        assert!((start - end).abs() < 1e-12);
        let slope = |w: &[f64; 6], u: f64| (1..6).map(|j| j as f64 * w[j] * u.powi(j as i32 - 1)).sum::<f64>();
        assert!((slope(&fit.weights_y, 0.0) - slope(&fit.weights_y, 1.0)).abs() < 1e-10);
        assert!(fit.max_residual < 0.02, "{}", fit.max_residual);
    }

    #[test]
    fn periodic_fit_recovers_periodic_in_span_data() {
        let cols = periodic_nullspace::<f64>();
        let z = [0.2, 0.3, -0.1, 0.05];
        let w: [f64; 6] = std::array::from_fn(|j| (0..4).map(|c| cols[c][j] * z[c]).sum());
        let fit = fit_weights_periodic(&samples_from(w, w, 32)).unwrap();
        assert!(fit.max_residual < 1e-10);
    }

    #[test]
    fn path_error_does_not_increase_with_sample_count() {
        for duty in [0.5, 0.75] {
            let path = StanceSwingPath {
                stride: 0.1,
                clearance: 0.04,
                height: 0.22,
                duty,
            };
            let mut last = f64::INFINITY;
            for n in [8, 12, 16, 24, 32, 48, 64, 96, 128, 256] {
                let fit = fit_weights(&path.samples(n)).unwrap();
                let err = path.rms_error(&fit, 4096);
                assert!(err <= last + 1e-12, "duty {duty}: n={n} error {err} > {last}");
                last = err;
            }
        }
    }
}
