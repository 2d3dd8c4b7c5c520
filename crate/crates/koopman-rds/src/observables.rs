//! Observable dictionaries evaluated on states and along trajectories.
//!
//! Complex observables are first class; real dictionaries embed with zero
//! imaginary part. Evaluation is pure, and the output length of a set is
//! fixed by its parameters.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::integrators::Trajectory;

/// A fixed dictionary of scalar observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSet {
    /// Identity on coordinates.
    FullState { dim: usize },
    /// 1-d monomials `x, x^2, ..., x^max_degree` (no constant).
    Monomials { max_degree: usize },
    /// Circle dictionary `cos(2 pi j x)` for `j = 1..n1`, then
    /// `sin(2 pi j x)` for `j = 1..n1`, in that order.
    FourierCircle { n1: usize },
    /// Eigenfunctions of the pitchfork drift `mu x - x^3` (for `mu < 0`):
    /// `(x / sqrt(x^2 + |mu|))^n` for `n = 0..count-1`, constant included.
    PitchforkEigenfunctions { mu: f64, count: usize },
    /// Scalar sum of phase modes on the Stuart-Landau attractor:
    /// `sum_{k=1..k_max} e^{ik(theta - beta log(r/r_ref))} + e^{-ik(...)}`.
    /// The reference radius `r_ref` only shifts each mode by a constant
    /// phase (any `log(r/c)` solves the radial equation), so it does not
    /// affect recovered eigenvalues; `sqrt(delta)` — the limit-cycle radius,
    /// where the phase factor reduces to `e^{ik theta}` — is the default
    /// used by the experiments, and plain `delta` matches the other printed
    /// convention.
    StuartLandauModes { k_max: usize, beta: f64, r_ref: f64 },
    /// Scalar `sum_{k=1..k_max} e^{ik theta} + e^{-ik theta}` (deterministic
    /// Stuart-Landau dictionary).
    StuartLandauPhase { k_max: usize },
    /// Scalar `x1 + x2 + sqrt(x1^2 + x2^2)` (Van der Pol observable).
    SumWithNorm,
    /// Scalar `x1 + x2` (Lotka-Volterra observable).
    Sum,
}

impl ObservableSet {
    /// Output dimension `n`.
    pub fn len(&self) -> usize {
        match *self {
            ObservableSet::FullState { dim } => dim,
            ObservableSet::Monomials { max_degree } => max_degree,
            ObservableSet::FourierCircle { n1 } => 2 * n1,
            ObservableSet::PitchforkEigenfunctions { count, .. } => count,
            ObservableSet::StuartLandauModes { .. }
            | ObservableSet::StuartLandauPhase { .. }
            | ObservableSet::SumWithNorm
            | ObservableSet::Sum => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// State dimension the set expects.
    pub fn expected_dim(&self) -> usize {
        match *self {
            ObservableSet::FullState { dim } => dim,
            ObservableSet::Monomials { .. }
            | ObservableSet::FourierCircle { .. }
            | ObservableSet::PitchforkEigenfunctions { .. } => 1,
            _ => 2,
        }
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [Complex64]) -> Result<()> {
        if x.len() != self.expected_dim() {
            return Err(Error::invalid(format!(
                "observable set expects dim {}, got {}",
                self.expected_dim(),
                x.len()
            )));
        }
        match *self {
            ObservableSet::FullState { dim } => {
                for i in 0..dim {
                    out[i] = Complex64::new(x[i], 0.0);
                }
            }
            ObservableSet::Monomials { max_degree } => {
                let mut p = 1.0;
                for (j, slot) in out.iter_mut().enumerate().take(max_degree) {
                    p *= x[0];
                    *slot = Complex64::new(p, 0.0);
                    let _ = j;
                }
            }
            ObservableSet::FourierCircle { n1 } => {
                for j in 1..=n1 {
                    let (s, c) = (TAU * j as f64 * x[0]).sin_cos();
                    out[j - 1] = Complex64::new(c, 0.0);
                    out[n1 + j - 1] = Complex64::new(s, 0.0);
                }
            }
            ObservableSet::PitchforkEigenfunctions { mu, count } => {
                let base = x[0] / (x[0] * x[0] + mu.abs()).sqrt();
                let mut p = 1.0;
                for slot in out.iter_mut().take(count) {
                    *slot = Complex64::new(p, 0.0);
                    p *= base;
                }
            }
            ObservableSet::StuartLandauModes { k_max, beta, r_ref } => {
                let (r, theta) = (x[0], x[1]);
                let phase = theta - beta * (r / r_ref).ln();
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 1..=k_max {
                    let kp = k as f64 * phase;
                    acc += Complex64::from_polar(1.0, kp) + Complex64::from_polar(1.0, -kp);
                }
                out[0] = acc;
            }
            ObservableSet::StuartLandauPhase { k_max } => {
                let theta = x[1];
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 1..=k_max {
                    let kp = k as f64 * theta;
                    acc += Complex64::from_polar(1.0, kp) + Complex64::from_polar(1.0, -kp);
                }
                out[0] = acc;
            }
            ObservableSet::SumWithNorm => {
                out[0] =
                    Complex64::new(x[0] + x[1] + (x[0] * x[0] + x[1] * x[1]).sqrt(), 0.0);
            }
            ObservableSet::Sum => {
                out[0] = Complex64::new(x[0] + x[1], 0.0);
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.evaluate_into(x, &mut out)?;
        Ok(out)
    }

    /// Column `k` holds the observable vector at trajectory point `k`.
    pub fn evaluate_along(&self, traj: &Trajectory) -> Result<Array2<Complex64>> {
        let n = self.len();
        let mut out = Array2::default((n, traj.len()));
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..traj.len() {
            self.evaluate_into(traj.state(k).as_slice().unwrap(), &mut buf)?;
            for i in 0..n {
                out[(i, k)] = buf[i];
            }
        }
        Ok(out)
    }
}
