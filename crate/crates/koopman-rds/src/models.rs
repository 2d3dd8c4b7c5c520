//! Catalog of the model systems: one-step random maps and drift/diffusion
//! definitions for the continuous systems.
//!
//! States are plain coordinate slices. Conventions per kind:
//!
//! * `NoisyRotation` — circle coordinate stored in `[0, 1)` with
//!   wraparound (the observables are 1-periodic).
//! * `StuartLandau` — polar coordinates `(r, theta)`, integrated in polar
//!   form exactly as written, including the `eps^2/r` Ito correction in
//!   the radial drift; `r > 0` on the attractor.
//! * `LotkaVolterra` — first-quadrant states; multiplicative noise keeps
//!   paths nonnegative at the step sizes used here (asserted in tests,
//!   not clamped).
//!
//! Setting every noise amplitude to zero yields the deterministic
//! counterpart exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::SwitchingSignal;

/// Parameterized description of one catalog system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `T(w, x) = x + theta + w (mod 1)` with `w ~ U[-delta/2, delta/2]`.
    NoisyRotation { theta: f64, delta: f64 },
    /// `x' = A(w) x`, `A(w) = [[0, w], [-w, 0]]`, `P(w = value1) = p1`.
    DiscreteLinear { p1: f64, value1: f64, value2: f64 },
    /// `dx/dt = A(w(t)) x`, `A(w) = [[w, 1], [-b^2, w]]` with `w(t)`
    /// piecewise constant on intervals of length `switch_dt`, taking `a1`
    /// with probability `p1` and `a2` otherwise.
    SwitchingLinearRde { a1: f64, a2: f64, b: f64, p1: f64, switch_dt: f64 },
    /// `dX = mu X dt + sigma dW` (Ornstein-Uhlenbeck for `mu < 0`).
    OuLinearSde { mu: f64, sigma: f64 },
    /// `dX = (mu X - X^3) dt + sigma dW`.
    ScalarPitchforkSde { mu: f64, sigma: f64 },
    /// Polar form: `dr = (delta r - r^3 + eps^2/r) dt + eps dW_r`,
    /// `dtheta = (gamma - beta r^2) dt + (eps/r) dW_theta`.
    /// Deterministic (`eps = 0`) drops the `eps^2/r` term.
    StuartLandau { delta: f64, beta: f64, gamma: f64, eps: f64 },
    /// `dX1 = X2 dt`, `dX2 = (mu (1 - X1^2) X2 - X1) dt + sqrt(2 eps) dW`.
    VanDerPol { mu: f64, eps: f64 },
    /// `dX1 = (a1 - b1 X2 - c1 X1) X1 dt + sigma1 X1 dW1`,
    /// `dX2 = (-a2 + b2 X1 - c2 X2) X2 dt + sigma2 X2 dW2`.
    LotkaVolterra {
        a1: f64,
        b1: f64,
        c1: f64,
        a2: f64,
        b2: f64,
        c2: f64,
        sigma1: f64,
        sigma2: f64,
    },
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::NoisyRotation { .. } => "noisy_rotation",
            ModelSpec::DiscreteLinear { .. } => "discrete_linear",
            ModelSpec::SwitchingLinearRde { .. } => "switching_linear_rde",
            ModelSpec::OuLinearSde { .. } => "ou_linear_sde",
            ModelSpec::ScalarPitchforkSde { .. } => "scalar_pitchfork_sde",
            ModelSpec::StuartLandau { .. } => "stuart_landau",
            ModelSpec::VanDerPol { .. } => "van_der_pol",
            ModelSpec::LotkaVolterra { .. } => "lotka_volterra",
        }
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::NoisyRotation { .. }
            | ModelSpec::OuLinearSde { .. }
            | ModelSpec::ScalarPitchforkSde { .. } => 1,
            _ => 2,
        }
    }

    /// Number of independent Wiener channels (0 for discrete maps and the
    /// switching RDE, whose randomness is in parameters rather than paths).
    pub fn noise_dim(&self) -> usize {
        match self {
            ModelSpec::OuLinearSde { .. } | ModelSpec::ScalarPitchforkSde { .. } => 1,
            ModelSpec::StuartLandau { .. } | ModelSpec::LotkaVolterra { .. } => 2,
            ModelSpec::VanDerPol { .. } => 1,
            _ => 0,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ModelSpec::NoisyRotation { .. } | ModelSpec::DiscreteLinear { .. })
    }

    pub fn is_sde(&self) -> bool {
        matches!(
            self,
            ModelSpec::OuLinearSde { .. }
                | ModelSpec::ScalarPitchforkSde { .. }
                | ModelSpec::StuartLandau { .. }
                | ModelSpec::VanDerPol { .. }
                | ModelSpec::LotkaVolterra { .. }
        )
    }

    /// True when every noise amplitude is zero.
    pub fn is_deterministic(&self) -> bool {
        match *self {
            ModelSpec::NoisyRotation { delta, .. } => delta == 0.0,
            ModelSpec::DiscreteLinear { .. } => false,
            ModelSpec::SwitchingLinearRde { a1, a2, p1, .. } => a1 == a2 || p1 == 1.0 || p1 == 0.0,
            ModelSpec::OuLinearSde { sigma, .. } => sigma == 0.0,
            ModelSpec::ScalarPitchforkSde { sigma, .. } => sigma == 0.0,
            ModelSpec::StuartLandau { eps, .. } => eps == 0.0,
            ModelSpec::VanDerPol { eps, .. } => eps == 0.0,
            ModelSpec::LotkaVolterra { sigma1, sigma2, .. } => sigma1 == 0.0 && sigma2 == 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("{}: {msg}", self.kind_name())));
        match *self {
            ModelSpec::NoisyRotation { delta, .. } if delta < 0.0 => bad("delta must be >= 0"),
            ModelSpec::DiscreteLinear { p1, .. } if !(0.0..=1.0).contains(&p1) => {
                bad("p1 must lie in [0, 1]")
            }
            ModelSpec::SwitchingLinearRde { b, switch_dt, p1, .. } => {
                if b == 0.0 {
                    bad("b must be nonzero (the off-diagonal coupling defines the rotation)")
                } else if switch_dt <= 0.0 {
                    bad("switch_dt must be positive")
                } else if !(0.0..=1.0).contains(&p1) {
                    bad("p1 must lie in [0, 1]")
                } else {
                    Ok(())
                }
            }
            ModelSpec::OuLinearSde { sigma, .. } if sigma < 0.0 => bad("sigma must be >= 0"),
            ModelSpec::ScalarPitchforkSde { sigma, .. } if sigma < 0.0 => bad("sigma must be >= 0"),
            ModelSpec::StuartLandau { delta, eps, .. } => {
                if delta <= 0.0 {
                    bad("delta must be positive (stable limit cycle regime)")
                } else if eps < 0.0 {
                    bad("eps must be >= 0")
                } else {
                    Ok(())
                }
            }
            ModelSpec::VanDerPol { eps, .. } if eps < 0.0 => bad("eps must be >= 0"),
            ModelSpec::LotkaVolterra { a1, b1, c1, a2, b2, c2, sigma1, sigma2 } => {
                if [a1, b1, c1, a2, b2, c2].iter().any(|v| *v <= 0.0) {
                    bad("model parameters a, b, c must be positive")
                } else if sigma1 < 0.0 || sigma2 < 0.0 {
                    bad("noise amplitudes must be >= 0")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// One-step image under the random map, for the discrete kinds.
    /// `noise_draw` is the realized parameter: the uniform perturbation for
    /// the rotation, the matrix entry `w` for the linear map.
    pub fn step_discrete(&self, x: &[f64], noise_draw: f64, out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        match *self {
            ModelSpec::NoisyRotation { theta, .. } => {
                out[0] = (x[0] + theta + noise_draw).rem_euclid(1.0);
                Ok(())
            }
            ModelSpec::DiscreteLinear { .. } => {
                let w = noise_draw;
                let (x1, x2) = (x[0], x[1]);
                out[0] = w * x2;
                out[1] = -w * x1;
                Ok(())
            }
            _ => Err(Error::UnsupportedKind(format!(
                "step_discrete needs a discrete map, got {}",
                self.kind_name()
            ))),
        }
    }

    /// Deterministic drift of the continuous kinds. The switching RDE needs
    /// its realized signal; all other kinds must not receive one.
    pub fn drift(
        &self,
        t: f64,
        x: &[f64],
        signal: Option<&SwitchingSignal>,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_dim(x.len())?;
        match *self {
            ModelSpec::SwitchingLinearRde { b, .. } => {
                let sig = signal.ok_or_else(|| {
                    Error::invalid("switching_linear_rde drift requires a switching signal")
                })?;
                let w = sig.value_at(t);
                out[0] = w * x[0] + x[1];
                out[1] = -b * b * x[0] + w * x[1];
                Ok(())
            }
            _ if signal.is_some() => {
                Err(Error::invalid("only switching_linear_rde takes a switching signal"))
            }
            ModelSpec::OuLinearSde { mu, .. } => {
                out[0] = mu * x[0];
                Ok(())
            }
            ModelSpec::ScalarPitchforkSde { mu, .. } => {
                out[0] = mu * x[0] - x[0] * x[0] * x[0];
                Ok(())
            }
            ModelSpec::StuartLandau { delta, beta, gamma, eps } => {
                let (r, _theta) = (x[0], x[1]);
                let ito = if eps == 0.0 { 0.0 } else { eps * eps / r };
                out[0] = delta * r - r * r * r + ito;
                out[1] = gamma - beta * r * r;
                Ok(())
            }
            ModelSpec::VanDerPol { mu, .. } => {
                out[0] = x[1];
                out[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
                Ok(())
            }
            ModelSpec::LotkaVolterra { a1, b1, c1, a2, b2, c2, .. } => {
                out[0] = (a1 - b1 * x[1] - c1 * x[0]) * x[0];
                out[1] = (-a2 + b2 * x[0] - c2 * x[1]) * x[1];
                Ok(())
            }
            _ => Err(Error::UnsupportedKind(format!(
                "drift needs a continuous model, got {}",
                self.kind_name()
            ))),
        }
    }

    /// Diffusion matrix, row-major `[dim, noise_dim]`.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        match *self {
            ModelSpec::OuLinearSde { sigma, .. } | ModelSpec::ScalarPitchforkSde { sigma, .. } => {
                out[0] = sigma;
                Ok(())
            }
            ModelSpec::StuartLandau { eps, .. } => {
                // diag(eps, eps/r): W_r and W_theta are independent Wiener
                // processes (an orthogonal mix of independent ones).
                out[0] = eps;
                out[1] = 0.0;
                out[2] = 0.0;
                out[3] = if eps == 0.0 { 0.0 } else { eps / x[0] };
                Ok(())
            }
            ModelSpec::VanDerPol { eps, .. } => {
                out[0] = 0.0;
                out[1] = (2.0 * eps).sqrt();
                Ok(())
            }
            ModelSpec::LotkaVolterra { sigma1, sigma2, .. } => {
                out[0] = sigma1 * x[0];
                out[1] = 0.0;
                out[2] = 0.0;
                out[3] = sigma2 * x[1];
                Ok(())
            }
            _ => Err(Error::UnsupportedKind(format!(
                "diffusion needs an SDE model, got {}",
                self.kind_name()
            ))),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::invalid(format!(
                "{} expects dim {}, got {}",
                self.kind_name(),
                self.dim(),
                got
            )));
        }
        Ok(())
    }
}
