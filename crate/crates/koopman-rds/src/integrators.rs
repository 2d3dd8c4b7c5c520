//! Time steppers for the catalog systems.
//!
//! * [`integrate_rk4`] — classical RK4 for the deterministic (zero-noise)
//!   systems.
//! * [`integrate_em`] — Euler-Maruyama, strong order 0.5.
//! * [`integrate_srk`] — a two-stage stochastic Runge-Kutta of Rossler SRI
//!   type for diagonal-noise Ito SDEs, strong order 1.0. Stage structure,
//!   with `a` the drift, `s^(j)` the j-th diffusion column and `DW_j` the
//!   Wiener increments:
//!
//!   ```text
//!   K1    = a(t, X)
//!   H     = X + dt K1 + s(X) DW              (drift support)
//!   Ht_j  = X + dt K1 + s^(j)(X) sqrt(dt)    (diffusion support, channel j)
//!   X'    = X + dt/2 [K1 + a(t+dt, H)] + s(X) DW
//!           + sum_j [s^(j)(Ht_j) - s^(j)(X)] (DW_j^2 - dt) / (2 sqrt(dt))
//!   ```
//!
//!   The last sum is a derivative-free Milstein correction; it vanishes for
//!   additive noise, where the scheme reduces to Heun plus the exact noise
//!   increment.
//! * [`integrate_switching_linear`] — the switching linear RDE has its
//!   randomness in parameters only, so each sub-interval is solved exactly
//!   with the closed-form matrix exponential of `a I + [[0,1],[-b^2,0]]`;
//!   no integrator bias enters the switching experiments.
//!
//! The first non-finite state aborts the path and reports its step index.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::noise::{self, DiscreteDistribution, RngStream, SwitchingSignal};

/// Right-hand side of an Ito SDE `dX = a(t, X) dt + s(X) dW`.
pub trait Sde {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Diffusion matrix, row-major `[dim, noise_dim]`.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
}

/// Checked view of a [`ModelSpec`] as an SDE right-hand side.
pub struct SdeModel<'a>(&'a ModelSpec);

impl<'a> SdeModel<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        if !model.is_sde() {
            return Err(Error::UnsupportedKind(format!(
                "{} is not an SDE (discrete maps step exactly, the switching RDE \
                 uses integrate_switching_linear)",
                model.kind_name()
            )));
        }
        model.validate()?;
        Ok(SdeModel(model))
    }
}

impl Sde for SdeModel<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn noise_dim(&self) -> usize {
        self.0.noise_dim()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.0.drift(t, x, None, out).expect("validated SDE kind");
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.0.diffusion(x, out).expect("validated SDE kind");
    }
}

/// States sampled on the uniform grid `t_k = k dt`, one row per time point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    /// `[n_steps + 1, dim]`.
    pub states: Array2<f64>,
    /// Stream id that generated this path.
    pub stream_id: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
    pub fn dim(&self) -> usize {
        self.states.ncols()
    }
    pub fn state(&self, k: usize) -> ArrayView1<'_, f64> {
        self.states.row(k)
    }
    pub fn final_state(&self) -> ArrayView1<'_, f64> {
        self.states.row(self.states.nrows() - 1)
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Trajectory bundle sharing the initial state and time grid; member `k`
/// was generated from `base_stream.substream(k)`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    EulerMaruyama,
    StochasticRk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DivergencePolicy {
    /// Abort the ensemble on the first diverged path (default).
    #[default]
    Error,
    /// Drop diverged paths and log how many were lost.
    Drop,
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationDiverged { step, path: 0 })
    }
}

fn validate_step(dt: f64, x0: &[f64], dim: usize) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != dim {
        return Err(Error::invalid(format!("x0 has dim {}, model needs {dim}", x0.len())));
    }
    Ok(())
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    sig: Vec<f64>,
    sig_sup: Vec<f64>,
    stage: Vec<f64>,
    next: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize, r: usize) -> Self {
        Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            sig: vec![0.0; dim * r.max(1)],
            sig_sup: vec![0.0; dim * r.max(1)],
            stage: vec![0.0; dim],
            next: vec![0.0; dim],
        }
    }
}

fn rk4_step(sde: &impl Sde, t: f64, x: &[f64], dt: f64, s: &mut Scratch) {
    let d = x.len();
    sde.drift(t, x, &mut s.k1);
    for i in 0..d {
        s.stage[i] = x[i] + 0.5 * dt * s.k1[i];
    }
    sde.drift(t + 0.5 * dt, &s.stage, &mut s.k2);
    for i in 0..d {
        s.stage[i] = x[i] + 0.5 * dt * s.k2[i];
    }
    sde.drift(t + 0.5 * dt, &s.stage, &mut s.k3);
    for i in 0..d {
        s.stage[i] = x[i] + dt * s.k3[i];
    }
    sde.drift(t + dt, &s.stage, &mut s.k4);
    for i in 0..d {
        s.next[i] = x[i] + dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

fn em_step(sde: &impl Sde, t: f64, x: &[f64], dt: f64, dw: &[f64], s: &mut Scratch) {
    let (d, r) = (x.len(), sde.noise_dim());
    sde.drift(t, x, &mut s.k1);
    sde.diffusion(x, &mut s.sig);
    for i in 0..d {
        let mut v = x[i] + dt * s.k1[i];
        for j in 0..r {
            v += s.sig[i * r + j] * dw[j];
        }
        s.next[i] = v;
    }
}

fn srk_step(sde: &impl Sde, t: f64, x: &[f64], dt: f64, dw: &[f64], s: &mut Scratch) {
    let (d, r) = (x.len(), sde.noise_dim());
    let sqdt = dt.sqrt();
    sde.drift(t, x, &mut s.k1);
    sde.diffusion(x, &mut s.sig);

    // Drift support stage and Heun average.
    for i in 0..d {
        let mut v = x[i] + dt * s.k1[i];
        for j in 0..r {
            v += s.sig[i * r + j] * dw[j];
        }
        s.stage[i] = v;
    }
    sde.drift(t + dt, &s.stage, &mut s.k2);
    for i in 0..d {
        let mut v = x[i] + 0.5 * dt * (s.k1[i] + s.k2[i]);
        for j in 0..r {
            v += s.sig[i * r + j] * dw[j];
        }
        s.next[i] = v;
    }

    // Per-channel diffusion supports give the derivative-free Milstein term.
    for j in 0..r {
        for i in 0..d {
            s.stage[i] = x[i] + dt * s.k1[i] + s.sig[i * r + j] * sqdt;
        }
        sde.diffusion(&s.stage, &mut s.sig_sup);
        let w2 = (dw[j] * dw[j] - dt) / (2.0 * sqdt);
        for i in 0..d {
            s.next[i] += (s.sig_sup[i * r + j] - s.sig[i * r + j]) * w2;
        }
    }
}

fn integrate_sde_with<F>(
    sde: &impl Sde,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    increments: Option<&Array2<f64>>,
    stream: RngStream,
    scheme: Scheme,
    mut observer: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let (d, r) = (sde.dim(), sde.noise_dim());
    validate_step(dt, x0, d)?;
    if let Some(inc) = increments {
        if inc.nrows() != r || inc.ncols() < n_steps {
            return Err(Error::invalid("increment matrix shape does not cover the integration"));
        }
    }
    let owned_inc = match (increments, scheme) {
        (None, Scheme::Rk4) => None,
        (None, _) if n_steps > 0 && r > 0 => {
            Some(noise::gaussian_increments(stream, r, n_steps, dt)?.increments)
        }
        _ => None,
    };
    let inc = increments.or(owned_inc.as_ref());

    let mut scratch = Scratch::new(d, r);
    let mut x = x0.to_vec();
    check_finite(&x, 0)?;
    observer(0, &x);
    let zero_dw = vec![0.0; r.max(1)];
    let mut dw = vec![0.0; r.max(1)];
    for k in 0..n_steps {
        let t = k as f64 * dt;
        match scheme {
            Scheme::Rk4 => rk4_step(sde, t, &x, dt, &mut scratch),
            Scheme::EulerMaruyama | Scheme::StochasticRk => {
                if let Some(inc) = inc {
                    for j in 0..r {
                        dw[j] = inc[(j, k)];
                    }
                } else {
                    dw[..r.max(1)].copy_from_slice(&zero_dw[..r.max(1)]);
                }
                if scheme == Scheme::EulerMaruyama {
                    em_step(sde, t, &x, dt, &dw, &mut scratch);
                } else {
                    srk_step(sde, t, &x, dt, &dw, &mut scratch);
                }
            }
        }
        x.copy_from_slice(&scratch.next);
        check_finite(&x, k + 1)?;
        observer(k + 1, &x);
    }
    Ok(())
}

fn collect_trajectory<F>(dt: f64, dim: usize, n_steps: usize, stream_id: u64, run: F) -> Result<Trajectory>
where
    F: FnOnce(&mut dyn FnMut(usize, &[f64])) -> Result<()>,
{
    let mut states = Array2::zeros((n_steps + 1, dim));
    {
        let mut obs = |k: usize, x: &[f64]| {
            states.row_mut(k).as_slice_mut().unwrap().copy_from_slice(x);
        };
        run(&mut obs)?;
    }
    Ok(Trajectory { dt, states, stream_id })
}

/// Deterministic RK4; the model must have zero noise amplitudes.
pub fn integrate_rk4(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if !model.is_deterministic() {
        return Err(Error::invalid(format!(
            "integrate_rk4 needs zero noise amplitudes on {}",
            model.kind_name()
        )));
    }
    let sde = SdeModel::new(model)?;
    collect_trajectory(dt, sde.dim(), n_steps, 0, |obs| {
        integrate_sde_with(&sde, x0, dt, n_steps, None, RngStream::new(0, 0), Scheme::Rk4, obs)
    })
}

/// Euler-Maruyama path.
pub fn integrate_em(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    stream: RngStream,
) -> Result<Trajectory> {
    let sde = SdeModel::new(model)?;
    collect_trajectory(dt, sde.dim(), n_steps, stream.stream_id, |obs| {
        integrate_sde_with(&sde, x0, dt, n_steps, None, stream, Scheme::EulerMaruyama, obs)
    })
}

/// Stochastic Runge-Kutta path (strong order 1.0 for diagonal noise).
pub fn integrate_srk(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    stream: RngStream,
) -> Result<Trajectory> {
    let sde = SdeModel::new(model)?;
    collect_trajectory(dt, sde.dim(), n_steps, stream.stream_id, |obs| {
        integrate_sde_with(&sde, x0, dt, n_steps, None, stream, Scheme::StochasticRk, obs)
    })
}

/// Integrate a caller-supplied SDE with prescribed Wiener increments. Used
/// by the strong-order tests, which compare schemes on a common Brownian
/// path.
pub fn integrate_sde_with_increments(
    sde: &impl Sde,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    increments: &Array2<f64>,
    scheme: Scheme,
) -> Result<Trajectory> {
    collect_trajectory(dt, sde.dim(), n_steps, 0, |obs| {
        integrate_sde_with(sde, x0, dt, n_steps, Some(increments), RngStream::new(0, 0), scheme, obs)
    })
}

/// 2x2 matrix exponential of `dt * (a I + [[0, 1], [-b^2, 0]])`:
/// `exp = e^(a dt) [cos(b dt) I + sin(b dt)/b [[0,1],[-b^2,0]]]`.
fn switching_exponential(a: f64, b: f64, dt: f64) -> [f64; 4] {
    let ea = (a * dt).exp();
    let (s, c) = (b * dt).sin_cos();
    [ea * c, ea * s / b, -ea * s * b, ea * c]
}

/// Exact piecewise integration of the switching linear RDE. `dt` must
/// divide `switch_dt`, so that switch instants land on grid points.
pub fn integrate_switching_linear(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    stream: RngStream,
) -> Result<Trajectory> {
    let &ModelSpec::SwitchingLinearRde { a1, a2, b, p1, switch_dt } = model else {
        return Err(Error::UnsupportedKind(format!(
            "integrate_switching_linear needs switching_linear_rde, got {}",
            model.kind_name()
        )));
    };
    model.validate()?;
    validate_step(dt, x0, 2)?;
    let ratio = switch_dt / dt;
    let k_per_switch = ratio.round();
    if k_per_switch < 1.0 || (ratio - k_per_switch).abs() > 1e-9 * ratio {
        return Err(Error::invalid(format!(
            "dt = {dt} must divide switch_dt = {switch_dt} (K dt = switch_dt for integer K)"
        )));
    }
    let k_per_switch = k_per_switch as usize;
    let n_switches = n_steps.div_ceil(k_per_switch).max(1);
    let dist = DiscreteDistribution::bernoulli_pair(a1, a2, p1)?;
    let signal = SwitchingSignal::sample(stream, &dist, n_switches, switch_dt)?;

    let m1 = switching_exponential(a1, b, dt);
    let m2 = switching_exponential(a2, b, dt);

    let mut states = Array2::zeros((n_steps + 1, 2));
    let (mut x1, mut x2) = (x0[0], x0[1]);
    states[(0, 0)] = x1;
    states[(0, 1)] = x2;
    for k in 0..n_steps {
        let a = signal.values[k / k_per_switch];
        let m = if a == a1 { &m1 } else { &m2 };
        let y1 = m[0] * x1 + m[1] * x2;
        let y2 = m[2] * x1 + m[3] * x2;
        x1 = y1;
        x2 = y2;
        if !(x1.is_finite() && x2.is_finite()) {
            return Err(Error::IntegrationDiverged { step: k + 1, path: 0 });
        }
        states[(k + 1, 0)] = x1;
        states[(k + 1, 1)] = x2;
    }
    Ok(Trajectory { dt, states, stream_id: stream.stream_id })
}

/// Simulate one path of any catalog model, dispatching on its kind:
/// discrete maps step exactly (and report `dt = 1`), the switching RDE uses
/// the exact exponential stepper, SDEs use `scheme`.
pub fn simulate_path(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    stream: RngStream,
    scheme: Scheme,
) -> Result<Trajectory> {
    model.validate()?;
    match model {
        ModelSpec::NoisyRotation { delta, .. } => {
            validate_step(1.0, x0, 1)?;
            let draws = noise::uniform_centered(stream, *delta, n_steps);
            let mut states = Array2::zeros((n_steps + 1, 1));
            let mut x = [x0[0]];
            states[(0, 0)] = x[0];
            let mut next = [0.0];
            for k in 0..n_steps {
                model.step_discrete(&x, draws[k], &mut next)?;
                x = next;
                states[(k + 1, 0)] = x[0];
            }
            Ok(Trajectory { dt: 1.0, states, stream_id: stream.stream_id })
        }
        ModelSpec::DiscreteLinear { p1, value1, value2 } => {
            validate_step(1.0, x0, 2)?;
            let dist = DiscreteDistribution::bernoulli_pair(*value1, *value2, *p1)?;
            let draws = noise::discrete_iid(stream, &dist, n_steps);
            let mut states = Array2::zeros((n_steps + 1, 2));
            let mut x = [x0[0], x0[1]];
            let mut next = [0.0, 0.0];
            states[(0, 0)] = x[0];
            states[(0, 1)] = x[1];
            for k in 0..n_steps {
                model.step_discrete(&x, draws[k], &mut next)?;
                x = next;
                if !(x[0].is_finite() && x[1].is_finite()) {
                    return Err(Error::IntegrationDiverged { step: k + 1, path: 0 });
                }
                states[(k + 1, 0)] = x[0];
                states[(k + 1, 1)] = x[1];
            }
            Ok(Trajectory { dt: 1.0, states, stream_id: stream.stream_id })
        }
        ModelSpec::SwitchingLinearRde { .. } => {
            integrate_switching_linear(model, x0, dt, n_steps, stream)
        }
        _ => match scheme {
            Scheme::Rk4 => integrate_rk4(model, x0, dt, n_steps),
            Scheme::EulerMaruyama => integrate_em(model, x0, dt, n_steps, stream),
            Scheme::StochasticRk => integrate_srk(model, x0, dt, n_steps, stream),
        },
    }
}

/// `n` independent paths from a common initial state; member `k` uses
/// `base_stream.substream(k)`, so the result is deterministic regardless of
/// thread count and ordered by path index.
pub fn run_ensemble(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    n: usize,
    base_stream: RngStream,
    scheme: Scheme,
) -> Result<Ensemble> {
    run_ensemble_with_policy(model, x0, dt, n_steps, n, base_stream, scheme, DivergencePolicy::Error)
}

#[allow(clippy::too_many_arguments)]
pub fn run_ensemble_with_policy(
    model: &ModelSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    n: usize,
    base_stream: RngStream,
    scheme: Scheme,
    policy: DivergencePolicy,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::invalid("ensemble needs at least one path"));
    }
    let results: Vec<Result<Trajectory>> = (0..n)
        .into_par_iter()
        .map(|k| {
            simulate_path(model, x0, dt, n_steps, base_stream.substream(k as u64), scheme).map_err(
                |e| match e {
                    Error::IntegrationDiverged { step, .. } => {
                        Error::IntegrationDiverged { step, path: k }
                    }
                    other => other,
                },
            )
        })
        .collect();

    let mut trajectories = Vec::with_capacity(n);
    let mut dropped = 0usize;
    for res in results {
        match (res, policy) {
            (Ok(t), _) => trajectories.push(t),
            (Err(Error::IntegrationDiverged { .. }), DivergencePolicy::Drop) => dropped += 1,
            (Err(e), _) => return Err(e),
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} diverged paths out of {n}");
    }
    if trajectories.is_empty() {
        return Err(Error::DegenerateData("every ensemble path diverged".into()));
    }
    Ok(Ensemble { trajectories })
}

/// Write `t, x1, ..., xd` rows plus a JSON metadata sidecar
/// (`<stem>.meta.json`) recording model, seed and grid.
pub fn export_trajectory_csv(
    path: &std::path::Path,
    traj: &Trajectory,
    model: &ModelSpec,
    seed: u64,
) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (1..=traj.dim()).map(|i| format!("x{i}")).collect();
    writeln!(f, "t,{}", header.join(","))?;
    for (k, t) in traj.times().iter().enumerate() {
        let row: Vec<String> = traj.state(k).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(f, "{t:.17e},{}", row.join(","))?;
    }
    f.flush()?;
    let meta = serde_json::json!({
        "model": model,
        "seed": seed,
        "stream_id": traj.stream_id,
        "dt": traj.dt,
        "n_states": traj.len(),
    });
    let meta_path = path.with_extension("meta.json");
    std::fs::write(meta_path, serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_noise_ou_matches_exponential() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.0 };
        let traj = integrate_em(&m, &[1.0], 1e-3, 2000, RngStream::new(0, 0)).unwrap();
        assert_abs_diff_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 2e-3);
        let traj = integrate_srk(&m, &[1.0], 1e-3, 2000, RngStream::new(0, 0)).unwrap();
        assert_abs_diff_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.001 };
        let traj = integrate_srk(&m, &[0.7], 0.01, 0, RngStream::new(1, 0)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.state(0)[0], 0.7);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.001 };
        assert!(integrate_srk(&m, &[1.0], 0.0, 10, RngStream::new(0, 0)).is_err());
        assert!(integrate_em(&m, &[1.0], -0.1, 10, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn ensembles_are_reproducible_and_ordered() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.1 };
        let a = run_ensemble(&m, &[1.0], 0.01, 50, 16, RngStream::new(3, 100), Scheme::StochasticRk)
            .unwrap();
        let b = run_ensemble(&m, &[1.0], 0.01, 50, 16, RngStream::new(3, 100), Scheme::StochasticRk)
            .unwrap();
        for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(ta.states, tb.states);
            assert_eq!(ta.stream_id, tb.stream_id);
        }
        // Single-member ensemble reduces to one integrate call.
        let single =
            run_ensemble(&m, &[1.0], 0.01, 50, 1, RngStream::new(3, 100), Scheme::StochasticRk)
                .unwrap();
        let direct = integrate_srk(&m, &[1.0], 0.01, 50, RngStream::new(3, 100)).unwrap();
        assert_eq!(single.trajectories[0].states, direct.states);
    }

    #[test]
    fn em_ensemble_mean_matches_its_discrete_mean() {
        // EM on dX = mu X dt + sigma dW has exact mean (1 + mu dt)^k x0;
        // the sample mean must sit in the 3-sigma CLT band around it.
        let (mu, sigma, dt, k, n) = (-0.5, 0.001, 1e-3, 1000, 10_000);
        let m = ModelSpec::OuLinearSde { mu, sigma };
        let ens =
            run_ensemble(&m, &[1.0], dt, k, n, RngStream::new(7, 0), Scheme::EulerMaruyama).unwrap();
        let finals: Vec<f64> = ens.trajectories.iter().map(|t| t.final_state()[0]).collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let expected = (1.0 + mu * dt).powi(k as i32);
        let path_std = sigma * ((1.0 - (2.0 * mu * dt * k as f64).exp()) / (2.0 * -mu)).sqrt();
        let band = 3.0 * path_std / (n as f64).sqrt();
        assert!((mean - expected).abs() < band, "mean {mean} vs {expected} +- {band}");
    }

    #[test]
    fn srk_ensemble_mean_matches_ou_mean() {
        let (mu, sigma, dt, k, n) = (-0.5, 0.001, 1e-3, 1000, 10_000);
        let m = ModelSpec::OuLinearSde { mu, sigma };
        let ens =
            run_ensemble(&m, &[1.0], dt, k, n, RngStream::new(7, 0), Scheme::StochasticRk).unwrap();
        let finals: Vec<f64> = ens.trajectories.iter().map(|t| t.final_state()[0]).collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let expected = (mu * dt * k as f64).exp();
        let path_std = sigma * ((1.0 - (2.0 * mu).exp()) / (2.0 * -mu)).sqrt();
        let band = 3.0 * path_std / (n as f64).sqrt();
        assert!((mean - expected).abs() < band, "mean {mean} vs {expected} +- {band}");
    }

    #[test]
    fn zero_noise_van_der_pol_srk_matches_rk4() {
        let m = ModelSpec::VanDerPol { mu: 0.3, eps: 0.0 };
        let (dt, n) = (1e-3, 6320);
        let ref_traj = integrate_rk4(&m, &[2.0, 0.0], dt, n).unwrap();
        let srk = integrate_srk(&m, &[2.0, 0.0], dt, n, RngStream::new(0, 0)).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..=n {
            for i in 0..2 {
                max_err = max_err.max((ref_traj.states[(k, i)] - srk.states[(k, i)]).abs());
            }
        }
        assert!(max_err < 1e-5, "max deviation over one period: {max_err}");
    }

    #[test]
    fn switching_p1_one_is_exact_decaying_rotation() {
        let m = ModelSpec::SwitchingLinearRde {
            a1: -0.1,
            a2: 0.1,
            b: 2.0,
            p1: 1.0,
            switch_dt: PI / 30.0,
        };
        let dt = PI / 60.0;
        let n = 60; // t = pi
        let traj = integrate_switching_linear(&m, &[1.0, 0.5], dt, n, RngStream::new(0, 0)).unwrap();
        // exp(A pi) = e^(-0.1 pi) I because cos(2 pi) = 1, sin(2 pi) = 0.
        let decay = (-0.1 * PI).exp();
        assert_abs_diff_eq!(traj.final_state()[0], decay * 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(traj.final_state()[1], decay * 0.5, epsilon = 1e-10);
    }

    #[test]
    fn switching_rejects_non_divisible_dt() {
        let m = ModelSpec::SwitchingLinearRde {
            a1: -0.1,
            a2: 0.1,
            b: 2.0,
            p1: 0.5,
            switch_dt: PI / 30.0,
        };
        assert!(integrate_switching_linear(&m, &[1.0, 0.0], 0.04, 10, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn switching_ensemble_norm_stays_bounded() {
        // |x(t)| = |x0| e^(int a ds) g(t) with g the elliptic rotation
        // factor, bounded by b = 2; with a_hat = 0 the ensemble mean of
        // |x(t)| hovers near g(t) e^(sigma_hat^2 t / 2), well under 2.5.
        let m = ModelSpec::SwitchingLinearRde {
            a1: -0.1,
            a2: 0.1,
            b: 2.0,
            p1: 0.5,
            switch_dt: PI / 30.0,
        };
        let dt = PI / 60.0;
        let n_steps = (10.0 / dt).ceil() as usize;
        let ens = run_ensemble(
            &m,
            &[1.0, 0.0],
            dt,
            n_steps,
            10_000,
            RngStream::new(11, 0),
            Scheme::StochasticRk,
        )
        .unwrap();
        for k in (0..=n_steps).step_by(20) {
            let mean_norm: f64 = ens
                .trajectories
                .iter()
                .map(|t| {
                    let s = t.state(k);
                    (s[0] * s[0] + s[1] * s[1]).sqrt()
                })
                .sum::<f64>()
                / ens.trajectories.len() as f64;
            assert!(mean_norm < 2.5, "t = {}: mean |x| = {mean_norm}", k as f64 * dt);
        }
    }

    #[test]
    fn lotka_volterra_paths_stay_in_first_quadrant() {
        let m = ModelSpec::LotkaVolterra {
            a1: 1.0,
            b1: 0.5,
            c1: 0.01,
            a2: 0.75,
            b2: 0.25,
            c2: 0.01,
            sigma1: 0.05,
            sigma2: 0.05,
        };
        let ens = run_ensemble(
            &m,
            &[3.5, 2.3],
            0.02,
            2000,
            32,
            RngStream::new(21, 0),
            Scheme::StochasticRk,
        )
        .unwrap();
        for traj in &ens.trajectories {
            assert!(traj.states.iter().all(|&v| v >= 0.0), "path left the first quadrant");
        }
    }

    /// Geometric Brownian motion test system with a pathwise-exact solution.
    struct Gbm {
        mu: f64,
        sigma: f64,
    }

    impl Sde for Gbm {
        fn dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = self.mu * x[0];
        }
        fn diffusion(&self, x: &[f64], out: &mut [f64]) {
            out[0] = self.sigma * x[0];
        }
    }

    fn strong_order_slope(scheme: Scheme) -> f64 {
        let gbm = Gbm { mu: -0.5, sigma: 0.5 };
        let t_end = 1.0;
        let levels = [64usize, 128, 256, 512, 1024];
        let n_fine = 1024;
        let n_paths = 200;
        let dt_fine = t_end / n_fine as f64;

        let mut rms = vec![0.0f64; levels.len()];
        for p in 0..n_paths {
            let fine = noise::gaussian_increments(RngStream::new(1234, p as u64), 1, n_fine, dt_fine)
                .unwrap()
                .increments;
            let w_total: f64 = fine.row(0).sum();
            let exact = 1.0
                * ((gbm.mu - 0.5 * gbm.sigma * gbm.sigma) * t_end + gbm.sigma * w_total).exp();
            for (li, &n_coarse) in levels.iter().enumerate() {
                let stride = n_fine / n_coarse;
                let mut coarse = Array2::zeros((1, n_coarse));
                for k in 0..n_coarse {
                    coarse[(0, k)] = (0..stride).map(|j| fine[(0, k * stride + j)]).sum();
                }
                let traj = integrate_sde_with_increments(
                    &gbm,
                    &[1.0],
                    t_end / n_coarse as f64,
                    n_coarse,
                    &coarse,
                    scheme,
                )
                .unwrap();
                let err = traj.final_state()[0] - exact;
                rms[li] += err * err;
            }
        }
        let logs: Vec<(f64, f64)> = levels
            .iter()
            .zip(&rms)
            .map(|(&n, &s)| ((t_end / n as f64).ln(), (s / n_paths as f64).sqrt().ln()))
            .collect();
        fit_slope(&logs)
    }

    fn fit_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn euler_maruyama_strong_order_half() {
        let slope = strong_order_slope(Scheme::EulerMaruyama);
        assert!((slope - 0.5).abs() < 0.2, "EM strong-order slope = {slope}");
    }

    #[test]
    fn srk_strong_order_one() {
        let slope = strong_order_slope(Scheme::StochasticRk);
        assert!((slope - 1.0).abs() < 0.2, "SRK strong-order slope = {slope}");
    }

    #[test]
    fn srk_matches_fine_em_reference_on_ou() {
        // Strong error of SRK against a fine-dt EM reference on a common
        // Brownian path; additive noise makes the fine EM reference itself
        // order 1.0 accurate, so coarse SRK errors dominate.
        let m = SdeModel::new(&ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.3 }).unwrap();
        let t_end = 1.0;
        let n_fine = 16384;
        let dt_fine = t_end / n_fine as f64;
        let levels = [16usize, 32, 64, 128, 256];
        let n_paths = 100;
        let mut rms = vec![0.0f64; levels.len()];
        for p in 0..n_paths {
            let fine = noise::gaussian_increments(RngStream::new(77, p as u64), 1, n_fine, dt_fine)
                .unwrap()
                .increments;
            let reference =
                integrate_sde_with_increments(&m, &[1.0], dt_fine, n_fine, &fine, Scheme::EulerMaruyama)
                    .unwrap()
                    .final_state()[0];
            for (li, &n_coarse) in levels.iter().enumerate() {
                let stride = n_fine / n_coarse;
                let mut coarse = Array2::zeros((1, n_coarse));
                for k in 0..n_coarse {
                    coarse[(0, k)] = (0..stride).map(|j| fine[(0, k * stride + j)]).sum();
                }
                let traj = integrate_sde_with_increments(
                    &m,
                    &[1.0],
                    t_end / n_coarse as f64,
                    n_coarse,
                    &coarse,
                    Scheme::StochasticRk,
                )
                .unwrap();
                let err = traj.final_state()[0] - reference;
                rms[li] += err * err;
            }
        }
        let logs: Vec<(f64, f64)> = levels
            .iter()
            .zip(&rms)
            .map(|(&n, &s)| ((t_end / n as f64).ln(), (s / n_paths as f64).sqrt().ln()))
            .collect();
        let slope = fit_slope(&logs);
        assert!((slope - 1.0).abs() < 0.2, "SRK-vs-EM-reference slope = {slope}");
    }
}
