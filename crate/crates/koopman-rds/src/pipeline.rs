//! Assembly of snapshot matrices from simulated ensembles in the three
//! layouts fed to DMD: ensemble pairs, time-delayed snapshots and the
//! stochastic Hankel matrix.
//!
//! Expectations `K^k f(x) = E[f(phi(k dt, w) x)]` are Monte Carlo means
//! over independent paths. The stream-id schedule is fixed per (point,
//! path) index, so assembly is deterministic under any thread count.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmd::{SnapshotLayout, SnapshotMatrices};
use crate::error::{Error, Result};
use crate::integrators::{simulate_path, Scheme};
use crate::models::ModelSpec;
use crate::noise::RngStream;
use crate::observables::ObservableSet;

/// Monte Carlo estimate of expectation values with per-entry CLT standard
/// errors (`sample std / sqrt(N)`).
#[derive(Debug, Clone)]
pub struct ExpectationEstimate {
    /// `[n_observables, n_time_points]`.
    pub values: Array2<Complex64>,
    pub n_samples: usize,
    pub standard_error: Array2<f64>,
}

/// Effective time of one operator application: discrete maps advance one
/// step per application regardless of the requested `dt`.
fn operator_dt(model: &ModelSpec, dt: f64) -> f64 {
    if model.is_discrete() {
        1.0
    } else {
        dt
    }
}

/// Estimate `E[f(X_k)]` for `k = 0..=n_steps` over `n_paths` paths started
/// at `x0`; path `i` uses `base.substream(i)`.
pub fn estimate_expectations(
    model: &ModelSpec,
    x0: &[f64],
    observable: &ObservableSet,
    n_steps: usize,
    dt: f64,
    n_paths: usize,
    base: RngStream,
    scheme: Scheme,
) -> Result<ExpectationEstimate> {
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    if observable.expected_dim() != model.dim() {
        return Err(Error::invalid("observable dimension does not match the model"));
    }
    let n_obs = observable.len();
    let cols = n_steps + 1;

    // Map-reduce over paths: (sum, sum of |.|^2) per entry.
    let reduced: Result<(Array2<Complex64>, Array2<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<(Array2<Complex64>, Array2<f64>)> {
            let traj = simulate_path(model, x0, dt, n_steps, base.substream(i as u64), scheme)
                .map_err(|e| match e {
                    Error::IntegrationDiverged { step, .. } => {
                        Error::IntegrationDiverged { step, path: i }
                    }
                    other => other,
                })?;
            let vals = observable.evaluate_along(&traj)?;
            let sq = vals.mapv(|c| c.norm_sqr());
            Ok((vals, sq))
        })
        .try_reduce(
            || (Array2::default((n_obs, cols)), Array2::zeros((n_obs, cols))),
            |(sa, qa), (sb, qb)| Ok((sa + sb, qa + qb)),
        );
    let (sum, sum_sq) = reduced?;

    let inv_n = 1.0 / n_paths as f64;
    let values = sum.mapv(|c| c * inv_n);
    let mut standard_error = Array2::zeros((n_obs, cols));
    for i in 0..n_obs {
        for k in 0..cols {
            let var = (sum_sq[(i, k)] * inv_n - values[(i, k)].norm_sqr()).max(0.0);
            standard_error[(i, k)] = (var * inv_n).sqrt();
        }
    }
    Ok(ExpectationEstimate { values, n_samples: n_paths, standard_error })
}

/// Ensemble-pairs layout: `X(:,j) = f(x_j)` exactly (no averaging error
/// enters X) and `Y(:,j)` is the Monte Carlo mean of `f` after `k` steps
/// over `n_paths` paths from `x_j`. Path `(j, i)` uses stream id
/// `base + j n_paths + i`. The returned estimate carries the Y-side
/// standard errors.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ensemble_pairs(
    model: &ModelSpec,
    initial_points: &[Vec<f64>],
    observable: &ObservableSet,
    k: usize,
    dt: f64,
    n_paths: usize,
    base: RngStream,
    scheme: Scheme,
) -> Result<(SnapshotMatrices, ExpectationEstimate)> {
    let m = initial_points.len();
    if m < 2 {
        return Err(Error::invalid("ensemble-pairs layout needs at least two initial points"));
    }
    if k == 0 {
        return Err(Error::invalid("lag k must be at least 1"));
    }
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path per point"));
    }
    let n_obs = observable.len();

    let columns: Result<Vec<(Vec<Complex64>, Vec<Complex64>, Vec<f64>)>> = initial_points
        .par_iter()
        .enumerate()
        .map(|(j, x0)| {
            let x_col = observable.evaluate(x0)?;
            let mut sum = vec![Complex64::new(0.0, 0.0); n_obs];
            let mut sum_sq = vec![0.0f64; n_obs];
            let mut buf = vec![Complex64::new(0.0, 0.0); n_obs];
            for i in 0..n_paths {
                let stream = base.substream((j * n_paths + i) as u64);
                let traj = simulate_path(model, x0, dt, k, stream, scheme).map_err(|e| match e {
                    Error::IntegrationDiverged { step, .. } => Error::IntegrationDiverged {
                        step,
                        path: j * n_paths + i,
                    },
                    other => other,
                })?;
                observable.evaluate_into(traj.final_state().as_slice().unwrap(), &mut buf)?;
                for (a, &b) in sum.iter_mut().zip(buf.iter()) {
                    *a += b;
                }
                for (a, &b) in sum_sq.iter_mut().zip(buf.iter()) {
                    *a += b.norm_sqr();
                }
            }
            let inv_n = 1.0 / n_paths as f64;
            let mean: Vec<Complex64> = sum.iter().map(|c| c * inv_n).collect();
            let se: Vec<f64> = sum_sq
                .iter()
                .zip(&mean)
                .map(|(&q, m)| ((q * inv_n - m.norm_sqr()).max(0.0) * inv_n).sqrt())
                .collect();
            Ok((x_col, mean, se))
        })
        .collect();
    let columns = columns?;

    let mut x = Array2::default((n_obs, m));
    let mut y = Array2::default((n_obs, m));
    let mut se = Array2::zeros((n_obs, m));
    for (j, (xc, yc, sc)) in columns.into_iter().enumerate() {
        for i in 0..n_obs {
            x[(i, j)] = xc[i];
            y[(i, j)] = yc[i];
            se[(i, j)] = sc[i];
        }
    }
    let dt_op = operator_dt(model, dt) * k as f64;
    let mats = SnapshotMatrices::new(x, y.clone(), SnapshotLayout::EnsemblePairs, dt_op)?;
    Ok((mats, ExpectationEstimate { values: y, n_samples: n_paths, standard_error: se }))
}

/// Time-delayed layout: column `k` is the Monte Carlo estimate of
/// `E[f(X_k)]` from `x0`; `X` takes columns `0..m-1`, `Y` columns `1..m`.
/// `n_paths = 1` is the single-realization (ergodic) variant.
#[allow(clippy::too_many_arguments)]
pub fn assemble_time_delayed(
    model: &ModelSpec,
    x0: &[f64],
    observable: &ObservableSet,
    m: usize,
    dt: f64,
    n_paths: usize,
    base: RngStream,
    scheme: Scheme,
) -> Result<SnapshotMatrices> {
    if m < 2 {
        return Err(Error::invalid("time-delayed layout needs at least two columns"));
    }
    let est = estimate_expectations(model, x0, observable, m, dt, n_paths, base, scheme)?;
    let x = est.values.slice(s![.., ..m]).to_owned();
    let y = est.values.slice(s![.., 1..=m]).to_owned();
    SnapshotMatrices::new(x, y, SnapshotLayout::TimeDelayed, operator_dt(model, dt))
}

/// Estimator for the conditional-expectation entries of the stochastic
/// Hankel matrix; neither is canonical, both are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HankelEstimator {
    /// Hankel matrix of the ensemble-averaged observable signal
    /// `g(k) = E[f(X_k)]`: entry `(i, k) = g(i + k)`.
    AveragedTrajectory,
    /// One realized pilot trajectory; entry `(i, k)` averages `f` over
    /// `averaging_n` fresh continuation paths of length `k` launched from
    /// pilot state `i` (the k = 0 column is exact).
    PilotContinuation,
}

/// Stochastic Hankel dimensions and estimator inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HankelSpec {
    pub n_rows: usize,
    pub m_cols: usize,
    pub observable: ObservableSet,
    pub averaging_n: usize,
}

impl HankelSpec {
    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.m_cols == 0 || self.averaging_n == 0 {
            return Err(Error::invalid("Hankel dimensions and averaging_n must be positive"));
        }
        if self.observable.len() != 1 {
            return Err(Error::invalid("the Hankel construction takes a scalar observable"));
        }
        if self.n_rows < self.m_cols {
            log::warn!(
                "Hankel with n_rows = {} < m_cols = {}; more rows than columns is recommended",
                self.n_rows,
                self.m_cols
            );
        }
        Ok(())
    }
}

/// Build the `n_rows x (m_cols + 1)` stochastic Hankel matrix of
/// conditional expectations `K^k f` along a trajectory from `x0`, and
/// split it into `X` (first `m_cols` columns) and `Y` (last `m_cols`).
/// With one path and zero noise both estimators collapse to the classical
/// Hankel matrix `H[i, k] = f(flow_{i+k}(x0))`.
pub fn assemble_stochastic_hankel(
    model: &ModelSpec,
    x0: &[f64],
    spec: &HankelSpec,
    dt: f64,
    base: RngStream,
    estimator: HankelEstimator,
    scheme: Scheme,
) -> Result<SnapshotMatrices> {
    spec.validate()?;
    let (n, m) = (spec.n_rows, spec.m_cols);
    let h = match estimator {
        HankelEstimator::AveragedTrajectory => {
            let est = estimate_expectations(
                model,
                x0,
                &spec.observable,
                n + m - 1,
                dt,
                spec.averaging_n,
                base,
                scheme,
            )?;
            Array2::from_shape_fn((n, m + 1), |(i, k)| est.values[(0, i + k)])
        }
        HankelEstimator::PilotContinuation => {
            let pilot = simulate_path(model, x0, dt, n - 1, base, scheme)?;
            let rows: Result<Vec<Vec<Complex64>>> = (0..n)
                .into_par_iter()
                .map(|i| -> Result<Vec<Complex64>> {
                    let xi = pilot.state(i).to_vec();
                    let row_base = base.substream(1 + (i * spec.averaging_n) as u64);
                    let est = estimate_expectations(
                        model,
                        &xi,
                        &spec.observable,
                        m,
                        dt,
                        spec.averaging_n,
                        row_base,
                        scheme,
                    )?;
                    Ok(est.values.row(0).to_vec())
                })
                .collect();
            let rows = rows?;
            Array2::from_shape_fn((n, m + 1), |(i, k)| rows[i][k])
        }
    };
    let x = h.slice(s![.., ..m]).to_owned();
    let y = h.slice(s![.., 1..=m]).to_owned();
    SnapshotMatrices::new(x, y, SnapshotLayout::Hankel, operator_dt(model, dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSampling {
    UniformGrid,
    UniformRandom,
}

/// `m` initial points over the box given by per-coordinate ranges, either
/// on a uniform grid or i.i.d. uniform from `stream`.
pub fn sample_initial_points(
    sampling: PointSampling,
    ranges: &[(f64, f64)],
    m: usize,
    stream: RngStream,
) -> Result<Vec<Vec<f64>>> {
    use rand::Rng;
    if m == 0 || ranges.is_empty() {
        return Err(Error::invalid("need at least one point and one coordinate range"));
    }
    match sampling {
        PointSampling::UniformRandom => {
            let mut rng = stream.rng();
            Ok((0..m)
                .map(|_| {
                    ranges.iter().map(|&(a, b)| a + (b - a) * rng.gen::<f64>()).collect()
                })
                .collect())
        }
        PointSampling::UniformGrid => match ranges.len() {
            1 => {
                let (a, b) = ranges[0];
                let step = (b - a) / (m.max(2) - 1) as f64;
                Ok((0..m).map(|i| vec![a + i as f64 * step]).collect())
            }
            2 => {
                let side = (m as f64).sqrt().ceil() as usize;
                let mut pts = Vec::with_capacity(m);
                'outer: for i in 0..side {
                    for j in 0..side {
                        let u = ranges[0].0
                            + (ranges[0].1 - ranges[0].0) * i as f64 / (side - 1).max(1) as f64;
                        let v = ranges[1].0
                            + (ranges[1].1 - ranges[1].0) * j as f64 / (side - 1).max(1) as f64;
                        pts.push(vec![u, v]);
                        if pts.len() == m {
                            break 'outer;
                        }
                    }
                }
                Ok(pts)
            }
            d => Err(Error::invalid(format!("grid sampling supports 1 or 2 dims, got {d}"))),
        },
    }
}

/// CSV export of a snapshot pair, complex entries as `re,im` pairs:
/// header `col,x_re_0,x_im_0,...` one row per matrix row, X then Y blocks.
pub fn write_snapshot_csv(path: &std::path::Path, mats: &SnapshotMatrices) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "matrix,row,{}", (0..mats.m()).map(|j| format!("c{j}_re,c{j}_im")).collect::<Vec<_>>().join(","))?;
    for (name, mat) in [("X", &mats.x), ("Y", &mats.y)] {
        for i in 0..mat.nrows() {
            let cells: Vec<String> =
                mat.row(i).iter().map(|c| format!("{:.17e},{:.17e}", c.re, c.im)).collect();
            writeln!(f, "{name},{i},{}", cells.join(","))?;
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::{dmd_rrr, DmdOptions};
    use crate::integrators::integrate_rk4;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn deterministic_collapse_of_ensemble_pairs() {
        // Zero noise, one path: Y(:, j) = f(flow_k(x_j)) exactly — no
        // averaging error on top of the integrator's own flow.
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.0 };
        let obs = ObservableSet::Monomials { max_degree: 3 };
        let points: Vec<Vec<f64>> = vec![vec![-1.0], vec![-0.2], vec![0.4], vec![1.0]];
        let (mats, est) = assemble_ensemble_pairs(
            &m,
            &points,
            &obs,
            50,
            0.01,
            1,
            RngStream::new(0, 0),
            Scheme::Rk4,
        )
        .unwrap();
        for (j, p) in points.iter().enumerate() {
            let flow = integrate_rk4(&m, p, 0.01, 50).unwrap();
            let expect = obs.evaluate(flow.final_state().as_slice().unwrap()).unwrap();
            for i in 0..3 {
                assert_eq!(mats.y[(i, j)], expect[i]);
                assert_eq!(est.standard_error[(i, j)], 0.0);
            }
            // And against the exact flow e^{mu k dt} x.
            let exact = p[0] * (-0.5f64 * 0.5).exp();
            assert!((mats.y[(0, j)].re - exact).abs() < 1e-9);
            let direct = obs.evaluate(p).unwrap();
            assert_eq!(mats.x[(2, j)], direct[2]);
        }
        assert_abs_diff_eq!(mats.dt, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lag_zero_rejected() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.001 };
        let obs = ObservableSet::Monomials { max_degree: 2 };
        let points = vec![vec![0.1], vec![0.4]];
        assert!(assemble_ensemble_pairs(
            &m,
            &points,
            &obs,
            0,
            0.01,
            1,
            RngStream::new(0, 0),
            Scheme::StochasticRk
        )
        .is_err());
    }

    #[test]
    fn time_delayed_single_realization_matches_trajectory() {
        let m = ModelSpec::NoisyRotation { theta: PI / 320.0, delta: 0.01 };
        let obs = ObservableSet::FourierCircle { n1: 3 };
        let mats = assemble_time_delayed(
            &m,
            &[0.0],
            &obs,
            64,
            1.0,
            1,
            RngStream::new(9, 0),
            Scheme::StochasticRk,
        )
        .unwrap();
        let traj = simulate_path(&m, &[0.0], 1.0, 64, RngStream::new(9, 0), Scheme::StochasticRk)
            .unwrap();
        let along = obs.evaluate_along(&traj).unwrap();
        for j in 0..64 {
            for i in 0..obs.len() {
                assert_eq!(mats.x[(i, j)], along[(i, j)]);
                assert_eq!(mats.y[(i, j)], along[(i, j + 1)]);
            }
        }
        assert_eq!(mats.dt, 1.0);
    }

    #[test]
    fn constant_observable_gives_rank_one_and_unit_eigenvalue() {
        let m = ModelSpec::ScalarPitchforkSde { mu: -0.5, sigma: 0.001 };
        // count = 1 keeps only phi_0 = 1.
        let obs = ObservableSet::PitchforkEigenfunctions { mu: -0.5, count: 1 };
        let mats = assemble_time_delayed(
            &m,
            &[0.3],
            &obs,
            32,
            0.01,
            4,
            RngStream::new(4, 0),
            Scheme::StochasticRk,
        )
        .unwrap();
        let res = dmd_rrr(&mats, &DmdOptions::default()).unwrap();
        assert_eq!(res.rank, 1);
        assert_eq!(res.pairs.len(), 1);
        assert!((res.pairs[0].lambda - Complex64::ONE).norm() < 1e-12);
    }

    #[test]
    fn hankel_deterministic_collapse_both_estimators() {
        let m = ModelSpec::VanDerPol { mu: 0.3, eps: 0.0 };
        let spec = HankelSpec {
            n_rows: 12,
            m_cols: 6,
            observable: ObservableSet::SumWithNorm,
            averaging_n: 1,
        };
        let x0 = [2.0, 0.0];
        let avg = assemble_stochastic_hankel(
            &m,
            &x0,
            &spec,
            0.05,
            RngStream::new(0, 0),
            HankelEstimator::AveragedTrajectory,
            Scheme::Rk4,
        )
        .unwrap();
        let pilot = assemble_stochastic_hankel(
            &m,
            &x0,
            &spec,
            0.05,
            RngStream::new(0, 0),
            HankelEstimator::PilotContinuation,
            Scheme::Rk4,
        )
        .unwrap();
        let traj = integrate_rk4(&m, &x0, 0.05, 17).unwrap();
        let obs = ObservableSet::SumWithNorm;
        let along = obs.evaluate_along(&traj).unwrap();
        for i in 0..12 {
            for k in 0..6 {
                let exact = along[(0, i + k)];
                assert!((avg.x[(i, k)] - exact).norm() < 1e-12);
                assert!((pilot.x[(i, k)] - exact).norm() < 1e-9);
                let exact_y = along[(0, i + k + 1)];
                assert!((avg.y[(i, k)] - exact_y).norm() < 1e-12);
                assert!((pilot.y[(i, k)] - exact_y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn standard_error_definition_and_clt_scaling() {
        let m = ModelSpec::OuLinearSde { mu: -0.5, sigma: 0.1 };
        let obs = ObservableSet::Monomials { max_degree: 1 };

        // Definition: se = sample std / sqrt(N) on a tiny case.
        let est = estimate_expectations(
            &m,
            &[1.0],
            &obs,
            5,
            0.01,
            64,
            RngStream::new(1, 0),
            Scheme::StochasticRk,
        )
        .unwrap();
        let mut vals = Vec::new();
        for i in 0..64 {
            let t = simulate_path(&m, &[1.0], 0.01, 5, RngStream::new(1, i), Scheme::StochasticRk)
                .unwrap();
            vals.push(t.final_state()[0]);
        }
        let mean: f64 = vals.iter().sum::<f64>() / 64.0;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
        assert_abs_diff_eq!(est.standard_error[(0, 5)], (var / 64.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(est.values[(0, 5)].re, mean, epsilon = 1e-12);

        // CLT scaling: log-log slope of the standard error vs N near -1/2.
        let mut points = Vec::new();
        for (i, n) in [100usize, 1000, 10000].into_iter().enumerate() {
            let est = estimate_expectations(
                &m,
                &[1.0],
                &obs,
                20,
                0.01,
                n,
                RngStream::new(50 + i as u64, 0),
                Scheme::StochasticRk,
            )
            .unwrap();
            points.push(((n as f64).ln(), est.standard_error[(0, 20)].ln()));
        }
        let nlen = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (nlen * sxy - sx * sy) / (nlen * sxx - sx * sx);
        assert!((slope + 0.5).abs() < 0.15, "CLT slope = {slope}");
    }

    #[test]
    fn ergodic_gram_matrix_approaches_fourier_orthonormality() {
        // Along one noisy-rotation trajectory the empirical Gram of the
        // Fourier dictionary converges to the space average diag(1/2).
        let m = ModelSpec::NoisyRotation { theta: PI / 320.0, delta: 0.01 };
        let n1 = 4;
        let obs = ObservableSet::FourierCircle { n1 };
        let n = 10_000;
        let traj =
            simulate_path(&m, &[0.37], 1.0, n - 1, RngStream::new(23, 0), Scheme::StochasticRk)
                .unwrap();
        let vals = obs.evaluate_along(&traj).unwrap();
        let dim = 2 * n1;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += vals[(i, k)] * vals[(j, k)].conj();
                }
                acc /= n as f64;
                let exact = if i == j { 0.5 } else { 0.0 };
                assert!(
                    (acc - Complex64::new(exact, 0.0)).norm() < 5e-2,
                    "Gram[{i},{j}] = {acc} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn initial_point_sampling() {
        let grid =
            sample_initial_points(PointSampling::UniformGrid, &[(-1.0, 1.0)], 5, RngStream::new(0, 0))
                .unwrap();
        assert_eq!(grid.len(), 5);
        assert_abs_diff_eq!(grid[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(grid[4][0], 1.0, epsilon = 1e-15);

        let rand_pts = sample_initial_points(
            PointSampling::UniformRandom,
            &[(0.0, 1.0), (0.0, 1.0)],
            100,
            RngStream::new(3, 7),
        )
        .unwrap();
        assert_eq!(rand_pts.len(), 100);
        assert!(rand_pts.iter().all(|p| (0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1])));
        // Reproducible.
        let again = sample_initial_points(
            PointSampling::UniformRandom,
            &[(0.0, 1.0), (0.0, 1.0)],
            100,
            RngStream::new(3, 7),
        )
        .unwrap();
        assert_eq!(rand_pts, again);
    }
}
