//! DMD RRR — column scaling, tolerance-based SVD truncation, Rayleigh
//! quotient extraction, Ritz pairs with data-driven residuals — plus the
//! companion-matrix route for Hankel data.
//!
//! Given snapshot matrices `(X, Y)` with `Y ~ K X`:
//!
//! 1. optionally scale both by `D^-1`, `D = diag(||X(:,i)||_2)`;
//! 2. thin SVD `X = U S V*`, truncated at the largest `r` with
//!    `s_r >= s_1 * eps`;
//! 3. Rayleigh quotient `S_r = U_r* Y V_r S_r^-1`;
//! 4. every eigenpair `(lambda, w)` of `S_r` yields the Ritz pair
//!    `(lambda, U_r w)` with residual
//!    `eta = ||(Y V_r S_r^-1) w - lambda U_r w||_2`;
//! 5. pairs with `eta <= eta_0` are retained, the rest are kept in a
//!    diagnostic list.
//!
//! Residuals are reported in the scaled frame: the residual formula is
//! stated after the scaling setup, and scaling commutes with the operator
//! identity `Y = K X`.
//!
//! Retained pairs are sorted by ascending residual, ties broken by
//! descending `|lambda|`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, JobSvd, SVDDC};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotLayout {
    /// Columns pair initial states with their k-step expectations.
    EnsemblePairs,
    /// Columns are consecutive (expected) observable vectors on one grid.
    TimeDelayed,
    /// Time-delayed scalar observations arranged as a Hankel matrix.
    Hankel,
}

/// The `(X, Y)` data pair fed to DMD. `dt` is the time meaning of one
/// application of the estimated operator (`k dt` for ensemble pairs with
/// lag `k`, the sampling step otherwise, `1` for discrete maps).
#[derive(Debug, Clone)]
pub struct SnapshotMatrices {
    pub x: Array2<Complex64>,
    pub y: Array2<Complex64>,
    pub layout: SnapshotLayout,
    pub dt: f64,
}

impl SnapshotMatrices {
    pub fn new(
        x: Array2<Complex64>,
        y: Array2<Complex64>,
        layout: SnapshotLayout,
        dt: f64,
    ) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::invalid(format!(
                "X and Y must share a shape, got {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("snapshot dt must be positive"));
        }
        let finite =
            |m: &Array2<Complex64>| m.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite(&x) || !finite(&y) {
            return Err(Error::invalid("snapshot matrices contain non-finite entries"));
        }
        Ok(SnapshotMatrices { x, y, layout, dt })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DmdOptions {
    /// SVD truncation tolerance: keep singular values `>= sigma_1 * eps`.
    pub eps: f64,
    /// Residual acceptance threshold `eta_0`.
    pub residual_threshold: f64,
    pub scale_columns: bool,
}

impl Default for DmdOptions {
    fn default() -> Self {
        DmdOptions { eps: 1e-12, residual_threshold: 1e-3, scale_columns: true }
    }
}

impl DmdOptions {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        if !(self.residual_threshold > 0.0) {
            return Err(Error::invalid("residual_threshold must be positive"));
        }
        Ok(())
    }
}

/// One eigenvalue candidate with its Ritz vector and residual.
#[derive(Debug, Clone)]
pub struct RitzPair {
    /// Discrete-time eigenvalue (one operator application).
    pub lambda: Complex64,
    /// Unit 2-norm vector in observable space (rows of the data).
    pub ritz_vector: Array1<Complex64>,
    pub residual: f64,
    /// `log(lambda) / dt`, principal branch.
    pub continuous_lambda: Complex64,
}

#[derive(Debug, Clone)]
pub struct DmdResult {
    /// Pairs passing the residual threshold, sorted by ascending residual,
    /// ties by descending `|lambda|`.
    pub pairs: Vec<RitzPair>,
    /// Pairs rejected by the threshold (same ordering).
    pub rejected: Vec<RitzPair>,
    /// SVD truncation rank.
    pub rank: usize,
    /// Singular values of the (scaled) data matrix, descending.
    pub singular_values: Vec<f64>,
    pub scaling_applied: bool,
    /// Columns whose norm was zero and were left unscaled.
    pub zero_norm_columns: Vec<usize>,
    /// Truncated left singular basis (empty for the companion route).
    pub u_r: Array2<Complex64>,
    /// Rayleigh quotient matrix `S_r` (the companion matrix `X^+ Y` for
    /// [`companion_dmd`]).
    pub rayleigh: Array2<Complex64>,
    pub dt: f64,
}

impl DmdResult {
    /// Retained eigenvalues in sorted order.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Retained continuous-time eigenvalues in sorted order.
    pub fn continuous_eigenvalues(&self) -> Vec<Complex64> {
        self.pairs.iter().map(|p| p.continuous_lambda).collect()
    }
}

fn principal_log(lambda: Complex64, dt: f64) -> Complex64 {
    if lambda.norm() == 0.0 {
        Complex64::new(f64::NEG_INFINITY, 0.0)
    } else {
        lambda.ln() / dt
    }
}

fn sort_pairs(pairs: &mut [RitzPair]) {
    pairs.sort_by(|a, b| {
        a.residual
            .partial_cmp(&b.residual)
            .unwrap()
            .then(b.lambda.norm().partial_cmp(&a.lambda.norm()).unwrap())
    });
}

/// Scale columns of `x` and `y` jointly by the X column norms. Zero-norm
/// columns are left unscaled and reported.
fn scale_columns(
    x: &Array2<Complex64>,
    y: &Array2<Complex64>,
) -> (Array2<Complex64>, Array2<Complex64>, Vec<usize>) {
    let mut xs = x.clone();
    let mut ys = y.clone();
    let mut zero_cols = Vec::new();
    for i in 0..x.ncols() {
        let norm = x.column(i).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_cols.push(i);
            continue;
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        xs.column_mut(i).mapv_inplace(|c| c * inv);
        ys.column_mut(i).mapv_inplace(|c| c * inv);
    }
    (xs, ys, zero_cols)
}

/// The DMD RRR algorithm.
pub fn dmd_rrr(data: &SnapshotMatrices, opts: &DmdOptions) -> Result<DmdResult> {
    opts.validate()?;
    let (n, m) = (data.n(), data.m());
    if n < 1 || m < 2 {
        return Err(Error::invalid(format!("need n >= 1 and m >= 2 snapshots, got {n} x {m}")));
    }
    if data.x.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::DegenerateData("X is identically zero".into()));
    }

    let (xs, ys, zero_norm_columns) = if opts.scale_columns {
        scale_columns(&data.x, &data.y)
    } else {
        (data.x.clone(), data.y.clone(), Vec::new())
    };

    let (u, sigma, vt) = xs
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Numerical(format!("SVD of {n}x{m} snapshot matrix failed: {e}")))?;
    let u = u.ok_or_else(|| Error::Numerical("SVD returned no U factor".into()))?;
    let vt = vt.ok_or_else(|| Error::Numerical("SVD returned no V factor".into()))?;

    let s1 = sigma[0];
    if s1 == 0.0 {
        return Err(Error::DegenerateData("all singular values vanish".into()));
    }
    let rank = sigma.iter().take_while(|&&s| s >= s1 * opts.eps).count().max(1);

    let u_r = u.slice(ndarray::s![.., ..rank]).to_owned();
    // B = Y V_r S_r^-1 approximates K U_r.
    let mut v_r = vt.slice(ndarray::s![..rank, ..]).mapv(|c| c.conj()).reversed_axes();
    for (j, mut col) in v_r.columns_mut().into_iter().enumerate() {
        let inv = Complex64::new(1.0 / sigma[j], 0.0);
        col.mapv_inplace(|c| c * inv);
    }
    let b = ys.dot(&v_r);
    let s_r = u_r.t().mapv(|c| c.conj()).dot(&b);

    let (eigvals, eigvecs) = s_r
        .eig()
        .map_err(|e| Error::Numerical(format!("eigendecomposition of S_r failed: {e}")))?;

    let mut pairs = Vec::with_capacity(rank);
    for (i, &lambda) in eigvals.iter().enumerate() {
        let mut w = eigvecs.column(i).to_owned();
        let wn = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        w.mapv_inplace(|c| c / wn);
        let mut ritz = u_r.dot(&w);
        let rn = ritz.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        ritz.mapv_inplace(|c| c / rn);
        let bw = b.dot(&w);
        let residual = bw
            .iter()
            .zip(ritz.iter())
            .map(|(kb, u)| (kb - lambda * u * rn).norm_sqr())
            .sum::<f64>()
            .sqrt();
        pairs.push(RitzPair {
            lambda,
            ritz_vector: ritz,
            residual,
            continuous_lambda: principal_log(lambda, data.dt),
        });
    }

    let (mut retained, mut rejected): (Vec<_>, Vec<_>) =
        pairs.into_iter().partition(|p| p.residual <= opts.residual_threshold);
    sort_pairs(&mut retained);
    sort_pairs(&mut rejected);

    Ok(DmdResult {
        pairs: retained,
        rejected,
        rank,
        singular_values: sigma.to_vec(),
        scaling_applied: opts.scale_columns,
        zero_norm_columns,
        u_r,
        rayleigh: s_r,
        dt: data.dt,
    })
}

/// Least-squares companion matrix `C = X^+ Y` on Hankel data; its
/// eigenvalues approximate the same spectrum as [`dmd_rrr`] (the Rayleigh
/// quotient is similar to the companion matrix). Residuals use the same
/// formula against `Y`: with `w` rescaled so `||X w|| = 1`,
/// `eta = ||Y w - lambda X w||_2`.
pub fn companion_dmd(data: &SnapshotMatrices) -> Result<DmdResult> {
    if data.layout != SnapshotLayout::Hankel {
        return Err(Error::UnsupportedLayout(
            "companion_dmd is defined on Hankel-layout data".into(),
        ));
    }
    let (n, m) = (data.n(), data.m());
    if n < m {
        return Err(Error::invalid(format!(
            "companion route needs at least as many rows as columns, got {n} x {m}"
        )));
    }

    let (u, sigma, vt) = data
        .x
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Numerical(format!("SVD of {n}x{m} Hankel matrix failed: {e}")))?;
    let u = u.ok_or_else(|| Error::Numerical("SVD returned no U factor".into()))?;
    let vt = vt.ok_or_else(|| Error::Numerical("SVD returned no V factor".into()))?;
    let s1 = sigma[0];
    let tol = n as f64 * f64::EPSILON * s1;
    let numerical_rank = sigma.iter().take_while(|&&s| s > tol).count();
    if numerical_rank < m {
        return Err(Error::DegenerateData(format!(
            "Hankel matrix is column rank deficient: numerical rank {numerical_rank} < {m}"
        )));
    }

    // C = V S^-1 U* Y.
    let mut ut_y = u.t().mapv(|c| c.conj()).dot(&data.y);
    for (j, mut row) in ut_y.rows_mut().into_iter().enumerate() {
        let inv = Complex64::new(1.0 / sigma[j], 0.0);
        row.mapv_inplace(|c| c * inv);
    }
    let v = vt.t().mapv(|c| c.conj());
    let companion = v.dot(&ut_y);

    let (eigvals, eigvecs) = companion
        .eig()
        .map_err(|e| Error::Numerical(format!("companion eigendecomposition failed: {e}")))?;

    let mut pairs = Vec::with_capacity(m);
    for (i, &lambda) in eigvals.iter().enumerate() {
        let w = eigvecs.column(i);
        let xw = data.x.dot(&w);
        let yw = data.y.dot(&w);
        let nrm = xw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            continue;
        }
        let residual = yw
            .iter()
            .zip(xw.iter())
            .map(|(y, x)| (y - lambda * x).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / nrm;
        let ritz = xw.mapv(|c| c / nrm);
        pairs.push(RitzPair {
            lambda,
            ritz_vector: ritz,
            residual,
            continuous_lambda: principal_log(lambda, data.dt),
        });
    }
    sort_pairs(&mut pairs);

    Ok(DmdResult {
        pairs,
        rejected: Vec::new(),
        rank: m,
        singular_values: sigma.to_vec(),
        scaling_applied: false,
        zero_norm_columns: Vec::new(),
        u_r: Array2::default((0, 0)),
        rayleigh: companion,
        dt: data.dt,
    })
}

/// Eigenfunction reconstruction, per layout:
///
/// * `TimeDelayed` / `Hankel`: rows of the data index trajectory points,
///   so the Ritz vectors *are* eigenfunction samples along the trajectory;
///   column `i` of the output is `pairs[i].ritz_vector`.
/// * `EnsemblePairs`: an eigenfunction is a functional `phi(x) = <f(x), xi>`
///   on the dictionary; `xi = U_r z` with `z` a left eigenvector of `S_r`
///   (then `xi* K = lambda xi*` in the compressed frame), normalized to
///   unit norm. Column `i` corresponds to `pairs[i]`.
pub fn eigenfunction_coefficients(
    result: &DmdResult,
    data: &SnapshotMatrices,
) -> Result<Array2<Complex64>> {
    let k = result.pairs.len();
    match data.layout {
        SnapshotLayout::TimeDelayed | SnapshotLayout::Hankel => {
            let n = data.n();
            let mut out = Array2::default((n, k));
            for (i, p) in result.pairs.iter().enumerate() {
                if p.ritz_vector.len() != n {
                    return Err(Error::invalid("result does not match the data dimensions"));
                }
                out.column_mut(i).assign(&p.ritz_vector);
            }
            Ok(out)
        }
        SnapshotLayout::EnsemblePairs => {
            if result.u_r.nrows() == 0 {
                return Err(Error::UnsupportedLayout(
                    "ensemble-pairs reconstruction needs the Rayleigh-quotient route".into(),
                ));
            }
            // Left eigenvectors of S_r: eigenvectors of S_r* at conj(lambda).
            let s_h = result.rayleigh.t().mapv(|c| c.conj());
            let (vals, vecs) = s_h
                .eig()
                .map_err(|e| Error::Numerical(format!("left eigenvector solve failed: {e}")))?;
            let mut used = vec![false; vals.len()];
            let mut out = Array2::default((result.u_r.nrows(), k));
            for (i, p) in result.pairs.iter().enumerate() {
                // Match conj(eigenvalue) against the pair's lambda.
                let mut best = None;
                for (j, &v) in vals.iter().enumerate() {
                    if used[j] {
                        continue;
                    }
                    let d = (v.conj() - p.lambda).norm();
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
                let (j, _) = best.ok_or_else(|| {
                    Error::Numerical("no left eigenvector available for a retained pair".into())
                })?;
                used[j] = true;
                let mut xi = result.u_r.dot(&vecs.column(j).to_owned());
                let nrm = xi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                xi.mapv_inplace(|c| c / nrm);
                out.column_mut(i).assign(&xi);
            }
            Ok(out)
        }
    }
}

/// Serializable summary (eigenvalues, residuals, rank, singular values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmdSummary {
    pub rank: usize,
    pub scaling_applied: bool,
    pub eigenvalues: Vec<(f64, f64)>,
    pub continuous_eigenvalues: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub rejected_count: usize,
    pub singular_values: Vec<f64>,
}

impl DmdResult {
    pub fn summary(&self) -> DmdSummary {
        DmdSummary {
            rank: self.rank,
            scaling_applied: self.scaling_applied,
            eigenvalues: self.pairs.iter().map(|p| (p.lambda.re, p.lambda.im)).collect(),
            continuous_eigenvalues: self
                .pairs
                .iter()
                .map(|p| (p.continuous_lambda.re, p.continuous_lambda.im))
                .collect(),
            residuals: self.pairs.iter().map(|p| p.residual).collect(),
            rejected_count: self.rejected.len(),
            singular_values: self.singular_values.clone(),
        }
    }

    /// Binary sidecar with the retained Ritz vectors: `u64 n`, `u64 k`,
    /// then `k` vectors of `n` interleaved `(re, im)` little-endian f64.
    pub fn write_ritz_vectors(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let n = self.pairs.first().map_or(0, |p| p.ritz_vector.len());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&(n as u64).to_le_bytes())?;
        f.write_all(&(self.pairs.len() as u64).to_le_bytes())?;
        for p in &self.pairs {
            for c in p.ritz_vector.iter() {
                f.write_all(&c.re.to_le_bytes())?;
                f.write_all(&c.im.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cm(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_real_matrix(rng: &mut ChaCha12Rng, n: usize, m: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((n, m), |_| cm(rng.gen::<f64>() * 2.0 - 1.0))
    }

    /// Greedy nearest-neighbor matching; returns max pair distance.
    fn match_sets(a: &[Complex64], b: &[Complex64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let mut dists: Vec<(f64, usize, usize)> = Vec::new();
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                dists.push(((x - y).norm(), i, j));
            }
        }
        dists.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
        let mut max_d: f64 = 0.0;
        let mut matched = 0;
        for (d, i, j) in dists {
            if used_a[i] || used_b[j] {
                continue;
            }
            used_a[i] = true;
            used_b[j] = true;
            max_d = max_d.max(d);
            matched += 1;
            if matched == a.len() {
                break;
            }
        }
        max_d
    }

    fn snap(x: Array2<Complex64>, y: Array2<Complex64>, layout: SnapshotLayout) -> SnapshotMatrices {
        SnapshotMatrices::new(x, y, layout, 1.0).unwrap()
    }

    #[test]
    fn identity_data_gives_unit_eigenvalues() {
        let x = Array2::eye(3).mapv(|v: f64| cm(v));
        let data = snap(x.clone(), x, SnapshotLayout::EnsemblePairs);
        let res = dmd_rrr(&data, &DmdOptions::default()).unwrap();
        assert_eq!(res.pairs.len(), 3);
        for p in &res.pairs {
            assert_abs_diff_eq!(p.lambda.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.lambda.im, 0.0, epsilon = 1e-12);
            assert!(p.residual < 1e-12);
        }
    }

    #[test]
    fn scalar_operator_recovered() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = random_real_matrix(&mut rng, 4, 9);
        let y = x.mapv(|c| c * cm(2.0));
        let data = snap(x, y, SnapshotLayout::EnsemblePairs);
        let res = dmd_rrr(&data, &DmdOptions::default()).unwrap();
        assert_eq!(res.pairs.len(), 4);
        for p in &res.pairs {
            assert!((p.lambda - cm(2.0)).norm() < 1e-10);
            assert!(p.residual <= 1e-12);
        }
    }

    #[test]
    fn oracle_equivalence_on_exact_linear_data() {
        // Y = K X with random full-rank K: retained eigenvalues must equal
        // eig(K) to 1e-8.
        for (seed, n) in [(2u64, 3usize), (3, 5), (4, 6)] {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let k_mat = random_real_matrix(&mut rng, n, n);
            let x = random_real_matrix(&mut rng, n, 4 * n + 3);
            let y = k_mat.dot(&x);
            let data = snap(x, y, SnapshotLayout::EnsemblePairs);
            let mut opts = DmdOptions::default();
            opts.residual_threshold = 1e-6;
            let res = dmd_rrr(&data, &opts).unwrap();
            assert_eq!(res.pairs.len(), n, "all eigenvalues retained");
            let (reference, _) = k_mat.eig().unwrap();
            let max_d = match_sets(&res.eigenvalues(), &reference.to_vec());
            assert!(max_d < 1e-8, "n = {n}: max eigenvalue deviation {max_d}");
        }
    }

    #[test]
    fn residuals_recompute_from_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let k_mat = random_real_matrix(&mut rng, 5, 5);
        let x = random_real_matrix(&mut rng, 5, 24);
        // Perturb Y so residuals are nonzero.
        let mut y = k_mat.dot(&x);
        y.mapv_inplace(|c| c + cm(1e-3 * (c.re * 17.0).sin()));
        let data = snap(x, y, SnapshotLayout::EnsemblePairs);
        let mut opts = DmdOptions::default();
        opts.residual_threshold = 1e9; // keep everything
        let res = dmd_rrr(&data, &opts).unwrap();

        // Independent recomputation of B = Y_s V_r S_r^-1 from the inputs.
        let (xs, ys, _) = super::scale_columns(&data.x, &data.y);
        let (_, sigma, vt) = xs.svddc(JobSvd::Some).unwrap();
        let vt = vt.unwrap();
        let mut v_r = vt.slice(ndarray::s![..res.rank, ..]).mapv(|c| c.conj()).reversed_axes();
        for (j, mut col) in v_r.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|c| c / cm(sigma[j]));
        }
        let b = ys.dot(&v_r);

        for p in &res.pairs {
            let norm: f64 = p.ritz_vector.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "ritz vector norm {norm}");
            // w = U_r* u (u = U_r w and U_r has orthonormal columns).
            let w = res.u_r.t().mapv(|c| c.conj()).dot(&p.ritz_vector);
            let bw = b.dot(&w);
            let eta: f64 = bw
                .iter()
                .zip(p.ritz_vector.iter())
                .map(|(kb, u)| (kb - p.lambda * u).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((eta - p.residual).abs() < 1e-10, "eta {eta} vs stored {}", p.residual);
        }
    }

    #[test]
    fn retained_eigenvalues_invariant_under_joint_column_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let k_mat = random_real_matrix(&mut rng, 4, 4);
        let x = random_real_matrix(&mut rng, 4, 20);
        let y = k_mat.dot(&x);
        let data = snap(x.clone(), y.clone(), SnapshotLayout::EnsemblePairs);
        let res_a = dmd_rrr(&data, &DmdOptions::default()).unwrap();

        let mut xd = x;
        let mut yd = y;
        for j in 0..xd.ncols() {
            let d = cm(0.5 + 1.5 * rng.gen::<f64>());
            xd.column_mut(j).mapv_inplace(|c| c * d);
            yd.column_mut(j).mapv_inplace(|c| c * d);
        }
        let res_b =
            dmd_rrr(&snap(xd, yd, SnapshotLayout::EnsemblePairs), &DmdOptions::default()).unwrap();
        let max_d = match_sets(&res_a.eigenvalues(), &res_b.eigenvalues());
        assert!(max_d < 1e-8, "eigenvalue multiset moved by {max_d} under joint scaling");
    }

    #[test]
    fn truncation_rank_monotone_in_eps() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        // Give the data a spread of singular scales.
        let mut x = random_real_matrix(&mut rng, 6, 30);
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|c| c * cm(10f64.powi(-(i as i32))));
        }
        let y = x.clone();
        let mut prev_rank = 0;
        for eps in [1e-2, 1e-5, 1e-8, 1e-12] {
            let opts = DmdOptions { eps, ..DmdOptions::default() };
            let res = dmd_rrr(&snap(x.clone(), y.clone(), SnapshotLayout::EnsemblePairs), &opts)
                .unwrap();
            assert!(res.rank >= prev_rank, "rank decreased when eps shrank");
            prev_rank = res.rank;
        }
    }

    #[test]
    fn zero_x_is_degenerate() {
        let x: Array2<Complex64> = Array2::default((3, 4));
        let y = Array2::from_elem((3, 4), cm(1.0));
        let data = snap(x, y, SnapshotLayout::EnsemblePairs);
        assert!(matches!(dmd_rrr(&data, &DmdOptions::default()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn zero_norm_columns_are_flagged_not_scaled() {
        let x = array![[cm(1.0), cm(0.0), cm(2.0)], [cm(0.0), cm(0.0), cm(1.0)]];
        let y = x.clone();
        let res = dmd_rrr(&snap(x, y, SnapshotLayout::EnsemblePairs), &DmdOptions::default())
            .unwrap();
        assert_eq!(res.zero_norm_columns, vec![1]);
    }

    fn krylov_hankel(a: &Array2<Complex64>, x0: &Array1<Complex64>, n: usize, m: usize) -> SnapshotMatrices {
        // Scalar observable f = sum of coordinates along the orbit of a.
        let total = n + m;
        let mut vals = Vec::with_capacity(total);
        let mut x = x0.clone();
        for _ in 0..total {
            vals.push(x.sum());
            x = a.dot(&x);
        }
        let xm = Array2::from_shape_fn((n, m), |(i, k)| vals[i + k]);
        let ym = Array2::from_shape_fn((n, m), |(i, k)| vals[i + k + 1]);
        SnapshotMatrices::new(xm, ym, SnapshotLayout::Hankel, 1.0).unwrap()
    }

    #[test]
    fn companion_matches_direct_eigendecomposition() {
        let a = array![
            [cm(0.9), cm(0.1), cm(0.0)],
            [cm(-0.1), cm(0.8), cm(0.05)],
            [cm(0.0), cm(0.02), cm(0.7)]
        ];
        let x0 = array![cm(1.0), cm(0.4), cm(-0.3)];
        let data = krylov_hankel(&a, &x0, 12, 3);
        let res = companion_dmd(&data).unwrap();
        let (reference, _) = a.eig().unwrap();
        let max_d = match_sets(&res.eigenvalues(), &reference.to_vec());
        assert!(max_d < 1e-8, "companion eigenvalues off by {max_d}");
    }

    #[test]
    fn companion_rank_one_geometric_sequence() {
        // Sequence f, lambda f, lambda^2 f: the 1x1 companion is lambda.
        let lambda: f64 = 0.85;
        let n = 6;
        let xm = Array2::from_shape_fn((n, 1), |(i, _)| cm(2.0 * lambda.powi(i as i32)));
        let ym = Array2::from_shape_fn((n, 1), |(i, _)| cm(2.0 * lambda.powi(i as i32 + 1)));
        let data = SnapshotMatrices::new(xm, ym, SnapshotLayout::Hankel, 1.0).unwrap();
        let res = companion_dmd(&data).unwrap();
        assert_eq!(res.pairs.len(), 1);
        assert_abs_diff_eq!(res.pairs[0].lambda.re, lambda, epsilon = 1e-12);
    }

    #[test]
    fn companion_agrees_with_dmd_rrr_on_hankel_data() {
        let a = array![[cm(0.95), cm(0.2)], [cm(-0.2), cm(0.9)]];
        let x0 = array![cm(1.0), cm(0.0)];
        let data = krylov_hankel(&a, &x0, 40, 2);
        let comp = companion_dmd(&data).unwrap();
        let rrr = dmd_rrr(&data, &DmdOptions { residual_threshold: 1.0, ..Default::default() })
            .unwrap();
        let max_d = match_sets(&comp.eigenvalues(), &rrr.eigenvalues());
        assert!(max_d < 1e-6, "companion vs RRR disagreement {max_d}");
    }

    #[test]
    fn companion_rejects_rank_deficiency_and_wrong_layout() {
        let xm = Array2::from_elem((5, 2), cm(1.0));
        let ym = xm.clone();
        let data = SnapshotMatrices::new(xm, ym, SnapshotLayout::Hankel, 1.0).unwrap();
        assert!(matches!(companion_dmd(&data), Err(Error::DegenerateData(_))));

        let x = Array2::eye(3).mapv(|v: f64| cm(v));
        let data = snap(x.clone(), x, SnapshotLayout::EnsemblePairs);
        assert!(matches!(companion_dmd(&data), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn identity_data_has_constant_eigenfunction() {
        // Constant scalar observable along a trajectory: the single Ritz
        // vector is the constant vector.
        let xm = Array2::from_elem((6, 5), cm(1.0));
        let ym = xm.clone();
        let data = SnapshotMatrices::new(xm, ym, SnapshotLayout::TimeDelayed, 1.0).unwrap();
        let res = dmd_rrr(&data, &DmdOptions::default()).unwrap();
        assert_eq!(res.pairs.len(), 1);
        let funcs = eigenfunction_coefficients(&res, &data).unwrap();
        let first = funcs[(0, 0)];
        for i in 0..6 {
            assert!((funcs[(i, 0)] - first).norm() < 1e-12);
        }
        assert_abs_diff_eq!(res.pairs[0].lambda.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ensemble_layout_left_eigenfunctions_diagonalize_k() {
        // K diagonal in a known frame: phi_j(x) = <f(x), xi_j> must satisfy
        // xi* K = lambda xi*.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let k_mat = random_real_matrix(&mut rng, 4, 4);
        let x = random_real_matrix(&mut rng, 4, 25);
        let y = k_mat.dot(&x);
        let data = snap(x, y, SnapshotLayout::EnsemblePairs);
        let res = dmd_rrr(&data, &DmdOptions { residual_threshold: 1e-6, ..Default::default() })
            .unwrap();
        let xi = eigenfunction_coefficients(&res, &data).unwrap();
        for (i, p) in res.pairs.iter().enumerate() {
            let xi_i = xi.column(i).to_owned();
            let lhs = k_mat.t().mapv(|c| c.conj()).dot(&xi_i);
            let rhs = xi_i.mapv(|c| c * p.lambda.conj());
            let err: f64 =
                lhs.iter().zip(rhs.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-8, "left eigenvector identity violated by {err}");
        }
    }
}
