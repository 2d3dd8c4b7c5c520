//! Ground-truth spectra: closed-form eigenvalues and eigenfunctions for
//! the catalog systems, a finite-difference discretization of the backward
//! Kolmogorov generator for 1-d SDEs, and brute-force expectation oracles
//! used to cross-check the closed forms.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::ModelSpec;

/// Pure eigenfunction evaluator on a state slice.
pub type EigenFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Reference eigenvalues in a documented canonical order (see each
/// constructor), with eigenfunction evaluators where closed forms exist.
pub struct AnalyticSpectrum {
    pub eigenvalues: Vec<Complex64>,
    pub eigenfunctions: Vec<Option<EigenFn>>,
    pub labels: Vec<String>,
    /// Validity caveats, e.g. perturbative accuracy in the noise amplitude.
    pub notes: String,
}

impl AnalyticSpectrum {
    fn new(notes: impl Into<String>) -> Self {
        AnalyticSpectrum {
            eigenvalues: Vec::new(),
            eigenfunctions: Vec::new(),
            labels: Vec::new(),
            notes: notes.into(),
        }
    }

    fn push(&mut self, label: String, ev: Complex64, ef: Option<EigenFn>) {
        self.labels.push(label);
        self.eigenvalues.push(ev);
        self.eigenfunctions.push(ef);
    }
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// One-step stochastic Koopman eigenvalues of the noisy rotation,
/// `lambda_j = sinc(j pi delta) e^{i 2 pi j theta}` with eigenfunctions
/// `e^{i 2 pi j x}`, ordered `j = -j_max..=j_max`. `delta = 0` gives the
/// deterministic unit-circle values.
pub fn rotation_spectrum(theta: f64, delta: f64, j_max: usize) -> AnalyticSpectrum {
    let mut spec = AnalyticSpectrum::new("exact for every delta >= 0");
    for j in -(j_max as i64)..=(j_max as i64) {
        let jf = j as f64;
        let modulus = sinc(jf * PI * delta);
        let ev = Complex64::from_polar(modulus, TAU * jf * theta);
        let ef: EigenFn = Arc::new(move |x: &[f64]| Complex64::from_polar(1.0, TAU * jf * x[0]));
        spec.push(format!("j={j}"), ev, Some(ef));
    }
    spec
}

/// Quantized brute-force companion to [`rotation_spectrum`]: the uniform
/// noise replaced by `q` midpoint levels and the expectation computed by
/// enumeration. Converges to the closed form as `q` grows.
pub fn rotation_spectrum_quantized(theta: f64, delta: f64, j: i64, q: usize) -> Complex64 {
    let jf = j as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..q {
        let w = -delta / 2.0 + (l as f64 + 0.5) * delta / q as f64;
        acc += Complex64::from_polar(1.0, TAU * jf * (theta + w));
    }
    acc / q as f64
}

/// Principal one-step eigenvalues of the discrete linear skew system:
/// `E[A]` has eigenvalues `+-i E[w]`; the n-step values are their n-th
/// powers (independence makes `E[Phi(n)] = E[A]^n`). Eigenfunctions are
/// the linear forms `<x, w_j>`. Order: `+i` branch first.
pub fn discrete_linear_spectrum(p1: f64, value1: f64, value2: f64, n: usize) -> AnalyticSpectrum {
    let mean = p1 * value1 + (1.0 - p1) * value2;
    let base = Complex64::new(0.0, mean);
    let mut spec = AnalyticSpectrum::new("exact; E[A(w)]^n eigenvalues");
    for (label, ev1, w) in [
        ("+i", base, (Complex64::new(0.0, 1.0), Complex64::ONE)),
        ("-i", base.conj(), (Complex64::new(0.0, -1.0), Complex64::ONE)),
    ] {
        let ev = ev1.powu(n as u32);
        // phi(x) = <x, w> = x1 conj(w1) + x2 conj(w2).
        let ef: EigenFn = Arc::new(move |x: &[f64]| {
            Complex64::new(x[0], 0.0) * w.0.conj() + Complex64::new(x[1], 0.0) * w.1.conj()
        });
        spec.push(format!("{label}, n={n}"), ev, Some(ef));
    }
    spec
}

/// Time-dependent principal eigenvalues of the switching linear RDE in the
/// lognormal (CLT) approximation:
/// `lambda_{1,2}(t) = exp((a_hat +- i b) t + sigma_hat^2(t) / 2)` with
/// `a_hat = p1 a1 + (1-p1) a2` and
/// `sigma_hat^2(t) = p1 (1-p1) (a1-a2)^2 switch_dt t`.
/// `clt_valid` is false when fewer than 30 switch intervals fit in `t`.
pub struct SwitchingEigenvalues {
    pub plus: Complex64,
    pub minus: Complex64,
    pub clt_valid: bool,
}

pub fn switching_linear_spectrum(
    a1: f64,
    a2: f64,
    b: f64,
    p1: f64,
    switch_dt: f64,
    t: f64,
) -> SwitchingEigenvalues {
    let a_hat = p1 * a1 + (1.0 - p1) * a2;
    let var_rate = p1 * (1.0 - p1) * (a1 - a2) * (a1 - a2) * switch_dt;
    let sigma2 = var_rate * t;
    let magnitude = (a_hat * t + 0.5 * sigma2).exp();
    SwitchingEigenvalues {
        plus: Complex64::from_polar(magnitude, b * t),
        minus: Complex64::from_polar(magnitude, -b * t),
        clt_valid: t / switch_dt >= 30.0,
    }
}

/// Physicists' Hermite polynomial `H_n` by recurrence.
pub fn hermite(n: usize, z: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0 * z,
        _ => {
            let (mut prev, mut cur) = (1.0, 2.0 * z);
            for k in 1..n {
                let next = 2.0 * z * cur - 2.0 * k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Generator-scale spectra of the SDE and oscillator systems with closed
/// forms, `count` eigenvalues (or index bound) per family:
///
/// * Ornstein-Uhlenbeck (`mu < 0`): `lambda_n = n mu`, `n = 0..count-1`,
///   eigenfunctions `H_n(alpha x)`. The Hermite scaling that makes these
///   exact generator eigenfunctions is `alpha = sqrt(|mu|) / sigma`
///   (deterministic case: plain monomials `x^n`).
/// * pitchfork (`mu < 0`): `lambda_n = n mu` with
///   `phi_n = (x / sqrt(x^2 + |mu|))^n`; exact for `sigma = 0`, and the
///   small-`sigma` reference comes from [`kolmogorov_fd_spectrum`].
/// * Stuart-Landau (`delta > 0`): `omega_0 = gamma - beta delta`;
///   `lambda_{0,n} = -n^2 eps^2 (1 + beta^2) / (2 delta) + i n omega_0`
///   (O(eps^4) accurate) for `n = -count..=count`, and
///   `lambda_{l,n} = -2 l delta + i n omega_0` (O(eps^2)) for `l = 1, 2`.
/// * Van der Pol: lattice `{i k w0} U {-mu + i k w0}`, `k = -count..=count`,
///   with `w0 = 0.9944151` (the computed limit-cycle frequency at
///   `mu = 0.3`; the asymptotic expansion `1 - mu^2/16` is appended to the
///   notes for comparison).
/// * Lotka-Volterra: principal pair = eigenvalues of the Jacobian of the
///   noise-corrected drift (`a1 - sigma1^2/2`, `a2 + sigma2^2/2`) at its
///   fixed point; `sigma = 0` reduces to the deterministic equilibrium.
pub fn sde_spectra(model: &ModelSpec, count: usize) -> Result<AnalyticSpectrum> {
    match *model {
        ModelSpec::OuLinearSde { mu, sigma } => {
            if mu >= 0.0 {
                return Err(Error::invalid("OU spectrum defined for mu < 0"));
            }
            let mut spec = AnalyticSpectrum::new("exact");
            for n in 0..count {
                let ef: EigenFn = if sigma > 0.0 {
                    let alpha = mu.abs().sqrt() / sigma;
                    Arc::new(move |x: &[f64]| Complex64::new(hermite(n, alpha * x[0]), 0.0))
                } else {
                    Arc::new(move |x: &[f64]| Complex64::new(x[0].powi(n as i32), 0.0))
                };
                spec.push(format!("n={n}"), Complex64::new(n as f64 * mu, 0.0), Some(ef));
            }
            Ok(spec)
        }
        ModelSpec::ScalarPitchforkSde { mu, .. } => {
            if mu >= 0.0 {
                return Err(Error::invalid("pitchfork spectrum defined for mu < 0"));
            }
            let mut spec = AnalyticSpectrum::new(
                "exact for sigma = 0; small-sigma reference is the FD oracle",
            );
            for n in 0..count {
                let ef: EigenFn = Arc::new(move |x: &[f64]| {
                    Complex64::new((x[0] / (x[0] * x[0] + mu.abs()).sqrt()).powi(n as i32), 0.0)
                });
                spec.push(format!("n={n}"), Complex64::new(n as f64 * mu, 0.0), Some(ef));
            }
            Ok(spec)
        }
        ModelSpec::StuartLandau { delta, beta, gamma, eps } => {
            let omega0 = gamma - beta * delta;
            let mut spec =
                AnalyticSpectrum::new("l=0 family O(eps^4) accurate, l>0 families O(eps^2)");
            let n_max = count as i64;
            for l in 0..=2i64 {
                for n in -n_max..=n_max {
                    let re = if l == 0 {
                        -((n * n) as f64) * eps * eps * (1.0 + beta * beta) / (2.0 * delta)
                    } else {
                        -2.0 * l as f64 * delta
                    };
                    let ev = Complex64::new(re, n as f64 * omega0);
                    let ef: Option<EigenFn> = if l == 0 {
                        let r_ref = delta.sqrt();
                        Some(Arc::new(move |x: &[f64]| {
                            let phase = n as f64 * (x[1] - beta * (x[0] / r_ref).ln());
                            Complex64::from_polar(1.0, phase)
                        }))
                    } else {
                        None
                    };
                    spec.push(format!("l={l},n={n}"), ev, ef);
                }
            }
            Ok(spec)
        }
        ModelSpec::VanDerPol { mu, .. } => {
            let omega0 = 0.9944151;
            let mut spec = AnalyticSpectrum::new(format!(
                "computed limit-cycle frequency 0.9944151; asymptotic 1 - mu^2/16 = {}",
                1.0 - mu * mu / 16.0
            ));
            let k_max = count as i64;
            for k in -k_max..=k_max {
                spec.push(format!("k w0, k={k}"), Complex64::new(0.0, k as f64 * omega0), None);
            }
            for k in -k_max..=k_max {
                spec.push(
                    format!("-mu + k w0, k={k}"),
                    Complex64::new(-mu, k as f64 * omega0),
                    None,
                );
            }
            Ok(spec)
        }
        ModelSpec::LotkaVolterra { a1, b1, c1, a2, b2, c2, sigma1, sigma2 } => {
            let (x1, x2, lam) = lotka_volterra_principal(a1, b1, c1, a2, b2, c2, sigma1, sigma2)?;
            let mut spec = AnalyticSpectrum::new(format!(
                "Jacobian eigenvalues at the fixed point ({x1}, {x2})"
            ));
            spec.push("+".into(), lam, None);
            spec.push("-".into(), lam.conj(), None);
            Ok(spec)
        }
        _ => Err(Error::UnsupportedKind(format!(
            "sde_spectra covers the SDE/oscillator kinds, got {}",
            model.kind_name()
        ))),
    }
}

/// Fixed point of the noise-corrected Lotka-Volterra drift and the
/// principal eigenvalue (its conjugate completes the pair).
#[allow(clippy::too_many_arguments)]
pub fn lotka_volterra_principal(
    a1: f64,
    b1: f64,
    c1: f64,
    a2: f64,
    b2: f64,
    c2: f64,
    sigma1: f64,
    sigma2: f64,
) -> Result<(f64, f64, Complex64)> {
    let a1e = a1 - sigma1 * sigma1 / 2.0;
    let a2e = a2 + sigma2 * sigma2 / 2.0;
    // c1 x1 + b1 x2 = a1e ; b2 x1 - c2 x2 = a2e.
    let det = -(c1 * c2 + b1 * b2);
    if det == 0.0 {
        return Err(Error::DegenerateData("nullclines do not intersect".into()));
    }
    let x1 = (-a1e * c2 - b1 * a2e) / det;
    let x2 = (c1 * a2e - b2 * a1e) / det;
    if x1 <= 0.0 || x2 <= 0.0 {
        return Err(Error::DegenerateData("fixed point left the open first quadrant".into()));
    }
    // Jacobian of the corrected drift at its own fixed point:
    // [[-c1 x1, -b1 x1], [b2 x2, -c2 x2]].
    let tr = -(c1 * x1 + c2 * x2);
    let dete = x1 * x2 * (c1 * c2 + b1 * b2);
    let disc = tr * tr / 4.0 - dete;
    let lam = if disc >= 0.0 {
        Complex64::new(tr / 2.0 + disc.sqrt(), 0.0)
    } else {
        Complex64::new(tr / 2.0, (-disc).sqrt())
    };
    Ok((x1, x2, lam))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero-flux; preserves the constant eigenfunction at eigenvalue 0.
    Reflecting,
    /// Dirichlet.
    Absorbing,
}

/// FD spectrum of the 1-d backward Kolmogorov generator
/// `L f = a(x) f' + D(x) f''`, `D = sigma^2 / 2`, on `grid_n` nodes over
/// `domain`, second-order flux form. Eigenvalues come out real (every 1-d
/// diffusion generator is symmetrizable by its speed density) and are
/// returned sorted by descending real part.
///
/// `grid_warning` is set when the leading eigenvalues shift by more than
/// 1% under grid doubling.
pub struct FdSpectrum {
    pub eigenvalues: Vec<f64>,
    pub grid_warning: bool,
}

pub fn kolmogorov_fd_spectrum(
    drift: &dyn Fn(f64) -> f64,
    sigma: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    grid_n: usize,
    k_eigs: usize,
    boundary: Boundary,
) -> Result<FdSpectrum> {
    if grid_n < 200 {
        return Err(Error::invalid("grid_n must be at least 200"));
    }
    if !(domain.1 > domain.0) {
        return Err(Error::invalid("domain must be a nondegenerate interval"));
    }
    if k_eigs == 0 {
        return Err(Error::invalid("k_eigs must be at least 1"));
    }

    let coarse = fd_leading_eigenvalues(drift, sigma, domain, grid_n, k_eigs, boundary)?;
    let fine = fd_leading_eigenvalues(drift, sigma, domain, 2 * grid_n, k_eigs, boundary)?;
    let mut grid_warning = false;
    for (c, f) in coarse.iter().zip(&fine) {
        if f.abs() > 1e-10 && (c - f).abs() / f.abs() > 0.01 {
            grid_warning = true;
        }
    }
    Ok(FdSpectrum { eigenvalues: fine, grid_warning })
}

fn fd_leading_eigenvalues(
    drift: &dyn Fn(f64) -> f64,
    sigma: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    grid_n: usize,
    k_eigs: usize,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let (diag, off) = fd_generator_tridiagonal(drift, sigma, domain, grid_n, boundary)?;
    let mut eigs = tridiagonal_eigenvalues(diag, off)?;
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eigs.truncate(k_eigs);
    Ok(eigs)
}

/// Symmetrized tridiagonal representation of the generator. A 1-d
/// generator in flux form reads `L f = (1/m) (p f')'` with
/// `p = exp(int a/D)` and `m = p / D`; conjugating by `diag(sqrt(m))`
/// gives a symmetric matrix with the same spectrum. All weight ratios are
/// assembled in log space so that stiff drift/diffusion ratios neither
/// overflow nor underflow.
fn fd_generator_tridiagonal(
    drift: &dyn Fn(f64) -> f64,
    sigma: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    grid_n: usize,
    boundary: Boundary,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid_n;
    let h = (domain.1 - domain.0) / (n - 1) as f64;
    let x = |i: usize| domain.0 + i as f64 * h;

    // Half-grid values of g = a/D and the running integral I(x) = int g.
    let n_half = 2 * n - 1;
    let mut g = vec![0.0; n_half];
    let mut log_d = vec![0.0; n];
    let mut min_d = f64::INFINITY;
    for j in 0..n_half {
        let xx = domain.0 + j as f64 * h / 2.0;
        let s = sigma(xx);
        let d = 0.5 * s * s;
        min_d = min_d.min(d);
        if j % 2 == 0 {
            log_d[j / 2] = if d > 0.0 { d.ln() } else { f64::NEG_INFINITY };
        }
        g[j] = if d > 0.0 { drift(xx) / d } else { 0.0 };
    }
    if min_d <= 0.0 {
        // Degenerate diffusion: only the zero generator is representable.
        let max_a = (0..n).map(|i| drift(x(i)).abs()).fold(0.0f64, f64::max);
        if max_a == 0.0 && (0..n_half).all(|j| sigma(domain.0 + j as f64 * h / 2.0) == 0.0) {
            return Ok((vec![0.0; n], vec![0.0; n - 1]));
        }
        return Err(Error::Numerical(
            "diffusion must be positive on the whole domain (or the generator zero)".into(),
        ));
    }

    // I at half-steps by trapezoid on the h/2 grid.
    let mut integral = vec![0.0; n_half];
    for j in 1..n_half {
        integral[j] = integral[j - 1] + 0.25 * h * (g[j - 1] + g[j]);
    }
    let i_node = |i: usize| integral[2 * i];
    let i_mid = |i: usize| integral[2 * i + 1]; // between node i and i+1

    let inv_h2 = 1.0 / (h * h);
    let mut off = vec![0.0; n - 1];
    for i in 0..n - 1 {
        // T_{i,i+1} = p_{i+1/2} / (h^2 sqrt(m_i m_{i+1})), assembled in logs.
        let log_t =
            i_mid(i) - 0.5 * (i_node(i) + i_node(i + 1)) + 0.5 * (log_d[i] + log_d[i + 1]);
        off[i] = inv_h2 * log_t.exp();
    }
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let mut v = 0.0;
        if i + 1 < n {
            // p_{i+1/2} / (h^2 m_i)
            v += inv_h2 * (i_mid(i) - i_node(i) + log_d[i]).exp();
        }
        if i > 0 {
            v += inv_h2 * (i_mid(i - 1) - i_node(i) + log_d[i]).exp();
        }
        diag[i] = -v;
    }
    match boundary {
        Boundary::Reflecting => Ok((diag, off)),
        Boundary::Absorbing => {
            if n < 4 {
                return Err(Error::invalid("grid too small for absorbing boundaries"));
            }
            // Dirichlet: drop the boundary rows/columns; the diagonal keeps
            // both half-fluxes, so flux into the removed nodes acts as loss.
            Ok((diag[1..n - 1].to_vec(), off[1..n - 2].to_vec()))
        }
    }
}

/// Apply the FD generator to observable samples `f` on the node grid.
/// Interior entries approximate `a f' + D f''` with `O(h^2)` error.
pub fn fd_generator_apply(
    drift: &dyn Fn(f64) -> f64,
    sigma: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    f: &[f64],
) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 3 {
        return Err(Error::invalid("need at least three samples"));
    }
    let h = (domain.1 - domain.0) / (n - 1) as f64;
    let g = |xx: f64| {
        let s = sigma(xx);
        let d = 0.5 * s * s;
        if d > 0.0 {
            drift(xx) / d
        } else {
            0.0
        }
    };
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let xx = domain.0 + i as f64 * h;
        let s = sigma(xx);
        let d = 0.5 * s * s;
        if d > 0.0 {
            // Flux ratios p_{i+-1/2} / m_i = D_i exp(int_{x_i}^{x_{i+-1/2}} g),
            // with the short integrals done by trapezoid on the half step.
            let ip = 0.25 * h * (g(xx) + g(xx + 0.5 * h));
            let im = 0.25 * h * (g(xx - 0.5 * h) + g(xx));
            let rp = d * ip.exp();
            let rm = d * (-im).exp();
            out[i] = (rp * (f[i + 1] - f[i]) - rm * (f[i] - f[i - 1])) / (h * h);
        } else {
            out[i] = drift(xx) * (f[i + 1] - f[i - 1]) / (2.0 * h);
        }
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    Ok(out)
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit QL
/// algorithm (EISPACK tql1 lineage), eigenvalues only.
pub fn tridiagonal_eigenvalues(mut d: Vec<f64>, off: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::invalid("off-diagonal length must be n - 1"));
    }
    if n == 1 {
        return Ok(d);
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}

/// Differentiable scalar function of the state, used by the RDE product
/// property check.
pub struct DifferentiableFn {
    pub value: EigenFn,
    pub grad: Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>,
}

/// Principal eigenpairs of the switching linear RDE generator
/// `E[A] = a_hat I + [[0, 1], [-b^2, 0]]`: eigenvalues `a_hat +- i b` with
/// eigenfunctions `phi_+- = +- i b x1 + x2`.
pub fn switching_principal_eigenpairs(
    model: &ModelSpec,
) -> Result<[(Complex64, DifferentiableFn); 2]> {
    let &ModelSpec::SwitchingLinearRde { a1, a2, b, p1, .. } = model else {
        return Err(Error::UnsupportedKind("needs switching_linear_rde".into()));
    };
    let a_hat = p1 * a1 + (1.0 - p1) * a2;
    let make = |sign: f64| {
        let lambda = Complex64::new(a_hat, sign * b);
        let ib = Complex64::new(0.0, sign * b);
        let value: EigenFn = Arc::new(move |x: &[f64]| ib * x[0] + Complex64::new(x[1], 0.0));
        let grad = Arc::new(move |_x: &[f64]| vec![ib, Complex64::ONE]);
        (lambda, DifferentiableFn { value, grad })
    };
    Ok([make(1.0), make(-1.0)])
}

/// Verify the RDE generator product rule: for eigenpairs
/// `(lambda_1, phi_1)`, `(lambda_2, phi_2)` of `K^S f = E[F] . grad f`,
/// the product `phi_1 phi_2` is an eigenfunction at `lambda_1 + lambda_2`.
/// Returns the max deviation of `E[F] . grad(phi1 phi2) - (l1+l2) phi1 phi2`
/// over the grid and whether it stays within `tol`.
pub fn generator_product_property_check(
    model: &ModelSpec,
    pair1: (Complex64, &DifferentiableFn),
    pair2: (Complex64, &DifferentiableFn),
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<(bool, f64)> {
    let &ModelSpec::SwitchingLinearRde { a1, a2, b, p1, .. } = model else {
        return Err(Error::UnsupportedKind(
            "the product property check applies to RDE kinds (switching_linear_rde)".into(),
        ));
    };
    let a_hat = p1 * a1 + (1.0 - p1) * a2;
    let (l1, phi1) = pair1;
    let (l2, phi2) = pair2;
    let mut max_dev: f64 = 0.0;
    for x in grid {
        let mean_f = [a_hat * x[0] + x[1], -b * b * x[0] + a_hat * x[1]];
        let v1 = (phi1.value)(x);
        let v2 = (phi2.value)(x);
        let g1 = (phi1.grad)(x);
        let g2 = (phi2.grad)(x);
        // grad(phi1 phi2) = phi2 grad phi1 + phi1 grad phi2.
        let mut lhs = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            lhs += Complex64::new(mean_f[i], 0.0) * (v2 * g1[i] + v1 * g2[i]);
        }
        let rhs = (l1 + l2) * v1 * v2;
        max_dev = max_dev.max((lhs - rhs).norm());
    }
    Ok((max_dev <= tol, max_dev))
}

/// Monte Carlo estimate of `E[exp(int lambda(w(s)) ds)]` for the switching
/// RDE over `n_paths` independent switch sequences; cross-checks the
/// lognormal formula.
#[allow(clippy::too_many_arguments)]
pub fn switching_mc_eigenvalue(
    a1: f64,
    a2: f64,
    b: f64,
    p1: f64,
    switch_dt: f64,
    t: f64,
    n_paths: usize,
    stream: crate::noise::RngStream,
) -> Complex64 {
    use rand::Rng;
    let mut rng = stream.rng();
    let n_full = (t / switch_dt).floor() as usize;
    let partial = t - n_full as f64 * switch_dt;
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..n_paths {
        let mut int_a = 0.0;
        for _ in 0..n_full {
            let a = if rng.gen::<f64>() < p1 { a1 } else { a2 };
            int_a += a * switch_dt;
        }
        if partial > 1e-15 {
            let a = if rng.gen::<f64>() < p1 { a1 } else { a2 };
            int_a += a * partial;
        }
        acc += Complex64::from_polar(int_a.exp(), b * t);
    }
    acc / n_paths as f64
}

/// Export a reference spectrum in the same JSON shape as a DMD summary,
/// so oracle and computed spectra diff directly.
pub fn spectrum_to_json(spec: &AnalyticSpectrum) -> serde_json::Value {
    serde_json::json!({
        "eigenvalues": spec.eigenvalues.iter().map(|c| (c.re, c.im)).collect::<Vec<_>>(),
        "labels": spec.labels,
        "notes": spec.notes,
    })
}
