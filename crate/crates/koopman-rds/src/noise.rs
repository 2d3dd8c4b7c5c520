//! Deterministic, seedable generation of all random inputs: Wiener
//! increments, i.i.d. discrete draws and piecewise-constant switching
//! signals.
//!
//! Every generated object is a pure function of `(seed, stream_id,
//! shape parameters)`. Streams are backed by ChaCha12, a counter-based
//! generator whose 64-bit stream parameter gives independent sequences
//! without shared mutable state, so ensembles parallelize with bit-exact
//! reproducibility under any thread count. Gaussian draws use the
//! ziggurat method of `rand_distr::StandardNormal` (fixed here; we need
//! statistical reproducibility per seed, not cross-platform bit equality
//! of fixtures).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle for one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Same seed, shifted stream id. Used for per-trajectory splitting.
    pub fn substream(self, offset: u64) -> Self {
        RngStream { seed: self.seed, stream_id: self.stream_id.wrapping_add(offset) }
    }

    /// Instantiate the generator positioned at the start of this stream.
    pub fn rng(self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Matrix of independent `N(0, dt)` increments, one row per noise channel.
#[derive(Debug, Clone)]
pub struct WienerIncrements {
    pub dt: f64,
    /// `[r_dims, n_steps]`, entry `(i, k)` is the increment of channel `i`
    /// over step `k`.
    pub increments: Array2<f64>,
}

/// Draw the increments of an `r_dims`-dimensional Wiener process over
/// `n_steps` uniform steps of length `dt`.
pub fn gaussian_increments(
    stream: RngStream,
    r_dims: usize,
    n_steps: usize,
    dt: f64,
) -> Result<WienerIncrements> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if r_dims == 0 || n_steps == 0 {
        return Err(Error::invalid("r_dims and n_steps must be at least 1"));
    }
    let mut rng = stream.rng();
    let scale = dt.sqrt();
    let increments = Array2::from_shape_fn((r_dims, n_steps), |_| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    });
    Ok(WienerIncrements { dt, increments })
}

/// A finite discrete distribution given as `(value, probability)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub pairs: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("distribution needs at least one outcome"));
        }
        let total: f64 = pairs.iter().map(|(_, p)| p).sum();
        if pairs.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1 within 1e-12, got {total}"
            )));
        }
        Ok(DiscreteDistribution { pairs })
    }

    /// Two-outcome distribution `P(v1) = p1`, `P(v2) = 1 - p1`.
    pub fn bernoulli_pair(v1: f64, v2: f64, p1: f64) -> Result<Self> {
        DiscreteDistribution::new(vec![(v1, p1), (v2, 1.0 - p1)])
    }

    pub fn mean(&self) -> f64 {
        self.pairs.iter().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pairs.iter().map(|(v, p)| p * (v - m) * (v - m)).sum()
    }

    /// Inverse-CDF sample from a uniform variate in `[0, 1)`.
    fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.pairs {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.pairs.last().unwrap().0
    }
}

/// i.i.d. draws from a discrete distribution via inverse transform.
pub fn discrete_iid(stream: RngStream, dist: &DiscreteDistribution, n: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| dist.quantile(rng.gen::<f64>())).collect()
}

/// i.i.d. draws uniform on `[-width/2, width/2]` via inverse transform.
/// `width = 0` yields all zeros (the deterministic limit).
pub fn uniform_centered(stream: RngStream, width: f64, n: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| (rng.gen::<f64>() - 0.5) * width).collect()
}

/// Piecewise-constant signal `w(t) = values[i]` on `((i)dt_s, (i+1)dt_s]`.
#[derive(Debug, Clone)]
pub struct SwitchingSignal {
    pub values: Vec<f64>,
    pub switch_dt: f64,
}

impl SwitchingSignal {
    /// Draw `n_switches` i.i.d. values from `dist`.
    pub fn sample(
        stream: RngStream,
        dist: &DiscreteDistribution,
        n_switches: usize,
        switch_dt: f64,
    ) -> Result<Self> {
        if !(switch_dt > 0.0) {
            return Err(Error::invalid("switch_dt must be positive"));
        }
        Ok(SwitchingSignal { values: discrete_iid(stream, dist, n_switches), switch_dt })
    }

    /// Value at time `t`, with left-open/right-closed intervals: a switch
    /// instant `t = i * switch_dt` still belongs to the interval ending
    /// there.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let q = t / self.switch_dt;
        let f = q.floor();
        let idx = if q - f < 1e-9 { (f as usize).saturating_sub(1) } else { f as usize };
        self.values[idx.min(self.values.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_is_bit_identical() {
        let s = RngStream::new(7, 3);
        let a = gaussian_increments(s, 2, 64, 0.01).unwrap();
        let b = gaussian_increments(s, 2, 64, 0.01).unwrap();
        assert_eq!(a.increments, b.increments);
    }

    #[test]
    fn distinct_streams_differ_and_are_uncorrelated() {
        let n = 10_000;
        let a = gaussian_increments(RngStream::new(1, 0), 1, n, 1.0).unwrap();
        let b = gaussian_increments(RngStream::new(1, 1), 1, n, 1.0).unwrap();
        assert_ne!(a.increments, b.increments);
        let mut corr = 0.0;
        for k in 0..n {
            corr += a.increments[(0, k)] * b.increments[(0, k)];
        }
        corr /= n as f64;
        // Correlation of independent unit normals: std 1/sqrt(n), 3-sigma band.
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn increment_variance_matches_dt() {
        // Two-sided chi-square bound for the sample variance of 1e5 draws of
        // N(0, 0.01): var/dt in [1 - 3*sqrt(2/n), 1 + 3*sqrt(2/n)] covers
        // [0.0095, 0.0105] comfortably.
        let n = 100_000;
        let dt = 0.01;
        let w = gaussian_increments(RngStream::new(1, 0), 1, n, dt).unwrap();
        let mean: f64 = w.increments.row(0).sum() / n as f64;
        let var: f64 =
            w.increments.row(0).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!((0.0095..=0.0105).contains(&var), "var = {var}");
        assert!(mean.abs() < 3.0 * (dt / n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn rejects_bad_shapes_and_dt() {
        assert!(gaussian_increments(RngStream::new(0, 0), 2, 0, 0.1).is_err());
        assert!(gaussian_increments(RngStream::new(0, 0), 0, 5, 0.1).is_err());
        assert!(gaussian_increments(RngStream::new(0, 0), 1, 5, 0.0).is_err());
        assert!(gaussian_increments(RngStream::new(0, 0), 1, 5, -1.0).is_err());
    }

    #[test]
    fn discrete_iid_frequency_in_binomial_band() {
        let dist = DiscreteDistribution::bernoulli_pair(1.0, 2.0, 0.75).unwrap();
        let n = 10_000;
        let draws = discrete_iid(RngStream::new(5, 0), &dist, n);
        let freq1 = draws.iter().filter(|&&v| v == 1.0).count() as f64 / n as f64;
        // 3-sigma binomial band around 0.75: +-3*sqrt(0.75*0.25/1e4) = 0.013.
        assert!((0.737..=0.763).contains(&freq1), "freq = {freq1}");
    }

    #[test]
    fn degenerate_distribution_is_constant() {
        let dist = DiscreteDistribution::new(vec![(1.0, 1.0)]).unwrap();
        assert!(discrete_iid(RngStream::new(0, 0), &dist, 100).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(DiscreteDistribution::new(vec![(1.0, 0.6), (2.0, 0.5)]).is_err());
        assert!(DiscreteDistribution::new(vec![(1.0, -0.1), (2.0, 1.1)]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn uniform_centered_mean_within_clt_band() {
        let n = 100_000;
        let delta = 0.01;
        let draws = uniform_centered(RngStream::new(9, 2), delta, n);
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let sigma = delta / 12f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean = {mean}");
        assert!(draws.iter().all(|v| v.abs() <= delta / 2.0));
    }

    #[test]
    fn switching_signal_interval_convention() {
        let sig = SwitchingSignal { values: vec![10.0, 20.0, 30.0], switch_dt: 0.5 };
        assert_eq!(sig.value_at(0.0), 10.0);
        assert_eq!(sig.value_at(0.25), 10.0);
        // Right-closed: the switch instant belongs to the earlier interval.
        assert_eq!(sig.value_at(0.5), 10.0);
        assert_eq!(sig.value_at(0.50001), 20.0);
        assert_eq!(sig.value_at(1.0), 20.0);
        assert_eq!(sig.value_at(1.2), 30.0);
        // Past the sampled horizon the last value holds.
        assert_eq!(sig.value_at(99.0), 30.0);
    }
}
