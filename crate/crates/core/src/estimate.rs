//! Monte Carlo estimates with per-sample random streams.
//!
//! Sample `i` draws from stream `i` of a ChaCha8 generator keyed by the seed,
//! so it is a pure function of `(seed, i)`. Samples are accumulated in
//! fixed-size blocks that are merged in index order, which makes every
//! estimate bit-identical across thread counts.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SampleRng = ChaCha8Rng;

const BLOCK: u64 = 512;

/// Generator for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent seed for a named sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streaming mean and covariance (Welford, merged with Chan's formula).
#[derive(Clone, Debug)]
pub struct Accumulator {
    n: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    nonfinite: u64,
}

impl Accumulator {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: DVector::zeros(dim), m2: DMatrix::zeros(dim, dim), nonfinite: 0 }
    }

    pub fn push(&mut self, x: &[f64]) {
        if x.iter().any(|v| !v.is_finite()) {
            self.nonfinite += 1;
            return;
        }
        self.n += 1;
        let n = self.n as f64;
        let d = self.mean.len();
        let mut delta = DVector::zeros(d);
        for i in 0..d {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..d {
            let di = x[i] - self.mean[i];
            for j in 0..d {
                self.m2[(i, j)] += delta[j] * di;
            }
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.nonfinite += other.nonfinite;
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            self.n = other.n;
            self.mean = other.mean.clone();
            self.m2 = other.m2.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / n);
        self.m2 += &other.m2 + &delta * delta.transpose() * (na * nb / n);
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self, seed: u64) -> MCEstimate {
        let d = self.mean.len();
        let total = self.n + self.nonfinite;
        if self.nonfinite > 0 {
            return MCEstimate {
                mean: vec![f64::INFINITY; d],
                stderr: vec![f64::INFINITY; d],
                cov: DMatrix::from_element(d, d, f64::INFINITY),
                n: total,
                seed,
                nonfinite: self.nonfinite,
            };
        }
        let cov = if self.n > 1 {
            &self.m2 / ((self.n - 1) as f64 * self.n as f64)
        } else {
            DMatrix::zeros(d, d)
        };
        let stderr = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
        MCEstimate { mean: self.mean.iter().copied().collect(), stderr, cov, n: total, seed, nonfinite: 0 }
    }
}

/// Monte Carlo result. `cov` is the covariance of the mean vector.
#[derive(Clone, Debug)]
pub struct MCEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub n: u64,
    pub seed: u64,
    /// Samples with a non-finite value; any such sample makes the mean
    /// infinite.
    pub nonfinite: u64,
}

impl MCEstimate {
    pub fn exact(values: Vec<f64>, n: u64, seed: u64) -> Self {
        let d = values.len();
        Self { mean: values, stderr: vec![0.0; d], cov: DMatrix::zeros(d, d), n, seed, nonfinite: 0 }
    }

    /// A derived scalar with a given standard error.
    pub fn derived(mean: f64, stderr: f64, n: u64, seed: u64) -> Self {
        Self {
            mean: vec![mean],
            stderr: vec![stderr],
            cov: DMatrix::from_element(1, 1, stderr * stderr),
            n,
            seed,
            nonfinite: 0,
        }
    }

    pub fn scalar(&self) -> f64 {
        self.mean[0]
    }

    pub fn se(&self) -> f64 {
        self.stderr[0]
    }

    pub fn is_finite(&self) -> bool {
        self.nonfinite == 0 && self.mean.iter().all(|m| m.is_finite())
    }

    /// Standard error of the linear combination `Σ c_i mean_i`.
    pub fn linear_se(&self, c: &[f64]) -> f64 {
        let v = DVector::from_column_slice(c);
        (v.transpose() * &self.cov * &v)[(0, 0)].max(0.0).sqrt()
    }

    /// Keeps only the listed components.
    pub fn select(&self, idx: &[usize]) -> MCEstimate {
        MCEstimate {
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            stderr: idx.iter().map(|&i| self.stderr[i]).collect(),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]),
            n: self.n,
            seed: self.seed,
            nonfinite: self.nonfinite,
        }
    }
}

/// Runs `n` samples of an `out_dim`-dimensional statistic in parallel.
/// `sample(i, rng, out)` must fill `out` from `rng` alone.
pub fn run_mc<F>(n: u64, seed: u64, out_dim: usize, sample: F) -> MCEstimate
where
    F: Fn(u64, &mut SampleRng, &mut [f64]) + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Accumulator> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::new(out_dim);
            let mut buf = vec![0.0; out_dim];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = sample_rng(seed, i);
                buf.iter_mut().for_each(|x| *x = 0.0);
                sample(i, &mut rng, &mut buf);
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(out_dim);
    for p in &parts {
        total.merge(p);
    }
    total.finish(seed)
}

/// Delta-method standard error of `g(m)` for a scalar map with derivative
/// `dg` at the mean.
pub fn delta_se(se: f64, dg: f64) -> f64 {
    (dg * se).abs()
}

/// `(x - y) / sqrt(se_x² + se_y²)`; infinite when both errors vanish and
/// the values differ.
pub fn z_score(x: f64, se_x: f64, y: f64, se_y: f64) -> f64 {
    let s = (se_x * se_x + se_y * se_y).sqrt();
    if s == 0.0 {
        if x == y {
            0.0
        } else {
            (x - y).signum() * f64::INFINITY
        }
    } else {
        (x - y) / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn accumulator_matches_two_pass() {
        let xs: Vec<[f64; 2]> = (0..1000).map(|i| {
            let t = i as f64 * 0.37;
            [t.sin(), t.cos() * 2.0 + 1.0]
        }).collect();
        let mut acc = Accumulator::new(2);
        let mut a2 = Accumulator::new(2);
        let mut b2 = Accumulator::new(2);
        for (i, x) in xs.iter().enumerate() {
            acc.push(x);
            if i < 377 { a2.push(x) } else { b2.push(x) }
        }
        a2.merge(&b2);
        let e1 = acc.finish(0);
        let e2 = a2.finish(0);
        let m0: f64 = xs.iter().map(|x| x[0]).sum::<f64>() / 1000.0;
        let m1: f64 = xs.iter().map(|x| x[1]).sum::<f64>() / 1000.0;
        let c01: f64 = xs.iter().map(|x| (x[0] - m0) * (x[1] - m1)).sum::<f64>() / 999.0 / 1000.0;
        assert!((e1.mean[0] - m0).abs() < 1e-14);
        assert!((e1.cov[(0, 1)] - c01).abs() < 1e-15);
        assert!((e2.cov[(0, 1)] - c01).abs() < 1e-15);
        assert!((e2.mean[1] - m1).abs() < 1e-14);
    }

    #[test]
    fn deterministic_across_pools() {
        let f = |_: u64, rng: &mut SampleRng, out: &mut [f64]| {
            out[0] = rng.random::<f64>();
        };
        let a = run_mc(5000, 11, 1, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_mc(5000, 11, 1, f));
        assert_eq!(a.mean[0].to_bits(), b.mean[0].to_bits());
        assert_eq!(a.stderr[0].to_bits(), b.stderr[0].to_bits());
        assert!((a.mean[0] - 0.5).abs() < 4.0 * a.stderr[0]);
    }

    #[test]
    fn nonfinite_samples_make_the_mean_infinite() {
        let e = run_mc(100, 1, 1, |i, _, out| out[0] = if i == 7 { f64::INFINITY } else { 1.0 });
        assert!(!e.is_finite());
        assert_eq!(e.nonfinite, 1);
    }
}
