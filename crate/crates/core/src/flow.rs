//! The deterministic flow `T_{s,t}` of `dT/dt = A_t T` and the matrices
//! `σ_s⁻¹ T_s` entering the derivative formulae.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum DriftMatrix {
    Constant(DMatrix<f64>),
    /// `A_u = diag(a + b u)`.
    LinearInTimeDiag { a: DVector<f64>, b: DVector<f64> },
    TimeDependent(MatrixFn),
}

#[derive(Clone)]
pub enum NoiseMatrix {
    Constant(DMatrix<f64>),
    TimeDependent(MatrixFn),
}

impl fmt::Debug for DriftMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftMatrix::Constant(m) => write!(f, "Constant({m:?})"),
            DriftMatrix::LinearInTimeDiag { a, b } => write!(f, "LinearInTimeDiag {{ a: {a:?}, b: {b:?} }}"),
            DriftMatrix::TimeDependent(_) => write!(f, "TimeDependent(..)"),
        }
    }
}

impl fmt::Debug for NoiseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMatrix::Constant(m) => write!(f, "Constant({m:?})"),
            NoiseMatrix::TimeDependent(_) => write!(f, "TimeDependent(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub dim: usize,
    pub a: DriftMatrix,
    pub sigma: NoiseMatrix,
    /// `α` with `A_s ⪯ α I`.
    pub alpha_bound: f64,
    /// `λ` with `‖σ_s⁻¹‖ <= λ`.
    pub lambda_bound: f64,
    /// RK4 steps over a unit of time for time-dependent `A`.
    pub rk_steps: usize,
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn symmetric_part_max_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.max()
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

impl FlowSpec {
    /// Constant coefficients with the tightest bounds `α = λ_max(sym A)`,
    /// `λ = ‖σ⁻¹‖`.
    pub fn constant(a: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Domain("A and σ must be square of equal size".into()));
        }
        let inv = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("σ is not invertible".into()))?;
        Ok(Self {
            dim: d,
            alpha_bound: symmetric_part_max_eig(&a),
            lambda_bound: op_norm(&inv),
            a: DriftMatrix::Constant(a),
            sigma: NoiseMatrix::Constant(sigma),
            rk_steps: 4096,
        })
    }

    pub fn scalar(a: f64, sigma: f64) -> Result<Self> {
        Self::constant(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, sigma))
    }

    /// `A_u = diag(a + b u)` with constant `σ`; bounds are taken over
    /// `[0, t_max]`.
    pub fn linear_in_time_diag(a: DVector<f64>, b: DVector<f64>, sigma: DMatrix<f64>, t_max: f64) -> Result<Self> {
        let d = a.len();
        if b.len() != d || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Domain("dimension mismatch in linear-in-time flow".into()));
        }
        let inv = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("σ is not invertible".into()))?;
        let alpha = (0..d)
            .map(|i| a[i].max(a[i] + b[i] * t_max))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            dim: d,
            alpha_bound: alpha,
            lambda_bound: op_norm(&inv),
            a: DriftMatrix::LinearInTimeDiag { a, b },
            sigma: NoiseMatrix::Constant(sigma),
            rk_steps: 4096,
        })
    }

    pub fn a_at(&self, u: f64) -> DMatrix<f64> {
        match &self.a {
            DriftMatrix::Constant(m) => m.clone(),
            DriftMatrix::LinearInTimeDiag { a, b } => DMatrix::from_diagonal(&(a + b * u)),
            DriftMatrix::TimeDependent(f) => f(u),
        }
    }

    pub fn sigma_at(&self, s: f64) -> DMatrix<f64> {
        match &self.sigma {
            NoiseMatrix::Constant(m) => m.clone(),
            NoiseMatrix::TimeDependent(f) => f(s),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.a, DriftMatrix::Constant(_))
    }

    /// Checks invertibility of `σ` and the two bounds at `samples` times in
    /// `[0, t_max]`; returns the list of violations.
    pub fn validate(&self, t_max: f64, samples: usize) -> Vec<String> {
        let mut out = Vec::new();
        let n = samples.max(1);
        for i in 0..=n {
            let s = t_max * i as f64 / n as f64;
            let sig = self.sigma_at(s);
            let sv = sig.clone().svd(false, false).singular_values;
            let (mx, mn) = (sv.max(), sv.min());
            if !(mn > 0.0) || mx / mn >= 1e12 {
                out.push(format!("σ is ill-conditioned at s = {s}"));
                continue;
            }
            if 1.0 / mn > self.lambda_bound + 1e-9 {
                out.push(format!("‖σ⁻¹‖ = {} exceeds λ = {} at s = {s}", 1.0 / mn, self.lambda_bound));
            }
            let e = symmetric_part_max_eig(&self.a_at(s));
            if e > self.alpha_bound + 1e-9 {
                out.push(format!("A_s exceeds α = {} (value {e}) at s = {s}", self.alpha_bound));
            }
        }
        out
    }
}

/// Matrix exponential by scaling and squaring with a degree-13 Taylor
/// polynomial.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm1 > 0.5 {
        squarings = (norm1 / 0.5).log2().ceil() as u32;
    }
    let scaled = m / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=13 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn rk4_step(spec: &FlowSpec, u: f64, h: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
    let k1 = spec.a_at(u) * y;
    let mid = spec.a_at(u + 0.5 * h);
    let k2 = &mid * (y + &k1 * (0.5 * h));
    let k3 = &mid * (y + &k2 * (0.5 * h));
    let k4 = spec.a_at(u + h) * (y + &k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn rk4(spec: &FlowSpec, s: f64, t: f64, steps: usize, start: DMatrix<f64>) -> DMatrix<f64> {
    let h = (t - s) / steps as f64;
    let mut y = start;
    for i in 0..steps {
        y = rk4_step(spec, s + i as f64 * h, h, &y);
    }
    y
}

/// `T_{s,t}` for `0 <= s <= t`.
pub fn flow_eval(spec: &FlowSpec, s: f64, t: f64) -> Result<DMatrix<f64>> {
    if !(s >= 0.0 && s <= t) {
        return Err(Error::Domain(format!("flow_eval needs 0 <= s <= t, got s = {s}, t = {t}")));
    }
    let d = spec.dim;
    if s == t {
        return Ok(DMatrix::identity(d, d));
    }
    match &spec.a {
        DriftMatrix::Constant(a) => Ok(expm(&(a * (t - s)))),
        _ => {
            let mut steps = ((spec.rk_steps as f64 * (t - s)).ceil() as usize).max(16);
            let id = DMatrix::identity(d, d);
            let mut coarse = rk4(spec, s, t, steps, id.clone());
            loop {
                steps *= 2;
                let fine = rk4(spec, s, t, steps, id.clone());
                let diff = (&fine - &coarse).amax();
                coarse = fine;
                if diff < 1e-9 || steps > (1 << 22) {
                    return Ok(coarse);
                }
            }
        }
    }
}

/// `σ_s⁻¹ T_s` with `T_s = T_{0,s}`.
pub fn sigma_inv_t(spec: &FlowSpec, s: f64) -> Result<DMatrix<f64>> {
    let t = flow_eval(spec, 0.0, s)?;
    spec.sigma_at(s)
        .lu()
        .solve(&t)
        .ok_or_else(|| Error::Singular(format!("σ_s is singular at s = {s}")))
}

/// Precomputed flow on `[0, t]` for repeated evaluation at jump times.
#[derive(Clone, Debug)]
pub struct FlowCache {
    spec: FlowSpec,
    t: f64,
    kind: CacheKind,
    sigma_const: Option<(DMatrix<f64>, DMatrix<f64>)>,
    t_total: DMatrix<f64>,
}

#[derive(Clone, Debug)]
enum CacheKind {
    Diagonal(DVector<f64>),
    /// `expm(j h A)`, `j = 0..=m`.
    Constant { a: DMatrix<f64>, at: DMatrix<f64>, h: f64, grid: Vec<DMatrix<f64>> },
    /// `T_{0,u_j}` and inverses on a uniform grid.
    Grid { h: f64, fwd: Vec<DMatrix<f64>>, inv: Vec<DMatrix<f64>> },
}

const CACHE_CELLS: usize = 256;

impl FlowCache {
    pub fn new(spec: &FlowSpec, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("horizon must be >= 0, got {t}")));
        }
        let d = spec.dim;
        let sigma_const = match &spec.sigma {
            NoiseMatrix::Constant(m) => {
                let inv = m
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("σ is not invertible".into()))?;
                Some((m.clone(), inv))
            }
            NoiseMatrix::TimeDependent(_) => None,
        };
        let kind = match &spec.a {
            DriftMatrix::Constant(a) => {
                let off_diag = (0..d).any(|i| (0..d).any(|j| i != j && a[(i, j)] != 0.0));
                if !off_diag {
                    CacheKind::Diagonal(a.diagonal())
                } else {
                    let h = t / CACHE_CELLS as f64;
                    let step = expm(&(a * h));
                    let mut grid = Vec::with_capacity(CACHE_CELLS + 1);
                    grid.push(DMatrix::identity(d, d));
                    for j in 1..=CACHE_CELLS {
                        // Direct evaluation every 16 cells limits error growth.
                        let next = if j % 16 == 0 { expm(&(a * (j as f64 * h))) } else { &grid[j - 1] * &step };
                        grid.push(next);
                    }
                    CacheKind::Constant { a: a.clone(), at: a.transpose(), h, grid }
                }
            }
            _ => {
                let cells = ((spec.rk_steps as f64 * t).ceil() as usize).clamp(64, 1 << 16);
                let h = t / cells as f64;
                let mut fwd = Vec::with_capacity(cells + 1);
                fwd.push(DMatrix::identity(d, d));
                for j in 0..cells {
                    let next = rk4_step(spec, j as f64 * h, h, &fwd[j]);
                    fwd.push(next);
                }
                let inv = fwd
                    .iter()
                    .map(|m| m.clone().try_inverse().ok_or_else(|| Error::Singular("flow matrix".into())))
                    .collect::<Result<Vec<_>>>()?;
                CacheKind::Grid { h, fwd, inv }
            }
        };
        let mut cache = Self { spec: spec.clone(), t, kind, sigma_const, t_total: DMatrix::identity(d, d) };
        cache.t_total = cache.t0(t);
        Ok(cache)
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    /// `T_{0,u}`.
    fn t0(&self, u: f64) -> DMatrix<f64> {
        let d = self.spec.dim;
        match &self.kind {
            CacheKind::Diagonal(a) => DMatrix::from_diagonal(&a.map(|x| (x * u).exp())),
            CacheKind::Constant { a, h, grid, .. } => {
                let (j, delta) = locate(u, *h, grid.len() - 1);
                let mut out = DMatrix::zeros(d, d);
                for c in 0..d {
                    let e = DVector::from_fn(d, |i, _| if i == c { 1.0 } else { 0.0 });
                    out.set_column(c, &(taylor_apply(a, delta, &(&grid[j] * e))));
                }
                out
            }
            CacheKind::Grid { h, fwd, .. } => {
                let (j, delta) = locate(u, *h, fwd.len() - 1);
                if delta == 0.0 {
                    fwd[j].clone()
                } else {
                    rk4_step(&self.spec, j as f64 * h, delta, &fwd[j])
                }
            }
        }
    }

    /// `T_t = T_{0,t}`.
    pub fn t_total(&self) -> &DMatrix<f64> {
        &self.t_total
    }

    /// `T_{s,t} v`.
    pub fn apply_st(&self, s: f64, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            CacheKind::Diagonal(a) => DVector::from_fn(v.len(), |i, _| (a[i] * (self.t - s)).exp() * v[i]),
            CacheKind::Constant { a, h, grid, .. } => {
                let (j, delta) = locate(self.t - s, *h, grid.len() - 1);
                &grid[j] * taylor_apply(a, delta, v)
            }
            CacheKind::Grid { h, inv, .. } => {
                let (j, delta) = locate(s, *h, inv.len() - 1);
                // T_{s,t} = T_t T_{0,s}^{-1}; T_{0,s} = R T_{0,u_j}, so
                // T_{0,s}^{-1} v = T_{0,u_j}^{-1} R^{-1} v.
                let w = if delta == 0.0 {
                    v.clone()
                } else {
                    let r = rk4_step(&self.spec, j as f64 * h, delta, &DMatrix::identity(v.len(), v.len()));
                    r.lu().solve(v).unwrap_or_else(|| v.clone())
                };
                &self.t_total * (&inv[j] * w)
            }
        }
    }

    /// `T_{s,t}`.
    pub fn t_st(&self, s: f64) -> DMatrix<f64> {
        let d = self.spec.dim;
        let mut out = DMatrix::zeros(d, d);
        for c in 0..d {
            let e = DVector::from_fn(d, |i, _| if i == c { 1.0 } else { 0.0 });
            out.set_column(c, &self.apply_st(s, &e));
        }
        out
    }

    pub fn sigma(&self, s: f64) -> DMatrix<f64> {
        match &self.sigma_const {
            Some((m, _)) => m.clone(),
            None => self.spec.sigma_at(s),
        }
    }

    /// `T_{s,t} σ_s z`.
    pub fn push_jump(&self, s: f64, z: &DVector<f64>) -> DVector<f64> {
        let w = match &self.sigma_const {
            Some((m, _)) => m * z,
            None => self.spec.sigma_at(s) * z,
        };
        self.apply_st(s, &w)
    }

    /// `σ_s⁻¹ T_s`.
    pub fn sigma_inv_t(&self, s: f64) -> Result<DMatrix<f64>> {
        let t0 = self.t0(s);
        match &self.sigma_const {
            Some((_, inv)) => Ok(inv * t0),
            None => self
                .spec
                .sigma_at(s)
                .lu()
                .solve(&t0)
                .ok_or_else(|| Error::Singular(format!("σ_s is singular at s = {s}"))),
        }
    }

    /// `(σ_s⁻¹ T_s)^* v`.
    pub fn sigma_inv_t_adjoint(&self, s: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let Some((_, inv)) = &self.sigma_const else {
            return Ok(self.sigma_inv_t(s)?.transpose() * v);
        };
        let w = inv.tr_mul(v);
        match &self.kind {
            CacheKind::Diagonal(a) => Ok(DVector::from_fn(w.len(), |i, _| (a[i] * s).exp() * w[i])),
            // T_{0,s}^* = exp(δA)^* T_{0,u_j}^*.
            CacheKind::Constant { at, h, grid, .. } => {
                let (j, delta) = locate(s, *h, grid.len() - 1);
                Ok(taylor_apply(at, delta, &grid[j].tr_mul(&w)))
            }
            CacheKind::Grid { .. } => Ok(self.sigma_inv_t(s)?.transpose() * v),
        }
    }

    /// `∫₀^t T_{s,t} σ_s b ds` by quadrature.
    pub fn drift_integral(&self, b: &DVector<f64>, rel_tol: f64) -> Result<DVector<f64>> {
        let d = self.spec.dim;
        if b.iter().all(|&x| x == 0.0) || self.t == 0.0 {
            return Ok(DVector::zeros(d));
        }
        let opts = QuadOptions::default().with_rel_tol(rel_tol).with_abs_tol(1e-14);
        let mut out = DVector::zeros(d);
        for i in 0..d {
            out[i] = integrate(|s| self.push_jump(s, b)[i], 0.0, self.t, &opts)?.value;
        }
        Ok(out)
    }

    /// `∫₀^t T_{s,t} σ_s C σ_s^* T_{s,t}^* ds`.
    pub fn gaussian_covariance(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.spec.dim;
        let opts = QuadOptions::default().with_rel_tol(1e-10).with_abs_tol(1e-14);
        let integrand = |s: f64| {
            let m = self.t_st(s) * self.sigma(s);
            &m * c * m.transpose()
        };
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = integrate(|s| integrand(s)[(i, j)], 0.0, self.t, &opts)?.value;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}

fn locate(u: f64, h: f64, last: usize) -> (usize, f64) {
    if h <= 0.0 {
        return (0, 0.0);
    }
    let j = ((u / h).floor() as usize).min(last);
    (j, (u - j as f64 * h).max(0.0))
}

/// `exp(δ A) v` by its Taylor series, truncated once a term drops below
/// rounding; `δ ‖A‖` is small here.
fn taylor_apply(a: &DMatrix<f64>, delta: f64, v: &DVector<f64>) -> DVector<f64> {
    if delta == 0.0 {
        return v.clone();
    }
    let mut term = v.clone();
    let mut out = v.clone();
    let mut next = DVector::zeros(v.len());
    let scale = v.amax();
    for k in 1..=12 {
        a.mul_to(&term, &mut next);
        next *= delta / k as f64;
        std::mem::swap(&mut term, &mut next);
        out += &term;
        if term.amax() <= 1e-17 * scale {
            break;
        }
    }
    out
}
