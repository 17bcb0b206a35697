//! Harnack-type inequalities for Markov operators on finite state spaces.
//!
//! Constants are kept in additive form: `Ψ(x,y)` is the logarithm of the
//! multiplicative constant `C(x,y)` in `(Pf(x))^p ≤ C(x,y) Pf^p(y)`, and the
//! additive constant itself for `P log f(x) ≤ log Pf(y) + Ψ(x,y)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{derive_seed, sample_rng, SampleRng};

pub const MAX_STATES: usize = 6;
/// Largest state space handled by the transport enumerator.
pub const MAX_TRANSPORT_STATES: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMarkov {
    p: DMatrix<f64>,
    mu: DVector<f64>,
}

impl FiniteMarkov {
    pub fn new(p: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || n > MAX_STATES || p.ncols() != n || mu.len() != n {
            return Err(Error::Domain(format!("need a square matrix with 1..={MAX_STATES} states")));
        }
        if p.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("transition entries must be non-negative".into()));
        }
        for (i, row) in p.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} sums to {s}")));
            }
        }
        if mu.iter().any(|v| !(*v > 0.0)) || (mu.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("reference measure must be positive and sum to 1".into()));
        }
        Ok(FiniteMarkov { p, mu })
    }

    /// Uses the uniform reference measure.
    pub fn with_uniform(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        Self::new(p, DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.p * f
    }

    /// `p(x,y) = P(x,y)/μ(y)`.
    pub fn kernel(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |x, y| self.p[(x, y)] / self.mu[y])
    }

    /// Largest entry of `|μP - μ|`.
    pub fn invariance_defect(&self) -> f64 {
        (self.p.tr_mul(&self.mu) - &self.mu).amax()
    }

    /// Adjoint in `L²(μ)`: `P*(x,y) = p(y,x)μ(y)`.
    pub fn adjoint(&self) -> Result<FiniteMarkov> {
        let d = self.invariance_defect();
        if d > 1e-10 {
            return Err(Error::Domain(format!("reference measure is not invariant (defect {d:e})")));
        }
        let n = self.n();
        let mut q = DMatrix::from_fn(n, n, |x, y| self.p[(y, x)] * self.mu[y] / self.mu[x]);
        for mut row in q.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        FiniteMarkov::new(q, self.mu.clone())
    }

    fn log_row(&self, x: usize) -> Vec<f64> {
        self.p.row(x).iter().map(|v| v.ln()).collect()
    }

    /// Whether `P(x,·)` is absolutely continuous w.r.t. `P(y,·)`.
    pub fn dominated(&self, x: usize, y: usize) -> bool {
        (0..self.n()).all(|z| self.p[(x, z)] == 0.0 || self.p[(y, z)] > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiMatrix(DMatrix<f64>);

impl PsiMatrix {
    /// Entries may be `+∞`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Domain("Ψ must be square".into()));
        }
        if m.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("Ψ must be non-negative".into()));
        }
        if (0..m.nrows()).any(|i| m[(i, i)] != 0.0) {
            return Err(Error::Domain("Ψ must vanish on the diagonal".into()));
        }
        Ok(PsiMatrix(m))
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `Ψ - δ` off the diagonal, clamped at 0.
    pub fn shifted(&self, delta: f64) -> PsiMatrix {
        let n = self.0.nrows();
        PsiMatrix(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (self.0[(i, j)] - delta).max(0.0) }))
    }
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log C*(x,y)` with `C* = (Σ_z P(x,z) p_{x,y}(z)^{1/(p-1)})^{p-1}`, the least
/// `C` with `(Pf(x))^p ≤ C Pf^p(y)` for all `f ≥ 0`. Infinite when
/// `P(x,·)` is not dominated by `P(y,·)`.
pub fn log_minimal_harnack_constant(pm: &FiniteMarkov, x: usize, y: usize, p: f64) -> f64 {
    assert!(p > 1.0);
    if !pm.dominated(x, y) {
        return f64::INFINITY;
    }
    let (lx, ly) = (pm.log_row(x), pm.log_row(y));
    let q = 1.0 / (p - 1.0);
    let s = log_sum_exp((0..pm.n()).filter(|&z| lx[z].is_finite()).map(|z| lx[z] + q * (lx[z] - ly[z])));
    (p - 1.0) * s
}

pub fn minimal_harnack_constant(pm: &FiniteMarkov, x: usize, y: usize, p: f64) -> f64 {
    log_minimal_harnack_constant(pm, x, y, p).exp()
}

/// `Σ_z P(x,z) log p_{x,y}(z)`, the least `Ψ` with
/// `P log f(x) ≤ log Pf(y) + Ψ` for all `f ≥ 1`.
pub fn minimal_logharnack_constant(pm: &FiniteMarkov, x: usize, y: usize) -> f64 {
    if !pm.dominated(x, y) {
        return f64::INFINITY;
    }
    let (lx, ly) = (pm.log_row(x), pm.log_row(y));
    (0..pm.n())
        .filter(|&z| lx[z].is_finite())
        .map(|z| pm.p[(x, z)] * (lx[z] - ly[z]))
        .sum::<f64>()
        .max(0.0)
}

fn psi_from(pm: &FiniteMarkov, c: impl Fn(usize, usize) -> f64) -> PsiMatrix {
    let n = pm.n();
    PsiMatrix(DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { c(x, y).max(0.0) }))
}

pub fn harnack_psi(pm: &FiniteMarkov, p: f64) -> PsiMatrix {
    psi_from(pm, |x, y| log_minimal_harnack_constant(pm, x, y, p))
}

pub fn logharnack_psi(pm: &FiniteMarkov) -> PsiMatrix {
    psi_from(pm, |x, y| minimal_logharnack_constant(pm, x, y))
}

/// Quasi-Newton ascent of a smooth function on `R^n` from `v0`.
fn bfgs_max(obj: &dyn Fn(&[f64]) -> (f64, Vec<f64>), v0: Vec<f64>, max_iter: usize) -> (f64, Vec<f64>) {
    let n = v0.len();
    let mut v = v0;
    let (mut fv, mut g) = obj(&v);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    for _ in 0..max_iter {
        if g.iter().all(|x| x.abs() < 1e-10) || !fv.is_finite() {
            break;
        }
        let gv = DVector::from_column_slice(&g);
        let mut d = &h * &gv;
        if d.dot(&gv) <= 0.0 {
            h = DMatrix::identity(n, n);
            d = gv.clone();
            fresh = true;
        }
        let slope = d.dot(&gv);
        // Capped steps keep coordinates from collapsing towards f_z = 0,
        // where the gradient in v vanishes even if f_z should grow.
        let mut step = (2.0 / d.amax()).min(1.0);
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = v.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = obj(&trial);
            if ft.is_finite() && ft >= fv + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((nv, nf, ng)) = accepted else {
            if fresh {
                break;
            }
            // Retry from steepest ascent before giving up.
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        fresh = false;
        let s = DVector::from_iterator(n, nv.iter().zip(&v).map(|(a, b)| a - b));
        // Ascent on f is descent on -f, whose gradient change is -(ng - g).
        let yv = DVector::from_iterator(n, g.iter().zip(&ng).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        v = nv;
        fv = nf;
        g = ng;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &s * yv.transpose() * rho;
            let b = &i - &yv * s.transpose() * rho;
            h = &a * &h * &b + &s * s.transpose() * rho;
        }
    }
    (fv, v)
}

fn normalized_exp(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| (x - m).exp()).collect()
}

fn random_start(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-4.0..4.0)).collect()
}

/// `log sup_{f ≥ 0} (Pf(x))^p / Pf^p(y)` by ascent in `f = e^v` from random
/// starts. Independent of the closed form.
pub fn harnack_sup_oracle(pm: &FiniteMarkov, x: usize, y: usize, p: f64, restarts: usize, seed: u64) -> f64 {
    let n = pm.n();
    let px: Vec<f64> = pm.p.row(x).iter().cloned().collect();
    let py: Vec<f64> = pm.p.row(y).iter().cloned().collect();
    let obj = |v: &[f64]| {
        let f = normalized_exp(v);
        let a: f64 = (0..n).map(|z| px[z] * f[z]).sum();
        let b: f64 = (0..n).map(|z| py[z] * f[z].powf(p)).sum();
        let val = p * a.ln() - b.ln();
        let g = (0..n).map(|z| p * px[z] * f[z] / a - p * py[z] * f[z].powf(p) / b).collect();
        (val, g)
    };
    let mut rng = sample_rng(seed, 0);
    (0..restarts.max(1))
        .map(|_| bfgs_max(&obj, random_start(&mut rng, n), 400).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `sup_{f ≥ 1} P log f(x) - log Pf(y)`. The functional is invariant under
/// `f ↦ cf`, so the constraint is dropped and the ascent runs over `f = e^v`.
pub fn logharnack_sup_oracle(pm: &FiniteMarkov, x: usize, y: usize, restarts: usize, seed: u64) -> f64 {
    let n = pm.n();
    let px: Vec<f64> = pm.p.row(x).iter().cloned().collect();
    let py: Vec<f64> = pm.p.row(y).iter().cloned().collect();
    let obj = |v: &[f64]| {
        let f = normalized_exp(v);
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b: f64 = (0..n).map(|z| py[z] * f[z]).sum();
        let val = (0..n).map(|z| px[z] * (v[z] - m)).sum::<f64>() - b.ln();
        let g = (0..n).map(|z| px[z] - py[z] * f[z] / b).collect();
        (val, g)
    };
    let mut rng = sample_rng(seed, 0);
    (0..restarts.max(1))
        .map(|_| bfgs_max(&obj, random_start(&mut rng, n), 400).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Both sides of the kernel bound `Σ_z p(x,z)Φ⁻¹(p(x,z)/p(y,z))μ(z) ≤ Φ⁻¹(e^{Ψ})`
/// for `Φ(r) = r^p`, and of `Σ_z p(x,z)p(y,z)μ(z) ≥ e^{-Ψ}`.
#[derive(Clone, Debug)]
pub struct KernelBoundReport {
    /// Smallest `rhs - lhs` of the first bound over ordered pairs.
    pub ratio_margin: f64,
    /// Smallest `lhs - rhs` of the overlap bound.
    pub overlap_margin: f64,
}

impl KernelBoundReport {
    pub fn max_violation(&self) -> f64 {
        (-self.ratio_margin).max(-self.overlap_margin).max(0.0)
    }
}

/// Convex `Φ` on `[0,∞)` with `Φ(∞) = ∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhiFunction {
    Power { p: f64 },
    Exp,
}

/// The ratio bound is evaluated only for `Φ = r^p`; for `Φ = e^r` the inverse
/// is undefined below 1 and `ratio_margin` is `+∞`.
pub fn check_kernel_bounds(pm: &FiniteMarkov, psi: &PsiMatrix, phi: PhiFunction) -> KernelBoundReport {
    let n = pm.n();
    let k = pm.kernel();
    let mu = pm.mu();
    let mut ratio_margin = f64::INFINITY;
    let mut overlap_margin = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            let ps = psi.get(x, y);
            if let PhiFunction::Power { p } = phi {
                let lhs: f64 = (0..n)
                    .filter(|&z| k[(x, z)] > 0.0)
                    .map(|z| k[(x, z)] * (k[(x, z)] / k[(y, z)]).powf(1.0 / p) * mu[z])
                    .sum();
                let rhs = (ps / p).exp();
                ratio_margin = ratio_margin.min(rhs - lhs);
            }
            let overlap: f64 = (0..n).map(|z| k[(x, z)] * k[(y, z)] * mu[z]).sum();
            overlap_margin = overlap_margin.min(overlap - (-ps).exp());
        }
    }
    KernelBoundReport { ratio_margin, overlap_margin }
}

/// `(‖P‖_{p→δp}` lower estimate by ascent, `∫μ(dx) / (∫e^{-Ψ(x,y)}μ(dy))^δ)`.
pub fn hyperbound(pm: &FiniteMarkov, psi: &PsiMatrix, p: f64, delta: f64, restarts: usize, seed: u64) -> Result<(f64, f64)> {
    let d = pm.invariance_defect();
    if d > 1e-10 {
        return Err(Error::Domain(format!("reference measure is not invariant (defect {d:e})")));
    }
    let n = pm.n();
    let mu = pm.mu().clone();
    let rhs: f64 = (0..n)
        .map(|x| {
            let s: f64 = (0..n).map(|y| (-psi.get(x, y)).exp() * mu[y]).sum();
            mu[x] / s.powf(delta)
        })
        .sum();
    let q = delta * p;
    let pmat = pm.matrix().clone();
    let obj = |v: &[f64]| {
        let f = DVector::from_vec(normalized_exp(v));
        let g = &pmat * &f;
        let a: f64 = (0..n).map(|x| mu[x] * g[x].powf(q)).sum();
        let b: f64 = (0..n).map(|z| mu[z] * f[z].powf(p)).sum();
        let val = a.ln() / q - b.ln() / p;
        let grad = (0..n)
            .map(|z| {
                let da: f64 = (0..n).map(|x| mu[x] * g[x].powf(q - 1.0) * pmat[(x, z)]).sum::<f64>() * f[z] / a;
                da - mu[z] * f[z].powf(p) / b
            })
            .collect();
        (val, grad)
    };
    let mut rng = sample_rng(seed, 0);
    let mut best = obj(&vec![0.0; n]).0;
    for i in 0..restarts.max(1) + n {
        // Near-indicator starts first, then random ones.
        let v0 = if i < n {
            (0..n).map(|z| if z == i { 0.0 } else { -8.0 }).collect()
        } else {
            random_start(&mut rng, n)
        };
        best = best.max(bfgs_max(&obj, v0, 400).0);
    }
    Ok((best.exp(), rhs))
}

/// Exact `min Σ π(x,y)c(x,y)` over couplings with marginals `a` (first) and
/// `b` (second), by enumerating spanning-tree bases of the transportation
/// polytope.
pub fn transport_cost(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> Result<f64> {
    let n = a.len();
    let m = b.len();
    if n == 0 || m == 0 || n > MAX_TRANSPORT_STATES || m > MAX_TRANSPORT_STATES {
        return Err(Error::Domain(format!("transport supports 1..={MAX_TRANSPORT_STATES} states per side")));
    }
    if (a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs() > 1e-9 || a.iter().chain(b).any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("marginals must be non-negative with equal mass".into()));
    }
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut search = TreeSearch {
        n,
        m,
        a,
        b,
        cost,
        cells: &cells,
        chosen: Vec::with_capacity(n + m - 1),
        best: f64::INFINITY,
    };
    let parent: Vec<usize> = (0..n + m).collect();
    search.walk(0, parent);
    if search.best.is_finite() {
        Ok(search.best.max(0.0))
    } else {
        Err(Error::Domain("no feasible basis with finite cost".into()))
    }
}

struct TreeSearch<'a> {
    n: usize,
    m: usize,
    a: &'a [f64],
    b: &'a [f64],
    cost: &'a DMatrix<f64>,
    cells: &'a [(usize, usize)],
    chosen: Vec<usize>,
    best: f64,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl TreeSearch<'_> {
    fn walk(&mut self, from: usize, parent: Vec<usize>) {
        let need = self.n + self.m - 1;
        if self.chosen.len() == need {
            self.evaluate();
            return;
        }
        let left = need - self.chosen.len();
        for c in from..=self.cells.len() - left {
            let (i, j) = self.cells[c];
            let mut par = parent.clone();
            let (ri, rj) = (find(&mut par, i), find(&mut par, self.n + j));
            if ri == rj {
                continue;
            }
            par[ri] = rj;
            self.chosen.push(c);
            self.walk(c + 1, par);
            self.chosen.pop();
        }
    }

    /// Solves the flows on the chosen spanning tree by peeling leaves.
    fn evaluate(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut supply: Vec<f64> = self.a.iter().cloned().chain(self.b.iter().cloned()).collect();
        let mut deg = vec![0usize; n + m];
        for &c in &self.chosen {
            let (i, j) = self.cells[c];
            deg[i] += 1;
            deg[n + j] += 1;
        }
        let mut done = vec![false; self.chosen.len()];
        let mut total = 0.0;
        for _ in 0..self.chosen.len() {
            let Some((k, leaf)) = self.chosen.iter().enumerate().filter(|(k, _)| !done[*k]).find_map(|(k, &c)| {
                let (i, j) = self.cells[c];
                if deg[i] == 1 {
                    Some((k, i))
                } else if deg[n + j] == 1 {
                    Some((k, n + j))
                } else {
                    None
                }
            }) else {
                return;
            };
            let (i, j) = self.cells[self.chosen[k]];
            let other = if leaf == i { n + j } else { i };
            let flow = supply[leaf];
            if flow < -1e-12 {
                return;
            }
            let flow = flow.max(0.0);
            supply[leaf] = 0.0;
            supply[other] -= flow;
            deg[i] -= 1;
            deg[n + j] -= 1;
            done[k] = true;
            if flow > 0.0 {
                total += flow * self.cost[(i, j)];
            }
        }
        if supply.iter().all(|s| s.abs() < 1e-9) && total < self.best {
            self.best = total;
        }
    }
}

/// `(∫(P*f) log P*f dμ, W_Ψ(fμ, μ))` for a density `f` w.r.t. the invariant `μ`.
pub fn entropy_cost(pm: &FiniteMarkov, psi: &PsiMatrix, f: &DVector<f64>) -> Result<(f64, f64)> {
    let adj = pm.adjoint()?;
    let mu = pm.mu();
    let mass = f.dot(mu);
    if f.iter().any(|v| !(*v >= 0.0)) || (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Domain("f must be a non-negative density w.r.t. μ".into()));
    }
    let g = adj.apply(f);
    let lhs: f64 = (0..pm.n()).filter(|&x| g[x] > 0.0).map(|x| mu[x] * g[x] * g[x].ln()).sum();
    let a: Vec<f64> = f.component_mul(mu).iter().cloned().collect();
    let b: Vec<f64> = mu.iter().cloned().collect();
    Ok((lhs, transport_cost(&a, &b, psi.matrix())?))
}

fn dirichlet(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Rows from a flat Dirichlet, reference measure from another.
pub fn random_instance(rng: &mut SampleRng, n: usize) -> FiniteMarkov {
    let rows: Vec<f64> = (0..n).flat_map(|_| dirichlet(rng, n)).collect();
    let mut p = DMatrix::from_row_slice(n, n, &rows);
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut mu = DVector::from_vec(dirichlet(rng, n));
    let s = mu.sum();
    mu /= s;
    FiniteMarkov { p, mu }
}

/// Reversible chain `P(x,y) = W(x,y)/Σ_y W(x,y)` from symmetric positive
/// weights, with its invariant measure `μ(x) ∝ Σ_y W(x,y)`.
pub fn random_reversible(rng: &mut SampleRng, n: usize) -> FiniteMarkov {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(Exp1);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let rs: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let total: f64 = rs.iter().sum();
    let p = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / rs[i]);
    let mu = DVector::from_iterator(n, rs.iter().map(|s| s / total));
    let mut pm = FiniteMarkov { p, mu };
    for mut row in pm.p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let s = pm.mu.sum();
    pm.mu /= s;
    pm
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub min_states: usize,
    pub max_states: usize,
    pub ps: Vec<f64>,
    pub deltas: Vec<f64>,
    pub restarts: usize,
    pub random_functions: usize,
    pub densities: usize,
    pub tightness: f64,
    pub perturbation: f64,
    pub tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            instances: 100,
            seed: 1,
            min_states: 2,
            max_states: 5,
            ps: vec![1.5, 2.0, 3.0],
            deltas: vec![1.5, 2.0],
            restarts: 6,
            random_functions: 10_000,
            densities: 4,
            tightness: 1e-4,
            perturbation: 0.05,
            tolerance: 1e-9,
        }
    }
}

/// One check on one instance; `margin ≥ 0` means the check passed.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub suite: &'static str,
    pub instance: usize,
    pub n: usize,
    pub check: String,
    pub margin: f64,
    pub pass: bool,
}

impl SuiteRow {
    pub const CSV_HEADER: &'static str = "suite,instance,n,check,margin,pass";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{:e},{}", self.suite, self.instance, self.n, self.check, self.margin, self.pass)
    }
}

fn row(suite: &'static str, instance: usize, n: usize, check: String, margin: f64, pass: bool) -> SuiteRow {
    SuiteRow { suite, instance, n, check, margin, pass }
}

fn states(cfg: &SuiteConfig, i: usize, cap: usize) -> usize {
    let lo = cfg.min_states.max(2).min(cap);
    let hi = cfg.max_states.clamp(lo, cap);
    lo + i % (hi - lo + 1)
}

/// Both directions of the characterization of the minimal constants.
fn equivalence_rows(cfg: &SuiteConfig, i: usize) -> Vec<SuiteRow> {
    let seed = derive_seed(cfg.seed, 0x100 + i as u64);
    let mut rng = sample_rng(seed, 0);
    let n = states(cfg, i, MAX_STATES);
    let pm = random_instance(&mut rng, n);
    let fs: Vec<DVector<f64>> = (0..cfg.random_functions)
        .map(|_| DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-3.0f64..3.0).exp())))
        .collect();
    let tol = cfg.tolerance;
    let mut out = Vec::new();
    for (k, &p) in cfg.ps.iter().enumerate() {
        let (mut tight, mut random, mut falsified) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let pf: Vec<(DVector<f64>, DVector<f64>)> =
            fs.iter().map(|f| (pm.apply(f), pm.apply(&f.map(|v| v.powf(p))))).collect();
        for x in 0..n {
            for y in (0..n).filter(|&y| y != x) {
                let c = log_minimal_harnack_constant(&pm, x, y, p);
                let sup = harnack_sup_oracle(&pm, x, y, p, cfg.restarts, derive_seed(seed, (k * 64 + x * 8 + y) as u64));
                tight = tight.min(cfg.tightness - (sup - c).abs());
                falsified = falsified.min(sup - (c - cfg.perturbation));
                for (a, b) in &pf {
                    random = random.min(c - (p * a[x].ln() - b[y].ln()));
                }
            }
        }
        out.push(row("equivalence", i, n, format!("harnack_tight_p{p}"), tight, tight >= 0.0));
        out.push(row("equivalence", i, n, format!("harnack_random_f_p{p}"), random, random >= -tol));
        out.push(row("equivalence", i, n, format!("harnack_perturbed_p{p}"), falsified, falsified > 0.0));
    }
    let (mut tight, mut random, mut falsified) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let lf: Vec<(DVector<f64>, DVector<f64>)> = fs
        .iter()
        .map(|f| {
            let g = f.map(|v| 1.0 + v);
            (pm.apply(&g.map(f64::ln)), pm.apply(&g))
        })
        .collect();
    for x in 0..n {
        for y in (0..n).filter(|&y| y != x) {
            let c = minimal_logharnack_constant(&pm, x, y);
            let sup = logharnack_sup_oracle(&pm, x, y, cfg.restarts, derive_seed(seed, 0x10_000 + (x * 8 + y) as u64));
            tight = tight.min(cfg.tightness - (sup - c).abs());
            falsified = falsified.min(sup - (c - cfg.perturbation));
            for (a, b) in &lf {
                random = random.min(c - (a[x] - b[y].ln()));
            }
        }
    }
    out.push(row("equivalence", i, n, "log_tight".into(), tight, tight >= 0.0));
    out.push(row("equivalence", i, n, "log_random_f".into(), random, random >= -tol));
    out.push(row("equivalence", i, n, "log_perturbed".into(), falsified, falsified > 0.0));
    out
}

fn kernel_rows(cfg: &SuiteConfig, i: usize) -> Vec<SuiteRow> {
    let mut rng = sample_rng(derive_seed(cfg.seed, 0x200 + i as u64), 0);
    let n = states(cfg, i, MAX_STATES);
    let pm = random_instance(&mut rng, n);
    let tol = cfg.tolerance;
    let mut out = Vec::new();
    for &p in &cfg.ps {
        let r = check_kernel_bounds(&pm, &harnack_psi(&pm, p), PhiFunction::Power { p });
        out.push(row("kernel", i, n, format!("ratio_power_p{p}"), r.ratio_margin, r.ratio_margin >= -tol));
        out.push(row("kernel", i, n, format!("overlap_power_p{p}"), r.overlap_margin, r.overlap_margin >= -tol));
    }
    let r = check_kernel_bounds(&pm, &logharnack_psi(&pm), PhiFunction::Exp);
    out.push(row("kernel", i, n, "overlap_exp".into(), r.overlap_margin, r.overlap_margin >= -tol));
    out
}

fn invariant_rows(cfg: &SuiteConfig, i: usize) -> Result<Vec<SuiteRow>> {
    let seed = derive_seed(cfg.seed, 0x300 + i as u64);
    let mut rng = sample_rng(seed, 0);
    let n = states(cfg, i, MAX_TRANSPORT_STATES);
    let pm = random_reversible(&mut rng, n);
    let tol = cfg.tolerance;
    let mut out = Vec::new();
    let positive = pm.kernel().min();
    out.push(row("invariant", i, n, "kernel_positive".into(), positive, positive > 0.0));
    for (k, &p) in cfg.ps.iter().enumerate() {
        let psi = harnack_psi(&pm, p);
        for (j, &delta) in cfg.deltas.iter().enumerate() {
            let (lhs, rhs) = hyperbound(&pm, &psi, p, delta, cfg.restarts, derive_seed(seed, (k * 16 + j) as u64))?;
            let sharp = rhs.powf(1.0 / (delta * p)) - lhs;
            out.push(row("invariant", i, n, format!("hyper_p{p}_d{delta}"), rhs - lhs, rhs - lhs >= -tol));
            out.push(row("invariant", i, n, format!("hyper_root_p{p}_d{delta}"), sharp, sharp >= -tol));
        }
    }
    let psi = logharnack_psi(&pm);
    let mut margin = f64::INFINITY;
    for k in 0..=cfg.densities {
        let w = if k == 0 { vec![1.0; n] } else { dirichlet(&mut rng, n) };
        let w = DVector::from_vec(w);
        let f = &w / w.dot(pm.mu());
        let (lhs, rhs) = entropy_cost(&pm, &psi, &f)?;
        margin = margin.min(rhs - lhs);
    }
    out.push(row("invariant", i, n, "entropy_cost".into(), margin, margin >= -tol));
    Ok(out)
}

/// Runs the three batteries on `cfg.instances` random instances each.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteRow>> {
    if cfg.instances == 0 || cfg.ps.iter().any(|p| !(*p > 1.0)) || cfg.deltas.iter().any(|d| !(*d > 1.0)) {
        return Err(Error::Config("finite suite needs instances > 0, p > 1 and δ > 1".into()));
    }
    let m = cfg.instances;
    let rows: Vec<Result<Vec<SuiteRow>>> = (0..3 * m)
        .into_par_iter()
        .map(|k| match k / m {
            0 => Ok(equivalence_rows(cfg, k % m)),
            1 => Ok(kernel_rows(cfg, k % m)),
            _ => invariant_rows(cfg, k % m),
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> FiniteMarkov {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.25, 0.5]);
        FiniteMarkov::new(p, DVector::from_vec(vec![0.2, 0.3, 0.5])).unwrap()
    }

    #[test]
    fn validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(FiniteMarkov::with_uniform(bad).is_err());
        assert!(FiniteMarkov::with_uniform(DMatrix::identity(7, 7)).is_err());
        assert!(PsiMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0])).is_err());
        assert!(PsiMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn kernel_reproduces_action() {
        let pm = three_state();
        let k = pm.kernel();
        let f = DVector::from_vec(vec![1.3, -0.4, 2.2]);
        let direct = pm.apply(&f);
        for x in 0..3 {
            let v: f64 = (0..3).map(|y| k[(x, y)] * f[y] * pm.mu()[y]).sum();
            assert!((v - direct[x]).abs() < 1e-12);
        }
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.9, 0.1]);
        let u = FiniteMarkov::with_uniform(p.clone()).unwrap();
        assert!((u.kernel() - p * 2.0).amax() < 1e-15);
        let mu = DVector::from_vec(vec![0.2, 0.8]);
        let same = FiniteMarkov::new(DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.2, 0.8]), mu).unwrap();
        assert!(same.kernel().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identical_rows_have_trivial_constants() {
        let mu = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let pm = FiniteMarkov::new(DMatrix::from_fn(3, 3, |_, j| mu[j]), mu).unwrap();
        assert!((minimal_harnack_constant(&pm, 0, 2, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(minimal_logharnack_constant(&pm, 0, 1), 0.0);
        let r = check_kernel_bounds(&pm, &harnack_psi(&pm, 2.0), PhiFunction::Power { p: 2.0 });
        assert!(r.overlap_margin.abs() < 1e-12);
    }

    #[test]
    fn harnack_constant_matches_sup_oracle() {
        let pm = three_state();
        for (x, y) in [(0, 1), (1, 2), (2, 0)] {
            let c = minimal_harnack_constant(&pm, x, y, 2.0);
            let sup = harnack_sup_oracle(&pm, x, y, 2.0, 1000, 5).exp();
            assert!((sup / c - 1.0).abs() < 1e-6, "{x}{y}: {sup} vs {c}");
        }
    }

    #[test]
    fn harnack_constant_limits() {
        let pm = three_state();
        // C* is the L^q(P(x,·)) norm of the density ratio with q = 1/(p-1),
        // so it tends to the largest ratio as p ↓ 1.
        let ratio: Vec<f64> = (0..3).map(|z| pm.matrix()[(0, z)] / pm.matrix()[(1, z)]).collect();
        let max = ratio.iter().cloned().fold(0.0, f64::max);
        let q = 1e3;
        let norm = minimal_harnack_constant(&pm, 0, 1, 1.0 + 1.0 / q);
        assert!(norm <= max && (norm - max).abs() / max < 1e-3, "{norm} {max}");
        // p → ∞: log C* decreases to the log-Harnack constant.
        let kl = minimal_logharnack_constant(&pm, 0, 1);
        let mut last = f64::INFINITY;
        for p in [1.5, 2.0, 5.0, 50.0, 1e4] {
            let c = log_minimal_harnack_constant(&pm, 0, 1, p);
            assert!(c >= kl - 1e-15 && c <= last);
            last = c;
        }
        assert!((last - kl).abs() < 1e-3 * kl.max(1e-3));
    }

    #[test]
    fn non_dominated_rows_are_infinite() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]);
        let pm = FiniteMarkov::with_uniform(p).unwrap();
        assert!(minimal_harnack_constant(&pm, 0, 1, 2.0).is_infinite());
        assert!(minimal_logharnack_constant(&pm, 0, 1).is_infinite());
        assert!(minimal_harnack_constant(&pm, 1, 0, 2.0).is_finite());
    }

    #[test]
    fn logharnack_constant_matches_grid_sup() {
        let pm = three_state();
        for (x, y) in [(0, 1), (2, 1)] {
            let c = minimal_logharnack_constant(&pm, x, y);
            // f = 1 + N·s over a simplex grid of s.
            let mut best = f64::NEG_INFINITY;
            let m = 200;
            for i in 0..=m {
                for j in 0..=m - i {
                    let s = [i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64];
                    let f = DVector::from_iterator(3, s.iter().map(|v| 1.0 + 1e7 * v));
                    let lhs = pm.apply(&f.map(f64::ln))[x];
                    best = best.max(lhs - pm.apply(&f)[y].ln());
                }
            }
            assert!(best <= c + 1e-12 && c - best < 1e-4, "{best} {c}");
            let ascent = logharnack_sup_oracle(&pm, x, y, 10, 3);
            assert!((ascent - c).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_bounds_and_falsification() {
        let pm = three_state();
        let psi = harnack_psi(&pm, 2.0);
        let r = check_kernel_bounds(&pm, &psi, PhiFunction::Power { p: 2.0 });
        assert!(r.max_violation() <= 1e-9, "{r:?}");
        let r = check_kernel_bounds(&pm, &logharnack_psi(&pm), PhiFunction::Exp);
        assert!(r.overlap_margin >= -1e-9 && r.ratio_margin.is_infinite());
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let sharp = FiniteMarkov::with_uniform(p).unwrap();
        let r = check_kernel_bounds(&sharp, &harnack_psi(&sharp, 2.0).shifted(0.1), PhiFunction::Power { p: 2.0 });
        assert!(r.ratio_margin < 0.0);
    }

    #[test]
    fn hyperbound_examples() {
        let mu = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let id = FiniteMarkov::new(DMatrix::identity(3, 3), mu.clone()).unwrap();
        let zero = PsiMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let (lhs, rhs) = hyperbound(&id, &zero, 2.0, 2.0, 10, 1).unwrap();
        assert!((rhs - 1.0).abs() < 1e-15);
        // sup ‖f‖_4/‖f‖_2 sits at the indicator of the lightest state.
        let exact = 0.2f64.powf(0.25 - 0.5);
        assert!((lhs / exact - 1.0).abs() < 1e-6, "{lhs} {exact}");
        let same = FiniteMarkov::new(DMatrix::from_fn(3, 3, |_, j| mu[j]), mu).unwrap();
        let (lhs, rhs) = hyperbound(&same, &harnack_psi(&same, 2.0), 2.0, 1.5, 10, 1).unwrap();
        assert!((lhs - 1.0).abs() < 1e-9 && rhs >= 1.0);
        assert!(hyperbound(&three_state(), &zero, 2.0, 2.0, 2, 1).is_err());
    }

    #[test]
    fn reversible_instances_are_invariant() {
        let mut rng = sample_rng(4, 0);
        for n in 2..=5 {
            let pm = random_reversible(&mut rng, n);
            assert!(pm.invariance_defect() < 1e-14);
            let adj = pm.adjoint().unwrap();
            assert!((adj.matrix() - pm.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn two_state_transport_closed_form() {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 1.9, 0.0]);
        for (a1, b1) in [(0.3, 0.6), (0.8, 0.25), (0.5, 0.5)] {
            let w = transport_cost(&[a1, 1.0 - a1], &[b1, 1.0 - b1], &cost).unwrap();
            let exact = (a1 - b1).max(0.0) * 0.7 + (b1 - a1).max(0.0) * 1.9;
            assert!((w - exact).abs() < 1e-14, "{w} {exact}");
        }
    }

    #[test]
    fn transport_matches_swap_search() {
        // Cross-check against a local search over couplings: each 2x2 swap that
        // lowers the cost is applied until none remains (optimal for transport).
        let mut rng = sample_rng(8, 0);
        for n in 3..=5 {
            let a = dirichlet(&mut rng, n);
            let b = dirichlet(&mut rng, n);
            let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..2.0));
            let w = transport_cost(&a, &b, &cost).unwrap();
            let mut pi = DMatrix::from_fn(n, n, |i, j| a[i] * b[j]);
            for _ in 0..20_000 {
                let mut moved = false;
                for i in 0..n {
                    for k in 0..n {
                        for j in 0..n {
                            for l in 0..n {
                                let gain = cost[(i, j)] + cost[(k, l)] - cost[(i, l)] - cost[(k, j)];
                                let m = pi[(i, j)].min(pi[(k, l)]);
                                if gain > 1e-15 && m > 1e-15 {
                                    pi[(i, j)] -= m;
                                    pi[(k, l)] -= m;
                                    pi[(i, l)] += m;
                                    pi[(k, j)] += m;
                                    moved = true;
                                }
                            }
                        }
                    }
                }
                if !moved {
                    break;
                }
            }
            let local: f64 = pi.component_mul(&cost).sum();
            assert!(w <= local + 1e-12, "{w} {local}");
        }
    }

    #[test]
    fn entropy_cost_examples() {
        let mut rng = sample_rng(2, 0);
        let pm = random_reversible(&mut rng, 3);
        let psi = logharnack_psi(&pm);
        let (lhs, rhs) = entropy_cost(&pm, &psi, &DVector::from_element(3, 1.0)).unwrap();
        assert!(lhs.abs() < 1e-14 && rhs.abs() < 1e-14);
        let w = DVector::from_vec(vec![3.0, 0.2, 1.0]);
        let f = &w / w.dot(pm.mu());
        let (lhs, rhs) = entropy_cost(&pm, &psi, &f).unwrap();
        assert!(lhs > 0.0 && lhs <= rhs + 1e-9);
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let cfg = SuiteConfig { instances: 6, random_functions: 500, ..Default::default() };
        let a = run_suite(&cfg).unwrap();
        assert!(a.iter().all(|r| r.pass), "{:?}", a.iter().filter(|r| !r.pass).collect::<Vec<_>>());
        assert_eq!(a, run_suite(&cfg).unwrap());
    }
}
