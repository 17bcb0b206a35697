//! Sampling of Poisson jump configurations and of the solution `X_t^x`.
//!
//! Jumps below the truncation level `ε` are dropped. Their compensator
//! vanishes for radial `ρ₀`, so the only effect is a small bias that the
//! estimators report separately.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::estimate::SampleRng;
use crate::flow::{FlowCache, FlowSpec};
use crate::levy_model::{LevyModel, Profile, RadialDensity, WeightFunction};
use crate::quadrature::QuadOptions;

/// A finite jump configuration on `[0, t]`: atoms `(s_i, z_i)` sorted by time.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPath {
    pub horizon: f64,
    pub eps: f64,
    pub dim: usize,
    times: Vec<f64>,
    jumps: Vec<f64>,
    /// `-∫_{ε<|z|<=1} z ν₀(dz)` per unit time.
    pub compensator: Vec<f64>,
    pub drift: Vec<f64>,
}

impl JumpPath {
    pub fn empty(dim: usize, horizon: f64, eps: f64) -> Self {
        Self {
            horizon,
            eps,
            dim,
            times: Vec::new(),
            jumps: Vec::new(),
            compensator: vec![0.0; dim],
            drift: vec![0.0; dim],
        }
    }

    /// Builds a path from unsorted atoms.
    pub fn from_atoms(dim: usize, horizon: f64, eps: f64, atoms: &[(f64, Vec<f64>)]) -> Result<Self> {
        let mut idx: Vec<usize> = (0..atoms.len()).collect();
        idx.sort_by(|&a, &b| atoms[a].0.total_cmp(&atoms[b].0));
        let mut p = Self::empty(dim, horizon, eps);
        for i in idx {
            let (s, z) = &atoms[i];
            if z.len() != dim {
                return Err(Error::Domain("atom dimension mismatch".into()));
            }
            if !(*s >= 0.0 && *s <= horizon) {
                return Err(Error::Domain(format!("atom time {s} outside [0, {horizon}]")));
            }
            p.times.push(*s);
            p.jumps.extend_from_slice(z);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn jump(&self, i: usize) -> &[f64] {
        &self.jumps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times.iter().copied().zip(self.jumps.chunks_exact(self.dim.max(1)))
    }

    /// Adds one atom, keeping time order.
    pub fn with_atom(&self, s: f64, z: &[f64]) -> JumpPath {
        let pos = self.times.partition_point(|&x| x <= s);
        let mut p = self.clone();
        p.times.insert(pos, s);
        let at = pos * self.dim;
        for (k, &zk) in z.iter().enumerate() {
            p.jumps.insert(at + k, zk);
        }
        p
    }

    /// Removes atom `i` (the configuration `w - δ_{(z_i, s_i)}`).
    pub fn without_atom(&self, i: usize) -> JumpPath {
        let mut p = self.clone();
        p.times.remove(i);
        p.jumps.drain(i * self.dim..(i + 1) * self.dim);
        p
    }
}

/// `w(g) = Σ g(Δw_s)`.
pub fn path_functional(w: &JumpPath, g: &WeightFunction, rho0: &RadialDensity) -> f64 {
    w.atoms().map(|(_, z)| g.value(z, rho0)).sum()
}

/// Sampler for the normalized radial law `∝ r^{d-1} φ(r)` on `[lo, r₀)`.
#[derive(Clone, Debug)]
pub struct RadialSampler {
    dim: usize,
    plan: Plan,
    /// `ν({|z| >= lo})`.
    pub mass: f64,
}

#[derive(Clone, Debug)]
enum Plan {
    /// `∝ r^γ` on `[lo, hi]`, thinned by `(1 - r/r₀)^k`.
    Pareto { gamma: f64, lo: f64, hi: f64, cut: Option<(f64, f64)> },
    /// `∝ 1/r` on `[lo, hi]`, thinned by `S(r^{-2}) cut(r) / S(lo^{-2})`.
    LogType { lo: f64, hi: f64, density: RadialDensity, d: usize, norm: f64 },
    /// Mass table over geometric cells with a power-law shape inside each.
    Cells { edges: Vec<f64>, cum: Vec<f64>, shape: Vec<f64>, tail: Option<f64> },
}

fn power_law_draw(gamma: f64, lo: f64, hi: f64, u: f64) -> f64 {
    let e = gamma + 1.0;
    if e.abs() < 1e-12 {
        lo * (hi / lo).powf(u)
    } else if hi.is_infinite() {
        lo * (1.0 - u).powf(1.0 / e)
    } else {
        let (a, b) = (lo.powf(e), hi.powf(e));
        (a + u * (b - a)).powf(1.0 / e)
    }
}

impl RadialSampler {
    pub fn new(density: &RadialDensity, dim: usize, lo: f64) -> Result<Self> {
        let lo = lo.max(density.inner);
        let hi = density.support_radius();
        if !(lo > 0.0) {
            return Err(Error::Domain("radial sampler needs a positive lower radius".into()));
        }
        if lo >= hi {
            return Err(Error::InvalidModel(format!(
                "truncation level {lo} is not below the support radius {hi}"
            )));
        }
        let mass = density.tail_mass(dim, lo)?;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidModel(format!("ν₀(|z| >= {lo}) = {mass}: nothing to sample")));
        }
        let d = dim as f64;
        let plan = match &density.profile {
            Profile::Power { beta, r0, k, .. } => {
                let gamma = d - 1.0 - beta;
                if hi.is_infinite() && gamma >= -1.0 {
                    return Err(Error::InvalidModel("infinite mass at large radii".into()));
                }
                Plan::Pareto { gamma, lo, hi, cut: (*k != 0.0).then_some((*r0, *k)) }
            }
            Profile::LogType { d: pd, .. } if *pd == dim && hi.is_finite() => {
                let norm = density.phi(lo) * lo.powi(dim as i32);
                Plan::LogType { lo, hi, density: density.clone(), d: dim, norm }
            }
            _ => Self::cells(density, dim, lo, hi)?,
        };
        Ok(Self { dim, plan, mass })
    }

    fn cells(density: &RadialDensity, dim: usize, lo: f64, hi: f64) -> Result<Plan> {
        let upper = if hi.is_finite() { hi } else { (lo * 1e6).max(1e3) };
        let m = 256;
        let ratio = (upper / lo).powf(1.0 / m as f64);
        let mut edges: Vec<f64> = (0..=m).map(|j| lo * ratio.powi(j as i32)).collect();
        edges[m] = upper;
        let mut brk = density.breakpoints();
        brk.retain(|&x| x > lo && x < upper);
        edges.extend(brk);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let opts = QuadOptions::default().with_rel_tol(1e-10);
        let radial = |r: f64| density.phi(r) * r.powi(dim as i32 - 1);
        let mut cum = vec![0.0];
        let mut shape = Vec::new();
        for w in edges.windows(2) {
            let cell = density.radial_integral(dim, |_| 1.0, w[0], w[1], &[], &opts)?;
            cum.push(cum.last().unwrap() + cell);
            let (fa, fb) = (radial(w[0] * (1.0 + 1e-12)), radial(w[1] * (1.0 - 1e-12)));
            shape.push(if fa > 0.0 && fb > 0.0 { (fb / fa).ln() / (w[1] / w[0]).ln() } else { 0.0 });
        }
        let tail = if hi.is_finite() {
            None
        } else {
            let t = density.tail_mass(dim, upper)?;
            cum.push(cum.last().unwrap() + t);
            let (fa, fb) = (radial(upper), radial(upper * 2.0));
            let g = if fa > 0.0 && fb > 0.0 { (fb / fa).ln() / 2f64.ln() } else { -2.0 };
            Some(g.min(-1.0 - 1e-6))
        };
        Ok(Plan::Cells { edges, cum, shape, tail })
    }

    pub fn sample_radius(&self, rng: &mut SampleRng) -> f64 {
        match &self.plan {
            Plan::Pareto { gamma, lo, hi, cut } => loop {
                let r = power_law_draw(*gamma, *lo, *hi, rng.random::<f64>());
                match cut {
                    None => return r,
                    Some((r0, k)) => {
                        if rng.random::<f64>() < (1.0 - r / r0).max(0.0).powf(*k) {
                            return r;
                        }
                    }
                }
            },
            Plan::LogType { lo, hi, density, d, norm } => loop {
                let r = lo * (hi / lo).powf(rng.random::<f64>());
                let acc = density.phi(r) * r.powi(*d as i32) / norm;
                if rng.random::<f64>() < acc {
                    return r;
                }
            },
            Plan::Cells { edges, cum, shape, tail } => {
                let total = *cum.last().unwrap();
                let u = rng.random::<f64>() * total;
                let j = cum.partition_point(|&c| c <= u).saturating_sub(1);
                let v = rng.random::<f64>();
                if j >= shape.len() {
                    let g = tail.expect("tail cell exists for infinite support");
                    return power_law_draw(g, *edges.last().unwrap(), f64::INFINITY, v);
                }
                power_law_draw(shape[j], edges[j], edges[j + 1], v)
            }
        }
    }

    /// Uniform direction times a sampled radius.
    pub fn sample_jump(&self, rng: &mut SampleRng, out: &mut [f64]) {
        let r = self.sample_radius(rng);
        random_direction(self.dim, rng, out);
        out.iter_mut().for_each(|x| *x *= r);
    }
}

pub fn random_direction(dim: usize, rng: &mut SampleRng, out: &mut [f64]) {
    if dim == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut s = 0.0;
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
            s += *x * *x;
        }
        if s > 1e-300 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

fn poisson(rng: &mut SampleRng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Draws the atoms of a Poisson configuration with intensity
/// `t · sampler-law` on `[0, t]`.
pub fn sample_atoms(sampler: &RadialSampler, t: f64, eps: f64, rng: &mut SampleRng) -> JumpPath {
    let d = sampler.dim;
    let n = poisson(rng, t * sampler.mass);
    let mut p = JumpPath::empty(d, t, eps);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * t).collect();
    times.sort_by(f64::total_cmp);
    p.jumps = vec![0.0; n * d];
    for i in 0..n {
        sampler.sample_jump(rng, &mut p.jumps[i * d..(i + 1) * d]);
    }
    p.times = times;
    p
}

/// `L⁰` path with atoms `|z| >= ε` for the model's lower bound.
pub fn sample_jump_path(model: &LevyModel, t: f64, rng: &mut SampleRng) -> Result<JumpPath> {
    let sampler = RadialSampler::new(&model.rho0, model.dim, model.truncation_eps)?;
    Ok(sample_atoms(&sampler, t, model.truncation_eps, rng))
}

/// `Σ_i T_{s_i,t} σ_{s_i} z_i + ∫₀^t T_{s,t} σ_s (B + c_ε) ds`.
pub fn ito_integral(w: &JumpPath, cache: &FlowCache) -> Result<DVector<f64>> {
    let d = w.dim;
    let mut out = DVector::zeros(d);
    for (s, z) in w.atoms() {
        out += cache.push_jump(s, &DVector::from_column_slice(z));
    }
    let b = DVector::from_fn(d, |i, _| w.drift[i] + w.compensator[i]);
    out += cache.drift_integral(&b, 1e-10)?;
    Ok(out)
}

/// Precomputed simulation of `X_t^x` for a fixed model, flow and horizon.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub model: LevyModel,
    pub cache: FlowCache,
    pub sampler: RadialSampler,
    residual: Option<RadialSampler>,
    drift_shift: DVector<f64>,
    gaussian_chol: Option<DMatrix<f64>>,
}

impl Simulator {
    pub fn new(model: &LevyModel, spec: &FlowSpec, t: f64) -> Result<Self> {
        if spec.dim != model.dim {
            return Err(Error::Domain("model and flow dimensions differ".into()));
        }
        let cache = FlowCache::new(spec, t)?;
        let sampler = RadialSampler::new(&model.rho0, model.dim, model.truncation_eps)?;
        let residual = match &model.residual.jumps {
            Some(j) => {
                let lo = if j.inner > 0.0 { j.inner } else { 1e-12 };
                Some(RadialSampler::new(j, model.dim, lo)?)
            }
            None => None,
        };
        let b = &model.residual.drift + model.compensator();
        let drift_shift = cache.drift_integral(&b, 1e-10)?;
        let gaussian_chol = match &model.residual.gaussian {
            Some(c) if c.iter().any(|&x| x != 0.0) && t > 0.0 => {
                let cov = cache.gaussian_covariance(c)?;
                let d = model.dim;
                let reg = &cov + DMatrix::identity(d, d) * (1e-15 * cov.amax());
                Some(
                    reg.cholesky()
                        .ok_or_else(|| Error::Singular("Gaussian covariance".into()))?
                        .l(),
                )
            }
            _ => None,
        };
        Ok(Self { model: model.clone(), cache, sampler, residual, drift_shift, gaussian_chol })
    }

    pub fn horizon(&self) -> f64 {
        self.cache.horizon()
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn sample_path(&self, rng: &mut SampleRng) -> JumpPath {
        let mut p = sample_atoms(&self.sampler, self.horizon(), self.model.truncation_eps, rng);
        p.drift = self.model.residual.drift.iter().copied().collect();
        p
    }

    /// The `L⁰` stochastic integral of a path (drift and compensator
    /// included).
    pub fn push_path(&self, w: &JumpPath) -> DVector<f64> {
        let mut out = self.drift_shift.clone();
        for (s, z) in w.atoms() {
            out += self.cache.push_jump(s, &DVector::from_column_slice(z));
        }
        out
    }

    /// Contribution of the residual part `L¹` (jumps of `ν₁` and the
    /// Gaussian part).
    pub fn residual_noise(&self, rng: &mut SampleRng) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(d);
        if let Some(rs) = &self.residual {
            let p = sample_atoms(rs, self.horizon(), 0.0, rng);
            for (s, z) in p.atoms() {
                out += self.cache.push_jump(s, &DVector::from_column_slice(z));
            }
        }
        if let Some(l) = &self.gaussian_chol {
            let xi = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            out += l * xi;
        }
        out
    }

    /// `X_t^x = T_t x + ∫ T_{s,t} σ_s dL_s` together with the `L⁰` path used.
    pub fn sample_x_with_path(&self, x: &DVector<f64>, rng: &mut SampleRng) -> (DVector<f64>, JumpPath) {
        let w = self.sample_path(rng);
        let mut out = self.cache.t_total() * x + self.push_path(&w);
        if self.residual.is_some() || self.gaussian_chol.is_some() {
            out += self.residual_noise(rng);
        }
        (out, w)
    }

    pub fn sample_x(&self, x: &DVector<f64>, rng: &mut SampleRng) -> DVector<f64> {
        self.sample_x_with_path(x, rng).0
    }

    /// `X_t^x - T_t x`, which does not depend on `x`.
    pub fn sample_noise(&self, rng: &mut SampleRng) -> (DVector<f64>, JumpPath) {
        let d = self.dim();
        self.sample_x_with_path(&DVector::zeros(d), rng)
    }
}

/// One-shot `X_t^x`; use [`Simulator`] for repeated draws.
pub fn sample_x(model: &LevyModel, spec: &FlowSpec, x: &DVector<f64>, t: f64, rng: &mut SampleRng) -> Result<DVector<f64>> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    Ok(Simulator::new(model, spec, t)?.sample_x(x, rng))
}

/// Writes paths as CSV rows `(sample_id, s, z_1..z_d)`.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[(u64, JumpPath)]) -> Result<()> {
    let d = paths.first().map(|p| p.1.dim).unwrap_or(1);
    let mut header = String::from("sample_id,s");
    for k in 1..=d {
        header.push_str(&format!(",z_{k}"));
    }
    writeln!(out, "{header}")?;
    for (id, p) in paths {
        for (s, z) in p.atoms() {
            let mut line = format!("{id},{s}");
            for v in z {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Sampler for a radial law `∝ q(r) dr` on `[lo, hi)` with an exactly
/// computable density.
///
/// The law is piecewise power-law over geometric cells whose masses come
/// from quadrature of `q`. Quadrature error only changes which law is
/// sampled, never the value returned by [`RadialProposal::pdf`], so
/// importance weights built from `pdf` stay exactly unbiased.
#[derive(Clone, Debug)]
pub struct RadialProposal {
    edges: Vec<f64>,
    /// Cell probabilities, then the tail probability when `hi = ∞`.
    prob: Vec<f64>,
    cum: Vec<f64>,
    shape: Vec<f64>,
    tail: Option<f64>,
    /// `∫ q dr` as computed by quadrature.
    pub total: f64,
}

/// Normalized power-law density `∝ r^γ` on `[a, b]` at `r`.
fn power_law_pdf(gamma: f64, a: f64, b: f64, r: f64) -> f64 {
    let e = gamma + 1.0;
    let x = r / a;
    if b.is_infinite() {
        return -e / a * x.powf(gamma);
    }
    let rho = b / a;
    if e.abs() < 1e-9 {
        return 1.0 / (r * rho.ln());
    }
    e / a * x.powf(gamma) / (rho.powf(e) - 1.0)
}

impl RadialProposal {
    /// `per_decade` geometric cells between `lo` and `hi` (capped at
    /// `lo · 10⁶` when `hi = ∞`, beyond which a power-law tail is fitted).
    pub fn new(q: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64], per_decade: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Domain(format!("proposal range [{lo}, {hi}) is empty")));
        }
        let upper = if hi.is_finite() { hi } else { (lo * 1e6).max(1e3) };
        let m = (((upper / lo).log10() * per_decade as f64).ceil() as usize).max(1);
        let ratio = (upper / lo).powf(1.0 / m as f64);
        let mut edges: Vec<f64> = (0..=m).map(|j| lo * ratio.powi(j as i32)).collect();
        edges[m] = upper;
        edges.extend(breaks.iter().copied().filter(|&x| x > lo && x < upper));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let opts = QuadOptions::default().with_rel_tol(1e-9);
        let mut mass = Vec::with_capacity(edges.len());
        let mut shape = Vec::with_capacity(edges.len());
        for w in edges.windows(2) {
            mass.push(crate::quadrature::integrate(&q, w[0], w[1], &opts)?.value.max(0.0));
            let (fa, fb) = (q(w[0] * (1.0 + 1e-12)), q(w[1] * (1.0 - 1e-12)));
            let g = if fa > 0.0 && fb > 0.0 { (fb / fa).ln() / (w[1] / w[0]).ln() } else { 0.0 };
            shape.push(g.clamp(-60.0, 60.0));
        }
        let tail = if hi.is_finite() {
            None
        } else {
            let t = crate::quadrature::integrate_to_infinity(&q, upper, &opts)?.value.max(0.0);
            mass.push(t);
            let (fa, fb) = (q(upper), q(upper * 2.0));
            let g = if fa > 0.0 && fb > 0.0 { (fb / fa).ln() / 2f64.ln() } else { -2.0 };
            Some(g.min(-1.5))
        };
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidModel(format!("proposal mass {total} is not normalizable")));
        }
        let prob: Vec<f64> = mass.iter().map(|m| m / total).collect();
        let mut cum = vec![0.0];
        for p in &prob {
            cum.push(cum.last().unwrap() + p);
        }
        Ok(Self { edges, prob, cum, shape, tail, total })
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        if self.tail.is_some() { f64::INFINITY } else { *self.edges.last().unwrap() }
    }

    pub fn sample(&self, rng: &mut SampleRng) -> f64 {
        let u = rng.random::<f64>() * self.cum.last().unwrap();
        let j = self.cum.partition_point(|&c| c <= u).saturating_sub(1).min(self.prob.len() - 1);
        let v = rng.random::<f64>();
        if j >= self.shape.len() {
            let g = self.tail.expect("tail cell exists for infinite range");
            return power_law_draw(g, *self.edges.last().unwrap(), f64::INFINITY, v);
        }
        let r = power_law_draw(self.shape[j], self.edges[j], self.edges[j + 1], v);
        r.clamp(self.edges[j], self.edges[j + 1])
    }

    /// Density of the sampled law at `r` (zero outside the range).
    pub fn pdf(&self, r: f64) -> f64 {
        let n = self.edges.len();
        if !(r >= self.edges[0]) {
            return 0.0;
        }
        if r >= self.edges[n - 1] {
            return match self.tail {
                Some(g) => self.prob[n - 1] * power_law_pdf(g, self.edges[n - 1], f64::INFINITY, r),
                None => 0.0,
            };
        }
        let j = self.edges.partition_point(|&e| e <= r) - 1;
        self.prob[j] * power_law_pdf(self.shape[j], self.edges[j], self.edges[j + 1], r)
    }
}
