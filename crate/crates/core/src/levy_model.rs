//! Lévy measures with a radial absolutely continuous lower bound.
//!
//! The lower bound is `ν₀(dz) = φ(|z|) dz`. Integrals against `ν₀` reduce
//! to `κ(d) ∫ f(r) φ(r) r^{d-1} dr` for radial integrands; general
//! integrands are supported in `d ∈ {1, 2}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_positive, QuadOptions};

/// Area of the unit sphere in `R^d`.
pub fn kappa(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h)
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Radial profile `φ`.
#[derive(Clone)]
pub enum Profile {
    /// `c r^{-β} ((1 - r/r₀)^+)^k`; with `k = 0` this is a hard cutoff at
    /// `r₀` (which may be infinite).
    Power { c: f64, beta: f64, r0: f64, k: f64 },
    /// `r^{-d} S(r^{-2}) ((1 - r/r₀)^+)^k` with `S(u) = c₀ log^ε(1+u)`;
    /// `ε = 0` gives `S ≡ c₀`.
    LogType { c0: f64, eps: f64, r0: f64, k: f64, d: usize },
    /// Linear interpolation through `(r_i, φ_i)`, flat below the first node
    /// and zero beyond the last.
    Table { r: Vec<f64>, phi: Vec<f64> },
    Custom { phi: ScalarFn, dphi: ScalarFn, r0: f64, label: String },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Power { c, beta, r0, k } => {
                write!(f, "Power {{ c: {c}, beta: {beta}, r0: {r0}, k: {k} }}")
            }
            Profile::LogType { c0, eps, r0, k, d } => {
                write!(f, "LogType {{ c0: {c0}, eps: {eps}, r0: {r0}, k: {k}, d: {d} }}")
            }
            Profile::Table { r, .. } => write!(f, "Table {{ nodes: {} }}", r.len()),
            Profile::Custom { label, r0, .. } => write!(f, "Custom {{ {label}, r0: {r0} }}"),
        }
    }
}

/// A radial density `z ↦ φ(|z|)` restricted to `inner <= |z| < r₀`.
#[derive(Clone, Debug)]
pub struct RadialDensity {
    pub profile: Profile,
    /// Lower radius below which the density is set to zero (0 for the full
    /// measure, `ε` for the simulated one).
    pub inner: f64,
}

impl RadialDensity {
    pub fn new(profile: Profile) -> Self {
        Self { profile, inner: 0.0 }
    }

    /// `c₀ r^{-(d+α)}` on `(0, ∞)`.
    pub fn stable(d: usize, alpha: f64, c0: f64) -> Self {
        Self::new(Profile::Power { c: c0, beta: d as f64 + alpha, r0: f64::INFINITY, k: 0.0 })
    }

    /// `c₀ r^{-(d+α)}` on `(0, r₀)`, optionally multiplied by
    /// `(1 - r/r₀)^k` to make it vanish smoothly at `r₀`.
    pub fn truncated_stable(d: usize, alpha: f64, c0: f64, r0: f64, k: f64) -> Self {
        Self::new(Profile::Power { c: c0, beta: d as f64 + alpha, r0, k })
    }

    pub fn power(c: f64, beta: f64, r0: f64) -> Self {
        Self::new(Profile::Power { c, beta, r0, k: 0.0 })
    }

    pub fn log_type(d: usize, c0: f64, eps: f64, r0: f64, k: f64) -> Self {
        Self::new(Profile::LogType { c0, eps, r0, k, d })
    }

    pub fn table(r: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != phi.len() {
            return Err(Error::InvalidModel("radial table needs >= 2 matching nodes".into()));
        }
        if r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("radial table nodes must be positive and increasing".into()));
        }
        if phi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("radial table values must be finite and >= 0".into()));
        }
        Ok(Self::new(Profile::Table { r, phi }))
    }

    pub fn from_fn(
        label: impl Into<String>,
        r0: f64,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(Profile::Custom { phi: Arc::new(phi), dphi: Arc::new(dphi), r0, label: label.into() })
    }

    pub fn restricted(&self, inner: f64) -> Self {
        Self { profile: self.profile.clone(), inner: inner.max(self.inner) }
    }

    pub fn support_radius(&self) -> f64 {
        match &self.profile {
            Profile::Power { r0, .. } | Profile::LogType { r0, .. } | Profile::Custom { r0, .. } => *r0,
            Profile::Table { r, .. } => *r.last().expect("table is non-empty"),
        }
    }

    pub fn raw_phi(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Power { c, beta, r0, k } => {
                if r >= *r0 {
                    return 0.0;
                }
                let base = c * r.powf(-beta);
                if *k == 0.0 {
                    base
                } else {
                    base * (1.0 - r / r0).powf(*k)
                }
            }
            Profile::LogType { c0, eps, r0, k, d } => {
                if r >= *r0 {
                    return 0.0;
                }
                let s = if *eps == 0.0 { *c0 } else { c0 * (1.0 / (r * r)).ln_1p().powf(*eps) };
                let cut = if *k == 0.0 { 1.0 } else { (1.0 - r / r0).powf(*k) };
                r.powi(-(*d as i32)) * s * cut
            }
            Profile::Table { r: nodes, phi } => {
                let last = nodes.len() - 1;
                if r >= nodes[last] {
                    return 0.0;
                }
                if r <= nodes[0] {
                    return phi[0];
                }
                let j = nodes.partition_point(|&x| x <= r) - 1;
                let w = (r - nodes[j]) / (nodes[j + 1] - nodes[j]);
                phi[j] + w * (phi[j + 1] - phi[j])
            }
            Profile::Custom { phi, r0, .. } => {
                if r >= *r0 {
                    0.0
                } else {
                    phi(r)
                }
            }
        }
    }

    pub fn raw_dphi(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Power { c, beta, r0, k } => {
                if r >= *r0 {
                    return 0.0;
                }
                let base = c * r.powf(-beta);
                if *k == 0.0 {
                    -beta * base / r
                } else {
                    let u = 1.0 - r / r0;
                    base * u.powf(*k) * (-beta / r - k / (r0 * u))
                }
            }
            Profile::LogType { eps, r0, k, d, .. } => {
                let v = self.raw_phi(r);
                if v == 0.0 {
                    return 0.0;
                }
                let ell = (1.0 / (r * r)).ln_1p();
                let dlog_s = if *eps == 0.0 { 0.0 } else { eps * (-2.0 / (r * (r * r + 1.0))) / ell };
                let dlog_cut = if *k == 0.0 { 0.0 } else { -k / (r0 - r) };
                v * (-(*d as f64) / r + dlog_s + dlog_cut)
            }
            Profile::Table { r: nodes, phi } => {
                let last = nodes.len() - 1;
                if r >= nodes[last] || r < nodes[0] {
                    return 0.0;
                }
                let j = (nodes.partition_point(|&x| x <= r) - 1).min(last - 1);
                (phi[j + 1] - phi[j]) / (nodes[j + 1] - nodes[j])
            }
            Profile::Custom { dphi, r0, .. } => {
                if r >= *r0 {
                    0.0
                } else {
                    dphi(r)
                }
            }
        }
    }

    /// `φ(r)`, zero outside `[inner, r₀)`.
    pub fn phi(&self, r: f64) -> f64 {
        if r < self.inner || !(r > 0.0) {
            return 0.0;
        }
        self.raw_phi(r)
    }

    pub fn dphi(&self, r: f64) -> f64 {
        if r < self.inner || !(r > 0.0) {
            return 0.0;
        }
        self.raw_dphi(r)
    }

    /// Radii where the profile or its derivative may be non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![1.0];
        if self.inner > 0.0 {
            b.push(self.inner);
        }
        let r0 = self.support_radius();
        if r0.is_finite() {
            b.push(r0);
        }
        if let Profile::Table { r, .. } = &self.profile {
            b.extend_from_slice(r);
        }
        b.retain(|&x| x >= self.inner && x <= r0);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `κ(d) ∫_a^b f(r) φ(r) r^{d-1} dr`, with `[a, b]` clipped to the support.
    pub fn radial_integral(
        &self,
        d: usize,
        f: impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        extra_breaks: &[f64],
        opts: &QuadOptions,
    ) -> Result<f64> {
        let lo = a.max(self.inner).max(0.0);
        let hi = b.min(self.support_radius());
        if !(hi > lo) {
            return Ok(0.0);
        }
        let mut breaks = self.breakpoints();
        breaks.extend_from_slice(extra_breaks);
        let dm1 = d as i32 - 1;
        let integrand = |r: f64| {
            let p = self.phi(r);
            if p == 0.0 {
                return 0.0;
            }
            let v = f(r);
            if v == 0.0 {
                0.0
            } else {
                v * p * r.powi(dm1)
            }
        };
        let q = integrate_positive(integrand, lo, hi, &breaks, opts)?;
        Ok(kappa(d) * q.value)
    }

    /// `ν({|z| >= a})`.
    pub fn tail_mass(&self, d: usize, a: f64) -> Result<f64> {
        self.radial_integral(d, |_| 1.0, a, f64::INFINITY, &[], &QuadOptions::default())
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        self.phi(norm(z))
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let r = norm(z);
        let dp = self.dphi(r);
        z.iter().map(|&zi| if r > 0.0 { dp * zi / r } else { 0.0 }).collect()
    }
}

pub fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Non-negative weight `g` on the jump space.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightFunction {
    /// `scale · |z|^k · 1{|z| <= cutoff}` (cutoff may be infinite).
    Power { k: f64, cutoff: f64, scale: f64 },
    /// `scale / (1 ∨ ρ₀(z))`.
    InverseDensity { scale: f64 },
    Constant { value: f64 },
}

impl WeightFunction {
    pub fn power(k: f64) -> Self {
        WeightFunction::Power { k, cutoff: f64::INFINITY, scale: 1.0 }
    }

    pub fn inverse_density() -> Self {
        WeightFunction::InverseDensity { scale: 1.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            WeightFunction::Power { k, cutoff, scale } => {
                WeightFunction::Power { k: *k, cutoff: *cutoff, scale: scale * c }
            }
            WeightFunction::InverseDensity { scale } => WeightFunction::InverseDensity { scale: scale * c },
            WeightFunction::Constant { value } => WeightFunction::Constant { value: value * c },
        }
    }

    /// `g` at radius `r` (all catalog weights are radial).
    pub fn value_r(&self, r: f64, rho0: &RadialDensity) -> f64 {
        match self {
            WeightFunction::Power { k, cutoff, scale } => {
                if r > *cutoff {
                    0.0
                } else {
                    scale * r.powf(*k)
                }
            }
            WeightFunction::InverseDensity { scale } => scale / rho0.raw_phi(r).max(1.0),
            WeightFunction::Constant { value } => *value,
        }
    }

    pub fn deriv_r(&self, r: f64, rho0: &RadialDensity) -> f64 {
        match self {
            WeightFunction::Power { k, cutoff, scale } => {
                if r > *cutoff || r == 0.0 {
                    0.0
                } else {
                    scale * k * r.powf(k - 1.0)
                }
            }
            WeightFunction::InverseDensity { scale } => {
                let p = rho0.raw_phi(r);
                if p > 1.0 {
                    -scale * rho0.raw_dphi(r) / (p * p)
                } else {
                    0.0
                }
            }
            WeightFunction::Constant { .. } => 0.0,
        }
    }

    pub fn value(&self, z: &[f64], rho0: &RadialDensity) -> f64 {
        self.value_r(norm(z), rho0)
    }

    pub fn gradient(&self, z: &[f64], rho0: &RadialDensity) -> Vec<f64> {
        let r = norm(z);
        let dg = self.deriv_r(r, rho0);
        z.iter().map(|&zi| if r > 0.0 { dg * zi / r } else { 0.0 }).collect()
    }

    /// Radii where `g` is non-smooth.
    pub fn breakpoints(&self, rho0: &RadialDensity) -> Vec<f64> {
        match self {
            WeightFunction::Power { cutoff, .. } if cutoff.is_finite() => vec![*cutoff],
            WeightFunction::InverseDensity { .. } => unit_level_radius(rho0).into_iter().collect(),
            _ => vec![],
        }
    }
}

/// Radius where a decreasing profile crosses 1, if any.
pub fn unit_level_radius(rho0: &RadialDensity) -> Option<f64> {
    let r0 = rho0.support_radius();
    let mut lo = 1e-300_f64.max(rho0.inner * 0.5);
    let mut hi = if r0.is_finite() { r0 } else { 1.0 };
    while rho0.raw_phi(hi) > 1.0 && hi.is_finite() {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    if rho0.raw_phi(lo) <= 1.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if rho0.raw_phi(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `φ⁻¹(y)` for a strictly decreasing profile, by bisection in `log r`.
pub fn inverse_profile(phi: &RadialDensity, y: f64) -> f64 {
    let r0 = phi.support_radius();
    let mut lo = -700.0_f64;
    let mut hi = if r0.is_finite() { r0.ln() } else { 700.0 };
    if phi.raw_phi(lo.exp()) <= y {
        return 0.0;
    }
    if r0.is_infinite() && phi.raw_phi(hi.exp()) > y {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi.raw_phi(mid.exp()) > y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// The part `ν₁ = ν - ν₀` of the Lévy measure plus the Gaussian part and
/// drift.
#[derive(Clone, Debug)]
pub struct Residual {
    /// Finite-activity radial jump density; its total mass is the rate `λ₁`.
    pub jumps: Option<RadialDensity>,
    pub gaussian: Option<DMatrix<f64>>,
    pub drift: DVector<f64>,
}

impl Residual {
    pub fn none(d: usize) -> Self {
        Self { jumps: None, gaussian: None, drift: DVector::zeros(d) }
    }
}

#[derive(Clone, Debug)]
pub struct LevyModel {
    pub dim: usize,
    pub rho0: RadialDensity,
    pub residual: Residual,
    pub truncation_eps: f64,
}

impl LevyModel {
    pub fn new(dim: usize, rho0: RadialDensity, truncation_eps: f64) -> Self {
        Self { dim, rho0, residual: Residual::none(dim), truncation_eps }
    }

    /// The measure actually simulated: `ν₀` restricted to `|z| >= ε`.
    pub fn simulated(&self) -> LevyModel {
        LevyModel { rho0: self.rho0.restricted(self.truncation_eps), ..self.clone() }
    }

    /// Small-jump compensator `-∫_{ε<|z|<=1} z ν₀(dz)`; zero for radial ρ₀.
    pub fn compensator(&self) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
}

/// `∫ f(z) ρ₀(z) dz` over the annulus `a <= |z| <= b`. Requires `d ∈ {1, 2}`
/// for non-radial integrands.
pub fn nu0_integral(
    model: &LevyModel,
    integrand: impl Fn(&[f64]) -> f64,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    let rho = &model.rho0;
    match model.dim {
        1 => rho.radial_integral(1, |r| 0.5 * (integrand(&[r]) + integrand(&[-r])), a, b, &[], opts),
        2 => {
            let inner = QuadOptions { rel_tol: (opts.rel_tol * 0.1).max(1e-12), ..*opts };
            let angular = |r: f64| {
                let q = integrate(
                    |th: f64| integrand(&[r * th.cos(), r * th.sin()]),
                    0.0,
                    2.0 * std::f64::consts::PI,
                    &inner,
                );
                q.map(|q| q.value / (2.0 * std::f64::consts::PI)).unwrap_or(f64::NAN)
            };
            rho.radial_integral(2, angular, a, b, &[], opts)
        }
        d => Err(Error::Domain(format!(
            "non-radial nu0 integrals are implemented for d in {{1, 2}}, got d = {d}"
        ))),
    }
}

/// `∫ f(|z|) ρ₀(z) dz` over `a <= |z| <= b` for a radial integrand.
pub fn nu0_radial_integral(
    model: &LevyModel,
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    model.rho0.radial_integral(model.dim, f, a, b, &[], opts)
}

/// `μ_t(g) = t ∫ g ρ₀ dz`.
pub fn mu_t(model: &LevyModel, g: &WeightFunction, t: f64) -> Result<f64> {
    let breaks = g.breakpoints(&model.rho0);
    let v = model.rho0.radial_integral(
        model.dim,
        |r| g.value_r(r, &model.rho0),
        0.0,
        f64::INFINITY,
        &breaks,
        &QuadOptions::default(),
    )?;
    Ok(t * v)
}

/// `μ_t(g > 0) = t ν₀(g > 0)`, possibly infinite.
pub fn mu_t_support(model: &LevyModel, g: &WeightFunction, t: f64) -> Result<f64> {
    let breaks = g.breakpoints(&model.rho0);
    match model.rho0.radial_integral(
        model.dim,
        |r| if g.value_r(r, &model.rho0) > 0.0 { 1.0 } else { 0.0 },
        0.0,
        f64::INFINITY,
        &breaks,
        &QuadOptions::default(),
    ) {
        Ok(v) => Ok(t * v),
        Err(Error::Divergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `μ_t(1 - e^{-r g}) = t ∫ (1 - e^{-r g(z)}) ρ₀(z) dz`.
pub fn mu_t_exp_integral(model: &LevyModel, g: &WeightFunction, r: f64, t: f64) -> Result<f64> {
    if !(r >= 0.0) || !(t > 0.0) {
        return Err(Error::Domain(format!("need r >= 0 and t > 0, got r = {r}, t = {t}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let mut breaks = g.breakpoints(&model.rho0);
    // Where r g(z) ≈ 1 the integrand changes regime.
    if let WeightFunction::Power { k, scale, .. } = g {
        breaks.push((1.0 / (r * scale)).powf(1.0 / k));
    }
    if let WeightFunction::InverseDensity { scale } = g {
        if r * scale > 1.0 {
            let b = inverse_profile(&model.rho0, r * scale);
            if b > 0.0 && b.is_finite() {
                breaks.push(b);
            }
        }
    }
    // Decade ladder below 1 so steep regimes are bracketed.
    let ladder: Vec<f64> = breaks
        .iter()
        .filter(|&&b| b > 0.0 && b < 1.0)
        .flat_map(|&b| (1..).map(move |j| b * 10f64.powi(j)).take_while(|&x| x < 1.0))
        .collect();
    breaks.extend(ladder);
    let v = model.rho0.radial_integral(
        model.dim,
        |rad| -(-r * g.value_r(rad, &model.rho0)).exp_m1(),
        0.0,
        f64::INFINITY,
        &breaks,
        &QuadOptions::default().with_rel_tol(1e-10),
    )?;
    Ok(t * v)
}

#[derive(Debug, Clone)]
pub struct ModelDiagnostics {
    /// `∫ (1 ∧ |z|²) ν₀(dz)`, `+∞` if the quadrature diverges.
    pub levy_integral: f64,
    /// `ν₀({|z| >= 1})`.
    pub mass_outside_unit: f64,
    /// `(ε, ν₀({|z| >= ε}))` for `ε = 1e-1, …, 1e-6`.
    pub mass_by_eps: Vec<(f64, f64)>,
    pub infinite_activity: bool,
    /// `ν₀({|z| >= truncation_eps})`.
    pub simulated_mass: f64,
    pub violations: Vec<String>,
}

impl ModelDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_model(model: &LevyModel) -> ModelDiagnostics {
    let rho = &model.rho0;
    let d = model.dim;
    let opts = QuadOptions::default();
    let mut violations = Vec::new();
    if d == 0 {
        violations.push("dimension must be positive".into());
    }
    if !(model.truncation_eps > 0.0) {
        violations.push(format!("truncation_eps must be > 0, got {}", model.truncation_eps));
    }
    let levy_integral = match rho.radial_integral(d, |r| (r * r).min(1.0), 0.0, f64::INFINITY, &[], &opts) {
        Ok(v) => v,
        Err(_) => f64::INFINITY,
    };
    if !levy_integral.is_finite() {
        violations.push("∫(1 ∧ |z|²) ν₀(dz) diverges".into());
    }
    let mass_outside_unit = rho.tail_mass(d, 1.0).unwrap_or(f64::INFINITY);
    if !mass_outside_unit.is_finite() {
        violations.push("ν₀({|z| >= 1}) is infinite".into());
    }
    let mass_by_eps: Vec<(f64, f64)> = (1..=6)
        .map(|j| {
            let e = 10f64.powi(-j);
            (e, rho.tail_mass(d, e).unwrap_or(f64::INFINITY))
        })
        .collect();
    let increasing = mass_by_eps.windows(2).all(|w| w[1].1 >= w[0].1);
    let big = mass_by_eps.last().map(|x| x.1 > 1e6).unwrap_or(false);
    // Slowly growing (log-type) masses stay below 1e6 at 1e-6, so the full
    // integral is also classified directly.
    let full_divergent = matches!(
        rho.radial_integral(d, |_| 1.0, 0.0, f64::INFINITY, &[], &opts),
        Err(Error::Divergent { .. })
    );
    let infinite_activity = increasing && (big || full_divergent);
    for &(e, m) in &mass_by_eps {
        if !(m >= 0.0) {
            violations.push(format!("negative or undefined tail mass {m} at ε = {e}"));
        }
    }
    let simulated_mass = rho.tail_mass(d, model.truncation_eps).unwrap_or(f64::INFINITY);
    if simulated_mass == 0.0 {
        violations.push(format!(
            "ν₀({{|z| >= {}}}) = 0: empty lower bound at the truncation level",
            model.truncation_eps
        ));
    }
    if let Some(j) = &model.residual.jumps {
        match j.tail_mass(d, 0.0) {
            Ok(m) if m.is_finite() => {}
            _ => violations.push("residual jump measure must be finite".into()),
        }
    }
    if model.residual.drift.len() != d {
        violations.push("drift dimension mismatch".into());
    }
    if let Some(c) = &model.residual.gaussian {
        if c.nrows() != d || c.ncols() != d {
            violations.push("Gaussian covariance dimension mismatch".into());
        } else if c.clone().symmetric_eigen().eigenvalues.iter().any(|&l| l < -1e-12) {
            violations.push("Gaussian covariance is not positive semidefinite".into());
        }
    }
    ModelDiagnostics {
        levy_integral,
        mass_outside_unit,
        mass_by_eps,
        infinite_activity,
        simulated_mass,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_square() -> LevyModel {
        LevyModel::new(1, RadialDensity::power(1.0, 2.0, 1.0), 1e-2)
    }

    #[test]
    fn sphere_areas() {
        assert!((kappa(1) - 2.0).abs() < 1e-14);
        assert!((kappa(2) - 2.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((kappa(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn validate_examples() {
        let diag = validate_model(&inv_square());
        assert!(diag.infinite_activity);
        assert!((diag.levy_integral - 2.0).abs() < 1e-8);
        assert!(diag.is_valid());

        let unit = LevyModel::new(1, RadialDensity::power(1.0, 0.0, 1.0), 1e-2);
        let diag = validate_model(&unit);
        assert!(!diag.infinite_activity);
        assert!((diag.mass_by_eps[5].1 - 2.0).abs() < 1e-5);

        let cauchy = LevyModel::new(1, RadialDensity::stable(1, 1.0, 1.0), 1e-2);
        let diag = validate_model(&cauchy);
        assert!((diag.mass_outside_unit - 2.0).abs() < 1e-8);
        assert!(diag.infinite_activity);
    }

    #[test]
    fn log_type_is_infinite_activity() {
        let m = LevyModel::new(1, RadialDensity::log_type(1, 1.0, 1.0, 2.0, 4.0), 1e-3);
        let diag = validate_model(&m);
        assert!(diag.mass_by_eps[5].1 < 1e6);
        assert!(diag.infinite_activity);
        assert!(diag.levy_integral.is_finite());
    }

    #[test]
    fn invalid_levy_measure_is_reported() {
        let m = LevyModel::new(1, RadialDensity::power(1.0, 3.5, 1.0), 1e-2);
        let diag = validate_model(&m);
        assert!(!diag.is_valid());
        assert!(diag.levy_integral.is_infinite());
    }

    #[test]
    fn nu0_integral_examples() {
        let m = inv_square();
        let o = QuadOptions::default();
        let r = nu0_integral(&m, |z| z[0].abs(), 0.0, 1.0, &o);
        assert!(matches!(r, Err(Error::Divergent { .. })));
        let v = nu0_integral(&m, |z| z[0] * z[0], 0.0, 1.0, &o).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        assert_eq!(nu0_integral(&m, |_| 0.0, 0.0, 1.0, &o).unwrap(), 0.0);
    }

    #[test]
    fn nu0_integral_two_dims() {
        let m = LevyModel::new(2, RadialDensity::power(1.0, 0.0, 1.0), 1e-2);
        let o = QuadOptions::default();
        let area = nu0_integral(&m, |_| 1.0, 0.0, 1.0, &o).unwrap();
        assert!((area - std::f64::consts::PI).abs() < 1e-10);
        let v = nu0_integral(&m, |z| z[0] * z[0], 0.0, 1.0, &o).unwrap();
        assert!((v - std::f64::consts::PI / 4.0).abs() < 1e-10);
    }

    #[test]
    fn mu_t_exp_examples() {
        let m = inv_square();
        let g = WeightFunction::power(1.0);
        assert_eq!(mu_t_exp_integral(&m, &g, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(mu_t_exp_integral(&m, &g, 1.0, 1.0), Err(Error::Divergent { .. })));
        let sim = m.simulated();
        let v1 = mu_t_exp_integral(&sim, &g, 1.0, 1.0).unwrap();
        assert!((v1 - 8.362883416794461).abs() < 1e-9 * 8.36, "{v1}");
        let v2 = mu_t_exp_integral(&sim, &g, 2.0, 1.0).unwrap();
        assert!(v2 >= v1);
    }

    #[test]
    fn stable_inverse_density_closed_form() {
        // c₀ = 1: μ_t(1 - e^{-r g}) = 2t √(πr) erf(√r).
        let m = LevyModel::new(1, RadialDensity::stable(1, 1.0, 1.0), 1e-2);
        let g = WeightFunction::inverse_density();
        for &r in &[0.1, 1.0, 7.0, 100.0] {
            let v = mu_t_exp_integral(&m, &g, r, 0.5).unwrap();
            let want = (std::f64::consts::PI * r).sqrt() * statrs::function::erf::erf(r.sqrt());
            assert!((v - want).abs() < 1e-8 * want, "r={r} {v} {want}");
        }
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        let profiles = [
            RadialDensity::stable(2, 0.7, 1.3),
            RadialDensity::truncated_stable(1, 0.5, 1.0, 1.0, 4.0),
            RadialDensity::log_type(1, 1.0, 1.0, 2.0, 4.0),
            RadialDensity::log_type(2, 0.5, 2.0, 1.5, 3.0),
            RadialDensity::log_type(1, 5.0, 0.0, 1.0, 4.0),
        ];
        for p in &profiles {
            let r0 = p.support_radius().min(3.0);
            for i in 1..200 {
                let r = r0 * i as f64 / 200.0;
                let h = 1e-6 * r;
                let fd = (p.phi(r + h) - p.phi(r - h)) / (2.0 * h);
                let an = p.dphi(r);
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{p:?} r={r} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn table_profile() {
        let t = RadialDensity::table(vec![0.5, 1.0, 2.0], vec![2.0, 1.0, 0.0]).unwrap();
        assert_eq!(t.phi(0.1), 2.0);
        assert!((t.phi(0.75) - 1.5).abs() < 1e-15);
        assert_eq!(t.phi(2.5), 0.0);
        assert_eq!(t.dphi(1.5), -1.0);
        assert!(RadialDensity::table(vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        let mass = t.tail_mass(1, 0.0).unwrap();
        assert!((mass - 2.0 * (1.0 + 0.75 + 0.5)).abs() < 1e-10);
    }

    #[test]
    fn inverse_density_weight() {
        let rho = RadialDensity::stable(1, 1.0, 1.0);
        let g = WeightFunction::inverse_density();
        assert!((g.value_r(0.5, &rho) - 0.25).abs() < 1e-15);
        assert_eq!(g.value_r(2.0, &rho), 1.0);
        assert!((g.deriv_r(0.5, &rho) - 1.0).abs() < 1e-12);
        assert_eq!(g.deriv_r(2.0, &rho), 0.0);
        let r1 = unit_level_radius(&rho).unwrap();
        assert!((r1 - 1.0).abs() < 1e-12);
    }
}
