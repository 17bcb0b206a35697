//! Monte Carlo checks of the Harnack and log-Harnack inequalities, and an
//! exact reference for the one-dimensional stable Ornstein–Uhlenbeck
//! semigroup.
//!
//! When the model is a pure symmetric α-stable law in one dimension with
//! constant coefficients, `X_t` is sampled exactly (Chambers–Mallows–Stuck);
//! everything else goes through the truncated path simulator.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{grad_bound_c12, harnack_bound_t41, logharnack_bound_tlh, BoundInputs};
use crate::error::{Error, Result};
use crate::estimate::{derive_seed, run_mc, MCEstimate, SampleRng};
use crate::flow::{FlowCache, FlowSpec};
use crate::levy_model::{kappa, validate_model, LevyModel, Profile, RadialDensity, WeightFunction};
use crate::mecke_girsanov::gradient_mc;
use crate::pathsim::{random_direction, RadialProposal, RadialSampler, Simulator};
use crate::quadrature::{integrate_to_infinity, integrate_with_breaks, QuadOptions};
use crate::testfn::TestFunction;

/// `∫_R (1 - cos z) |z|^{-1-α} dz`, so that `c₀|z|^{-1-α}dz` has Lévy
/// exponent `c₀ C_α |ξ|^α`.
pub fn stable_char_constant(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-12 {
        PI
    } else {
        2.0 * statrs::function::gamma::gamma(1.0 - alpha) * (PI * alpha / 2.0).cos() / alpha
    }
}

/// Standard symmetric α-stable draw, `E e^{iξS} = e^{-|ξ|^α}`.
pub fn standard_stable(alpha: f64, rng: &mut SampleRng) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let w = -(1.0 - rng.random::<f64>()).ln();
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha)
}

const TAIL_START: f64 = 25.0;

/// Density and derivative of the standard symmetric α-stable law at `u`.
///
/// The Fourier integral `π⁻¹∫₀^∞ e^{-ξ^α} cos(ξu) dξ` is summed over half
/// periods for `|u| < 25`; beyond that the asymptotic series in `|u|^{-kα-1}`
/// is used.
pub fn standard_stable_density(alpha: f64, u: f64) -> Result<(f64, f64)> {
    if !(0.5..=1.8).contains(&alpha) {
        return Err(Error::Domain(format!("the stable density oracle supports α ∈ [0.5, 1.8], got {alpha}")));
    }
    let au = u.abs();
    let (p, dp) = if au >= TAIL_START { density_series(alpha, au) } else { density_fourier(alpha, au)? };
    Ok((p, if u < 0.0 { -dp } else { dp }))
}

fn density_series(alpha: f64, u: f64) -> (f64, f64) {
    use statrs::function::gamma::ln_gamma;
    let (mut p, mut dp) = (0.0, 0.0);
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let s = (kf * PI * alpha / 2.0).sin();
        let mag = (ln_gamma(kf * alpha + 1.0) - ln_gamma(kf + 1.0) - (kf * alpha + 1.0) * u.ln()).exp();
        if mag > prev {
            break;
        }
        prev = mag;
        let term = if k % 2 == 1 { mag * s } else { -mag * s } / PI;
        p += term;
        dp -= term * (kf * alpha + 1.0) / u;
        if mag < 1e-18 * p.abs() {
            break;
        }
    }
    (p, dp)
}

fn density_fourier(alpha: f64, u: f64) -> Result<(f64, f64)> {
    let xi_max = 42f64.powf(1.0 / alpha);
    let mut breaks: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
    if u > 0.0 {
        let half = PI / u;
        let n = ((xi_max / half).ceil() as usize).min(200_000);
        breaks.extend((1..n).map(|j| j as f64 * half));
    }
    let opts = QuadOptions::default().with_rel_tol(1e-12).with_abs_tol(1e-16);
    let p = integrate_with_breaks(|x| (-x.powf(alpha)).exp() * (x * u).cos(), 0.0, xi_max, &breaks, &opts)?.value / PI;
    let dp = if u == 0.0 {
        0.0
    } else {
        -integrate_with_breaks(|x| x * (-x.powf(alpha)).exp() * (x * u).sin(), 0.0, xi_max, &breaks, &opts)?.value / PI
    };
    Ok((p, dp))
}

/// `dX = aX dt + σ dL` with `L` symmetric α-stable of Lévy density
/// `c₀|z|^{-1-α}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StableOu {
    pub a: f64,
    pub alpha: f64,
    pub c0: f64,
    pub sigma: f64,
}

impl StableOu {
    pub fn new(a: f64, alpha: f64, c0: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) || !(c0 > 0.0) || sigma == 0.0 || !a.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!(
                "stable OU needs α ∈ (0, 2), c₀ > 0, σ ≠ 0; got α = {alpha}, c₀ = {c0}, σ = {sigma}"
            )));
        }
        Ok(Self { a, alpha, c0, sigma })
    }

    /// Recognizes a pure stable model with constant scalar coefficients.
    pub fn from_model(model: &LevyModel, spec: &FlowSpec) -> Option<Self> {
        if model.dim != 1 || spec.dim != 1 || !spec.is_constant() || model.rho0.inner != 0.0 {
            return None;
        }
        let r = &model.residual;
        if r.jumps.is_some() || r.gaussian.is_some() || r.drift.iter().any(|&b| b != 0.0) {
            return None;
        }
        match model.rho0.profile {
            Profile::Power { c, beta, r0, k } if r0.is_infinite() && k == 0.0 => {
                Self::new(spec.a_at(0.0)[(0, 0)], beta - 1.0, c, spec.sigma_at(0.0)[(0, 0)]).ok()
            }
            _ => None,
        }
    }

    pub fn model(&self, truncation_eps: f64) -> LevyModel {
        LevyModel::new(1, RadialDensity::stable(1, self.alpha, self.c0), truncation_eps)
    }

    pub fn spec(&self) -> Result<FlowSpec> {
        FlowSpec::scalar(self.a, self.sigma)
    }

    /// Scale of `X_t - e^{at}x`: `(c₀C_α|σ|^α ∫₀^t e^{αa(t-s)} ds)^{1/α}`.
    pub fn scale(&self, t: f64) -> f64 {
        let c = self.alpha * self.a;
        let int = if c.abs() < 1e-12 { t } else { (c * t).exp_m1() / c };
        (self.c0 * stable_char_constant(self.alpha) * self.sigma.abs().powf(self.alpha) * int).powf(1.0 / self.alpha)
    }

    pub fn sample(&self, x: f64, t: f64, rng: &mut SampleRng) -> f64 {
        (self.a * t).exp() * x + self.scale(t) * standard_stable(self.alpha, rng)
    }

    /// `(P_tf(x), ∂_x P_tf(x))` by quadrature against the exact density.
    pub fn oracle(&self, x: f64, t: f64, f: &TestFunction) -> Result<(f64, f64)> {
        if f.dim().is_some_and(|d| d != 1) {
            return Err(Error::Domain("the stable OU oracle is one-dimensional".into()));
        }
        if !(0.5..=1.8).contains(&self.alpha) {
            return Err(Error::Domain(format!("the stable density oracle supports α ∈ [0.5, 1.8], got {}", self.alpha)));
        }
        if !(t > 0.0) {
            return Err(Error::Domain(format!("oracle needs t > 0, got {t}")));
        }
        let e = (self.a * t).exp();
        let m = e * x;
        let s = self.scale(t);
        let fv = |u: f64| f.value(&[m + s * u]);
        let mut breaks: Vec<f64> = (-25..=25).map(|k| k as f64).collect();
        for (c, w) in features(f) {
            for j in [-8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
                breaks.push((c + j * w - m) / s);
            }
        }
        let opts = QuadOptions::default().with_rel_tol(1e-11).with_abs_tol(1e-13);
        let alpha = self.alpha;
        let fail = std::cell::RefCell::new(None);
        let dens = |u: f64| match standard_stable_density(alpha, u) {
            Ok(v) => v,
            Err(err) => {
                fail.borrow_mut().get_or_insert(err);
                (f64::NAN, f64::NAN)
            }
        };
        let mid_p = integrate_with_breaks(|u| fv(u) * dens(u).0, -TAIL_START, TAIL_START, &breaks, &opts);
        let mid_d = integrate_with_breaks(|u| fv(u) * dens(u).1, -TAIL_START, TAIL_START, &breaks, &opts);
        if let Some(err) = fail.into_inner() {
            return Err(err);
        }
        let tail_opts = opts.with_scale(TAIL_START);
        let tail_p = integrate_to_infinity(|u| (fv(u) + fv(-u)) * density_series(alpha, u).0, TAIL_START, &tail_opts)?;
        let tail_d = integrate_to_infinity(|u| (fv(u) - fv(-u)) * density_series(alpha, u).1, TAIL_START, &tail_opts)?;
        let p = mid_p?.value + tail_p.value;
        let dp = mid_d?.value + tail_d.value;
        Ok((p, -e / s * dp))
    }
}

/// Centers and widths where a 1-d test function varies.
fn features(f: &TestFunction) -> Vec<(f64, f64)> {
    match f {
        TestFunction::Constant { .. } => vec![],
        TestFunction::Linear { c } => vec![(0.0, 1.0 / c[0].abs().max(1e-12))],
        TestFunction::Ramp { c, width, len, .. } => {
            let k = c[0].abs().max(1e-12);
            vec![(0.0, width / k), (len / c[0], width / k)]
        }
        TestFunction::GaussianBump { m, width, .. } => vec![(m[0], *width)],
        TestFunction::Step { e, m, width, .. } => vec![(m * e[0], *width)],
    }
}

/// Exact `(P_tf(x), ∇P_tf(x))` for `dX = aX dt + dL`, `L` symmetric α-stable
/// with Lévy density `c₀|z|^{-1-α}`.
pub fn stable_ou_oracle_1d(a: f64, alpha: f64, c0: f64, x: f64, t: f64, f: &TestFunction) -> Result<(f64, f64)> {
    StableOu::new(a, alpha, c0, 1.0)?.oracle(x, t, f)
}

/// Draws `X_t^0`, exactly when possible.
pub struct EndpointSampler {
    exact: Option<StableOu>,
    sim: Option<Simulator>,
    cache: FlowCache,
    t: f64,
}

impl EndpointSampler {
    pub fn new(model: &LevyModel, spec: &FlowSpec, t: f64) -> Result<Self> {
        let cache = FlowCache::new(spec, t)?;
        let exact = StableOu::from_model(model, spec);
        let sim = if exact.is_none() { Some(Simulator::new(model, spec, t)?) } else { None };
        Ok(Self { exact, sim, cache, t })
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn dim(&self) -> usize {
        self.cache.spec().dim
    }

    /// `T_t v`.
    pub fn push(&self, v: &[f64]) -> DVector<f64> {
        self.cache.t_total() * DVector::from_column_slice(v)
    }

    pub fn noise(&self, rng: &mut SampleRng) -> DVector<f64> {
        match (&self.exact, &self.sim) {
            (Some(ou), _) => DVector::from_element(1, ou.scale(self.t) * standard_stable(ou.alpha, rng)),
            (None, Some(sim)) => sim.sample_noise(rng).0,
            (None, None) => unreachable!("one of the samplers is always built"),
        }
    }
}

/// One inequality check.
#[derive(Clone, Debug)]
pub struct HarnackReport {
    pub check: String,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub p: f64,
    pub t: f64,
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub bound: f64,
    /// Standard error of `bound` when it is itself a Monte Carlo estimate.
    pub bound_se: f64,
    /// `(bound·rhs - lhs) / SE` for the multiplicative checks,
    /// `(rhs + bound - lhs) / SE` for the additive ones.
    pub margin_se: f64,
    pub pass: bool,
    pub vacuous: bool,
}

impl HarnackReport {
    pub fn h_norm(&self) -> f64 {
        self.h.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub const CSV_HEADER: &'static str = "check,p,t,h_norm,lhs,lhs_se,rhs,rhs_se,bound,margin_se,pass,vacuous";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.check,
            if self.p.is_nan() { String::new() } else { self.p.to_string() },
            self.t,
            self.h_norm(),
            self.lhs.scalar(),
            self.lhs.se(),
            self.rhs.scalar(),
            self.rhs.se(),
            self.bound,
            self.margin_se,
            self.pass,
            self.vacuous
        )
    }
}

fn margin(num: f64, se: f64) -> f64 {
    if se > 0.0 {
        num / se
    } else if num >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn bound_inputs(model: &LevyModel, spec: &FlowSpec, g: &WeightFunction, p: f64, t: f64, h: &[f64]) -> BoundInputs {
    BoundInputs { model: model.clone(), g: g.clone(), spec: spec.clone(), p, t, h_norm: norm(h), norms: None }
}

fn check_positive(f: &TestFunction, lower: f64) -> Result<()> {
    match f.range() {
        Some((lo, hi)) if lo >= lower && lo > 0.0 && hi.is_finite() => Ok(()),
        _ => Err(Error::Domain(format!("the test function must be bounded with inf f >= {lower} and > 0"))),
    }
}

/// `(P_tf(x+h))^p <= P_tf^p(x) · B` with `B` the closed-form bound, from
/// draws shared between `x` and `x + h`.
#[allow(clippy::too_many_arguments)]
pub fn harnack_ratio_mc(
    model: &LevyModel,
    spec: &FlowSpec,
    g: &WeightFunction,
    f: &TestFunction,
    x: &[f64],
    h: &[f64],
    p: f64,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<HarnackReport> {
    check_positive(f, 0.0)?;
    let bound = harnack_bound_t41(&bound_inputs(model, spec, g, p, t, h))?;
    let m = ratio_moments(model, spec, f, x, h, p, t, n, seed)?;
    Ok(ratio_report("harnack", x, h, p, t, &m, bound, 0.0, 3.0))
}

#[allow(clippy::too_many_arguments)]
fn ratio_moments(
    model: &LevyModel,
    spec: &FlowSpec,
    f: &TestFunction,
    x: &[f64],
    h: &[f64],
    p: f64,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_dims(model, x, h)?;
    let sampler = EndpointSampler::new(model, spec, t)?;
    let tx = sampler.push(x);
    let th = sampler.push(h);
    Ok(run_mc(n, seed, 2, |_, rng, out| {
        let y = &tx + sampler.noise(rng);
        out[0] = f.value((&y + &th).as_slice());
        out[1] = f.value(y.as_slice()).powf(p);
    }))
}

fn check_dims(model: &LevyModel, x: &[f64], h: &[f64]) -> Result<()> {
    if x.len() != model.dim || h.len() != model.dim {
        return Err(Error::Domain(format!("x and h must have dimension {}", model.dim)));
    }
    Ok(())
}

/// Report for `m1^p <= B m2` from the joint moments `(m1, m2)`; `bound_se`
/// is the error of a Monte Carlo `B` drawn independently.
#[allow(clippy::too_many_arguments)]
fn ratio_report(
    check: &str,
    x: &[f64],
    h: &[f64],
    p: f64,
    t: f64,
    m: &MCEstimate,
    bound: f64,
    bound_se: f64,
    z_crit: f64,
) -> HarnackReport {
    let (m1, m2) = (m.mean[0], m.mean[1]);
    let d1 = p * m1.powf(p - 1.0);
    let lhs = MCEstimate::derived(m1.powf(p), d1 * m.stderr[0], m.n, m.seed);
    let rhs = MCEstimate::derived(m2, m.stderr[1], m.n, m.seed);
    let vacuous = !bound.is_finite();
    let margin_se = if vacuous {
        f64::INFINITY
    } else {
        let var = m.linear_se(&[-d1, bound]).powi(2) + (m2 * bound_se).powi(2);
        margin(bound * m2 - m1.powf(p), var.sqrt())
    };
    HarnackReport {
        check: check.into(),
        x: x.to_vec(),
        h: h.to_vec(),
        p,
        t,
        lhs,
        rhs,
        bound,
        bound_se,
        margin_se,
        pass: margin_se > -z_crit,
        vacuous,
    }
}

/// `P_t log f(x+h) <= log P_tf(x) + B` with `B` the closed-form bound.
#[allow(clippy::too_many_arguments)]
pub fn logharnack_mc(
    model: &LevyModel,
    spec: &FlowSpec,
    g: &WeightFunction,
    f: &TestFunction,
    x: &[f64],
    h: &[f64],
    t: f64,
    n: u64,
    seed: u64,
) -> Result<HarnackReport> {
    logharnack_with(model, spec, g, f, x, h, t, n, seed, 3.0)
}

#[allow(clippy::too_many_arguments)]
fn logharnack_with(
    model: &LevyModel,
    spec: &FlowSpec,
    g: &WeightFunction,
    f: &TestFunction,
    x: &[f64],
    h: &[f64],
    t: f64,
    n: u64,
    seed: u64,
    z_crit: f64,
) -> Result<HarnackReport> {
    check_positive(f, 1.0)?;
    check_dims(model, x, h)?;
    // The bound does not depend on p; any p > 1 passes validation.
    let bound = logharnack_bound_tlh(&bound_inputs(model, spec, g, 2.0, t, h))?;
    let sampler = EndpointSampler::new(model, spec, t)?;
    let tx = sampler.push(x);
    let th = sampler.push(h);
    let m = run_mc(n, seed, 2, |_, rng, out| {
        let y = &tx + sampler.noise(rng);
        out[0] = f.value((&y + &th).as_slice()).ln();
        out[1] = f.value(y.as_slice());
    });
    let (m0, m1) = (m.mean[0], m.mean[1]);
    let lhs = MCEstimate::derived(m0, m.stderr[0], m.n, m.seed);
    let rhs = MCEstimate::derived(m1.ln(), m.stderr[1] / m1, m.n, m.seed);
    let vacuous = !bound.is_finite();
    let margin_se = if vacuous { f64::INFINITY } else { margin(m1.ln() + bound - m0, m.linear_se(&[-1.0, 1.0 / m1])) };
    Ok(HarnackReport {
        check: "log_harnack".into(),
        x: x.to_vec(),
        h: h.to_vec(),
        p: f64::NAN,
        t,
        lhs,
        rhs,
        bound,
        bound_se: 0.0,
        margin_se,
        pass: margin_se > -z_crit,
        vacuous,
    })
}

/// The sharper Harnack factor as a Monte Carlo estimate.
#[derive(Clone, Debug)]
pub struct FirstBound {
    /// `K^{p-1}` with delta-method error.
    pub value: MCEstimate,
    /// `K = ∫ (ρ₀g/(w+g))^{p/(p-1)}(z) ((w+g)/ρ₀g)^{1/(p-1)}(z + σ_s⁻¹T_sh) dΛ⁰ dz ds`.
    pub integral: MCEstimate,
    pub variance_warning: Option<String>,
}

/// Lower end of the inner importance sampler; `ρ₀g` is integrable at 0 and
/// the ball below this radius is ignored.
const INNER_LO: f64 = 1e-9;
const INNER_DRAWS: usize = 4;

/// Estimates the first bound of the Harnack inequality.
///
/// Outer paths carry the atoms `|z| >= ε` of `L⁰`, and `w(g)` adds the mean
/// `t∫_{|z|<ε} g dν₀` of the rest. The inner `(z, s)` integral uses
/// [`INNER_DRAWS`] importance draws from `∝ ρ₀g` on `R^d` and `s` uniform on
/// `[0, t]`. The value does not depend on `x`.
#[allow(clippy::too_many_arguments)]
pub fn harnack_first_bound_mc(
    model: &LevyModel,
    spec: &FlowSpec,
    g: &WeightFunction,
    x: &[f64],
    h: &[f64],
    p: f64,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<FirstBound> {
    check_dims(model, x, h)?;
    if !(p > 1.0) || !(t > 0.0) {
        return Err(Error::Domain(format!("need p > 1 and t > 0, got p = {p}, t = {t}")));
    }
    if !validate_model(model).infinite_activity {
        return Err(Error::InvalidModel("the Harnack bound needs ν₀(g > 0) = ∞".into()));
    }
    let d = model.dim;
    let rho = model.rho0.clone();
    let eps = model.truncation_eps;
    let opts = QuadOptions::default().with_rel_tol(1e-10);
    let mut brk = g.breakpoints(&rho);
    brk.extend(rho.breakpoints());
    let comp = t * rho.radial_integral(d, |r| g.value_r(r, &rho), 0.0, eps, &brk, &opts)?;
    let outer = RadialSampler::new(&rho, d, eps)?;
    let (r2, g2) = (rho.clone(), g.clone());
    let proposal = RadialProposal::new(
        move |r| r.powi(d as i32 - 1) * r2.phi(r) * g2.value_r(r, &r2),
        INNER_LO,
        rho.support_radius(),
        &brk,
        16,
    )?;
    let cache = FlowCache::new(spec, t)?;
    let hv = DVector::from_column_slice(h);
    let q = p / (p - 1.0);
    let e = 1.0 / (p - 1.0);
    let kap = kappa(d);
    let rho_g = |r: f64| rho.phi(r) * g.value_r(r, &rho);
    let k = run_mc(n, seed, 2, |_, rng, out| {
        let atoms = poisson(rng, t * outer.mass);
        let mut w = comp;
        for _ in 0..atoms {
            w += g.value_r(outer.sample_radius(rng), &rho);
        }
        let mut acc = 0.0;
        let mut u = vec![0.0; d];
        for _ in 0..INNER_DRAWS {
            let r = proposal.sample(rng);
            random_direction(d, rng, &mut u);
            let s = rng.random::<f64>() * t;
            let shift = match cache.sigma_inv_t(s) {
                Ok(m) => m * &hv,
                Err(_) => DVector::from_element(d, f64::NAN),
            };
            let zs: Vec<f64> = (0..d).map(|i| u[i] * r + shift[i]).collect();
            let rs = norm(&zs);
            let (a, b) = (rho_g(r), rho_g(rs));
            let num = (a / (w + g.value_r(r, &rho))).powf(q) * (w + g.value_r(rs, &rho)).powf(e);
            let val = if num == 0.0 { 0.0 } else { num / b.powf(e) };
            acc += val * t * kap * r.powi(d as i32 - 1) / proposal.pdf(r);
        }
        out[0] = acc / INNER_DRAWS as f64;
        out[1] = out[0] * out[0];
    });
    let kv = k.mean[0];
    let integral = k.select(&[0]);
    let value = if k.is_finite() {
        MCEstimate::derived(kv.powf(p - 1.0), (p - 1.0) * kv.powf(p - 2.0) * k.stderr[0], k.n, k.seed)
    } else {
        MCEstimate::derived(f64::INFINITY, f64::INFINITY, k.n, k.seed)
    };
    let variance_warning = (k.is_finite() && k.mean[1] > 0.0 && k.stderr[1] > 0.25 * k.mean[1]).then(|| {
        format!(
            "second moment of the inner estimate has relative error {:.2}; the variance of the bound may be infinite",
            k.stderr[1] / k.mean[1]
        )
    });
    Ok(FirstBound { value, integral, variance_warning })
}

fn poisson(rng: &mut SampleRng, mean: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Sweep of the Harnack checks for the 1-d stable OU benchmark.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub a: f64,
    pub alpha: f64,
    pub c0: f64,
    pub sigma: f64,
    pub x: f64,
    pub ps: Vec<f64>,
    pub ts: Vec<f64>,
    pub hs: Vec<f64>,
    /// Draws of `X_t` per ratio and log-Harnack cell.
    pub samples: u64,
    /// Outer paths per first-bound cell.
    pub bound_samples: u64,
    /// Paths per gradient cell.
    pub gradient_samples: u64,
    /// Truncation of the outer paths in the first bound.
    pub truncation_eps: f64,
    /// Truncation of the simulated paths in the gradient rows.
    pub gradient_eps: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub bump_amp: f64,
    pub z_crit: f64,
    pub harnack: bool,
    pub first_bound: bool,
    pub log_harnack: bool,
    pub gradient: bool,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            a: -0.5,
            alpha: 1.0,
            c0: 1.0 / PI,
            sigma: 1.0,
            x: 0.3,
            ps: vec![1.5, 2.0, 3.0],
            ts: vec![0.25, 0.5, 1.0, 2.0],
            hs: vec![0.0, 0.1, 0.5],
            samples: 200_000,
            bound_samples: 50_000,
            gradient_samples: 100_000,
            truncation_eps: 1e-2,
            gradient_eps: 5e-2,
            bump_center: 0.0,
            bump_width: 0.5,
            bump_amp: 1.0,
            z_crit: 3.0,
            harnack: true,
            first_bound: true,
            log_harnack: true,
            gradient: true,
            seed: 1,
        }
    }
}

impl GridConfig {
    pub fn process(&self) -> Result<StableOu> {
        StableOu::new(self.a, self.alpha, self.c0, self.sigma)
    }

    /// `f = 1 + amp·exp(-(y - m)²/2w²)`.
    pub fn test_function(&self) -> TestFunction {
        TestFunction::bump(vec![self.bump_center], self.bump_width, self.bump_amp)
    }
}

#[derive(Clone, Copy, Debug)]
enum Cell {
    Ratio { p: f64, t: f64, h: f64 },
    Log { t: f64, h: f64 },
    Gradient { t: f64 },
}

/// Runs the configured checks; one cell per `(p, t, |h|)` for the
/// multiplicative checks, per `(t, |h|)` for log-Harnack and per `t` for the
/// gradient bound (with one row per `p`). Each cell draws from its own seed.
///
/// Multiplicative cells yield the rows `harnack` (ratio against the closed
/// form), `harnack_first` (ratio against the sharper factor) and
/// `first_le_second` (sharper factor against the closed form).
pub fn verify_grid(config: &GridConfig) -> Result<Vec<HarnackReport>> {
    let ou = config.process()?;
    let spec = ou.spec()?;
    let exact = ou.model(config.truncation_eps);
    let g = WeightFunction::inverse_density();
    let f = config.test_function();
    let mut cells = Vec::new();
    if config.harnack || config.first_bound {
        for &p in &config.ps {
            for &t in &config.ts {
                for &h in &config.hs {
                    cells.push(Cell::Ratio { p, t, h });
                }
            }
        }
    }
    if config.log_harnack {
        for &t in &config.ts {
            for &h in &config.hs {
                cells.push(Cell::Log { t, h });
            }
        }
    }
    if config.gradient {
        for &t in &config.ts {
            cells.push(Cell::Gradient { t });
        }
    }
    let x = [config.x];
    let z = config.z_crit;
    let rows: Vec<Result<Vec<HarnackReport>>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let seed = derive_seed(config.seed, i as u64);
            match *cell {
                Cell::Ratio { p, t, h } => {
                    let hv = [h];
                    let m = ratio_moments(&exact, &spec, &f, &x, &hv, p, t, config.samples, seed)?;
                    let closed = harnack_bound_t41(&bound_inputs(&exact, &spec, &g, p, t, &hv))?;
                    let mut out = Vec::new();
                    if config.harnack {
                        out.push(ratio_report("harnack", &x, &hv, p, t, &m, closed, 0.0, z));
                    }
                    if config.first_bound {
                        let fb = harnack_first_bound_mc(
                            &exact,
                            &spec,
                            &g,
                            &x,
                            &hv,
                            p,
                            t,
                            config.bound_samples,
                            derive_seed(seed, 1),
                        )?;
                        let (b, bse) = (fb.value.scalar(), fb.value.se());
                        out.push(ratio_report("harnack_first", &x, &hv, p, t, &m, b, bse, z));
                        let vacuous = !closed.is_finite();
                        let margin_se = if vacuous { f64::INFINITY } else { margin(closed - b, bse) };
                        out.push(HarnackReport {
                            check: "first_le_second".into(),
                            x: x.to_vec(),
                            h: hv.to_vec(),
                            p,
                            t,
                            lhs: fb.value.clone(),
                            rhs: MCEstimate::exact(vec![1.0], 0, 0),
                            bound: closed,
                            bound_se: 0.0,
                            margin_se,
                            pass: margin_se > -z,
                            vacuous,
                        });
                    }
                    Ok(out)
                }
                Cell::Log { t, h } => {
                    Ok(vec![logharnack_with(&exact, &spec, &g, &f, &x, &[h], t, config.samples, seed, z)?])
                }
                Cell::Gradient { t } => gradient_rows(config, &ou, &spec, &g, &f, t, seed),
            }
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// `|∇P_tf(x)| <= (P_t f^p(x))^{1/p} M_p` for each configured `p`, with the
/// gradient from the path-functional form on the truncated model.
fn gradient_rows(
    config: &GridConfig,
    ou: &StableOu,
    spec: &FlowSpec,
    g: &WeightFunction,
    f: &TestFunction,
    t: f64,
    seed: u64,
) -> Result<Vec<HarnackReport>> {
    let x = [config.x];
    let sim_model = ou.model(config.gradient_eps);
    let est = gradient_mc(&sim_model, spec, f, &x, t, g, config.gradient_samples, seed, 1e-2)?;
    let grad = est.form_b.scalar();
    let grad_se = est.form_b.se();
    let exact = ou.model(config.truncation_eps);
    let mut rows = Vec::new();
    for &p in &config.ps {
        let m = run_mc(config.samples, derive_seed(seed, 2), 1, |_, rng, out| {
            out[0] = f.value(&[ou.sample(config.x, t, rng)]).powf(p);
        });
        let norm_p = m.scalar().powf(1.0 / p);
        let norm_se = norm_p / (p * m.scalar()) * m.se();
        let bound = grad_bound_c12(&exact, g, spec, p, t)?;
        let vacuous = !bound.is_finite();
        let margin_se = if vacuous {
            f64::INFINITY
        } else {
            margin(bound * norm_p - grad.abs(), (grad_se.powi(2) + (bound * norm_se).powi(2)).sqrt())
        };
        rows.push(HarnackReport {
            check: "gradient".into(),
            x: x.to_vec(),
            h: vec![0.0],
            p,
            t,
            lhs: MCEstimate::derived(grad.abs(), grad_se, est.form_b.n, seed),
            rhs: MCEstimate::derived(norm_p, norm_se, m.n, m.seed),
            bound,
            bound_se: 0.0,
            margin_se,
            pass: margin_se > -config.z_crit,
            vacuous,
        });
    }
    Ok(rows)
}

/// A Monte Carlo estimate on the truncated path simulator against the
/// exact stable OU value.
#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub quantity: String,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    /// Deterministic bias allowance of the estimator.
    pub bias_bound: f64,
}

impl OracleCheck {
    pub fn z(&self) -> f64 {
        crate::estimate::z_score(self.estimate, self.stderr, self.oracle, 0.0)
    }

    pub fn pass(&self, z_crit: f64) -> bool {
        (self.estimate - self.oracle).abs() <= z_crit * self.stderr + self.bias_bound
    }
}

/// Compares `P_tf(x)` and `∂_xP_tf(x)` from paths with jumps `|z| >= ε`
/// against [`StableOu::oracle`].
///
/// The dropped jumps form a centred variable of variance
/// `V = σ²∫₀^t e^{2a(t-s)}ds ∫_{|z|<ε} z² ν(dz)`, so the value is biased by
/// at most `‖f''‖V/2` and the derivative by `e^{at}‖f'''‖V/2`.
pub fn oracle_check(ou: &StableOu, f: &TestFunction, x: f64, t: f64, eps: f64, n: u64, seed: u64) -> Result<Vec<OracleCheck>> {
    let (value, grad) = ou.oracle(x, t, f)?;
    let model = ou.model(eps);
    let spec = ou.spec()?;
    let two_a = 2.0 * ou.a;
    let time = if two_a.abs() < 1e-12 { t } else { (two_a * t).exp_m1() / two_a };
    let small = 2.0 * ou.c0 * eps.powf(2.0 - ou.alpha) / (2.0 - ou.alpha);
    let v = ou.sigma * ou.sigma * time * small;
    let sim = crate::mecke_girsanov::semigroup_mc(&model, &spec, f, &[x], t, n, seed)?;
    let g = WeightFunction::inverse_density();
    let est = gradient_mc(&model, &spec, f, &[x], t, &g, n, derive_seed(seed, 1), 1e-2)?;
    let gb = (ou.a * t).exp() * f.third_derivative_bound() * v / 2.0 + est.bias_bound;
    Ok(vec![
        OracleCheck {
            quantity: "semigroup".into(),
            estimate: sim.scalar(),
            stderr: sim.se(),
            oracle: value,
            bias_bound: f.second_derivative_bound() * v / 2.0,
        },
        OracleCheck {
            quantity: "gradient_form_a".into(),
            estimate: est.form_a.scalar(),
            stderr: est.form_a.se(),
            oracle: grad,
            bias_bound: gb,
        },
        OracleCheck {
            quantity: "gradient_form_b".into(),
            estimate: est.form_b.scalar(),
            stderr: est.form_b.se(),
            oracle: grad,
            bias_bound: gb,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::sample_rng;

    #[test]
    fn characteristic_constant() {
        assert!((stable_char_constant(1.0) - PI).abs() < 1e-15);
        // Continuity through α = 1.
        assert!((stable_char_constant(1.0 + 1e-7) - PI).abs() < 1e-5);
        // α = 1/2: 2Γ(1/2)cos(π/4)/(1/2) = 2√(2π).
        assert!((stable_char_constant(0.5) - 2.0 * (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cauchy_density_matches_closed_form() {
        for &u in &[0.0, 0.3, 1.0, 4.0, 17.0, 24.9, 25.0, 60.0, -3.0] {
            let (p, dp) = standard_stable_density(1.0, u).unwrap();
            let want = 1.0 / (PI * (1.0 + u * u));
            let dwant = -2.0 * u / (PI * (1.0 + u * u).powi(2));
            assert!((p - want).abs() < 1e-12 * want.max(1e-3), "u = {u}: {p} vs {want}");
            assert!((dp - dwant).abs() < 1e-11 * dwant.abs().max(1e-3), "u = {u}");
        }
    }

    #[test]
    fn series_and_fourier_agree_at_the_switch() {
        for &alpha in &[0.5, 0.8, 1.3, 1.8] {
            let (a, da) = density_series(alpha, TAIL_START);
            let (b, db) = density_fourier(alpha, TAIL_START).unwrap();
            assert!((a - b).abs() < 1e-9 * a, "α = {alpha}: {a} vs {b}");
            assert!((da - db).abs() < 1e-8 * da.abs(), "α = {alpha}");
        }
    }

    #[test]
    fn gaussian_limit_shape() {
        // The mode of the standard α-stable density is Γ(1 + 1/α)/π.
        for &alpha in &[0.5, 1.5, 1.8] {
            let (p, _) = standard_stable_density(alpha, 0.0).unwrap();
            let want = statrs::function::gamma::gamma(1.0 + 1.0 / alpha) / PI;
            assert!((p - want).abs() < 1e-10, "α = {alpha}");
        }
    }

    #[test]
    fn cms_sampler_matches_the_characteristic_function() {
        for &alpha in &[0.7, 1.0, 1.6] {
            let est = run_mc(200_000, 5, 2, |_, rng, out| {
                let s = standard_stable(alpha, rng);
                out[0] = s.cos();
                out[1] = (0.5 * s).cos();
            });
            assert!((est.mean[0] - (-1f64).exp()).abs() < 4.0 * est.stderr[0], "α = {alpha}");
            assert!((est.mean[1] - (-(0.5f64).powf(alpha)).exp()).abs() < 4.0 * est.stderr[1]);
        }
    }

    #[test]
    fn oracle_constant_and_cauchy_step() {
        let one = TestFunction::constant(1.0);
        let (p, dp) = stable_ou_oracle_1d(-0.5, 1.3, 0.7, 0.4, 0.8, &one).unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        assert!(dp.abs() < 1e-9);
        // Cauchy with a = 0, c₀ = 1/π: X_t ~ Cauchy(x, t), and the atan step
        // integrates in closed form.
        let (x, t, m, w) = (0.3, 0.7, 0.1, 0.4);
        let f = TestFunction::step(vec![1.0], m, w).unwrap();
        let (p, dp) = stable_ou_oracle_1d(0.0, 1.0, 1.0 / PI, x, t, &f).unwrap();
        let want = 0.5 + ((x - m) / (t + w)).atan() / PI;
        let dwant = (t + w) / (PI * ((t + w) * (t + w) + (x - m) * (x - m)));
        assert!((p - want).abs() < 1e-9, "{p} vs {want}");
        assert!((dp - dwant).abs() < 1e-9, "{dp} vs {dwant}");
    }

    #[test]
    fn oracle_gradient_matches_its_own_difference_quotient() {
        let f = TestFunction::bump(vec![0.0], 0.5, 1.0);
        let ou = StableOu::new(-0.5, 1.5, 0.4, 1.0).unwrap();
        let (_, dp) = ou.oracle(0.3, 0.6, &f).unwrap();
        let hstep = 1e-4;
        let up = ou.oracle(0.3 + hstep, 0.6, &f).unwrap().0;
        let dn = ou.oracle(0.3 - hstep, 0.6, &f).unwrap().0;
        assert!((dp - (up - dn) / (2.0 * hstep)).abs() < 1e-6);
    }

    #[test]
    fn oracle_rejects_fragile_indices() {
        assert!(stable_ou_oracle_1d(0.0, 1.9, 1.0, 0.0, 1.0, &TestFunction::constant(1.0)).is_err());
        assert!(stable_ou_oracle_1d(0.0, 0.3, 1.0, 0.0, 1.0, &TestFunction::constant(1.0)).is_err());
    }

    #[test]
    fn exact_sampler_matches_the_oracle() {
        let ou = StableOu::new(-0.5, 1.0, 1.0 / PI, 1.0).unwrap();
        let f = TestFunction::bump(vec![0.0], 0.5, 1.0);
        let (p, _) = ou.oracle(0.3, 0.5, &f).unwrap();
        let est = run_mc(100_000, 2, 1, |_, rng, out| out[0] = f.value(&[ou.sample(0.3, 0.5, rng)]));
        assert!((est.scalar() - p).abs() < 4.0 * est.se());
        let model = ou.model(1e-2);
        let spec = ou.spec().unwrap();
        assert!(EndpointSampler::new(&model, &spec, 0.5).unwrap().is_exact());
        let mut rng = sample_rng(1, 1);
        assert!(EndpointSampler::new(&model.simulated(), &spec, 0.5).unwrap().noise(&mut rng)[0].is_finite());
    }

    fn cauchy() -> (LevyModel, FlowSpec) {
        let ou = StableOu::new(-0.5, 1.0, 1.0 / PI, 1.0).unwrap();
        (ou.model(1e-2), ou.spec().unwrap())
    }

    #[test]
    fn constant_function_is_exact() {
        let (m, s) = cauchy();
        let g = WeightFunction::inverse_density();
        let one = TestFunction::constant(1.0);
        let r = harnack_ratio_mc(&m, &s, &g, &one, &[0.3], &[0.5], 2.0, 0.5, 1000, 1).unwrap();
        assert_eq!(r.lhs.scalar(), 1.0);
        assert_eq!(r.rhs.scalar(), 1.0);
        assert!(r.pass);
        let l = logharnack_mc(&m, &s, &g, &one, &[0.3], &[0.5], 0.5, 1000, 1).unwrap();
        assert_eq!(l.lhs.scalar(), 0.0);
        assert_eq!(l.rhs.scalar(), 0.0);
        assert!(l.pass);
    }

    #[test]
    fn zero_shift_is_jensen() {
        let (m, s) = cauchy();
        let g = WeightFunction::inverse_density();
        let f = TestFunction::bump(vec![0.0], 0.5, 1.0);
        let r = harnack_ratio_mc(&m, &s, &g, &f, &[0.3], &[0.0], 2.0, 0.5, 20_000, 1).unwrap();
        assert_eq!(r.bound, 1.0);
        assert!(r.lhs.scalar() <= r.rhs.scalar());
        let l = logharnack_mc(&m, &s, &g, &f, &[0.3], &[0.0], 0.5, 20_000, 1).unwrap();
        assert_eq!(l.bound, 0.0);
        assert!(l.lhs.scalar() <= l.rhs.scalar());
    }

    #[test]
    fn first_bound_is_one_without_shift() {
        let (m, s) = cauchy();
        let g = WeightFunction::inverse_density();
        let fb = harnack_first_bound_mc(&m, &s, &g, &[0.3], &[0.0], 2.0, 0.5, 20_000, 4).unwrap();
        let v = fb.value.scalar();
        assert!((v - 1.0).abs() < 3.0 * fb.value.se(), "{v} ± {}", fb.value.se());
    }

    #[test]
    fn first_bound_grows_with_the_shift() {
        let (m, s) = cauchy();
        let g = WeightFunction::inverse_density();
        let vals: Vec<f64> = [0.0, 0.1, 0.5]
            .iter()
            .map(|&h| harnack_first_bound_mc(&m, &s, &g, &[0.3], &[h], 2.0, 0.5, 20_000, 4).unwrap().value.scalar())
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
    }

    #[test]
    fn empty_grid_is_empty() {
        let c = GridConfig { ps: vec![], ts: vec![], hs: vec![], ..GridConfig::default() };
        assert!(verify_grid(&c).unwrap().is_empty());
    }
}
