//! The Mecke identity, semigroup and gradient estimators, and the Girsanov
//! transform of the jump part `L⁰`.
//!
//! All Monte Carlo here runs on the simulated measure `ν₀ 1{|z| >= ε}`, and
//! every reference value is computed for that same measure. The gradient
//! estimators use `g̃ = g χ_ε` where `χ_ε` rises smoothly from 0 at `ε` to 1
//! at `2ε`; this keeps `ρ₀ g̃` continuous across the truncation radius, so
//! the integration by parts behind both forms leaves no boundary term.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimate::{run_mc, MCEstimate};
use crate::flow::{FlowCache, FlowSpec};
use crate::levy_model::{kappa, mu_t, mu_t_exp_integral, validate_model, LevyModel, RadialDensity, WeightFunction};
use crate::pathsim::{random_direction, sample_atoms, JumpPath, RadialProposal, RadialSampler, Simulator};
use crate::quadrature::{integrate_with_breaks, kronrod_rule, QuadOptions};
use crate::testfn::TestFunction;

/// The catalog of Mecke test functionals `h(w, z, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeckeFunctional {
    /// `h₁ = g(z)`.
    Campbell,
    /// `h₂ = g(z) / (w(g) + g(z))`.
    Normalized,
    /// `h₃ = g(z) e^{-w(g)}`.
    Damped,
}

impl MeckeFunctional {
    pub const ALL: [MeckeFunctional; 3] =
        [MeckeFunctional::Campbell, MeckeFunctional::Normalized, MeckeFunctional::Damped];

    pub fn name(&self) -> &'static str {
        match self {
            MeckeFunctional::Campbell => "h1",
            MeckeFunctional::Normalized => "h2",
            MeckeFunctional::Damped => "h3",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeckeReport {
    pub functional: MeckeFunctional,
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    /// Per-sample `(lhs, rhs, lhs², rhs²)`; the difference SE uses its
    /// covariance.
    pub joint: MCEstimate,
    /// Set when the second-moment columns are themselves too noisy for the
    /// standard errors to be trusted.
    pub variance_warning: bool,
}

impl MeckeReport {
    pub fn z_score(&self) -> f64 {
        let se = self.joint.linear_se(&[1.0, -1.0, 0.0, 0.0]);
        let diff = self.lhs.scalar() - self.rhs.scalar();
        if se == 0.0 {
            if diff.abs() <= 1e-12 * self.lhs.scalar().abs().max(1.0) { 0.0 } else { f64::INFINITY }
        } else {
            diff / se
        }
    }
}

/// Fixed radial rule for `t ∫_{|z|>=ε} F(|z|) ν₀(dz)`: 15-point Kronrod
/// nodes on 32 geometric cells per decade, with the tail beyond `10⁴`
/// mapped onto `(0, 1]`.
#[derive(Clone, Debug)]
pub struct RadialRule {
    pub nodes: Vec<f64>,
    /// `t κ(d) w_j r_j^{d-1} φ(r_j)`.
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn new(model: &LevyModel, t: f64, extra_breaks: &[f64]) -> Result<Self> {
        let rho = &model.rho0;
        let lo = model.truncation_eps.max(rho.inner);
        if !(lo > 0.0) {
            return Err(Error::Domain("radial rule needs a positive truncation level".into()));
        }
        let top = rho.support_radius();
        let hi = if top.is_finite() { top } else { 1e4_f64.max(lo * 1e3) };
        let cells = ((hi / lo).log10() * 32.0).ceil().max(1.0) as usize;
        let ratio = (hi / lo).powf(1.0 / cells as f64);
        let mut edges: Vec<f64> = (0..=cells).map(|j| lo * ratio.powi(j as i32)).collect();
        edges[cells] = hi;
        edges.extend(rho.breakpoints().into_iter().chain(extra_breaks.iter().copied()).filter(|&b| b > lo && b < hi));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let d = model.dim;
        let c = t * kappa(d);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            for (r, wt) in kronrod_rule(w[0], w[1]) {
                let m = rho.phi(r) * r.powi(d as i32 - 1);
                if m > 0.0 {
                    nodes.push(r);
                    weights.push(c * wt * m);
                }
            }
        }
        if top.is_infinite() {
            // r = hi / x on x ∈ (1e-10, 1].
            let xs: Vec<f64> = (0..=40).map(|j| 10f64.powf(-10.0 + j as f64 / 4.0)).collect();
            for w in xs.windows(2) {
                for (x, wt) in kronrod_rule(w[0], w[1]) {
                    let r = hi / x;
                    let m = rho.phi(r) * r.powi(d as i32 - 1) * hi / (x * x);
                    if m > 0.0 {
                        nodes.push(r);
                        weights.push(c * wt * m);
                    }
                }
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).sum()
    }
}

/// Both sides of the Mecke identity
/// `E ∫ h(w, z, s) μ_t(dz, ds) = E Σ_{atoms} h(w - δ_{(z,s)}, z, s)` on the
/// simulated measure.
pub fn mecke_two_sides(
    model: &LevyModel,
    g: &WeightFunction,
    h: MeckeFunctional,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<MeckeReport> {
    let sim = model.simulated();
    let rho = &sim.rho0;
    let sampler = RadialSampler::new(rho, sim.dim, sim.truncation_eps)?;
    let eps = sim.truncation_eps;
    let mu_g = mu_t(&sim, g, t)?;
    let rule = RadialRule::new(&sim, t, &g.breakpoints(rho))?;
    let gvals: Vec<f64> = rule.nodes.iter().map(|&r| g.value_r(r, rho)).collect();
    let joint = run_mc(n, seed, 4, |_, rng, out| {
        let path = sample_atoms(&sampler, t, eps, rng);
        let gs: Vec<f64> = path.atoms().map(|(_, z)| g.value(z, rho)).collect();
        let w: f64 = gs.iter().sum();
        let (l, r) = match h {
            MeckeFunctional::Campbell => (mu_g, w),
            MeckeFunctional::Normalized => {
                let lhs: f64 = rule.weights.iter().zip(&gvals).map(|(c, gv)| if *gv > 0.0 { c * gv / (w + gv) } else { 0.0 }).sum();
                let rhs = if w > 0.0 { gs.iter().map(|gi| gi / w).sum() } else { 0.0 };
                (lhs, rhs)
            }
            MeckeFunctional::Damped => (mu_g * (-w).exp(), gs.iter().map(|gi| gi * (-(w - gi)).exp()).sum()),
        };
        out[0] = l;
        out[1] = r;
        out[2] = l * l;
        out[3] = r * r;
    });
    let noisy = |i: usize| joint.mean[i] > 0.0 && joint.stderr[i] > 0.3 * joint.mean[i];
    let variance_warning = !joint.is_finite() || noisy(2) || noisy(3);
    Ok(MeckeReport { functional: h, lhs: joint.select(&[0]), rhs: joint.select(&[1]), joint, variance_warning })
}

/// Reference values for `h₃` on the simulated measure: the closed form
/// `μ_t(g) exp(-μ_t(1 - e^{-g}))` and an enumeration over the Poisson atom
/// count `E[N m₁ m₀^{N-1}]` with `m₁ = E g(Z)`, `m₀ = E e^{-g(Z)}`.
pub fn mecke_damped_oracle(model: &LevyModel, g: &WeightFunction, t: f64) -> Result<(f64, f64)> {
    let sim = model.simulated();
    let closed = mu_t(&sim, g, t)? * (-mu_t_exp_integral(&sim, g, 1.0, t)?).exp();
    let rho = &sim.rho0;
    let opts = QuadOptions::default().with_rel_tol(1e-12);
    let mut brk = g.breakpoints(rho);
    brk.push(1.0);
    let lam = t * rho.radial_integral(sim.dim, |_| 1.0, 0.0, f64::INFINITY, &brk, &opts)?;
    let m1 = t * rho.radial_integral(sim.dim, |r| g.value_r(r, rho), 0.0, f64::INFINITY, &brk, &opts)? / lam;
    let m0 = t * rho.radial_integral(sim.dim, |r| (-g.value_r(r, rho)).exp(), 0.0, f64::INFINITY, &brk, &opts)? / lam;
    let top = (lam + 40.0 * lam.sqrt() + 60.0).ceil() as u64;
    let mut sum = 0.0;
    for k in 1..=top {
        let kf = k as f64;
        let log_pk = -lam + kf * lam.ln() - statrs::function::gamma::ln_gamma(kf + 1.0);
        sum += (log_pk + (kf - 1.0) * m0.ln()).exp() * kf * m1;
    }
    Ok((closed, sum))
}

/// Path MC of `E[w(g)^{-θ}]` on the simulated measure. With `positive_part`
/// paths with `w(g) = 0` contribute 0; otherwise they contribute `+∞`.
pub fn lemma23_mc(model: &LevyModel, g: &WeightFunction, theta: f64, t: f64, positive_part: bool, n: u64, seed: u64) -> Result<MCEstimate> {
    let sim = model.simulated();
    let rho = &sim.rho0;
    let sampler = RadialSampler::new(rho, sim.dim, sim.truncation_eps)?;
    let eps = sim.truncation_eps;
    Ok(run_mc(n, seed, 1, |_, rng, out| {
        let path = sample_atoms(&sampler, t, eps, rng);
        let w: f64 = path.atoms().map(|(_, z)| g.value(z, rho)).sum();
        out[0] = if w > 0.0 {
            w.powf(-theta)
        } else if positive_part {
            0.0
        } else {
            f64::INFINITY
        };
    }))
}

/// Plain MC of `P_tf(x) = E f(X_t^x)`.
pub fn semigroup_mc(model: &LevyModel, spec: &FlowSpec, f: &TestFunction, x: &[f64], t: f64, n: u64, seed: u64) -> Result<MCEstimate> {
    let xv = DVector::from_column_slice(x);
    if t == 0.0 {
        return Ok(MCEstimate::exact(vec![f.value(x)], n, seed));
    }
    let sim = Simulator::new(model, spec, t)?;
    Ok(run_mc(n, seed, 1, |_, rng, out| {
        let y = sim.sample_x(&xv, rng);
        out[0] = f.value(y.as_slice());
    }))
}

/// `g χ_ε` with the C¹ ramp `χ_ε(r) = 3s² - 2s³`, `s = (r - ε)/ε ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct TaperedWeight {
    pub g: WeightFunction,
    pub eps: f64,
}

impl TaperedWeight {
    pub fn new(g: &WeightFunction, eps: f64) -> Self {
        Self { g: g.clone(), eps }
    }

    fn ramp(&self, r: f64) -> (f64, f64) {
        if self.eps <= 0.0 || r >= 2.0 * self.eps {
            return (1.0, 0.0);
        }
        if r <= self.eps {
            return (0.0, 0.0);
        }
        let s = (r - self.eps) / self.eps;
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s) / self.eps)
    }

    /// `(g̃(r), g̃'(r))`.
    pub fn eval(&self, r: f64, rho: &RadialDensity) -> (f64, f64) {
        let (c, dc) = self.ramp(r);
        if c == 0.0 && dc == 0.0 {
            return (0.0, 0.0);
        }
        let (gv, gd) = (self.g.value_r(r, rho), self.g.deriv_r(r, rho));
        (c * gv, c * gd + dc * gv)
    }

    pub fn breakpoints(&self, rho: &RadialDensity) -> Vec<f64> {
        let mut b = self.g.breakpoints(rho);
        if self.eps > 0.0 {
            b.push(self.eps);
            b.push(2.0 * self.eps);
        }
        b
    }
}

/// The three gradient estimates of `∇P_tf(x)` computed on the same samples.
#[derive(Clone, Debug)]
pub struct GradientEstimates {
    pub form_a: MCEstimate,
    pub form_b: MCEstimate,
    pub fd: MCEstimate,
    /// Columns `(A₁..A_d, B₁..B_d, FD₁..FD_d, f(X))`.
    pub joint: MCEstimate,
    /// Bound on the contribution of paths without atoms in `{g̃ > 0}`,
    /// where neither form applies.
    pub bias_bound: f64,
    pub dim: usize,
}

impl GradientEstimates {
    /// Combined SE of `(est_i - est_j)` for component `k`, with estimators
    /// indexed `0 = A, 1 = B, 2 = FD`.
    pub fn difference_se(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut c = vec![0.0; 3 * self.dim + 1];
        c[i * self.dim + k] += 1.0;
        c[j * self.dim + k] -= 1.0;
        self.joint.linear_se(&c)
    }

    pub fn estimate(&self, i: usize) -> &MCEstimate {
        match i {
            0 => &self.form_a,
            1 => &self.form_b,
            _ => &self.fd,
        }
    }
}

/// Shared setup of the gradient estimators.
pub struct GradientSetup {
    pub sim: Simulator,
    pub weight: TaperedWeight,
    pub proposal: RadialProposal,
    pub t: f64,
    pub bias_scale: f64,
    pub gamma1: f64,
}

impl GradientSetup {
    pub fn new(model: &LevyModel, spec: &FlowSpec, g: &WeightFunction, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("gradient estimators need t > 0, got {t}")));
        }
        let gamma1 = crate::bounds::check_derivative_condition(model, g, t)?;
        let sim = Simulator::new(model, spec, t)?;
        let eps = model.truncation_eps;
        let weight = TaperedWeight::new(g, eps);
        let rho = model.rho0.clone();
        let d = model.dim;
        let lo = eps.max(rho.inner);
        let top = rho.support_radius();
        let mut brk = weight.breakpoints(&rho);
        brk.extend(rho.breakpoints());
        let w2 = weight.clone();
        let r2 = rho.clone();
        let proposal = RadialProposal::new(
            move |r| r.powi(d as i32 - 1) * r2.phi(r) * w2.eval(r, &r2).0,
            lo,
            top,
            &brk,
            32,
        )
        .map_err(|e| Error::InvalidModel(format!("the (ρ₀g)dz proposal is not normalizable ({e}); shrink the support of g")))?;
        // Paths with no atom in {g̃ > 0}: probability e^{-μ_t(g̃ > 0)}.
        let opts = QuadOptions::default().with_rel_tol(1e-9);
        let support = t * model.rho0.radial_integral(d, |r| if weight.eval(r, &rho).0 > 0.0 { 1.0 } else { 0.0 }, lo, f64::INFINITY, &brk, &opts)?;
        let grad_mass = model.rho0.radial_integral(d, |r| rho.dphi(r).abs() / rho.phi(r).max(1e-300), lo, f64::INFINITY, &brk, &opts)?;
        let bias_scale = (-support).exp() * (1.0 + t * grad_mass);
        Ok(Self { sim, weight, proposal, t, bias_scale, gamma1 })
    }

    fn lambda_t(&self) -> f64 {
        let spec = self.sim.cache.spec();
        spec.lambda_bound * (spec.alpha_bound.max(0.0) * self.t).exp()
    }
}

fn adjoint_apply(cache: &FlowCache, s: f64, u: &DVector<f64>) -> DVector<f64> {
    cache.sigma_inv_t_adjoint(s, u).unwrap_or_else(|_| DVector::from_element(u.len(), f64::NAN))
}

/// Joint MC of form A, form B and the central finite difference along each
/// coordinate with common random numbers.
pub fn gradient_mc(
    model: &LevyModel,
    spec: &FlowSpec,
    f: &TestFunction,
    x: &[f64],
    t: f64,
    g: &WeightFunction,
    n: u64,
    seed: u64,
    delta: f64,
) -> Result<GradientEstimates> {
    let setup = GradientSetup::new(model, spec, g, t)?;
    gradient_mc_with(&setup, f, x, n, seed, delta)
}

pub fn gradient_mc_with(setup: &GradientSetup, f: &TestFunction, x: &[f64], n: u64, seed: u64, delta: f64) -> Result<GradientEstimates> {
    if !(1e-4..=1e-1).contains(&delta) {
        return Err(Error::Domain(format!("finite-difference step must lie in [1e-4, 1e-1], got {delta}")));
    }
    let sim = &setup.sim;
    let d = sim.dim();
    if x.len() != d {
        return Err(Error::Domain("starting point has the wrong dimension".into()));
    }
    let t = setup.t;
    let rho = &sim.model.rho0;
    let cache = &sim.cache;
    let tt: DMatrix<f64> = cache.t_total().clone();
    let tx = &tt * DVector::from_column_slice(x);
    let shifts: Vec<DVector<f64>> = (0..d).map(|i| tt.column(i) * delta).collect();
    let kap = kappa(d);
    let wt = &setup.weight;
    let joint = run_mc(n, seed, 3 * d + 1, |_, rng, out| {
        let (noise, path) = sim.sample_noise(rng);
        let xv = &tx + &noise;
        let fx = f.value(xv.as_slice());
        let w: f64 = path.atoms().map(|(_, z)| wt.eval(norm(z), rho).0).sum();
        // Form B: pure path functional.
        if w > 0.0 {
            for (s, z) in path.atoms() {
                let r = norm(z);
                let (gv, gd) = wt.eval(r, rho);
                let phi = rho.phi(r);
                if phi <= 0.0 || (gv == 0.0 && gd == 0.0) {
                    continue;
                }
                let coef = (phi * gv * gd - w * (rho.dphi(r) * gv + phi * gd)) / (w * w * phi);
                let u = DVector::from_iterator(d, z.iter().map(|zi| zi / r));
                let v = adjoint_apply(cache, s, &u);
                for k in 0..d {
                    out[d + k] += fx * coef * v[k];
                }
            }
        }
        // Form A: one importance draw of (z, s).
        let r = setup.proposal.sample(rng);
        let mut u = vec![0.0; d];
        random_direction(d, rng, &mut u);
        let s = rng.random::<f64>() * t;
        let u = DVector::from_vec(u);
        let z = &u * r;
        let y = &xv + cache.push_jump(s, &z);
        let (gv, gd) = wt.eval(r, rho);
        let (phi, dphi) = (rho.phi(r), rho.dphi(r));
        let num = w * (dphi * gv + phi * gd) + gv * gv * dphi;
        let den = (w + gv) * (w + gv);
        let pdf = setup.proposal.pdf(r);
        if den > 0.0 && pdf > 0.0 {
            let weight = t * kap * r.powi(d as i32 - 1) / pdf;
            let v = adjoint_apply(cache, s, &u);
            let fy = f.value(y.as_slice());
            for k in 0..d {
                out[k] = -fy * v[k] * num / den * weight;
            }
        }
        for k in 0..d {
            let up = &xv + &shifts[k];
            let dn = &xv - &shifts[k];
            out[2 * d + k] = (f.value(up.as_slice()) - f.value(dn.as_slice())) / (2.0 * delta);
        }
        out[3 * d] = fx;
    });
    let grad_sup = match f {
        TestFunction::Linear { c } => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
        _ => f.second_derivative_bound().max(1.0),
    };
    let bias_bound = setup.bias_scale * setup.lambda_t() * (f.sup_norm().min(1e300) + grad_sup);
    let idx = |o: usize| (o * d..(o + 1) * d).collect::<Vec<_>>();
    Ok(GradientEstimates {
        form_a: joint.select(&idx(0)),
        form_b: joint.select(&idx(1)),
        fd: joint.select(&idx(2)),
        joint,
        bias_bound,
        dim: d,
    })
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Form A alone:
/// `-E ∫ f(X + T_{s,t}σ_s z) (σ_s⁻¹T_s)^* {L⁰(g)∇(ρ₀g) + g²∇ρ₀}/(L⁰(g)+g)² dz ds`.
pub fn gradient_mc_form_a(model: &LevyModel, spec: &FlowSpec, f: &TestFunction, x: &[f64], t: f64, g: &WeightFunction, n: u64, seed: u64) -> Result<MCEstimate> {
    Ok(gradient_mc(model, spec, f, x, t, g, n, seed, 1e-2)?.form_a)
}

/// Form B alone:
/// `E[f(X) Σ_{atoms} (σ_s⁻¹T_s)^* {ρ₀g∇g - L⁰(g)∇(ρ₀g)}/(L⁰(g)²ρ₀)]`.
pub fn gradient_mc_form_b(model: &LevyModel, spec: &FlowSpec, f: &TestFunction, x: &[f64], t: f64, g: &WeightFunction, n: u64, seed: u64) -> Result<MCEstimate> {
    Ok(gradient_mc(model, spec, f, x, t, g, n, seed, 1e-2)?.form_b)
}

/// `(P̂_tf(x + δe) - P̂_tf(x - δe)) / 2δ` with common random numbers.
pub fn gradient_fd_oracle(model: &LevyModel, spec: &FlowSpec, f: &TestFunction, x: &[f64], t: f64, n: u64, seed: u64, delta: f64, direction: &[f64]) -> Result<MCEstimate> {
    if !(1e-4..=1e-1).contains(&delta) {
        return Err(Error::Domain(format!("finite-difference step must lie in [1e-4, 1e-1], got {delta}")));
    }
    let sim = Simulator::new(model, spec, t)?;
    let e = DVector::from_column_slice(direction);
    let xv = DVector::from_column_slice(x);
    let up = &xv + &e * delta;
    let dn = &xv - &e * delta;
    let tt = sim.cache.t_total().clone();
    let (tu, td) = (&tt * up, &tt * dn);
    Ok(run_mc(n, seed, 1, |_, rng, out| {
        let (noise, _) = sim.sample_noise(rng);
        out[0] = (f.value((&tu + &noise).as_slice()) - f.value((&td + &noise).as_slice())) / (2.0 * delta);
    }))
}

/// A density `ĝ` with respect to `μ_t` on `R^d × [0, t]`, time-independent,
/// given by `ĝ(z) = q(|z|) / (t κ(d) |z|^{d-1} φ(|z|))` for a radial
/// proposal law `q`, so that `μ_t(ĝ) = 1` by construction.
#[derive(Clone, Debug)]
pub struct GirsanovDensity {
    pub proposal: RadialProposal,
    pub rho0: RadialDensity,
    pub dim: usize,
    pub t: f64,
}

impl GirsanovDensity {
    /// `ĝ ∝ g` on the simulated support of `model`.
    pub fn from_weight(model: &LevyModel, g: &WeightFunction, t: f64) -> Result<Self> {
        if !validate_model(model).infinite_activity {
            return Err(Error::InvalidModel("the transform needs μ_t(ĝ > 0) = ∞: ν₀ must have infinite activity".into()));
        }
        let rho = model.rho0.clone();
        let d = model.dim;
        let lo = model.truncation_eps.max(rho.inner);
        let mut brk = g.breakpoints(&rho);
        brk.extend(rho.breakpoints());
        let (r2, g2) = (rho.clone(), g.clone());
        let proposal = RadialProposal::new(
            move |r| r.powi(d as i32 - 1) * r2.phi(r) * g2.value_r(r, &r2),
            lo,
            rho.support_radius(),
            &brk,
            32,
        )?;
        let out = Self { proposal, rho0: rho, dim: d, t };
        let total = out.normalization(model)?;
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("μ_t(ĝ) = {total}, not 1")));
        }
        Ok(out)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let r = norm(z);
        let phi = self.rho0.phi(r);
        if phi <= 0.0 {
            return 0.0;
        }
        self.proposal.pdf(r) / (self.t * kappa(self.dim) * r.powi(self.dim as i32 - 1) * phi)
    }

    /// `μ_t(ĝ)` by quadrature.
    pub fn normalization(&self, model: &LevyModel) -> Result<f64> {
        let sim = model.simulated();
        let lo = self.proposal.lower();
        let mut brk: Vec<f64> = sim.rho0.breakpoints();
        brk.extend((0..200).map(|j| lo * 10f64.powf(j as f64 / 8.0)));
        let opts = QuadOptions::default().with_rel_tol(1e-10);
        let top = self.proposal.upper().min(sim.rho0.support_radius());
        let d = self.dim;
        let v = integrate_with_breaks(
            |r| {
                let phi = sim.rho0.phi(r);
                if phi <= 0.0 {
                    0.0
                } else {
                    let z: Vec<f64> = std::iter::once(r).chain(std::iter::repeat(0.0).take(d - 1)).collect();
                    self.value(&z) * phi * kappa(d) * r.powi(d as i32 - 1)
                }
            },
            lo,
            top,
            &brk,
            &opts,
        )?;
        Ok(self.t * v.value)
    }
}

/// A configuration `L⁰ + δ_{(τ, ξ)}` with its weight `R`.
#[derive(Clone, Debug)]
pub struct GirsanovSample {
    pub path: JumpPath,
    pub tau: f64,
    pub xi: Vec<f64>,
    /// `R = 1 / (L⁰(ĝ) + ĝ(ξ, τ))`.
    pub weight: f64,
}

pub fn girsanov_sample(model: &LevyModel, density: &GirsanovDensity, t: f64, rng: &mut crate::estimate::SampleRng) -> Result<GirsanovSample> {
    let sampler = RadialSampler::new(&model.rho0, model.dim, model.truncation_eps)?;
    Ok(girsanov_draw(&sampler, model.truncation_eps, density, t, rng))
}

fn girsanov_draw(sampler: &RadialSampler, eps: f64, density: &GirsanovDensity, t: f64, rng: &mut crate::estimate::SampleRng) -> GirsanovSample {
    let d = density.dim;
    let base = sample_atoms(sampler, t, eps, rng);
    let r = density.proposal.sample(rng);
    let mut xi = vec![0.0; d];
    random_direction(d, rng, &mut xi);
    xi.iter_mut().for_each(|v| *v *= r);
    let tau = rng.random::<f64>() * t;
    let total: f64 = base.atoms().map(|(_, z)| density.value(z)).sum::<f64>() + density.value(&xi);
    GirsanovSample { path: base.with_atom(tau, &xi), tau, xi, weight: 1.0 / total }
}

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct GirsanovReport {
    pub rows: Vec<CheckRow>,
    pub min_weight: f64,
    pub max_abs_z: f64,
}

/// Weighted functionals of the shifted configuration against their values
/// under the reference law: `E[R] = 1`, the atom count with `|z| >= δ`, the
/// Campbell mean of `g̃`, and `E[R e^{-w(c|z|²)}] = exp(-μ_t(1 - e^{-c|z|²}))`
/// for `c ∈ {0.1, 0.25, 0.5, 1}`.
pub fn girsanov_check(
    model: &LevyModel,
    density: &GirsanovDensity,
    t: f64,
    delta: f64,
    g_tilde: &WeightFunction,
    n: u64,
    seed: u64,
) -> Result<GirsanovReport> {
    let sim = model.simulated();
    let rho = &sim.rho0;
    let eps = sim.truncation_eps;
    if delta < eps {
        return Err(Error::Domain(format!("δ = {delta} is below the truncation level {eps}")));
    }
    let sampler = RadialSampler::new(rho, sim.dim, eps)?;
    let support = t * rho.tail_mass(sim.dim, density.proposal.lower())?;
    let cs = [0.1, 0.25, 0.5, 1.0];
    let quad = WeightFunction::power(2.0);
    let mut refs = vec![-(-support).exp_m1(), t * rho.tail_mass(sim.dim, delta)?, mu_t(&sim, g_tilde, t)?];
    for c in cs {
        refs.push((-mu_t_exp_integral(&sim, &quad, c, t)?).exp());
    }
    let k = refs.len();
    let est = run_mc(n, seed, k, |_, rng, out| {
        let smp = girsanov_draw(&sampler, eps, density, t, rng);
        let r = smp.weight;
        let mut count = 0.0;
        let mut wg = 0.0;
        let mut sq = 0.0;
        for (_, z) in smp.path.atoms() {
            let a = norm(z);
            if a >= delta {
                count += 1.0;
            }
            wg += g_tilde.value(z, rho);
            sq += a * a;
        }
        out[0] = r;
        out[1] = r * count;
        out[2] = r * wg;
        for (j, c) in cs.iter().enumerate() {
            out[3 + j] = r * (-c * sq).exp();
        }
    });
    // The minimum weight is a diagnostic; it is taken over a fixed prefix
    // of the sample streams.
    let min_weight = (0..n.min(2000))
        .map(|i| girsanov_draw(&sampler, eps, density, t, &mut crate::estimate::sample_rng(seed, i)).weight)
        .fold(f64::INFINITY, f64::min);
    let names: Vec<String> = ["weight_mean", "atom_count", "campbell"]
        .iter()
        .map(|s| s.to_string())
        .chain(cs.iter().map(|c| format!("char_{c}")))
        .collect();
    let rows: Vec<CheckRow> = (0..k)
        .map(|j| {
            let z = crate::estimate::z_score(est.mean[j], est.stderr[j], refs[j], 0.0);
            CheckRow { name: names[j].clone(), estimate: est.mean[j], stderr: est.stderr[j], reference: refs[j], z }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(GirsanovReport { rows, min_weight, max_abs_z })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> LevyModel {
        LevyModel::new(1, RadialDensity::power(1.0, 2.0, 1.0), 1e-2)
    }

    fn m2() -> LevyModel {
        LevyModel::new(1, RadialDensity::stable(1, 1.0, 1.0), 1e-2)
    }

    #[test]
    fn radial_rule_matches_quadrature() {
        for (m, g) in [(m1(), WeightFunction::power(1.0)), (m2(), WeightFunction::inverse_density())] {
            let sim = m.simulated();
            let rule = RadialRule::new(&sim, 1.0, &g.breakpoints(&sim.rho0)).unwrap();
            let mu = mu_t(&sim, &g, 1.0).unwrap();
            let v = rule.apply(|r| g.value_r(r, &sim.rho0));
            assert!((v - mu).abs() < 1e-6 * mu, "{v} {mu}");
            let w = 3.0;
            let q = sim
                .rho0
                .radial_integral(1, |r| { let gv = g.value_r(r, &sim.rho0); gv / (w + gv) }, 0.0, f64::INFINITY, &[1.0], &QuadOptions::default().with_rel_tol(1e-10))
                .unwrap();
            let v = rule.apply(|r| { let gv = g.value_r(r, &sim.rho0); gv / (w + gv) });
            assert!((v - q).abs() < 1e-6 * q);
        }
    }

    #[test]
    fn damped_oracles_agree() {
        for (m, g) in [(m1(), WeightFunction::power(1.0)), (m2(), WeightFunction::inverse_density())] {
            let (a, b) = mecke_damped_oracle(&m, &g, 1.0).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1e-300), "{a:e} {b:e}");
        }
    }

    #[test]
    fn campbell_reference() {
        let r = mecke_two_sides(&m1(), &WeightFunction::power(1.0), MeckeFunctional::Campbell, 1.0, 4000, 3).unwrap();
        // μ_t(|z|) = 2 ln(1/ε) on the simulated measure.
        assert!((r.lhs.scalar() - 2.0 * 100f64.ln()).abs() < 1e-8);
        assert!(r.z_score().abs() < 4.0);
    }

    #[test]
    fn tapered_weight_derivative() {
        let tw = TaperedWeight::new(&WeightFunction::power(2.0), 0.01);
        let rho = RadialDensity::stable(1, 1.0, 1.0);
        for r in [0.0105, 0.013, 0.0199, 0.05] {
            let h = 1e-7;
            let fd = (tw.eval(r + h, &rho).0 - tw.eval(r - h, &rho).0) / (2.0 * h);
            assert!((fd - tw.eval(r, &rho).1).abs() < 1e-6);
        }
        assert_eq!(tw.eval(0.01, &rho), (0.0, 0.0));
    }

    #[test]
    fn constant_f_has_zero_gradient_and_mean_one() {
        let spec = FlowSpec::scalar(-0.5, 1.0).unwrap();
        let m = m2();
        let one = TestFunction::constant(1.0);
        let e = semigroup_mc(&m, &spec, &one, &[0.3], 0.5, 1000, 1).unwrap();
        assert_eq!(e.scalar(), 1.0);
        assert_eq!(e.se(), 0.0);
        let gr = gradient_mc(&m, &spec, &one, &[0.3], 0.5, &WeightFunction::inverse_density(), 4000, 2, 1e-2).unwrap();
        assert!(gr.form_a.scalar().abs() < 3.5 * gr.form_a.se());
        assert!(gr.form_b.scalar().abs() < 3.5 * gr.form_b.se());
        assert_eq!(gr.fd.scalar(), 0.0);
    }

    #[test]
    fn girsanov_density_is_normalized() {
        let m = m2();
        let dens = GirsanovDensity::from_weight(&m, &WeightFunction::inverse_density(), 1.0).unwrap();
        assert!((dens.normalization(&m).unwrap() - 1.0).abs() < 1e-6);
        let mut rng = crate::estimate::sample_rng(9, 0);
        let s = girsanov_sample(&m, &dens, 1.0, &mut rng).unwrap();
        assert!(s.weight > 0.0 && s.tau >= 0.0 && s.tau <= 1.0);
        assert_eq!(s.path.atoms().filter(|(t, _)| *t == s.tau).count(), 1);
        let finite = LevyModel::new(1, RadialDensity::power(1.0, 0.0, 1.0), 1e-2);
        assert!(GirsanovDensity::from_weight(&finite, &WeightFunction::power(1.0), 1.0).is_err());
    }
}
