//! Explicit analytic quantities: the Gamma-type integrals `γ_{ρ₀,g}(θ, t)`,
//! the gradient multiplier, `ψ_k`, and the Harnack and log-Harnack bounds.
//!
//! Every function returns `+∞` rather than an error when the underlying
//! integral diverges; a divergent bound is still a valid bound.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::flow::{op_norm, sigma_inv_t, FlowSpec};
use crate::levy_model::{inverse_profile, kappa, mu_t_exp_integral, mu_t_support, LevyModel, RadialDensity, WeightFunction};
use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};

/// `ln(1e-14)`: the outer integrals are cut where the integrand falls this
/// far below its peak.
const CUT: f64 = 32.236_191_301_916_64;
/// Largest `|u| = |log r|` explored by the outer scans.
const U_MAX: f64 = 690.0;

pub fn gamma_fn(theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("Gamma needs θ > 0, got {theta}")));
    }
    Ok(statrs::function::gamma::gamma(theta))
}

fn ln_gamma(theta: f64) -> f64 {
    statrs::function::gamma::ln_gamma(theta)
}

/// `∫ G(u) du` over `(u_min, ∞)` (or all of `R` when `u_min` is `None`)
/// for `G = exp(log_g)`, where the integrand is an outer integral written
/// in `u = log r`.
///
/// The integrand is scanned on the geometric grid `r ∈ [1e-8, 1e8]` to find
/// its peak, the scan is extended outward until `G` drops below `1e-14` of
/// the peak, and the bracket is integrated adaptively. An integrand that
/// never decays, or grows back beyond the cut, is classified as divergent.
pub fn log_scale_integral(log_g: impl Fn(f64) -> Result<f64>, u_min: Option<f64>) -> Result<f64> {
    log_scale_integral_capped(log_g, u_min, U_MAX)
}

/// [`log_scale_integral`] with the outward scans stopped at `u_max`; an
/// integrand still above the cut there counts as divergent.
pub fn log_scale_integral_capped(
    log_g: impl Fn(f64) -> Result<f64>,
    u_min: Option<f64>,
    u_max: f64,
) -> Result<f64> {
    let u_max = u_max.min(U_MAX);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let eval = |u: f64| -> f64 {
        match log_g(u) {
            Ok(v) if v.is_nan() => {
                failure.borrow_mut().get_or_insert(Error::Domain(format!("NaN integrand at log r = {u}")));
                f64::NEG_INFINITY
            }
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    };
    let scan_lo = u_min.unwrap_or(-18.5).max(-18.5);
    let scan_hi = 18.5_f64.max(scan_lo + 1.0);
    let steps = ((scan_hi - scan_lo) / 0.5).ceil() as usize;
    let mut peak = f64::NEG_INFINITY;
    let mut argpeak = scan_lo;
    let mut grid = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let u = scan_lo + (scan_hi - scan_lo) * j as f64 / steps as f64;
        let v = eval(u);
        grid.push(u);
        if v > peak {
            peak = v;
            argpeak = u;
        }
    }
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    if peak == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if peak == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    // Extend right until the cut, tracking a new peak if one appears.
    let mut hi = scan_hi;
    let mut step = 0.5;
    loop {
        let v = eval(hi);
        if v > peak {
            peak = v;
            argpeak = hi;
        }
        if v < peak - CUT && hi > argpeak {
            break;
        }
        if hi >= u_max {
            return Ok(f64::INFINITY);
        }
        hi = (hi + step).min(u_max);
        step = (step * 1.25).min(8.0);
        grid.push(hi);
    }
    // The cut must persist: a re-growing integrand is not integrable.
    for probe in [hi + 5.0, hi + 20.0, hi + 80.0, u_max] {
        if probe.max(hi) <= u_max && eval(probe.min(u_max)) > peak - CUT + 4.0 {
            return Ok(f64::INFINITY);
        }
    }
    let lo = match u_min {
        Some(m) if m >= -18.5 => m,
        _ => {
            let mut lo = scan_lo;
            let mut step = 0.5;
            loop {
                let v = eval(lo);
                if v < peak - CUT {
                    break;
                }
                if lo <= -u_max {
                    if u_min.is_some() {
                        break;
                    }
                    return Ok(f64::INFINITY);
                }
                lo = (lo - step).max(-u_max).max(u_min.unwrap_or(f64::NEG_INFINITY));
                step = (step * 1.25).min(8.0);
                grid.push(lo);
                if Some(lo) == u_min {
                    break;
                }
            }
            lo
        }
    };
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let mut breaks: Vec<f64> = grid.iter().copied().filter(|&u| u > lo && u < hi).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let coarse: Vec<f64> = breaks.iter().step_by(4).copied().chain([argpeak]).collect();
    let opts = QuadOptions::default().with_rel_tol(1e-9).with_abs_tol(1e-300);
    let q = integrate_with_breaks(|u| (eval(u) - peak).exp(), lo, hi, &coarse, &opts)?;
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    Ok(q.value * peak.exp())
}

/// `γ_{ρ₀,g}(θ, t) = Γ(θ)⁻¹ ∫₀^∞ r^{θ-1} exp[-μ_t(1 - e^{-rg})] dr`, which by
/// the Gamma identity equals `E[L⁰_t(g)^{-θ}]`. Infinite when `μ_t(g > 0)`
/// is finite.
pub fn gamma_rho_g(model: &LevyModel, g: &WeightFunction, theta: f64, t: f64) -> Result<f64> {
    check_theta_t(theta, t)?;
    let lg = ln_gamma(theta);
    log_scale_integral_capped(
        |u| Ok(theta * u - mu_t_exp_integral(model, g, u.exp(), t)? - lg),
        None,
        representable_log_r(model, g),
    )
}

/// Largest `log r` at which `μ_t(1 - e^{-rg})` stays computable: the
/// quadrature resolves radii some 30 e-folds below the crossover
/// `r g(z) = 1`, where a singular `ρ₀` must not overflow.
fn representable_log_r(model: &LevyModel, g: &WeightFunction) -> f64 {
    let WeightFunction::Power { k, scale, .. } = g else {
        return U_MAX;
    };
    let mut s = 0.0;
    while s < 740.0 && model.rho0.phi((-s - 1.0_f64).exp()).is_finite() {
        s += 1.0;
    }
    if s >= 740.0 {
        return U_MAX;
    }
    k * (s - 35.0) - scale.ln()
}

/// The identity behind [`gamma_rho_g`] evaluated as the right-hand side of
/// `E[w(g)^{-θ}] = Γ(θ)⁻¹∫ r^{θ-1} e^{-μ_t(1-e^{-rg})} dr`.
pub fn lemma23_rhs(model: &LevyModel, g: &WeightFunction, theta: f64, t: f64) -> Result<f64> {
    gamma_rho_g(model, g, theta, t)
}

/// `E[w(g)^{-θ}; w(g) > 0]`, finite also when `μ_t(g > 0) < ∞`:
/// `Γ(θ)⁻¹∫ r^{θ-1}(e^{-μ_t(1-e^{-rg})} - e^{-μ_t(g>0)}) dr`.
pub fn gamma_rho_g_positive(model: &LevyModel, g: &WeightFunction, theta: f64, t: f64) -> Result<f64> {
    check_theta_t(theta, t)?;
    let support = mu_t_support(model, g, t)?;
    if support.is_infinite() {
        return gamma_rho_g(model, g, theta, t);
    }
    let lg = ln_gamma(theta);
    let rho = &model.rho0;
    let mut breaks = g.breakpoints(rho);
    breaks.push(1.0);
    let opts = QuadOptions::default().with_rel_tol(1e-11);
    log_scale_integral(
        |u| {
            let r = u.exp();
            // D(r) = μ_t(e^{-rg}; g > 0) = μ_t(g>0) - μ_t(1 - e^{-rg}).
            let d = t * rho.radial_integral(
                model.dim,
                |rad| {
                    let v = g.value_r(rad, rho);
                    if v > 0.0 { (-r * v).exp() } else { 0.0 }
                },
                0.0,
                f64::INFINITY,
                &breaks,
                &opts,
            )?;
            let log_expm1 = if d > 30.0 { d + (-(-d).exp()).ln_1p() } else { d.exp_m1().ln() };
            Ok(theta * u - support + log_expm1 - lg)
        },
        None,
    )
}

fn check_theta_t(theta: f64, t: f64) -> Result<()> {
    if !(theta > 0.0) || !(t > 0.0) {
        return Err(Error::Domain(format!("need θ > 0 and t > 0, got θ = {theta}, t = {t}")));
    }
    Ok(())
}

/// Condition for the derivative formula: `γ_{ρ₀,g}(1, t) < ∞`.
pub fn check_derivative_condition(model: &LevyModel, g: &WeightFunction, t: f64) -> Result<f64> {
    let v = gamma_rho_g(model, g, 1.0, t)?;
    if v.is_infinite() {
        return Err(Error::Vacuous(format!(
            "∫ exp[-μ_t(1 - e^(-rg))] dr diverges at t = {t}; shrink the support of g or enlarge ν₀"
        )));
    }
    Ok(v)
}

/// Inputs of the Harnack-type bounds.
#[derive(Clone, Debug)]
pub struct BoundInputs {
    pub model: LevyModel,
    pub g: WeightFunction,
    pub spec: FlowSpec,
    pub p: f64,
    pub t: f64,
    pub h_norm: f64,
    /// `(‖∇log(ρ₀g)‖_∞, ‖∇g‖_∞)`; computed by [`sup_norms`] when `None`.
    pub norms: Option<(f64, f64)>,
}

impl BoundInputs {
    pub fn sup_norms(&self) -> Result<(f64, f64)> {
        match self.norms {
            Some(n) => Ok(n),
            None => sup_norms(&self.model.rho0, &self.g),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.p > 1.0) || !(self.t > 0.0) || !(self.h_norm >= 0.0) {
            return Err(Error::Domain(format!(
                "need p > 1, t > 0, |h| >= 0; got p = {}, t = {}, |h| = {}",
                self.p, self.t, self.h_norm
            )));
        }
        Ok(())
    }

    /// `λ e^{α⁺} |h|`, the bound on `|σ_s⁻¹T_s h|` for `s <= t ∧ 1`.
    fn shift(&self) -> f64 {
        self.spec.lambda_bound * self.spec.alpha_bound.max(0.0).exp() * self.h_norm
    }
}

/// Multiplier `M` with `|∇P_tf| <= (P_t|f|^p)^{1/p} M`:
/// `γ(1,t)^{(p-1)/p} (∫ {‖σ_s⁻¹T_s‖(g|∇log ρ₀| + |∇log(ρ₀g)|)}^{p/(p-1)} g dμ_t)^{(p-1)/p}`.
/// `p = ∞` is allowed.
pub fn grad_bound_c12(model: &LevyModel, g: &WeightFunction, spec: &FlowSpec, p: f64, t: f64) -> Result<f64> {
    let (gamma1, factor) = grad_bound_factors(model, g, spec, p, t)?;
    if gamma1.is_infinite() || factor.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let e = if p.is_infinite() { 1.0 } else { (p - 1.0) / p };
    Ok((gamma1 * factor).powf(e))
}

/// The two factors `(γ(1,t), ∫{…}^q g dμ_t)` of [`grad_bound_c12`] before the
/// outer power.
pub fn grad_bound_factors(
    model: &LevyModel,
    g: &WeightFunction,
    spec: &FlowSpec,
    p: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if !(p > 1.0) || !(t > 0.0) {
        return Err(Error::Domain(format!("need p > 1 and t > 0, got p = {p}, t = {t}")));
    }
    let q = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let gamma1 = gamma_rho_g(model, g, 1.0, t)?;
    let opts = QuadOptions::default().with_rel_tol(1e-9).with_abs_tol(1e-300);
    let time = if spec.is_constant() && spec.dim == 1 {
        let a = spec.a_at(0.0)[(0, 0)];
        let s = spec.sigma_at(0.0)[(0, 0)].abs();
        let c = q * a;
        let int = if c.abs() < 1e-12 { t } else { (c * t).exp_m1() / c };
        int / s.powf(q)
    } else {
        let failure = RefCell::new(None);
        let v = integrate(
            |s| match sigma_inv_t(spec, s) {
                Ok(m) => op_norm(&m).powf(q),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            &opts,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        v?.value
    };
    let rho = &model.rho0;
    let mut breaks = g.breakpoints(rho);
    breaks.extend(rho.breakpoints());
    let space = rho.radial_integral(
        model.dim,
        |r| {
            let gv = g.value_r(r, rho);
            if gv <= 0.0 {
                return 0.0;
            }
            let (phi, dphi) = (rho.phi(r), rho.dphi(r));
            if phi <= 0.0 {
                return 0.0;
            }
            let dlog_rho = dphi / phi;
            let dlog_g = g.deriv_r(r, rho) / gv;
            (gv * dlog_rho.abs() + (dlog_rho + dlog_g).abs()).powf(q) * gv
        },
        0.0,
        f64::INFINITY,
        &breaks,
        &opts,
    );
    let space = match space {
        Ok(v) => v,
        Err(Error::Divergent { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok((gamma1, time * space))
}

/// Slowly varying factor `S` of the log-type family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlowFactor {
    Constant(f64),
    /// `c · log^ε(1 + u)`.
    LogPower { c: f64, eps: f64 },
}

impl SlowFactor {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SlowFactor::Constant(c) => c,
            SlowFactor::LogPower { c, eps } => c * u.ln_1p().powf(eps),
        }
    }
}

/// `ψ_k(r) = (1 - e^{-1}) κ(d) 2^{-k} ∫_{(r₀/2) ∧ r^{-1/k}}^{r₀/2} S(s^{-2}) ds/s`.
pub fn psi_k(s: &SlowFactor, k: f64, r0: f64, d: usize, r: f64) -> Result<f64> {
    if !(r > 0.0) || !(k > 0.0) || !(r0 > 0.0) {
        return Err(Error::Domain(format!("psi_k needs r, k, r₀ > 0 (r = {r}, k = {k}, r₀ = {r0})")));
    }
    let c = (1.0 - (-1.0f64).exp()) * kappa(d) / 2f64.powf(k);
    let hi = (r0 / 2.0).ln();
    let lo = hi.min(-r.ln() / k);
    if lo >= hi {
        return Ok(0.0);
    }
    let v = match *s {
        SlowFactor::Constant(a) => a * (hi - lo),
        _ => {
            let opts = QuadOptions::default().with_rel_tol(1e-12).with_abs_tol(1e-300);
            // s = e^v, so S(s^{-2}) ds/s = S(e^{-2v}) dv.
            integrate(|v| s.eval((-2.0 * v).exp()), lo, hi, &opts)?.value
        }
    };
    Ok(c * v)
}

/// `∫₀^∞ e^{-tψ_k(r)} dr`, `+∞` when divergent.
pub fn psi_integral(s: &SlowFactor, k: f64, r0: f64, d: usize, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("psi_integral needs t > 0, got {t}")));
    }
    // ψ_k vanishes for r <= (2/r₀)^k.
    let u0 = k * (2.0 / r0).ln();
    let flat = u0.exp();
    let rest = log_scale_integral(|u| Ok(u - t * psi_k(s, k, r0, d, u.exp())?), Some(u0))?;
    Ok(flat + rest)
}

/// Sup norms `(‖∇log(ρ₀g)‖_∞, ‖∇g‖_∞)` over the support of `ρ₀g`.
///
/// Closed forms are used for a pure power profile with `g = 1/(1 ∨ ρ₀)`;
/// otherwise a radial grid of 4096 and then 8192 points is refined, and a
/// value that keeps growing toward the grid ends is reported as infinite.
pub fn sup_norms(rho0: &RadialDensity, g: &WeightFunction) -> Result<(f64, f64)> {
    use crate::levy_model::Profile;
    if let (Profile::Power { c, beta, r0, k }, WeightFunction::InverseDensity { scale }) = (&rho0.profile, g) {
        if *k == 0.0 && r0.is_infinite() && rho0.inner == 0.0 && *beta > 0.0 {
            // ρ₀g = 1 ∧ ρ₀ and g = 1/(1 ∨ ρ₀); both gradients peak at φ(r*) = 1.
            let rstar = c.powf(1.0 / beta);
            return Ok((beta / rstar, scale * beta / rstar));
        }
    }
    let r_lo = if rho0.inner > 0.0 { rho0.inner } else { 1e-6 };
    let r_hi = if rho0.support_radius().is_finite() { rho0.support_radius() } else { 1e6 };
    let mut kinks = g.breakpoints(rho0);
    kinks.extend(rho0.breakpoints());
    let sweep = |lo: f64, hi: f64, n: usize| {
        let mut nl = 0.0_f64;
        let mut ng = 0.0_f64;
        let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
        let mut pts: Vec<f64> = (0..n).map(|j| lo * ratio.powi(j as i32)).collect();
        for &b in &kinks {
            pts.push(b * (1.0 - 1e-9));
            pts.push(b * (1.0 + 1e-9));
        }
        for r in pts {
            if r < lo || r > hi {
                continue;
            }
            let (phi, gv) = (rho0.phi(r), g.value_r(r, rho0));
            if phi <= 0.0 || gv <= 0.0 {
                continue;
            }
            let dl = rho0.dphi(r) / phi + g.deriv_r(r, rho0) / gv;
            nl = nl.max(dl.abs());
            ng = ng.max(g.deriv_r(r, rho0).abs());
        }
        (nl, ng)
    };
    let coarse = sweep(r_lo, r_hi, 4096);
    let lo2 = if rho0.inner > 0.0 { r_lo } else { r_lo * 1e-3 };
    let hi2 = if rho0.support_radius().is_finite() { r_hi } else { r_hi * 1e3 };
    let fine = sweep(lo2, hi2, 8192);
    let settle = |a: f64, b: f64| {
        if b > 2.0 * a.max(1e-300) && b > 1e-12 {
            f64::INFINITY
        } else {
            b.max(a)
        }
    };
    Ok((settle(coarse.0, fine.0), settle(coarse.1, fine.1)))
}

/// Second bound of the Harnack inequality:
/// `exp[N_log λe^α|h|] {1 + (λ N_g e^α |h|)^{1/((p-1)∨1)} γ(1/(p-1), t∧1)^{(p-1)∧1}}^{(p-1)∨1}`.
pub fn harnack_bound_t41(inputs: &BoundInputs) -> Result<f64> {
    inputs.check()?;
    if inputs.h_norm == 0.0 {
        return Ok(1.0);
    }
    let (n_log, n_g) = inputs.sup_norms()?;
    let p = inputs.p;
    let shift = inputs.shift();
    let outer = (p - 1.0).max(1.0);
    let inner = (p - 1.0).min(1.0);
    let gamma = gamma_rho_g(&inputs.model, &inputs.g, 1.0 / (p - 1.0), inputs.t.min(1.0))?;
    if n_log.is_infinite() || n_g.is_infinite() || gamma.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let bracket = 1.0 + (n_g * shift).powf(1.0 / outer) * gamma.powf(inner);
    Ok((n_log * shift).exp() * bracket.powf(outer))
}

/// Additive log-Harnack bound `λe^α|h| (N_log + N_g γ(1, t∧1))`.
pub fn logharnack_bound_tlh(inputs: &BoundInputs) -> Result<f64> {
    inputs.check()?;
    if inputs.h_norm == 0.0 {
        return Ok(0.0);
    }
    let (n_log, n_g) = inputs.sup_norms()?;
    let gamma = gamma_rho_g(&inputs.model, &inputs.g, 1.0, inputs.t.min(1.0))?;
    if n_log.is_infinite() || n_g.is_infinite() || gamma.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(inputs.shift() * (n_log + n_g * gamma))
}

/// The bounds for a decreasing lower profile `φ` with user constants
/// `c₁, c₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileBounds {
    /// `∫₀^∞ r^{(2-p)/(p-1)} e^{-c₁(t∧1) r (φ⁻¹(r))^d} dr`.
    pub harnack_integral: f64,
    /// `∫₀^∞ e^{-c₁(t∧1) r (φ⁻¹(r))^d} dr`.
    pub logharnack_integral: f64,
    /// `e^{c₂|h|}(1 + c₂|h|^{1/((p-1)∨1)} I_H)^{(p-1)∨1}`.
    pub harnack_multiplier: f64,
    /// `c₂|h| I_L`.
    pub logharnack_additive: f64,
    /// Grid value of `sup |φ'|/(φ + φ²)`.
    pub c2_prime: f64,
}

pub fn c45_bounds(phi: &RadialDensity, p: f64, t: f64, h_norm: f64, d: usize, c1: f64, c2: f64) -> Result<ProfileBounds> {
    if !(p > 1.0) || !(t > 0.0) || !(h_norm >= 0.0) || !(c1 > 0.0) || !(c2 >= 0.0) {
        return Err(Error::Domain("need p > 1, t > 0, |h| >= 0, c₁ > 0, c₂ >= 0".into()));
    }
    let r0 = phi.support_radius();
    let top = if r0.is_finite() { r0 } else { 1e6 };
    let n = 2048;
    let ratio = (top / 1e-6).powf(1.0 / n as f64);
    let mut prev = f64::INFINITY;
    let mut c2p = 0.0_f64;
    for j in 0..n {
        let r = 1e-6 * ratio.powi(j as i32);
        let v = phi.raw_phi(r);
        if v > prev * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("profile is not decreasing near r = {r}")));
        }
        prev = v;
        if v > 0.0 {
            c2p = c2p.max(phi.raw_dphi(r).abs() / (v + v * v));
        }
    }
    let tt = t.min(1.0);
    let exponent = |u: f64| {
        let r = u.exp();
        let inv = inverse_profile(phi, r);
        c1 * tt * r * inv.powi(d as i32)
    };
    let theta = 1.0 / (p - 1.0);
    let ih = log_scale_integral(|u| Ok(theta * u - exponent(u)), None)?;
    let il = log_scale_integral(|u| Ok(u - exponent(u)), None)?;
    let outer = (p - 1.0).max(1.0);
    let hm = if h_norm == 0.0 {
        1.0
    } else {
        (c2 * h_norm).exp() * (1.0 + c2 * h_norm.powf(1.0 / outer) * ih).powf(outer)
    };
    let la = if h_norm == 0.0 { 0.0 } else { c2 * h_norm * il };
    Ok(ProfileBounds {
        harnack_integral: ih,
        logharnack_integral: il,
        harnack_multiplier: hm,
        logharnack_additive: la,
        c2_prime: c2p,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable(c0: f64) -> LevyModel {
        LevyModel::new(1, RadialDensity::stable(1, 1.0, c0), 1e-2)
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_fn(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((gamma_fn(2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((gamma_fn(0.5).unwrap() - 1.772_453_850_905_516).abs() < 1e-13);
        assert!(gamma_fn(0.0).is_err());
    }

    #[test]
    fn gamma_rho_g_stable_oracle() {
        let g = WeightFunction::inverse_density();
        let cases = [
            (1.0, 1.0, 0.5, 0.815_492_021_458_333_6),
            (1.0, 0.5, 0.5, 0.835_710_106_237_140_7),
            (1.0, 2.0, 1.0, 0.127_909_854_859_783_3),
            (1.0 / std::f64::consts::PI, 1.0, 1.0, 0.676_928_385_730_980_1),
        ];
        for (c0, theta, t, want) in cases {
            let v = gamma_rho_g(&stable(c0), &g, theta, t).unwrap();
            assert!((v - want).abs() < 1e-7 * want, "{c0} {theta} {t}: {v} vs {want}");
        }
    }

    #[test]
    fn finite_activity_is_infinite() {
        let m = LevyModel::new(1, RadialDensity::power(1.0, 0.0, 1.0), 1e-2);
        let v = gamma_rho_g(&m, &WeightFunction::Constant { value: 1.0 }, 1.0, 1.0).unwrap();
        assert!(v.is_infinite());
        let v = gamma_rho_g(&m, &WeightFunction::power(1.0), 0.5, 1.0).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn positive_part_on_truncated_measures() {
        let m = LevyModel::new(1, RadialDensity::power(1.0, 2.0, 1.0), 1e-2).simulated();
        let g = WeightFunction::power(1.0);
        for (theta, want) in [(0.5, 0.332_402_967_217_842_98), (1.0, 0.111_144_574_519_215_07), (2.0, 0.012_649_631_726_160_414)] {
            let v = gamma_rho_g_positive(&m, &g, theta, 1.0).unwrap();
            assert!((v - want).abs() < 1e-7 * want, "{theta}: {v} vs {want}");
        }
        assert!(gamma_rho_g(&m, &g, 1.0, 1.0).unwrap().is_infinite());
        let m = stable(1.0).simulated();
        let g = WeightFunction::inverse_density();
        for (theta, want) in [(0.5, 0.540_135_557_817_300_7), (1.0, 0.310_704_913_198_100_8), (2.0, 0.131_165_838_284_166_6)] {
            let v = gamma_rho_g_positive(&m, &g, theta, 1.0).unwrap();
            assert!((v - want).abs() < 1e-7 * want, "{theta}: {v} vs {want}");
        }
    }

    #[test]
    fn gamma_is_monotone() {
        let m = stable(1.0);
        let g = WeightFunction::inverse_density();
        let mut prev = f64::INFINITY;
        for t in [0.25, 0.5, 1.0, 2.0] {
            let v = gamma_rho_g(&m, &g, 1.0, t).unwrap();
            assert!(v < prev);
            prev = v;
        }
        let a = gamma_rho_g(&m, &g, 1.0, 1.0).unwrap();
        let b = gamma_rho_g(&m, &g.scaled(2.0), 1.0, 1.0).unwrap();
        assert!(b < a);
    }

    fn c32_model() -> LevyModel {
        LevyModel::new(1, RadialDensity::log_type(1, 5.0, 0.0, 1.0, 4.0), 1e-2)
    }

    #[test]
    fn gradient_multiplier_oracle() {
        let m = c32_model();
        let g = WeightFunction::power(4.0);
        let spec = FlowSpec::scalar(0.0, 1.0).unwrap();
        let (g1, f2) = grad_bound_factors(&m, &g, &spec, 2.0, 1.0).unwrap();
        assert!((g1 - 172.997_981_496_237_5).abs() < 1e-6 * g1, "{g1}");
        assert!((f2 - 2.500_820_817_999_676).abs() < 1e-7 * f2, "{f2}");
        let m2 = grad_bound_c12(&m, &g, &spec, 2.0, 1.0).unwrap();
        assert!((m2 - 20.799_926_769_046_895).abs() < 1e-6 * m2);
        let inf = grad_bound_c12(&m, &g, &spec, f64::INFINITY, 1.0).unwrap();
        assert!((inf - 35.030_728_389_326_35).abs() < 1e-6 * inf);
        let big = grad_bound_c12(&m, &g, &spec, 1e6, 1.0).unwrap();
        assert!((big - inf).abs() < 1e-4 * inf);
        assert!((big - 35.030_678_859_373_53).abs() < 1e-6 * big);
    }

    #[test]
    fn gradient_multiplier_unit_slow_factor_diverges() {
        let m = LevyModel::new(1, RadialDensity::log_type(1, 1.0, 0.0, 1.0, 4.0), 1e-2);
        let spec = FlowSpec::scalar(0.0, 1.0).unwrap();
        let v = grad_bound_c12(&m, &WeightFunction::power(4.0), &spec, 2.0, 1.0).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn psi_examples() {
        let s = SlowFactor::Constant(1.0);
        assert_eq!(psi_k(&s, 4.0, 2.0, 1, 0.5).unwrap(), 0.0);
        assert_eq!(psi_k(&s, 4.0, 2.0, 1, 1.0).unwrap(), 0.0);
        let v = psi_k(&s, 4.0, 2.0, 1, 4f64.exp()).unwrap();
        assert!((v - 0.079_015_069_853_569_71).abs() < 1e-12);
        let log = SlowFactor::LogPower { c: 1.0, eps: 0.0 };
        let w = psi_k(&log, 4.0, 2.0, 1, 4f64.exp()).unwrap();
        assert!((w - v).abs() < 1e-10 * v);
        let mut prev = 0.0;
        for j in 0..60 {
            let v = psi_k(&SlowFactor::LogPower { c: 1.0, eps: 1.0 }, 4.0, 2.0, 1, 1.4f64.powi(j)).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn psi_integral_classification() {
        let s = SlowFactor::Constant(1.0);
        assert!(psi_integral(&s, 4.0, 2.0, 1, 1.0).unwrap().is_infinite());
        let log = SlowFactor::LogPower { c: 1.0, eps: 1.0 };
        let a = psi_integral(&log, 4.0, 2.0, 1, 1.0).unwrap();
        assert!((a - 2.360_849_432_925_621e23).abs() < 1e-6 * a, "{a:e}");
        let b = psi_integral(&log, 4.0, 2.0, 1, 2.0).unwrap();
        assert!((b - 1_643_392_925_367.866_6).abs() < 1e-6 * b, "{b:e}");
        assert!(b <= a);
    }

    #[test]
    fn sup_norm_examples() {
        let rho = RadialDensity::stable(1, 1.0, 1.0);
        let (nl, ng) = sup_norms(&rho, &WeightFunction::inverse_density()).unwrap();
        assert!((nl - 2.0).abs() < 1e-12 && (ng - 2.0).abs() < 1e-12);
        // The grid sweep reproduces the closed form.
        let custom = RadialDensity::from_fn("stable", f64::INFINITY, |r| r.powi(-2), |r| -2.0 * r.powi(-3));
        let (nl, ng) = sup_norms(&custom, &WeightFunction::inverse_density()).unwrap();
        assert!((nl - 2.0).abs() < 1e-3 && (ng - 2.0).abs() < 1e-3, "{nl} {ng}");
        let g = WeightFunction::Power { k: 3.0, cutoff: 0.5, scale: 1.0 };
        let trunc = RadialDensity::power(1.0, 0.0, 1.0);
        let (_, ng) = sup_norms(&trunc, &g).unwrap();
        assert!((ng - 3.0 * 0.25).abs() < 1e-6);
        let (nl, _) = sup_norms(&rho, &WeightFunction::power(4.0)).unwrap();
        assert!(nl.is_infinite());
    }

    fn inputs(h: f64, p: f64, t: f64) -> BoundInputs {
        BoundInputs {
            model: stable(1.0),
            g: WeightFunction::inverse_density(),
            spec: FlowSpec::scalar(0.0, 1.0).unwrap(),
            p,
            t,
            h_norm: h,
            norms: None,
        }
    }

    #[test]
    fn harnack_bound_examples() {
        assert_eq!(harnack_bound_t41(&inputs(0.0, 2.0, 0.5)).unwrap(), 1.0);
        assert_eq!(logharnack_bound_tlh(&inputs(0.0, 2.0, 0.5)).unwrap(), 0.0);
        let v = harnack_bound_t41(&inputs(0.1, 2.0, 0.5)).unwrap();
        assert!((v - 1.420_611_599_013_534).abs() < 1e-7, "{v}");
        let g1 = gamma_rho_g(&stable(1.0), &WeightFunction::inverse_density(), 1.0, 0.5).unwrap();
        assert!((v - 0.2f64.exp() * (1.0 + 0.2 * g1)).abs() < 1e-13);
        let l = logharnack_bound_tlh(&inputs(0.1, 2.0, 0.5)).unwrap();
        assert!((l - 0.363_098_404_291_666_7).abs() < 1e-7);
        let l2 = logharnack_bound_tlh(&inputs(0.2, 2.0, 0.5)).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-12);
        let mut prev = 1.0;
        for h in [0.05, 0.1, 0.2, 0.4] {
            let v = harnack_bound_t41(&inputs(h, 3.0, 2.0)).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(harnack_bound_t41(&inputs(1e-9, 1.5, 1.0)).unwrap() - 1.0 < 1e-6);
    }

    #[test]
    fn stable_scaling_slope() {
        let phi = RadialDensity::stable(1, 1.0, 1.0);
        let ts: Vec<f64> = (0..8).map(|j| 0.05 * 10f64.powf(j as f64 / 7.0)).collect();
        let vals: Vec<f64> = ts
            .iter()
            .map(|&t| c45_bounds(&phi, 2.0, t, 0.1, 1, 1.0, 1.0).unwrap().harnack_integral)
            .collect();
        assert!((loglog_slope(&ts, &vals) + 2.0).abs() < 0.05);
        // Closed form Γ(θ/β)/(β (c₁ t c₀^{d/(d+α)})^{θ/β}) with θ = 1, β = 1/2.
        let want = gamma_fn(2.0).unwrap() / (0.5 * 0.3f64.powf(2.0));
        let got = c45_bounds(&phi, 2.0, 0.3, 0.1, 1, 1.0, 1.0).unwrap().harnack_integral;
        assert!((got - want).abs() < 1e-6 * want);
        let z = c45_bounds(&phi, 2.0, 0.3, 0.0, 1, 1.0, 1.0).unwrap();
        assert!(z.harnack_multiplier >= 1.0 && z.logharnack_additive == 0.0);
        assert!(z.c2_prime.is_finite());
    }

    #[test]
    fn log_type_profile_integrals_are_finite() {
        let phi = RadialDensity::log_type(1, 1.0, 1.0, f64::INFINITY, 0.0);
        for t in [0.1, 1.0] {
            let b = c45_bounds(&phi, 2.0, t, 0.1, 1, 1.0, 1.0).unwrap();
            assert!(b.harnack_integral.is_finite() && b.logharnack_integral.is_finite());
        }
    }
}
