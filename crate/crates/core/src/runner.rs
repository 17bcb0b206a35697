//! Batteries behind the command-line subcommands.
//!
//! Each battery turns an [`ExperimentConfig`] section into CSV artifacts and
//! a list of pass/fail checks. Nothing is written here; [`write_artifacts`]
//! stores a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::bounds::{
    c45_bounds, gamma_rho_g, grad_bound_c12, harnack_bound_t41, lemma23_rhs, gamma_rho_g_positive,
    logharnack_bound_tlh, loglog_slope, psi_integral, BoundInputs,
};
use crate::config::{ExperimentConfig, ModelCase};
use crate::error::{Error, Result};
use crate::estimate::{derive_seed, sample_rng, MCEstimate};
use crate::finite_markov::{run_suite, SuiteRow};
use crate::flow::FlowCache;
use crate::harnack_lab::{oracle_check, verify_grid, GridConfig, HarnackReport, StableOu};
use crate::levy_model::{LevyModel, RadialDensity};
use crate::mecke_girsanov::{
    gradient_mc, lemma23_mc, mecke_damped_oracle, mecke_two_sides, girsanov_check, GirsanovDensity,
    MeckeFunctional,
};
use crate::bounds::check_derivative_condition;
use crate::pathsim::{write_paths_csv, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    MeckeTest,
    Gradient,
    GirsanovTest,
    Bounds,
    Harnack,
    LogHarnack,
    FiniteMarkov,
    FullSuite,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Simulate,
        Command::MeckeTest,
        Command::Gradient,
        Command::GirsanovTest,
        Command::Bounds,
        Command::Harnack,
        Command::LogHarnack,
        Command::FiniteMarkov,
        Command::FullSuite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::MeckeTest => "mecke-test",
            Command::Gradient => "gradient",
            Command::GirsanovTest => "girsanov-test",
            Command::Bounds => "bounds",
            Command::Harnack => "harnack",
            Command::LogHarnack => "log-harnack",
            Command::FiniteMarkov => "finite-markov",
            Command::FullSuite => "full-suite",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Outcome of one check. Vacuous checks carry no information and count
/// neither as passes nor as failures.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub pass: bool,
    pub vacuous: bool,
    pub detail: String,
}

impl Check {
    fn new(group: &str, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
        Check { group: group.into(), name: name.into(), pass, vacuous: false, detail: detail.into() }
    }

    fn vacuous(group: &str, name: impl Into<String>, detail: impl Into<String>) -> Check {
        Check { group: group.into(), name: name.into(), pass: true, vacuous: true, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub contents: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub vacuous: usize,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    fn extend(&mut self, other: RunOutput) {
        self.artifacts.extend(other.artifacts);
        self.checks.extend(other.checks);
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for k in &self.checks {
            if k.vacuous {
                c.vacuous += 1;
            } else if k.pass {
                c.pass += 1;
            } else {
                c.fail += 1;
            }
        }
        c
    }

    /// Counts per check group, in order of first appearance.
    pub fn group_counts(&self) -> Vec<(String, Counts)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: BTreeMap<String, Counts> = BTreeMap::new();
        for k in &self.checks {
            let e = map.entry(k.group.clone()).or_insert_with(|| {
                order.push(k.group.clone());
                Counts::default()
            });
            if k.vacuous {
                e.vacuous += 1;
            } else if k.pass {
                e.pass += 1;
            } else {
                e.fail += 1;
            }
        }
        order.into_iter().map(|g| { let c = map[&g].clone(); (g, c) }).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass && !c.vacuous)
    }

    /// One line per group.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (g, c) in self.group_counts() {
            let _ = writeln!(s, "{g}: {} pass, {} fail, {} vacuous", c.pass, c.fail, c.vacuous);
        }
        s
    }
}

/// Creates `dir` if needed and writes every artifact, refusing to replace
/// an existing file.
pub fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in &out.artifacts {
        let path = dir.join(&a.file);
        if path.exists() {
            return Err(Error::Config(format!("{} already exists; artifacts are write-once", path.display())));
        }
    }
    for a in &out.artifacts {
        let path = dir.join(&a.file);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            Error::Config(format!("cannot create {}: {e}", path.display()))
        })?;
        f.write_all(a.contents.as_bytes())?;
    }
    Ok(())
}

/// Per-section seeds, all derived from the master seed.
mod seeds {
    pub const SIMULATE: u64 = 0x51;
    pub const MECKE: u64 = 0x52;
    pub const GRADIENT: u64 = 0x53;
    pub const GIRSANOV: u64 = 0x54;
    pub const HARNACK: u64 = 0x55;
    pub const LOG_HARNACK: u64 = 0x56;
    pub const FINITE: u64 = 0x57;
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunOutput> {
    match command {
        Command::Simulate => run_simulate(cfg),
        Command::MeckeTest => run_mecke(cfg),
        Command::Gradient => run_gradient(cfg),
        Command::GirsanovTest => run_girsanov(cfg),
        Command::Bounds => run_bounds(cfg),
        Command::Harnack => run_harnack(cfg),
        Command::LogHarnack => run_log_harnack(cfg),
        Command::FiniteMarkov => run_finite_markov(cfg),
        Command::FullSuite => {
            let mut out = RunOutput::default();
            for c in &Command::ALL[..8] {
                out.extend(run(*c, cfg)?);
            }
            Ok(out)
        }
    }
}

const ESTIMATE_HEADER: &str = "estimator,component,mean,stderr,n,seed,bias_bound";

fn push_estimate(csv: &mut String, name: &str, est: &MCEstimate, bias: f64) {
    for (k, (m, s)) in est.mean.iter().zip(&est.stderr).enumerate() {
        let _ = writeln!(csv, "{name},{k},{m:e},{s:e},{},{},{bias:e}", est.n, est.seed);
    }
}

fn push_exact(csv: &mut String, name: &str, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(csv, "{name},{k},{v:e},0e0,0,0,0e0");
    }
}

fn within(diff: f64, z: f64, se: f64, bias: f64) -> bool {
    diff.abs() <= z * se + bias
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let s = &cfg.simulate;
    let model = s.model.build()?;
    let spec = s.flow.build()?;
    if s.x.len() != model.dim {
        return Err(Error::Config(format!("simulate.x has length {}, model dimension is {}", s.x.len(), model.dim)));
    }
    let sim = Simulator::new(&model, &spec, s.t)?;
    let seed = derive_seed(cfg.seed, seeds::SIMULATE);
    let x = DVector::from_column_slice(&s.x);
    let mut paths = Vec::with_capacity(s.samples as usize);
    let mut ends = String::from("sample_id");
    for k in 1..=model.dim {
        let _ = write!(ends, ",x_{k}");
    }
    ends.push('\n');
    for i in 0..s.samples {
        let mut rng = sample_rng(seed, i);
        let (xt, path) = sim.sample_x_with_path(&x, &mut rng);
        let _ = write!(ends, "{i}");
        for v in xt.iter() {
            let _ = write!(ends, ",{v:e}");
        }
        ends.push('\n');
        paths.push((i, path));
    }
    let mut buf = Vec::new();
    write_paths_csv(&mut buf, &paths)?;
    let atoms: usize = paths.iter().map(|p| p.1.len()).sum();
    let expected = s.t * model.rho0.tail_mass(model.dim, model.truncation_eps)? * s.samples as f64;
    // Poisson atom count against its mean, 4 SD.
    let ok = (atoms as f64 - expected).abs() <= 4.0 * expected.sqrt() + 1.0;
    Ok(RunOutput {
        artifacts: vec![
            Artifact { file: "paths.csv".into(), contents: String::from_utf8(buf).expect("utf8") },
            Artifact { file: "endpoints.csv".into(), contents: ends },
        ],
        checks: vec![Check::new("simulate", "atom_count", ok, format!("{atoms} atoms, expected {expected:.1}"))],
    })
}

fn build_case(c: &ModelCase) -> Result<(LevyModel, crate::levy_model::WeightFunction)> {
    Ok((c.model.build()?, c.g.build()))
}

fn is_infinite(r: Result<f64>) -> Result<bool> {
    match r {
        Ok(v) => Ok(v.is_infinite()),
        Err(Error::Divergent { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

pub fn run_mecke(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let m = &cfg.mecke;
    let seed = derive_seed(cfg.seed, seeds::MECKE);
    let mut csv = format!("{ESTIMATE_HEADER}\n");
    let mut checks = Vec::new();
    let mut tag = 0u64;
    let mut next_seed = || {
        tag += 1;
        derive_seed(seed, tag)
    };
    for case in &m.cases {
        let (model, g) = build_case(case)?;
        for h in MeckeFunctional::ALL {
            let r = mecke_two_sides(&model, &g, h, m.t, m.samples, next_seed())?;
            let name = format!("mecke:{}:{}", case.name, h.name());
            push_estimate(&mut csv, &format!("{name}:lhs"), &r.lhs, 0.0);
            push_estimate(&mut csv, &format!("{name}:rhs"), &r.rhs, 0.0);
            let z = r.z_score();
            let warn = if r.variance_warning { " (noisy variance)" } else { "" };
            checks.push(Check::new("mecke", name, z.abs() <= m.z_crit, format!("z = {z:.3}{warn}")));
            if h == MeckeFunctional::Damped {
                let (closed, series) = mecke_damped_oracle(&model, &g, m.t)?;
                let name = format!("mecke:{}:h3_oracle", case.name);
                push_exact(&mut csv, &name, &[closed, series]);
                let rel = (closed - series).abs() / closed.abs().max(1e-300);
                checks.push(Check::new("mecke", format!("{name}:series"), rel <= 1e-8, format!("rel = {rel:.2e}")));
                let z = (r.lhs.scalar() - closed) / r.lhs.se().max(1e-300);
                checks.push(Check::new("mecke", format!("{name}:lhs"), z.abs() <= m.z_crit, format!("z = {z:.3}")));
            }
        }
        let sim = model.simulated();
        for &theta in &m.thetas {
            let rhs = gamma_rho_g_positive(&sim, &g, theta, m.t)?;
            let mc = lemma23_mc(&model, &g, theta, m.t, true, m.samples, next_seed())?;
            let name = format!("lemma23:{}:theta{theta}", case.name);
            push_estimate(&mut csv, &format!("{name}:mc"), &mc, 0.0);
            push_exact(&mut csv, &format!("{name}:quadrature"), &[rhs]);
            let diff = mc.scalar() - rhs;
            let z = diff / mc.se();
            checks.push(Check::new("lemma23", name, within(diff, m.z_crit, mc.se(), 0.0), format!("z = {z:.3}")));
        }
    }
    if let Some(case) = &m.finite_case {
        let (model, g) = build_case(case)?;
        for &theta in &m.thetas {
            let quad = is_infinite(lemma23_rhs(&model, &g, theta, m.t))?;
            let mc = lemma23_mc(&model, &g, theta, m.t, false, m.samples, next_seed())?;
            let name = format!("lemma23:{}:theta{theta}:divergent", case.name);
            push_estimate(&mut csv, &format!("{name}:mc"), &mc, 0.0);
            push_exact(&mut csv, &format!("{name}:quadrature"), &[if quad { f64::INFINITY } else { f64::NAN }]);
            let both = quad && mc.scalar().is_infinite();
            checks.push(Check::new(
                "lemma23",
                name,
                both,
                format!("quadrature infinite: {quad}, MC mean {:e}", mc.scalar()),
            ));
        }
    }
    Ok(RunOutput { artifacts: vec![Artifact { file: "mecke.csv".into(), contents: csv }], checks })
}

pub fn run_gradient(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let gc = &cfg.gradient;
    let seed = derive_seed(cfg.seed, seeds::GRADIENT);
    let mut csv = format!("{ESTIMATE_HEADER}\n");
    let mut checks = Vec::new();
    const NAMES: [&str; 3] = ["form_a", "form_b", "fd"];
    for (i, case) in gc.cases.iter().enumerate() {
        let model = case.model.build()?;
        let spec = case.flow.build()?;
        let g = case.g.build();
        let f = case.f.build()?;
        let d = model.dim;
        if case.x.len() != d || spec.dim != d || f.dim().is_some_and(|fd| fd != d) {
            return Err(Error::Config(format!("gradient case `{}` mixes dimensions", case.name)));
        }
        match check_derivative_condition(&model, &g, case.t) {
            Err(Error::Vacuous(msg)) => {
                checks.push(Check::vacuous("gradient", case.name.clone(), msg));
                continue;
            }
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        let est = gradient_mc(&model, &spec, &f, &case.x, case.t, &g, gc.samples, derive_seed(seed, i as u64), gc.delta)?;
        for (j, name) in NAMES.iter().enumerate() {
            push_estimate(&mut csv, &format!("{}:{name}", case.name), est.estimate(j), est.bias_bound);
        }
        for (i1, i2) in [(0, 1), (0, 2), (1, 2)] {
            for k in 0..d {
                let diff = est.estimate(i1).mean[k] - est.estimate(i2).mean[k];
                let se = est.difference_se(i1, i2, k);
                checks.push(Check::new(
                    "gradient",
                    format!("{}:{}-{}:{k}", case.name, NAMES[i1], NAMES[i2]),
                    within(diff, gc.z_crit, se, est.bias_bound),
                    format!("diff = {diff:.3e}, se = {se:.3e}, bias = {:.1e}", est.bias_bound),
                ));
            }
        }
        if let crate::testfn::TestFunction::Linear { c } = &f {
            let cache = FlowCache::new(&spec, case.t)?;
            let target = cache.t_total().transpose() * DVector::from_column_slice(c);
            push_exact(&mut csv, &format!("{}:flow_transpose", case.name), target.as_slice());
            for j in 0..2 {
                let e = est.estimate(j);
                for k in 0..d {
                    let diff = e.mean[k] - target[k];
                    checks.push(Check::new(
                        "gradient_linear",
                        format!("{}:{}:{k}", case.name, NAMES[j]),
                        within(diff, gc.linear_z_crit, e.stderr[k], est.bias_bound),
                        format!("diff = {diff:.3e}, se = {:.3e}", e.stderr[k]),
                    ));
                }
            }
        }
    }
    let o = &gc.oracle;
    for (i, case) in o.cases.iter().enumerate() {
        let ou = StableOu::new(case.a, o.alpha, o.c0, o.sigma)?;
        let f = case.f.build()?;
        let s = derive_seed(seed, 0x1000 + i as u64);
        let label = format!("oracle:a{}:{}", case.a, case.f.label());
        for row in oracle_check(&ou, &f, o.x, o.t, o.truncation_eps, o.samples, s)? {
            let name = format!("{label}:{}", row.quantity);
            let _ = writeln!(
                csv,
                "{name},0,{:e},{:e},{},{s},{:e}",
                row.estimate, row.stderr, o.samples, row.bias_bound
            );
            push_exact(&mut csv, &format!("{name}:exact"), &[row.oracle]);
            checks.push(Check::new(
                "oracle",
                name,
                row.pass(o.z_crit),
                format!("z = {:.3}, bias allowance {:.1e}", row.z(), row.bias_bound),
            ));
        }
    }
    Ok(RunOutput { artifacts: vec![Artifact { file: "gradient.csv".into(), contents: csv }], checks })
}

pub fn run_girsanov(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let gc = &cfg.girsanov;
    let seed = derive_seed(cfg.seed, seeds::GIRSANOV);
    let mut csv = format!("{ESTIMATE_HEADER}\n");
    let mut checks = Vec::new();
    for (i, case) in gc.cases.iter().enumerate() {
        let model = case.model.build()?;
        let g = case.g.build();
        let density = GirsanovDensity::from_weight(&model, &g, case.t)?;
        let s = derive_seed(seed, i as u64);
        let rep = girsanov_check(&model, &density, case.t, case.delta, &case.g_tilde.build(), gc.samples, s)?;
        for row in &rep.rows {
            let name = format!("girsanov:{}:{}", case.name, row.name);
            let _ = writeln!(csv, "{name},0,{:e},{:e},{},{s},0e0", row.estimate, row.stderr, gc.samples);
            push_exact(&mut csv, &format!("{name}:reference"), &[row.reference]);
            checks.push(Check::new("girsanov", name, row.z.abs() <= gc.z_crit, format!("z = {:.3}", row.z)));
        }
    }
    Ok(RunOutput { artifacts: vec![Artifact { file: "girsanov.csv".into(), contents: csv }], checks })
}

struct BoundsCsv(String);

impl BoundsCsv {
    fn new() -> Self {
        BoundsCsv(String::from("quantity,theta,p,t,h,value,finite_flag\n"))
    }

    fn row(&mut self, q: &str, theta: Option<f64>, p: Option<f64>, t: f64, h: Option<f64>, v: f64) {
        let o = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(self.0, "{q},{},{},{t},{},{v:e},{}", o(theta), o(p), o(h), v.is_finite());
    }
}

fn value_or_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::Divergent { .. }) => Ok(f64::INFINITY),
        r => r,
    }
}

pub fn run_bounds(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let b = &cfg.bounds;
    let model = b.model.build()?;
    let g = b.g.build();
    let spec = b.flow.build()?;
    let mut csv = BoundsCsv::new();
    let mut checks = Vec::new();
    let rel_le = |a: f64, b: f64| a <= b * (1.0 + 1e-9) + 1e-300;

    for &theta in &b.thetas {
        let mut prev: Option<f64> = None;
        let mut mono = true;
        for &t in &b.ts {
            let v = value_or_inf(gamma_rho_g(&model, &g, theta, t))?;
            csv.row("gamma_rho_g", Some(theta), None, t, None, v);
            if let Some(pv) = prev {
                mono &= rel_le(v, pv);
            }
            prev = Some(v);
        }
        checks.push(Check::new("bounds", format!("gamma_nonincreasing_in_t:theta{theta}"), mono, ""));
    }

    let mut norms = None;
    for &p in &b.ps {
        for &t in &b.ts {
            let v = value_or_inf(grad_bound_c12(&model, &g, &spec, p, t))?;
            csv.row("grad_bound", None, Some(p), t, None, v);
            let mut prev: Option<f64> = None;
            let mut mono = true;
            for &h in &b.hs {
                let mut inputs = BoundInputs { model: model.clone(), g: g.clone(), spec: spec.clone(), p, t, h_norm: h, norms };
                if norms.is_none() {
                    norms = Some(inputs.sup_norms()?);
                    inputs.norms = norms;
                }
                let v = value_or_inf(harnack_bound_t41(&inputs))?;
                csv.row("harnack_bound", None, Some(p), t, Some(h), v);
                if h == 0.0 {
                    checks.push(Check::new("bounds", format!("harnack_bound_h0:p{p}:t{t}"), v == 1.0, format!("{v}")));
                }
                if let Some(pv) = prev {
                    mono &= rel_le(pv, v);
                }
                prev = Some(v);
            }
            checks.push(Check::new("bounds", format!("harnack_bound_nondecreasing_in_h:p{p}:t{t}"), mono, ""));
        }
    }

    let p0 = b.ps.first().copied().unwrap_or(2.0);
    for &t in &b.ts {
        let mut slope: Option<f64> = None;
        let mut linear = true;
        for &h in &b.hs {
            let inputs = BoundInputs { model: model.clone(), g: g.clone(), spec: spec.clone(), p: p0, t, h_norm: h, norms };
            let v = value_or_inf(logharnack_bound_tlh(&inputs))?;
            csv.row("log_harnack_bound", None, None, t, Some(h), v);
            if h == 0.0 {
                linear &= v == 0.0;
            } else {
                let s = v / h;
                match slope {
                    None => slope = Some(s),
                    Some(s0) => linear &= (s - s0).abs() <= 1e-9 * s0.abs(),
                }
            }
        }
        checks.push(Check::new("bounds", format!("log_harnack_bound_linear_in_h:t{t}"), linear, ""));
    }

    if let Some(case) = &b.finite_case {
        let (fm, fg) = build_case(case)?;
        for &theta in &b.thetas {
            let t = b.ts.first().copied().unwrap_or(1.0);
            let v = value_or_inf(gamma_rho_g(&fm, &fg, theta, t))?;
            csv.row(&format!("gamma_rho_g:{}", case.name), Some(theta), None, t, None, v);
            checks.push(Check::new(
                "bounds",
                format!("gamma_divergent:{}:theta{theta}", case.name),
                v.is_infinite(),
                format!("{v:e}"),
            ));
        }
    }

    if let Some(ps) = &b.psi {
        let s = ps.s.build();
        for &t in &ps.ts {
            let v = value_or_inf(psi_integral(&s, ps.k, ps.r0, ps.dim, t))?;
            csv.row("psi_integral", None, None, t, None, v);
            checks.push(Check::new("bounds", format!("psi_integral_finite:t{t}"), v.is_finite() && v > 0.0, format!("{v:e}")));
        }
    }

    if let Some(sc) = &b.slope {
        if sc.points < 2 || !(sc.t_max > sc.t_min) || !(sc.t_min > 0.0) {
            return Err(Error::Config("bounds.slope needs points >= 2 and 0 < t_min < t_max".into()));
        }
        let phi = RadialDensity::stable(sc.dim, sc.alpha, sc.c0);
        let ratio = (sc.t_max / sc.t_min).powf(1.0 / (sc.points - 1) as f64);
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for j in 0..sc.points {
            let t = sc.t_min * ratio.powi(j as i32);
            let v = c45_bounds(&phi, sc.p, t, sc.h, sc.dim, sc.c1, sc.c2)?.harnack_integral;
            csv.row("harnack_integral", None, Some(sc.p), t, Some(sc.h), v);
            ts.push(t);
            ys.push(v);
        }
        let slope = loglog_slope(&ts, &ys);
        let want = -(sc.dim as f64 + sc.alpha) / (sc.alpha * (sc.p - 1.0));
        csv.row("harnack_integral_slope", None, Some(sc.p), sc.t_max, Some(sc.h), slope);
        checks.push(Check::new(
            "bounds",
            "stable_scaling_slope",
            (slope - want).abs() <= sc.tolerance,
            format!("slope {slope:.4}, expected {want:.4}"),
        ));
    }
    Ok(RunOutput { artifacts: vec![Artifact { file: "bounds.csv".into(), contents: csv.0 }], checks })
}

fn harnack_output(rows: &[HarnackReport], file: &str, group: &str) -> RunOutput {
    let mut csv = format!("{}\n", HarnackReport::CSV_HEADER);
    let mut checks = Vec::new();
    for r in rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        let name = format!("{}:p{}:t{}:h{}", r.check, r.p, r.t, r.h_norm());
        let detail = format!("margin {:.3} SE", r.margin_se);
        checks.push(if r.vacuous {
            Check::vacuous(group, name, detail)
        } else {
            Check::new(group, name, r.pass, detail)
        });
        if r.check == "harnack" && r.h_norm() == 0.0 {
            checks.push(Check::new(group, format!("h0_bound:p{}:t{}", r.p, r.t), r.bound == 1.0, format!("{}", r.bound)));
        }
    }
    RunOutput { artifacts: vec![Artifact { file: file.into(), contents: csv }], checks }
}

pub fn run_harnack(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let grid = GridConfig { log_harnack: false, seed: derive_seed(cfg.seed, seeds::HARNACK), ..cfg.harnack.clone() };
    if !(grid.harnack || grid.first_bound || grid.gradient) {
        return Ok(RunOutput::default());
    }
    Ok(harnack_output(&verify_grid(&grid)?, "harnack.csv", "harnack"))
}

pub fn run_log_harnack(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if !cfg.harnack.log_harnack {
        return Ok(RunOutput::default());
    }
    let grid = GridConfig {
        harnack: false,
        first_bound: false,
        gradient: false,
        seed: derive_seed(cfg.seed, seeds::LOG_HARNACK),
        ..cfg.harnack.clone()
    };
    Ok(harnack_output(&verify_grid(&grid)?, "log_harnack.csv", "log-harnack"))
}

pub fn run_finite_markov(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let suite = crate::finite_markov::SuiteConfig { seed: derive_seed(cfg.seed, seeds::FINITE), ..cfg.finite_markov.clone() };
    let rows = run_suite(&suite)?;
    let mut csv = format!("{}\n", SuiteRow::CSV_HEADER);
    let mut checks = Vec::new();
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        checks.push(Check::new(
            &format!("finite-markov:{}", r.suite),
            format!("{}:{}", r.instance, r.check),
            r.pass,
            format!("margin {:e}", r.margin),
        ));
    }
    Ok(RunOutput { artifacts: vec![Artifact { file: "finite_markov.csv".into(), contents: csv }], checks })
}
