//! JSON experiment configuration.
//!
//! Every field has a default, so `{}` is a complete configuration and
//! reproduces the standard verification battery. Infinite radii are written
//! as `null` or left out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::SlowFactor;
use crate::error::{Error, Result};
use crate::finite_markov::SuiteConfig;
use crate::flow::FlowSpec;
use crate::harnack_lab::GridConfig;
use crate::levy_model::{validate_model, LevyModel, RadialDensity, WeightFunction};
use crate::testfn::TestFunction;

fn inf(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    /// `c₀ r^{-(d+α)}`.
    Stable { alpha: f64, c0: f64 },
    /// `c₀ r^{-(d+α)} ((1 - r/r₀)^+)^k`.
    TruncatedStable {
        alpha: f64,
        c0: f64,
        r0: f64,
        #[serde(default)]
        k: f64,
    },
    /// `r^{-d} c₀ log^ε(1 + r^{-2}) ((1 - r/r₀)^+)^k`.
    LogType {
        c0: f64,
        eps: f64,
        #[serde(default)]
        r0: Option<f64>,
        #[serde(default)]
        k: f64,
    },
    /// `c r^{-β} 1{r < r₀}`.
    Power {
        c: f64,
        beta: f64,
        #[serde(default)]
        r0: Option<f64>,
    },
    RadialTable { r: Vec<f64>, phi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub truncation_eps: f64,
    pub profile: ProfileConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 1, truncation_eps: 1e-2, profile: ProfileConfig::Stable { alpha: 1.0, c0: 1.0 } }
    }
}

impl ModelConfig {
    pub fn stable(dim: usize, alpha: f64, c0: f64, eps: f64) -> Self {
        ModelConfig { dim, truncation_eps: eps, profile: ProfileConfig::Stable { alpha, c0 } }
    }

    pub fn build(&self) -> Result<LevyModel> {
        let d = self.dim;
        if !(1..=2).contains(&d) {
            return Err(Error::Config(format!("model dimension must be 1 or 2, got {d}")));
        }
        if !(self.truncation_eps > 0.0) {
            return Err(Error::Config("truncation_eps must be positive".into()));
        }
        let rho = match &self.profile {
            ProfileConfig::Stable { alpha, c0 } => RadialDensity::stable(d, *alpha, *c0),
            ProfileConfig::TruncatedStable { alpha, c0, r0, k } => RadialDensity::truncated_stable(d, *alpha, *c0, *r0, *k),
            ProfileConfig::LogType { c0, eps, r0, k } => RadialDensity::log_type(d, *c0, *eps, inf(*r0), *k),
            ProfileConfig::Power { c, beta, r0 } => RadialDensity::power(*c, *beta, inf(*r0)),
            ProfileConfig::RadialTable { r, phi } => RadialDensity::table(r.clone(), phi.clone())?,
        };
        let model = LevyModel::new(d, rho, self.truncation_eps);
        let diag = validate_model(&model);
        if !diag.is_valid() {
            return Err(Error::InvalidModel(diag.violations.join("; ")));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    /// `scale / (1 ∨ ρ₀)`.
    InverseDensity {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale |z|^k 1{|z| <= cutoff}`.
    Power {
        k: f64,
        #[serde(default)]
        cutoff: Option<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    Constant { value: f64 },
}

fn one() -> f64 {
    1.0
}

impl WeightConfig {
    pub fn build(&self) -> WeightFunction {
        match self {
            WeightConfig::InverseDensity { scale } => WeightFunction::InverseDensity { scale: *scale },
            WeightConfig::Power { k, cutoff, scale } => WeightFunction::Power { k: *k, cutoff: inf(*cutoff), scale: *scale },
            WeightConfig::Constant { value } => WeightFunction::Constant { value: *value },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowConfig {
    /// Constant `A` and `σ`, given row by row.
    Constant { a: Vec<Vec<f64>>, sigma: Vec<Vec<f64>> },
    /// `A_u = diag(a + b u)` on `[0, t_max]`.
    LinearDiag { a: Vec<f64>, b: Vec<f64>, sigma: Vec<Vec<f64>>, t_max: f64 },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl FlowConfig {
    pub fn scalar(a: f64, sigma: f64) -> Self {
        FlowConfig::Constant { a: vec![vec![a]], sigma: vec![vec![sigma]] }
    }

    /// The coupled 2-d benchmark flow.
    pub fn coupled_2d() -> Self {
        FlowConfig::Constant {
            a: vec![vec![-0.5, 0.2], vec![-0.1, -0.3]],
            sigma: vec![vec![1.0, 0.0], vec![0.3, 0.8]],
        }
    }

    pub fn build(&self) -> Result<FlowSpec> {
        match self {
            FlowConfig::Constant { a, sigma } => FlowSpec::constant(matrix(a, "a")?, matrix(sigma, "sigma")?),
            FlowConfig::LinearDiag { a, b, sigma, t_max } => FlowSpec::linear_in_time_diag(
                DVector::from_column_slice(a),
                DVector::from_column_slice(b),
                matrix(sigma, "sigma")?,
                *t_max,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionConfig {
    Constant { value: f64 },
    Linear { c: Vec<f64> },
    Ramp {
        c: Vec<f64>,
        width: f64,
        len: f64,
        #[serde(default = "one")]
        floor: f64,
    },
    Bump {
        m: Vec<f64>,
        width: f64,
        amp: f64,
        #[serde(default = "one")]
        floor: f64,
    },
    Step {
        e: Vec<f64>,
        m: f64,
        width: f64,
        #[serde(default)]
        floor: f64,
    },
}

impl FunctionConfig {
    pub fn build(&self) -> Result<TestFunction> {
        Ok(match self {
            FunctionConfig::Constant { value } => TestFunction::constant(*value),
            FunctionConfig::Linear { c } => TestFunction::linear(c.clone()),
            FunctionConfig::Ramp { c, width, len, floor } => {
                TestFunction::Ramp { c: c.clone(), width: *width, len: *len, floor: *floor }
            }
            FunctionConfig::Bump { m, width, amp, floor } => {
                TestFunction::bump(m.clone(), *width, *amp).with_floor(*floor)
            }
            FunctionConfig::Step { e, m, width, floor } => TestFunction::step(e.clone(), *m, *width)?.with_floor(*floor),
        })
    }

    /// Short label for output rows.
    pub fn label(&self) -> &'static str {
        match self {
            FunctionConfig::Constant { .. } => "constant",
            FunctionConfig::Linear { .. } => "linear",
            FunctionConfig::Ramp { .. } => "ramp",
            FunctionConfig::Bump { .. } => "bump",
            FunctionConfig::Step { .. } => "step",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelConfig,
    pub flow: FlowConfig,
    pub x: Vec<f64>,
    pub t: f64,
    pub samples: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { model: ModelConfig::default(), flow: FlowConfig::scalar(-0.5, 1.0), x: vec![0.0], t: 1.0, samples: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCase {
    pub name: String,
    pub model: ModelConfig,
    pub g: WeightConfig,
}

fn mecke_cases() -> Vec<ModelCase> {
    vec![
        ModelCase {
            name: "power-unit".into(),
            model: ModelConfig {
                dim: 1,
                truncation_eps: 1e-2,
                profile: ProfileConfig::Power { c: 1.0, beta: 2.0, r0: Some(1.0) },
            },
            g: WeightConfig::Power { k: 1.0, cutoff: None, scale: 1.0 },
        },
        ModelCase {
            name: "cauchy".into(),
            model: ModelConfig::stable(1, 1.0, 1.0, 1e-2),
            g: WeightConfig::InverseDensity { scale: 1.0 },
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeckeConfig {
    pub cases: Vec<ModelCase>,
    pub t: f64,
    pub samples: u64,
    pub thetas: Vec<f64>,
    /// A finite-activity case whose negative moments must come out infinite.
    pub finite_case: Option<ModelCase>,
    pub z_crit: f64,
}

impl Default for MeckeConfig {
    fn default() -> Self {
        MeckeConfig {
            cases: mecke_cases(),
            t: 1.0,
            samples: 100_000,
            thetas: vec![0.5, 1.0, 2.0],
            finite_case: Some(ModelCase {
                name: "uniform-unit".into(),
                model: ModelConfig {
                    dim: 1,
                    truncation_eps: 1e-2,
                    profile: ProfileConfig::Power { c: 1.0, beta: 0.0, r0: Some(1.0) },
                },
                g: WeightConfig::Constant { value: 1.0 },
            }),
            z_crit: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCase {
    pub name: String,
    pub model: ModelConfig,
    pub g: WeightConfig,
    pub flow: FlowConfig,
    pub x: Vec<f64>,
    pub f: FunctionConfig,
    pub t: f64,
}

/// `d ∈ {1, 2}` × {ramp, bump, step} × {truncated stable, stable}, plus a
/// linear function on the truncated model in each dimension.
fn gradient_cases() -> Vec<GradientCase> {
    let eps = 5e-2;
    let mut out = Vec::new();
    for d in [1usize, 2] {
        let flow = if d == 1 { FlowConfig::scalar(-0.5, 1.0) } else { FlowConfig::coupled_2d() };
        let (x, c, e) = if d == 1 {
            (vec![0.3], vec![1.0], vec![1.0])
        } else {
            (vec![0.3, -0.2], vec![1.0, 0.5], vec![0.6, 0.8])
        };
        let truncated = (
            "truncated",
            ModelConfig {
                dim: d,
                truncation_eps: eps,
                profile: ProfileConfig::TruncatedStable { alpha: 1.0, c0: 1.0, r0: 1.0, k: 4.0 },
            },
            WeightConfig::Power { k: 2.0, cutoff: None, scale: 1.0 },
        );
        let stable = ("stable", ModelConfig::stable(d, 1.0, 1.0, eps), WeightConfig::InverseDensity { scale: 1.0 });
        let fs = [
            FunctionConfig::Ramp { c: c.clone(), width: 0.5, len: 2.0, floor: 1.0 },
            FunctionConfig::Bump { m: vec![0.0; d], width: 0.7, amp: 1.0, floor: 1.0 },
            FunctionConfig::Step { e: e.clone(), m: 0.1, width: 0.4, floor: 0.0 },
        ];
        for (label, model, g) in [&truncated, &stable] {
            for f in &fs {
                out.push(GradientCase {
                    name: format!("d{d}-{label}-{}", f.label()),
                    model: model.clone(),
                    g: g.clone(),
                    flow: flow.clone(),
                    x: x.clone(),
                    f: f.clone(),
                    t: 0.5,
                });
            }
        }
        out.push(GradientCase {
            name: format!("d{d}-truncated-linear"),
            model: truncated.1.clone(),
            g: truncated.2.clone(),
            flow: flow.clone(),
            x: x.clone(),
            f: FunctionConfig::Linear { c: c.clone() },
            t: 0.5,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCase {
    pub a: f64,
    pub f: FunctionConfig,
}

/// MC against the exact 1-d stable OU values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub cases: Vec<OracleCase>,
    pub alpha: f64,
    pub c0: f64,
    pub sigma: f64,
    pub x: f64,
    pub t: f64,
    pub truncation_eps: f64,
    pub samples: u64,
    pub z_crit: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let bump = FunctionConfig::Bump { m: vec![0.0], width: 0.5, amp: 1.0, floor: 1.0 };
        let step = FunctionConfig::Step { e: vec![1.0], m: 0.1, width: 0.4, floor: 0.0 };
        OracleConfig {
            cases: [0.0, -0.5]
                .iter()
                .flat_map(|&a| [OracleCase { a, f: bump.clone() }, OracleCase { a, f: step.clone() }])
                .collect(),
            alpha: 1.0,
            c0: 1.0 / std::f64::consts::PI,
            sigma: 1.0,
            x: 0.3,
            t: 0.5,
            truncation_eps: 2e-3,
            samples: 100_000,
            z_crit: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientConfig {
    pub cases: Vec<GradientCase>,
    pub samples: u64,
    /// Finite-difference step.
    pub delta: f64,
    pub z_crit: f64,
    /// Tolerance in SE for linear `f` against `T_t*c`.
    pub linear_z_crit: f64,
    pub oracle: OracleConfig,
}

impl Default for GradientConfig {
    fn default() -> Self {
        GradientConfig {
            cases: gradient_cases(),
            samples: 100_000,
            delta: 1e-2,
            z_crit: 4.0,
            linear_z_crit: 3.0,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovCase {
    pub name: String,
    pub model: ModelConfig,
    /// The density `ĝ` is this weight normalized to `μ_t(ĝ) = 1`.
    pub g: WeightConfig,
    pub t: f64,
    /// Atom-count threshold `|z| >= δ`.
    pub delta: f64,
    /// Weight of the Campbell functional.
    pub g_tilde: WeightConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirsanovConfig {
    pub cases: Vec<GirsanovCase>,
    pub samples: u64,
    pub z_crit: f64,
}

impl Default for GirsanovConfig {
    fn default() -> Self {
        let cases = [1usize, 2]
            .iter()
            .map(|&d| GirsanovCase {
                name: format!("d{d}-stable"),
                model: ModelConfig::stable(d, 1.0, 1.0, 1e-2),
                g: WeightConfig::InverseDensity { scale: 1.0 },
                t: 1.0,
                delta: 0.1,
                g_tilde: WeightConfig::Power { k: 1.0, cutoff: Some(1.0), scale: 1.0 },
            })
            .collect();
        GirsanovConfig { cases, samples: 100_000, z_crit: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlowFactorConfig {
    Constant { value: f64 },
    LogPower { c: f64, eps: f64 },
}

impl SlowFactorConfig {
    pub fn build(&self) -> SlowFactor {
        match *self {
            SlowFactorConfig::Constant { value } => SlowFactor::Constant(value),
            SlowFactorConfig::LogPower { c, eps } => SlowFactor::LogPower { c, eps },
        }
    }
}

/// `∫₀^∞ e^{-tψ_k(r)} dr` for a log-type profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiConfig {
    pub s: SlowFactorConfig,
    pub k: f64,
    pub r0: f64,
    pub dim: usize,
    pub ts: Vec<f64>,
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig { s: SlowFactorConfig::LogPower { c: 1.0, eps: 1.0 }, k: 4.0, r0: 2.0, dim: 1, ts: vec![1.0, 2.0] }
    }
}

/// Log-log slope of the profile Harnack integral against `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlopeConfig {
    pub alpha: f64,
    pub c0: f64,
    pub dim: usize,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub h: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub tolerance: f64,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        SlopeConfig {
            alpha: 1.0,
            c0: 1.0,
            dim: 1,
            p: 2.0,
            c1: 1.0,
            c2: 1.0,
            h: 0.1,
            t_min: 0.05,
            t_max: 0.5,
            points: 8,
            tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub model: ModelConfig,
    pub g: WeightConfig,
    pub flow: FlowConfig,
    pub thetas: Vec<f64>,
    pub ps: Vec<f64>,
    pub ts: Vec<f64>,
    pub hs: Vec<f64>,
    /// Its Γ-integrals must be classified divergent.
    pub finite_case: Option<ModelCase>,
    pub psi: Option<PsiConfig>,
    pub slope: Option<SlopeConfig>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            model: ModelConfig::stable(1, 1.0, 1.0 / std::f64::consts::PI, 1e-2),
            g: WeightConfig::InverseDensity { scale: 1.0 },
            flow: FlowConfig::scalar(-0.5, 1.0),
            thetas: vec![0.5, 1.0, 2.0],
            ps: vec![1.5, 2.0, 3.0],
            ts: vec![0.25, 0.5, 1.0, 2.0],
            hs: vec![0.0, 0.1, 0.5],
            finite_case: MeckeConfig::default().finite_case,
            psi: Some(PsiConfig::default()),
            slope: Some(SlopeConfig::default()),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every section derives its own seed from it.
    pub seed: u64,
    pub simulate: SimulateConfig,
    pub mecke: MeckeConfig,
    pub gradient: GradientConfig,
    pub girsanov: GirsanovConfig,
    pub bounds: BoundsConfig,
    /// Shared by the `harnack` and `log-harnack` commands.
    pub harnack: GridConfig,
    pub finite_markov: SuiteConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses `text`, applies dotted `key=value` overrides and deserializes.
    /// Values are read as JSON and fall back to plain strings.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut v: Value = if text.trim().is_empty() { Value::Object(Default::default()) } else { serde_json::from_str(text)? };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets every Monte Carlo sample count.
    pub fn set_samples(&mut self, n: u64) {
        self.simulate.samples = n;
        self.mecke.samples = n;
        self.gradient.samples = n;
        self.gradient.oracle.samples = n;
        self.girsanov.samples = n;
        self.harnack.samples = n;
        self.harnack.bound_samples = n;
        self.harnack.gradient_samples = n;
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("`{part}` in `{key}` must index an array")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range (length {len}) in `{key}`")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.gradient.cases.len(), 14);
        assert_eq!(c.mecke, MeckeConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.gradient, c.gradient);
        assert_eq!(back.bounds, c.bounds);
    }

    #[test]
    fn malformed_json_reports_the_line() {
        let err = ExperimentConfig::from_json("{\n  \"seed\": 3,\n  \"mecke\": {,\n}").unwrap_err();
        match err {
            Error::Json { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"mecke": {"sample": 3}}"#).is_err());
    }

    #[test]
    fn dotted_overrides() {
        let c = ExperimentConfig::from_json_with_overrides(
            r#"{"seed": 1}"#,
            &["harnack.ps=[2]".into(), "mecke.t=0.5".into(), "finite_markov.instances=3".into()],
        )
        .unwrap();
        assert_eq!(c.harnack.ps, vec![2.0]);
        assert_eq!(c.mecke.t, 0.5);
        assert_eq!(c.finite_markov.instances, 3);
        let c = ExperimentConfig::from_json_with_overrides(
            r#"{"mecke": {"cases": [{"name": "a", "model": {}, "g": {"kind": "constant", "value": 1}}]}}"#,
            &["mecke.cases.0.name=renamed".into()],
        )
        .unwrap();
        assert_eq!(c.mecke.cases[0].name, "renamed");
        assert!(ExperimentConfig::from_json_with_overrides("{}", &["seed".into()]).is_err());
        assert!(ExperimentConfig::from_json_with_overrides("{}", &["seed.x=1".into()]).is_err());
    }

    #[test]
    fn model_families_build() {
        let fams = [
            ProfileConfig::Stable { alpha: 1.5, c0: 1.0 },
            ProfileConfig::TruncatedStable { alpha: 1.0, c0: 1.0, r0: 1.0, k: 4.0 },
            ProfileConfig::LogType { c0: 1.0, eps: 1.0, r0: None, k: 0.0 },
            ProfileConfig::Power { c: 1.0, beta: 2.0, r0: Some(1.0) },
            ProfileConfig::RadialTable { r: vec![0.5, 1.0, 2.0], phi: vec![2.0, 1.0, 0.0] },
        ];
        for profile in fams {
            let m = ModelConfig { dim: 1, truncation_eps: 1e-2, profile };
            m.build().unwrap();
        }
        assert!(ModelConfig { dim: 3, ..Default::default() }.build().is_err());
    }
}
