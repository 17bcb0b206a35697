//! Catalog of test functions `f: R^d → R` with closed-form gradients and
//! derivative bounds.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    Constant { value: f64 },
    /// `⟨c, y⟩`; unbounded, for gradient identities only.
    Linear { c: Vec<f64> },
    /// `floor + σ_w(u) - σ_w(u - len)` with `u = ⟨c, y⟩` and the softplus
    /// `σ_w(u) = w log(1 + e^{u/w})`: a smoothed ramp from `floor` to
    /// `floor + len`.
    Ramp { c: Vec<f64>, width: f64, len: f64, floor: f64 },
    /// `floor + amp · exp(-|y - m|² / 2w²)`.
    GaussianBump { m: Vec<f64>, width: f64, amp: f64, floor: f64 },
    /// `floor + 1/2 + atan((⟨e, y⟩ - m) / w) / π` with `|e| = 1`.
    Step { e: Vec<f64>, m: f64, width: f64, floor: f64 },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(u: f64, w: f64) -> f64 {
    let v = u / w;
    if v > 30.0 {
        u + w * (-v).exp().ln_1p()
    } else {
        w * v.exp().ln_1p()
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `max |d²/du² atan(u)/π|`.
const ATAN_D2: f64 = 0.206_748_335_783_172_03;
/// `max |d³/du³ exp(-u²/2)|`.
const GAUSS_D3: f64 = 1.380_119_046_160_749_3;
/// `max |d²/dv² softplus|`, `max |d³/dv³ softplus|` for unit width.
const SOFTPLUS_D2: f64 = 0.25;
const SOFTPLUS_D3: f64 = 0.096_225_044_864_937_63;

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn linear(c: Vec<f64>) -> Self {
        TestFunction::Linear { c }
    }

    pub fn bump(m: Vec<f64>, width: f64, amp: f64) -> Self {
        TestFunction::GaussianBump { m, width, amp, floor: 1.0 }
    }

    pub fn step(e: Vec<f64>, m: f64, width: f64) -> Result<Self> {
        let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::Domain("step direction must be non-zero".into()));
        }
        Ok(TestFunction::Step { e: e.iter().map(|x| x / n).collect(), m, width, floor: 0.0 })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            TestFunction::Constant { .. } => None,
            TestFunction::Linear { c } | TestFunction::Ramp { c, .. } => Some(c.len()),
            TestFunction::GaussianBump { m, .. } => Some(m.len()),
            TestFunction::Step { e, .. } => Some(e.len()),
        }
    }

    pub fn with_floor(&self, f: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            TestFunction::Ramp { floor, .. }
            | TestFunction::GaussianBump { floor, .. }
            | TestFunction::Step { floor, .. } => *floor = f,
            TestFunction::Constant { value } => *value = f,
            TestFunction::Linear { .. } => {}
        }
        out
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Linear { c } => dot(c, y),
            TestFunction::Ramp { c, width, len, floor } => {
                let u = dot(c, y);
                floor + softplus(u, *width) - softplus(u - len, *width)
            }
            TestFunction::GaussianBump { m, width, amp, floor } => {
                let r2: f64 = y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                floor + amp * (-r2 / (2.0 * width * width)).exp()
            }
            TestFunction::Step { e, m, width, floor } => {
                floor + 0.5 + ((dot(e, y) - m) / width).atan() / PI
            }
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        match self {
            TestFunction::Constant { .. } => vec![0.0; y.len()],
            TestFunction::Linear { c } => c.clone(),
            TestFunction::Ramp { c, width, len, .. } => {
                let u = dot(c, y);
                let s = logistic(u / width) - logistic((u - len) / width);
                c.iter().map(|ci| ci * s).collect()
            }
            TestFunction::GaussianBump { m, width, amp, .. } => {
                let w2 = width * width;
                let r2: f64 = y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                let v = amp * (-r2 / (2.0 * w2)).exp();
                y.iter().zip(m).map(|(a, b)| -v * (a - b) / w2).collect()
            }
            TestFunction::Step { e, m, width, .. } => {
                let u = (dot(e, y) - m) / width;
                let s = 1.0 / (PI * width * (1.0 + u * u));
                e.iter().map(|ei| ei * s).collect()
            }
        }
    }

    /// `(inf f, sup f)`; `None` when unbounded.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            TestFunction::Constant { value } => Some((*value, *value)),
            TestFunction::Linear { .. } => None,
            TestFunction::Ramp { len, floor, .. } => Some((*floor, floor + len)),
            TestFunction::GaussianBump { amp, floor, .. } => {
                Some((floor.min(floor + amp), floor.max(floor + amp)))
            }
            TestFunction::Step { floor, .. } => Some((*floor, floor + 1.0)),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.range().map(|(a, b)| a.abs().max(b.abs())).unwrap_or(f64::INFINITY)
    }

    /// Bound on `|D²f(y)[e, e]|` over `y` and unit `e`.
    pub fn second_derivative_bound(&self) -> f64 {
        match self {
            TestFunction::Constant { .. } | TestFunction::Linear { .. } => 0.0,
            TestFunction::Ramp { c, width, .. } => {
                let n2: f64 = c.iter().map(|x| x * x).sum();
                2.0 * SOFTPLUS_D2 * n2 / width
            }
            TestFunction::GaussianBump { width, amp, .. } => amp.abs() / (width * width),
            TestFunction::Step { width, .. } => ATAN_D2 / (width * width),
        }
    }

    /// Bound on `|D³f(y)[e, e, e]|` over `y` and unit `e`.
    pub fn third_derivative_bound(&self) -> f64 {
        match self {
            TestFunction::Constant { .. } | TestFunction::Linear { .. } => 0.0,
            TestFunction::Ramp { c, width, .. } => {
                let n2: f64 = c.iter().map(|x| x * x).sum();
                2.0 * SOFTPLUS_D3 * n2.powf(1.5) / (width * width)
            }
            TestFunction::GaussianBump { width, amp, .. } => GAUSS_D3 * amp.abs() / width.powi(3),
            TestFunction::Step { width, .. } => (2.0 / PI) / width.powi(3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<TestFunction> {
        vec![
            TestFunction::constant(2.0),
            TestFunction::linear(vec![0.3, -1.0]),
            TestFunction::Ramp { c: vec![1.0, 0.5], width: 0.3, len: 2.0, floor: 1.0 },
            TestFunction::bump(vec![0.2, -0.1], 0.7, 1.5),
            TestFunction::step(vec![1.0, 1.0], 0.4, 0.5).unwrap(),
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        for f in catalog() {
            for k in 0..25 {
                let y = [-2.0 + 0.17 * k as f64, 1.3 - 0.11 * k as f64];
                let g = f.gradient(&y);
                for i in 0..2 {
                    let mut a = y;
                    let mut b = y;
                    a[i] += 1e-6;
                    b[i] -= 1e-6;
                    let fd = (f.value(&a) - f.value(&b)) / 2e-6;
                    assert!((fd - g[i]).abs() < 1e-7, "{f:?} {y:?}");
                }
            }
        }
    }

    #[test]
    fn derivative_bounds_hold_along_lines() {
        for f in catalog() {
            let b2 = f.second_derivative_bound();
            let b3 = f.third_derivative_bound();
            let e = [0.6, 0.8];
            let h = 1e-3;
            for k in 0..400 {
                let s = -4.0 + 0.02 * k as f64;
                let at = |t: f64| f.value(&[s * 0.3 + t * e[0], -s + t * e[1]]);
                let d2 = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
                let d3 = (at(2.0 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2.0 * h)) / (2.0 * h * h * h);
                assert!(d2.abs() <= b2 * (1.0 + 1e-3) + 1e-6, "{f:?}");
                assert!(d3.abs() <= b3 * (1.0 + 1e-2) + 1e-4, "{f:?}");
            }
        }
    }

    #[test]
    fn constants_are_tight() {
        let u = 1.0 / 3f64.sqrt();
        assert!((2.0 * u / (PI * (1.0 + u * u).powi(2)) - ATAN_D2).abs() < 1e-15);
        let s = (3.0 - 6f64.sqrt()).sqrt();
        assert!(((3.0 * s - s.powi(3)) * (-s * s / 2.0).exp() - GAUSS_D3).abs() < 1e-12);
        let p = 0.5 - 3f64.sqrt() / 6.0;
        assert!((p * (1.0 - p) * (1.0 - 2.0 * p) - SOFTPLUS_D3).abs() < 1e-15);
    }

    #[test]
    fn ranges() {
        let r = TestFunction::Ramp { c: vec![1.0], width: 0.1, len: 2.0, floor: 1.0 };
        assert!((r.value(&[-5.0]) - 1.0).abs() < 1e-12);
        assert!((r.value(&[50.0]) - 3.0).abs() < 1e-12);
        assert_eq!(TestFunction::bump(vec![0.0], 1.0, 1.0).range(), Some((1.0, 2.0)));
    }
}
