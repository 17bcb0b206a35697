use levy_harnack::bounds::{gamma_rho_g, harnack_bound_t41, logharnack_bound_tlh, BoundInputs};
use levy_harnack::estimate::{run_mc, sample_rng};
use levy_harnack::finite_markov::{
    check_kernel_bounds, harnack_psi, log_minimal_harnack_constant, logharnack_psi, minimal_logharnack_constant,
    random_instance, transport_cost, PhiFunction,
};
use levy_harnack::flow::{flow_eval, op_norm, FlowCache, FlowSpec};
use levy_harnack::levy_model::{mu_t_exp_integral, nu0_integral, LevyModel, RadialDensity, WeightFunction};
use levy_harnack::mecke_girsanov::{girsanov_sample, GirsanovDensity};
use levy_harnack::pathsim::{sample_jump_path, RadialSampler};
use levy_harnack::quadrature::QuadOptions;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn quick() -> ProptestConfig {
    ProptestConfig { cases: 16, ..ProptestConfig::default() }
}

fn stable(d: usize, alpha: f64) -> LevyModel {
    LevyModel::new(d, RadialDensity::stable(d, alpha, 1.0), 1e-2)
}

proptest! {
    #![proptest_config(quick())]

    #[test]
    fn laplace_exponent_is_increasing_and_concave(alpha in 0.3f64..1.8, k in 2.0f64..4.0, t in 0.2f64..2.0) {
        let m = stable(1, alpha);
        let g = WeightFunction::power(k);
        let rs: Vec<f64> = (0..9).map(|j| 0.1 * 3f64.powi(j)).collect();
        let v: Vec<f64> = rs.iter().map(|&r| mu_t_exp_integral(&m, &g, r, t).unwrap()).collect();
        for j in 1..rs.len() {
            prop_assert!(v[j] >= v[j - 1] * (1.0 - 1e-9));
        }
        // Slopes of chords decrease.
        for j in 2..rs.len() {
            let s1 = (v[j - 1] - v[j - 2]) / (rs[j - 1] - rs[j - 2]);
            let s2 = (v[j] - v[j - 1]) / (rs[j] - rs[j - 1]);
            prop_assert!(s2 <= s1 * (1.0 + 1e-7));
        }
    }

    #[test]
    fn levy_integrals_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, d in 1usize..=2) {
        let m = LevyModel::new(d, RadialDensity::truncated_stable(d, 1.0, 1.0, 1.0, 2.0), 1e-2);
        let opts = QuadOptions::default();
        let f1 = |z: &[f64]| z.iter().map(|x| x * x).sum::<f64>();
        let f2 = |z: &[f64]| z[0].abs().powi(3) + 0.3 * z[z.len() - 1] * z[z.len() - 1];
        let i1 = nu0_integral(&m, f1, 0.01, 1.0, &opts).unwrap();
        let i2 = nu0_integral(&m, f2, 0.01, 1.0, &opts).unwrap();
        let i12 = nu0_integral(&m, |z| a * f1(z) + b * f2(z), 0.01, 1.0, &opts).unwrap();
        prop_assert!((i12 - a * i1 - b * i2).abs() <= 1e-8 * (a.abs() * i1 + b.abs() * i2 + 1.0));
    }

    #[test]
    fn gamma_decreases_in_time_and_weight(theta in 0.3f64..2.5, t in 0.3f64..1.5, c in 1.1f64..4.0) {
        let m = stable(1, 1.0);
        let g = WeightFunction::inverse_density();
        let base = gamma_rho_g(&m, &g, theta, t).unwrap();
        let later = gamma_rho_g(&m, &g, theta, 1.5 * t).unwrap();
        let heavier = gamma_rho_g(&m, &g.scaled(c), theta, t).unwrap();
        prop_assert!(base.is_finite());
        prop_assert!(later <= base * (1.0 + 1e-8));
        prop_assert!(heavier <= base * (1.0 + 1e-8));
    }

    #[test]
    fn harnack_bounds_grow_with_the_shift(p in 1.2f64..4.0, t in 0.2f64..2.0, h in 0.01f64..1.0) {
        let model = LevyModel::new(1, RadialDensity::stable(1, 1.0, 1.0 / std::f64::consts::PI), 1e-2);
        let base = BoundInputs {
            model,
            g: WeightFunction::inverse_density(),
            spec: FlowSpec::scalar(-0.5, 1.0).unwrap(),
            p,
            t,
            h_norm: 0.0,
            norms: None,
        };
        let at = |hn: f64| BoundInputs { h_norm: hn, ..base.clone() };
        prop_assert_eq!(harnack_bound_t41(&base).unwrap(), 1.0);
        prop_assert_eq!(logharnack_bound_tlh(&base).unwrap(), 0.0);
        let (b1, b2) = (harnack_bound_t41(&at(h)).unwrap(), harnack_bound_t41(&at(2.0 * h)).unwrap());
        prop_assert!(1.0 <= b1 && b1 <= b2);
        // The excess decays like |h|^{1/((p-1)∨1)}.
        let small = harnack_bound_t41(&at(1e-60)).unwrap();
        prop_assert!(small >= 1.0 && small - 1.0 < 1e-6);
        let (l1, l2) = (logharnack_bound_tlh(&at(h)).unwrap(), logharnack_bound_tlh(&at(2.0 * h)).unwrap());
        prop_assert!((l2 - 2.0 * l1).abs() <= 1e-12 * l2.abs());
    }
}

fn matrix(vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, vals)
}

proptest! {
    #[test]
    fn flows_compose(
        a in prop::collection::vec(-1.0f64..1.0, 2),
        b in prop::collection::vec(-0.5f64..0.5, 2),
        s in 0.0f64..2.0, u in 0.0f64..2.0, t in 0.0f64..2.0,
    ) {
        let mut w = [s, u, t];
        w.sort_by(f64::total_cmp);
        let [s, u, t] = w;
        let spec = FlowSpec::linear_in_time_diag(
            DVector::from_vec(a), DVector::from_vec(b), matrix(&[1.0, 0.0, 0.2, 0.7]), 2.0,
        ).unwrap();
        let direct = flow_eval(&spec, s, t).unwrap();
        let composed = flow_eval(&spec, u, t).unwrap() * flow_eval(&spec, s, u).unwrap();
        prop_assert!(op_norm(&(direct - composed)) < 1e-8);
    }

    #[test]
    fn constant_flows_compose(m in prop::collection::vec(-1.0f64..1.0, 4), s in 0.0f64..2.0, u in 0.0f64..2.0) {
        let (s, u) = if s <= u { (s, u) } else { (u, s) };
        let spec = FlowSpec::constant(matrix(&m), matrix(&[1.0, 0.3, 0.0, 0.8])).unwrap();
        let cache = FlowCache::new(&spec, 2.0).unwrap();
        let direct = flow_eval(&spec, s, 2.0).unwrap();
        let composed = flow_eval(&spec, u, 2.0).unwrap() * flow_eval(&spec, s, u).unwrap();
        prop_assert!(op_norm(&(&direct - composed)) < 1e-8);
        prop_assert!(op_norm(&(direct - cache.t_st(s))) < 1e-8);
        let n = op_norm(&cache.sigma_inv_t(s).unwrap());
        prop_assert!(n <= spec.lambda_bound * (spec.alpha_bound * s).exp() * (1.0 + 1e-6));
    }

    #[test]
    fn jump_paths_depend_only_on_the_seed(seed in any::<u64>(), index in 0u64..1000) {
        let m = stable(2, 1.5);
        let a = sample_jump_path(&m, 0.5, &mut sample_rng(seed, index)).unwrap();
        let b = sample_jump_path(&m, 0.5, &mut sample_rng(seed, index)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            prop_assert_eq!(a.time(i).to_bits(), b.time(i).to_bits());
            prop_assert_eq!(a.jump(i), b.jump(i));
        }
    }

    #[test]
    fn girsanov_weights_are_positive(seed in any::<u64>()) {
        let m = stable(1, 1.0);
        let dens = GirsanovDensity::from_weight(&m, &WeightFunction::inverse_density(), 1.0).unwrap();
        let s = girsanov_sample(&m, &dens, 1.0, &mut sample_rng(seed, 0)).unwrap();
        prop_assert!(s.weight > 0.0 && s.weight.is_finite());
        prop_assert!(s.tau >= 0.0 && s.tau <= 1.0);
    }

    #[test]
    fn minimal_constants_dominate_relative_entropy(seed in any::<u64>(), n in 2usize..=6, p in 1.05f64..6.0) {
        let pm = random_instance(&mut sample_rng(seed, 0), n);
        for x in 0..n {
            for y in 0..n {
                let kl = minimal_logharnack_constant(&pm, x, y);
                let c = log_minimal_harnack_constant(&pm, x, y, p);
                prop_assert!(c >= kl - 1e-12);
                // The constant is an L^q norm with q = 1/(p - 1), decreasing in p.
                prop_assert!(log_minimal_harnack_constant(&pm, x, y, p + 0.5) <= c + 1e-12);
                if x == y {
                    prop_assert!(c.abs() < 1e-12 && kl.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn harnack_holds_for_random_functions(seed in any::<u64>(), n in 2usize..=5, p in 1.1f64..4.0) {
        let mut rng = sample_rng(seed, 1);
        let pm = random_instance(&mut rng, n);
        let f = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, 1e-3..10.0f64));
        let pf = pm.apply(&f);
        let pfp = pm.apply(&f.map(|v| v.powf(p)));
        for x in 0..n {
            for y in 0..n {
                let lhs = p * pf[x].ln();
                let rhs = log_minimal_harnack_constant(&pm, x, y, p) + pfp[y].ln();
                prop_assert!(lhs <= rhs + 1e-10);
                let log_lhs = pm.apply(&f.map(f64::ln))[y];
                prop_assert!(log_lhs <= pf[x].ln() + minimal_logharnack_constant(&pm, y, x) + 1e-10);
            }
        }
    }

    #[test]
    fn kernel_bounds_hold_at_minimal_constants(seed in any::<u64>(), n in 2usize..=5, p in 1.2f64..4.0) {
        let pm = random_instance(&mut sample_rng(seed, 2), n);
        let power = check_kernel_bounds(&pm, &harnack_psi(&pm, p), PhiFunction::Power { p }).max_violation();
        prop_assert!(power <= 1e-9);
        prop_assert!(check_kernel_bounds(&pm, &logharnack_psi(&pm), PhiFunction::Exp).max_violation() <= 1e-9);
    }

    #[test]
    fn transport_is_symmetric_and_below_the_product_coupling(
        seed in any::<u64>(), n in 2usize..=5,
    ) {
        let mut rng = sample_rng(seed, 3);
        let mut draw = |k: usize| {
            let v: Vec<f64> = (0..k).map(|_| rand::Rng::random_range(&mut rng, 0.01..1.0f64)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let a = draw(n);
        let b = draw(n);
        let c = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3 + seed as usize % 5) % 11) as f64 / 10.0);
        let w = transport_cost(&a, &b, &c).unwrap();
        let w_rev = transport_cost(&b, &a, &c.transpose()).unwrap();
        prop_assert!((w - w_rev).abs() <= 1e-10);
        let product: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i] * b[j] * c[(i, j)]).sum();
        prop_assert!(w <= product + 1e-12);
        prop_assert!(w >= -1e-12);
    }
}

#[test]
fn monte_carlo_is_independent_of_worker_count() {
    let m = stable(1, 1.0);
    let sampler = RadialSampler::new(&m.rho0, 1, 1e-2).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            run_mc(20_000, 17, 2, |_, rng, out| {
                let r = sampler.sample_radius(rng);
                out[0] = r.min(10.0);
                out[1] = (r < 0.1) as u8 as f64;
            })
        })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mean.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.mean.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.stderr, b.stderr);
}
