use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use nsvb_core::dictionary::{enumerate_terms, expand, term_count, NarxConfig, Scaling, Standardizer};
use nsvb_core::numerics::{digamma, log_gamma, solve_dare, spd_solve};
use nsvb_core::nsvb::{AlphaMode, Posterior};
use nsvb_core::predict::{predict_means, rollout_mean, NarxModel, NarxState, PredictiveDist};
use proptest::prelude::*;

fn config(n_a: usize, n_b: usize, degree: u32) -> NarxConfig {
    NarxConfig { n_a, n_b, n_u: 1, n_y: 1, degree, include_bias: true }
}

proptest! {
    #[test]
    fn digamma_recurrence(x in 0.01f64..50.0) {
        let lhs = digamma(x + 1.0).unwrap();
        let rhs = digamma(x).unwrap() + 1.0 / x;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn log_gamma_recurrence(x in 0.01f64..50.0) {
        let lhs = log_gamma(x + 1.0).unwrap();
        let rhs = log_gamma(x).unwrap() + x.ln();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn spd_solve_round_trip(entries in prop::collection::vec(-2.0f64..2.0, 16), rhs in prop::collection::vec(-5.0f64..5.0, 4)) {
        let l = DMatrix::from_column_slice(4, 4, &entries);
        let m = &l * l.transpose() + DMatrix::identity(4, 4);
        let b = DVector::from_column_slice(&rhs);
        let sol = spd_solve(&m, &b).unwrap();
        prop_assert!((&m * &sol.x - &b).norm() < 1e-9 * b.norm().max(1.0));
        prop_assert!((sol.log_det - m.determinant().ln()).abs() < 1e-9);
    }

    #[test]
    fn scalar_dare_matches_quadratic_root(a in -2.0f64..2.0, b in 0.2f64..3.0, q in 0.1f64..10.0, r in 0.1f64..10.0) {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let sol = solve_dare(&m(a), &m(b), &m(q), &m(r)).unwrap();
        // b² p² + (r − a² r − q b²) p − q r = 0
        let (qa, qb, qc) = (b * b, r - a * a * r - q * b * b, -q * r);
        let p = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        prop_assert!((sol.p[(0, 0)] - p).abs() < 1e-7 * p.max(1.0));
        prop_assert!(sol.spectral_radius < 1.0);
    }

    #[test]
    fn expansion_is_multiplicative(z in prop::collection::vec(-3.0f64..3.0, 3), w in prop::collection::vec(-3.0f64..3.0, 3)) {
        let cfg = config(1, 0, 3);
        let terms = enumerate_terms(&cfg).unwrap();
        let zw: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a * b).collect();
        let (fz, fw, fzw) = (expand(&z, &terms).unwrap(), expand(&w, &terms).unwrap(), expand(&zw, &terms).unwrap());
        for i in 0..terms.len() {
            prop_assert!((fzw[i] - fz[i] * fw[i]).abs() < 1e-9 * (1.0 + fzw[i].abs()));
        }
    }

    #[test]
    fn standardized_regressors_ignore_affine_units(gain in 0.1f64..100.0, shift in -500.0f64..500.0, seed in 0u64..1000) {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![((i as u64 * 7919 + seed) % 97) as f64 / 10.0, (i % 5) as f64]).collect();
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| gain * v + shift).collect()).collect();
        let a = Standardizer::fit_with(&rows, Scaling::Affine).unwrap();
        let b = Standardizer::fit_with(&moved, Scaling::Affine).unwrap();
        for (r, m) in rows.iter().zip(&moved) {
            for (x, y) in a.apply(r).iter().zip(b.apply(m)) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn student_t_density_integrates_to_one(mean in -5.0f64..5.0, precision in 0.1f64..10.0, dof in 2.5f64..60.0) {
        let d = PredictiveDist { mean, precision, dof };
        let sd = (1.0 / precision).sqrt();
        // y = mean + sd·tan θ maps the real line onto (−π/2, π/2)
        let n = 20_000;
        let h = std::f64::consts::PI / n as f64;
        let f = |theta: f64| {
            let c = theta.cos();
            if c <= 0.0 { 0.0 } else { d.pdf(mean + sd * theta.tan()) * sd / (c * c) }
        };
        let total: f64 = (0..=n).map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(-std::f64::consts::FRAC_PI_2 + i as f64 * h)
        }).sum::<f64>() * h / 3.0;
        prop_assert!((total - 1.0).abs() < 1e-6, "integral {}", total);
    }

    #[test]
    fn rollout_equals_repeated_one_step(w in prop::collection::vec(-0.15f64..0.15, 15), plan in prop::collection::vec(-1.0f64..1.0, 8)) {
        let cfg = config(1, 1, 2);
        let terms = enumerate_terms(&cfg).unwrap();
        let model = NarxModel::from_weights(cfg, terms, &w, 1.0).unwrap();
        let models = [model];
        let plan: Vec<Vec<f64>> = plan.iter().map(|u| vec![*u]).collect();
        let start = NarxState::constant(1, 1, &[0.3], &[0.1]);
        let roll = rollout_mean(&models, &start, &plan, plan.len()).unwrap();
        let mut state = start;
        for (j, u) in plan.iter().enumerate() {
            let y = predict_means(&models, &state, u).unwrap();
            prop_assert_eq!(&y, &roll.outputs[j]);
            state = state.shift(&y, u);
        }
        prop_assert_eq!(&state, roll.states.last().unwrap());
    }
}

#[test]
fn enumeration_matches_closed_form_count() {
    for n_a in 0..3 {
        for n_b in 0..3 {
            for degree in 1..4 {
                let cfg = config(n_a, n_b, degree);
                assert_eq!(enumerate_terms(&cfg).unwrap().len(), term_count(cfg.n_z(), degree, true));
            }
        }
    }
}

#[test]
fn posterior_moments_follow_gamma_shapes() {
    let p = Posterior {
        mu_omega: DVector::from_vec(vec![1.0]),
        sigma_omega: DMatrix::identity(1, 1),
        a: DVector::from_vec(vec![3.0]),
        b: DVector::from_vec(vec![6.0]),
        c: 4.0,
        d: 2.0,
        alpha_mode: AlphaMode::PerCoefficient,
    };
    assert_relative_eq!(p.e_alpha()[0], 0.5);
    assert_relative_eq!(p.e_beta(), 2.0);
}

#[test]
fn one_step_means_do_not_depend_on_standardization() {
    use nsvb_core::dictionary::build_regressors;
    use nsvb_core::nsvb::{AlphaSpec, FitOptions, Hyperpriors};
    use nsvb_core::predict::ModelFitOptions;
    use nsvb_core::synthetic::SparseNarx;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let rec = SparseNarx { noise_std: 0.05, ..SparseNarx::default() }.simulate(400, &mut rng);
    let mut cfg = SparseNarx::config();
    cfg.degree = 1;
    let y: Vec<f64> = rec.y.iter().map(|v| 20.0 + 3.0 * v).collect();
    let data = build_regressors(&[y], &[rec.u], &cfg, 0).unwrap();
    let fit = |scaling| {
        let opts = ModelFitOptions {
            fit: FitOptions { alpha: AlphaSpec::Fixed(vec![1e-10; 5]), ..FitOptions::default() },
            scaling,
            ..ModelFitOptions::default()
        };
        NarxModel::fit(&data, cfg, &Hyperpriors::default(), &opts).unwrap().0
    };
    let (scaled, raw) = (fit(Scaling::Affine), fit(Scaling::None));
    for z in data.regressors.iter().step_by(37) {
        let (a, b) = (scaled.mean(z).unwrap(), raw.mean(z).unwrap());
        assert!((a - b).abs() < 1e-6 * b.abs(), "{a} vs {b}");
    }
}
