//! Point-observation estimator: identities, optimality, consistency,
//! monotonicity, coupling coefficients and worst-case behaviour.

use helmholtz_minimax::geometry::{curve_grid, ClosedCurve};
use helmholtz_minimax::minimax_point::*;
use helmholtz_minimax::validation::{monte_carlo, MonteCarloSummary, TrialKind};
use helmholtz_minimax::{Complex64 as C, Point, WaveNumber};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Opts {
    curve: ClosedCurve,
    n: usize,
    k: f64,
    eta: f64,
    r_scale: f64,
    a_scale: f64,
    h0: f64,
    obs: Vec<Point>,
    r: Vec<f64>,
}

fn default_obs() -> Vec<Point> {
    (0..6).map(|i| {
        let t = 0.3 + i as f64 * 0.9;
        let rad = 2.0 + 0.1 * i as f64;
        [rad * t.cos(), rad * t.sin()]
    })
    .collect()
}

impl Default for Opts {
    fn default() -> Self {
        Opts {
            curve: ClosedCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap(),
            n: 96,
            k: 2.0,
            eta: 1.0,
            r_scale: 1.0,
            a_scale: 1.0,
            h0: 1.0,
            obs: default_obs(),
            r: vec![1.0, 2.0, 0.7, 1.5, 3.0, 1.2],
        }
    }
}

fn scenario(o: Opts) -> PointSetup {
    let g = curve_grid(&o.curve, o.n).unwrap();
    let h0 = o.h0;
    let r = o.r.iter().map(|r| r * o.r_scale).collect();
    PointSetup::new(
        &g,
        WaveNumber::new(o.k, 0.0).unwrap(),
        o.eta,
        |p| 1.0 + 0.3 * p[0] * p[0],
        move |p| C::new(p[1].cos(), 0.3 * p[0]) * h0,
        o.obs,
        r,
        vec![[0.6, -2.7], [-2.2, -1.0]],
        vec![C::new(1.0, 0.0) * o.a_scale, C::new(0.0, 0.5) * o.a_scale],
    )
    .unwrap()
}

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<C> {
    (0..n).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale).collect()
}

#[test]
fn zero_functional_gives_zero_solution() {
    let setup = scenario(Opts { a_scale: 0.0, ..Default::default() });
    let sol = solve_point_system(&setup).unwrap();
    assert_eq!(sol.sigma, 0.0);
    assert!(sol.u_hat.iter().chain(sol.p_at_obs.iter()).all(|v| v.norm() == 0.0));
    assert_eq!(sol.c_hat, C::new(0.0, 0.0));
}

#[test]
fn weights_are_scaled_point_values_of_p() {
    let setup = scenario(Opts::default());
    let sol = solve_point_system(&setup).unwrap();
    for ((u, p), r) in sol.u_hat.iter().zip(&sol.p_at_obs).zip(&setup.r) {
        assert!((u - p * (r * r)).norm() <= 1e-15 * u.norm());
    }
    // p(x′) from the unknowns agrees with evaluating p from its boundary data.
    let direct = sol.p.eval(&setup.obs).unwrap();
    for (a, b) in direct.iter().zip(&sol.p_at_obs) {
        assert!(rel(*a, *b) < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn sigma_squared_is_real_and_equals_cost_at_optimal_weights() {
    let setup = scenario(Opts::default());
    let sol = solve_point_system(&setup).unwrap();
    let s2 = sol.sigma_sq;
    assert!(s2.re > 0.0);
    assert!(s2.im.abs() < 1e-9 * s2.norm(), "Im σ² = {}", s2.im);
    let cost = worst_case_cost_point(&setup, &sol.u_hat).unwrap();
    assert!((cost - s2.re).abs() < 1e-6 * s2.re, "I(û) = {cost}, σ² = {}", s2.re);
}

#[test]
fn optimal_weights_minimize_the_cost() {
    let setup = scenario(Opts::default());
    let sol = solve_point_system(&setup).unwrap();
    let best = worst_case_cost_point(&setup, &sol.u_hat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..50 {
        let scale = 10f64.powi(-(i % 5));
        let d = random_vec(&mut rng, setup.n_obs(), scale);
        let u: Vec<C> = sol.u_hat.iter().zip(&d).map(|(a, b)| a + b).collect();
        let c = worst_case_cost_point(&setup, &u).unwrap();
        assert!(c >= best - 1e-10, "trial {i}: {c} < {best}");
    }
}

#[test]
fn zero_data_and_nominal_give_zero_estimate() {
    let setup = scenario(Opts { h0: 0.0, ..Default::default() });
    let sol = solve_point_system(&setup).unwrap();
    let y = vec![C::new(0.0, 0.0); setup.n_obs()];
    assert_eq!(point_estimate(&sol, &y).unwrap(), C::new(0.0, 0.0));
    let st = solve_point_stochastic(&setup, &y).unwrap();
    assert!(st.phi_hat.trace.iter().chain(st.phi_at_obs.iter()).all(|v| v.norm() == 0.0));
}

#[test]
fn estimate_is_affine_in_the_data() {
    let setup = scenario(Opts::default());
    let sol = solve_point_system(&setup).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = random_vec(&mut rng, setup.n_obs(), 1.0);
    let base = point_estimate(&sol, &y).unwrap();
    for k in 0..setup.n_obs() {
        let mut y2 = y.clone();
        y2[k] += C::new(1e-3, 0.0);
        let fd = (point_estimate(&sol, &y2).unwrap() - base) / 1e-3;
        assert!(rel(fd, sol.u_hat[k].conj()) < 1e-9);
    }
    assert!(point_estimate(&sol, &y[1..]).is_err());
}

#[test]
fn stochastic_form_reproduces_the_estimate() {
    let setup = scenario(Opts::default());
    let sol = solve_point_system(&setup).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let y = random_vec(&mut rng, setup.n_obs(), 1.0);
        let st = solve_point_stochastic(&setup, &y).unwrap();
        let est = point_estimate(&sol, &y).unwrap();
        let l_hat = setup.functional_value(&st.phi_hat);
        assert!(rel(l_hat, est) < 1e-6, "l(φ̂) = {l_hat}, estimate = {est}");
        let direct = st.phi_hat.eval(&setup.obs).unwrap();
        for (a, b) in direct.iter().zip(&st.phi_at_obs) {
            assert!(rel(*a, *b) < 1e-10);
        }
    }
    let st = solve_point_stochastic(&setup, &random_vec(&mut rng, setup.n_obs(), 1.0)).unwrap();
    let r: Vec<f64> = [5.0, 20.0, 80.0].iter().map(|r| st.phi_hat.radiation_residual([0.0, 0.0], *r, 32).unwrap()).collect();
    assert!(r[1] < 0.6 * r[0] && r[2] < 0.6 * r[1], "{r:?}");
}

#[test]
fn estimate_approaches_truth_as_noise_weights_grow() {
    let mut gaps = Vec::new();
    let mut truth = C::new(0.0, 0.0);
    // Four decades starting at r = 10, where the noise term dominates the gap.
    for e in 1..6 {
        let setup = scenario(Opts { r_scale: 10f64.powi(e), ..Default::default() });
        let sol = solve_point_system(&setup).unwrap();
        let phi = setup.simulate(&setup.h0).unwrap();
        truth = setup.functional_value(&phi);
        // Exact nominal data plus noise of fixed shape scaled by 1/r.
        let y: Vec<C> = setup.observe(&phi).iter().zip(&setup.r).enumerate().map(|(q, (v, r))| v + C::new((q as f64).sin(), 0.5) / *r).collect();
        gaps.push((point_estimate(&sol, &y).unwrap() - truth).norm());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "gaps {gaps:?}");
    assert!(gaps[4] < 1e-4 * truth.norm(), "final gap {} vs |l| {}", gaps[4], truth.norm());
}

#[test]
fn sigma_is_monotone_in_noise_weights_and_observation_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for cfg in 0..10 {
        let m = 3 + cfg % 4;
        let obs: Vec<Point> = (0..m)
            .map(|i| {
                let t = (i as f64 + rng.random_range(0.1..0.9)) * std::f64::consts::TAU / m as f64;
                let rad = rng.random_range(1.8..3.0);
                [rad * t.cos(), rad * t.sin()]
            })
            .collect();
        let r: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..3.0)).collect();
        let base = |scale: f64, obs: Vec<Point>, r: Vec<f64>| {
            solve_point_system(&scenario(Opts { n: 64, r_scale: scale, obs, r, ..Default::default() })).unwrap().sigma
        };
        let s = base(1.0, obs.clone(), r.clone());
        let tighter = base(1.7, obs.clone(), r.clone());
        assert!(tighter <= s * (1.0 + 1e-12), "config {cfg}: {tighter} > {s}");
        let drop = rng.random_range(0..m);
        let (mut o2, mut r2) = (obs.clone(), r.clone());
        o2.remove(drop);
        r2.remove(drop);
        let fewer = base(1.0, o2, r2);
        assert!(fewer >= s * (1.0 - 1e-12), "config {cfg}: {fewer} < {s}");
    }
}

#[test]
fn coupling_parameter_does_not_change_the_solution() {
    let a = solve_point_system(&scenario(Opts { n: 128, eta: 0.5, ..Default::default() })).unwrap();
    let b = solve_point_system(&scenario(Opts { n: 128, eta: 2.0, ..Default::default() })).unwrap();
    assert!((a.sigma - b.sigma).abs() < 1e-7 * a.sigma);
    for (x, y) in a.u_hat.iter().zip(&b.u_hat) {
        assert!((x - y).norm() < 1e-7 * a.u_hat.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
}

#[test]
fn coupling_removes_the_interior_resonance() {
    let j01 = 2.404_825_557_695_773;
    let circle = || ClosedCurve::circle([0.0, 0.0], 1.0).unwrap();
    let at = |eta: f64| scenario(Opts { curve: circle(), n: 64, k: j01, eta, ..Default::default() }).system_condition();
    let (c0, c1) = (at(0.0), at(1.0));
    assert!(c0 > 1e6, "η = 0 condition {c0:e}");
    assert!(c1 < 1e4, "η = 1 condition {c1:e}");
}

#[test]
fn sigma_converges_spectrally_in_the_boundary_grid() {
    let s: Vec<f64> = [32, 64, 128].iter().map(|&n| solve_point_system(&scenario(Opts { n, ..Default::default() })).unwrap().sigma).collect();
    let reference = solve_point_system(&scenario(Opts { n: 256, ..Default::default() })).unwrap().sigma;
    let e: Vec<f64> = s.iter().map(|v| (v - reference).abs() / reference).collect();
    assert!(e[2] < 1e-9, "errors {e:?}");
    assert!(e[1] < 1e-5, "errors {e:?}");
}

#[test]
fn monte_carlo_respects_the_guaranteed_error() {
    let setup = scenario(Opts { n: 64, ..Default::default() });
    let sol = solve_point_system(&setup).unwrap();
    let model = PointModel { setup: &setup, solution: &sol };
    let recs = monte_carlo(&model, 500, 23).unwrap();
    let s = MonteCarloSummary::new(&recs, sol.sigma * sol.sigma);
    assert!(s.mean_ratio() <= 1.05, "mean ratio {}", s.mean_ratio());
    let ext = s.kind_mean_ratio[2].unwrap();
    assert!((0.9..=1.05).contains(&ext), "extremal mean ratio {ext}");
    assert!(recs.iter().filter(|r| r.kind == TrialKind::Random).all(|r| r.ratio_to_sigma2 <= 1.0 + 1e-9));
}

#[test]
fn vanishing_uncertainty_drives_the_error_to_zero() {
    // Scaling q₁ and every r by s shrinks the admissible set by 1/s.
    let g = curve_grid(&ClosedCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap(), 64).unwrap();
    let mut worst = Vec::new();
    for s in [1.0, 1e2, 1e4] {
        let setup = PointSetup::new(
            &g,
            WaveNumber::new(2.0, 0.0).unwrap(),
            1.0,
            move |_| s,
            |p| C::new(p[1].cos(), 0.0),
            default_obs(),
            vec![s; 6],
            vec![[0.6, -2.7]],
            vec![C::new(1.0, 0.0)],
        )
        .unwrap();
        let sol = solve_point_system(&setup).unwrap();
        let model = PointModel { setup: &setup, solution: &sol };
        let recs = monte_carlo(&model, 30, 1).unwrap();
        worst.push(recs.iter().map(|r| r.sq_error).fold(0.0, f64::max));
    }
    assert!(worst[1] < 1e-3 * worst[0] && worst[2] < 1e-3 * worst[1], "{worst:?}");
}

#[test]
fn composed_coupling_matches_the_integral_form_up_to_one_constant() {
    let curves = [
        ClosedCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap(),
        ClosedCurve::kite([0.0, 0.0], 1.0).unwrap(),
        ClosedCurve::circle([0.1, -0.2], 0.9).unwrap(),
    ];
    for c in curves {
        let setup = scenario(Opts { curve: c, n: 128, ..Default::default() });
        let (ac, bc) = setup.composed_alpha_beta();
        let (ai, bi) = alpha_beta_2d(&setup).unwrap();
        let scale = ai.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (x, y) in ac.iter().zip(ai.iter()) {
            assert!((x - y * ALPHA_RATIO_2D).norm() < 1e-10 * scale, "{x} vs {}", y * ALPHA_RATIO_2D);
        }
        let bscale = bi.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (x, y) in bc.iter().zip(bi.iter()) {
            assert!((x - y * ALPHA_RATIO_2D).norm() < 1e-10 * bscale);
        }
    }
}

#[test]
fn coupling_coefficients_have_conjugate_symmetry_in_2d() {
    let setup = scenario(Opts::default());
    let (a, _) = alpha_beta_2d(&setup).unwrap();
    let r = &setup.r;
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for l in 0..r.len() {
        for s in 0..r.len() {
            let lhs = a[(s, l)] * r[s] * r[s];
            let rhs = a[(l, s)].conj() * r[l] * r[l];
            assert!((lhs - rhs).norm() < 1e-12 * scale * 10.0, "({s},{l})");
        }
    }
}

#[test]
fn coupling_vanishes_without_boundary_uncertainty() {
    let rule = SphereRule::new([0.0; 3], 1.0, 24, 48).unwrap();
    let obs = [[2.0, 0.0, 0.0], [0.0, 1.5, 0.5]];
    let (a, b) = alpha_beta_sphere(&rule, WaveNumber::new(2.0, 0.0).unwrap(), |_| 1e150, &obs, &[1.0, 2.0], &[[0.0, 0.0, -2.0]], &[C::new(1.0, 0.0)]).unwrap();
    assert!(a.iter().chain(b.iter()).all(|v| v.norm() < 1e-290));
}

#[test]
fn sphere_diagonal_matches_the_closed_form() {
    // For real k, |e^{ikr}/r|² = 1/r² and ∫_{|y|=R} |x − y|⁻² = (2πR/d) ln((d+R)/(d−R)).
    let (big_r, d, w) = (1.0, 1.8, 1.3);
    let rule = SphereRule::new([0.0; 3], big_r, 64, 96).unwrap();
    let (a, _) = alpha_beta_sphere(&rule, WaveNumber::new(3.0, 0.0).unwrap(), |_| 1.0, &[[0.0, 0.0, d]], &[w], &[], &[]).unwrap();
    let exact = w * w / (2.0 * std::f64::consts::PI) * (2.0 * std::f64::consts::PI * big_r / d) * ((d + big_r) / (d - big_r)).ln();
    assert!((a[(0, 0)].re - exact).abs() < 1e-8 * exact && a[(0, 0)].im.abs() < 1e-8 * exact, "{} vs {exact}", a[(0, 0)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sphere_coefficients_have_conjugate_symmetry(
        k in 0.5f64..4.0,
        pts in prop::collection::vec((1.3f64..3.0, 0.1f64..3.0, 0.0f64..6.2), 2..5),
        w in prop::collection::vec(0.3f64..3.0, 5),
    ) {
        let rule = SphereRule::new([0.0; 3], 1.0, 16, 32).unwrap();
        let obs: Vec<[f64; 3]> = pts.iter().map(|(rad, th, ph)| [rad * th.sin() * ph.cos(), rad * th.sin() * ph.sin(), rad * th.cos()]).collect();
        let r = &w[..obs.len()];
        let (a, _) = alpha_beta_sphere(&rule, WaveNumber::new(k, 0.0).unwrap(), |y| 1.0 + 0.2 * y[2], &obs, r, &[], &[]).unwrap();
        let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for l in 0..r.len() {
            for s in 0..r.len() {
                let lhs = a[(s, l)] * r[s] * r[s];
                let rhs = a[(l, s)].conj() * r[l] * r[l];
                prop_assert!((lhs - rhs).norm() <= 1e-12 * scale * 10.0);
            }
        }
    }
}

#[test]
fn separation_violations_are_reported() {
    let g = curve_grid(&ClosedCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap(), 32).unwrap();
    let e = PointSetup::new(
        &g,
        WaveNumber::new(2.0, 0.0).unwrap(),
        1.0,
        |_| 1.0,
        |_| C::new(0.0, 0.0),
        vec![[1.0005, 0.0]],
        vec![1.0],
        vec![[0.0, -2.0]],
        vec![C::new(1.0, 0.0)],
    )
    .unwrap_err();
    assert_eq!(e.name(), "SeparationViolation");
}

#[test]
fn sphere_coefficients_relate_to_composed_potentials_by_a_fixed_constant() {
    use helmholtz_minimax::potentials::fundamental;
    let k = WaveNumber::new(1.7, 0.0).unwrap();
    let rule = SphereRule::new([0.0; 3], 1.0, 32, 64).unwrap();
    let q1 = |y: [f64; 3]| 1.0 + 0.3 * y[0] * y[0];
    let obs = [[1.8, 0.2, 0.0], [-0.3, 2.2, 0.9], [0.0, 0.4, -1.6]];
    let r = [1.0, 2.5, 0.8];
    let (a, _) = alpha_beta_sphere(&rule, k, q1, &obs, &r, &[], &[]).unwrap();
    for (s, xs) in obs.iter().enumerate() {
        for (l, xl) in obs.iter().enumerate() {
            let composed: C = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(y, w)| fundamental(3, k, xs, y).unwrap() * fundamental(3, k.adjoint(), y, xl).unwrap() * (w / q1(*y).powi(2)))
                .sum::<C>()
                * r[l]
                * r[l];
            assert!((composed - a[(s, l)] * ALPHA_RATIO_3D).norm() < 1e-12 * composed.norm(), "({s},{l})");
        }
    }
}
