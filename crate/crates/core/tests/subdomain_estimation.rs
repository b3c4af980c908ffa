//! Subdomain-observation estimator: cross-path identities, optimality,
//! worst-case validation, consistency, and grid/R behaviour.

use helmholtz_minimax::geometry::{AnnulusSpec, RegionSpec};
use helmholtz_minimax::minimax_subdomain::{
    estimate_rhs, estimate_value, random_weights, solve_rhs, solve_stochastic, solve_zp, worst_case_cost, DataModel, RhsFunctional,
    SubdomainFunctional, SubdomainModel, SubdomainObservation, SubdomainSetup,
};
use helmholtz_minimax::validation::{monte_carlo, MonteCarloSummary};
use helmholtz_minimax::{Complex64 as C, Point, WaveNumber};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sector edges sit on grid lines for every `n_θ` divisible by 16.
const E: f64 = std::f64::consts::PI / 8.0;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Two observation regions (rank-2 and rank-1 kernels), smooth weights and
/// nonzero nominal data, on a grid with `h = (R − a)/n_r`.
fn scenario(big_r: f64, n_r: usize, n_theta: usize, noise: f64, observations: bool) -> (SubdomainSetup, SubdomainFunctional) {
    let k = WaveNumber::new(2.0, 0.0).unwrap();
    let spec = AnnulusSpec::new(1.0, big_r, n_r, n_theta, AnnulusSpec::default_cutoff(2.0, big_r, n_theta)).unwrap();
    let data = DataModel::new(
        &spec,
        RegionSpec::sector(1.5, 2.5, E, 4.0 * E, 8).unwrap(),
        |p: Point| 1.0 + 0.2 * p[0],
        |p: Point| c(p[1], 0.5),
        |t| 2.0 + t.cos(),
        |t| c((2.0 * t).sin(), 0.3),
    )
    .unwrap();
    let mut obs = Vec::new();
    if observations {
        obs.push(
            SubdomainObservation::new(&spec, RegionSpec::sector(1.25, 2.25, 5.0 * E, 8.0 * E, 8).unwrap(), |p: Point| noise * (1.0 + 0.1 * p[1]))
                .unwrap()
                .with_term(|_| c(1.0, 0.0), |p: Point| c(p[0].cos(), 0.0))
                .with_term(|p: Point| c(p[1], 0.0), |p: Point| c(0.0, p[0] * p[1])),
        );
        obs.push(
            SubdomainObservation::new(&spec, RegionSpec::sector(1.75, 2.75, -5.0 * E, -E, 8).unwrap(), |_| noise)
                .unwrap()
                .with_term(|p: Point| c(1.0, p[0]), |p: Point| c((p[0] + p[1]).sin(), 0.2)),
        );
    }
    let setup = SubdomainSetup::new(spec.clone(), k, data, obs).unwrap();
    let l = SubdomainFunctional::new(&spec, RegionSpec::sector(1.5, 2.5, 9.0 * E, 12.0 * E, 8).unwrap(), |p: Point| c(1.0, 0.3 * p[0])).unwrap();
    (setup, l)
}

fn random_data(setup: &SubdomainSetup, rng: &mut ChaCha8Rng) -> Vec<Vec<C>> {
    setup.observations.iter().map(|o| (0..o.mask.len()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).collect()
}

#[test]
fn without_observations_sigma_is_the_data_cost_of_z() {
    let (setup, l) = scenario(3.0, 32, 64, 1.0, false);
    let e = solve_zp(&setup, &l).unwrap();
    assert!(e.sigma > 0.0);
    let cost = worst_case_cost(&setup, &l, &[]).unwrap();
    let direct = setup.data_norm_sq(&e.z.values, &e.z.values[..setup.spec.n_theta]);
    let s2 = e.sigma_sq.re;
    assert!((cost - s2).abs() < 1e-8 * s2, "{cost} vs {s2}");
    assert!((direct - s2).abs() < 1e-8 * s2);
}

#[test]
fn sigma_squared_equals_worst_case_cost_and_is_real() {
    let (setup, l) = scenario(3.0, 32, 64, 1.0, true);
    let e = solve_zp(&setup, &l).unwrap();
    let s2 = e.sigma_sq.re;
    let cost = worst_case_cost(&setup, &l, &e.u_hat).unwrap();
    println!("σ² = {s2:.12e}, I(û) = {cost:.12e}, Im σ² = {:.3e}", e.sigma_sq.im);
    assert!((cost - s2).abs() < 1e-8 * s2);
    assert!(e.sigma_sq.im.abs() < 1e-8 * s2);
    // Observations can only help.
    let (bare, _) = scenario(3.0, 32, 64, 1.0, false);
    assert!(s2 < solve_zp(&bare, &l).unwrap().sigma_sq.re);
}

#[test]
fn optimal_weights_minimize_the_cost() {
    let (setup, l) = scenario(3.0, 32, 64, 1.0, true);
    let e = solve_zp(&setup, &l).unwrap();
    let best = worst_case_cost(&setup, &l, &e.u_hat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for t in 0..50 {
        let scale = 10f64.powf(-(t % 5) as f64);
        let d = random_weights(&setup, &mut rng, scale);
        let u: Vec<Vec<C>> = e.u_hat.iter().zip(&d).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let i = worst_case_cost(&setup, &l, &u).unwrap();
        assert!(i >= best - 1e-10, "trial {t}: {i} < {best}");
    }
}

#[test]
fn stochastic_solution_reproduces_the_estimate() {
    let (setup, l) = scenario(3.0, 32, 64, 1.0, true);
    let e = solve_zp(&setup, &l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let y = random_data(&setup, &mut rng);
        let est = estimate_value(&e, &setup, &y).unwrap();
        let s = solve_stochastic(&setup, &y).unwrap();
        let lp = l.eval(&s.phi_hat);
        assert!((est - lp).norm() < 1e-8 * est.norm().max(1e-3), "{est} vs {lp}");
        // Linearity: doubling y doubles the weighted sum; ĉ is untouched.
        let y2: Vec<Vec<C>> = y.iter().map(|v| v.iter().map(|x| x * 2.0).collect()).collect();
        let est2 = estimate_value(&e, &setup, &y2).unwrap();
        assert!(((est2 - e.c_hat) - (est - e.c_hat) * 2.0).norm() < 1e-12 * est.norm());
    }
}

#[test]
fn zero_data_gives_zero_estimates() {
    let k = WaveNumber::new(2.0, 0.0).unwrap();
    let spec = AnnulusSpec::new(1.0, 3.0, 16, 32, 15).unwrap();
    let data = DataModel::new(&spec, RegionSpec::sector(1.5, 2.5, 0.25, 1.5, 4).unwrap(), |_| 1.0, |_| c(0.0, 0.0), |_| 1.0, |_| c(0.0, 0.0))
        .unwrap();
    let obs = SubdomainObservation::new(&spec, RegionSpec::sector(1.25, 2.25, 2.0, 3.0, 4).unwrap(), |_| 1.0)
        .unwrap()
        .with_term(|_| c(1.0, 0.0), |_| c(1.0, 0.0));
    let setup = SubdomainSetup::new(spec.clone(), k, data, vec![obs]).unwrap();
    let l = SubdomainFunctional::new(&spec, RegionSpec::sector(1.5, 2.5, 3.5, 4.5, 4).unwrap(), |_| c(1.0, 0.0)).unwrap();
    let e = solve_zp(&setup, &l).unwrap();
    let y = vec![vec![c(0.0, 0.0); setup.observations[0].mask.len()]];
    assert_eq!(estimate_value(&e, &setup, &y).unwrap(), c(0.0, 0.0));
    let s = solve_stochastic(&setup, &y).unwrap();
    assert!(s.phi_hat.values.iter().chain(&s.p_hat.values).all(|v| v.norm() == 0.0));
    let r = RhsFunctional::new(&setup, |_| c(0.0, 0.0), |_| c(0.0, 0.0));
    assert_eq!(estimate_rhs(&setup, &r, &y).unwrap(), (c(0.0, 0.0), 0.0));
    assert!(estimate_value(&e, &setup, &[]).is_err());
}

#[test]
fn data_functional_estimate_matches_the_stochastic_form() {
    let (setup, _) = scenario(3.0, 32, 64, 1.0, true);
    let l = RhsFunctional::new(&setup, |p: Point| c(p[0], 1.0), |t| c(t.sin(), 0.0));
    let est = solve_rhs(&setup, &l).unwrap();
    assert!(est.sigma > 0.0);
    assert!(est.sigma_sq.im.abs() < 1e-10 * est.sigma_sq.norm());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = &setup.data;
    for _ in 0..5 {
        let y = random_data(&setup, &mut rng);
        let (value, sigma) = estimate_rhs(&setup, &l, &y).unwrap();
        assert_eq!(sigma, est.sigma);
        let s = solve_stochastic(&setup, &y).unwrap();
        let p = &s.p_hat.values;
        let f_hat: Vec<C> = d.mask.gather(p).iter().zip(&d.q1_sq).zip(&d.f0).map(|((v, q), f)| v / *q + f).collect();
        let g_hat: Vec<C> = p[..setup.spec.n_theta].iter().zip(&d.q2_sq).zip(&d.g0).map(|((v, q), g)| v / *q + g).collect();
        let other = l.eval(&setup, &f_hat, &g_hat);
        assert!((value - other).norm() < 1e-8 * value.norm(), "{value} vs {other}");
    }
}

#[test]
fn monte_carlo_stays_below_sigma_squared() {
    let (setup, l) = scenario(3.0, 32, 64, 1.0, true);
    let e = solve_zp(&setup, &l).unwrap();
    let model = SubdomainModel { setup: &setup, functional: &l, estimator: &e };
    let rec = monte_carlo(&model, 200, 99).unwrap();
    let s = MonteCarloSummary::new(&rec, e.sigma * e.sigma);
    println!("mean ratio {:.4}, per kind {:?}", s.mean_ratio(), s.kind_mean_ratio);
    assert!(s.mean_ratio() <= 1.05);
    assert!(s.kind_mean_ratio[2].unwrap() >= 0.9);
}

#[test]
fn estimate_is_consistent_as_noise_vanishes() {
    let mut gaps = Vec::new();
    let mut truth = c(0.0, 0.0);
    for r in [1.0, 10.0, 100.0, 1000.0, 10000.0] {
        let (setup, l) = scenario(3.0, 24, 48, r, true);
        let d = &setup.data;
        let phi = setup.simulate(&d.f0, &d.g0).unwrap();
        truth = l.eval(&phi);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = random_data(&setup, &mut rng);
        let y: Vec<Vec<C>> = setup.observe(&phi).iter().zip(&shape).map(|(a, s)| a.iter().zip(s).map(|(x, n)| x + n / r).collect()).collect();
        let e = solve_zp(&setup, &l).unwrap();
        gaps.push((estimate_value(&e, &setup, &y).unwrap() - truth).norm());
    }
    println!("gaps {gaps:?}, |l| = {}", truth.norm());
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    assert!(*gaps.last().unwrap() < 1e-4 * truth.norm());
}

#[test]
fn sigma_converges_at_second_order() {
    let s: Vec<f64> = [(16, 32), (32, 64), (64, 128), (128, 256)]
        .iter()
        .map(|(nr, nt)| {
            let (setup, l) = scenario(3.0, *nr, *nt, 1.0, true);
            solve_zp(&setup, &l).unwrap().sigma
        })
        .collect();
    let ratios: Vec<f64> = s.windows(3).map(|w| (w[0] - w[1]) / (w[1] - w[2])).collect();
    println!("σ = {s:?}, difference ratios {ratios:?}");
    assert!((3.0..=5.5).contains(ratios.last().unwrap()));
}

#[test]
fn sigma_does_not_depend_on_the_truncation_radius() {
    let (a, la) = scenario(3.0, 40, 96, 1.0, true);
    let (b, lb) = scenario(4.5, 70, 96, 1.0, true);
    let sa = solve_zp(&a, &la).unwrap().sigma;
    let sb = solve_zp(&b, &lb).unwrap().sigma;
    println!("σ(R) = {sa:.8}, σ(1.5R) = {sb:.8}");
    assert!((sa - sb).abs() < 0.01 * sa);
}
