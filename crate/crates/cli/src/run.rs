//! Executes a scenario and assembles the machine-readable report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use helmholtz_minimax::forward::CfieSystem;
use helmholtz_minimax::dtn::Radiation;
use helmholtz_minimax::geometry::{curve_grid, AnnulusSpec, ClosedCurveGrid};
use helmholtz_minimax::minimax_point::{point_estimate, solve_point_stochastic, solve_point_system, worst_case_cost_point, PointModel, PointSetup};
use helmholtz_minimax::minimax_subdomain::{
    estimate_value, solve_stochastic, solve_zp, worst_case_cost, DataModel, SubdomainFunctional, SubdomainModel, SubdomainObservation,
    SubdomainSetup,
};
use helmholtz_minimax::minimax_surface::{
    solve_surface_stochastic, solve_surface_system, surface_estimate, surface_worst_case_cost, SurfaceArc, SurfaceFunctional, SurfaceModel,
    SurfaceSetup,
};
use helmholtz_minimax::validation::{monte_carlo, MonteCarloSummary, TrialKind, TrialRecord, WorstCaseModel};
use helmholtz_minimax::{Complex64 as C, Error as CoreError, WaveNumber};
use serde::Serialize;

use crate::config::{Geometry, Mode, Regime, Scenario};

/// Command-line overrides applied on top of the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub grid: Option<f64>,
    /// Force a Monte Carlo run in the scenario's estimation regime.
    pub monte_carlo: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    /// `l̂(y)` as `[re, im]`.
    pub value: [f64; 2],
    /// `"config"` for measured data, `"nominal"` for noise-free synthetic
    /// data generated from the nominal right-hand sides.
    pub source: &'static str,
    /// `l(φ)` of the field that generated synthetic data.
    pub truth: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ForwardReport {
    pub targets: Vec<[f64; 2]>,
    pub values: Vec<[f64; 2]>,
    /// `max |∂_r u − iku|·r` on a far circle.
    pub radiation_residual: f64,
    pub radiation_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub sample_kind: &'static str,
    pub sq_error: f64,
    pub ratio_to_sigma2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloReport {
    pub regime: Regime,
    pub seed: u64,
    pub trials: usize,
    pub sigma_sq: f64,
    pub mean_sq_error: f64,
    pub mean_ratio: f64,
    pub max_ratio: Option<f64>,
    pub kind_mean_ratio: BTreeMap<&'static str, Option<f64>>,
    pub table: Vec<TrialRow>,
}

/// Everything a run produces. Fields are only ever added.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub regime: Option<Regime>,
    pub scenario: Scenario,
    pub sigma: Option<f64>,
    /// `σ²` as `[re, im]`; the imaginary part is a discretization residual.
    pub sigma_sq: Option<[f64; 2]>,
    pub estimate: Option<Estimate>,
    pub forward: Option<ForwardReport>,
    pub condition: BTreeMap<&'static str, f64>,
    pub diagnostics: BTreeMap<&'static str, f64>,
    /// Wall-clock seconds per phase.
    pub timing: BTreeMap<&'static str, f64>,
    pub monte_carlo: Option<MonteCarloReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-trial table, or `None` outside Monte Carlo runs. Floats carry 17
    /// significant digits so the file round-trips bit for bit.
    pub fn trials_csv(&self) -> Option<String> {
        let mc = self.monte_carlo.as_ref()?;
        let mut s = String::from("trial,sample_kind,sq_error,ratio_to_sigma2\n");
        for r in &mc.table {
            writeln!(s, "{},{},{:.16e},{:.16e}", r.trial, r.sample_kind, r.sq_error, r.ratio_to_sigma2).unwrap();
        }
        Some(s)
    }

    /// Writes `report.json` and, for Monte Carlo runs, `trials.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        if let Some(csv) = self.trials_csv() {
            std::fs::write(dir.join("trials.csv"), csv)?;
        }
        Ok(())
    }
}

fn pair(z: C) -> [f64; 2] {
    [z.re, z.im]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Reads and runs a scenario file.
pub fn run_file(path: &Path, ov: &Overrides) -> Result<Report> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::parse(&text).with_context(|| format!("in {}", path.display()))?;
    run(scenario, ov)
}

pub fn run(mut scenario: Scenario, ov: &Overrides) -> Result<Report> {
    if let Some(m) = ov.grid {
        scenario.refine(m)?;
    }
    if let Some(seed) = ov.seed {
        scenario.solver.seed = seed;
    }
    if let (Some(t), Some(mc)) = (ov.trials, scenario.monte_carlo.as_mut()) {
        mc.trials = t;
    }
    let mc_trials = if scenario.mode == Mode::MonteCarlo || ov.monte_carlo {
        Some(ov.trials.or(scenario.monte_carlo.as_ref().map(|m| m.trials)).unwrap_or(100))
    } else {
        None
    };
    if ov.monte_carlo && scenario.regime().is_none() {
        anyhow::bail!("monte-carlo needs an estimation scenario (subdomain, surface or point)");
    }

    let mut report = Report {
        mode: scenario.mode,
        regime: scenario.regime(),
        scenario: scenario.clone(),
        sigma: None,
        sigma_sq: None,
        estimate: None,
        forward: None,
        condition: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
        timing: BTreeMap::new(),
        monte_carlo: None,
    };
    let k = scenario.wavenumber.value()?;
    match scenario.regime() {
        None => run_forward(&scenario, k, &mut report)?,
        Some(Regime::Point) => run_point(&scenario, k, mc_trials, &mut report)?,
        Some(Regime::Surface) => run_surface(&scenario, k, mc_trials, &mut report)?,
        Some(Regime::Subdomain) => run_subdomain(&scenario, k, mc_trials, &mut report)?,
    }
    Ok(report)
}

fn grid(s: &Scenario) -> Result<ClosedCurveGrid> {
    let n = s.solver.n_gamma.max(8).div_ceil(2) * 2;
    Ok(curve_grid(&s.geometry.curve()?, n)?)
}

fn time<T>(report: &mut Report, phase: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    report.timing.insert(phase, t.elapsed().as_secs_f64());
    out
}

fn run_forward(s: &Scenario, k: WaveNumber, report: &mut Report) -> Result<()> {
    let fwd = s.forward.as_ref().expect("checked at parse time");
    let grid = grid(s)?;
    let sys = time(report, "assemble", || Ok(CfieSystem::new(&grid, k, s.solver.eta, Radiation::Outgoing)?))?;
    report.condition.insert("cfie", sys.condition());
    let g = grid.points.iter().map(|&p| fwd.h.eval(p)).collect::<Vec<_>>().into();
    let sol = time(report, "solve", || Ok(sys.solve(&g)?))?;
    let values = sol.eval(&fwd.targets)?;
    let center = grid.curve.center();
    let extent = grid.points.iter().map(|p| helmholtz_minimax::geometry::dist(*p, center)).fold(0.0, f64::max);
    let radius = 20.0 * extent.max(1.0 / k.value().norm());
    let radiation_residual = sol.radiation_residual(center, radius, 64)?;
    report.forward = Some(ForwardReport { targets: fwd.targets.clone(), values: values.into_iter().map(pair).collect(), radiation_residual, radiation_radius: radius });
    Ok(())
}

fn finish_mc(report: &mut Report, regime: Regime, seed: u64, model: &dyn WorstCaseModel, trials: usize) -> Result<()> {
    let recs: Vec<TrialRecord> = time(report, "monte_carlo", || Ok(monte_carlo(model, trials, seed)?))?;
    let summary = MonteCarloSummary::new(&recs, model.sigma_sq());
    let kind_mean_ratio = TrialKind::ALL.iter().zip(summary.kind_mean_ratio).map(|(k, v)| (k.name(), v)).collect();
    report.monte_carlo = Some(MonteCarloReport {
        regime,
        seed,
        trials,
        sigma_sq: summary.sigma_sq,
        mean_sq_error: summary.mean_sq_error,
        mean_ratio: summary.mean_ratio(),
        max_ratio: recs.iter().map(|r| r.ratio_to_sigma2).reduce(f64::max),
        kind_mean_ratio,
        table: recs
            .iter()
            .map(|r| TrialRow { trial: r.trial, sample_kind: r.kind.name(), sq_error: r.sq_error, ratio_to_sigma2: r.ratio_to_sigma2 })
            .collect(),
    });
    Ok(())
}

fn record_sigma(report: &mut Report, sigma: f64, sigma_sq: C) {
    report.sigma = Some(sigma);
    report.sigma_sq = Some(pair(sigma_sq));
    report.diagnostics.insert("im_sigma_sq_relative", sigma_sq.im.abs() / sigma_sq.re.abs().max(f64::MIN_POSITIVE));
}

fn run_point(s: &Scenario, k: WaveNumber, mc: Option<usize>, report: &mut Report) -> Result<()> {
    let grid = grid(s)?;
    let (q1, h0) = (s.uncertainty.q1(), s.uncertainty.h0());
    let o = &s.observation;
    let setup = time(report, "assemble", || {
        Ok(PointSetup::new(
            &grid,
            k,
            s.solver.eta,
            |p| q1.eval(p),
            |p| h0.eval(p),
            o.points.clone(),
            o.r.clone(),
            s.functional.points.clone(),
            s.functional.coefficients(),
        )?)
    })?;
    report.condition.insert("coupled_system", setup.system_condition());
    let sol = time(report, "solve", || Ok(solve_point_system(&setup)?))?;
    record_sigma(report, sol.sigma, sol.sigma_sq);
    let cost = worst_case_cost_point(&setup, &sol.u_hat)?;
    report.diagnostics.insert("sigma_sq_vs_cost_relative", rel(cost, sol.sigma_sq.re));

    let (y, source, truth) = match &o.data {
        Some(d) => (d.iter().map(|v| C::new(v[0], v[1])).collect(), "config", None),
        None => {
            let h: Vec<C> = grid.points.iter().map(|&p| h0.eval(p)).collect();
            let field = setup.simulate(&h)?;
            (setup.observe(&field), "nominal", Some(pair(setup.functional_value(&field))))
        }
    };
    let value = point_estimate(&sol, &y)?;
    let stoch = solve_point_stochastic(&setup, &y)?;
    report.diagnostics.insert("estimate_vs_stochastic_relative", (value - setup.functional_value(&stoch.phi_hat)).norm() / value.norm().max(sol.sigma));
    report.estimate = Some(Estimate { value: pair(value), source, truth });
    if let Some(trials) = mc {
        finish_mc(report, Regime::Point, s.solver.seed, &PointModel { setup: &setup, solution: &sol }, trials)?;
    }
    Ok(())
}

fn run_surface(s: &Scenario, k: WaveNumber, mc: Option<usize>, report: &mut Report) -> Result<()> {
    let grid = grid(s)?;
    let (q1, h0) = (s.uncertainty.q1(), s.uncertainty.h0());
    let mut arcs = Vec::new();
    for (i, a) in s.observation.arcs.iter().enumerate() {
        let [r1, r2] = a.r;
        let mut arc = SurfaceArc::new(a.arc.open_arc()?, s.solver.arc_nodes, move |_| r1, move |_| r2).with_context(|| format!("observation.arcs[{i}]"))?;
        for t in &a.terms {
            let (fa, fb) = (t.a.clone(), t.b.clone());
            arc = arc.with_term(t.r, t.j, move |x| fa.eval(x), move |x| fb.eval(x))?;
        }
        arcs.push(arc);
    }
    let f = &s.functional;
    let l0 = f.l0.clone().unwrap_or_else(|| crate::config::Field::constant(1.0, 0.0));
    let functional = SurfaceFunctional::new(f.region.as_ref().expect("checked at parse time").spec()?, move |p| l0.eval(p));
    let setup = time(report, "assemble", || Ok(SurfaceSetup::new(&grid, k, s.solver.eta, |p| q1.eval(p), |p| h0.eval(p), arcs, functional)?))?;
    report.condition.insert("coupled_system", setup.system_condition());
    let sol = time(report, "solve", || Ok(solve_surface_system(&setup)?))?;
    record_sigma(report, sol.sigma, sol.sigma_sq);
    let cost = surface_worst_case_cost(&setup, &sol.u_hat)?;
    report.diagnostics.insert("sigma_sq_vs_cost_relative", rel(cost, sol.sigma_sq.re));

    let h: Vec<C> = grid.points.iter().map(|&p| h0.eval(p)).collect();
    let field = setup.simulate(&h)?;
    let y = setup.observe(&field);
    let value = surface_estimate(&sol, &setup, &y)?;
    let stoch = solve_surface_stochastic(&setup, &y)?;
    report.diagnostics.insert("estimate_vs_stochastic_relative", (value - setup.functional_value(&stoch.phi_hat)).norm() / value.norm().max(sol.sigma));
    report.estimate = Some(Estimate { value: pair(value), source: "nominal", truth: Some(pair(setup.functional_value(&field))) });
    if let Some(trials) = mc {
        finish_mc(report, Regime::Surface, s.solver.seed, &SurfaceModel { setup: &setup, solution: &sol }, trials)?;
    }
    Ok(())
}

fn run_subdomain(s: &Scenario, k: WaveNumber, mc: Option<usize>, report: &mut Report) -> Result<()> {
    let a = match s.geometry {
        Geometry::Circle { radius, .. } => radius,
        _ => unreachable!("checked at parse time"),
    };
    let sv = &s.solver;
    let n_f = if sv.n_f > 0 { sv.n_f } else { AnnulusSpec::default_cutoff(k.value().norm(), sv.big_r, sv.n_theta) };
    let spec = AnnulusSpec::new(a, sv.big_r, sv.n_r, sv.n_theta, n_f)?;
    let u = &s.uncertainty;
    let (q1, q2, f0, g0) = (u.q1(), u.q2(), u.f0(), u.g0());
    let region = u.forcing_region.as_ref().expect("checked at parse time").spec()?;
    let data = DataModel::new(&spec, region, |p| q1.eval(p), |p| f0.eval(p), |t| q2.eval([a * t.cos(), a * t.sin()]), g0.on_circle(a))
        .context("uncertainty")?;
    let mut obs = Vec::new();
    for (i, o) in s.observation.regions.iter().enumerate() {
        let mut ob = SubdomainObservation::new(&spec, o.region.spec()?, |p| o.r.eval(p)).with_context(|| format!("observation.regions[{i}]"))?;
        for t in &o.terms {
            ob = ob.with_term(|p| t.a.eval(p), |p| t.b.eval(p));
        }
        obs.push(ob);
    }
    let f = &s.functional;
    let l0 = f.l0.clone().unwrap_or_else(|| crate::config::Field::constant(1.0, 0.0));
    let functional = SubdomainFunctional::new(&spec, f.region.as_ref().expect("checked at parse time").spec()?, |p| l0.eval(p))?;
    let setup = time(report, "assemble", || Ok(SubdomainSetup::new(spec.clone(), k, data, obs)?))?;
    if let Some(c) = setup.reduced_condition() {
        report.condition.insert("reduced_system", c);
    }
    let est = time(report, "solve", || Ok(solve_zp(&setup, &functional)?))?;
    record_sigma(report, est.sigma, est.sigma_sq);
    let cost = worst_case_cost(&setup, &functional, &est.u_hat)?;
    report.diagnostics.insert("sigma_sq_vs_cost_relative", rel(cost, est.sigma_sq.re));

    let field = setup.simulate(&setup.data.f0, &setup.data.g0)?;
    let y = setup.observe(&field);
    let value = estimate_value(&est, &setup, &y)?;
    let stoch = solve_stochastic(&setup, &y)?;
    report.diagnostics.insert("estimate_vs_stochastic_relative", (value - functional.eval(&stoch.phi_hat)).norm() / value.norm().max(est.sigma));
    report.estimate = Some(Estimate { value: pair(value), source: "nominal", truth: Some(pair(functional.eval(&field))) });
    if let Some(trials) = mc {
        let model = SubdomainModel { setup: &setup, functional: &functional, estimator: &est };
        finish_mc(report, Regime::Subdomain, s.solver.seed, &model, trials)?;
    }
    Ok(())
}

/// Process exit status for a failed run: 3 for numerical breakdowns, 2 for
/// everything attributable to the input (schema, geometry, parameters).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match core_error(err) {
        Some(CoreError::SingularSystem { .. } | CoreError::NearFieldError { .. } | CoreError::NegativeSigmaSquared(_)) => 3,
        _ => 2,
    }
}

/// The library error behind `err`, if any.
pub fn core_error(err: &anyhow::Error) -> Option<&CoreError> {
    err.chain().find_map(|e| e.downcast_ref::<CoreError>())
}
