//! Minimax estimation from observations distributed over subdomains.
//!
//! The state solves `−(Δ + k²)φ = f` outside a disk of radius `a`,
//! `∂φ/∂ν = g` on its boundary, outgoing at infinity; the model is truncated
//! to the annulus `a < r < R` with the DtN map, discretized by
//! [`AnnulusOperator`]. Observed are `y_k = ∫_{Ω_k} g_k(·, y) φ(y) dy + ξ_k`
//! with separable kernels `g_k(x, y) = Σ_r a_r(x) b_r(y)`.
//!
//! The optimal weights come from the coupled pair
//!
//! * `z`: incoming problem, volume source `χ_{ω₀} l₀ − Σ_k χ_{Ω_k} ∫ ḡ_k(η, ·) û_k(η) dη`,
//!   homogeneous Neumann data;
//! * `p`: outgoing problem, source `χ_{Ω₀} q₁⁻² z`, Neumann data `q₂⁻² z`;
//!
//! with `û_k = r_k² ∫ g_k(·, y) p(y) dy`, `ĉ = ∫ z̄ f₀ + ∫_Γ z̄ g₀` and
//! `σ² = ∫ l̄₀ p`. All integrals use the lumped finite-volume weights, in
//! which the discrete model reproduces the identities `σ² = I(û)` and
//! `l̂ = l(φ̂)` to rounding.
//!
//! Because every kernel is separable, `û` lives in the span of the `a_r` and
//! the coupled system collapses onto the vector `β_r = ∫ b_r p` — one small
//! dense system whose matrix is assembled from two annulus solves per kernel
//! term.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dtn::Radiation;
use crate::error::{check_len, Error, Result};
use crate::forward::{annulus_mass, AnnulusField, AnnulusOperator};
use crate::geometry::{AnnulusSpec, RegionSpec};
use crate::linalg::DenseSolver;
use crate::validation::{gaussian, gaussian_vec, rademacher, unit_phase, TrialKind, WorstCaseModel};
use crate::{Point, WaveNumber};

/// Sub-samples per direction used to measure how much of a control volume a
/// region covers.
const COVERAGE_SAMPLES: usize = 8;

/// The grid nodes of a region with integration weights
/// `Δθ w_i r_i × (covered fraction of the control volume)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub nodes: Vec<usize>,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl RegionMask {
    /// Fails with `RegionViolation` unless the region's closure lies in the
    /// open annulus and covers at least one node.
    pub fn new(spec: &AnnulusSpec, region: &RegionSpec) -> Result<Self> {
        let samples = region.boundary_samples(512);
        let (rmin, rmax) = samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            let r = p[0].hypot(p[1]);
            (lo.min(r), hi.max(r))
        });
        if region.contains([0.0, 0.0]) || rmin <= spec.a || rmax >= spec.big_r {
            return Err(Error::RegionViolation(format!(
                "region {:?} spans radii [{rmin:.4}, {rmax:.4}], outside the open annulus ({}, {})",
                region.shape, spec.a, spec.big_r
            )));
        }
        let mass = annulus_mass(spec);
        let (h, dt) = (spec.h(), spec.dtheta());
        let s = COVERAGE_SAMPLES;
        let mut mask = RegionMask { nodes: Vec::new(), points: Vec::new(), weights: Vec::new() };
        for i in 0..spec.n_rings() {
            let r = spec.radius(i);
            if r + h < rmin || r - h > rmax {
                continue;
            }
            let lo = (r - h / 2.0).max(spec.a);
            let hi = (r + h / 2.0).min(spec.big_r);
            for j in 0..spec.n_theta {
                let th = spec.theta(j);
                let (mut inside, mut total) = (0.0, 0.0);
                for a in 0..s {
                    let rs = lo + (hi - lo) * (a as f64 + 0.5) / s as f64;
                    for b in 0..s {
                        let ts = th + dt * ((b as f64 + 0.5) / s as f64 - 0.5);
                        total += rs;
                        if region.contains([rs * ts.cos(), rs * ts.sin()]) {
                            inside += rs;
                        }
                    }
                }
                if inside > 0.0 {
                    let idx = spec.index(i, j);
                    mask.nodes.push(idx);
                    mask.points.push(spec.node(i, j));
                    mask.weights.push(mass[idx] * inside / total);
                }
            }
        }
        if mask.nodes.is_empty() {
            return Err(Error::RegionViolation(format!("region {:?} contains no grid nodes", region.shape)));
        }
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sample<T>(&self, f: impl Fn(Point) -> T) -> Vec<T> {
        self.points.iter().map(|p| f(*p)).collect()
    }

    /// `Σ w v`.
    pub fn integrate(&self, values: &[C]) -> C {
        self.weights.iter().zip(values).map(|(w, v)| v * *w).sum()
    }

    /// `Σ w conj(u) v`.
    pub fn inner(&self, u: &[C], v: &[C]) -> C {
        self.weights.iter().zip(u.iter().zip(v)).map(|(w, (a, b))| a.conj() * b * *w).sum()
    }

    /// Field values at the mask nodes.
    pub fn gather(&self, field: &[C]) -> Vec<C> {
        self.nodes.iter().map(|&i| field[i]).collect()
    }

    /// `load[node] += w·v`: the finite-volume load of a source supported here.
    pub fn scatter_load(&self, load: &mut [C], values: &[C]) {
        for ((&i, w), v) in self.nodes.iter().zip(&self.weights).zip(values) {
            load[i] += v * *w;
        }
    }
}

/// One observation `y_k(x) = ∫_{Ω_k} g_k(x, y) φ(y) dy + ξ_k(x)` with
/// `g_k(x, y) = Σ_r a_r(x) b_r(y)` sampled on the region's nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainObservation {
    pub region: RegionSpec,
    pub mask: RegionMask,
    /// `r_k` at the mask nodes.
    pub noise_weight: Vec<f64>,
    /// `(a_r, b_r)` at the mask nodes.
    pub terms: Vec<(Vec<C>, Vec<C>)>,
}

impl SubdomainObservation {
    pub fn new(spec: &AnnulusSpec, region: RegionSpec, noise_weight: impl Fn(Point) -> f64) -> Result<Self> {
        let mask = RegionMask::new(spec, &region)?;
        let r = mask.sample(noise_weight);
        positive_weights("noise weight r_k", &r)?;
        Ok(SubdomainObservation { region, mask, noise_weight: r, terms: Vec::new() })
    }

    /// Adds the kernel term `a(x) b(y)`.
    pub fn with_term(mut self, a: impl Fn(Point) -> C, b: impl Fn(Point) -> C) -> Self {
        self.terms.push((self.mask.sample(a), self.mask.sample(b)));
        self
    }

    /// `∫ g_k(·, y) v(y) dy` at the mask nodes for a field `v`.
    pub fn apply_kernel(&self, field: &[C]) -> Vec<C> {
        let vals = self.mask.gather(field);
        let beta: Vec<C> = self.terms.iter().map(|(_, b)| self.mask.integrate(&mul(b, &vals))).collect();
        self.combine_a(&beta)
    }

    fn combine_a(&self, beta: &[C]) -> Vec<C> {
        (0..self.mask.len()).map(|x| self.terms.iter().zip(beta).map(|((a, _), c)| a[x] * c).sum()).collect()
    }
}

fn mul(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn positive_weights(what: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(x) => Err(Error::Domain(format!("{what} must be positive and finite, got {x}"))),
        None => Ok(()),
    }
}

/// Uncertainty model of the data: `(f, g)` with
/// `∫_{Ω₀} q₁²|f − f₀|² + ∫_Γ q₂²|g − g₀|² ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataModel {
    pub region: RegionSpec,
    pub mask: RegionMask,
    /// `q₁²` on the forcing mask.
    pub q1_sq: Vec<f64>,
    /// `q₂²` at the ring-0 nodes `θ_j`.
    pub q2_sq: Vec<f64>,
    pub f0: Vec<C>,
    pub g0: Vec<C>,
}

impl DataModel {
    /// `q₁`, `f₀` as functions of position; `q₂`, `g₀` of the polar angle on Γ.
    pub fn new(
        spec: &AnnulusSpec,
        region: RegionSpec,
        q1: impl Fn(Point) -> f64,
        f0: impl Fn(Point) -> C,
        q2: impl Fn(f64) -> f64,
        g0: impl Fn(f64) -> C,
    ) -> Result<Self> {
        let mask = RegionMask::new(spec, &region)?;
        let q1_sq: Vec<f64> = mask.sample(|p| q1(p).powi(2));
        let q2_sq: Vec<f64> = (0..spec.n_theta).map(|j| q2(spec.theta(j)).powi(2)).collect();
        positive_weights("q1", &q1_sq)?;
        positive_weights("q2", &q2_sq)?;
        let f0 = mask.sample(f0);
        let g0 = (0..spec.n_theta).map(|j| g0(spec.theta(j))).collect();
        Ok(DataModel { region, mask, q1_sq, q2_sq, f0, g0 })
    }
}

/// Everything the estimators need, with the reduced coupled system
/// factored once.
pub struct SubdomainSetup {
    pub spec: AnnulusSpec,
    pub k: WaveNumber,
    pub data: DataModel,
    pub observations: Vec<SubdomainObservation>,
    outgoing: AnnulusOperator,
    incoming: AnnulusOperator,
    /// Arc-length weight `aΔθ` of the ring-0 nodes.
    gamma_weight: f64,
    /// `G_{rs} = ∫ r_k² ā_r a_s` (block diagonal over observations).
    gram: DMatrix<C>,
    /// Factored `I + H G`, with `H_{r's} = ∫ b_{r'} E[b̄_s]`.
    reduced: Option<DenseSolver>,
    h: DMatrix<C>,
}

impl SubdomainSetup {
    pub fn new(spec: AnnulusSpec, k: WaveNumber, data: DataModel, observations: Vec<SubdomainObservation>) -> Result<Self> {
        let outgoing = AnnulusOperator::new(&spec, k, Radiation::Outgoing)?;
        let incoming = AnnulusOperator::new(&spec, k, Radiation::Incoming)?;
        let gamma_weight = spec.a * spec.dtheta();
        let n = observations.iter().map(|o| o.terms.len()).sum();
        let mut setup = SubdomainSetup {
            spec,
            k,
            data,
            observations,
            outgoing,
            incoming,
            gamma_weight,
            gram: DMatrix::zeros(n, n),
            reduced: None,
            h: DMatrix::zeros(n, n),
        };
        let mut off = 0;
        for o in &setup.observations {
            let r2: Vec<C> = o.noise_weight.iter().map(|r| C::new(r * r, 0.0)).collect();
            for (i, (ai, _)) in o.terms.iter().enumerate() {
                for (j, (aj, _)) in o.terms.iter().enumerate() {
                    setup.gram[(off + i, off + j)] = o.mask.inner(ai, &mul(&r2, aj));
                }
            }
            off += o.terms.len();
        }
        for s in 0..n {
            let mut e = vec![C::new(0.0, 0.0); n];
            e[s] = C::new(1.0, 0.0);
            let col = setup.e_apply(&setup.v_load(&e))?;
            let hcol = setup.p_apply(&col);
            setup.h.set_column(s, &DVector::from_vec(hcol));
        }
        if n > 0 {
            let s = DMatrix::identity(n, n) + &setup.h * &setup.gram;
            setup.reduced = Some(DenseSolver::new(s, "reduced subdomain system")?);
        }
        Ok(setup)
    }

    pub fn n_terms(&self) -> usize {
        self.gram.nrows()
    }

    /// 1-norm condition estimate of the reduced system `I + HG`; `None`
    /// without observations.
    pub fn reduced_condition(&self) -> Option<f64> {
        self.reduced.as_ref().map(DenseSolver::condition)
    }

    pub fn outgoing(&self) -> &AnnulusOperator {
        &self.outgoing
    }

    pub fn incoming(&self) -> &AnnulusOperator {
        &self.incoming
    }

    fn zeros(&self) -> Vec<C> {
        vec![C::new(0.0, 0.0); self.spec.n_nodes()]
    }

    /// Volume load `Σ_r b̄_r γ_r` over every observation region.
    fn v_load(&self, gamma: &[C]) -> Vec<C> {
        let mut load = self.zeros();
        let mut idx = 0;
        for o in &self.observations {
            for (_, b) in &o.terms {
                let vals: Vec<C> = b.iter().map(|x| x.conj() * gamma[idx]).collect();
                o.mask.scatter_load(&mut load, &vals);
                idx += 1;
            }
        }
        load
    }

    /// `β_r = ∫ b_r v`.
    fn p_apply(&self, field: &[C]) -> Vec<C> {
        let mut beta = Vec::with_capacity(self.n_terms());
        for o in &self.observations {
            let vals = o.mask.gather(field);
            for (_, b) in &o.terms {
                beta.push(o.mask.integrate(&mul(b, &vals)));
            }
        }
        beta
    }

    /// Load `∫_{Ω₀} q₁⁻² v θ̄ + ∫_Γ q₂⁻² v θ̄` of the `p`-type problems.
    fn d_load(&self, vol: &[C], gamma: &[C]) -> Vec<C> {
        let mut load = self.zeros();
        let d = &self.data;
        let vals: Vec<C> = d.mask.gather(vol).iter().zip(&d.q1_sq).map(|(v, q)| v / *q).collect();
        d.mask.scatter_load(&mut load, &vals);
        for (j, (v, q)) in gamma.iter().zip(&d.q2_sq).enumerate() {
            load[j] += v / *q * self.gamma_weight;
        }
        load
    }

    /// `E = A⁻¹ D conj(A)⁻¹`: incoming solve, then the `p`-problem it drives.
    fn e_apply(&self, load: &[C]) -> Result<Vec<C>> {
        let z = self.incoming.solve_load(load)?;
        self.outgoing.solve_load(&self.d_load(&z, &z[..self.spec.n_theta]))
    }

    fn reduced_solve(&self, rhs: &[C]) -> Vec<C> {
        match &self.reduced {
            Some(s) => s.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
            None => Vec::new(),
        }
    }

    fn g_apply(&self, beta: &[C]) -> Vec<C> {
        if beta.is_empty() {
            return Vec::new();
        }
        (&self.gram * DVector::from_column_slice(beta)).as_slice().to_vec()
    }

    /// `û_k = r_k² Σ_r a_r β_r`.
    fn weights_from(&self, beta: &[C]) -> Vec<Vec<C>> {
        let mut idx = 0;
        self.observations
            .iter()
            .map(|o| {
                let n = o.terms.len();
                let u = o.combine_a(&beta[idx..idx + n]);
                idx += n;
                u.iter().zip(&o.noise_weight).map(|(v, r)| v * (r * r)).collect()
            })
            .collect()
    }

    fn field(&self, radiation: Radiation, values: Vec<C>) -> AnnulusField {
        AnnulusField { spec: self.spec.clone(), radiation, k: self.k, values }
    }

    /// `∫_{Ω₀} q₁⁻²|v|² + ∫_Γ q₂⁻²|v|²`.
    pub fn data_norm_sq(&self, vol: &[C], gamma: &[C]) -> f64 {
        let d = &self.data;
        let a: f64 = d.mask.weights.iter().zip(&d.q1_sq).zip(d.mask.gather(vol)).map(|((w, q), v)| w * v.norm_sqr() / q).sum();
        let b: f64 = gamma.iter().zip(&d.q2_sq).map(|(v, q)| v.norm_sqr() / q).sum::<f64>() * self.gamma_weight;
        a + b
    }

    /// `Σ_k ∫ r_k⁻²|u_k|²`.
    pub fn noise_norm_sq(&self, u: &[Vec<C>]) -> Result<f64> {
        check_len(self.observations.len(), u.len())?;
        let mut s = 0.0;
        for (o, uk) in self.observations.iter().zip(u) {
            check_len(o.mask.len(), uk.len())?;
            s += o.mask.weights.iter().zip(&o.noise_weight).zip(uk).map(|((w, r), v)| w * v.norm_sqr() / (r * r)).sum::<f64>();
        }
        Ok(s)
    }

    /// Forward solve for data `(f, g)`: `f` on the forcing mask, `g` at the
    /// ring-0 nodes (ν leaving the annulus).
    pub fn simulate(&self, f: &[C], g: &[C]) -> Result<AnnulusField> {
        check_len(self.data.mask.len(), f.len())?;
        check_len(self.spec.n_theta, g.len())?;
        let mut load = self.zeros();
        self.data.mask.scatter_load(&mut load, f);
        for (j, v) in g.iter().enumerate() {
            load[j] += v * self.gamma_weight;
        }
        Ok(self.field(Radiation::Outgoing, self.outgoing.solve_load(&load)?))
    }

    /// Noise-free observations `∫ g_k(·, y) φ(y) dy` of a field.
    pub fn observe(&self, phi: &AnnulusField) -> Vec<Vec<C>> {
        self.observations.iter().map(|o| o.apply_kernel(&phi.values)).collect()
    }

    fn check_data(&self, y: &[Vec<C>]) -> Result<()> {
        check_len(self.observations.len(), y.len())?;
        for (o, yk) in self.observations.iter().zip(y) {
            check_len(o.mask.len(), yk.len())?;
        }
        Ok(())
    }

    /// `Σ_k ∫ conj(u_k) y_k`.
    fn weigh(&self, u: &[Vec<C>], y: &[Vec<C>]) -> Result<C> {
        self.check_data(y)?;
        self.check_data(u)?;
        Ok(self.observations.iter().zip(u.iter().zip(y)).map(|(o, (uk, yk))| o.mask.inner(uk, yk)).sum())
    }
}

/// Functional `l(φ) = ∫_{ω₀} l̄₀ φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainFunctional {
    pub region: RegionSpec,
    pub mask: RegionMask,
    pub l0: Vec<C>,
}

impl SubdomainFunctional {
    pub fn new(spec: &AnnulusSpec, region: RegionSpec, l0: impl Fn(Point) -> C) -> Result<Self> {
        let mask = RegionMask::new(spec, &region)?;
        let l0 = mask.sample(l0);
        Ok(SubdomainFunctional { region, mask, l0 })
    }

    pub fn eval(&self, field: &AnnulusField) -> C {
        self.mask.inner(&self.l0, &self.mask.gather(&field.values))
    }

    fn load(&self, n_nodes: usize) -> Vec<C> {
        let mut load = vec![C::new(0.0, 0.0); n_nodes];
        self.mask.scatter_load(&mut load, &self.l0);
        load
    }
}

/// Minimax estimator of a state functional.
#[derive(Clone, Debug)]
pub struct SubdomainEstimator {
    pub z: AnnulusField,
    pub p: AnnulusField,
    /// `û_k` at each observation's mask nodes.
    pub u_hat: Vec<Vec<C>>,
    pub c_hat: C,
    /// `l(p)`; real up to rounding.
    pub sigma_sq: C,
    pub sigma: f64,
}

fn sigma_from(sigma_sq: C, scale: f64) -> Result<f64> {
    if sigma_sq.re < -1e-10 * scale {
        return Err(Error::NegativeSigmaSquared(sigma_sq.re));
    }
    Ok(sigma_sq.re.max(0.0).sqrt())
}

/// Solves the coupled `z`–`p` system for the functional `l`.
pub fn solve_zp(setup: &SubdomainSetup, l: &SubdomainFunctional) -> Result<SubdomainEstimator> {
    let load_l = l.load(setup.spec.n_nodes());
    let beta = setup.reduced_solve(&setup.p_apply(&setup.e_apply(&load_l)?));
    let v = setup.v_load(&setup.g_apply(&beta));
    let load_z: Vec<C> = load_l.iter().zip(&v).map(|(a, b)| a - b).collect();
    let z = setup.incoming.solve_load(&load_z)?;
    let p = setup.outgoing.solve_load(&setup.d_load(&z, &z[..setup.spec.n_theta]))?;
    let u_hat = setup.weights_from(&beta);
    let d = &setup.data;
    let c_hat = d.mask.inner(&d.mask.gather(&z), &d.f0)
        + z.iter().zip(&d.g0).map(|(a, b)| a.conj() * b).sum::<C>() * setup.gamma_weight;
    let pv = l.mask.gather(&p);
    let sigma_sq = l.mask.inner(&l.l0, &pv);
    let scale: f64 = l.mask.weights.iter().zip(l.l0.iter().zip(&pv)).map(|(w, (a, b))| w * a.norm() * b.norm()).sum();
    let sigma = sigma_from(sigma_sq, scale)?;
    Ok(SubdomainEstimator {
        z: setup.field(Radiation::Incoming, z),
        p: setup.field(Radiation::Outgoing, p),
        u_hat,
        c_hat,
        sigma_sq,
        sigma,
    })
}

/// `Σ_k ∫ conj(û_k) y_k + ĉ`.
pub fn estimate_value(est: &SubdomainEstimator, setup: &SubdomainSetup, y: &[Vec<C>]) -> Result<C> {
    Ok(setup.weigh(&est.u_hat, y)? + est.c_hat)
}

/// Worst-case mean-square error `I(u)` of the estimate with weights `u`,
/// from an independent solve of the incoming problem for `z(·; u)`.
pub fn worst_case_cost(setup: &SubdomainSetup, l: &SubdomainFunctional, u: &[Vec<C>]) -> Result<f64> {
    setup.check_data(u)?;
    let mut load = l.load(setup.spec.n_nodes());
    for (o, uk) in setup.observations.iter().zip(u) {
        // ∫ ḡ_k(η, x) u_k(η) dη = Σ_r b̄_r(x) ∫ ā_r u_k.
        for (a, b) in &o.terms {
            let c = o.mask.inner(a, uk);
            let vals: Vec<C> = b.iter().map(|x| -x.conj() * c).collect();
            o.mask.scatter_load(&mut load, &vals);
        }
    }
    let z = setup.incoming.solve_load(&load)?;
    Ok(setup.data_norm_sq(&z, &z[..setup.spec.n_theta]) + setup.noise_norm_sq(u)?)
}

/// Stochastic form of the estimator: the fields `p̂` (incoming) and `φ̂`
/// (outgoing) driven by the data, with `l(φ̂)` equal to the minimax estimate.
#[derive(Clone, Debug)]
pub struct StochasticSolution {
    pub p_hat: AnnulusField,
    pub phi_hat: AnnulusField,
}

pub fn solve_stochastic(setup: &SubdomainSetup, y: &[Vec<C>]) -> Result<StochasticSolution> {
    setup.check_data(y)?;
    // h_r = ∫ r_k² ā_r y_k.
    let mut h = Vec::with_capacity(setup.n_terms());
    for (o, yk) in setup.observations.iter().zip(y) {
        let ry: Vec<C> = yk.iter().zip(&o.noise_weight).map(|(v, r)| v * (r * r)).collect();
        for (a, _) in &o.terms {
            h.push(o.mask.inner(a, &ry));
        }
    }
    let d = &setup.data;
    let mut nominal = setup.zeros();
    d.mask.scatter_load(&mut nominal, &d.f0);
    for (j, g) in d.g0.iter().enumerate() {
        nominal[j] += g * setup.gamma_weight;
    }
    let phi0 = setup.outgoing.solve_load(&nominal)?;
    let hh: Vec<C> = if h.is_empty() { Vec::new() } else { (&setup.h * DVector::from_column_slice(&h)).as_slice().to_vec() };
    let rhs: Vec<C> = hh.iter().zip(setup.p_apply(&phi0)).map(|(a, b)| a + b).collect();
    let beta = setup.reduced_solve(&rhs);
    let gb = setup.g_apply(&beta);
    let resid: Vec<C> = h.iter().zip(&gb).map(|(a, b)| a - b).collect();
    let p_hat = setup.incoming.solve_load(&setup.v_load(&resid))?;
    let mut load = setup.d_load(&p_hat, &p_hat[..setup.spec.n_theta]);
    load.iter_mut().zip(&nominal).for_each(|(a, b)| *a += b);
    let phi_hat = setup.outgoing.solve_load(&load)?;
    Ok(StochasticSolution {
        p_hat: setup.field(Radiation::Incoming, p_hat),
        phi_hat: setup.field(Radiation::Outgoing, phi_hat),
    })
}

/// Functional of the data `l(F) = ∫_{Ω₀} l̄₀ f + ∫_Γ l̄₁ g`, `l₀` on the
/// forcing mask, `l₁` at the ring-0 nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct RhsFunctional {
    pub l0: Vec<C>,
    pub l1: Vec<C>,
}

impl RhsFunctional {
    pub fn new(setup: &SubdomainSetup, l0: impl Fn(Point) -> C, l1: impl Fn(f64) -> C) -> Self {
        let l0 = setup.data.mask.sample(l0);
        let l1 = (0..setup.spec.n_theta).map(|j| l1(setup.spec.theta(j))).collect();
        RhsFunctional { l0, l1 }
    }

    pub fn eval(&self, setup: &SubdomainSetup, f: &[C], g: &[C]) -> C {
        setup.data.mask.inner(&self.l0, f) + self.l1.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<C>() * setup.gamma_weight
    }

    fn volume(&self, setup: &SubdomainSetup) -> Vec<C> {
        let mut v = setup.zeros();
        for (&i, l) in setup.data.mask.nodes.iter().zip(&self.l0) {
            v[i] = *l;
        }
        v
    }
}

/// Minimax estimator of a data functional.
#[derive(Clone, Debug)]
pub struct RhsEstimator {
    pub z: AnnulusField,
    pub p: AnnulusField,
    pub u_hat: Vec<Vec<C>>,
    pub c_hat: C,
    pub sigma_sq: C,
    pub sigma: f64,
}

pub fn solve_rhs(setup: &SubdomainSetup, l: &RhsFunctional) -> Result<RhsEstimator> {
    check_len(setup.data.mask.len(), l.l0.len())?;
    check_len(setup.spec.n_theta, l.l1.len())?;
    let lvol = l.volume(setup);
    let p_l = setup.outgoing.solve_load(&setup.d_load(&lvol, &l.l1))?;
    let beta = setup.reduced_solve(&setup.p_apply(&p_l));
    let v: Vec<C> = setup.v_load(&setup.g_apply(&beta)).iter().map(|x| -x).collect();
    let z = setup.incoming.solve_load(&v)?;
    let zl: Vec<C> = z.iter().zip(&lvol).map(|(a, b)| a + b).collect();
    let zl_gamma: Vec<C> = z.iter().zip(&l.l1).map(|(a, b)| a + b).collect();
    let p = setup.outgoing.solve_load(&setup.d_load(&zl, &zl_gamma))?;
    let d = &setup.data;
    let zl_mask = d.mask.gather(&zl);
    let c_hat = d.mask.inner(&zl_mask, &d.f0) + zl_gamma.iter().zip(&d.g0).map(|(a, b)| a.conj() * b).sum::<C>() * setup.gamma_weight;
    // σ² = l(P), P = (q₁⁻²(l₀ + z), q₂⁻²(l₁ + z)).
    let pv: Vec<C> = zl_mask.iter().zip(&d.q1_sq).map(|(v, q)| v / *q).collect();
    let pg: Vec<C> = zl_gamma.iter().zip(&d.q2_sq).map(|(v, q)| v / *q).collect();
    let sigma_sq = l.eval(setup, &pv, &pg);
    let scale = setup.data_norm_sq(&zl, &zl_gamma) + setup.data_norm_sq(&lvol, &l.l1);
    let sigma = sigma_from(sigma_sq, scale)?;
    Ok(RhsEstimator {
        z: setup.field(Radiation::Incoming, z),
        p: setup.field(Radiation::Outgoing, p),
        u_hat: setup.weights_from(&beta),
        c_hat,
        sigma_sq,
        sigma,
    })
}

/// Estimate of `l(F)` and its guaranteed error `σ`.
pub fn estimate_rhs(setup: &SubdomainSetup, l: &RhsFunctional, y: &[Vec<C>]) -> Result<(C, f64)> {
    let est = solve_rhs(setup, l)?;
    Ok((setup.weigh(&est.u_hat, y)? + est.c_hat, est.sigma))
}

/// Monte Carlo model of the state-functional estimator.
pub struct SubdomainModel<'a> {
    pub setup: &'a SubdomainSetup,
    pub functional: &'a SubdomainFunctional,
    pub estimator: &'a SubdomainEstimator,
}

impl SubdomainModel<'_> {
    /// Data perturbation `(δf, δg)` on the boundary of the uncertainty set.
    fn perturbation(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> (Vec<C>, Vec<C>) {
        let s = self.setup;
        let d = &s.data;
        let (mut df, mut dg) = match kind {
            TrialKind::Random => (gaussian_vec(rng, d.mask.len()), gaussian_vec(rng, s.spec.n_theta)),
            _ => {
                // Extremizer: q⁻² z / ‖z‖.
                let z = &self.estimator.z.values;
                let ph = unit_phase(rng);
                let df = d.mask.gather(z).iter().zip(&d.q1_sq).map(|(v, q)| v / *q * ph).collect();
                let dg = z[..s.spec.n_theta].iter().zip(&d.q2_sq).map(|(v, q)| v / *q * ph).collect();
                (df, dg)
            }
        };
        // Normalize in the Q-weighted norm: ∫ q₁²|δf|² + ∫ q₂²|δg|² = 1.
        let norm_sq: f64 = d.mask.weights.iter().zip(&d.q1_sq).zip(&df).map(|((w, q), v)| w * q * v.norm_sqr()).sum::<f64>()
            + dg.iter().zip(&d.q2_sq).map(|(v, q)| q * v.norm_sqr()).sum::<f64>() * s.gamma_weight;
        if norm_sq > 0.0 {
            let inv = 1.0 / norm_sq.sqrt();
            df.iter_mut().chain(dg.iter_mut()).for_each(|v| *v *= inv);
        }
        (df, dg)
    }

    /// Noise on the boundary of the admissible second-moment set.
    fn noise(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Vec<Vec<C>> {
        let s = self.setup;
        match kind {
            TrialKind::ExtremalNoise => {
                let n2 = s.noise_norm_sq(&self.estimator.u_hat).unwrap_or(0.0);
                let nu = rademacher(rng);
                s.observations
                    .iter()
                    .zip(&self.estimator.u_hat)
                    .map(|(o, u)| {
                        u.iter()
                            .zip(&o.noise_weight)
                            .map(|(v, r)| if n2 > 0.0 { v / (r * r) * (nu / n2.sqrt()) } else { C::new(0.0, 0.0) })
                            .collect()
                    })
                    .collect()
            }
            _ => {
                // Uncorrelated: E|ξ(x)|² = 1/(r² W), W = total observed area.
                let area: f64 = s.observations.iter().map(|o| o.mask.weights.iter().sum::<f64>()).sum();
                s.observations
                    .iter()
                    .map(|o| o.noise_weight.iter().map(|r| gaussian(rng) * (1.0 / (2.0 * r * r * area)).sqrt()).collect())
                    .collect()
            }
        }
    }
}

impl WorstCaseModel for SubdomainModel<'_> {
    fn sigma_sq(&self) -> f64 {
        self.estimator.sigma * self.estimator.sigma
    }

    fn trial_error(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Result<C> {
        let s = self.setup;
        let (df, dg) = self.perturbation(kind, rng);
        let f: Vec<C> = s.data.f0.iter().zip(&df).map(|(a, b)| a + b).collect();
        let g: Vec<C> = s.data.g0.iter().zip(&dg).map(|(a, b)| a + b).collect();
        let phi = s.simulate(&f, &g)?;
        let mut y = s.observe(&phi);
        for (yk, xk) in y.iter_mut().zip(self.noise(kind, rng)) {
            yk.iter_mut().zip(xk).for_each(|(a, b)| *a += b);
        }
        Ok(self.functional.eval(&phi) - estimate_value(self.estimator, s, &y)?)
    }
}

/// Random unit-norm perturbation of a set of weights, for optimality probes.
pub fn random_weights(setup: &SubdomainSetup, rng: &mut impl Rng, scale: f64) -> Vec<Vec<C>> {
    setup
        .observations
        .iter()
        .map(|o| (0..o.mask.len()).map(|_| crate::validation::gaussian(rng) * scale).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SubdomainSetup {
        let spec = AnnulusSpec::new(1.0, 3.0, 24, 48, 16).unwrap();
        let data = DataModel::new(
            &spec,
            RegionSpec::sector(1.5, 2.5, 0.2, 1.4, 8).unwrap(),
            |_| 1.0,
            |_| C::new(0.0, 0.0),
            |_| 2.0,
            |_| C::new(0.0, 0.0),
        )
        .unwrap();
        let obs = SubdomainObservation::new(&spec, RegionSpec::sector(1.4, 2.2, 2.0, 3.0, 8).unwrap(), |_| 3.0)
            .unwrap()
            .with_term(|_| C::new(1.0, 0.0), |p| C::new(p[0], 0.0));
        SubdomainSetup::new(spec, WaveNumber::new(1.5, 0.0).unwrap(), data, vec![obs]).unwrap()
    }

    #[test]
    fn masks_respect_the_annulus() {
        let spec = AnnulusSpec::new(1.0, 3.0, 24, 48, 16).unwrap();
        assert!(matches!(RegionMask::new(&spec, &RegionSpec::disk([0.0, 0.0], 2.0, 4).unwrap()), Err(Error::RegionViolation(_))));
        assert!(matches!(RegionMask::new(&spec, &RegionSpec::disk([2.5, 0.0], 0.6, 4).unwrap()), Err(Error::RegionViolation(_))));
        let m = RegionMask::new(&spec, &RegionSpec::sector(1.5, 2.5, 0.0, 1.0, 4).unwrap()).unwrap();
        let area = 0.5 * (2.5f64.powi(2) - 1.5f64.powi(2));
        assert!((m.weights.iter().sum::<f64>() - area).abs() < 0.02 * area);
    }

    #[test]
    fn zero_functional_gives_zero_estimator() {
        let s = small();
        let l = SubdomainFunctional::new(&s.spec, RegionSpec::sector(2.0, 2.6, -1.0, -0.2, 4).unwrap(), |_| C::new(0.0, 0.0)).unwrap();
        let e = solve_zp(&s, &l).unwrap();
        assert_eq!(e.sigma, 0.0);
        assert!(e.u_hat.iter().flatten().all(|u| u.norm() == 0.0));
        assert!(e.z.values.iter().all(|u| u.norm() == 0.0));
    }
}
