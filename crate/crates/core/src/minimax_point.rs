//! Minimax estimation from point observations.
//!
//! The state `φ` is the outgoing solution of `(Δ + k²)φ = 0` outside `Γ`
//! with `∂φ/∂ν = h`, `∫_Γ q₁²|h − h₀|² ≤ 1`. One observes
//! `y_k = φ(x′_k) + η_k` with `Σ r_k² E|η_k|² ≤ 1` and estimates
//! `l(φ) = Σ ā_i φ(x_i)` by `Σ ū_k y_k + c`.
//!
//! With unit potentials (`(Δ + k²)Φ_k = −δ`):
//!
//! * `z` is incoming, `(Δ + k̄²)z = Σ a_i δ_{x_i} − Σ u_k δ_{x′_k}`,
//!   `∂_νz = 0` on `Γ`; the worst-case cost is
//!   `I(u) = ∫_Γ q₁⁻²|z|² + Σ |u_k|²/r_k²`;
//! * `p` is outgoing with `∂_νp = q₁⁻² z`, and the minimizer is
//!   `û_k = r_k² p(x′_k)`, with `ĉ = ∫_Γ z̄ h₀` and `σ² = l(p)`.
//!
//! Writing `z = ψ_s + z_in` with `z_in = Σ_k û_k Φ_{−k̄}(·−x′_k) − Σ_i a_i Φ_{−k̄}(·−x_i)`
//! turns the pair into one dense system over `(ψ, χ = p|_Γ, p(x′_1..N))`.
//! The point unknowns are carried as `û_k = r_k² p(x′_k)`: the evaluation
//! rows then read `û_k/r_k² − p(x′_k) = 0` and the matrix tends to a
//! nonsingular limit as the noise weights grow, instead of degenerating.
//! The data-driven variant reuses the same matrix: `p̂` is incoming with
//! sources `r_k²(y_k − φ̂(x′_k))`, and `φ̂` is outgoing with
//! `∂_νφ̂ = q₁⁻² p̂ + h₀`; then `l(φ̂)` is the minimax estimate.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand_chacha::ChaCha8Rng;

use crate::dtn::Radiation;
use crate::error::{check_len, Error, Result};
use crate::forward::{cfie_matrix, cfie_rhs_matrix, ExteriorSolution};
use crate::geometry::{min_separation, ClosedCurveGrid, GeomObject};
use crate::linalg::DenseSolver;
use crate::potentials::{assemble_boundary_ops, fundamental, kernel_bundle, layer_matrix, BoundaryOperatorSet, LayerKind};
use crate::quadrature::gauss_legendre;
use crate::validation::{gaussian, gaussian_vec, rademacher, unit_phase, TrialKind, WorstCaseModel};
use crate::{Point, WaveNumber};

/// Ratio between the composed-potential coupling `r_l² ∫ Φ_k q₁⁻² Φ_{−k̄}`
/// and the 2D form of [`alpha_beta_2d`] (`(1/2π) r_l² ∫ H₀ q₁⁻² H₀`):
/// `(i/4)² · 2π = −π/8`.
pub const ALPHA_RATIO_2D: f64 = -PI / 8.0;

/// Same ratio in 3D, `(1/4π)² · 2π = 1/(8π)`, for kernels `e^{ikr}/r`.
pub const ALPHA_RATIO_3D: f64 = 1.0 / (8.0 * PI);

/// Point observations and the point functional on one scattering problem.
pub struct PointSetup {
    pub grid: ClosedCurveGrid,
    pub k: WaveNumber,
    pub eta: f64,
    /// Observation points `x′_k`.
    pub obs: Vec<Point>,
    /// Noise weights `r_k`.
    pub r: Vec<f64>,
    /// Functional points `x_i`.
    pub targets: Vec<Point>,
    /// Functional coefficients `a_i`.
    pub a: Vec<C>,
    /// `q₁²` at the `Γ` nodes.
    pub q1_sq: Vec<f64>,
    /// `h₀` at the `Γ` nodes.
    pub h0: Vec<C>,
    pub ops_out: BoundaryOperatorSet,
    pub ops_in: BoundaryOperatorSet,
    /// `Φ_{−k̄}(y − x′_l)` and `∂_{ν(y)}Φ_{−k̄}(y − x′_l)` on `Γ` (columns `l`).
    src_obs: (DMatrix<C>, DMatrix<C>),
    /// `−Σ_i a_i Φ_{−k̄}(· − x_i)` and its normal derivative on `Γ`.
    src_fun: (DVector<C>, DVector<C>),
    /// `Γ → x′` double and single layers at `k`.
    g2o: (DMatrix<C>, DMatrix<C>),
    /// `Γ → x_i` double and single layers at `k`.
    g2t: (DMatrix<C>, DMatrix<C>),
    forward: OnceLock<Result<DenseSolver>>,
    adjoint: OnceLock<Result<DenseSolver>>,
    system: OnceLock<Result<DenseSolver>>,
}

impl fmt::Debug for PointSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointSetup")
            .field("n_gamma", &self.grid.len())
            .field("k", &self.k)
            .field("eta", &self.eta)
            .field("n_obs", &self.obs.len())
            .field("n_targets", &self.targets.len())
            .finish_non_exhaustive()
    }
}

fn diag(v: &[f64]) -> DMatrix<C> {
    DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|x| C::new(*x, 0.0))))
}

fn cached(cell: &OnceLock<Result<DenseSolver>>, build: impl FnOnce() -> Result<DenseSolver>) -> Result<&DenseSolver> {
    cell.get_or_init(build).as_ref().map_err(Clone::clone)
}

/// Values and normal derivatives on `Γ` of `Φ_k(· − x)` for each source `x`.
fn point_sources(grid: &ClosedCurveGrid, k: WaveNumber, sources: &[Point]) -> Result<(DMatrix<C>, DMatrix<C>)> {
    let n = grid.len();
    let mut v = DMatrix::zeros(n, sources.len());
    let mut d = DMatrix::zeros(n, sources.len());
    for (l, x) in sources.iter().enumerate() {
        for j in 0..n {
            let b = kernel_bundle(2, k, &grid.points[j], x, &grid.normals[j], &grid.normals[j])?;
            v[(j, l)] = b.phi;
            d[(j, l)] = b.dphi_dnx;
        }
    }
    Ok((v, d))
}

impl PointSetup {
    /// Checks that `Γ` and all points are mutually separated, then assembles
    /// the operator blocks. `η = 0` is accepted for diagnostics only.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &ClosedCurveGrid,
        k: WaveNumber,
        eta: f64,
        q1: impl Fn(Point) -> f64,
        h0: impl Fn(Point) -> C,
        obs: Vec<Point>,
        r: Vec<f64>,
        targets: Vec<Point>,
        a: Vec<C>,
    ) -> Result<Self> {
        if !eta.is_finite() || eta * k.value().re < 0.0 {
            return Err(Error::domain(format!("coupling needs η·Re k ≥ 0, got η = {eta}, k = {k}")));
        }
        check_len(obs.len(), r.len())?;
        check_len(targets.len(), a.len())?;
        if let Some(bad) = r.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::domain(format!("noise weights must be positive, got {bad}")));
        }
        let mut objects = vec![GeomObject::Curve(&grid.curve)];
        objects.extend(obs.iter().chain(&targets).map(|p| GeomObject::Point(*p)));
        min_separation(&objects, None)?;
        for p in obs.iter().chain(&targets) {
            if grid.curve.contains(*p) {
                return Err(Error::RegionViolation(format!("point {p:?} lies inside Γ")));
            }
        }

        let q1_sq = grid
            .points
            .iter()
            .map(|p| {
                let q = q1(*p);
                if q > 0.0 && q.is_finite() {
                    Ok(q * q)
                } else {
                    Err(Error::domain(format!("q₁ must be positive on Γ, got {q}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let h0: Vec<C> = grid.points.iter().map(|p| h0(*p)).collect();
        let kin = k.adjoint();
        let ops_out = assemble_boundary_ops(grid, k)?;
        let ops_in = assemble_boundary_ops(grid, kin)?;
        let src_obs = point_sources(grid, kin, &obs)?;
        let (fv, fd) = point_sources(grid, kin, &targets)?;
        let av = DVector::from_column_slice(&a);
        let src_fun = (-(fv * &av), -(fd * &av));
        let g2o = (layer_matrix(grid, LayerKind::Double, k, &obs, None)?, layer_matrix(grid, LayerKind::Single, k, &obs, None)?);
        let g2t = (
            layer_matrix(grid, LayerKind::Double, k, &targets, None)?,
            layer_matrix(grid, LayerKind::Single, k, &targets, None)?,
        );
        Ok(PointSetup {
            grid: grid.clone(),
            k,
            eta,
            obs,
            r,
            targets,
            a,
            q1_sq,
            h0,
            ops_out,
            ops_in,
            src_obs,
            src_fun,
            g2o,
            g2t,
            forward: OnceLock::new(),
            adjoint: OnceLock::new(),
            system: OnceLock::new(),
        })
    }

    pub fn n_gamma(&self) -> usize {
        self.grid.len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    /// Size of the dense system, `2N_Γ + N`.
    pub fn n_unknowns(&self) -> usize {
        2 * self.n_gamma() + self.n_obs()
    }

    fn q_inv(&self) -> Vec<f64> {
        self.q1_sq.iter().map(|q| 1.0 / q).collect()
    }


    fn forward_solver(&self) -> Result<&DenseSolver> {
        cached(&self.forward, || DenseSolver::new(cfie_matrix(&self.ops_out, self.eta, Radiation::Outgoing), "outgoing combined-field equation"))
    }

    fn adjoint_solver(&self) -> Result<&DenseSolver> {
        cached(&self.adjoint, || DenseSolver::new(cfie_matrix(&self.ops_in, self.eta, Radiation::Incoming), "incoming combined-field equation"))
    }

    fn system_solver(&self) -> Result<&DenseSolver> {
        cached(&self.system, || DenseSolver::new(self.system_matrix(), "point-observation estimation system"))
    }

    /// The dense matrix over `(ψ, χ, û_1, …, û_N)`.
    pub fn system_matrix(&self) -> DMatrix<C> {
        let n = self.n_gamma();
        let no = self.n_obs();
        let q = diag(&self.q_inv());
        let (tv, td) = (&self.src_obs.0, &self.src_obs.1);
        let a_in = cfie_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let r_in = cfie_rhs_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let a_out = cfie_matrix(&self.ops_out, self.eta, Radiation::Outgoing);
        let rq = cfie_rhs_matrix(&self.ops_out, self.eta, Radiation::Outgoing) * &q;
        let vq = &self.g2o.1 * &q;

        let mut m = DMatrix::zeros(n + n + no, n + n + no);
        m.view_mut((0, 0), (n, n)).copy_from(&a_in);
        m.view_mut((0, 2 * n), (n, no)).copy_from(&(&r_in * td));
        m.view_mut((n, 0), (n, n)).copy_from(&(-&rq));
        m.view_mut((n, n), (n, n)).copy_from(&a_out);
        m.view_mut((n, 2 * n), (n, no)).copy_from(&(-(&rq * tv)));
        m.view_mut((2 * n, 0), (no, n)).copy_from(&vq);
        m.view_mut((2 * n, n), (no, n)).copy_from(&(-&self.g2o.0));
        m.view_mut((2 * n, 2 * n), (no, no)).copy_from(&(&vq * tv));
        for (i, r) in self.r.iter().enumerate() {
            m[(2 * n + i, 2 * n + i)] += C::new(1.0 / (r * r), 0.0);
        }
        m
    }

    /// Condition estimate of the dense system without the solve-time limit.
    pub fn system_condition(&self) -> f64 {
        DenseSolver::with_limit(self.system_matrix(), "condition probe", f64::INFINITY).map_or(f64::INFINITY, |s| s.condition())
    }

    /// Solves for a fixed incoming part `F` (`F|_Γ`, `∂_νF|_Γ`) and an extra
    /// Neumann datum `hx` of the outgoing field.
    fn solve_with(&self, fv: &DVector<C>, fd: &DVector<C>, hx: &DVector<C>) -> Result<Unknowns> {
        let n = self.n_gamma();
        let no = self.n_obs();
        let r_in = cfie_rhs_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let r_out = cfie_rhs_matrix(&self.ops_out, self.eta, Radiation::Outgoing);
        let g = DVector::from_iterator(n, (0..n).map(|j| fv[j] / self.q1_sq[j] + hx[j]));
        let mut b = DVector::zeros(self.n_unknowns());
        b.rows_mut(0, n).copy_from(&(-(&r_in * fd)));
        b.rows_mut(n, n).copy_from(&(&r_out * &g));
        b.rows_mut(2 * n, no).copy_from(&(-(&self.g2o.1 * &g)));
        let x = self.system_solver()?.solve(&b);
        let psi = x.rows(0, n).into_owned();
        let chi = x.rows(n, n).into_owned();
        let weights = x.rows(2 * n, no).into_owned();
        let z_gamma = &psi + &self.src_obs.0 * &weights + fv;
        let neumann = DVector::from_iterator(n, (0..n).map(|j| z_gamma[j] / self.q1_sq[j] + hx[j]));
        let weights: Vec<C> = weights.iter().cloned().collect();
        Ok(Unknowns { psi, chi, weights, z_gamma, neumann })
    }

    /// Outgoing field with Neumann data `h` on `Γ`.
    pub fn simulate(&self, h: &[C]) -> Result<ExteriorSolution> {
        check_len(self.n_gamma(), h.len())?;
        let g = DVector::from_column_slice(h);
        let trace = self.forward_solver()?.solve(&(cfie_rhs_matrix(&self.ops_out, self.eta, Radiation::Outgoing) * &g));
        Ok(self.outgoing(trace, g))
    }

    fn outgoing(&self, trace: DVector<C>, neumann: DVector<C>) -> ExteriorSolution {
        ExteriorSolution { grid: self.grid.clone(), k: self.k, radiation: Radiation::Outgoing, trace, neumann }
    }

    /// Noise-free observations `φ(x′_k)` of an outgoing field.
    pub fn observe(&self, field: &ExteriorSolution) -> Vec<C> {
        (&self.g2o.0 * &field.trace - &self.g2o.1 * &field.neumann).iter().cloned().collect()
    }

    /// `l(u) = Σ ā_i u(x_i)` for an outgoing field.
    pub fn functional_value(&self, field: &ExteriorSolution) -> C {
        let v = &self.g2t.0 * &field.trace - &self.g2t.1 * &field.neumann;
        self.a.iter().zip(v.iter()).map(|(a, v)| a.conj() * v).sum()
    }

    /// `∫_Γ q₁²|δh|²`.
    pub fn data_norm_sq(&self, dh: &[C]) -> f64 {
        dh.iter().zip(&self.q1_sq).zip(&self.grid.weights).map(|((v, q), w)| v.norm_sqr() * q * w).sum()
    }

    /// `Σ |u_k|² / r_k²`.
    pub fn noise_norm_sq(&self, u: &[C]) -> Result<f64> {
        check_len(self.n_obs(), u.len())?;
        Ok(u.iter().zip(&self.r).map(|(u, r)| u.norm_sqr() / (r * r)).sum())
    }

    /// Coupling coefficients as assembled by the solver: `α_ls` is the
    /// direct (unscattered) contribution of `p(x′_l)` to the evaluation
    /// equation at `x′_s`, i.e. `r_l² ∫_Γ Φ_k(x′_s − y) q₁⁻² Φ_{−k̄}(y − x′_l)`,
    /// returned as `[s, l]`; `β_s = Σ_j a_j ∫_Γ Φ_k(x′_s − y) q₁⁻² Φ_{−k̄}(y − x_j)`.
    pub fn composed_alpha_beta(&self) -> (DMatrix<C>, DVector<C>) {
        let vq = &self.g2o.1 * diag(&self.q_inv());
        let r2 = diag(&self.r.iter().map(|r| r * r).collect::<Vec<_>>());
        (&vq * &self.src_obs.0 * r2, -(&vq * &self.src_fun.0))
    }
}

struct Unknowns {
    psi: DVector<C>,
    chi: DVector<C>,
    /// `r_k²` times the outgoing field at `x′_k`.
    weights: Vec<C>,
    z_gamma: DVector<C>,
    neumann: DVector<C>,
}

/// Solution of the estimation system.
#[derive(Clone, Debug)]
pub struct PointSolution {
    /// Scattered part of `z` on `Γ`.
    pub psi: DVector<C>,
    /// `p|_Γ`.
    pub chi: DVector<C>,
    /// `p(x′_l)`.
    pub p_at_obs: Vec<C>,
    /// `z|_Γ`.
    pub z_gamma: DVector<C>,
    /// `p`, outgoing with Neumann data `q₁⁻² z|_Γ`.
    pub p: ExteriorSolution,
    /// `û_k = r_k² p(x′_k)`.
    pub u_hat: Vec<C>,
    pub c_hat: C,
    /// `l(p) = Σ ā_i p(x_i)`; real up to discretization error.
    pub sigma_sq: C,
    pub sigma: f64,
}

/// Solves the estimation system and assembles `û`, `ĉ` and `σ`.
pub fn solve_point_system(setup: &PointSetup) -> Result<PointSolution> {
    let n = setup.n_gamma();
    let u = setup.solve_with(&setup.src_fun.0, &setup.src_fun.1, &DVector::zeros(n))?;
    let p_at_obs: Vec<C> = u.weights.iter().zip(&setup.r).map(|(w, r)| w / (r * r)).collect();
    let u_hat = u.weights;
    let c_hat = (0..n).map(|j| u.z_gamma[j].conj() * setup.h0[j] * setup.grid.weights[j]).sum();
    let p = setup.outgoing(u.chi.clone(), u.neumann);
    let pv = &setup.g2t.0 * &p.trace - &setup.g2t.1 * &p.neumann;
    let sigma_sq: C = setup.a.iter().zip(pv.iter()).map(|(a, v)| a.conj() * v).sum();
    let scale: f64 = setup.a.iter().zip(pv.iter()).map(|(a, v)| (a * v).norm()).sum();
    if sigma_sq.re < -1e-10 * scale {
        return Err(Error::NegativeSigmaSquared(sigma_sq.re));
    }
    Ok(PointSolution { psi: u.psi, chi: u.chi, p_at_obs, z_gamma: u.z_gamma, p, u_hat, c_hat, sigma_sq, sigma: sigma_sq.re.max(0.0).sqrt() })
}

/// `Σ conj(û_k) y_k + ĉ`.
pub fn point_estimate(sol: &PointSolution, y: &[C]) -> Result<C> {
    check_len(sol.u_hat.len(), y.len())?;
    Ok(sol.u_hat.iter().zip(y).map(|(u, y)| u.conj() * y).sum::<C>() + sol.c_hat)
}

/// `I(u) = ∫_Γ q₁⁻²|z(·; u)|² + Σ |u_k|²/r_k²`, with `z(·; u)` built from
/// point sources evaluated directly on `Γ` and one incoming combined-field
/// solve for the scattered part.
pub fn worst_case_cost_point(setup: &PointSetup, u: &[C]) -> Result<f64> {
    check_len(setup.n_obs(), u.len())?;
    let kin = setup.k.adjoint();
    let n = setup.n_gamma();
    let mut zin = DVector::zeros(n);
    let mut dzin = DVector::zeros(n);
    let sources = setup.targets.iter().zip(setup.a.iter().map(|a| -a)).chain(setup.obs.iter().zip(u.iter().cloned()));
    for (x, c) in sources {
        for j in 0..n {
            let (y, ny) = (setup.grid.points[j], setup.grid.normals[j]);
            zin[j] += c * fundamental(2, kin, &y, x)?;
            let b = kernel_bundle(2, kin, &y, x, &ny, &ny)?;
            dzin[j] += c * b.dphi_dnx;
        }
    }
    let psi = setup.adjoint_solver()?.solve(&(cfie_rhs_matrix(&setup.ops_in, setup.eta, Radiation::Incoming) * -dzin));
    let z = psi + zin;
    let data: f64 = (0..n).map(|j| z[j].norm_sqr() / setup.q1_sq[j] * setup.grid.weights[j]).sum();
    Ok(data + setup.noise_norm_sq(u)?)
}

/// Data-driven form of the estimator.
#[derive(Clone, Debug)]
pub struct PointStochastic {
    /// Scattered part of `p̂` on `Γ`.
    pub psi: DVector<C>,
    /// `φ̂(x′_l)`.
    pub phi_at_obs: Vec<C>,
    /// Outgoing `φ̂`, evaluable anywhere in the exterior.
    pub phi_hat: ExteriorSolution,
}

/// Solves for `φ̂`: `p̂` incoming with sources `r_k²(y_k − φ̂(x′_k))` and
/// `∂_ν p̂ = 0`, `φ̂` outgoing with `∂_νφ̂ = q₁⁻² p̂ + h₀`.
pub fn solve_point_stochastic(setup: &PointSetup, y: &[C]) -> Result<PointStochastic> {
    check_len(setup.n_obs(), y.len())?;
    // Source r²(y − φ̂) contributes −Σ r² y Φ_{−k̄} + T_p φ̂(x′).
    let ry = DVector::from_iterator(y.len(), y.iter().zip(&setup.r).map(|(y, r)| -y * (r * r)));
    let fv = &setup.src_obs.0 * &ry;
    let fd = &setup.src_obs.1 * &ry;
    let hx = DVector::from_column_slice(&setup.h0);
    let u = setup.solve_with(&fv, &fd, &hx)?;
    Ok(PointStochastic { psi: u.psi, phi_at_obs: u.weights.iter().zip(&setup.r).map(|(w, r)| w / (r * r)).collect(), phi_hat: setup.outgoing(u.chi, u.neumann) })
}

/// `(α, β)` in the integral form of the coupling coefficients, 2D analog:
/// `α_ls = (1/2π) r_l² ∫_Γ H₀(k|x′_s − y|) q₁⁻²(y) H₀(−k̄|y − x′_l|) dΓ_y`
/// (returned at `[s, l]`) and
/// `β_s = (1/2π) Σ_j a_j ∫_Γ H₀(k|x′_s − y|) q₁⁻²(y) H₀(−k̄|y − x_j|) dΓ_y`,
/// both on the `Γ` grid. Relates to [`PointSetup::composed_alpha_beta`] by
/// [`ALPHA_RATIO_2D`].
pub fn alpha_beta_2d(setup: &PointSetup) -> Result<(DMatrix<C>, DVector<C>)> {
    let kin = setup.k.adjoint();
    let h = |k: WaveNumber, x: &Point, y: &Point| -> Result<C> { Ok(fundamental(2, k, x, y)? * C::new(0.0, -4.0)) };
    let g = &setup.grid;
    let no = setup.n_obs();
    let mut alpha = DMatrix::zeros(no, no);
    let mut beta = DVector::zeros(no);
    for s in 0..no {
        let left: Vec<C> = g.points.iter().map(|y| h(setup.k, &setup.obs[s], y)).collect::<Result<_>>()?;
        let w: Vec<C> = left.iter().zip(&setup.q1_sq).zip(&g.weights).map(|((v, q), w)| v * (w / q / (2.0 * PI))).collect();
        for l in 0..no {
            let mut acc = C::new(0.0, 0.0);
            for (j, y) in g.points.iter().enumerate() {
                acc += w[j] * h(kin, y, &setup.obs[l])?;
            }
            alpha[(s, l)] = acc * setup.r[l] * setup.r[l];
        }
        for (x, a) in setup.targets.iter().zip(&setup.a) {
            let mut acc = C::new(0.0, 0.0);
            for (j, y) in g.points.iter().enumerate() {
                acc += w[j] * h(kin, y, x)?;
            }
            beta[s] += a * acc;
        }
    }
    Ok((alpha, beta))
}

/// A sphere `|y − c| = R` with a product Gauss rule: Gauss–Legendre in
/// `cos θ`, trapezoid in the azimuth.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(center: [f64; 3], radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0) || n_theta == 0 || n_phi == 0 {
            return Err(Error::domain("sphere rule needs R > 0 and positive node counts"));
        }
        let (mu, wmu) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (m, wm) in mu.iter().zip(&wmu) {
            let st = (1.0 - m * m).sqrt();
            for j in 0..n_phi {
                let ph = j as f64 * dphi;
                points.push([center[0] + radius * st * ph.cos(), center[1] + radius * st * ph.sin(), center[2] + radius * m]);
                weights.push(wm * dphi * radius * radius);
            }
        }
        Ok(SphereRule { points, weights })
    }
}

/// `(α, β)` for a spherical `Γ` in 3D with kernels `e^{ikr}/r`:
/// `α_ls = (1/2π) r_l² ∫ e^{ik|x′_s−y|}/|x′_s−y| q₁⁻²(y) e^{−ik̄|y−x′_l|}/|y−x′_l| dΓ_y`
/// at `[s, l]`, and `β_s` likewise with `Σ_j a_j` over the functional points.
#[allow(clippy::too_many_arguments)]
pub fn alpha_beta_sphere(
    rule: &SphereRule,
    k: WaveNumber,
    q1: impl Fn([f64; 3]) -> f64,
    obs: &[[f64; 3]],
    r: &[f64],
    targets: &[[f64; 3]],
    a: &[C],
) -> Result<(DMatrix<C>, DVector<C>)> {
    check_len(obs.len(), r.len())?;
    check_len(targets.len(), a.len())?;
    let kv = k.value();
    let kin = k.adjoint().value();
    let ker = |kk: C, x: &[f64; 3], y: &[f64; 3]| -> Result<C> {
        let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
        if d == 0.0 {
            return Err(Error::domain("point on the sphere"));
        }
        Ok((C::new(0.0, 1.0) * kk * d).exp() / d)
    };
    let qw: Vec<f64> = rule.points.iter().zip(&rule.weights).map(|(y, w)| w / q1(*y).powi(2) / (2.0 * PI)).collect();
    let mut alpha = DMatrix::zeros(obs.len(), obs.len());
    let mut beta = DVector::zeros(obs.len());
    for (s, xs) in obs.iter().enumerate() {
        let left: Vec<C> = rule.points.iter().zip(&qw).map(|(y, w)| Ok(ker(kv, xs, y)? * *w)).collect::<Result<_>>()?;
        let integral = |x: &[f64; 3]| -> Result<C> { rule.points.iter().zip(&left).map(|(y, l)| Ok(l * ker(kin, y, x)?)).sum() };
        for (l, xl) in obs.iter().enumerate() {
            alpha[(s, l)] = integral(xl)? * r[l] * r[l];
        }
        for (x, aj) in targets.iter().zip(a) {
            beta[s] += aj * integral(x)?;
        }
    }
    Ok((alpha, beta))
}

/// Monte Carlo model of the point-observation estimator.
pub struct PointModel<'a> {
    pub setup: &'a PointSetup,
    pub solution: &'a PointSolution,
}

impl PointModel<'_> {
    fn perturbation(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Vec<C> {
        let s = self.setup;
        let mut dh: Vec<C> = match kind {
            TrialKind::Random => gaussian_vec(rng, s.n_gamma()),
            _ => {
                let ph = unit_phase(rng);
                self.solution.z_gamma.iter().zip(&s.q1_sq).map(|(z, q)| z / *q * ph).collect()
            }
        };
        let nsq = s.data_norm_sq(&dh);
        if nsq > 0.0 {
            let inv = 1.0 / nsq.sqrt();
            dh.iter_mut().for_each(|v| *v *= inv);
        }
        dh
    }

    fn noise(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Vec<C> {
        let s = self.setup;
        match kind {
            TrialKind::ExtremalNoise => {
                let n2 = s.noise_norm_sq(&self.solution.u_hat).unwrap_or(0.0);
                let nu = rademacher(rng);
                let f = if n2 > 0.0 { nu / n2.sqrt() } else { 0.0 };
                self.solution.u_hat.iter().zip(&s.r).map(|(u, r)| u / (r * r) * f).collect()
            }
            _ => {
                // Uncorrelated: E|η_k|² = 1/(N r_k²).
                let nobs = s.n_obs() as f64;
                s.r.iter().map(|r| gaussian(rng) * (1.0 / (2.0 * nobs * r * r)).sqrt()).collect()
            }
        }
    }
}

impl WorstCaseModel for PointModel<'_> {
    fn sigma_sq(&self) -> f64 {
        self.solution.sigma * self.solution.sigma
    }

    fn trial_error(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Result<C> {
        let s = self.setup;
        let dh = self.perturbation(kind, rng);
        let h: Vec<C> = s.h0.iter().zip(&dh).map(|(a, b)| a + b).collect();
        let phi = s.simulate(&h)?;
        let y: Vec<C> = s.observe(&phi).iter().zip(self.noise(kind, rng)).map(|(a, b)| a + b).collect();
        Ok(s.functional_value(&phi) - point_estimate(self.solution, &y)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_grid, ClosedCurve};

    fn setup(obs: Vec<Point>) -> Result<PointSetup> {
        let g = curve_grid(&ClosedCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap(), 32).unwrap();
        let n = obs.len();
        PointSetup::new(
            &g,
            WaveNumber::new(1.5, 0.0).unwrap(),
            1.0,
            |_| 1.0,
            |_| C::new(1.0, 0.0),
            obs,
            vec![1.0; n],
            vec![[0.0, -2.0]],
            vec![C::new(1.0, 0.0)],
        )
    }

    #[test]
    fn point_inside_the_obstacle_is_rejected() {
        assert!(setup(vec![[0.1, 0.0]]).is_err());
    }

    #[test]
    fn coinciding_points_are_rejected() {
        assert!(matches!(setup(vec![[0.0, -2.0]]), Err(Error::SeparationViolation { .. })));
    }

    #[test]
    fn system_has_the_documented_size() {
        let s = setup(vec![[2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(s.system_matrix().nrows(), 2 * 32 + 2);
    }
}
