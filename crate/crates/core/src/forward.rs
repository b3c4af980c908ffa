//! Exterior Neumann solvers: the combined-field boundary integral equation
//! on analytic curves (outgoing and incoming), the separation-of-variables
//! disk solution, and the DtN-truncated annulus finite-volume solver.
//!
//! Boundary integral convention: `ν` points into the exterior, the field is
//! `u = 𝒲φ − 𝒱g` with `φ = u|_Γ`, `g = ∂_ν u|_Γ`, and the trace equation is
//! `(I − K − iηT)φ = −Sg − iη(g + K′g)`, uniquely solvable when `η Re k > 0`.
//! The incoming problem uses the `−k̄` kernels with the coupling sign flipped.
//!
//! Annulus convention: the weak form `a(ψ, θ) = ∫ f θ̄ + ∫_Γ g θ̄` with the
//! DtN term on `Γ_R`, i.e. `g = ∂ψ/∂ν` for `ν` leaving the annulus, which on
//! `Γ` is `g = −∂ψ/∂r`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rustfft::FftPlanner;

use crate::dtn::{dtn_symbols, exterior_extend, FourierTrace, Radiation};
use crate::error::{check_len, Error, Result};
use crate::geometry::{AnnulusSpec, ClosedCurveGrid};
use crate::linalg::{DenseSolver, Tridiagonal};
use crate::potentials::{assemble_boundary_ops, eval_layer, eval_layer_normal_deriv, BoundaryDensity, BoundaryOperatorSet, LayerKind};
use crate::specfun::{hankel_log_derivatives, hankel_ratios};
use crate::{Point, WaveNumber};

const I: C = C::new(0.0, 1.0);

/// Default coupling parameter for `Re k > 0`.
pub const DEFAULT_ETA: f64 = 1.0;

/// Kernel wavenumber for a radiation direction: `k` or `−k̄`.
pub fn kernel_wavenumber(k: WaveNumber, radiation: Radiation) -> WaveNumber {
    match radiation {
        Radiation::Outgoing => k,
        Radiation::Incoming => k.adjoint(),
    }
}

/// Signed coupling `iη` (outgoing) or `−iη` (incoming).
fn coupling(eta: f64, radiation: Radiation) -> C {
    match radiation {
        Radiation::Outgoing => I * eta,
        Radiation::Incoming => -I * eta,
    }
}

/// `I − K − c T` with `c = ±iη`.
pub fn cfie_matrix(ops: &BoundaryOperatorSet, eta: f64, radiation: Radiation) -> DMatrix<C> {
    let n = ops.s.nrows();
    let c = coupling(eta, radiation);
    DMatrix::<C>::identity(n, n) - &ops.k - &ops.t * c
}

/// The map `g ↦ −Sg − c(g + K′g)`.
pub fn cfie_rhs_matrix(ops: &BoundaryOperatorSet, eta: f64, radiation: Radiation) -> DMatrix<C> {
    let n = ops.s.nrows();
    let c = coupling(eta, radiation);
    -&ops.s - (DMatrix::<C>::identity(n, n) + &ops.kp) * c
}

/// A factored CFIE system on one grid, reusable for many right-hand sides.
pub struct CfieSystem {
    pub grid: ClosedCurveGrid,
    /// Operators at the kernel wavenumber (`k` or `−k̄`).
    pub ops: BoundaryOperatorSet,
    pub k: WaveNumber,
    pub eta: f64,
    pub radiation: Radiation,
    rhs: DMatrix<C>,
    solver: DenseSolver,
}

impl CfieSystem {
    /// Assembles and factors. `η = 0` is accepted (the caller vouches that
    /// `k` is not an interior eigenvalue); `η Re k < 0` is refused.
    pub fn new(grid: &ClosedCurveGrid, k: WaveNumber, eta: f64, radiation: Radiation) -> Result<Self> {
        if !eta.is_finite() || eta * k.value().re < 0.0 {
            return Err(Error::domain(format!("coupling needs η·Re k ≥ 0, got η = {eta}, k = {k}")));
        }
        let ops = assemble_boundary_ops(grid, kernel_wavenumber(k, radiation))?;
        let a = cfie_matrix(&ops, eta, radiation);
        let rhs = cfie_rhs_matrix(&ops, eta, radiation);
        let solver = DenseSolver::new(a, "combined-field boundary equation")?;
        Ok(CfieSystem { grid: grid.clone(), ops, k, eta, radiation, rhs, solver })
    }

    pub fn kernel_wavenumber(&self) -> WaveNumber {
        kernel_wavenumber(self.k, self.radiation)
    }

    /// 1-norm condition estimate of the system matrix.
    pub fn condition(&self) -> f64 {
        self.solver.condition()
    }

    /// `−Sg − c(g + K′g)`.
    pub fn rhs_matrix(&self) -> &DMatrix<C> {
        &self.rhs
    }

    /// Boundary trace `φ` for Neumann data `g`.
    pub fn trace(&self, g: &BoundaryDensity) -> Result<BoundaryDensity> {
        check_len(self.grid.len(), g.len())?;
        Ok(self.solver.solve(&(&self.rhs * g)))
    }

    /// Solves `(system) x = b` for an arbitrary right-hand side.
    pub fn solve_raw(&self, b: &DVector<C>) -> DVector<C> {
        self.solver.solve(b)
    }

    pub fn solve(&self, g: &BoundaryDensity) -> Result<ExteriorSolution> {
        let trace = self.trace(g)?;
        Ok(ExteriorSolution {
            grid: self.grid.clone(),
            k: self.k,
            radiation: self.radiation,
            trace,
            neumann: g.clone(),
        })
    }
}

/// Boundary data and representation `u = 𝒲φ − 𝒱g` of an exterior solution.
#[derive(Clone, Debug)]
pub struct ExteriorSolution {
    pub grid: ClosedCurveGrid,
    pub k: WaveNumber,
    pub radiation: Radiation,
    /// `φ = u|_Γ`.
    pub trace: BoundaryDensity,
    /// `g = ∂_ν u|_Γ`.
    pub neumann: BoundaryDensity,
}

impl ExteriorSolution {
    fn kw(&self) -> WaveNumber {
        kernel_wavenumber(self.k, self.radiation)
    }

    /// `u` at exterior targets separated from `Γ`.
    pub fn eval(&self, targets: &[Point]) -> Result<Vec<C>> {
        let w = eval_layer(&self.grid, &self.trace, LayerKind::Double, self.kw(), targets)?;
        let v = eval_layer(&self.grid, &self.neumann, LayerKind::Single, self.kw(), targets)?;
        Ok(w.iter().zip(&v).map(|(a, b)| a - b).collect())
    }

    /// `∂u/∂n` along the given unit vectors.
    pub fn eval_normal_deriv(&self, targets: &[Point], normals: &[Point]) -> Result<Vec<C>> {
        let w = eval_layer_normal_deriv(&self.grid, &self.trace, LayerKind::Double, self.kw(), targets, normals)?;
        let v = eval_layer_normal_deriv(&self.grid, &self.neumann, LayerKind::Single, self.kw(), targets, normals)?;
        Ok(w.iter().zip(&v).map(|(a, b)| a - b).collect())
    }

    /// `max_θ |∂_r u − iκu|·r` on the circle of radius `r` (κ = k outgoing,
    /// −k̄ incoming), sampled at `m` points.
    pub fn radiation_residual(&self, center: Point, r: f64, m: usize) -> Result<f64> {
        let pts: Vec<Point> = (0..m)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                [center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect();
        let nrm: Vec<Point> = (0..m)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let u = self.eval(&pts)?;
        let du = self.eval_normal_deriv(&pts, &nrm)?;
        let kk = self.kw().value();
        Ok(u.iter().zip(&du).map(|(u, d)| (d - I * kk * u).norm() * r).fold(0.0, f64::max))
    }
}

/// Outgoing exterior Neumann solution with coupling `η`.
pub fn solve_exterior_neumann(grid: &ClosedCurveGrid, k: WaveNumber, g: &BoundaryDensity, eta: f64) -> Result<ExteriorSolution> {
    CfieSystem::new(grid, k, eta, Radiation::Outgoing)?.solve(g)
}

/// Incoming (adjoint) exterior Neumann solution with `−k̄` kernels.
pub fn solve_exterior_neumann_adjoint(grid: &ClosedCurveGrid, k: WaveNumber, g: &BoundaryDensity, eta: f64) -> Result<ExteriorSolution> {
    CfieSystem::new(grid, k, eta, Radiation::Incoming)?.solve(g)
}

/// Separation-of-variables solution outside the disk `|x| < a` with
/// `∂_r u = g` on `r = a`: `u = Σ g_n H_n(κr)/(κH_n′(κa)) e^{inθ}` with
/// `(κ, H) = (k, H^(1))` outgoing or `(k̄, H^(2))` incoming.
#[derive(Clone, Debug)]
pub struct DiskSolution {
    pub a: f64,
    pub k: WaveNumber,
    pub radiation: Radiation,
    pub g: FourierTrace,
    /// `H_n(κa)/(κH_n′(κa))` for `n = 0..=N_f`.
    impedance: Vec<C>,
}

pub fn disk_neumann_exact(a: f64, k: WaveNumber, g: &FourierTrace, radiation: Radiation) -> Result<DiskSolution> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("disk radius must be positive, got {a}")));
    }
    let kk = radiation.effective(k);
    let ld = hankel_log_derivatives(radiation.hankel_kind(), g.n_f(), kk * a)?;
    let impedance = ld.iter().map(|l| 1.0 / (kk * l)).collect();
    Ok(DiskSolution { a, k, radiation, g: FourierTrace { radius: a, coeffs: g.coeffs.clone() }, impedance })
}

impl DiskSolution {
    fn parts(&self, p: Point) -> Result<(f64, f64, Vec<C>, C)> {
        let r = p[0].hypot(p[1]);
        if r < self.a * (1.0 - 1e-14) {
            return Err(Error::domain(format!("point at r = {r} lies inside the disk of radius {}", self.a)));
        }
        let kk = self.radiation.effective(self.k);
        let ratios = hankel_ratios(self.radiation.hankel_kind(), self.g.n_f(), kk * r, kk * self.a)?;
        Ok((r, p[1].atan2(p[0]), ratios, kk))
    }

    pub fn eval(&self, p: Point) -> Result<C> {
        let (_, th, ratios, _) = self.parts(p)?;
        Ok(self
            .g
            .modes()
            .map(|(n, c)| {
                let m = n.unsigned_abs() as usize;
                c * self.impedance[m] * ratios[m] * C::new(0.0, n as f64 * th).exp()
            })
            .sum())
    }

    /// `∂_r u`.
    pub fn eval_radial(&self, p: Point) -> Result<C> {
        let (r, th, ratios, kk) = self.parts(p)?;
        let ld = hankel_log_derivatives(self.radiation.hankel_kind(), self.g.n_f(), kk * r)?;
        Ok(self
            .g
            .modes()
            .map(|(n, c)| {
                let m = n.unsigned_abs() as usize;
                c * self.impedance[m] * ratios[m] * kk * ld[m] * C::new(0.0, n as f64 * th).exp()
            })
            .sum())
    }

    /// Trace on `r = a` in Fourier form.
    pub fn boundary_trace(&self) -> FourierTrace {
        let coeffs = self.g.modes().map(|(n, c)| c * self.impedance[n.unsigned_abs() as usize]).collect();
        FourierTrace { radius: self.a, coeffs }
    }
}

/// Nodal field on an annulus grid, ring-major (`index(i, j)`).
#[derive(Clone, Debug)]
pub struct AnnulusField {
    pub spec: AnnulusSpec,
    pub radiation: Radiation,
    pub k: WaveNumber,
    pub values: Vec<C>,
}

impl AnnulusField {
    pub fn at(&self, i: usize, j: usize) -> C {
        self.values[self.spec.index(i, j)]
    }

    pub fn ring(&self, i: usize) -> &[C] {
        let nt = self.spec.n_theta;
        &self.values[i * nt..(i + 1) * nt]
    }

    /// Fourier trace on `Γ_R`.
    pub fn outer_trace(&self) -> Result<FourierTrace> {
        FourierTrace::from_samples(self.spec.big_r, self.ring(self.spec.n_r), self.spec.n_f)
    }

    /// Value at `r ≥ R` through the exterior extension of the outer trace.
    pub fn extend(&self, p: Point) -> Result<C> {
        exterior_extend(self.radiation, self.k, &self.outer_trace()?, p)
    }
}

/// Lumped finite-volume weights `Δθ·w_i·r_i` (trapezoid in `r`), the
/// discrete area element of every annulus integral.
pub fn annulus_mass(spec: &AnnulusSpec) -> Vec<f64> {
    let (h, dt) = (spec.h(), spec.dtheta());
    let mut m = vec![0.0; spec.n_nodes()];
    for i in 0..=spec.n_r {
        let w = if i == 0 || i == spec.n_r { h / 2.0 } else { h };
        for j in 0..spec.n_theta {
            m[spec.index(i, j)] = dt * w * spec.radius(i);
        }
    }
    m
}

/// Discrete annulus operator: the finite-volume form of
/// `−(Δ + κ²)` with the truncated DtN condition on `Γ_R`, diagonalized by the
/// DFT in `θ` into one tridiagonal system per angular frequency.
///
/// Nodal equations: `(Aψ)_{ij} = Δθ w_i r_i f_{ij} + δ_{i0} a Δθ g_j`, with
/// `A` complex symmetric; the incoming operator is exactly `conj(A)`, so
/// `a*(v, u) = conj(a(u, v))` holds to rounding.
pub struct AnnulusOperator {
    pub spec: AnnulusSpec,
    pub k: WaveNumber,
    pub radiation: Radiation,
    /// `(sub/super-diagonal, diagonal)` of each DFT mode.
    bands: Vec<(Vec<C>, Vec<C>)>,
    factors: Vec<Tridiagonal>,
    mass: Vec<f64>,
}

impl AnnulusOperator {
    pub fn new(spec: &AnnulusSpec, k: WaveNumber, radiation: Radiation) -> Result<Self> {
        let kk = radiation.effective(k);
        let sym = dtn_symbols(radiation, k, spec.big_r, spec.n_f)?;
        let (nr, nt, h, dt) = (spec.n_r, spec.n_theta, spec.h(), spec.dtheta());
        let mut bands = Vec::with_capacity(nt);
        let mut factors = Vec::with_capacity(nt);
        for m in 0..nt {
            let n = if m <= nt / 2 { m as i64 } else { m as i64 - nt as i64 };
            let lam = 2.0 - 2.0 * (m as f64 * dt).cos();
            let off: Vec<C> = (0..nr).map(|i| C::new(-dt * (spec.radius(i) + h / 2.0) / h, 0.0)).collect();
            let diag: Vec<C> = (0..=nr)
                .map(|i| {
                    let r = spec.radius(i);
                    let w = if i == 0 || i == nr { h / 2.0 } else { h };
                    let mut d = 0.0;
                    if i > 0 {
                        d += dt * (r - h / 2.0) / h;
                    }
                    if i < nr {
                        d += dt * (r + h / 2.0) / h;
                    }
                    let mut v = C::new(d + w * lam / (r * dt), 0.0) - kk * kk * (dt * w * r);
                    if i == nr && n.unsigned_abs() as usize <= spec.n_f {
                        v -= sym[n.unsigned_abs() as usize] * (spec.big_r * dt);
                    }
                    v
                })
                .collect();
            factors.push(Tridiagonal::factor(off.clone(), diag.clone(), off.clone())?);
            bands.push((off, diag));
        }
        Ok(AnnulusOperator { spec: spec.clone(), k, radiation, bands, factors, mass: annulus_mass(spec) })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn fft_rings(&self, v: &mut [C], inverse: bool) {
        let nt = self.spec.n_theta;
        let mut planner = FftPlanner::<f64>::new();
        let plan = if inverse { planner.plan_fft_inverse(nt) } else { planner.plan_fft_forward(nt) };
        for ring in v.chunks_mut(nt) {
            plan.process(ring);
        }
        if inverse {
            let s = 1.0 / nt as f64;
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Runs `f` on every mode's radial column of the DFT of `v`.
    fn per_mode(&self, v: &[C], f: impl Fn(usize, &mut [C])) -> Vec<C> {
        let (nt, nrings) = (self.spec.n_theta, self.spec.n_rings());
        let mut w = v.to_vec();
        self.fft_rings(&mut w, false);
        let mut col = vec![C::new(0.0, 0.0); nrings];
        for m in 0..nt {
            for i in 0..nrings {
                col[i] = w[i * nt + m];
            }
            f(m, &mut col);
            for i in 0..nrings {
                w[i * nt + m] = col[i];
            }
        }
        self.fft_rings(&mut w, true);
        w
    }

    /// `A⁻¹ b` for a nodal load vector `b`.
    pub fn solve_load(&self, load: &[C]) -> Result<Vec<C>> {
        check_len(self.spec.n_nodes(), load.len())?;
        Ok(self.per_mode(load, |m, col| self.factors[m].solve_in_place(col)))
    }

    /// `A u`.
    pub fn apply(&self, u: &[C]) -> Result<Vec<C>> {
        check_len(self.spec.n_nodes(), u.len())?;
        Ok(self.per_mode(u, |m, col| {
            let (off, diag) = &self.bands[m];
            let n = col.len();
            let x = col.to_vec();
            for i in 0..n {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += off[i] * x[i + 1];
                }
                col[i] = s;
            }
        }))
    }

    /// Discrete sesquilinear form `a(u, v) = Σ conj(v)·(Au)`.
    pub fn form(&self, u: &[C], v: &[C]) -> Result<C> {
        check_len(self.spec.n_nodes(), v.len())?;
        let au = self.apply(u)?;
        Ok(au.iter().zip(v).map(|(a, b)| a * b.conj()).sum())
    }

    /// Load vector `Δθ w_i r_i f + a Δθ g` on ring 0.
    pub fn load(&self, forcing: &[C], neumann: &[C]) -> Result<Vec<C>> {
        check_len(self.spec.n_nodes(), forcing.len())?;
        check_len(self.spec.n_theta, neumann.len())?;
        let mut b: Vec<C> = forcing.iter().zip(&self.mass).map(|(f, m)| f * *m).collect();
        let s = self.spec.a * self.spec.dtheta();
        for (j, g) in neumann.iter().enumerate() {
            b[j] += g * s;
        }
        Ok(b)
    }

    pub fn solve(&self, forcing: &[C], neumann: &[C]) -> Result<AnnulusField> {
        let values = self.solve_load(&self.load(forcing, neumann)?)?;
        Ok(AnnulusField { spec: self.spec.clone(), radiation: self.radiation, k: self.k, values })
    }
}

/// One-shot annulus solve: `−(Δ + κ²)ψ = f`, `∂ψ/∂ν = g` on `r = a` (ν out
/// of the annulus), DtN on `Γ_R`.
pub fn solve_annulus_dtn(spec: &AnnulusSpec, k: WaveNumber, radiation: Radiation, forcing: &[C], neumann: &[C]) -> Result<AnnulusField> {
    AnnulusOperator::new(spec, k, radiation)?.solve(forcing, neumann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_grid, ClosedCurve};

    #[test]
    fn negative_coupling_is_refused() {
        let g = curve_grid(&ClosedCurve::circle([0.0, 0.0], 1.0).unwrap(), 16).unwrap();
        let k = WaveNumber::new(1.0, 0.0).unwrap();
        assert!(matches!(CfieSystem::new(&g, k, -1.0, Radiation::Outgoing), Err(Error::Domain(_))));
    }

    #[test]
    fn annulus_operator_inverts_its_own_apply() {
        let spec = AnnulusSpec::new(1.0, 2.0, 10, 16, 7).unwrap();
        let op = AnnulusOperator::new(&spec, WaveNumber::new(2.0, 0.1).unwrap(), Radiation::Outgoing).unwrap();
        let u: Vec<C> = (0..spec.n_nodes()).map(|i| C::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let back = op.solve_load(&op.apply(&u).unwrap()).unwrap();
        let err = u.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }
}
