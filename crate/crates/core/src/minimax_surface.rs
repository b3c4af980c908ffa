//! Minimax estimation from observations on open arcs.
//!
//! The state solves `(Δ + k²)φ = 0` outside an obstacle with boundary `Γ`,
//! `∂φ/∂ν = h` on `Γ`, outgoing at infinity; `h` is only known to satisfy
//! `∫_Γ q₁²|h − h₀|² ≤ 1`. On arcs `γ_i` in the exterior one observes
//!
//! `y_i^(r)(x) = ∫_{γ_i} [K_i^(r,1)(x, ξ) φ(ξ) + K_i^(r,2)(x, ξ) ∂_νφ(ξ)] dξ + noise`, `r = 1, 2`,
//!
//! with noise second moments bounded by `Σ_i Σ_r ∫ (r_i^(r))² E|η_i^(r)|² ≤ 1`.
//! The target is `l(φ) = ∫_{ω₀} l̄₀ φ`.
//!
//! The estimator weights come from a pair of exterior fields, written with
//! the unit-normalized potentials of [`crate::potentials`]:
//!
//! * `z`: incoming, `(Δ + k̄²)z = χ_{ω₀} l₀`, `∂_νz = 0` on `Γ`, jumps
//!   `[z] = ρ⁽¹⁾`, `[∂_νz] = ρ⁽²⁾` across each arc, where
//!   `ρ = K̃(p|_γ, ∂_νp|_γ)` composes the observation kernels;
//! * `p`: outgoing, `∂_νp = q₁⁻² z` on `Γ`, smooth across the arcs;
//!
//! so that `û^(r) = (r^(r))² ∫ [K^(r,1) p + K^(r,2) ∂_νp]`, `ĉ = ∫_Γ z̄ h₀`
//! and `σ² = l(p)`. Splitting `z = z_s + z_in` with
//! `z_in = Σ_i (𝒲_{γ_i}ρ⁽¹⁾ − 𝒱_{γ_i}ρ⁽²⁾) − N l₀` (jumps `[·] = (ν side) − (other side)`)
//! leaves `ψ = z_s|_Γ`, `χ = p|_Γ`, `φ⁽¹⁾ = p|_γ`, `φ⁽²⁾ = ∂_νp|_γ` as the
//! unknowns of one dense system built from the two combined-field equations
//! and the evaluation of `p` on the arcs.
//!
//! Kernels are separable, `K^(r,j)(x, ξ) = Σ_t a_t(x) b_t(ξ)`, parametrized
//! by the arc parameter `s ∈ [−1, 1]`. Factors `b_t` of `K^(r,2)` are
//! multiplied by `√(1 − s²)` so that the double-layer densities `ρ⁽¹⁾` vanish
//! at the arc endpoints.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dtn::Radiation;
use crate::error::{check_len, Error, Result};
use crate::forward::{cfie_matrix, cfie_rhs_matrix, ExteriorSolution};
use crate::geometry::{min_separation, ClosedCurveGrid, GeomObject, OpenArc, RegionSpec};
use crate::linalg::DenseSolver;
use crate::potentials::{
    arc_layer_matrix, arc_length, assemble_boundary_ops, layer_matrix, newton_potential, newton_potential_normal_deriv, ArcRule,
    BoundaryOperatorSet, LayerKind,
};
use crate::validation::{gaussian, gaussian_vec, rademacher, unit_phase, TrialKind, WorstCaseModel};
use crate::{Point, WaveNumber};

/// A factor of a separable kernel as a function of the arc parameter.
pub type ArcFactor = Arc<dyn Fn(f64) -> C + Send + Sync>;

/// Observation data on one arc: the two channels at the rule nodes.
pub type ArcData = [Vec<C>; 2];

fn zero() -> C {
    C::new(0.0, 0.0)
}

fn taper(s: f64) -> f64 {
    (1.0 - s * s).max(0.0).sqrt()
}

/// One term `a(x) b(ξ)` of a separable kernel, with nodal samples.
#[derive(Clone)]
pub struct KernelTerm {
    a: ArcFactor,
    b: ArcFactor,
    pub a_nodes: Vec<C>,
    pub b_nodes: Vec<C>,
}

impl fmt::Debug for KernelTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelTerm").field("nodes", &self.a_nodes.len()).finish_non_exhaustive()
    }
}

/// An observation arc with its quadrature, noise weights and kernels.
#[derive(Clone, Debug)]
pub struct SurfaceArc {
    pub arc: OpenArc,
    pub rule: ArcRule,
    /// `(r^(1))²` and `(r^(2))²` at the nodes.
    pub noise_sq: [Vec<f64>; 2],
    /// `terms[r][j]` spans `K^(r+1, j+1)`.
    terms: [[Vec<KernelTerm>; 2]; 2],
}

impl SurfaceArc {
    /// `m` nodes of the `s = cos θ` rule; noise weights must be positive on
    /// the closed arc.
    pub fn new(arc: OpenArc, m: usize, r1: impl Fn(f64) -> f64, r2: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::domain(format!("arc rule needs at least 4 nodes, got {m}")));
        }
        let rule = ArcRule::new(&arc, m);
        let check = |r: &dyn Fn(f64) -> f64| -> Result<Vec<f64>> {
            for s in [-1.0, 1.0] {
                let v = r(s);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!("noise weight must be positive on the closed arc, got {v} at s = {s}")));
                }
            }
            rule.s
                .iter()
                .map(|&s| {
                    let v = r(s);
                    if v > 0.0 && v.is_finite() {
                        Ok(v * v)
                    } else {
                        Err(Error::domain(format!("noise weight must be positive, got {v} at s = {s}")))
                    }
                })
                .collect()
        };
        let noise_sq = [check(&r1)?, check(&r2)?];
        Ok(SurfaceArc { arc, rule, noise_sq, terms: Default::default() })
    }

    /// Adds `a(x) b(ξ)` to `K^(r,j)`, `r, j ∈ {1, 2}`. For `j = 2` the stored
    /// factor is `√(1 − s²) b(s)`.
    pub fn with_term(
        mut self,
        r: usize,
        j: usize,
        a: impl Fn(f64) -> C + Send + Sync + 'static,
        b: impl Fn(f64) -> C + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(1..=2).contains(&r) || !(1..=2).contains(&j) {
            return Err(Error::domain(format!("kernel indices must be 1 or 2, got ({r}, {j})")));
        }
        let b: ArcFactor = if j == 2 { Arc::new(move |s| b(s) * taper(s)) } else { Arc::new(b) };
        let a: ArcFactor = Arc::new(a);
        let a_nodes = self.rule.s.iter().map(|&s| a(s)).collect();
        let b_nodes = self.rule.s.iter().map(|&s| b(s)).collect();
        self.terms[r - 1][j - 1].push(KernelTerm { a, b, a_nodes, b_nodes });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rule.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.s.is_empty()
    }

    /// Total number of kernel terms.
    pub fn n_terms(&self) -> usize {
        self.terms.iter().flatten().map(Vec::len).sum()
    }

    /// `K^(r,j)(x(s_x), ξ(s_ξ))` from the stored factors.
    pub fn kernel_at(&self, r: usize, j: usize, s_x: f64, s_xi: f64) -> C {
        self.terms[r - 1][j - 1].iter().map(|t| (t.a)(s_x) * (t.b)(s_xi)).sum()
    }

    /// The two observation channels of a state with arc traces `φ`, `∂_νφ`.
    pub fn observe(&self, phi: &[C], dphi: &[C]) -> ArcData {
        let w = &self.rule.weights;
        let mut out = [vec![zero(); self.len()], vec![zero(); self.len()]];
        for (r, o) in out.iter_mut().enumerate() {
            for (j, f) in [phi, dphi].into_iter().enumerate() {
                for t in &self.terms[r][j] {
                    let m: C = t.b_nodes.iter().zip(f).zip(w).map(|((b, v), w)| b * v * *w).sum();
                    o.iter_mut().zip(&t.a_nodes).for_each(|(x, a)| *x += a * m);
                }
            }
        }
        out
    }

    /// `Σ_r ∫ conj(u^(r)) v^(r)`.
    pub fn inner(&self, u: &ArcData, v: &ArcData) -> C {
        let w = &self.rule.weights;
        (0..2).map(|r| u[r].iter().zip(&v[r]).zip(w).map(|((a, b), w)| a.conj() * b * *w).sum::<C>()).sum()
    }

    /// `Σ_r ∫ |u^(r)|² / (r^(r))²`.
    pub fn noise_norm_sq(&self, u: &ArcData) -> f64 {
        let w = &self.rule.weights;
        (0..2).map(|r| u[r].iter().zip(&self.noise_sq[r]).zip(w).map(|((a, q), w)| a.norm_sqr() / q * w).sum::<f64>()).sum()
    }

    /// Kernel index `j` whose conjugated factors form the basis of density
    /// `m` (0: `[z]`, 1: `[∂_νz]`), and the sign in front.
    fn density_source(m: usize) -> (usize, f64) {
        if m == 0 {
            (1, 1.0)
        } else {
            (0, -1.0)
        }
    }

    /// Basis of density `m` at parameter `s`: `conj(b_t(s))` over the terms
    /// of `K^(r, j_m)`, `r` outer.
    pub fn density_basis(&self, m: usize, s: f64) -> Vec<C> {
        let (j, _) = Self::density_source(m);
        (0..2).flat_map(|r| self.terms[r][j].iter().map(move |t| (t.b)(s).conj())).collect()
    }

    fn density_basis_nodes(&self, m: usize) -> Vec<Vec<C>> {
        let (j, _) = Self::density_source(m);
        (0..2).flat_map(|r| self.terms[r][j].iter().map(|t| t.b_nodes.iter().map(|b| b.conj()).collect())).collect()
    }

    /// Jump densities generated by observation weights `u`:
    /// `[z] = Σ_r ∫ conj(K^(r,2)(ξ, ·)) u^(r)(ξ) dξ`,
    /// `[∂_νz] = −Σ_r ∫ conj(K^(r,1)(ξ, ·)) u^(r)(ξ) dξ`.
    pub fn jumps_from_weights(&self, u: &ArcData) -> JumpDensity {
        let w = &self.rule.weights;
        let coeffs = [0, 1].map(|m| {
            let (j, sign) = Self::density_source(m);
            (0..2)
                .flat_map(|r| {
                    self.terms[r][j]
                        .iter()
                        .map(move |t| t.a_nodes.iter().zip(&u[r]).zip(w).map(|((a, v), w)| a.conj() * v * *w).sum::<C>() * sign)
                })
                .collect()
        });
        JumpDensity { coeffs }
    }

    /// The composed kernels `K̃^(m,j)`, `m, j ∈ {1, 2}`, stored separably.
    pub fn ktilde(&self) -> [[ComposedKernel; 2]; 2] {
        let w = &self.rule.weights;
        let block = |m: usize, j: usize| {
            let (jl, sign) = Self::density_source(m);
            let left = self.density_basis_nodes(m);
            let right: Vec<Vec<C>> = (0..2).flat_map(|r| self.terms[r][j].iter().map(|t| t.b_nodes.clone())).collect();
            let mut coef = DMatrix::zeros(left.len(), right.len());
            let (mut row, mut col0) = (0, 0);
            for r in 0..2 {
                for tl in &self.terms[r][jl] {
                    for (c, tr) in self.terms[r][j].iter().enumerate() {
                        let v: C = (0..self.len()).map(|q| tl.a_nodes[q].conj() * tr.a_nodes[q] * (self.noise_sq[r][q] * w[q])).sum();
                        coef[(row, col0 + c)] = v * sign;
                    }
                    row += 1;
                }
                col0 += self.terms[r][j].len();
            }
            ComposedKernel { left, right, coef }
        };
        [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]]
    }
}

/// A separable composed kernel `K̃(x_q, η_q′) = Σ_{a,b} left_a(x_q) coef_{ab} right_b(η_q′)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedKernel {
    pub left: Vec<Vec<C>>,
    pub right: Vec<Vec<C>>,
    pub coef: DMatrix<C>,
}

impl ComposedKernel {
    pub fn value(&self, q: usize, q2: usize) -> C {
        let mut acc = zero();
        for (a, l) in self.left.iter().enumerate() {
            for (b, r) in self.right.iter().enumerate() {
                acc += l[q] * self.coef[(a, b)] * r[q2];
            }
        }
        acc
    }

    /// `Σ_b coef_{ab} ∫ right_b f` — the coefficients of `∫ K̃(·, η) f(η) dη`
    /// in the left basis.
    pub fn coefficients(&self, weights: &[f64], f: &[C]) -> Vec<C> {
        let mom: Vec<C> = self.right.iter().map(|r| r.iter().zip(f).zip(weights).map(|((b, v), w)| b * v * *w).sum()).collect();
        (0..self.left.len()).map(|a| mom.iter().enumerate().map(|(b, m)| self.coef[(a, b)] * m).sum()).collect()
    }

    /// Nyström matrix `K̃(x_q, η_q′) w_q′`.
    pub fn nodal_matrix(&self, weights: &[f64]) -> DMatrix<C> {
        let m = weights.len();
        DMatrix::from_fn(m, m, |q, q2| self.value(q, q2) * weights[q2])
    }
}

/// Jump densities `([z], [∂_νz])` on one arc in coefficient form over the
/// arc's density bases.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpDensity {
    pub coeffs: [Vec<C>; 2],
}

impl JumpDensity {
    pub fn zeros(arc: &SurfaceArc) -> Self {
        JumpDensity { coeffs: [0, 1].map(|m| vec![zero(); arc.density_basis(m, 0.0).len()]) }
    }

    /// Both densities at parameter `s`.
    pub fn at(&self, arc: &SurfaceArc, s: f64) -> [C; 2] {
        [0, 1].map(|m| arc.density_basis(m, s).iter().zip(&self.coeffs[m]).map(|(b, c)| b * c).sum())
    }

    /// Both densities at the rule nodes.
    pub fn nodal(&self, arc: &SurfaceArc) -> [Vec<C>; 2] {
        [0, 1].map(|m| {
            let basis = arc.density_basis_nodes(m);
            (0..arc.len()).map(|q| basis.iter().zip(&self.coeffs[m]).map(|(b, c)| b[q] * c).sum()).collect()
        })
    }

    fn add(&mut self, other: &JumpDensity) {
        for m in 0..2 {
            self.coeffs[m].iter_mut().zip(&other.coeffs[m]).for_each(|(a, b)| *a += b);
        }
    }
}

/// `K̃` for every arc of the setup.
pub fn build_ktilde(setup: &SurfaceSetup) -> Vec<[[ComposedKernel; 2]; 2]> {
    setup.arcs.iter().map(SurfaceArc::ktilde).collect()
}

/// `l(φ) = ∫_{ω₀} l̄₀ φ` by the region's tensor rule.
#[derive(Clone)]
pub struct SurfaceFunctional {
    pub region: RegionSpec,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub l0: Vec<C>,
    l0_fn: Arc<dyn Fn(Point) -> C + Send + Sync>,
}

impl fmt::Debug for SurfaceFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceFunctional").field("region", &self.region).finish_non_exhaustive()
    }
}

impl SurfaceFunctional {
    pub fn new(region: RegionSpec, l0: impl Fn(Point) -> C + Send + Sync + 'static) -> Self {
        let (points, weights) = region.quadrature();
        let l0v = points.iter().map(|p| l0(*p)).collect();
        SurfaceFunctional { region, points, weights, l0: l0v, l0_fn: Arc::new(l0) }
    }

    /// `Σ w conj(l₀) v` over the quadrature points.
    pub fn apply(&self, values: &[C]) -> C {
        self.l0.iter().zip(values).zip(&self.weights).map(|((l, v), w)| l.conj() * v * *w).sum()
    }

    fn scale(&self, values: &[C]) -> f64 {
        self.l0.iter().zip(values).zip(&self.weights).map(|((l, v), w)| l.norm() * v.norm() * w).sum()
    }
}

/// Layer matrices from `Γ` to one arc's nodes at wavenumber `k`.
#[derive(Clone, Debug)]
struct GammaToArc {
    w: DMatrix<C>,
    v: DMatrix<C>,
    dw: DMatrix<C>,
    dv: DMatrix<C>,
}

/// Layer matrices from one arc's nodes to `Γ` at wavenumber `−k̄`.
#[derive(Clone, Debug)]
struct ArcToGamma {
    w: DMatrix<C>,
    v: DMatrix<C>,
    dw: DMatrix<C>,
    dv: DMatrix<C>,
}

/// Everything needed to estimate `l(φ)` from arc observations.
pub struct SurfaceSetup {
    pub grid: ClosedCurveGrid,
    pub k: WaveNumber,
    pub eta: f64,
    pub arcs: Vec<SurfaceArc>,
    pub functional: SurfaceFunctional,
    /// `q₁²` at the `Γ` nodes.
    pub q1_sq: Vec<f64>,
    /// `h₀` at the `Γ` nodes.
    pub h0: Vec<C>,
    pub ops_out: BoundaryOperatorSet,
    pub ops_in: BoundaryOperatorSet,
    g2a: Vec<GammaToArc>,
    a2g: Vec<ArcToGamma>,
    ktilde: Vec<[[ComposedKernel; 2]; 2]>,
    /// `Γ → ω₀` double/single layer matrices at `k`.
    g2w: (DMatrix<C>, DMatrix<C>),
    /// `N_{−k̄} l₀` and its normal derivative on `Γ`.
    newton: (DVector<C>, DVector<C>),
    /// Maps arc unknowns `(φ⁽¹⁾, φ⁽²⁾)` to `z_in|_Γ` and `∂_ν z_in|_Γ`.
    t_phi: DMatrix<C>,
    d_phi: DMatrix<C>,
    forward: OnceLock<Result<DenseSolver>>,
    adjoint: OnceLock<Result<DenseSolver>>,
    system: OnceLock<Result<DenseSolver>>,
}

impl fmt::Debug for SurfaceSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceSetup")
            .field("n_gamma", &self.grid.len())
            .field("k", &self.k)
            .field("eta", &self.eta)
            .field("arcs", &self.arcs.len())
            .finish_non_exhaustive()
    }
}

fn diag(v: &[f64]) -> DMatrix<C> {
    DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|x| C::new(*x, 0.0))))
}

fn cached(cell: &OnceLock<Result<DenseSolver>>, build: impl FnOnce() -> Result<DenseSolver>) -> Result<&DenseSolver> {
    cell.get_or_init(build).as_ref().map_err(Clone::clone)
}

impl SurfaceSetup {
    /// Checks separation of `Γ`, the arcs and `ω₀`, then assembles every
    /// operator block. `η = 0` is accepted for diagnostics; `η Re k < 0` is not.
    pub fn new(
        grid: &ClosedCurveGrid,
        k: WaveNumber,
        eta: f64,
        q1: impl Fn(Point) -> f64,
        h0: impl Fn(Point) -> C,
        arcs: Vec<SurfaceArc>,
        functional: SurfaceFunctional,
    ) -> Result<Self> {
        if !eta.is_finite() || eta * k.value().re < 0.0 {
            return Err(Error::domain(format!("coupling needs η·Re k ≥ 0, got η = {eta}, k = {k}")));
        }
        let mut objects = vec![GeomObject::Curve(&grid.curve), GeomObject::Region(&functional.region)];
        objects.extend(arcs.iter().map(|a| GeomObject::Arc(&a.arc)));
        min_separation(&objects, None)?;

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

        let mut g2a = Vec::with_capacity(arcs.len());
        let mut a2g = Vec::with_capacity(arcs.len());
        for a in &arcs {
            let (pts, nrm) = (&a.rule.points, &a.rule.normals);
            g2a.push(GammaToArc {
                w: layer_matrix(grid, LayerKind::Double, k, pts, None)?,
                v: layer_matrix(grid, LayerKind::Single, k, pts, None)?,
                dw: layer_matrix(grid, LayerKind::Double, k, pts, Some(nrm))?,
                dv: layer_matrix(grid, LayerKind::Single, k, pts, Some(nrm))?,
            });
            a2g.push(ArcToGamma {
                w: arc_layer_matrix(&a.rule, LayerKind::Double, kin, &grid.points, None)?,
                v: arc_layer_matrix(&a.rule, LayerKind::Single, kin, &grid.points, None)?,
                dw: arc_layer_matrix(&a.rule, LayerKind::Double, kin, &grid.points, Some(&grid.normals))?,
                dv: arc_layer_matrix(&a.rule, LayerKind::Single, kin, &grid.points, Some(&grid.normals))?,
            });
        }
        let ktilde: Vec<_> = arcs.iter().map(SurfaceArc::ktilde).collect();
        let kt: Vec<[[DMatrix<C>; 2]; 2]> = ktilde
            .iter()
            .zip(&arcs)
            .map(|(b, a)| [0, 1].map(|m| [0, 1].map(|j| b[m][j].nodal_matrix(&a.rule.weights))))
            .collect();

        let n = grid.len();
        let n_arc: usize = arcs.iter().map(|a| 2 * a.len()).sum();
        let mut t_phi = DMatrix::zeros(n, n_arc);
        let mut d_phi = DMatrix::zeros(n, n_arc);
        let mut off = 0;
        for ((a, m), kt) in arcs.iter().zip(&a2g).zip(&kt) {
            let ma = a.len();
            for j in 0..2 {
                let cols = off + j * ma;
                t_phi.view_mut((0, cols), (n, ma)).copy_from(&(&m.w * &kt[0][j] - &m.v * &kt[1][j]));
                d_phi.view_mut((0, cols), (n, ma)).copy_from(&(&m.dw * &kt[0][j] - &m.dv * &kt[1][j]));
            }
            off += 2 * ma;
        }

        let fq = &functional.points;
        let g2w = (
            layer_matrix(grid, LayerKind::Double, k, fq, None)?,
            layer_matrix(grid, LayerKind::Single, k, fq, None)?,
        );
        let src = functional.l0_fn.clone();
        let nv = newton_potential(&functional.region, &|p| src(p), kin, &grid.points)?;
        let nd = newton_potential_normal_deriv(&functional.region, &|p| src(p), kin, &grid.points, &grid.normals)?;
        let newton = (DVector::from_vec(nv), DVector::from_vec(nd));

        Ok(SurfaceSetup {
            grid: grid.clone(),
            k,
            eta,
            arcs,
            functional,
            q1_sq,
            h0,
            ops_out,
            ops_in,
            g2a,
            a2g,
            ktilde,
            g2w,
            newton,
            t_phi,
            d_phi,
            forward: OnceLock::new(),
            adjoint: OnceLock::new(),
            system: OnceLock::new(),
        })
    }

    pub fn n_gamma(&self) -> usize {
        self.grid.len()
    }

    /// Size of the dense system.
    pub fn n_unknowns(&self) -> usize {
        2 * self.n_gamma() + self.arcs.iter().map(|a| 2 * a.len()).sum::<usize>()
    }

    /// The composed kernels of every arc.
    pub fn ktilde(&self) -> &[[[ComposedKernel; 2]; 2]] {
        &self.ktilde
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
        cached(&self.system, || DenseSolver::new(self.system_matrix(), "arc-observation estimation system"))
    }

    /// The dense matrix over `(ψ, χ, φ⁽¹⁾_1, φ⁽²⁾_1, …)`.
    pub fn system_matrix(&self) -> DMatrix<C> {
        let n = self.n_gamma();
        let tot = self.n_unknowns();
        let na = tot - 2 * n;
        let q = diag(&self.q_inv());
        let a_in = cfie_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let r_in = cfie_rhs_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let a_out = cfie_matrix(&self.ops_out, self.eta, Radiation::Outgoing);
        let r_out = cfie_rhs_matrix(&self.ops_out, self.eta, Radiation::Outgoing);
        let rq = &r_out * &q;
        let qt = &q * &self.t_phi;

        let mut a = DMatrix::zeros(tot, tot);
        a.view_mut((0, 0), (n, n)).copy_from(&a_in);
        a.view_mut((0, 2 * n), (n, na)).copy_from(&(&r_in * &self.d_phi));
        a.view_mut((n, 0), (n, n)).copy_from(&(-&rq));
        a.view_mut((n, n), (n, n)).copy_from(&a_out);
        a.view_mut((n, 2 * n), (n, na)).copy_from(&(-(&rq * &self.t_phi)));
        let mut row = 2 * n;
        for (arc, g) in self.arcs.iter().zip(&self.g2a) {
            let m = arc.len();
            for (w, v) in [(&g.w, &g.v), (&g.dw, &g.dv)] {
                let vq = v * &q;
                a.view_mut((row, 0), (m, n)).copy_from(&vq);
                a.view_mut((row, n), (m, n)).copy_from(&(-w));
                a.view_mut((row, 2 * n), (m, na)).copy_from(&(v * &qt));
                for i in 0..m {
                    a[(row + i, row + i)] += C::new(1.0, 0.0);
                }
                row += m;
            }
        }
        a
    }

    /// Condition estimate of the dense system without the solve-time limit.
    pub fn system_condition(&self) -> f64 {
        DenseSolver::with_limit(self.system_matrix(), "condition probe", f64::INFINITY).map_or(f64::INFINITY, |s| s.condition())
    }

    /// Right-hand side for a fixed part `F` of the incoming field (`F|_Γ`,
    /// `∂_νF|_Γ`) and an additional Neumann datum for the outgoing field.
    fn system_rhs(&self, fv: &DVector<C>, fd: &DVector<C>, hx: &DVector<C>) -> DVector<C> {
        let n = self.n_gamma();
        let r_in = cfie_rhs_matrix(&self.ops_in, self.eta, Radiation::Incoming);
        let r_out = cfie_rhs_matrix(&self.ops_out, self.eta, Radiation::Outgoing);
        let g = DVector::from_iterator(n, (0..n).map(|j| fv[j] / self.q1_sq[j] + hx[j]));
        let mut b = DVector::zeros(self.n_unknowns());
        b.rows_mut(0, n).copy_from(&(-(&r_in * fd)));
        b.rows_mut(n, n).copy_from(&(&r_out * &g));
        let mut row = 2 * n;
        for (arc, m) in self.arcs.iter().zip(&self.g2a) {
            let len = arc.len();
            b.rows_mut(row, len).copy_from(&(-(&m.v * &g)));
            b.rows_mut(row + len, len).copy_from(&(-(&m.dv * &g)));
            row += 2 * len;
        }
        b
    }

    /// Solves the system for one fixed part and unpacks the unknowns.
    fn solve_with(&self, fv: &DVector<C>, fd: &DVector<C>, hx: &DVector<C>) -> Result<Unknowns> {
        let x = self.system_solver()?.solve(&self.system_rhs(fv, fd, hx));
        let n = self.n_gamma();
        let psi = x.rows(0, n).into_owned();
        let chi = x.rows(n, n).into_owned();
        let arc_part = x.rows(2 * n, x.len() - 2 * n).into_owned();
        let z_gamma = &psi + &self.t_phi * &arc_part + fv;
        let dz_in = &self.d_phi * &arc_part + fd;
        let neumann = DVector::from_iterator(n, (0..n).map(|j| z_gamma[j] / self.q1_sq[j] + hx[j]));
        let mut phi = Vec::with_capacity(self.arcs.len());
        let mut jumps = Vec::with_capacity(self.arcs.len());
        let mut off = 0;
        for (arc, kt) in self.arcs.iter().zip(&self.ktilde) {
            let m = arc.len();
            let f1: Vec<C> = arc_part.rows(off, m).iter().cloned().collect();
            let f2: Vec<C> = arc_part.rows(off + m, m).iter().cloned().collect();
            let w = &arc.rule.weights;
            let coeffs = [0, 1].map(|mm| {
                let a = kt[mm][0].coefficients(w, &f1);
                let b = kt[mm][1].coefficients(w, &f2);
                a.iter().zip(&b).map(|(x, y)| x + y).collect()
            });
            jumps.push(JumpDensity { coeffs });
            phi.push([f1, f2]);
            off += 2 * m;
        }
        Ok(Unknowns { psi, chi, phi, jumps, z_gamma, dz_in, neumann })
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

    /// Traces `(φ, ∂_νφ)` of an outgoing field at each arc's nodes.
    pub fn arc_traces(&self, field: &ExteriorSolution) -> Vec<[Vec<C>; 2]> {
        self.g2a
            .iter()
            .map(|m| {
                let f1 = &m.w * &field.trace - &m.v * &field.neumann;
                let f2 = &m.dw * &field.trace - &m.dv * &field.neumann;
                [f1.iter().cloned().collect(), f2.iter().cloned().collect()]
            })
            .collect()
    }

    /// Noise-free observations of an outgoing field.
    pub fn observe(&self, field: &ExteriorSolution) -> Vec<ArcData> {
        self.arcs.iter().zip(self.arc_traces(field)).map(|(a, [f1, f2])| a.observe(&f1, &f2)).collect()
    }

    /// `l(u)` for an outgoing field.
    pub fn functional_value(&self, field: &ExteriorSolution) -> C {
        let v = &self.g2w.0 * &field.trace - &self.g2w.1 * &field.neumann;
        self.functional.apply(v.as_slice())
    }

    /// `∫_Γ q₁²|δh|²`.
    pub fn data_norm_sq(&self, dh: &[C]) -> f64 {
        dh.iter().zip(&self.q1_sq).zip(&self.grid.weights).map(|((v, q), w)| v.norm_sqr() * q * w).sum()
    }

    /// `Σ_i Σ_r ∫ |u|²/r²`.
    pub fn noise_norm_sq(&self, u: &[ArcData]) -> Result<f64> {
        self.check_data(u)?;
        Ok(self.arcs.iter().zip(u).map(|(a, v)| a.noise_norm_sq(v)).sum())
    }

    fn check_data(&self, y: &[ArcData]) -> Result<()> {
        check_len(self.arcs.len(), y.len())?;
        for (a, v) in self.arcs.iter().zip(y) {
            check_len(a.len(), v[0].len())?;
            check_len(a.len(), v[1].len())?;
        }
        Ok(())
    }

    /// Values and normal derivatives on `Γ` (at `−k̄`) of the arc potentials
    /// `Σ_i (𝒲 J⁽¹⁾ − 𝒱 J⁽²⁾)` of nodal jump densities.
    fn arc_field_on_gamma(&self, jumps: &[JumpDensity]) -> (DVector<C>, DVector<C>) {
        let n = self.n_gamma();
        let (mut v, mut d) = (DVector::zeros(n), DVector::zeros(n));
        for ((a, m), j) in self.arcs.iter().zip(&self.a2g).zip(jumps) {
            let [j0, j1] = j.nodal(a);
            let (j0, j1) = (DVector::from_vec(j0), DVector::from_vec(j1));
            v += &m.w * &j0 - &m.v * &j1;
            d += &m.dw * &j0 - &m.dv * &j1;
        }
        (v, d)
    }
}

struct Unknowns {
    psi: DVector<C>,
    chi: DVector<C>,
    phi: Vec<[Vec<C>; 2]>,
    jumps: Vec<JumpDensity>,
    z_gamma: DVector<C>,
    dz_in: DVector<C>,
    neumann: DVector<C>,
}

/// Solution of the estimation system and everything derived from it.
#[derive(Clone, Debug)]
pub struct SurfaceSolution {
    /// `z_s|_Γ`.
    pub psi: DVector<C>,
    /// `p|_Γ`.
    pub chi: DVector<C>,
    /// `(p|_γ, ∂_νp|_γ)` per arc.
    pub phi: Vec<[Vec<C>; 2]>,
    /// `([z], [∂_νz])` per arc, in coefficient form.
    pub jumps: Vec<JumpDensity>,
    /// `z|_Γ = ψ + z_in|_Γ`.
    pub z_gamma: DVector<C>,
    /// `∂_ν z_in|_Γ`.
    pub dz_in: DVector<C>,
    /// `p`, outgoing with Neumann data `q₁⁻² z|_Γ`.
    pub p: ExteriorSolution,
    /// `û^(r)` per arc at the rule nodes.
    pub u_hat: Vec<ArcData>,
    pub c_hat: C,
    /// `l(p)`; real up to discretization error.
    pub sigma_sq: C,
    pub sigma: f64,
}

impl SurfaceSolution {
    /// Jump densities at the rule nodes of each arc.
    pub fn nodal_jumps(&self, setup: &SurfaceSetup) -> Vec<[Vec<C>; 2]> {
        setup.arcs.iter().zip(&self.jumps).map(|(a, j)| j.nodal(a)).collect()
    }

    /// `z` at targets separated from `Γ`, the arcs and `ω₀`; arc potentials
    /// are integrated with rules refined for each target's distance.
    pub fn eval_z(&self, setup: &SurfaceSetup, targets: &[Point]) -> Result<Vec<C>> {
        let kin = setup.k.adjoint();
        let zs = ExteriorSolution {
            grid: setup.grid.clone(),
            k: setup.k,
            radiation: Radiation::Incoming,
            trace: self.psi.clone(),
            neumann: -&self.dz_in,
        };
        let mut out = zs.eval(targets)?;
        let src = setup.functional.l0_fn.clone();
        let nl = newton_potential(&setup.functional.region, &|p| src(p), kin, targets)?;
        for (o, v) in out.iter_mut().zip(nl) {
            *o -= v;
        }
        for (a, j) in setup.arcs.iter().zip(&self.jumps) {
            let len = arc_length(&a.arc);
            for (t, o) in targets.iter().zip(out.iter_mut()) {
                let d = a.arc.samples(400).iter().map(|p| crate::geometry::dist(*t, *p)).fold(f64::INFINITY, f64::min);
                let rule = ArcRule::for_distance(&a.arc, len, d);
                let dens: Vec<[C; 2]> = rule.s.iter().map(|&s| j.at(a, s)).collect();
                let w = arc_layer_matrix(&rule, LayerKind::Double, kin, &[*t], None)?;
                let v = arc_layer_matrix(&rule, LayerKind::Single, kin, &[*t], None)?;
                for q in 0..rule.s.len() {
                    *o += w[(0, q)] * dens[q][0] - v[(0, q)] * dens[q][1];
                }
            }
        }
        Ok(out)
    }
}

fn sigma_from(sigma_sq: C, scale: f64) -> Result<f64> {
    if sigma_sq.re < -1e-10 * scale {
        return Err(Error::NegativeSigmaSquared(sigma_sq.re));
    }
    Ok(sigma_sq.re.max(0.0).sqrt())
}

/// Solves the estimation system and assembles `û`, `ĉ` and `σ`.
pub fn solve_surface_system(setup: &SurfaceSetup) -> Result<SurfaceSolution> {
    let n = setup.n_gamma();
    let fv = -&setup.newton.0;
    let fd = -&setup.newton.1;
    let u = setup.solve_with(&fv, &fd, &DVector::zeros(n))?;
    let u_hat = setup
        .arcs
        .iter()
        .zip(&u.phi)
        .map(|(a, [f1, f2])| {
            let mut o = a.observe(f1, f2);
            for r in 0..2 {
                o[r].iter_mut().zip(&a.noise_sq[r]).for_each(|(v, q)| *v *= *q);
            }
            o
        })
        .collect();
    let c_hat = (0..n).map(|j| u.z_gamma[j].conj() * setup.h0[j] * setup.grid.weights[j]).sum();
    let p = setup.outgoing(u.chi.clone(), u.neumann);
    let mut sol = SurfaceSolution {
        psi: u.psi,
        chi: u.chi,
        phi: u.phi,
        jumps: u.jumps,
        z_gamma: u.z_gamma,
        dz_in: u.dz_in,
        p,
        u_hat,
        c_hat,
        sigma_sq: zero(),
        sigma: 0.0,
    };
    let (s2, s) = surface_sigma_sq(&sol, setup)?;
    sol.sigma_sq = s2;
    sol.sigma = s;
    Ok(sol)
}

fn surface_sigma_sq(sol: &SurfaceSolution, setup: &SurfaceSetup) -> Result<(C, f64)> {
    let pv = &setup.g2w.0 * &sol.p.trace - &setup.g2w.1 * &sol.p.neumann;
    let s2 = setup.functional.apply(pv.as_slice());
    let sigma = sigma_from(s2, setup.functional.scale(pv.as_slice()))?;
    Ok((s2, sigma))
}

/// `σ = √(Re l(p))`, with `p` evaluated on `ω₀` from its boundary data.
pub fn surface_sigma(sol: &SurfaceSolution, setup: &SurfaceSetup) -> Result<f64> {
    Ok(surface_sigma_sq(sol, setup)?.1)
}

/// `Σ_i Σ_r ∫ conj(û_i^(r)) y_i^(r) + ĉ`.
pub fn surface_estimate(sol: &SurfaceSolution, setup: &SurfaceSetup, y: &[ArcData]) -> Result<C> {
    setup.check_data(y)?;
    Ok(setup.arcs.iter().zip(&sol.u_hat).zip(y).map(|((a, u), y)| a.inner(u, y)).sum::<C>() + sol.c_hat)
}

/// Worst-case mean-square error `I(u) = ∫_Γ q₁⁻²|z(·; u)|² + Σ ∫ |u|²/r²` of
/// the estimate with weights `u`, where `z(·; u)` is rebuilt from arc
/// potentials integrated on rules refined for the `Γ` distance and one
/// incoming combined-field solve.
pub fn surface_worst_case_cost(setup: &SurfaceSetup, u: &[ArcData]) -> Result<f64> {
    setup.check_data(u)?;
    let kin = setup.k.adjoint();
    let n = setup.n_gamma();
    let mut zin = -&setup.newton.0;
    let mut dzin = -&setup.newton.1;
    for (a, ua) in setup.arcs.iter().zip(u) {
        let jd = a.jumps_from_weights(ua);
        let len = arc_length(&a.arc);
        let d = a.arc.samples(400).iter().map(|p| setup.grid.distance_to(*p)).fold(f64::INFINITY, f64::min);
        let rule = ArcRule::for_distance(&a.arc, len, d);
        let dens: Vec<[C; 2]> = rule.s.iter().map(|&s| jd.at(a, s)).collect();
        let j0 = DVector::from_iterator(dens.len(), dens.iter().map(|v| v[0]));
        let j1 = DVector::from_iterator(dens.len(), dens.iter().map(|v| v[1]));
        let pts = &setup.grid.points;
        let nrm = &setup.grid.normals;
        zin += arc_layer_matrix(&rule, LayerKind::Double, kin, pts, None)? * &j0 - arc_layer_matrix(&rule, LayerKind::Single, kin, pts, None)? * &j1;
        dzin += arc_layer_matrix(&rule, LayerKind::Double, kin, pts, Some(nrm))? * &j0
            - arc_layer_matrix(&rule, LayerKind::Single, kin, pts, Some(nrm))? * &j1;
    }
    let f = -dzin;
    let psi = setup.adjoint_solver()?.solve(&(cfie_rhs_matrix(&setup.ops_in, setup.eta, Radiation::Incoming) * &f));
    let z = psi + zin;
    let data: f64 = (0..n).map(|j| z[j].norm_sqr() / setup.q1_sq[j] * setup.grid.weights[j]).sum();
    Ok(data + setup.noise_norm_sq(u)?)
}

/// Data-driven form of the estimator: `φ̂` with `l(φ̂)` equal to the minimax
/// estimate.
#[derive(Clone, Debug)]
pub struct SurfaceStochastic {
    /// `p̂_s|_Γ`.
    pub psi: DVector<C>,
    /// `(φ̂|_γ, ∂_νφ̂|_γ)` per arc.
    pub phi: Vec<[Vec<C>; 2]>,
    /// `([p̂], [∂_ν p̂])` per arc, data part included.
    pub jumps: Vec<JumpDensity>,
    /// Outgoing `φ̂` with Neumann data `q₁⁻² p̂|_Γ + h₀`.
    pub phi_hat: ExteriorSolution,
}

/// Solves the data-driven system: `p̂` is incoming with `∂_ν p̂ = 0` on `Γ`
/// and arc jumps generated by the weights `(r^(r))² (Obs(φ̂) − y)`.
pub fn solve_surface_stochastic(setup: &SurfaceSetup, y: &[ArcData]) -> Result<SurfaceStochastic> {
    setup.check_data(y)?;
    // Jumps of the data potential D: generated by the weights −r² y.
    let data_jumps: Vec<JumpDensity> = setup
        .arcs
        .iter()
        .zip(y)
        .map(|(a, ya)| {
            let w: ArcData = [0, 1].map(|r| ya[r].iter().zip(&a.noise_sq[r]).map(|(v, q)| -v * *q).collect());
            a.jumps_from_weights(&w)
        })
        .collect();
    let (fv, fd) = setup.arc_field_on_gamma(&data_jumps);
    let hx = DVector::from_column_slice(&setup.h0);
    let u = setup.solve_with(&fv, &fd, &hx)?;
    let mut jumps = u.jumps;
    for (j, d) in jumps.iter_mut().zip(&data_jumps) {
        j.add(d);
    }
    Ok(SurfaceStochastic { psi: u.psi, phi: u.phi, jumps, phi_hat: setup.outgoing(u.chi, u.neumann) })
}

/// Monte Carlo model of the arc-observation estimator.
pub struct SurfaceModel<'a> {
    pub setup: &'a SurfaceSetup,
    pub solution: &'a SurfaceSolution,
}

impl SurfaceModel<'_> {
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

    fn noise(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Vec<ArcData> {
        let s = self.setup;
        match kind {
            TrialKind::ExtremalNoise => {
                let n2 = s.noise_norm_sq(&self.solution.u_hat).unwrap_or(0.0);
                let nu = rademacher(rng);
                let f = if n2 > 0.0 { nu / n2.sqrt() } else { 0.0 };
                s.arcs
                    .iter()
                    .zip(&self.solution.u_hat)
                    .map(|(a, u)| [0, 1].map(|r| u[r].iter().zip(&a.noise_sq[r]).map(|(v, q)| v / *q * f).collect()))
                    .collect()
            }
            _ => {
                // Uncorrelated: E|η(x)|² = 1/(r² W), W = total observed length.
                let total: f64 = s.arcs.iter().map(|a| 2.0 * a.rule.weights.iter().sum::<f64>()).sum();
                s.arcs
                    .iter()
                    .map(|a| [0, 1].map(|r| a.noise_sq[r].iter().map(|q| gaussian(rng) * (1.0 / (2.0 * q * total)).sqrt()).collect()))
                    .collect()
            }
        }
    }
}

impl WorstCaseModel for SurfaceModel<'_> {
    fn sigma_sq(&self) -> f64 {
        self.solution.sigma * self.solution.sigma
    }

    fn trial_error(&self, kind: TrialKind, rng: &mut ChaCha8Rng) -> Result<C> {
        let s = self.setup;
        let dh = self.perturbation(kind, rng);
        let h: Vec<C> = s.h0.iter().zip(&dh).map(|(a, b)| a + b).collect();
        let phi = s.simulate(&h)?;
        let mut y = s.observe(&phi);
        for (ya, xa) in y.iter_mut().zip(self.noise(kind, rng)) {
            for r in 0..2 {
                ya[r].iter_mut().zip(&xa[r]).for_each(|(a, b)| *a += b);
            }
        }
        Ok(s.functional_value(&phi) - surface_estimate(self.solution, s, &y)?)
    }
}

/// Random weights of the right shapes, for optimality probes.
pub fn random_arc_weights(setup: &SurfaceSetup, rng: &mut impl Rng, scale: f64) -> Vec<ArcData> {
    setup.arcs.iter().map(|a| [0, 1].map(|_| (0..a.len()).map(|_| gaussian(rng) * scale).collect())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_grid, ClosedCurve};

    fn arc() -> SurfaceArc {
        SurfaceArc::new(OpenArc::segment([2.0, -0.5], [2.0, 0.5]).unwrap(), 16, |_| 2.0, |_| 3.0)
            .unwrap()
            .with_term(1, 1, |s| C::new(1.0, s), |_| C::new(1.0, 0.0))
            .unwrap()
            .with_term(2, 2, |_| C::new(1.0, 0.0), |s| C::new(s, 0.0))
            .unwrap()
    }

    #[test]
    fn second_kernel_factors_vanish_at_endpoints() {
        let a = arc();
        assert_eq!(a.kernel_at(2, 2, 0.3, 1.0), zero());
        assert_eq!(a.kernel_at(2, 2, 0.3, -1.0), zero());
        assert!(a.kernel_at(1, 1, 0.3, 1.0).norm() > 0.0);
        assert!(a.with_term(3, 1, |_| zero(), |_| zero()).is_err());
    }

    #[test]
    fn zero_kernels_compose_to_zero() {
        let a = SurfaceArc::new(OpenArc::segment([2.0, -0.5], [2.0, 0.5]).unwrap(), 8, |_| 1.0, |_| 1.0).unwrap();
        for row in a.ktilde() {
            for b in row {
                assert!(b.nodal_matrix(&a.rule.weights).iter().all(|v| *v == zero()));
            }
        }
    }

    #[test]
    fn arcs_inside_the_obstacle_are_refused() {
        let g = curve_grid(&ClosedCurve::circle([0.0, 0.0], 1.0).unwrap(), 32).unwrap();
        let inside = SurfaceArc::new(OpenArc::segment([-0.2, 0.0], [0.2, 0.0]).unwrap(), 8, |_| 1.0, |_| 1.0).unwrap();
        let f = SurfaceFunctional::new(RegionSpec::disk([-3.0, 0.0], 0.4, 6).unwrap(), |_| C::new(1.0, 0.0));
        let r = SurfaceSetup::new(&g, WaveNumber::new(1.0, 0.0).unwrap(), 1.0, |_| 1.0, |_| zero(), vec![inside], f);
        assert!(matches!(r, Err(Error::SeparationViolation { .. })));
    }
}
