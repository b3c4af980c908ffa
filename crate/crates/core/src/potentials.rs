//! Fundamental solutions, layer potentials and Nyström boundary operators.
//!
//! Normalization: the boundary operators carry a factor 2,
//! `S = 2∫Φ ψ`, `K = 2∫∂Φ/∂ν_y ψ`, `K′ = 2∫∂Φ/∂ν_x ψ`, `T = 2∂/∂ν_x∫∂Φ/∂ν_y ψ`,
//! while the potentials `𝒱ψ = ∫Φψ`, `𝒲ψ = ∫∂Φ/∂ν_y ψ` do not. With `ν`
//! pointing into the exterior, the exterior traces are
//! `𝒱⁺ = ½S`, `𝒲⁺ = ½(I + K)`, `∂_ν𝒱⁺ = −½(I − K′)`, `∂_ν𝒲⁺ = ½T`.
//!
//! `S`, `K`, `K′` use Kress's logarithmic splitting on the equispaced grid;
//! `T` uses Maue's identity `T = ∂_s S ∂_s + k² ν·S ν`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{dist, ClosedCurveGrid, OpenArc};
use crate::quadrature::{extrapolate_to_zero, gauss_legendre, kress_log_weights, trig_cardinal, trig_diff_matrix};
use crate::specfun::jh01;
use crate::{Point, WaveNumber};

pub use crate::geometry::{RegionShape, RegionSpec};

/// Complex nodal values of a density on a grid.
pub type BoundaryDensity = DVector<C>;

/// One row each of `S`, `K`, `K′`.
type OperatorRows = (Vec<C>, Vec<C>, Vec<C>);

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const I: C = C::new(0.0, 1.0);

/// Targets closer than this many node spacings are refused by the
/// potential evaluators (the largest upsampling can no longer resolve them).
pub const NEAR_FIELD_SPACINGS: f64 = 0.1;
/// Cap on the trigonometric upsampling used for close targets.
pub const MAX_UPSAMPLING: usize = 64;

/// `Φ`, `∂Φ/∂ν_y`, `∂Φ/∂ν_x`, `∂²Φ/∂ν_x∂ν_y` at one pair of points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelBundle {
    pub phi: C,
    pub dphi_dny: C,
    pub dphi_dnx: C,
    pub d2phi: C,
}

fn check_dim(dim: usize, pts: &[&[f64]]) -> Result<()> {
    if dim != 2 && dim != 3 {
        return Err(Error::Domain(format!("dimension must be 2 or 3, got {dim}")));
    }
    for p in pts {
        if p.len() != dim {
            return Err(Error::ShapeMismatch { expected: dim, got: p.len() });
        }
    }
    Ok(())
}

fn separation(x: &[f64], y: &[f64]) -> Result<f64> {
    let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Domain("fundamental solution is singular at x = y".into()));
    }
    Ok(r)
}

/// `Φ(r)`, `Φ′(r)`, `Φ″(r)` as functions of the distance.
fn radial(dim: usize, k: C, r: f64) -> Result<(C, C, C)> {
    if dim == 2 {
        let z = k * r;
        let [_, _, h0, h1] = jh01(z)?;
        let phi = I / 4.0 * h0;
        let d1 = -I * k / 4.0 * h1;
        // H1′(z) = H0 − H1/z
        let d2 = -I * k * k / 4.0 * (h0 - h1 / z);
        Ok((phi, d1, d2))
    } else {
        let phi = (I * k * r).exp() / (4.0 * PI * r);
        let g = I * k - 1.0 / r;
        let d1 = phi * g;
        let d2 = phi * (g * g + 1.0 / (r * r));
        Ok((phi, d1, d2))
    }
}

/// `Φ_k(x, y)`: `(i/4)H₀^(1)(k|x−y|)` in 2D, `e^{ik|x−y|}/(4π|x−y|)` in 3D.
pub fn fundamental(dim: usize, k: WaveNumber, x: &[f64], y: &[f64]) -> Result<C> {
    check_dim(dim, &[x, y])?;
    let r = separation(x, y)?;
    Ok(radial(dim, k.value(), r)?.0)
}

/// All four kernels; `nx`, `ny` are unit normals at `x` and `y`.
pub fn kernel_bundle(dim: usize, k: WaveNumber, x: &[f64], y: &[f64], nx: &[f64], ny: &[f64]) -> Result<KernelBundle> {
    check_dim(dim, &[x, y, nx, ny])?;
    let r = separation(x, y)?;
    let (phi, d1, d2) = radial(dim, k.value(), r)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let (dx, dy, nn) = (dot(&d, nx), dot(&d, ny), dot(nx, ny));
    Ok(KernelBundle {
        phi,
        dphi_dny: -d1 / r * dy,
        dphi_dnx: d1 / r * dx,
        d2phi: -(d2 / (r * r) - d1 / (r * r * r)) * dx * dy - d1 / r * nn,
    })
}

/// 2D kernels without validation, for the hot loops.
#[inline]
fn bundle2(k: C, x: Point, y: Point, nx: Option<Point>, ny: Option<Point>) -> Result<KernelBundle> {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    let (phi, d1, d2) = radial(2, k, r)?;
    let dx = nx.map_or(0.0, |n| d[0] * n[0] + d[1] * n[1]);
    let dy = ny.map_or(0.0, |n| d[0] * n[0] + d[1] * n[1]);
    let nn = match (nx, ny) {
        (Some(a), Some(b)) => a[0] * b[0] + a[1] * b[1],
        _ => 0.0,
    };
    Ok(KernelBundle {
        phi,
        dphi_dny: -d1 / r * dy,
        dphi_dnx: d1 / r * dx,
        d2phi: -(d2 / (r * r) - d1 / (r * r * r)) * dx * dy - d1 / r * nn,
    })
}

/// Nyström matrices of the four boundary operators on one grid.
#[derive(Clone, Debug)]
pub struct BoundaryOperatorSet {
    pub s: DMatrix<C>,
    pub k: DMatrix<C>,
    pub kp: DMatrix<C>,
    pub t: DMatrix<C>,
    pub wavenumber: WaveNumber,
}

/// Assembles `S`, `K`, `K′`, `T` (factor-2 normalization) at wavenumber `k`.
/// Pass `k.adjoint()` for the `−k̄` operators.
pub fn assemble_boundary_ops(grid: &ClosedCurveGrid, k: WaveNumber) -> Result<BoundaryOperatorSet> {
    let n = grid.len();
    if !n.is_multiple_of(2) {
        return Err(Error::Domain("boundary operators need an even node count".into()));
    }
    let kv = k.value();
    let half = n / 2;
    let h = PI / half as f64;
    let r_log = kress_log_weights(n);

    // Row-parallel assembly of S, K, K′.
    let rows: Vec<Result<OperatorRows>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.points[i];
            let ni = grid.normals[i];
            let mut s = vec![C::new(0.0, 0.0); n];
            let mut kk = vec![C::new(0.0, 0.0); n];
            let mut kp = vec![C::new(0.0, 0.0); n];
            for j in 0..n {
                let rw = r_log[(i as isize - j as isize).unsigned_abs()];
                let sp = grid.speed[j];
                if i == j {
                    let m2 = (I / 2.0 - EULER_GAMMA / PI - (kv * sp / 2.0).ln() / PI) * sp;
                    s[j] = rw * C::new(-sp / (2.0 * PI), 0.0) + h * m2;
                    let nd = ni[0] * grid.second[i][0] + ni[1] * grid.second[i][1];
                    let l2 = C::new(nd / (2.0 * PI * sp), 0.0);
                    kk[j] = h * l2;
                    kp[j] = h * l2;
                    continue;
                }
                let y = grid.points[j];
                let d = [xi[0] - y[0], xi[1] - y[1]];
                let r = d[0].hypot(d[1]);
                let z = kv * r;
                let [j0, j1, h0, h1] = jh01(z)?;
                let tt = grid.t[i] - grid.t[j];
                let lg = (4.0 * (tt / 2.0).sin().powi(2)).ln();
                // Single layer: M = (i/2) H0 |x′|, M1 = −J0 |x′| / 2π.
                let m = I / 2.0 * h0 * sp;
                let m1 = -j0 * sp / (2.0 * PI);
                s[j] = rw * m1 + h * (m - m1 * lg);
                // Double layer: (ik/2) H1 (x−y)·ν_y / r |x′|; log part −(k/2π) J1 (..).
                let ny = grid.normals[j];
                let dy = (d[0] * ny[0] + d[1] * ny[1]) / r;
                let l = I * kv / 2.0 * h1 * dy * sp;
                let l1 = -kv / (2.0 * PI) * j1 * dy * sp;
                kk[j] = rw * l1 + h * (l - l1 * lg);
                // Adjoint double layer: −(ik/2) H1 (x−y)·ν_x / r |x′|.
                let dx = (d[0] * ni[0] + d[1] * ni[1]) / r;
                let lp = -I * kv / 2.0 * h1 * dx * sp;
                let lp1 = kv / (2.0 * PI) * j1 * dx * sp;
                kp[j] = rw * lp1 + h * (lp - lp1 * lg);
            }
            Ok((s, kk, kp))
        })
        .collect();

    let mut s = DMatrix::zeros(n, n);
    let mut kk = DMatrix::zeros(n, n);
    let mut kp = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        let (a, b, c) = row?;
        for j in 0..n {
            s[(i, j)] = a[j];
            kk[(i, j)] = b[j];
            kp[(i, j)] = c[j];
        }
    }

    // Maue: T = diag(1/|x′|) D S diag(1/|x′|) D + k² Σ_c diag(ν_c) S diag(ν_c).
    let dm = trig_diff_matrix(n).map(|v| C::new(v, 0.0));
    let inv_speed = DMatrix::from_diagonal(&DVector::from_iterator(n, grid.speed.iter().map(|v| C::new(1.0 / v, 0.0))));
    let ds = &inv_speed * &dm;
    let mut t = &ds * &s * &ds;
    for c in 0..2 {
        let nu = DMatrix::from_diagonal(&DVector::from_iterator(n, grid.normals.iter().map(|v| C::new(v[c], 0.0))));
        t += (&nu * &s * &nu) * (kv * kv);
    }
    Ok(BoundaryOperatorSet { s, k: kk, kp, t, wavenumber: k })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Single,
    Double,
}

/// Matrix mapping nodal density values to potential values (or their
/// derivative along `normals`) at the targets. Targets nearer than a few
/// node spacings are handled by trigonometric upsampling of the density.
pub fn layer_matrix(
    grid: &ClosedCurveGrid,
    kind: LayerKind,
    k: WaveNumber,
    targets: &[Point],
    normals: Option<&[Point]>,
) -> Result<DMatrix<C>> {
    if let Some(nr) = normals {
        if nr.len() != targets.len() {
            return Err(Error::ShapeMismatch { expected: targets.len(), got: nr.len() });
        }
    }
    let factors = upsampling_factors(grid, targets)?;
    layer_matrix_with(grid, kind, k, targets, normals, &factors)
}

fn layer_matrix_with(
    grid: &ClosedCurveGrid,
    kind: LayerKind,
    k: WaveNumber,
    targets: &[Point],
    normals: Option<&[Point]>,
    factors: &[usize],
) -> Result<DMatrix<C>> {
    let n = grid.len();
    let kv = k.value();
    // Refined grids are shared by all targets with the same factor.
    let mut distinct: Vec<usize> = factors.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let fine: Vec<(usize, ClosedCurveGrid)> = distinct.iter().map(|&u| (u, grid.refined(u))).collect();

    let rows: Vec<Result<Vec<C>>> = (0..targets.len())
        .into_par_iter()
        .map(|q| {
            let u = factors[q];
            let g = &fine.iter().find(|(f, _)| *f == u).expect("refined grid").1;
            let x = targets[q];
            let nx = normals.map(|v| v[q]);
            let nf = g.len();
            let mut coarse_row = vec![C::new(0.0, 0.0); n];
            let mut fine_row = vec![C::new(0.0, 0.0); nf];
            for f in 0..nf {
                let b = bundle2(kv, x, g.points[f], nx, Some(g.normals[f]))?;
                let kern = match (kind, nx.is_some()) {
                    (LayerKind::Single, false) => b.phi,
                    (LayerKind::Double, false) => b.dphi_dny,
                    (LayerKind::Single, true) => b.dphi_dnx,
                    (LayerKind::Double, true) => b.d2phi,
                };
                fine_row[f] = kern * g.weights[f];
            }
            if u == 1 {
                coarse_row.copy_from_slice(&fine_row);
            } else {
                // Fold back through the interpolation: value = Σ_f c_f Σ_j L_j(t_f) ψ_j.
                let hf = 2.0 * PI / nf as f64;
                let card: Vec<f64> = (0..nf).map(|m| trig_cardinal(n, m as f64 * hf)).collect();
                for (j, cr) in coarse_row.iter_mut().enumerate() {
                    let base = u * j;
                    let mut acc = C::new(0.0, 0.0);
                    for (f, c) in fine_row.iter().enumerate() {
                        acc += c * card[(f + nf - base) % nf];
                    }
                    *cr = acc;
                }
            }
            Ok(coarse_row)
        })
        .collect();
    let mut m = DMatrix::zeros(targets.len(), n);
    for (q, row) in rows.into_iter().enumerate() {
        let row = row?;
        for j in 0..n {
            m[(q, j)] = row[j];
        }
    }
    Ok(m)
}

/// Node spacing of the grid around the node closest to `x`.
fn local_spacing(grid: &ClosedCurveGrid, x: Point) -> f64 {
    let n = grid.len();
    let nearest = (0..n)
        .min_by(|&a, &b| dist(x, grid.points[a]).total_cmp(&dist(x, grid.points[b])))
        .unwrap_or(0);
    let speed = (0..5).map(|o| grid.speed[(nearest + n + o - 2) % n]).fold(0.0, f64::max);
    speed * 2.0 * PI / n as f64
}

fn upsampling_factors(grid: &ClosedCurveGrid, targets: &[Point]) -> Result<Vec<usize>> {
    let threshold = NEAR_FIELD_SPACINGS * grid.spacing();
    targets
        .iter()
        .map(|&x| {
            let d = grid.distance_to(x);
            if d < threshold {
                Err(Error::NearFieldError { distance: d, threshold })
            } else {
                Ok(upsampling_for(local_spacing(grid, x), d))
            }
        })
        .collect()
}

fn upsampling_for(spacing: f64, d: f64) -> usize {
    ((6.0 * spacing / d).ceil() as usize).clamp(1, MAX_UPSAMPLING)
}

/// `[𝒱ψ, 𝒲ψ, ∂_ν𝒱ψ, ∂_ν𝒲ψ]` at each target (the last two zero without
/// normals), summing over the density's trigonometric interpolant on a grid
/// refined by `factors[q]`.
fn potentials_direct(
    grid: &ClosedCurveGrid,
    density: &BoundaryDensity,
    k: WaveNumber,
    targets: &[Point],
    normals: Option<&[Point]>,
    factors: &[usize],
) -> Result<Vec<[C; 4]>> {
    let kv = k.value();
    let mut distinct: Vec<usize> = factors.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dens: Vec<C> = density.iter().cloned().collect();
    let fine: Vec<(usize, ClosedCurveGrid, Vec<C>)> = distinct
        .iter()
        .map(|&u| Ok((u, grid.refined(u), crate::quadrature::trig_upsample(&dens, u)?)))
        .collect::<Result<_>>()?;
    (0..targets.len())
        .into_par_iter()
        .map(|q| {
            let (_, g, psi) = fine.iter().find(|(f, _, _)| *f == factors[q]).expect("refined grid");
            let x = targets[q];
            let nx = normals.map(|v| v[q]);
            let mut acc = [C::new(0.0, 0.0); 4];
            for f in 0..g.len() {
                let b = bundle2(kv, x, g.points[f], nx, Some(g.normals[f]))?;
                let wpsi = psi[f] * g.weights[f];
                acc[0] += b.phi * wpsi;
                acc[1] += b.dphi_dny * wpsi;
                acc[2] += b.dphi_dnx * wpsi;
                acc[3] += b.d2phi * wpsi;
            }
            Ok(acc)
        })
        .collect()
}

/// `𝒱ψ` or `𝒲ψ` at the targets.
pub fn eval_layer(grid: &ClosedCurveGrid, density: &BoundaryDensity, kind: LayerKind, k: WaveNumber, targets: &[Point]) -> Result<Vec<C>> {
    crate::error::check_len(grid.len(), density.len())?;
    let factors = upsampling_factors(grid, targets)?;
    let v = potentials_direct(grid, density, k, targets, None, &factors)?;
    let c = if kind == LayerKind::Single { 0 } else { 1 };
    Ok(v.iter().map(|a| a[c]).collect())
}

/// `∂_ν𝒱ψ` or `∂_ν𝒲ψ` at the targets along the given unit normals.
pub fn eval_layer_normal_deriv(
    grid: &ClosedCurveGrid,
    density: &BoundaryDensity,
    kind: LayerKind,
    k: WaveNumber,
    targets: &[Point],
    normals: &[Point],
) -> Result<Vec<C>> {
    crate::error::check_len(grid.len(), density.len())?;
    if normals.len() != targets.len() {
        return Err(Error::ShapeMismatch { expected: targets.len(), got: normals.len() });
    }
    let factors = upsampling_factors(grid, targets)?;
    let v = potentials_direct(grid, density, k, targets, Some(normals), &factors)?;
    let c = if kind == LayerKind::Single { 2 } else { 3 };
    Ok(v.iter().map(|a| a[c]).collect())
}

/// Maximum trace residuals, each relative to `max(‖reference‖∞, ‖ψ‖∞)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpReport {
    /// `𝒱⁺ψ − ½Sψ`
    pub single_trace: f64,
    /// `𝒲⁺ψ − ½(I + K)ψ`
    pub double_trace: f64,
    /// `∂_ν𝒱⁺ψ + ½(I − K′)ψ`
    pub single_normal: f64,
    /// `∂_ν𝒲⁺ψ − ½Tψ`
    pub double_normal: f64,
}

impl JumpReport {
    pub fn max(&self) -> f64 {
        self.single_trace.max(self.double_trace).max(self.single_normal).max(self.double_normal)
    }
}

const JUMP_SAMPLES: usize = 12;

/// Compares exterior limits of the potentials (sampled along the normal at
/// twelve distances and extrapolated to zero) with the operator traces.
pub fn boundary_trace_jump_check(grid: &ClosedCurveGrid, density: &BoundaryDensity, k: WaveNumber) -> Result<JumpReport> {
    crate::error::check_len(grid.len(), density.len())?;
    let ops = assemble_boundary_ops(grid, k)?;
    let n = grid.len();
    // Steps of a twelfth of the local node spacing keep the refined
    // quadrature below the upsampling cap and the extrapolation well inside
    // the radius of analyticity along the normal.
    let npts = JUMP_SAMPLES;
    let h0: Vec<f64> = (0..n).map(|i| grid.speed[i] * 2.0 * PI / n as f64 / 12.0).collect();
    let mut targets = Vec::with_capacity(n * npts);
    let mut tnormals = Vec::with_capacity(n * npts);
    let mut factors = Vec::with_capacity(n * npts);
    for m in 1..=npts {
        for i in 0..n {
            let hm = h0[i] * m as f64;
            let (p, nu) = (grid.points[i], grid.normals[i]);
            targets.push([p[0] + hm * nu[0], p[1] + hm * nu[1]]);
            tnormals.push(nu);
            factors.push(upsampling_for(local_spacing(grid, targets[targets.len() - 1]), hm));
        }
    }
    let vals = potentials_direct(grid, density, k, &targets, Some(&tnormals), &factors)?;
    let limit = |c: usize| -> DVector<C> {
        DVector::from_fn(n, |i, _| {
            let hs: Vec<f64> = (1..=npts).map(|m| h0[i] * m as f64).collect();
            let f: Vec<C> = (0..npts).map(|m| vals[m * n + i][c]).collect();
            extrapolate_to_zero(&hs, &f)
        })
    };
    let psi_norm = density.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let resid = |a: DVector<C>, b: DVector<C>| {
        let scale = b.iter().map(|v| v.norm()).fold(psi_norm, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max) / scale
        }
    };
    let half = C::new(0.5, 0.0);
    Ok(JumpReport {
        single_trace: resid(limit(0), &ops.s * density * half),
        double_trace: resid(limit(1), (density + &ops.k * density) * half),
        single_normal: resid(limit(2), -(density - &ops.kp * density) * half),
        double_normal: resid(limit(3), &ops.t * density * half),
    })
}

/// `∫_region Φ_k(x, y) f(y) dy` at each target by tensor Gauss quadrature.
/// Targets must keep 5% of the region diameter away from it.
pub fn newton_potential(region: &RegionSpec, source: &dyn Fn(Point) -> C, k: WaveNumber, targets: &[Point]) -> Result<Vec<C>> {
    let threshold = crate::geometry::SEPARATION_FRACTION * region.diameter();
    let (pts, wts) = region.quadrature();
    let vals: Vec<C> = pts.iter().zip(&wts).map(|(p, w)| source(*p) * *w).collect();
    let kv = k.value();
    let mut out = Vec::with_capacity(targets.len());
    for &x in targets {
        let d = region.distance_to(x);
        if d < threshold {
            return Err(Error::NearFieldError { distance: d, threshold });
        }
        let mut acc = C::new(0.0, 0.0);
        for (p, v) in pts.iter().zip(&vals) {
            acc += radial(2, kv, dist(x, *p))?.0 * v;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Quadrature on an open arc through `s = cos θ`, Gauss–Legendre in `θ`.
/// Smooth and `√(1−s²)`-tapered integrands both converge spectrally.
#[derive(Clone, Debug)]
pub struct ArcRule {
    pub s: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    /// Arc-length weights.
    pub weights: Vec<f64>,
}

impl ArcRule {
    pub fn new(arc: &OpenArc, m: usize) -> Self {
        let (x, w) = gauss_legendre(m);
        let mut r = ArcRule { s: vec![], points: vec![], normals: vec![], weights: vec![] };
        for (xi, wi) in x.iter().zip(&w) {
            let th = PI * (xi + 1.0) / 2.0;
            let s = th.cos();
            let (p, d) = arc.eval(s);
            r.s.push(s);
            r.points.push(p);
            r.normals.push(arc.normal(s));
            r.weights.push(wi * PI / 2.0 * th.sin() * d[0].hypot(d[1]));
        }
        r
    }

    /// Rule fine enough for targets at distance `d` from an arc of length `len`.
    pub fn for_distance(arc: &OpenArc, len: f64, d: f64) -> Self {
        let m = ((10.0 * len / d.max(1e-12)).ceil() as usize).clamp(64, 2048);
        ArcRule::new(arc, m)
    }

    /// `∫ f` along the arc.
    pub fn integrate(&self, f: impl Fn(f64) -> C) -> C {
        self.s.iter().zip(&self.weights).map(|(s, w)| f(*s) * *w).sum()
    }
}

/// Arc length by a high-order rule.
pub fn arc_length(arc: &OpenArc) -> f64 {
    ArcRule::new(arc, 128).weights.iter().sum()
}

/// Layer potential of an arc density `σ(s)` (or its derivative along
/// `target_normal`) at one target off the arc.
pub fn arc_potential(
    rule: &ArcRule,
    density: &dyn Fn(f64) -> C,
    kind: LayerKind,
    k: WaveNumber,
    target: Point,
    target_normal: Option<Point>,
) -> Result<C> {
    let kv = k.value();
    let mut acc = C::new(0.0, 0.0);
    for q in 0..rule.s.len() {
        let b = bundle2(kv, target, rule.points[q], target_normal, Some(rule.normals[q]))?;
        let kern = match (kind, target_normal.is_some()) {
            (LayerKind::Single, false) => b.phi,
            (LayerKind::Double, false) => b.dphi_dny,
            (LayerKind::Single, true) => b.dphi_dnx,
            (LayerKind::Double, true) => b.d2phi,
        };
        acc += kern * density(rule.s[q]) * rule.weights[q];
    }
    Ok(acc)
}

/// Matrix mapping nodal arc densities (at the rule nodes) to layer
/// potentials at separated targets, or to their derivatives along `normals`.
pub fn arc_layer_matrix(rule: &ArcRule, kind: LayerKind, k: WaveNumber, targets: &[Point], normals: Option<&[Point]>) -> Result<DMatrix<C>> {
    if let Some(nr) = normals {
        crate::error::check_len(targets.len(), nr.len())?;
    }
    let kv = k.value();
    let m = rule.s.len();
    let rows: Vec<Result<Vec<C>>> = (0..targets.len())
        .into_par_iter()
        .map(|t| {
            let nx = normals.map(|v| v[t]);
            (0..m)
                .map(|q| {
                    let b = bundle2(kv, targets[t], rule.points[q], nx, Some(rule.normals[q]))?;
                    let kern = match (kind, nx.is_some()) {
                        (LayerKind::Single, false) => b.phi,
                        (LayerKind::Double, false) => b.dphi_dny,
                        (LayerKind::Single, true) => b.dphi_dnx,
                        (LayerKind::Double, true) => b.d2phi,
                    };
                    Ok(kern * rule.weights[q])
                })
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(targets.len(), m);
    for (t, row) in rows.into_iter().enumerate() {
        for (q, v) in row?.into_iter().enumerate() {
            out[(t, q)] = v;
        }
    }
    Ok(out)
}

/// `∂/∂n_x ∫_region Φ_k(x, y) f(y) dy` along the unit vectors `normals`.
pub fn newton_potential_normal_deriv(
    region: &RegionSpec,
    source: &dyn Fn(Point) -> C,
    k: WaveNumber,
    targets: &[Point],
    normals: &[Point],
) -> Result<Vec<C>> {
    crate::error::check_len(targets.len(), normals.len())?;
    let threshold = crate::geometry::SEPARATION_FRACTION * region.diameter();
    let (pts, wts) = region.quadrature();
    let vals: Vec<C> = pts.iter().zip(&wts).map(|(p, w)| source(*p) * *w).collect();
    let kv = k.value();
    let mut out = Vec::with_capacity(targets.len());
    for (&x, n) in targets.iter().zip(normals) {
        let d = region.distance_to(x);
        if d < threshold {
            return Err(Error::NearFieldError { distance: d, threshold });
        }
        let mut acc = C::new(0.0, 0.0);
        for (p, v) in pts.iter().zip(&vals) {
            acc += bundle2(kv, x, *p, Some(*n), None)?.dphi_dnx * v;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Weighted inner product `Σ w_j a_j conj(b_j)` on a curve grid.
pub fn weighted_inner(grid: &ClosedCurveGrid, a: &BoundaryDensity, b: &BoundaryDensity) -> C {
    (0..grid.len()).map(|j| a[j] * b[j].conj() * grid.weights[j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_grid, ClosedCurve};

    #[test]
    fn fundamental_values() {
        let k = WaveNumber::new(1.0, 0.0).unwrap();
        let v = fundamental(2, k, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let expect = I / 4.0 * C::new(0.765_197_686_557_966_6, 0.088_256_964_215_676_96);
        assert!((v - expect).norm() < 1e-15);
        let k3 = WaveNumber::new(1.3, 0.2).unwrap();
        let v3 = fundamental(3, k3, &[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((v3 - (I * k3.value()).exp() / (4.0 * PI)).norm() < 1e-15);
        assert!(fundamental(2, k, &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn three_d_laplace_limit() {
        let k = WaveNumber::new(1e-8, 0.0).unwrap();
        let (x, y, ny) = ([0.3, 0.2, 0.1], [1.0, -0.5, 0.4], [0.0, 0.6, 0.8]);
        let b = kernel_bundle(3, k, &x, &y, &[1.0, 0.0, 0.0], &ny).unwrap();
        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let lap = (d[0] * ny[0] + d[1] * ny[1] + d[2] * ny[2]) / (4.0 * PI * r.powi(3));
        assert!((b.dphi_dny - lap).norm() < 1e-7 * lap.abs());
    }

    #[test]
    fn weighted_single_layer_is_symmetric() {
        let c = ClosedCurve::kite([0.0, 0.0], 1.0).unwrap();
        let g = curve_grid(&c, 32).unwrap();
        let ops = assemble_boundary_ops(&g, WaveNumber::new(2.0, 0.3).unwrap()).unwrap();
        let w = DMatrix::from_diagonal(&DVector::from_iterator(32, g.weights.iter().map(|v| C::new(*v, 0.0))));
        let ws = &w * &ops.s;
        assert!((&ws - ws.transpose()).norm() < 1e-12 * ws.norm());
    }
}
