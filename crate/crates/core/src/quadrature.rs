//! Quadrature rules and trigonometric interpolation on equispaced periodic grids.

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-type initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Cardinal trigonometric interpolant for `n_nodes` (even) equispaced nodes,
/// evaluated at offset `tau` from its own node. The Nyquist mode is split
/// symmetrically, so real data interpolate to real functions.
pub fn trig_cardinal(n_nodes: usize, tau: f64) -> f64 {
    let half = (n_nodes / 2) as f64;
    let s = (tau / 2.0).sin();
    if s.abs() < 1e-14 {
        // tau is a multiple of 2π.
        return 1.0;
    }
    (half * tau).sin() * (tau / 2.0).cos() / s / n_nodes as f64
}

/// Values of the trigonometric interpolant of `values` on a grid refined
/// `factor` times. Node `u·j` of the output coincides with input node `j`.
pub fn trig_upsample(values: &[C], factor: usize) -> Result<Vec<C>> {
    let n = values.len();
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::Domain(format!("trigonometric upsampling needs an even node count, got {n}")));
    }
    if factor <= 1 {
        return Ok(values.to_vec());
    }
    let nf = n * factor;
    let mut planner = FftPlanner::<f64>::new();
    let mut spec = values.to_vec();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut fine = vec![C::new(0.0, 0.0); nf];
    let h = n / 2;
    fine[..h].copy_from_slice(&spec[..h]);
    for m in 1..h {
        fine[nf - m] = spec[n - m];
    }
    fine[h] = spec[h] * 0.5;
    fine[nf - h] = spec[h] * 0.5;
    planner.plan_fft_inverse(nf).process(&mut fine);
    let scale = 1.0 / n as f64;
    Ok(fine.into_iter().map(|v| v * scale).collect())
}

/// Spectral differentiation matrix on `n` (even) equispaced nodes of `[0, 2π)`.
pub fn trig_diff_matrix(n: usize) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as isize - j as isize;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * d as f64 * h).tan()
        }
    })
}

/// Kress weights `R_j` for `∫ ln(4 sin²((t_i-τ)/2)) f(τ) dτ ≈ Σ_j R_{|i-j|} f(t_j)`
/// on `2n` equispaced nodes.
pub fn kress_log_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes / 2;
    let nf = n as f64;
    (0..n_nodes)
        .map(|j| {
            let mut s = 0.0;
            for m in 1..n {
                s += (m as f64 * j as f64 * PI / nf).cos() / m as f64;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / nf * s - PI / (nf * nf) * sign
        })
        .collect()
}

/// Neville–Aitken extrapolation of samples `f(h_i)` to `h = 0`.
pub fn extrapolate_to_zero(h: &[f64], f: &[C]) -> C {
    assert_eq!(h.len(), f.len());
    let mut p = f.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (h[i + m] * p[i] - h[i] * p[i + 1]) / (h[i + m] - h[i]);
        }
    }
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_large_rule() {
        let (x, w) = gauss_legendre(400);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 2.0 * 1f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn upsampling_reproduces_band_limited_data() {
        let n = 16;
        let f = |t: f64| C::new((3.0 * t).cos(), (5.0 * t).sin()) + 0.25 * (8.0 * t).cos();
        let v: Vec<C> = (0..n).map(|j| f(2.0 * PI * j as f64 / n as f64)).collect();
        let up = trig_upsample(&v, 4).unwrap();
        for (i, u) in up.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / (4 * n) as f64;
            let g = C::new((3.0 * t).cos(), (5.0 * t).sin()) + 0.25 * (8.0 * t).cos();
            assert!((u - g).norm() < 1e-13);
        }
    }

    #[test]
    fn cardinal_matches_upsampling() {
        let n = 12;
        let mut e = vec![C::new(0.0, 0.0); n];
        e[3] = C::new(1.0, 0.0);
        let up = trig_upsample(&e, 5).unwrap();
        for (i, u) in up.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / (5 * n) as f64;
            let tj = 2.0 * PI * 3.0 / n as f64;
            assert!((u.re - trig_cardinal(n, t - tj)).abs() < 1e-14);
        }
    }

    #[test]
    fn diff_matrix_differentiates_sin() {
        let n = 20;
        let d = trig_diff_matrix(n);
        let t: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        for i in 0..n {
            let v: f64 = (0..n).map(|j| d[(i, j)] * (3.0 * t[j]).sin()).sum();
            assert!((v - 3.0 * (3.0 * t[i]).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn kress_weights_integrate_log_kernel() {
        // ∫ ln(4 sin²(τ/2)) cos(mτ) dτ = -2π/m for m ≥ 1, 0 for m = 0.
        let n = 32;
        let r = kress_log_weights(n);
        for m in 0..8usize {
            let s: f64 = (0..n).map(|j| r[j] * (m as f64 * PI * j as f64 / 16.0).cos()).sum();
            let expect = if m == 0 { 0.0 } else { -2.0 * PI / m as f64 };
            assert!((s - expect).abs() < 1e-13, "m = {m}: {s}");
        }
    }

    #[test]
    fn neville_recovers_polynomial_limit() {
        let h: Vec<f64> = (1..=5).map(|m| 0.1 * m as f64).collect();
        let f: Vec<C> = h.iter().map(|&x| C::new(2.0 + x - 3.0 * x * x + x.powi(4), 0.0)).collect();
        assert!((extrapolate_to_zero(&h, &f) - C::new(2.0, 0.0)).norm() < 1e-12);
    }
}
