//! Dense complex LU with a condition estimate, and a pivoted tridiagonal solver.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64 as C;

use crate::error::{Error, Result};

/// Solves are refused beyond this 1-norm condition estimate.
pub const MAX_CONDITION: f64 = 1e12;

/// LU factorization of a square complex matrix, with its 1-norm condition
/// estimate (Hager–Higham) computed at construction.
pub struct DenseSolver {
    lu: LU<C, Dyn, Dyn>,
    n: usize,
    condition: f64,
}

impl DenseSolver {
    /// Factor `a`; fails with `SingularSystem` if singular or worse conditioned
    /// than [`MAX_CONDITION`].
    pub fn new(a: DMatrix<C>, context: &str) -> Result<Self> {
        Self::with_limit(a, context, MAX_CONDITION)
    }

    pub fn with_limit(a: DMatrix<C>, context: &str, limit: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch { expected: n, got: a.ncols() });
        }
        let norm_a = norm1(&a);
        let lu = a.lu();
        if !lu.is_invertible() || norm_a == 0.0 {
            return Err(Error::SingularSystem { context: context.to_string(), condition: f64::INFINITY });
        }
        let mut s = DenseSolver { lu, n, condition: f64::INFINITY };
        let inv_norm = s.inverse_norm1_estimate();
        s.condition = norm_a * inv_norm;
        if !s.condition.is_finite() || s.condition > limit {
            return Err(Error::SingularSystem { context: context.to_string(), condition: s.condition });
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// 1-norm condition number estimate.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DVector<C>) -> DVector<C> {
        let mut x = b.clone();
        self.lu.solve_mut(&mut x);
        x
    }

    pub fn solve_matrix(&self, b: &DMatrix<C>) -> DMatrix<C> {
        let mut x = b.clone();
        self.lu.solve_mut(&mut x);
        x
    }

    /// Solves `A^H x = b` with the same factors (`P A = L U`).
    pub fn solve_adjoint(&self, b: &DVector<C>) -> DVector<C> {
        let l = self.lu.l();
        let u = self.lu.u();
        let w = u.adjoint().solve_lower_triangular(b).expect("nonsingular U");
        let mut v = l.adjoint().solve_upper_triangular(&w).expect("unit L");
        self.lu.p().inv_permute_rows(&mut v);
        v
    }

    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = DVector::from_element(n, C::new(1.0 / n as f64, 0.0));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.norm()).sum::<f64>();
            let xi = y.map(|v| if v.norm() == 0.0 { C::new(1.0, 0.0) } else { v / v.norm() });
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx = z.dotc(&x).re;
            if iter > 0 && (zmax <= ztx || j == last_j) {
                break;
            }
            last_j = j;
            x = DVector::zeros(n);
            x[j] = C::new(1.0, 0.0);
        }
        // Higham's safeguard vector.
        let alt = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            C::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
        });
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// Maximum absolute column sum.
pub fn norm1(a: &DMatrix<C>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Spectral condition number from the singular values.
pub fn condition_2(a: &DMatrix<C>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// LU factorization of a complex tridiagonal matrix with partial pivoting
/// (the LAPACK `gttrf`/`gttrs` scheme).
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    dl: Vec<C>,
    d: Vec<C>,
    du: Vec<C>,
    du2: Vec<C>,
    swapped: Vec<bool>,
}

impl Tridiagonal {
    /// `dl` sub-, `d` main, `du` super-diagonal.
    pub fn factor(mut dl: Vec<C>, mut d: Vec<C>, mut du: Vec<C>) -> Result<Self> {
        let n = d.len();
        if n == 0 || dl.len() + 1 != n || du.len() + 1 != n {
            return Err(Error::ShapeMismatch { expected: n.saturating_sub(1), got: dl.len() });
        }
        let mut du2 = vec![C::new(0.0, 0.0); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i].norm() != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|v| v.norm() == 0.0 || !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SingularSystem { context: "tridiagonal factorization".into(), condition: f64::INFINITY });
        }
        Ok(Tridiagonal { dl, d, du, du2, swapped })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, b: &mut [C]) {
        let n = self.d.len();
        assert_eq!(b.len(), n, "tridiagonal right-hand side length");
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
