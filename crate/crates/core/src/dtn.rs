//! Truncated circular Dirichlet-to-Neumann maps and the exterior extension.
//!
//! On `Γ_R = {|x| = R}` a trace `ψ(R, θ) = Σ_{|n|≤N_f} c_n e^{inθ}` is mapped by
//! `M^(1)_k` to `Σ k H_n^(1)′(kR)/H_n^(1)(kR) c_n e^{inθ}` (outgoing field
//! outside `Γ_R`) and by `M^(2)_{k̄}` to the same with `k̄` and `H^(2)`
//! (incoming). The two symbols are complex conjugates, so the maps are
//! adjoint to each other in `L²(Γ_R)`.

use num_complex::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::{hankel_log_derivatives, hankel_ratios, HankelKind};
use crate::{Point, WaveNumber};

/// Which radiation condition the map encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Radiation {
    /// `M^(1)_k`: outgoing, Hankel functions of the first kind at `kR`.
    Outgoing,
    /// `M^(2)_{k̄}`: incoming, Hankel functions of the second kind at `k̄R`.
    Incoming,
}

impl Radiation {
    /// The wavenumber the variant actually uses given the problem's `k`.
    pub fn effective(self, k: WaveNumber) -> C {
        match self {
            Radiation::Outgoing => k.value(),
            Radiation::Incoming => k.value().conj(),
        }
    }

    pub fn hankel_kind(self) -> HankelKind {
        match self {
            Radiation::Outgoing => HankelKind::First,
            Radiation::Incoming => HankelKind::Second,
        }
    }
}

/// Fourier coefficients `c_n`, `|n| ≤ N_f`, of a trace on the circle `r = R`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierTrace {
    pub radius: f64,
    /// `coeffs[n + N_f] = c_n`.
    pub coeffs: Vec<C>,
}

impl FourierTrace {
    pub fn zeros(radius: f64, n_f: usize) -> Self {
        FourierTrace { radius, coeffs: vec![C::new(0.0, 0.0); 2 * n_f + 1] }
    }

    /// From coefficients ordered `n = -N_f..=N_f`.
    pub fn from_coeffs(radius: f64, coeffs: Vec<C>) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::domain("Fourier trace needs an odd number of coefficients"));
        }
        if !(radius > 0.0) {
            return Err(Error::domain(format!("trace radius must be positive, got {radius}")));
        }
        Ok(FourierTrace { radius, coeffs })
    }

    /// Single mode `c_m = value`.
    pub fn mode(radius: f64, n_f: usize, m: i32, value: C) -> Self {
        let mut t = FourierTrace::zeros(radius, n_f);
        t.set(m, value);
        t
    }

    /// Coefficients `|n| ≤ N_f` of equispaced samples `θ_j = 2πj/N_θ`,
    /// `N_θ ≥ 2N_f + 1`.
    pub fn from_samples(radius: f64, samples: &[C], n_f: usize) -> Result<Self> {
        let m = samples.len();
        if m < 2 * n_f + 1 {
            return Err(Error::domain(format!("{m} samples cannot resolve |n| <= {n_f}")));
        }
        let mut buf = samples.to_vec();
        FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
        let scale = 1.0 / m as f64;
        let coeffs = (-(n_f as i64)..=n_f as i64).map(|n| buf[n.rem_euclid(m as i64) as usize] * scale).collect();
        Ok(FourierTrace { radius, coeffs })
    }

    pub fn n_f(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    /// `c_n`, zero beyond the cutoff.
    pub fn coeff(&self, n: i32) -> C {
        let nf = self.n_f() as i32;
        if n.abs() > nf {
            C::new(0.0, 0.0)
        } else {
            self.coeffs[(n + nf) as usize]
        }
    }

    pub fn set(&mut self, n: i32, value: C) {
        let nf = self.n_f() as i32;
        assert!(n.abs() <= nf, "mode {n} beyond cutoff {nf}");
        self.coeffs[(n + nf) as usize] = value;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i32, C)> + '_ {
        let nf = self.n_f() as i32;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i32 - nf, *c))
    }

    /// `ψ(R, θ)`.
    pub fn eval(&self, theta: f64) -> C {
        self.modes().map(|(n, c)| c * C::new(0.0, n as f64 * theta).exp()).sum()
    }

    /// Values at `θ_j = 2πj/N_θ`.
    pub fn to_samples(&self, n_theta: usize) -> Vec<C> {
        let mut buf = vec![C::new(0.0, 0.0); n_theta];
        for (n, c) in self.modes() {
            let idx = (n as i64).rem_euclid(n_theta as i64) as usize;
            buf[idx] += c;
        }
        FftPlanner::<f64>::new().plan_fft_inverse(n_theta).process(&mut buf);
        buf
    }

    /// `∫_{Γ_R} u v̄ dΓ = 2πR Σ c_n conj(d_n)`.
    pub fn inner(&self, other: &FourierTrace) -> Result<C> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::ShapeMismatch { expected: self.coeffs.len(), got: other.coeffs.len() });
        }
        let s: C = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum();
        Ok(s * 2.0 * PI * self.radius)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(0.0)
    }
}

/// Symbols `m_n` of the map for `n = 0..=N_f` (equal for `±n`).
pub fn dtn_symbols(variant: Radiation, k: WaveNumber, radius: f64, n_f: usize) -> Result<Vec<C>> {
    let kk = variant.effective(k);
    let ld = hankel_log_derivatives(variant.hankel_kind(), n_f, kk * radius)?;
    Ok(ld.into_iter().map(|l| kk * l).collect())
}

/// `M^(1)_k ψ` or `M^(2)_{k̄} ψ` in Fourier form.
pub fn dtn_apply(variant: Radiation, k: WaveNumber, trace: &FourierTrace) -> Result<FourierTrace> {
    let sym = dtn_symbols(variant, k, trace.radius, trace.n_f())?;
    let coeffs = trace.modes().map(|(n, c)| c * sym[n.unsigned_abs() as usize]).collect();
    Ok(FourierTrace { radius: trace.radius, coeffs })
}

/// Inverse of [`dtn_apply`] (Neumann-to-Dirichlet in Fourier form).
pub fn dtn_invert(variant: Radiation, k: WaveNumber, trace: &FourierTrace) -> Result<FourierTrace> {
    let sym = dtn_symbols(variant, k, trace.radius, trace.n_f())?;
    let coeffs = trace.modes().map(|(n, c)| c / sym[n.unsigned_abs() as usize]).collect();
    Ok(FourierTrace { radius: trace.radius, coeffs })
}

/// Largest relative residual `|⟨M^(1)_k φ, ψ⟩ − ⟨φ, M^(2)_{k̄} ψ⟩| / (‖M^(1)_kφ‖‖ψ‖)`
/// over `pairs` random trace pairs with Gaussian coefficients.
pub fn dtn_adjoint_check(k: WaveNumber, radius: f64, n_f: usize, pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    fn random(rng: &mut impl Rng, radius: f64, n_f: usize) -> FourierTrace {
        let coeffs = (0..2 * n_f + 1).map(|_| C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        FourierTrace { radius, coeffs }
    }
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let phi = random(rng, radius, n_f);
        let psi = random(rng, radius, n_f);
        let m1 = dtn_apply(Radiation::Outgoing, k, &phi)?;
        let m2 = dtn_apply(Radiation::Incoming, k, &psi)?;
        let lhs = m1.inner(&psi)?;
        let rhs = phi.inner(&m2)?;
        let scale = m1.norm() * psi.norm();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).norm() / scale);
        }
    }
    Ok(worst)
}

/// `Σ c_n H_n(k r_P)/H_n(kR) e^{inθ_P}` at `r_P ≥ R`; the incoming variant
/// uses `H^(2)` at `k̄`.
pub fn exterior_extend(variant: Radiation, k: WaveNumber, trace: &FourierTrace, point: Point) -> Result<C> {
    let rp = point[0].hypot(point[1]);
    if rp < trace.radius * (1.0 - 1e-14) {
        return Err(Error::domain(format!("extension point at r = {rp} lies inside Γ_R (R = {})", trace.radius)));
    }
    let theta = point[1].atan2(point[0]);
    let kk = variant.effective(k);
    let ratios = hankel_ratios(variant.hankel_kind(), trace.n_f(), kk * rp, kk * trace.radius)?;
    Ok(trace
        .modes()
        .map(|(n, c)| c * ratios[n.unsigned_abs() as usize] * C::new(0.0, n as f64 * theta).exp())
        .sum())
}
