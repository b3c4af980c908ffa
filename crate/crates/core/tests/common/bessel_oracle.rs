//! Slow multi-precision oracle for `J_n(x)` and `Y_n(x)`, `x > 0`.
//!
//! Plain ascending series summed with 384-bit floats, so the cancellation
//! in the alternating sums (terms up to ~e^x) costs nothing visible in f64.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const P: usize = 384;
const RM: RoundingMode = RoundingMode::ToEven;
const EULER_GAMMA: &str = "0.57721566490153286060651209008240243104215933593992359880576723488486772677766467";

struct Ctx {
    cc: Consts,
}

impl Ctx {
    fn num(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, P)
    }
    fn int(&self, v: u64) -> BigFloat {
        BigFloat::from_u64(v, P)
    }
    fn round(&mut self, v: &BigFloat) -> f64 {
        let s = v.format(Radix::Dec, RM, &mut self.cc).expect("format");
        s.parse::<f64>().expect("parse")
    }
}

/// Returns `(J_n(x), Y_n(x))` rounded to f64.
pub fn jy(n: usize, x: f64) -> (f64, f64) {
    let mut c = Ctx { cc: Consts::new().expect("constants") };
    let gamma = BigFloat::parse(EULER_GAMMA, Radix::Dec, P, RM, &mut c.cc);
    let pi = c.cc.pi(P, RM);
    let half = c.num(x).div(&c.int(2), P, RM);
    let q = half.mul(&half, P, RM); // (x/2)^2

    // lead = (x/2)^n / n!
    let mut lead = c.int(1);
    for m in 1..=n {
        lead = lead.mul(&half, P, RM).div(&c.int(m as u64), P, RM);
    }

    // J and the digamma-weighted series together.
    let mut term = lead.clone();
    let mut j = BigFloat::new(P);
    let mut s_psi = BigFloat::new(P);
    // psi(k+1) + psi(n+k+1) = -2γ + H_k + H_{n+k}
    let mut hk = BigFloat::new(P);
    let mut hnk = BigFloat::new(P);
    for m in 1..=n {
        hnk = hnk.add(&c.int(1).div(&c.int(m as u64), P, RM), P, RM);
    }
    let two_gamma = gamma.mul(&c.int(2), P, RM);
    let mut k: u64 = 0;
    loop {
        let signed = if k.is_multiple_of(2) { term.clone() } else { term.neg() };
        j = j.add(&signed, P, RM);
        let psi = hk.add(&hnk, P, RM).sub(&two_gamma, P, RM);
        s_psi = s_psi.add(&signed.mul(&psi, P, RM), P, RM);
        k += 1;
        term = term.mul(&q, P, RM).div(&c.int(k * (n as u64 + k)), P, RM);
        hk = hk.add(&c.int(1).div(&c.int(k), P, RM), P, RM);
        hnk = hnk.add(&c.int(1).div(&c.int(n as u64 + k), P, RM), P, RM);
        if k > 20 && (k as f64) > x * 1.5 + 40.0 {
            break;
        }
    }

    // Finite sum Σ_{k<n} (n-k-1)!/k! (x/2)^{2k-n}
    let mut fin = BigFloat::new(P);
    if n > 0 {
        let inv_half = c.int(1).div(&half, P, RM);
        for kk in 0..n {
            let mut t = c.int(1);
            for m in 1..(n - kk) {
                t = t.mul(&c.int(m as u64), P, RM);
            }
            for m in 1..=kk {
                t = t.div(&c.int(m as u64), P, RM);
            }
            let e = 2 * kk as i64 - n as i64;
            let base = if e >= 0 { half.clone() } else { inv_half.clone() };
            t = t.mul(&base.powi(e.unsigned_abs() as usize, P, RM), P, RM);
            fin = fin.add(&t, P, RM);
        }
    }

    let lnh = half.ln(P, RM, &mut c.cc);
    let two = c.int(2);
    let y = two
        .mul(&lnh, P, RM)
        .mul(&j, P, RM)
        .sub(&fin, P, RM)
        .sub(&s_psi, P, RM)
        .div(&pi, P, RM);
    let jf = c.round(&j);
    let yf = c.round(&y);
    (jf, yf)
}
