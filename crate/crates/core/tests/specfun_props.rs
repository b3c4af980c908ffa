//! Property tests for the cylinder functions.

use helmholtz_minimax::specfun::{bessel_jy, cyl_arrays, hankel, HankelKind};
use helmholtz_minimax::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #[test]
    fn wronskian_real(x in 0.1f64..50.0, n in 0usize..=30) {
        let (j, y) = bessel_jy(n, x).unwrap();
        let w = j.value.re * y.derivative.re - j.derivative.re * y.value.re;
        let expect = 2.0 / (PI * x);
        prop_assert!((w - expect).abs() < 1e-10 * expect, "residual {}", (w - expect).abs() / expect);
    }

    #[test]
    fn wronskian_complex(re in -20.0f64..20.0, im in 0.0f64..3.0, n in 0usize..=20) {
        let z = C::new(re, im);
        prop_assume!(z.norm() > 0.2);
        let a = cyl_arrays(n + 1, z).unwrap();
        let d = |f: &[C]| if n == 0 { -f[1] } else { f[n - 1] - f[n] * n as f64 / z };
        let w = a.j[n] * d(&a.y) - d(&a.j) * a.y[n];
        let expect = 2.0 / (PI * z);
        let scale = (a.j[n].norm() * d(&a.y).norm()).max(expect.norm());
        prop_assert!((w - expect).norm() < 1e-12 * scale);
    }

    #[test]
    fn conjugation_on_real_axis(x in 0.01f64..60.0, n in -40i32..=40) {
        let a = hankel(HankelKind::First, n, C::new(x, 0.0)).unwrap();
        let b = hankel(HankelKind::Second, n, C::new(x, 0.0)).unwrap();
        prop_assert_eq!(a.value.conj(), b.value);
        prop_assert_eq!(a.derivative.conj(), b.derivative);
    }

    #[test]
    fn reflection_of_orders(re in -30.0f64..30.0, im in 0.0f64..2.0, n in 0i32..=40, second in any::<bool>()) {
        let z = C::new(re, im);
        prop_assume!(z.norm() > 0.5);
        let kind = if second { HankelKind::Second } else { HankelKind::First };
        let p = hankel(kind, n, z).unwrap();
        let m = hankel(kind, -n, z).unwrap();
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((m.value - s * p.value).norm() <= 1e-15 * p.value.norm());
    }

    #[test]
    fn hankel_real_parts_are_j_and_y(x in 0.05f64..50.0, n in 0usize..=40) {
        let (j, y) = bessel_jy(n, x).unwrap();
        let h = hankel(HankelKind::First, n as i32, C::new(x, 0.0)).unwrap();
        prop_assert!((h.value.re - j.value.re).abs() <= 1e-15 * h.value.norm());
        prop_assert!((h.value.im - y.value.re).abs() <= 1e-15 * h.value.norm());
    }
}
