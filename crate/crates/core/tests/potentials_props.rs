//! Property tests: kernel symmetries and linearity of every operator.

use helmholtz_minimax::geometry::{curve_grid, ClosedCurve};
use helmholtz_minimax::potentials::{assemble_boundary_ops, eval_layer, kernel_bundle, BoundaryDensity, LayerKind};
use helmholtz_minimax::{Complex64 as C, WaveNumber};
use proptest::prelude::*;

fn unit(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_exchange_symmetry(
        x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, y0 in -3.0f64..3.0, y1 in -3.0f64..3.0,
        a in 0.0f64..6.3, b in 0.0f64..6.3, kr in 0.1f64..10.0, ki in 0.0f64..2.0,
    ) {
        let (x, y) = ([x0, x1], [y0, y1]);
        prop_assume!(((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt() > 1e-2);
        let k = WaveNumber::new(kr, ki).unwrap();
        let (nx, ny) = (unit(a), unit(b));
        let p = kernel_bundle(2, k, &x, &y, &nx, &ny).unwrap();
        let q = kernel_bundle(2, k, &y, &x, &ny, &nx).unwrap();
        let tol = |v: C| 1e-13 * v.norm().max(1e-300);
        prop_assert!((p.phi - q.phi).norm() <= tol(p.phi));
        prop_assert!((p.dphi_dny - q.dphi_dnx).norm() <= tol(p.dphi_dny) + 1e-15);
        prop_assert!((p.d2phi - q.d2phi).norm() <= tol(p.d2phi) + 1e-15);
    }

    #[test]
    fn operators_are_linear(
        coef in proptest::collection::vec(-1.0f64..1.0, 8),
        ar in -2.0f64..2.0, ai in -2.0f64..2.0,
    ) {
        let g = curve_grid(&ClosedCurve::ellipse([0.0, 0.0], 1.5, 1.0).unwrap(), 16).unwrap();
        let k = WaveNumber::new(1.5, 0.1).unwrap();
        let ops = assemble_boundary_ops(&g, k).unwrap();
        let f = BoundaryDensity::from_iterator(16, g.t.iter().map(|t| C::new(coef[0] * t.cos() + coef[1], coef[2] * (2.0 * t).sin())));
        let h = BoundaryDensity::from_iterator(16, g.t.iter().map(|t| C::new(coef[3] * (3.0 * t).cos(), coef[4] + coef[5] * t.sin())));
        let alpha = C::new(ar, ai);
        let beta = C::new(coef[6], coef[7]);
        let comb = &f * alpha + &h * beta;
        for m in [&ops.s, &ops.k, &ops.kp, &ops.t] {
            let lhs = m * &comb;
            let rhs = (m * &f) * alpha + (m * &h) * beta;
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (lhs.norm() + rhs.norm() + 1.0));
        }
        let targets = [[3.0, 1.0], [-2.5, 2.0]];
        for kind in [LayerKind::Single, LayerKind::Double] {
            let l = eval_layer(&g, &comb, kind, k, &targets).unwrap();
            let a = eval_layer(&g, &f, kind, k, &targets).unwrap();
            let b = eval_layer(&g, &h, kind, k, &targets).unwrap();
            for i in 0..2 {
                prop_assert!((l[i] - (a[i] * alpha + b[i] * beta)).norm() <= 1e-12 * (l[i].norm() + 1.0));
            }
        }
    }
}
