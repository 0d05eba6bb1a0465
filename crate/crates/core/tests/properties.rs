use nalgebra::{vector, Vector1, Vector3};
use proptest::prelude::*;
use sigmalift::studies::hocbf_membership;
use sigmalift::*;

fn family() -> impl Strategy<Value = SigmoidFamily> {
    prop::sample::select(SigmoidFamily::SIGMOIDS.to_vec())
}

proptest! {
    #[test]
    fn sigmoids_are_odd_bounded_and_increasing(fam in family(), z in -50.0f64..50.0, dz in 1e-3f64..1.0) {
        let y = fam.unlift(z);
        prop_assert!(y.abs() < 1.0);
        prop_assert_eq!(y, -fam.unlift(-z));
        prop_assert!(fam.unlift(z + dz) >= y);
    }

    #[test]
    fn lift_inverts_unlift(fam in family(), x in -0.999f64..0.999) {
        let z = fam.lift(x).unwrap();
        prop_assert!((fam.unlift(z) - x).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_integral_is_even_and_positive(fam in family(), z in -100.0f64..100.0) {
        let v = fam.integral(z);
        prop_assert!(v >= 0.0);
        prop_assert!((v - fam.integral(-z)).abs() <= 1e-14 * v.max(1.0));
        // 𝒱 is bounded by |ζ| since |ψ| < 1
        prop_assert!(v <= z.abs() + 1e-15);
    }

    #[test]
    fn tied_gain_rate_is_nonpositive(
        k1 in 0.01f64..20.0,
        q in prop::array::uniform3(-0.99f64..0.99),
        w in prop::array::uniform3(-0.99f64..0.99),
        qd in prop::array::uniform3(-0.99f64..0.99),
    ) {
        let b1 = Vector3::repeat(std::f64::consts::FRAC_PI_3);
        let b2 = vector![0.03, 0.02, 0.01];
        let l = LiftedDynamics::new(
            Attitude::new(vector![1.0, 2.0, 3.0]).unwrap(),
            LiftConfig::uniform(Bounds::new(b1).unwrap(), SigmoidFamily::Atanh),
            LiftConfig::uniform(Bounds::new(b2).unwrap(), SigmoidFamily::Atanh),
        );
        let cc = ControllerConfig::new(&l, k1, Vector3::from(qd).component_mul(&b1)).unwrap();
        let (_, rec) = cc
            .measure(&l, &Vector3::from(q).component_mul(&b1), &Vector3::from(w).component_mul(&b2))
            .unwrap();
        prop_assert!(rec.vdot <= 0.0);
        prop_assert!((rec.vdot - rec.tied_rate(cc.k1, cc.k2)).abs() <= 1e-10 * rec.vdot.abs().max(1.0));
    }

    #[test]
    fn proposed_double_integrator_rate_is_bounded(
        k1 in 0.1f64..5.0, k2 in 0.1f64..5.0, z1 in -20.0f64..20.0, z2 in -15.0f64..15.0,
    ) {
        let l = sigmalift::studies::comparison_plant();
        let cc = ControllerConfig::new(&l, k1, Vector1::new(0.0)).unwrap().with_k2(k2).unwrap();
        let u = cc.control(&l, &Vector1::new(z1), &Vector1::new(z2)).unwrap();
        let (_, dz2) = l.lifted_field(&Vector1::new(z1), &Vector1::new(z2), &u).unwrap();
        prop_assert!(dz2[0].abs() <= k2 * (1.0 + k1 * z1.abs()) * (1.0 + 1e-9));
    }

    #[test]
    fn barrier_exclusion_is_symmetric(x1 in -1.5f64..1.5, x2 in -3.0f64..3.0, alpha in 0.01f64..100.0) {
        prop_assert_eq!(hocbf_membership(x1, x2, alpha), hocbf_membership(-x1, -x2, alpha));
        let (c0, _) = hocbf_membership(x1, x2, alpha);
        prop_assert_eq!(c0, x1.abs() <= 1.0);
    }

    #[test]
    fn recovered_state_is_inside(fam in family(), z in -1e3f64..1e3, b in 0.01f64..10.0) {
        let cfg = LiftConfig::uniform(Bounds::new(Vector1::new(b)).unwrap(), fam);
        let x = cfg.recover(&cfg.zeta(&Vector1::new(z)));
        prop_assert!(cfg.contains(&x));
    }
}
