use lattes_core::families::{self, LatticeInvariants};
use lattes_core::lindiag::{bn_membership, dn_membership, vn_membership};
use lattes_core::{Complex64 as C64, ProjPoint, RationalMap};
use proptest::prelude::*;

fn maps() -> Vec<RationalMap> {
    let c = |x: f64| C64::new(x, 0.0);
    vec![
        families::lattes_from_duplication(&LatticeInvariants::new(c(4.0), c(0.0)).unwrap()).unwrap(),
        families::quadratic_map(c(-0.5)).unwrap(),
        families::chebyshev_map(2).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]
    #[test]
    fn smaller_radius_keeps_membership(k in 0usize..3, re in -2.0f64..2.0, im in -2.0f64..2.0, n in 1usize..8, j in 0u32..4) {
        let f = &maps()[k];
        let x = ProjPoint::from_affine(C64::new(re, im));
        let rho = 0.4 / 2f64.powi(j as i32);
        if bn_membership(f, &x, n, rho, 0.5).unwrap() {
            prop_assert!(bn_membership(f, &x, n, rho / 2.0, 0.5).unwrap());
        }
    }

    #[test]
    fn smaller_nu_keeps_membership(k in 0usize..3, re in -2.0f64..2.0, im in -2.0f64..2.0, n in 0usize..15, nu in 0.01f64..1.0) {
        let f = &maps()[k];
        let x = ProjPoint::from_affine(C64::new(re, im));
        if vn_membership(f, &x, n, nu).unwrap() {
            prop_assert!(vn_membership(f, &x, n, nu * 0.5).unwrap());
        }
    }

    #[test]
    fn dn_is_bn_with_ratio_bound(k in 0usize..3, re in -2.0f64..2.0, im in -2.0f64..2.0, n in 1usize..8, tau in 0.5f64..20.0) {
        let f = &maps()[k];
        let x = ProjPoint::from_affine(C64::new(re, im));
        let b = bn_membership(f, &x, n, 0.1, 0.5).unwrap();
        let d = dn_membership(f, &x, n, 0.1, tau, 0.5).unwrap();
        let orbit = f.iterate(&x, n);
        let log_r = 0.5 * n as f64 * (f.degree() as f64).ln() - orbit.log_derivative_sum();
        prop_assert_eq!(d, b && log_r <= tau.ln());
    }
}

fn lattes_cloud() -> (RationalMap, lattes_core::sampler::EmpiricalMeasure) {
    use lattes_core::sampler::{backward_sample, SampleParams};
    let f = maps().remove(0);
    let m = backward_sample(&f, &SampleParams { chains: 1000, burn_in: 50, count: 50, seed: 5 }).unwrap();
    (f, m)
}

#[test]
fn lattes_ratios_stay_bounded() {
    use lattes_core::lindiag::derivative_ratio_series;
    let (f, m) = lattes_cloud();
    let s = derivative_ratio_series(&f, &m, 40).unwrap();
    // max over n <= 40 covers every N <= 40 at once
    let frac = s.bounded_fraction(100.0);
    assert!(frac >= 0.9, "bounded fraction {frac}");
}

#[test]
fn lattes_injectivity_grows_as_the_disk_shrinks() {
    use lattes_core::lindiag::{diagnostic_sweep, SweepParams};
    let (f, m) = lattes_cloud();
    let params = SweepParams {
        rhos: vec![0.2, 0.05],
        taus: vec![],
        nus: vec![],
        max_points: 1000,
        ..SweepParams::default()
    };
    let sweep = diagnostic_sweep(&f, &m, &[5, 10], &params).unwrap();
    let b = |rho: f64| sweep.series.iter().find(|s| s.family == "B" && s.rho == Some(rho)).unwrap();
    for i in 0..2 {
        assert!(b(0.05).fractions[i] > b(0.2).fractions[i], "{:?} vs {:?}", b(0.05).fractions, b(0.2).fractions);
    }
}
