use lattes_core::families::{self, LatticeInvariants};
use lattes_core::green::{green_convergence_rate, green_density_grid, green_function, Window};
use lattes_core::sampler::{backward_sample, SampleParams};
use lattes_core::{Complex64 as C64, RationalMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<RationalMap> {
    let c = |x: f64| C64::new(x, 0.0);
    vec![
        families::power_map(2).unwrap(),
        families::power_map(3).unwrap(),
        families::chebyshev_map(2).unwrap(),
        families::quadratic_map(c(0.1)).unwrap(),
        families::quadratic_map(c(0.25)).unwrap(),
        families::quadratic_map(c(-0.5)).unwrap(),
        families::lattes_from_duplication(&LatticeInvariants::new(c(4.0), c(0.0)).unwrap()).unwrap(),
        families::lattes_from_duplication(&LatticeInvariants::new(c(8.0), c(0.0)).unwrap()).unwrap(),
        families::lattes_from_duplication(&LatticeInvariants::new(c(4.0), c(1.0)).unwrap()).unwrap(),
    ]
}

#[test]
fn functional_equation_on_random_lifts() {
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in corpus() {
        for _ in 0..1000 {
            let z0 = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let z1 = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let g = green_function(&f, (z0, z1), tol).unwrap().value;
            let gf = green_function(&f, f.homogeneous_eval(z0, z1), tol).unwrap().value;
            let d = f.degree() as f64;
            assert!((gf - d * g).abs() <= 10.0 * tol, "G(F Z) {gf} vs d G(Z) {}", d * g);
        }
    }
}

#[test]
fn decay_factor_is_one_over_d() {
    for f in corpus().into_iter().skip(2) {
        let m = backward_sample(&f, &SampleParams { chains: 100, burn_in: 50, count: 2, seed: 3 }).unwrap();
        let fit = green_convergence_rate(&f, &m.points, 5, 20).unwrap().unwrap();
        let expected = 1.0 / f.degree() as f64;
        assert!((fit.factor / expected - 1.0).abs() <= 0.1, "factor {} vs {expected}", fit.factor);
    }
}

#[test]
fn grids_are_bit_identical_across_thread_counts() {
    let f = families::quadratic_map(C64::new(-0.5, 0.0)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| green_density_grid(&f, Window::square(-2.0, 2.0), 64, 80, 1e-10).unwrap())
    };
    let a = run(1);
    let b = run(5);
    assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn full_support_grids_carry_unit_mass() {
    let c = |x: f64| C64::new(x, 0.0);
    for (f, lo, hi) in [
        (families::quadratic_map(c(-0.5)).unwrap(), -2.5, 2.5),
        (families::quadratic_map(c(0.25)).unwrap(), -2.0, 2.0),
    ] {
        let grid = green_density_grid(&f, Window::square(lo, hi), 256, 256, 1e-10).unwrap();
        assert!((0.95..=1.05).contains(&grid.mass), "mass {}", grid.mass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn scaling_law(
        k in 0usize..9,
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, e in -3.0f64..3.0,
        log_mod in -20.0f64..20.0, arg in 0.0f64..6.3,
    ) {
        prop_assume!(a.abs() + b.abs() + c.abs() + e.abs() > 1e-3);
        let f = &corpus()[k];
        let z = (C64::new(a, b), C64::new(c, e));
        let lambda = C64::from_polar(log_mod.exp(), arg);
        let g = green_function(f, z, 1e-12).unwrap().value;
        let gl = green_function(f, (z.0 * lambda, z.1 * lambda), 1e-12).unwrap().value;
        prop_assert!((gl - g - log_mod).abs() <= 1e-9);
    }
}
