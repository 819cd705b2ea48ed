//! Invariants of the public API, checked on random inputs.

use proptest::prelude::*;
use rodflow::functionals::{free_energy, relative_entropy};
use rodflow::maps::{compress_particles, expand_particles};
use rodflow::measures::wasserstein2;
use rodflow::pde::solve_limit_pde;
use rodflow::simulate::{simulate_compressed, simulate_compressed_ensemble, simulate_expanded_direct};
use rodflow::{EmpiricalMeasure, ModelParams, PdeConfig, Potential, SimConfig};

fn huber_model(alpha: f64) -> ModelParams {
    ModelParams::new(alpha, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.3, 0.5).unwrap()).unwrap()
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compress_undoes_expand(x in points(1..80), alpha in 0.0f64..0.99) {
        let mu = EmpiricalMeasure::new(x).unwrap();
        let back = compress_particles(&expand_particles(&mu, alpha).unwrap(), alpha).unwrap();
        for (a, b) in mu.points().iter().zip(back.points()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expansion_leaves_rod_length_gaps(x in points(2..80), alpha in 0.0f64..0.99) {
        let n = x.len();
        let y = expand_particles(&EmpiricalMeasure::new(x).unwrap(), alpha).unwrap();
        for w in y.points().windows(2) {
            prop_assert!(w[1] - w[0] >= alpha / n as f64 - 1e-12);
        }
    }

    #[test]
    fn expansion_is_an_isometry(x in points(5..40), z in points(5..40), alpha in 0.0f64..0.99) {
        let n = x.len().min(z.len());
        let a = EmpiricalMeasure::new(x[..n].to_vec()).unwrap();
        let b = EmpiricalMeasure::new(z[..n].to_vec()).unwrap();
        let ea = expand_particles(&a, alpha).unwrap();
        let eb = expand_particles(&b, alpha).unwrap();
        prop_assert!((wasserstein2(&ea, &eb) - wasserstein2(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn relative_entropy_is_nonnegative(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, s1 in 0.3f64..1.5, s2 in 0.3f64..1.5) {
        let pc = PdeConfig::new(-8.0, 8.0, 0.02, 1.0);
        let mu = pc.discretize(|x| (-(x - c1).powi(2) / (2.0 * s1 * s1)).exp()).unwrap();
        let nu = pc.discretize(|x| (-(x - c2).powi(2) / (2.0 * s2 * s2)).exp()).unwrap();
        prop_assert!(relative_entropy(&mu, &nu).unwrap() >= -1e-12);
        prop_assert!(relative_entropy(&mu, &mu).unwrap().abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rods_never_overlap(x in points(2..12), seed in any::<u64>()) {
        let alpha = 0.5;
        let n = x.len();
        let init = expand_particles(&EmpiricalMeasure::new(x).unwrap(), alpha).unwrap();
        let mut cfg = SimConfig::new(1e-3, 0.2, seed);
        cfg.record_every = 10;
        let path = simulate_expanded_direct(&init, &huber_model(alpha), &cfg, 0).unwrap();
        for s in &path.states {
            for w in s.points().windows(2) {
                prop_assert!(w[1] - w[0] >= alpha / n as f64 - 1e-9);
            }
        }
    }

    #[test]
    fn limit_pde_keeps_mass_and_dissipates(c in -1.0f64..1.0, s in 0.3f64..0.8) {
        let params = huber_model(0.5);
        let pc = PdeConfig::new(-12.0, 12.0, 0.04, 0.3);
        let rho0 = pc.discretize(|x| (-(x - c).powi(2) / (2.0 * s * s)).exp()).unwrap();
        let path = solve_limit_pde(&rho0, &params, &pc).unwrap();
        let mut last = f64::INFINITY;
        for rho in &path.states {
            prop_assert!((rho.mass() - 1.0).abs() < 1e-10);
            prop_assert!(rho.values().iter().all(|&v| v >= 0.0 && 0.5 * v < 1.0));
            let fe = free_energy(rho, &params).total_unnormalized;
            prop_assert!(fe <= last + 1e-10);
            last = fe;
        }
    }
}

#[test]
fn trajectories_are_reproducible_and_distinct() {
    let init = EmpiricalMeasure::new(vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
    let params = huber_model(0.5);
    let cfg = SimConfig::new(1e-3, 0.1, 11);
    let a = simulate_compressed(&init, &params, &cfg, 3).unwrap();
    let b = simulate_compressed(&init, &params, &cfg, 3).unwrap();
    let c = simulate_compressed(&init, &params, &cfg, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.last(), c.last());
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let init = EmpiricalMeasure::new(vec![-1.0, 0.0, 0.5, 2.0, 3.0]).unwrap();
    let params = huber_model(0.5);
    let mut cfg = SimConfig::new(1e-3, 0.1, 5);
    cfg.trajectories = 16;
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_compressed_ensemble(&init, &params, &cfg)).unwrap()
    };
    assert_eq!(run(1), run(3));
}
