//! Property tests: reflection invariants on binomial trees and simulated
//! paths, and monotonicity of the envelope in the payoff.

use infoval_core::lattice::{build_binomial, snell_envelope, PayoffSpec};
use infoval_core::rbsde::{simulate_paths, skorokhod_residual, solve_rbsde, BasisSpec, MarketModel, Payoff};
use proptest::prelude::*;

fn tree(steps: usize, sigma: f64) -> infoval_core::FiltrationLattice {
    let dt = 1.0 / steps as f64;
    let up = (sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    build_binomial(100.0, up, down, (1.0 - down) / (up - down), steps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lattice_envelope_dominates_and_reflects(steps in 1usize..40, sigma in 0.05f64..0.6, strike in 60.0f64..140.0) {
        let lat = tree(steps, sigma);
        let put = PayoffSpec::put(&lat, strike).unwrap();
        let snell = snell_envelope(&lat, &put).unwrap();
        for k in 0..=steps {
            for i in 0..lat.width(k) {
                prop_assert!(snell.value_at(k, i) >= put.barrier().get(k, i) - 1e-12);
                prop_assert!(snell.increments.get(k, i) >= 0.0);
            }
        }
        prop_assert!(snell.skorokhod_residual(&put).abs() <= 1e-10);
    }

    #[test]
    fn lattice_envelope_is_monotone_in_the_strike(steps in 1usize..30, lo in 70.0f64..120.0, gap in 0.0f64..20.0) {
        let lat = tree(steps, 0.25);
        let a = snell_envelope(&lat, &PayoffSpec::put(&lat, lo).unwrap()).unwrap();
        let b = snell_envelope(&lat, &PayoffSpec::put(&lat, lo + gap).unwrap()).unwrap();
        for k in 0..=steps {
            for i in 0..lat.width(k) {
                prop_assert!(b.value_at(k, i) >= a.value_at(k, i) - 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn path_solution_dominates_and_reflects(seed in any::<u64>(), strike in 80.0f64..120.0, itm in any::<bool>()) {
        let paths = simulate_paths(&MarketModel::geometric(100.0, 0.0, 0.2, 1.0), 2000, 10, seed).unwrap();
        let put = Payoff::put(strike);
        let barrier = put.barrier(&paths);
        let basis = BasisSpec { itm_only: itm, ..BasisSpec::monomials(2) };
        let sol = solve_rbsde(&paths, &barrier, &put.terminal(&paths), None, basis).unwrap();
        for (yk, lk) in sol.y.iter().zip(&barrier) {
            for (y, l) in yk.iter().zip(lk) {
                prop_assert!(y >= l);
            }
        }
        prop_assert!(sol.dk.iter().flatten().all(|&d| d >= 0.0));
        prop_assert!(skorokhod_residual(&sol, &barrier).unwrap().abs() <= 1e-12);
        // the time-0 value sits between the immediate payoff and the strike
        prop_assert!(sol.y0() >= (strike - 100.0f64).max(0.0) - 1e-12);
        prop_assert!(sol.y0() <= strike);
    }
}
