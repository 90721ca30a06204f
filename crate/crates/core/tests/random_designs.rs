mod common;

use ultralocal::analyze::{default_grid, verify_design};
use ultralocal::matlib::max_abs;
use ultralocal::synth::{solve, DesignMode, SynthOptions};
use ultralocal::Error;

fn modes() -> [DesignMode; 5] {
    [
        DesignMode::Iss,
        DesignMode::Hinf,
        DesignMode::H2,
        DesignMode::MixedHinf { gamma_max: 50.0 },
        DesignMode::MixedH2 { lambda_max: 10.0 },
    ]
}

#[test]
fn identities_hold_for_random_designs() {
    let opts = SynthOptions::default();
    let mut feasible = 0;
    for seed in 0..10 {
        let (_, aug) = common::random_small_plant(seed);
        for mode in [DesignMode::Iss, DesignMode::MixedHinf { gamma_max: 50.0 }] {
            let Ok(d) = solve(&aug, mode, &opts) else { continue };
            feasible += 1;
            assert!(max_abs(&(&d.g - &d.m * &aug.b)) < 1e-8);
            assert!(max_abs(&(&d.n * &d.m + &d.l * &aug.c - &d.m * &aug.a)) < 1e-8);
            assert!(max_abs(&(&d.n * &d.e + &d.l - &d.k)) < 1e-8);
        }
    }
    assert!(feasible >= 10, "only {feasible} feasible designs");
}

#[test]
fn certificates_dominate_measured_norms() {
    let opts = SynthOptions {
        pole_radius: Some(100.0),
        ..Default::default()
    };
    for seed in 0..5 {
        let (_, aug) = common::random_small_plant(seed);
        for mode in modes() {
            match solve(&aug, mode, &opts) {
                Ok(d) => {
                    let rep = verify_design(&d, &aug, &default_grid());
                    assert!(rep.passed(), "seed {seed} {}: {:?}", mode.name(), rep.failed_checks());
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => panic!("seed {seed} {}: {e}", mode.name()),
            }
        }
    }
}
