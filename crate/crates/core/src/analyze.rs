//! Post-hoc checks of a synthesized observer: closed-form error dynamics,
//! measured norms against the solver certificates, and the algebraic
//! identities the observer structure relies on.

use crate::augment::AugmentedSystem;
use crate::matlib::{self, Mat};
use crate::synth::ObserverDesign;

/// `e' = N e - M D_a w_a + [K, -E] nu_a`, `e_d = Cbar_a e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub n: Mat,
    pub b_omega: Mat,
    /// Columns for `nu` followed by columns for `nu'`.
    pub b_nu: Mat,
    pub c_out: Mat,
}

pub fn build_error_system(design: &ObserverDesign, aug: &AugmentedSystem) -> ErrorSystem {
    ErrorSystem {
        n: design.n.clone(),
        b_omega: -(&design.m * &aug.d),
        b_nu: design.b_bar(),
        c_out: aug.cbar_a.clone(),
    }
}

/// 2000 log-spaced points over `[1e-3, 1e3]` rad/s.
pub fn default_grid() -> Vec<f64> {
    matlib::log_grid(1e-3, 1e3, 2000)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub omega: f64,
    pub sigma_disturbance: f64,
    pub sigma_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// `-max Re eig(N)`.
    pub hurwitz_margin: f64,
    pub hinf_measured: Option<f64>,
    pub hinf_grid_peak: f64,
    pub lambda_star: Option<f64>,
    pub h2_measured: Option<f64>,
    pub gamma_star: Option<f64>,
    pub iss_gain_bound: Option<f64>,
    /// Largest eigenvalue of `N^T P + P N + eps I` (should be <= 0).
    pub lyapunov_excess: Option<f64>,
    pub identity_residuals: Vec<(&'static str, f64)>,
    pub grid: Vec<GridPoint>,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Relative slack allowed when comparing a measured norm to its certificate.
const CERT_RTOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-8;

pub fn verify_design(design: &ObserverDesign, aug: &AugmentedSystem, grid: &[f64]) -> VerificationReport {
    let es = build_error_system(design, aug);
    let cert = &design.certificates;
    let slack = cert.solver_residual.abs();
    let mut checks = Vec::new();

    let hurwitz_margin = -matlib::spectral_abscissa(&es.n);
    let stable = hurwitz_margin > 0.0;
    checks.push(Check {
        name: "hurwitz",
        passed: stable,
        detail: format!("-max Re eig(N) = {hurwitz_margin:.6e}"),
    });

    let p_min = matlib::min_sym_eig(&cert.p);
    checks.push(Check {
        name: "p_positive",
        passed: p_min > 0.0,
        detail: format!("min eig(P) = {p_min:.6e}"),
    });

    let lyapunov_excess = cert.epsilon.map(|eps| {
        let delta = es.n.transpose() * &cert.p + &cert.p * &es.n;
        matlib::max_sym_eig(&(matlib::sym(&delta) + Mat::identity(delta.nrows(), delta.nrows()) * eps))
    });
    if let Some(excess) = lyapunov_excess {
        let scale = 1.0 + matlib::max_abs(&cert.p) * matlib::max_abs(&es.n);
        let tol = slack + 1e-9 * scale;
        checks.push(Check {
            name: "iss_lyapunov",
            passed: excess <= tol,
            detail: format!("lambda_max(N^T P + P N + eps I) = {excess:.6e} (tol {tol:.1e})"),
        });
    }

    let hinf_measured = if stable && es.b_omega.ncols() > 0 {
        matlib::hinf_norm(&es.n, &es.b_omega, &es.c_out, 1e-9).ok()
    } else {
        None
    };
    let h2_measured = if stable {
        matlib::h2_norm(&es.n, &es.b_nu, &es.c_out).ok()
    } else {
        None
    };
    let bound_check = |name: &'static str, measured: Option<f64>, bound: Option<f64>| -> Option<Check> {
        let bound = bound?;
        let passed = measured.is_some_and(|m| m <= bound * (1.0 + CERT_RTOL) + slack);
        Some(Check {
            name,
            passed,
            detail: match measured {
                Some(m) => format!("measured {m:.6e} vs certified {bound:.6e}"),
                None => format!("not measurable; certified {bound:.6e}"),
            },
        })
    };
    checks.extend(bound_check("hinf_certificate", hinf_measured, cert.lambda_star));
    checks.extend(bound_check("h2_certificate", h2_measured, cert.gamma_star));

    let (a, b, c) = (&aug.a, &aug.b, &aug.c);
    let identity_residuals = vec![
        ("G - M B_a", matlib::max_abs(&(&design.g - &design.m * b))),
        (
            "N M + L C_a - M A_a",
            matlib::max_abs(&(&design.n * &design.m + &design.l * c - &design.m * a)),
        ),
        ("N E + L - K", matlib::max_abs(&(&design.n * &design.e + &design.l - &design.k))),
        (
            "M - (I + E C_a)",
            matlib::max_abs(&(&design.m - Mat::identity(aug.n_z(), aug.n_z()) - &design.e * c)),
        ),
    ];
    let id_scale = 1.0
        + matlib::max_abs(&design.m) * matlib::max_abs(a) * aug.n_z() as f64
        + matlib::max_abs(&design.k) * matlib::max_abs(c) * (1.0 + matlib::max_abs(&design.e) * matlib::max_abs(c));
    let worst = identity_residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    checks.push(Check {
        name: "identities",
        passed: worst <= IDENTITY_TOL * id_scale,
        detail: format!("worst residual {worst:.3e}"),
    });

    let mut grid_points = Vec::with_capacity(grid.len());
    let mut hinf_grid_peak: f64 = 0.0;
    for &w in grid {
        let sd = if es.b_omega.ncols() > 0 {
            matlib::sigma_max_at(&es.n, &es.b_omega, &es.c_out, w).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        let sn = matlib::sigma_max_at(&es.n, &es.b_nu, &es.c_out, w).unwrap_or(f64::INFINITY);
        hinf_grid_peak = hinf_grid_peak.max(sd);
        grid_points.push(GridPoint {
            omega: w,
            sigma_disturbance: sd,
            sigma_noise: sn,
        });
    }

    VerificationReport {
        hurwitz_margin,
        hinf_measured,
        hinf_grid_peak,
        lambda_star: cert.lambda_star,
        h2_measured,
        gamma_star: cert.gamma_star,
        iss_gain_bound: cert.iss_gain_bound,
        lyapunov_excess,
        identity_residuals,
        grid: grid_points,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{build_augmented, UltraLocalOrders};
    use crate::model::{transform, PlantModel};
    use crate::synth::{solve_mixed_hinf_min, DEFAULT_EPSILON};

    fn toy() -> AugmentedSystem {
        let plant = PlantModel::linear(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::zeros(2, 0),
            Mat::from_row_slice(2, 1, &[0.3, 1.0]),
        )
        .unwrap();
        build_augmented(&transform(plant, 1e-10).unwrap(), UltraLocalOrders::uniform(2).unwrap()).unwrap()
    }

    #[test]
    fn solver_design_passes_every_check() {
        let aug = toy();
        let d = solve_mixed_hinf_min(&aug, DEFAULT_EPSILON, 20.0).unwrap();
        let rep = verify_design(&d, &aug, &default_grid());
        assert!(rep.passed(), "{:?}", rep.failed_checks());
        let names: Vec<_> = rep.checks.iter().map(|c| c.name).collect();
        assert_eq!(
            names,
            ["hurwitz", "p_positive", "iss_lyapunov", "hinf_certificate", "h2_certificate", "identities"]
        );
        let measured = rep.hinf_measured.unwrap();
        assert!(rep.hinf_grid_peak <= measured * (1.0 + 1e-6));
        assert!(rep.hinf_grid_peak >= 0.9 * measured);
        assert_eq!(rep.grid.len(), 2000);
    }

    #[test]
    fn perturbed_gain_is_caught() {
        let aug = toy();
        let mut d = solve_mixed_hinf_min(&aug, DEFAULT_EPSILON, 20.0).unwrap();
        d.k.add_scalar_mut(10.0);
        let rep = verify_design(&d, &aug, &default_grid());
        assert!(!rep.passed());
        assert!(rep.failed_checks().iter().any(|c| c.name == "identities"));
    }

    #[test]
    fn error_system_uses_the_observer_matrices() {
        let aug = toy();
        let d = solve_mixed_hinf_min(&aug, DEFAULT_EPSILON, 20.0).unwrap();
        let es = build_error_system(&d, &aug);
        assert_eq!(es.b_omega, -(&d.m * &aug.d));
        assert_eq!(es.b_nu.ncols(), 2 * aug.m());
        assert_eq!(es.c_out, aug.cbar_a);
    }
}
