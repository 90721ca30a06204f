//! LMI synthesis of the observer gains.
//!
//! With `R = P E` and `Q = P K` the Lyapunov derivative of the error dynamics
//! becomes affine in `(P, R, Q)`; see [`build_x`]. The design programs add
//! bounded-real and H2 blocks on top of the ISS condition `X + eps I <= 0`
//! and are handed to an [`SdpBackend`]. Strict inequalities are imposed with
//! a margin `delta = 1e-6 (1 + ||A_a||)`.

use crate::augment::AugmentedSystem;
use crate::error::{dim_err, Error, Result};
use crate::lmi::{Affine, VarSpace};
use crate::matlib::{self, Mat};
use crate::sdp::{InteriorPoint, SdpBackend, SdpProblem, SolveStatus, SolverSettings};

pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Designs whose `P` is worse conditioned than this are rejected.
pub const MAX_P_CONDITION: f64 = 1e10;
/// Tolerance of the post-recovery identity checks, relative to the size of
/// the products involved.
pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignMode {
    /// Feasibility of the ISS condition only.
    Iss,
    /// Minimise the H-infinity bound `lambda`.
    Hinf,
    /// Minimise the H2 bound `gamma`.
    H2,
    /// Minimise `lambda` subject to `gamma <= gamma_max`.
    MixedHinf { gamma_max: f64 },
    /// Minimise `gamma` subject to `lambda <= lambda_max`.
    MixedH2 { lambda_max: f64 },
}

impl DesignMode {
    pub fn name(&self) -> &'static str {
        match self {
            DesignMode::Iss => "iss",
            DesignMode::Hinf => "hinf",
            DesignMode::H2 => "h2",
            DesignMode::MixedHinf { .. } => "mixed-hinf",
            DesignMode::MixedH2 { .. } => "mixed-h2",
        }
    }

    fn uses_hinf(&self) -> bool {
        matches!(
            self,
            DesignMode::Hinf | DesignMode::MixedHinf { .. } | DesignMode::MixedH2 { .. }
        )
    }

    fn uses_h2(&self) -> bool {
        matches!(
            self,
            DesignMode::H2 | DesignMode::MixedHinf { .. } | DesignMode::MixedH2 { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub epsilon: f64,
    /// Overrides the default strictness margin when set.
    pub margin: Option<f64>,
    pub max_p_condition: f64,
    /// When set, confines the eigenvalues of `N` to the disk `|s| <= radius`
    /// through `[[-r P, P N], [N^T P, -r P]] <= 0`. Without it the
    /// H-infinity-only program has no attained optimum: its infimum is
    /// approached by observers of unbounded bandwidth.
    pub pole_radius: Option<f64>,
    pub solver: SolverSettings,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            margin: None,
            max_p_condition: MAX_P_CONDITION,
            pole_radius: None,
            solver: SolverSettings::default(),
        }
    }
}

impl SynthOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

/// Solver evidence attached to a design.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificates {
    pub p: Mat,
    pub lambda_star: Option<f64>,
    pub gamma_star: Option<f64>,
    /// `2 ||P [M D_a, -K, E]|| / eps`; `None` when no `eps` was involved.
    pub iss_gain_bound: Option<f64>,
    pub epsilon: Option<f64>,
    pub mode: Option<DesignMode>,
    /// Strictness margin used in the LMIs.
    pub margin: f64,
    /// Most negative block eigenvalue at the returned point (0 if none).
    pub solver_residual: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub e: Mat,
    pub k: Mat,
    pub n: Mat,
    pub g: Mat,
    pub l: Mat,
    pub m: Mat,
    pub certificates: Certificates,
}

impl ObserverDesign {
    /// `[K, -E]`, the input matrix of the measurement noise and its derivative.
    pub fn b_bar(&self) -> Mat {
        let mut out = Mat::zeros(self.k.nrows(), 2 * self.k.ncols());
        let m = self.k.ncols();
        out.columns_mut(0, m).copy_from(&self.k);
        out.columns_mut(m, m).copy_from(&(-&self.e));
        out
    }
}

/// Variables and constraints of one design program.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub sdp: SdpProblem,
    pub p: Affine,
    pub r: Affine,
    pub q: Affine,
    /// `(Z, gamma index)` when the H2 blocks are present.
    pub z: Option<Affine>,
    pub gamma: Option<usize>,
    pub lambda: Option<usize>,
    pub epsilon: f64,
    pub margin: f64,
    pub mode: DesignMode,
}

/// `X = A^T P + A^T C^T R^T - C^T Q^T + P A + R C A - Q C`.
pub fn build_x(aug: &AugmentedSystem, p: &Affine, r: &Affine, q: &Affine) -> Result<Affine> {
    let nz = aug.n_z();
    let m = aug.m();
    if p.shape() != (nz, nz) {
        return Err(dim_err("P", format!("{nz}x{nz}"), format!("{:?}", p.shape())));
    }
    for (name, v) in [("R", r), ("Q", q)] {
        if v.shape() != (nz, m) {
            return Err(dim_err(name, format!("{nz}x{m}"), format!("{:?}", v.shape())));
        }
    }
    let half = p
        .rmul(&aug.a)
        .add(&r.rmul(&(&aug.c * &aug.a)))
        .sub(&q.rmul(&aug.c));
    Ok(half.add(&half.transpose()))
}

fn default_margin(aug: &AugmentedSystem) -> f64 {
    1e-6 * (1.0 + matlib::norm2(&aug.a))
}

fn scalar_const(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

/// Assemble the program for `mode` without solving it.
pub fn build_problem(aug: &AugmentedSystem, mode: DesignMode, opts: &SynthOptions) -> Result<LmiProblem> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {}",
            opts.epsilon
        )));
    }
    match mode {
        DesignMode::MixedHinf { gamma_max } if !(gamma_max > 0.0) => {
            return Err(Error::InvalidArgument(format!(
                "gamma_max must be positive, got {gamma_max}"
            )))
        }
        DesignMode::MixedH2 { lambda_max } if !(lambda_max > 0.0) => {
            return Err(Error::InvalidArgument(format!(
                "lambda_max must be positive, got {lambda_max}"
            )))
        }
        _ => {}
    }
    if mode.uses_hinf() && aug.d.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "H-infinity design needs at least one disturbance channel".into(),
        ));
    }
    let nz = aug.n_z();
    let m = aug.m();
    let nq = aug.cbar_a.nrows();
    let n_omega = aug.d.ncols();
    let margin = opts.margin.unwrap_or_else(|| default_margin(aug));
    let eye = |k: usize| Mat::identity(k, k);
    // the margins alone force lambda >= delta and gamma >= tr Z + delta >= (q + 1) delta
    match mode {
        DesignMode::MixedHinf { gamma_max } if gamma_max < (nq + 1) as f64 * margin => {
            return Err(Error::Infeasible(format!(
                "gamma_max = {gamma_max:e} is below the structural floor {:e}",
                (nq + 1) as f64 * margin
            )))
        }
        DesignMode::MixedH2 { lambda_max } if lambda_max < margin => {
            return Err(Error::Infeasible(format!(
                "lambda_max = {lambda_max:e} is below the structural floor {margin:e}"
            )))
        }
        _ => {}
    }
    // v with A_a v = 0 and C_a v = 0 gives v' X v = 0 for every P, R, Q
    let stacked = Mat::from_fn(nz + aug.c.nrows(), nz, |i, j| {
        if i < nz {
            aug.a[(i, j)]
        } else {
            aug.c[(i - nz, j)]
        }
    });
    let sv = stacked.singular_values();
    if sv.min() <= 1e-10 * sv.max().max(1.0) {
        return Err(Error::Infeasible(
            "(A_a, C_a) has an unobservable mode at the origin, so no ISS observer exists".into(),
        ));
    }

    let mut vs = VarSpace::new();
    let p = vs.symmetric(nz);
    let r = vs.full(nz, m);
    let q = vs.full(nz, m);
    let lambda = mode.uses_hinf().then(|| vs.scalar());
    let h2 = mode.uses_h2().then(|| (vs.symmetric(nq), vs.scalar()));

    let x = build_x(aug, &p, &r, &q)?;
    let mut sdp = SdpProblem::new(vs.len());
    sdp.add_psd("P", p.add_const(&(-eye(nz) * margin)))?;
    sdp.add_nsd("iss", x.add_const(&(eye(nz) * opts.epsilon)))?;
    if let Some(radius) = opts.pole_radius {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pole radius must be positive, got {radius}"
            )));
        }
        // P N = (P + R C_a) A_a - Q C_a
        let pn = p.add(&r.rmul(&aug.c)).rmul(&aug.a).sub(&q.rmul(&aug.c));
        let disk = Affine::blocks(&[
            vec![p.scale(-radius), pn.clone()],
            vec![pn.transpose(), p.scale(-radius)],
        ])?;
        sdp.add_nsd("pole_disk", disk)?;
    }

    if let Some((k_lam, lam)) = &lambda {
        let pr_c = p.add(&r.rmul(&aug.c));
        let cross = pr_c.rmul(&aug.d).neg();
        let cbar_t = Affine::constant(aug.cbar_a.transpose());
        let lam_omega = diag_scalar(*k_lam, n_omega);
        let lam_q = diag_scalar(*k_lam, nq);
        let hinf = Affine::blocks(&[
            vec![x.clone(), cross.clone(), cbar_t.clone()],
            vec![cross.transpose(), lam_omega.neg(), Affine::zeros(n_omega, nq)],
            vec![cbar_t.transpose(), Affine::zeros(nq, n_omega), lam_q.neg()],
        ])?;
        let dim = hinf.shape().0;
        sdp.add_nsd("hinf", hinf.add_const(&(eye(dim) * margin)))?;
        if let DesignMode::MixedH2 { lambda_max } = mode {
            sdp.add_psd("lambda_max", lam.neg().add_const(&scalar_const(lambda_max)))?;
        }
    }

    if let Some((z, (k_gam, gam))) = &h2 {
        let mut qr = Affine::zeros(nz, 2 * m);
        qr = qr.add(&q.rmul(&selector_cols(m, 2 * m, 0)));
        qr = qr.sub(&r.rmul(&selector_cols(m, 2 * m, m)));
        let h2_block = Affine::blocks(&[
            vec![x.clone(), qr.clone()],
            vec![qr.transpose(), diag_scalar(*k_gam, 2 * m).neg()],
        ])?;
        let dim = h2_block.shape().0;
        sdp.add_nsd("h2", h2_block.add_const(&(eye(dim) * margin)))?;
        let cbar = Affine::constant(aug.cbar_a.clone());
        let coupling = Affine::blocks(&[
            vec![p.clone(), cbar.transpose()],
            vec![cbar, z.clone()],
        ])?;
        let dim = coupling.shape().0;
        sdp.add_psd("h2_coupling", coupling.add_const(&(-eye(dim) * margin)))?;
        sdp.add_psd(
            "trace",
            gam.sub(&z.trace()).add_const(&scalar_const(-margin)),
        )?;
        match mode {
            DesignMode::H2 | DesignMode::MixedH2 { .. } => sdp.set_objective(*k_gam, 1.0),
            DesignMode::MixedHinf { gamma_max } => {
                sdp.add_psd("gamma_max", gam.neg().add_const(&scalar_const(gamma_max)))?;
            }
            _ => {}
        }
    }
    if let (DesignMode::Hinf | DesignMode::MixedHinf { .. }, Some((k_lam, _))) = (mode, &lambda) {
        sdp.set_objective(*k_lam, 1.0);
    }

    Ok(LmiProblem {
        sdp,
        p,
        r,
        q,
        z: h2.as_ref().map(|(z, _)| z.clone()),
        gamma: h2.map(|(_, (k, _))| k),
        lambda: lambda.map(|(k, _)| k),
        epsilon: opts.epsilon,
        margin,
        mode,
    })
}

/// `y_k * I_dim`.
fn diag_scalar(k: usize, dim: usize) -> Affine {
    Affine::term(k, Mat::identity(dim, dim))
}

/// `cols x width` selection placing `I_cols` at column `offset`.
fn selector_cols(cols: usize, width: usize, offset: usize) -> Mat {
    let mut s = Mat::zeros(cols, width);
    s.view_mut((0, offset), (cols, cols)).fill_with_identity();
    s
}

/// `E = P^-1 R`, `K = P^-1 Q` and the observer matrices, with the algebraic
/// identities of the observer structure checked.
pub fn recover_gains(p: &Mat, r: &Mat, q: &Mat, aug: &AugmentedSystem) -> Result<ObserverDesign> {
    let nz = aug.n_z();
    let m = aug.m();
    if p.shape() != (nz, nz) {
        return Err(dim_err("P", format!("{nz}x{nz}"), format!("{:?}", p.shape())));
    }
    if r.shape() != (nz, m) || q.shape() != (nz, m) {
        return Err(dim_err("R/Q", format!("{nz}x{m}"), format!("{:?}/{:?}", r.shape(), q.shape())));
    }
    let p = matlib::sym(p);
    let min_eig = matlib::min_sym_eig(&p);
    if !(min_eig > 0.0) {
        return Err(Error::PNotPositiveDefinite { min_eig });
    }
    let chol = nalgebra::Cholesky::new(p.clone()).ok_or(Error::PNotPositiveDefinite { min_eig })?;
    let e = chol.solve(r);
    let k = chol.solve(q);

    let (a, b, c) = (&aug.a, &aug.b, &aug.c);
    let mm = Mat::identity(nz, nz) + &e * c;
    let n = &mm * a - &k * c;
    let g = &mm * b;
    let l = &k * (Mat::identity(m, m) + c * &e) - &mm * a * &e;

    let scale = 1.0 + matlib::max_abs(&mm) * matlib::max_abs(a) * nz as f64
        + matlib::max_abs(&k) * matlib::max_abs(c) * (1.0 + matlib::max_abs(&e) * matlib::max_abs(c) * nz as f64) * m as f64;
    let checks = [
        ("G - M B_a", matlib::max_abs(&(&g - &mm * b))),
        ("N M + L C_a - M A_a", matlib::max_abs(&(&n * &mm + &l * c - &mm * a))),
        ("N E + L - K", matlib::max_abs(&(&n * &e + &l - &k))),
    ];
    for (name, residual) in checks {
        if !(residual <= IDENTITY_TOL * scale) {
            return Err(Error::IdentityViolation { name, residual });
        }
    }

    Ok(ObserverDesign {
        e,
        k,
        n,
        g,
        l,
        m: mm,
        certificates: Certificates {
            p,
            lambda_star: None,
            gamma_star: None,
            iss_gain_bound: None,
            epsilon: None,
            mode: None,
            margin: 0.0,
            solver_residual: 0.0,
            solver_iterations: 0,
        },
    })
}

/// `2 ||P [M D_a, -K, E]|| / eps`.
pub fn iss_gain_bound(design: &ObserverDesign, aug: &AugmentedSystem, epsilon: f64) -> f64 {
    let md = &design.m * &aug.d;
    let nk = design.k.ncols();
    let mut w = Mat::zeros(aug.n_z(), md.ncols() + 2 * nk);
    w.columns_mut(0, md.ncols()).copy_from(&md);
    w.columns_mut(md.ncols(), nk).copy_from(&(-&design.k));
    w.columns_mut(md.ncols() + nk, nk).copy_from(&design.e);
    2.0 * matlib::norm2(&(&design.certificates.p * w)) / epsilon
}

/// Solve `mode` with an explicit backend.
pub fn solve_with(
    aug: &AugmentedSystem,
    mode: DesignMode,
    opts: &SynthOptions,
    backend: &dyn SdpBackend,
) -> Result<ObserverDesign> {
    let prob = build_problem(aug, mode, opts)?;
    let sol = backend.solve(&prob.sdp);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(format!("{} design: {}", mode.name(), sol.message)))
        }
        SolveStatus::NumericalFailure => {
            // every mode contains the ISS program; its smaller phase one often
            // settles where the full one stalls
            if mode != DesignMode::Iss {
                let core = build_problem(aug, DesignMode::Iss, opts)?;
                let core_sol = backend.solve(&core.sdp);
                if core_sol.status == SolveStatus::Infeasible {
                    return Err(Error::Infeasible(format!(
                        "{} design: its ISS constraints alone are infeasible ({})",
                        mode.name(),
                        core_sol.message
                    )));
                }
            }
            return Err(Error::NumericalFailure(format!(
                "{} design: {}",
                mode.name(),
                sol.message
            )));
        }
    }
    let p = prob.p.eval(&sol.y);
    let r = prob.r.eval(&sol.y);
    let q = prob.q.eval(&sol.y);
    let p_sym = matlib::sym(&p);
    let lo = matlib::min_sym_eig(&p_sym);
    let hi = matlib::max_sym_eig(&p_sym);
    if lo > 0.0 && hi / lo > opts.max_p_condition {
        return Err(Error::NumericalFailure(format!(
            "{} design: cond(P) = {:.3e} exceeds {:.1e}",
            mode.name(),
            hi / lo,
            opts.max_p_condition
        )));
    }
    let mut design = recover_gains(&p, &r, &q, aug)?;
    design.certificates.lambda_star = prob.lambda.map(|k| sol.y[k]);
    design.certificates.gamma_star = prob.gamma.map(|k| sol.y[k]);
    design.certificates.epsilon = Some(prob.epsilon);
    design.certificates.mode = Some(mode);
    design.certificates.margin = prob.margin;
    design.certificates.solver_residual = sol.worst_residual;
    design.certificates.solver_iterations = sol.iterations;
    design.certificates.iss_gain_bound = Some(iss_gain_bound(&design, aug, prob.epsilon));
    Ok(design)
}

pub fn solve(aug: &AugmentedSystem, mode: DesignMode, opts: &SynthOptions) -> Result<ObserverDesign> {
    solve_with(aug, mode, opts, &InteriorPoint::new(opts.solver))
}

pub fn solve_iss(aug: &AugmentedSystem, epsilon: f64) -> Result<ObserverDesign> {
    solve(aug, DesignMode::Iss, &SynthOptions::with_epsilon(epsilon))
}

pub fn solve_hinf(aug: &AugmentedSystem, epsilon: f64) -> Result<ObserverDesign> {
    solve(aug, DesignMode::Hinf, &SynthOptions::with_epsilon(epsilon))
}

pub fn solve_h2(aug: &AugmentedSystem, epsilon: f64) -> Result<ObserverDesign> {
    solve(aug, DesignMode::H2, &SynthOptions::with_epsilon(epsilon))
}

pub fn solve_mixed_hinf_min(aug: &AugmentedSystem, epsilon: f64, gamma_max: f64) -> Result<ObserverDesign> {
    solve(aug, DesignMode::MixedHinf { gamma_max }, &SynthOptions::with_epsilon(epsilon))
}

pub fn solve_mixed_h2_min(aug: &AugmentedSystem, epsilon: f64, lambda_max: f64) -> Result<ObserverDesign> {
    solve(aug, DesignMode::MixedH2 { lambda_max }, &SynthOptions::with_epsilon(epsilon))
}
