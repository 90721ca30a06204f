//! Small dense semidefinite programming backend.
//!
//! Problems are posed in LMI form
//!
//! ```text
//! minimize  c^T y   subject to   F_b(y) = F_b0 + sum_i y_i F_bi  >= 0   (each block b)
//! ```
//!
//! with dual `maximize -sum_b <F_b0, Z_b>` over `Z_b >= 0`, `sum_b <F_bi, Z_b> = c_i`.
//! [`InteriorPoint`] is an infeasible-start primal-dual path-following method
//! with the HKM search direction and Mehrotra predictor-corrector steps. When
//! it fails to converge, a phase-one problem (`min s` with `F_b(y) + s I >= 0`)
//! decides between infeasibility and numerical trouble.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::lmi::Affine;
use crate::matlib::{self, Mat, Vector};

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    /// Required to be positive semidefinite.
    pub expr: Affine,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    n_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, var: usize, weight: f64) {
        self.objective[var] = weight;
    }

    /// `expr >= 0`.
    pub fn add_psd(&mut self, name: &str, expr: Affine) -> Result<()> {
        if !expr.is_symmetric(1e-12 * (1.0 + matlib::max_abs(expr.constant_part()))) {
            return Err(Error::InvalidArgument(format!(
                "constraint {name} is not symmetric"
            )));
        }
        if expr.terms().any(|(k, _)| k >= self.n_vars) {
            return Err(Error::InvalidArgument(format!(
                "constraint {name} references an unknown variable"
            )));
        }
        if expr.shape().0 > 0 {
            self.constraints.push(Constraint {
                name: name.to_string(),
                expr,
            });
        }
        Ok(())
    }

    /// `expr <= 0`.
    pub fn add_nsd(&mut self, name: &str, expr: Affine) -> Result<()> {
        self.add_psd(name, expr.neg())
    }

    /// Smallest eigenvalue of each constraint at `y`; negative means violated.
    pub fn block_min_eigs(&self, y: &[f64]) -> Vec<(String, f64)> {
        self.constraints
            .iter()
            .map(|c| (c.name.clone(), matlib::min_sym_eig(&c.expr.eval(y))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    /// `min(0, min_b lambda_min(F_b(y)))`: how far the returned point is from
    /// satisfying every block. Zero when all blocks hold.
    pub worst_residual: f64,
    pub block_min_eigs: Vec<(String, f64)>,
    /// Phase-one optimum when it was run (positive proves infeasibility).
    pub phase_one: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Phase-one optimum above this is reported as infeasible.
    pub infeasibility_margin: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap: 1e-8,
            tol_feas: 1e-9,
            max_iter: 150,
            infeasibility_margin: 1e-7,
            verbose: false,
        }
    }
}

/// Pluggable conic backend.
pub trait SdpBackend: Send + Sync {
    fn solve(&self, problem: &SdpProblem) -> SdpSolution;
}

#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub settings: SolverSettings,
}

impl InteriorPoint {
    pub fn new(settings: SolverSettings) -> Self {
        Self { settings }
    }
}

struct Block {
    dim: usize,
    f0: Mat,
    coefs: Vec<(usize, Mat)>,
}

fn blocks_of(problem: &SdpProblem) -> Vec<Block> {
    problem
        .constraints
        .iter()
        .map(|c| Block {
            dim: c.expr.shape().0,
            f0: matlib::sym(c.expr.constant_part()),
            coefs: c
                .expr
                .terms()
                .filter(|(_, m)| matlib::max_abs(m) > 0.0)
                .map(|(k, m)| (k, matlib::sym(m)))
                .collect(),
        })
        .collect()
}

fn eval_block(b: &Block, y: &[f64]) -> Mat {
    let mut out = b.f0.clone();
    for (k, m) in &b.coefs {
        out += m * y[*k];
    }
    out
}

/// Largest `a` with `x + a dx >= 0`, assuming `x > 0`.
fn max_step(x: &Mat, dx: &Mat) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let a = l.solve_lower_triangular(dx)?;
    let m = l.solve_lower_triangular(&a.transpose())?;
    let lmin = matlib::min_sym_eig(&m);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn inverse_spd(x: &Mat) -> Option<Mat> {
    Cholesky::new(x.clone()).map(|c| c.inverse())
}

struct RawOutcome {
    y: Vec<f64>,
    converged: bool,
    iterations: usize,
    pobj: f64,
    dobj: f64,
    dinf: f64,
    /// Dual iterate matching `y`.
    z: Vec<Mat>,
    message: String,
    /// Latest iterate that was primal feasible with a closed gap.
    fallback: Option<Box<RawOutcome>>,
}

/// Iterations with a primal-feasible, closed-gap iterate and a flat objective
/// after which a stagnating dual residual is accepted.
const DUAL_STALL_WINDOW: usize = 5;
/// Relative gap accepted for a fallback iterate, as a multiple of `tol_gap`.
const FALLBACK_GAP_FACTOR: f64 = 1e3;

fn interior_point(blocks: &[Block], c: &[f64], settings: &SolverSettings) -> RawOutcome {
    let mut out = interior_point_core(blocks, c, settings);
    if out.converged {
        return out;
    }
    match out.fallback.take() {
        // Problems whose optimum is not attained never close the dual
        // residual; the last primal-feasible iterate is still a valid
        // certificate for its objective value.
        Some(mut fb) => {
            fb.converged = true;
            fb.message = format!(
                "primal feasible with closed gap at iteration {}; dual residual stalled at {:.2e} ({})",
                fb.iterations, fb.dinf, out.message
            );
            *fb
        }
        None => out,
    }
}

fn interior_point_core(blocks: &[Block], c: &[f64], settings: &SolverSettings) -> RawOutcome {
    let n = c.len();
    let ntot: usize = blocks.iter().map(|b| b.dim).sum();
    let f0_norm = blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>().sqrt();
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();

    // starting point scaled to the data, as in SDPT3
    let mut coef_norm = vec![0.0f64; n];
    for b in blocks {
        for (k, m) in &b.coefs {
            coef_norm[*k] += m.norm_squared();
        }
    }
    let coef_norm: Vec<f64> = coef_norm.iter().map(|v| v.sqrt()).collect();
    let mut y = vec![0.0; n];
    let mut s: Vec<Mat> = Vec::with_capacity(blocks.len());
    let mut z: Vec<Mat> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let dim = b.dim as f64;
        let max_coef = b.coefs.iter().map(|(_, m)| m.norm()).fold(0.0, f64::max);
        let eta = 10f64.max(dim.sqrt()).max(max_coef).max(b.f0.norm());
        let zeta = b
            .coefs
            .iter()
            .map(|(k, _)| dim * (1.0 + c[*k].abs()) / (1.0 + coef_norm[*k]))
            .fold(10f64.max(dim.sqrt()), f64::max);
        s.push(Mat::identity(b.dim, b.dim) * eta);
        z.push(Mat::identity(b.dim, b.dim) * zeta);
    }

    let mut stalls = 0;
    let mut outcome = RawOutcome {
        y: y.clone(),
        converged: false,
        iterations: 0,
        pobj: f64::NAN,
        dobj: f64::NAN,
        dinf: f64::NAN,
        z: Vec::new(),
        message: String::new(),
        fallback: None,
    };
    let mut flat = 0;

    for iter in 0..settings.max_iter {
        let rp: Vec<Mat> = blocks
            .iter()
            .zip(&s)
            .map(|(b, sb)| eval_block(b, &y) - sb)
            .collect();
        let mut rd: Vec<f64> = c.to_vec();
        for (b, zb) in blocks.iter().zip(&z) {
            for (k, m) in &b.coefs {
                rd[*k] -= m.dot(zb);
            }
        }
        let pobj: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
        let dobj: f64 = -blocks.iter().zip(&z).map(|(b, zb)| b.f0.dot(zb)).sum::<f64>();
        let gap: f64 = s.iter().zip(&z).map(|(sb, zb)| sb.dot(zb)).sum();
        let mu = gap / ntot as f64;
        let pinf = rp.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + f0_norm);
        let dinf = rd.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + c_norm);
        let relgap = gap / (1.0 + pobj.abs() + dobj.abs());

        outcome.y.clone_from(&y);
        outcome.iterations = iter;
        outcome.pobj = pobj;
        outcome.dobj = dobj;
        outcome.dinf = dinf;
        outcome.z.clone_from(&z);
        if settings.verbose {
            eprintln!(
                "ipm {iter:3}  pobj {pobj:+.6e}  dobj {dobj:+.6e}  gap {relgap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}"
            );
        }
        if pinf < settings.tol_feas && dinf < settings.tol_feas && relgap < settings.tol_gap {
            outcome.converged = true;
            outcome.message = format!("converged in {iter} iterations");
            return outcome;
        }
        if pinf < settings.tol_feas && relgap < settings.tol_gap * FALLBACK_GAP_FACTOR {
            let prev = outcome.fallback.as_ref().map(|f| f.pobj);
            if prev.is_some_and(|p| (p - pobj).abs() <= settings.tol_gap * (1.0 + pobj.abs())) {
                flat += 1;
            } else {
                flat = 0;
            }
            outcome.fallback = Some(Box::new(RawOutcome {
                y: y.clone(),
                converged: false,
                iterations: iter,
                pobj,
                dobj,
                dinf,
                z: z.clone(),
                message: String::new(),
                fallback: None,
            }));
            if flat >= DUAL_STALL_WINDOW {
                outcome.message = "objective flat".into();
                return outcome;
            }
        }
        if !pobj.is_finite() || !dobj.is_finite() || y.iter().any(|v| v.abs() > 1e15) {
            outcome.message = "iterates diverged".into();
            return outcome;
        }

        let Some(sinv) = s.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
            outcome.message = "slack lost positive definiteness".into();
            return outcome;
        };

        // Schur complement H_ij = sum_b tr(F_i S^-1 F_j Z)
        let mut h = Mat::zeros(n, n);
        for ((b, sb_inv), zb) in blocks.iter().zip(&sinv).zip(&z) {
            for (j, fj) in &b.coefs {
                let w = zb * fj * sb_inv;
                for (i, fi) in &b.coefs {
                    if i <= j {
                        h[(*i, *j)] += fi.dot(&w);
                    }
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                h[(j, i)] = h[(i, j)];
            }
        }
        let diag_max = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
        for i in 0..n {
            h[(i, i)] += 1e-14 * diag_max.max(1e-300);
        }
        let Some(hchol) = Cholesky::new(h.clone()) else {
            outcome.message = "Schur complement not positive definite".into();
            return outcome;
        };

        let direction = |sigma_mu: f64, corr: Option<&[Mat]>| {
            let mut rhs = Vector::from_iterator(n, c.iter().map(|v| -v));
            let targets: Vec<Mat> = blocks
                .iter()
                .enumerate()
                .map(|(bi, b)| {
                    let mut t = Mat::identity(b.dim, b.dim) * sigma_mu;
                    if let Some(cr) = corr {
                        t -= &cr[bi];
                    }
                    t
                })
                .collect();
            for (bi, b) in blocks.iter().enumerate() {
                let t = &sinv[bi] * (&targets[bi] - &rp[bi] * &z[bi]);
                let t = matlib::sym(&t);
                for (k, m) in &b.coefs {
                    rhs[*k] += m.dot(&t);
                }
            }
            let dy = hchol.solve(&rhs);
            let mut ds = Vec::with_capacity(blocks.len());
            let mut dz = Vec::with_capacity(blocks.len());
            for (bi, b) in blocks.iter().enumerate() {
                let mut d = rp[bi].clone();
                for (k, m) in &b.coefs {
                    d += m * dy[*k];
                }
                let dzb = matlib::sym(&(&sinv[bi] * (&targets[bi] - &d * &z[bi]))) - &z[bi];
                ds.push(d);
                dz.push(dzb);
            }
            (dy, ds, dz)
        };

        let steps = |ds: &[Mat], dz: &[Mat]| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for bi in 0..blocks.len() {
                ap = ap.min(max_step(&s[bi], &ds[bi])?);
                ad = ad.min(max_step(&z[bi], &dz[bi])?);
            }
            Some((ap, ad))
        };

        // predictor
        let (_, ds_a, dz_a) = direction(0.0, None);
        let Some((ap_a, ad_a)) = steps(&ds_a, &dz_a) else {
            outcome.message = "step computation failed".into();
            return outcome;
        };
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mu_aff: f64 = s
            .iter()
            .zip(&z)
            .zip(ds_a.iter().zip(&dz_a))
            .map(|((sb, zb), (dsb, dzb))| (sb + dsb * ap_a).dot(&(zb + dzb * ad_a)))
            .sum::<f64>()
            / ntot as f64;
        let expon = if mu > 1e-6 { 2.0 } else { 3.0 };
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

        // corrector
        let corr: Vec<Mat> = ds_a.iter().zip(&dz_a).map(|(a, b)| a * b).collect();
        let (dy, ds, dz) = direction(sigma * mu, Some(&corr));
        let Some((ap, ad)) = steps(&ds, &dz) else {
            outcome.message = "step computation failed".into();
            return outcome;
        };
        let tau = 0.9 + 0.09 * ap_a.min(ad_a);
        let mut ap = (tau * ap).min(1.0);
        let mut ad = (tau * ad).min(1.0);

        // roundoff can push a long step just outside the cone; shorten until
        // every block stays numerically positive definite
        let trial = |base: &[Mat], dir: &[Mat], a: f64| -> Option<Vec<Mat>> {
            base.iter()
                .zip(dir)
                .map(|(b, d)| {
                    let m = matlib::sym(&(b + d * a));
                    Cholesky::new(m.clone()).map(|_| m)
                })
                .collect()
        };
        let mut new_s = None;
        let mut new_z = None;
        for _ in 0..30 {
            if new_s.is_none() {
                new_s = trial(&s, &ds, ap);
                if new_s.is_none() {
                    ap *= 0.8;
                }
            }
            if new_z.is_none() {
                new_z = trial(&z, &dz, ad);
                if new_z.is_none() {
                    ad *= 0.8;
                }
            }
            if new_s.is_some() && new_z.is_some() {
                break;
            }
        }
        let (Some(new_s), Some(new_z)) = (new_s, new_z) else {
            outcome.message = "iterates left the cone".into();
            return outcome;
        };
        for k in 0..n {
            y[k] += ap * dy[k];
        }
        s = new_s;
        z = new_z;

        if ap.max(ad) < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                outcome.message = "step length stalled".into();
                outcome.y.clone_from(&y);
                return outcome;
            }
        } else {
            stalls = 0;
        }
    }
    outcome.message = format!("no convergence after {} iterations", settings.max_iter);
    outcome.y = y;
    outcome
}

/// Dual objective of an exactly feasible dual point near `z`, which bounds
/// the primal optimum from below. The correction is restricted to the
/// dominant eigenspace of each block, so the point stays positive
/// semidefinite when `z` is nearly rank deficient.
fn dual_certificate(blocks: &[Block], c: &[f64], z: &[Mat]) -> Option<f64> {
    if z.len() != blocks.len() {
        return None;
    }
    [1e-2, 1e-4, 1e-6, 1e-8]
        .into_iter()
        .find_map(|cut| reduced_certificate(blocks, c, z, cut))
}

fn reduced_certificate(blocks: &[Block], c: &[f64], z: &[Mat], cut: f64) -> Option<f64> {
    let n = c.len();
    let mut eigs = Vec::with_capacity(blocks.len());
    for zb in z {
        eigs.push(nalgebra::SymmetricEigen::try_new(matlib::sym(zb), f64::EPSILON, 100 * zb.nrows().max(10))?);
    }
    let top = eigs.iter().map(|e| e.eigenvalues.max()).fold(0.0, f64::max);
    let bases: Vec<Mat> = eigs
        .iter()
        .map(|e| {
            let keep: Vec<usize> = (0..e.eigenvalues.len()).filter(|&k| e.eigenvalues[k] > cut * top).collect();
            Mat::from_fn(e.eigenvalues.len(), keep.len(), |r, k| e.eigenvectors[(r, keep[k])])
        })
        .collect();
    let reduced: Vec<Vec<(usize, Mat)>> = blocks
        .iter()
        .zip(&bases)
        .map(|(b, u)| b.coefs.iter().map(|(k, f)| (*k, u.transpose() * f * u)).collect())
        .collect();
    let mut w: Vec<Mat> = z.iter().zip(&bases).map(|(zb, u)| u.transpose() * zb * u).collect();
    let residual = |w: &[Mat]| {
        let mut rd = c.to_vec();
        for (coefs, wb) in reduced.iter().zip(w) {
            for (k, f) in coefs {
                rd[*k] -= f.dot(wb);
            }
        }
        Vector::from_vec(rd)
    };
    let mut gram = Mat::zeros(n, n);
    for coefs in &reduced {
        for (i, fi) in coefs {
            for (j, fj) in coefs {
                gram[(*i, *j)] += fi.dot(fj);
            }
        }
    }
    let mult = gram.svd(true, true).solve(&residual(&w), 1e-12).ok()?;
    for (coefs, wb) in reduced.iter().zip(w.iter_mut()) {
        for (k, f) in coefs {
            *wb += f * mult[*k];
        }
    }
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual(&w).norm() > 1e-10 * (1.0 + c_norm) {
        return None;
    }
    let mut dobj = 0.0;
    for ((b, u), wb) in blocks.iter().zip(&bases).zip(&w) {
        if wb.nrows() > 0 && !(matlib::min_sym_eig(wb) >= 0.0) {
            return None;
        }
        dobj -= b.f0.dot(&(u * wb * u.transpose()));
    }
    dobj.is_finite().then_some(dobj)
}

fn phase_one(blocks: &[Block], n: usize, settings: &SolverSettings) -> Option<f64> {
    let mut aug: Vec<Block> = blocks
        .iter()
        .map(|b| {
            let mut coefs = b.coefs.clone();
            coefs.push((n, Mat::identity(b.dim, b.dim)));
            Block {
                dim: b.dim,
                f0: b.f0.clone(),
                coefs,
            }
        })
        .collect();
    // s >= -1 keeps the problem bounded
    aug.push(Block {
        dim: 1,
        f0: Mat::from_element(1, 1, 1.0),
        coefs: vec![(n, Mat::from_element(1, 1, 1.0))],
    });
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let out = interior_point(&aug, &c, settings);
    dual_certificate(&aug, &c, &out.z)
}

impl SdpBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem) -> SdpSolution {
        let blocks = blocks_of(problem);
        let raw = interior_point(&blocks, &problem.objective, &self.settings);
        let block_min_eigs = problem.block_min_eigs(&raw.y);
        let worst = block_min_eigs
            .iter()
            .map(|(_, v)| *v)
            .fold(0.0_f64, f64::min);
        let mut sol = SdpSolution {
            status: SolveStatus::Optimal,
            y: raw.y,
            primal_objective: raw.pobj,
            dual_objective: raw.dobj,
            iterations: raw.iterations,
            worst_residual: worst,
            block_min_eigs,
            phase_one: None,
            message: raw.message,
        };
        if raw.converged {
            return sol;
        }
        let p1 = phase_one(&blocks, problem.n_vars, &self.settings);
        sol.phase_one = p1;
        sol.status = match p1 {
            Some(v) if v > self.settings.infeasibility_margin => {
                sol.message = format!("phase one optimum {v:.3e} > 0: constraints infeasible");
                SolveStatus::Infeasible
            }
            _ => SolveStatus::NumericalFailure,
        };
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::VarSpace;

    #[test]
    fn scalar_lp() {
        // min y  s.t. y >= 2, 5 - y >= 0
        let mut vs = VarSpace::new();
        let (k, y) = vs.scalar();
        let mut p = SdpProblem::new(vs.len());
        p.add_psd("lower", y.add_const(&Mat::from_element(1, 1, -2.0))).unwrap();
        p.add_psd("upper", y.neg().add_const(&Mat::from_element(1, 1, 5.0))).unwrap();
        p.set_objective(k, 1.0);
        let sol = InteriorPoint::default().solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.y[k] - 2.0).abs() < 1e-7, "{}", sol.y[k]);
    }

    #[test]
    fn max_eigenvalue_minimisation() {
        // min t  s.t. t I - A >= 0  ->  t = lambda_max(A)
        let a = Mat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let mut vs = VarSpace::new();
        let (k, _) = vs.scalar();
        let mut p = SdpProblem::new(vs.len());
        let t_i = Affine::term(k, Mat::identity(3, 3));
        p.add_psd("eig", t_i.add_const(&(-&a))).unwrap();
        p.set_objective(k, 1.0);
        let sol = InteriorPoint::default().solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.y[k] - matlib::max_sym_eig(&a)).abs() < 1e-6);
    }

    #[test]
    fn lyapunov_feasibility_and_infeasibility() {
        // find P >= I with A^T P + P A <= -I; feasible iff A Hurwitz
        let check = |a: Mat| {
            let mut vs = VarSpace::new();
            let p = vs.symmetric(2);
            let mut prob = SdpProblem::new(vs.len());
            prob.add_psd("P", p.add_const(&-Mat::identity(2, 2))).unwrap();
            let lyap = p.lmul(&a.transpose()).add(&p.rmul(&a)).add_const(&Mat::identity(2, 2));
            prob.add_nsd("lyap", lyap).unwrap();
            InteriorPoint::default().solve(&prob)
        };
        let stable = check(Mat::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]));
        assert_eq!(stable.status, SolveStatus::Optimal);
        assert!(stable.worst_residual > -1e-7);
        let unstable = check(Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -1.0]));
        assert_eq!(unstable.status, SolveStatus::Infeasible, "{}", unstable.message);
    }

    #[test]
    fn disjoint_bounds_are_certified_infeasible() {
        // y >= 1 and y <= -1
        let mut vs = VarSpace::new();
        let (_, y) = vs.scalar();
        let mut p = SdpProblem::new(vs.len());
        p.add_psd("lower", y.add_const(&Mat::from_element(1, 1, -1.0))).unwrap();
        p.add_psd("upper", y.neg().add_const(&Mat::from_element(1, 1, -1.0))).unwrap();
        let sol = InteriorPoint::default().solve(&p);
        assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
        assert!(sol.phase_one.unwrap() > 0.5);
    }

    #[test]
    fn dual_certificate_rejects_indefinite_points() {
        // min y  s.t. y >= 1: every exact dual point has z = 1 and objective 1
        let block = Block {
            dim: 1,
            f0: Mat::from_element(1, 1, -1.0),
            coefs: vec![(0, Mat::from_element(1, 1, 1.0))],
        };
        let c = [1.0];
        let bound = dual_certificate(std::slice::from_ref(&block), &c, &[Mat::from_element(1, 1, 0.9)]).unwrap();
        assert!((bound - 1.0).abs() < 1e-12);
        let flipped = Block {
            coefs: vec![(0, Mat::from_element(1, 1, -1.0))],
            ..block
        };
        assert!(dual_certificate(&[flipped], &c, &[Mat::from_element(1, 1, 1.0)]).is_none());
    }
}
