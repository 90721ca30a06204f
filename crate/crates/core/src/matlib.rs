//! Dense matrix kernels shared by the rest of the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices. Zero-sized
//! matrices (`n x 0`, `0 x n`) are valid values and flow through products
//! as empty blocks; only [`pseudo_inverse`] insists on a non-empty input.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A matrix is Hurwitz when its spectral abscissa is below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Build a matrix from row-major entries, rejecting non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Mat> {
    if entries.len() != rows * cols {
        return Err(Error::EntryCount {
            expected: rows * cols,
            got: entries.len(),
        });
    }
    if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: k / cols.max(1),
            col: k % cols.max(1),
        });
    }
    Ok(Mat::from_row_slice(rows, cols, entries))
}

/// Build a matrix from nested rows. `cols` is needed to type `0`-row inputs.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Mat> {
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(dim_err(&format!("row {i}"), cols, r.len()));
        }
        flat.extend_from_slice(r);
    }
    from_row_major(rows.len(), cols, &flat)
}

pub fn check_finite(m: &Mat) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest singular value (spectral norm); zero for empty matrices.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match m.clone().try_svd(false, false, f64::EPSILON, SVD_MAX_ITER) {
        Some(svd) => svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s)),
        None => f64::NAN,
    }
}

const SVD_MAX_ITER: usize = 10_000;

pub fn min_sym_eig(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    sym_eigenvalues(m).iter().fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Eigenvalues of the symmetric part; NaN if the iteration does not settle.
fn sym_eigenvalues(m: &Mat) -> Vector {
    let n = m.nrows();
    nalgebra::SymmetricEigen::try_new(sym(m), f64::EPSILON, 100 * n.max(10))
        .map(|e| e.eigenvalues)
        .unwrap_or_else(|| Vector::from_element(n, f64::NAN))
}

pub fn max_sym_eig(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    sym_eigenvalues(m).iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Horizontal concatenation; all parts must share a row count.
pub fn hstack(parts: &[&Mat]) -> Result<Mat> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    if let Some(bad) = parts.iter().find(|p| p.nrows() != rows) {
        return Err(dim_err("hstack rows", rows, bad.nrows()));
    }
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(*p);
        c += p.ncols();
    }
    Ok(out)
}

/// Vertical concatenation; all parts must share a column count.
pub fn vstack(parts: &[&Mat]) -> Result<Mat> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    if let Some(bad) = parts.iter().find(|p| p.ncols() != cols) {
        return Err(dim_err("vstack cols", cols, bad.ncols()));
    }
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    Ok(out)
}

struct ThinSvd {
    u: Mat,
    sigma: Vec<f64>,
    v_t: Mat,
}

/// Thin SVD keeping only singular values above `tol * sigma_max`.
fn truncated_svd(m: &Mat, tol: f64) -> ThinSvd {
    truncated_svd_scaled(m, tol, 0.0)
}

/// Keeps singular values above `tol * max(sigma_max, scale)`.
fn truncated_svd_scaled(m: &Mat, tol: f64, scale: f64) -> ThinSvd {
    if m.is_empty() {
        return ThinSvd {
            u: Mat::zeros(m.nrows(), 0),
            sigma: Vec::new(),
            v_t: Mat::zeros(0, m.ncols()),
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let smax = svd.singular_values.iter().fold(scale, |a, &s| a.max(s));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > tol * smax)
        .collect();
    let r = keep.len();
    let mut ur = Mat::zeros(m.nrows(), r);
    let mut vr = Mat::zeros(r, m.ncols());
    let mut sigma = Vec::with_capacity(r);
    for (k, &idx) in keep.iter().enumerate() {
        ur.set_column(k, &u.column(idx));
        vr.set_row(k, &v_t.row(idx));
        sigma.push(svd.singular_values[idx]);
    }
    ThinSvd { u: ur, sigma, v_t: vr }
}

pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    truncated_svd(m, tol).sigma.len()
}

/// Moore-Penrose pseudoinverse with relative threshold `tol * sigma_max`.
pub fn pseudo_inverse(s: &Mat, tol: f64) -> Result<Mat> {
    if s.is_empty() {
        return Err(Error::EmptyMatrix {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    Ok(pinv_unchecked(s, tol))
}

/// Pseudoinverse that maps empty inputs to the empty transpose.
pub(crate) fn pinv_unchecked(s: &Mat, tol: f64) -> Mat {
    let svd = truncated_svd(s, tol);
    let mut vs = svd.v_t.transpose();
    for (k, sig) in svd.sigma.iter().enumerate() {
        vs.column_mut(k).scale_mut(1.0 / sig);
    }
    vs * svd.u.transpose()
}

/// Rank factorization `F = Q R` with `Q` full column rank and `R` full row rank.
///
/// The inner dimension is the numerical rank of `F`; a rank-zero input gives
/// `Q: rows x 0` and `R: 0 x cols`. `Q` carries the singular values and `R`
/// has orthonormal rows.
pub fn rank_factorization(f: &Mat, tol: f64) -> (Mat, Mat) {
    rank_factorization_scaled(f, tol, 0.0)
}

/// [`rank_factorization`] with singular values judged against
/// `max(sigma_max, scale)`, so cancellation residue of a larger computation
/// is not mistaken for rank.
pub fn rank_factorization_scaled(f: &Mat, tol: f64, scale: f64) -> (Mat, Mat) {
    let svd = truncated_svd_scaled(f, tol, scale);
    let mut q = svd.u;
    for (k, sig) in svd.sigma.iter().enumerate() {
        q.column_mut(k).scale_mut(*sig);
    }
    (q, svd.v_t)
}

/// Minimum-norm left inverse; fails when `m` has numerically dependent columns.
pub fn left_inverse(m: &Mat, tol: f64) -> Result<Mat> {
    if m.ncols() == 0 {
        return Ok(Mat::zeros(0, m.nrows()));
    }
    let rank = numerical_rank(m, tol);
    if rank < m.ncols() {
        return Err(Error::ColumnRankDeficient {
            rank,
            cols: m.ncols(),
        });
    }
    Ok(pinv_unchecked(m, tol))
}

/// Eigenvalues of a real square matrix; NaN entries if the QR iteration fails.
pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    match m.eigenvalues() {
        Ok(eigs) => eigs.into_iter().map(|z| Complex64::new(z.re, z.im)).collect(),
        Err(_) => vec![Complex64::new(f64::NAN, f64::NAN); n],
    }
}

/// Largest real part over the spectrum (`-inf` for the empty matrix).
pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a)
        .iter()
        .fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re))
}

pub fn is_hurwitz(a: &Mat) -> bool {
    spectral_abscissa(a) < -HURWITZ_MARGIN
}

fn require_hurwitz(a: &Mat) -> Result<()> {
    let abscissa = spectral_abscissa(a);
    if abscissa < -HURWITZ_MARGIN {
        Ok(())
    } else {
        Err(Error::NotHurwitz { abscissa })
    }
}

fn require_square(a: &Mat, context: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(dim_err(context, "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Solve `A^T P + P A + Q = 0` for symmetric `P`. `A` must be Hurwitz.
///
/// Uses the Kronecker-vectorised form, which is fine for the state
/// dimensions met here (a few dozen at most).
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    require_square(a, "lyapunov A")?;
    let n = a.nrows();
    if q.nrows() != n || q.ncols() != n {
        return Err(dim_err("lyapunov Q", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    require_hurwitz(a)?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let nn = n * n;
    // column-major vec: vec(A^T P) = (I (x) A^T) vec P, vec(P A) = (A^T (x) I) vec P
    let mut kron = Mat::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for k in 0..n {
                kron[(row, k + n * j)] += a[(k, i)];
                kron[(row, i + n * k)] += a[(k, j)];
            }
        }
    }
    let rhs = DVector::from_iterator(nn, q.iter().map(|v| -v));
    let lu = kron.lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    // one step of iterative refinement
    let p0 = Mat::from_column_slice(n, n, x.as_slice());
    let resid = a.transpose() * &p0 + &p0 * a + q;
    if let Some(dx) = lu.solve(&DVector::from_iterator(nn, resid.iter().map(|v| -v))) {
        x += dx;
    }
    Ok(sym(&Mat::from_column_slice(n, n, x.as_slice())))
}

/// Frequency response `C (i w I - A)^{-1} B`.
pub fn freq_response(a: &Mat, b: &Mat, c: &Mat, w: f64) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let mut m = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(-a[(i, j)], 0.0));
    for i in 0..n {
        m[(i, i)] += Complex64::new(0.0, w);
    }
    let bc = b.map(|v| Complex64::new(v, 0.0));
    let cc = c.map(|v| Complex64::new(v, 0.0));
    let x = m
        .lu()
        .solve(&bc)
        .ok_or_else(|| Error::Singular(format!("resolvent at w = {w}")))?;
    Ok(cc * x)
}

/// Largest singular value of the frequency response at `w` rad/s.
pub fn sigma_max_at(a: &Mat, b: &Mat, c: &Mat, w: f64) -> Result<f64> {
    if b.ncols() == 0 || c.nrows() == 0 {
        return Ok(0.0);
    }
    let g = freq_response(a, b, c, w)?;
    let svd = g
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure(format!("SVD of the response at w = {w} did not converge")))?;
    Ok(svd.singular_values.iter().fold(0.0_f64, |acc, &s| acc.max(s)))
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.log10(), hi.log10());
    (0..points)
        .map(|k| 10f64.powf(l0 + (l1 - l0) * k as f64 / (points - 1) as f64))
        .collect()
}

fn check_system(a: &Mat, b: &Mat, c: &Mat) -> Result<()> {
    require_square(a, "system A")?;
    if b.nrows() != a.nrows() {
        return Err(dim_err("system B rows", a.nrows(), b.nrows()));
    }
    if c.ncols() != a.nrows() {
        return Err(dim_err("system C cols", a.nrows(), c.ncols()));
    }
    Ok(())
}

/// Frequencies on the imaginary axis where the Hamiltonian for level `g`
/// has eigenvalues; empty means `sigma_max < g` everywhere.
fn hamiltonian_crossings(a: &Mat, bbt: &Mat, ctc: &Mat, g: f64) -> Vec<f64> {
    let n = a.nrows();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(bbt / (g * g)));
    h.view_mut((n, 0), (n, n)).copy_from(&(-ctc));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let scale = 1.0 + h.norm();
    let mut ws: Vec<f64> = eigenvalues(&h)
        .into_iter()
        .filter(|z| z.re.abs() <= 1e-8 * scale && z.im >= 0.0)
        .map(|z| z.im)
        .collect();
    ws.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ws
}

/// H-infinity norm of `C (sI - A)^{-1} B` to relative tolerance `tol`.
///
/// Bisection on the Hamiltonian imaginary-eigenvalue test. Each level that
/// is exceeded also lifts the lower bound to the largest gain found at the
/// crossing frequencies.
pub fn hinf_norm(a: &Mat, b: &Mat, c: &Mat, tol: f64) -> Result<f64> {
    check_system(a, b, c)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    require_hurwitz(a)?;
    if b.ncols() == 0 || c.nrows() == 0 || a.nrows() == 0 {
        return Ok(0.0);
    }
    let bbt = b * b.transpose();
    let ctc = c.transpose() * c;
    if max_abs(&bbt) == 0.0 || max_abs(&ctc) == 0.0 {
        return Ok(0.0);
    }

    // initial bracket from DC and a coarse grid spanning the pole magnitudes
    let mags: Vec<f64> = eigenvalues(a).iter().map(|z| z.norm()).collect();
    let wmin = mags.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6);
    let wmax = mags.iter().cloned().fold(0.0, f64::max).max(wmin);
    let mut lb = sigma_max_at(a, b, c, 0.0)?;
    for w in log_grid(wmin * 1e-2, wmax * 1e2, 100) {
        lb = lb.max(sigma_max_at(a, b, c, w)?);
    }
    if lb == 0.0 {
        return Ok(0.0);
    }
    let mut ub = 2.0 * lb + 1.0;
    while !hamiltonian_crossings(a, &bbt, &ctc, ub).is_empty() {
        ub *= 2.0;
        if !ub.is_finite() {
            return Err(Error::NumericalFailure("H-infinity upper bound diverged".into()));
        }
    }
    for _ in 0..200 {
        if ub - lb <= tol * lb {
            break;
        }
        let mid = 0.5 * (lb + ub);
        let ws = hamiltonian_crossings(a, &bbt, &ctc, mid);
        if ws.is_empty() {
            ub = mid;
        } else {
            lb = lb.max(mid);
            let mut probe = ws.clone();
            probe.extend(ws.windows(2).map(|p| 0.5 * (p[0] + p[1])));
            for w in probe {
                lb = lb.max(sigma_max_at(a, b, c, w)?);
            }
            ub = ub.max(lb);
        }
    }
    Ok(0.5 * (lb + ub))
}

/// H2 norm via the controllability Gramian: `sqrt(trace(C Wc C^T))`.
pub fn h2_norm(a: &Mat, b: &Mat, c: &Mat) -> Result<f64> {
    check_system(a, b, c)?;
    let wc = solve_lyapunov(&a.transpose(), &(b * b.transpose()))?;
    Ok((c * wc * c.transpose()).trace().max(0.0).sqrt())
}

/// H2 norm via the observability Gramian: `sqrt(trace(B^T Wo B))`.
pub fn h2_norm_observability(a: &Mat, b: &Mat, c: &Mat) -> Result<f64> {
    check_system(a, b, c)?;
    let wo = solve_lyapunov(a, &(c.transpose() * c))?;
    Ok((b.transpose() * wo * b).trace().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = random(rng, n, n);
        let shift = spectral_abscissa(&a) + 0.5;
        a - Mat::identity(n, n) * shift
    }

    #[test]
    fn pinv_of_unit_column_is_its_transpose() {
        let s = from_rows(&[vec![0.0], vec![1.0]], 1).unwrap();
        let p = pseudo_inverse(&s, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.shape(), (1, 2));
        assert_abs_diff_eq!(p[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(0, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pinv_identity_and_empty() {
        let p = pseudo_inverse(&Mat::identity(3, 3), 1e-10).unwrap();
        assert!((p - Mat::identity(3, 3)).amax() < 1e-14);
        assert!(matches!(
            pseudo_inverse(&Mat::zeros(0, 3), 1e-10),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(pseudo_inverse(&Mat::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn pinv_full_column_rank_is_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random(&mut rng, 4, 2);
        let p = pseudo_inverse(&s, 1e-10).unwrap();
        assert!((&s * &p * &s - &s).amax() < 1e-12);
        assert!((&p * &s - Mat::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn rank_factorization_examples() {
        let (q, r) = rank_factorization(&Mat::identity(2, 2), 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!((&q * &r - Mat::identity(2, 2)).amax() < 1e-14);

        let f = from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]], 2).unwrap();
        let (q, r) = rank_factorization(&f, 1e-10);
        assert_eq!((q.ncols(), r.nrows()), (1, 1));
        assert!((&q * &r - &f).amax() < 1e-12);

        let (q, r) = rank_factorization(&Mat::zeros(3, 2), 1e-10);
        assert_eq!(q.shape(), (3, 0));
        assert_eq!(r.shape(), (0, 2));
    }

    #[test]
    fn left_inverse_examples() {
        let m = from_rows(&[vec![1.0], vec![1.0]], 1).unwrap();
        let l = left_inverse(&m, 1e-10).unwrap();
        assert!((l - from_rows(&[vec![0.5, 0.5]], 2).unwrap()).amax() < 1e-15);
        let l = left_inverse(&Mat::identity(4, 4), 1e-10).unwrap();
        assert!((l - Mat::identity(4, 4)).amax() < 1e-15);
        let deficient = from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]], 2).unwrap();
        assert!(matches!(
            left_inverse(&deficient, 1e-10),
            Err(Error::ColumnRankDeficient { rank: 1, cols: 2 })
        ));
        assert_eq!(left_inverse(&Mat::zeros(3, 0), 1e-10).unwrap().shape(), (0, 3));
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&(-Mat::identity(2, 2)), &Mat::identity(2, 2)).unwrap();
        assert!((p - Mat::identity(2, 2) * 0.5).amax() < 1e-14);

        let a = from_rows(&[vec![-1.0, 1.0], vec![0.0, -2.0]], 2).unwrap();
        let q = Mat::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!((a.transpose() * &p + &p * &a + &q).amax() < 1e-10);

        let rot = from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]], 2).unwrap();
        assert!(matches!(
            solve_lyapunov(&rot, &q),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn scalar_norms() {
        let a = Mat::from_element(1, 1, -1.0);
        let one = Mat::from_element(1, 1, 1.0);
        let hinf = hinf_norm(&a, &one, &one, 1e-9).unwrap();
        assert_abs_diff_eq!(hinf, 1.0, epsilon = 1e-8);
        let hinf = hinf_norm(
            &a,
            &Mat::from_element(1, 1, 2.0),
            &Mat::from_element(1, 1, 3.0),
            1e-9,
        )
        .unwrap();
        assert_abs_diff_eq!(hinf, 6.0, epsilon = 1e-7);
        // (1/2pi) * integral 1/(1+w^2) dw = 1/2
        assert_abs_diff_eq!(h2_norm(&a, &one, &one).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(h2_norm(&a, &Mat::zeros(1, 1), &one).unwrap(), 0.0);
    }

    #[test]
    fn hinf_requires_hurwitz() {
        let a = Mat::from_element(1, 1, 0.0);
        let one = Mat::from_element(1, 1, 1.0);
        assert!(matches!(hinf_norm(&a, &one, &one, 1e-6), Err(Error::NotHurwitz { .. })));
        assert!(matches!(h2_norm(&a, &one, &one), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn hinf_matches_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_stable(&mut rng, 5);
        let b = random(&mut rng, 5, 2);
        let c = random(&mut rng, 3, 5);
        let norm = hinf_norm(&a, &b, &c, 1e-8).unwrap();
        let mut grid_max = sigma_max_at(&a, &b, &c, 0.0).unwrap();
        for w in log_grid(1e-3, 1e3, 10_000) {
            let s = sigma_max_at(&a, &b, &c, w).unwrap();
            assert!(s <= norm * (1.0 + 1e-7), "grid point {w} exceeds norm");
            grid_max = grid_max.max(s);
        }
        assert!((norm - grid_max).abs() <= 0.01 * norm);
    }

    #[test]
    fn h2_gramians_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..6 {
            let a = random_stable(&mut rng, n);
            let b = random(&mut rng, n, 2);
            let c = random(&mut rng, 2, n);
            let h1 = h2_norm(&a, &b, &c).unwrap();
            let h2 = h2_norm_observability(&a, &b, &c).unwrap();
            assert!((h1 - h2).abs() < 1e-8, "{h1} vs {h2}");
        }
    }

    #[test]
    fn constructor_rejects_non_finite() {
        assert!(matches!(
            from_row_major(1, 2, &[1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            from_row_major(2, 2, &[1.0]),
            Err(Error::EntryCount { expected: 4, got: 1 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn penrose_identities(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, rank_pick in 0usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rank = rank_pick.min(m.min(n));
                let s = random(&mut rng, m, rank) * random(&mut rng, rank, n);
                let p = pseudo_inverse(&s, 1e-10).unwrap();
                let scale = 1e-9 * (1.0 + norm2(&s)) * (1.0 + norm2(&p));
                prop_assert!((&s * &p * &s - &s).amax() <= scale);
                prop_assert!((&p * &s * &p - &p).amax() <= scale);
                let sp = &s * &p;
                let ps = &p * &s;
                prop_assert!((&sp - sp.transpose()).amax() <= scale);
                prop_assert!((&ps - ps.transpose()).amax() <= scale);
            }

            #[test]
            fn rank_factorization_reproduces(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, rank_pick in 0usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rank = rank_pick.min(m.min(n));
                let f = random(&mut rng, m, rank) * random(&mut rng, rank, n);
                let (q, r) = rank_factorization(&f, 1e-10);
                prop_assert_eq!(q.ncols(), r.nrows());
                prop_assert!((&q * &r - &f).amax() <= 1e-10 * (1.0 + max_abs(&f)));
                prop_assert_eq!(numerical_rank(&q, 1e-10), q.ncols());
                prop_assert_eq!(numerical_rank(&r, 1e-10), r.nrows());
            }

            #[test]
            fn hinf_bounds_every_sample(seed in any::<u64>(), n in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_stable(&mut rng, n);
                let b = random(&mut rng, n, 2);
                let c = random(&mut rng, 2, n);
                let norm = hinf_norm(&a, &b, &c, 1e-9).unwrap();
                for w in log_grid(1e-2, 1e2, 60) {
                    prop_assert!(sigma_max_at(&a, &b, &c, w).unwrap() <= norm * (1.0 + 1e-7));
                }
            }
        }
    }
}
