//! Plant description and the rank-decomposition rewrite of its process faults.
//!
//! The plant is
//!
//! ```text
//! x' = A x + B u + S g(V x, u, t) + D w + Fx fx
//! y  = C x + Fy fy + v
//! ```
//!
//! and [`transform`] splits `Fx` into an `S`-aligned part `S Q1 R1` and an
//! `S`-orthogonal part `Q2 R2`. The lumped faults `fn = R1 fx` and
//! `fl = R2 fx` are implied by these factors; no runtime object carries them.

use std::fmt;
use std::sync::Arc;

use crate::error::{dim_err, Error, Result};
use crate::matlib::{self, Mat, Vector};

/// Known nonlinearity `g(V x, u, t)`. Must be re-entrant: the toolkit calls it
/// from the simulator and the fault reconstruction without synchronisation.
pub type Nonlinearity = Arc<dyn Fn(&Vector, &Vector, f64) -> Vector + Send + Sync>;

#[derive(Clone)]
pub struct PlantModel {
    pub a: Mat,
    pub b: Mat,
    pub s: Mat,
    pub v: Mat,
    pub c: Mat,
    pub fx: Mat,
    pub fy: Mat,
    pub d: Mat,
    g: Nonlinearity,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("l", &self.l())
            .field("n_g", &self.n_g())
            .field("n_v", &self.n_v())
            .field("n_fx", &self.n_fx())
            .field("n_fy", &self.n_fy())
            .field("n_d", &self.n_d())
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    /// Validates every dimension against `A` (n x n) and `C` (m x n).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat,
        b: Mat,
        s: Mat,
        v: Mat,
        c: Mat,
        fx: Mat,
        fy: Mat,
        d: Mat,
        g: Nonlinearity,
    ) -> Result<Self> {
        let n = a.nrows();
        let shape = |m: &Mat| format!("{}x{}", m.nrows(), m.ncols());
        if a.ncols() != n {
            return Err(dim_err("A", "square", shape(&a)));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("plant must have at least one state".into()));
        }
        for (name, mat) in [("B", &b), ("S", &s), ("Fx", &fx), ("D", &d)] {
            if mat.nrows() != n {
                return Err(dim_err(&format!("{name} rows"), n, mat.nrows()));
            }
        }
        if v.ncols() != n {
            return Err(dim_err("V cols", n, v.ncols()));
        }
        if c.ncols() != n {
            return Err(dim_err("C cols", n, c.ncols()));
        }
        if fy.nrows() != c.nrows() {
            return Err(dim_err("Fy rows", c.nrows(), fy.nrows()));
        }
        for mat in [&a, &b, &s, &v, &c, &fx, &fy, &d] {
            matlib::check_finite(mat)?;
        }
        Ok(Self {
            a,
            b,
            s,
            v,
            c,
            fx,
            fy,
            d,
            g,
        })
    }

    /// Linear plant with `g` identically zero over `n_g` channels.
    #[allow(clippy::too_many_arguments)]
    pub fn linear(
        a: Mat,
        b: Mat,
        s: Mat,
        v: Mat,
        c: Mat,
        fx: Mat,
        fy: Mat,
        d: Mat,
    ) -> Result<Self> {
        let n_g = s.ncols();
        Self::new(a, b, s, v, c, fx, fy, d, zero_nonlinearity(n_g))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.c.nrows()
    }
    pub fn l(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_g(&self) -> usize {
        self.s.ncols()
    }
    pub fn n_v(&self) -> usize {
        self.v.nrows()
    }
    pub fn n_fx(&self) -> usize {
        self.fx.ncols()
    }
    pub fn n_fy(&self) -> usize {
        self.fy.ncols()
    }
    pub fn n_d(&self) -> usize {
        self.d.ncols()
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.g
    }

    /// Evaluate `g` on an already-projected argument `V x`.
    pub fn eval_g_projected(&self, vx: &Vector, u: &Vector, t: f64) -> Result<Vector> {
        let out = (self.g)(vx, u, t);
        if out.len() != self.n_g() {
            return Err(dim_err("g output", self.n_g(), out.len()));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteNonlinearity { t });
        }
        Ok(out)
    }
}

pub fn zero_nonlinearity(n_g: usize) -> Nonlinearity {
    Arc::new(move |_: &Vector, _: &Vector, _: f64| Vector::zeros(n_g))
}

/// `g(V x, u, t)` for a full state `x`.
pub fn eval_nonlinearity(plant: &PlantModel, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
    if x.len() != plant.n() {
        return Err(dim_err("x", plant.n(), x.len()));
    }
    if u.len() != plant.l() {
        return Err(dim_err("u", plant.l(), u.len()));
    }
    plant.eval_g_projected(&(&plant.v * x), u, t)
}

#[derive(Debug, Clone)]
pub struct TransformedPlant {
    pub base: PlantModel,
    /// `n_g x k1`, full column rank.
    pub q1: Mat,
    /// `k1 x n_fx`, full row rank.
    pub r1: Mat,
    /// `n x n_fl`, full column rank.
    pub q2: Mat,
    /// `n_fl x n_fx`, full row rank.
    pub r2: Mat,
    /// `S^+`, kept for reconstructing the true lumped signals.
    pub s_pinv: Mat,
}

impl TransformedPlant {
    pub fn n_fl(&self) -> usize {
        self.q2.ncols()
    }
    pub fn k1(&self) -> usize {
        self.q1.ncols()
    }
}

/// Factor `S^+ Fx = Q1 R1` and `(I - S S^+) Fx = Q2 R2`.
pub fn transform(plant: PlantModel, tol: f64) -> Result<TransformedPlant> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let n = plant.n();
    let s_pinv = matlib::pinv_unchecked(&plant.s, tol);
    let aligned = &s_pinv * &plant.fx;
    let orthogonal = (Mat::identity(n, n) - &plant.s * &s_pinv) * &plant.fx;
    let scale = matlib::norm2(&plant.fx);
    let (q1, r1) = matlib::rank_factorization_scaled(&aligned, tol, scale * matlib::norm2(&s_pinv));
    let (q2, r2) = matlib::rank_factorization_scaled(&orthogonal, tol, scale);
    Ok(TransformedPlant {
        base: plant,
        q1,
        r1,
        q2,
        r2,
        s_pinv,
    })
}
