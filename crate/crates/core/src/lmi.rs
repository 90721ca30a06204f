//! Matrix expressions affine in scalar decision variables.
//!
//! An [`Affine`] is `F0 + sum_i y_i F_i` with dense coefficient matrices.
//! Matrix-valued unknowns (symmetric `P`, full `R`) are allocated through
//! [`VarSpace`], which hands back the expression for the whole matrix, so
//! LMIs can be written with the same matrix products as their math.

use std::collections::BTreeMap;

use crate::error::{dim_err, Result};
use crate::matlib::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl Affine {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn constant(m: Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    /// `coef * y_var`.
    pub fn term(var: usize, coef: Mat) -> Self {
        let mut out = Self::zeros(coef.nrows(), coef.ncols());
        out.terms.insert(var, coef);
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Mat)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        let constant = f(&self.constant);
        Self {
            rows: constant.nrows(),
            cols: constant.ncols(),
            terms: self.terms.iter().map(|(k, v)| (*k, f(v))).collect(),
            constant,
        }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// `m * self`.
    pub fn lmul(&self, m: &Mat) -> Self {
        self.map(|c| m * c)
    }

    /// `self * m`.
    pub fn rmul(&self, m: &Mat) -> Self {
        self.map(|c| c * m)
    }

    pub fn add(&self, other: &Affine) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine shapes differ");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.terms {
            out.terms
                .entry(*k)
                .and_modify(|c| *c += v)
                .or_insert_with(|| v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Affine) -> Self {
        self.add(&other.neg())
    }

    pub fn add_const(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// Sum of diagonal entries, as a 1x1 expression.
    pub fn trace(&self) -> Self {
        self.map(|m| Mat::from_element(1, 1, m.trace()))
    }

    pub fn eval(&self, y: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (k, v) in &self.terms {
            out += v * y[*k];
        }
        out
    }

    /// Symmetric up to `tol` in every coefficient.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && std::iter::once(&self.constant)
                .chain(self.terms.values())
                .all(|m| (m - m.transpose()).amax() <= tol)
    }

    /// Assemble a block matrix; every row of blocks must agree in height and
    /// every column in width.
    pub fn blocks(grid: &[Vec<Affine>]) -> Result<Affine> {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(dim_err("block row length", widths.len(), row.len()));
            }
            for (j, b) in row.iter().enumerate() {
                if b.rows != heights[i] || b.cols != widths[j] {
                    return Err(dim_err(
                        &format!("block ({i}, {j})"),
                        format!("{}x{}", heights[i], widths[j]),
                        format!("{}x{}", b.rows, b.cols),
                    ));
                }
            }
        }
        let (rows, cols) = (heights.iter().sum(), widths.iter().sum());
        let mut out = Affine::zeros(rows, cols);
        let mut r = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c = 0;
            for (j, b) in row.iter().enumerate() {
                let (h, w) = (heights[i], widths[j]);
                out.constant.view_mut((r, c), (h, w)).copy_from(&b.constant);
                for (k, v) in &b.terms {
                    out.terms
                        .entry(*k)
                        .or_insert_with(|| Mat::zeros(rows, cols))
                        .view_mut((r, c), (h, w))
                        .copy_from(v);
                }
                c += w;
            }
            r += heights[i];
        }
        Ok(out)
    }
}

/// Allocator for decision variables.
#[derive(Debug, Default, Clone)]
pub struct VarSpace {
    count: usize,
}

impl VarSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn scalar(&mut self) -> (usize, Affine) {
        let k = self.count;
        self.count += 1;
        (k, Affine::term(k, Mat::from_element(1, 1, 1.0)))
    }

    /// Symmetric `n x n` unknown, one variable per upper-triangular entry.
    pub fn symmetric(&mut self, n: usize) -> Affine {
        let mut out = Affine::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut coef = Mat::zeros(n, n);
                coef[(i, j)] = 1.0;
                coef[(j, i)] = 1.0;
                out.terms.insert(self.count, coef);
                self.count += 1;
            }
        }
        out
    }

    pub fn full(&mut self, rows: usize, cols: usize) -> Affine {
        let mut out = Affine::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                let mut coef = Mat::zeros(rows, cols);
                coef[(i, j)] = 1.0;
                out.terms.insert(self.count, coef);
                self.count += 1;
            }
        }
        out
    }
}
