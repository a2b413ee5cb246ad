//! Exact linear algebra: Gaussian elimination over ℚ and fraction-free
//! Bareiss elimination over the polynomial ring, which backs every solve over
//! the rational-function field (dual frames, Reeb fields, presymplectic
//! Hamiltonians). Pivots are chosen by lowest total degree to control
//! expression swell; a single rational-function division happens during
//! back-substitution.

use num::{One, Zero};

use crate::exprs::{ExprError, ExprResult, MultiPoly, RatFn, Rational, VarSet};

// ---------------------------------------------------------------------------
// Rational matrices
// ---------------------------------------------------------------------------

/// Dense matrix over ℚ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Rational>,
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix");
            data.extend(row);
        }
        QMat { rows: r, cols: c, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    /// Reduced row echelon form; returns the pivot columns.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !self.get(i, c).is_zero()) else {
                continue;
            };
            for j in 0..self.cols {
                self.data.swap(r * self.cols + j, p * self.cols + j);
            }
            let inv = Rational::one() / self.get(r, c).clone();
            for j in c..self.cols {
                let v = self.get(r, j) * &inv;
                self.set(r, j, v);
            }
            for i in 0..self.rows {
                if i != r && !self.get(i, c).is_zero() {
                    let factor = self.get(i, c).clone();
                    for j in c..self.cols {
                        let v = self.get(i, j) - &factor * self.get(r, j);
                        self.set(i, j, v);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref().len()
    }

    /// One exact solution of `self * x = b`, or `None` when inconsistent.
    pub fn solve(&self, b: &[Rational]) -> Option<Vec<Rational>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = QMat::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug.set(i, j, self.get(i, j).clone());
            }
            aug.set(i, self.cols, b[i].clone());
        }
        let pivots = aug.rref();
        if pivots.contains(&self.cols) {
            return None; // pivot in the rhs column: inconsistent
        }
        let mut x = vec![Rational::zero(); self.cols];
        for (r, &c) in pivots.iter().enumerate() {
            x[c] = aug.get(r, self.cols).clone();
        }
        Some(x)
    }

    /// Canonical nullspace basis (free variables set to 1 in RREF order).
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let mut m = self.clone();
        let pivots = m.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Vec::new();
        for &f in &free {
            let mut v = vec![Rational::zero(); self.cols];
            v[f] = Rational::one();
            for (r, &c) in pivots.iter().enumerate() {
                v[c] = -m.get(r, f).clone();
            }
            basis.push(v);
        }
        basis
    }
}

/// Reduced row echelon form of a list of row vectors: canonical basis of
/// their span. Used to compare solution spaces independently of basis choice.
pub fn rref_rows(rows: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let mut m = QMat::from_rows(rows.to_vec());
    let pivots = m.rref();
    (0..pivots.len())
        .map(|r| (0..m.cols).map(|c| m.get(r, c).clone()).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Fraction-free elimination over the polynomial ring
// ---------------------------------------------------------------------------

/// Row-echelon data produced by Bareiss elimination with full pivoting.
pub struct PolyEchelon {
    vars: VarSet,
    /// Matrix after elimination; column `k` of the logical matrix is stored
    /// at physical position `col_order[k]`.
    mat: Vec<Vec<MultiPoly>>,
    rhs: Vec<Vec<MultiPoly>>,
    col_order: Vec<usize>,
    pub rank: usize,
    swap_sign: i8,
}

/// Bareiss elimination of a rational-function matrix (with optional
/// right-hand-side columns). Each row is first cleared to a common
/// polynomial denominator, which preserves row space and solutions.
pub fn bareiss(a: &[Vec<RatFn>], rhs: &[Vec<RatFn>], vars: &VarSet) -> PolyEchelon {
    let nrows = a.len();
    let ncols = a.first().map(|r| r.len()).unwrap_or(0);
    let nrhs = rhs.first().map(|r| r.len()).unwrap_or(0);
    let mut mat: Vec<Vec<MultiPoly>> = Vec::with_capacity(nrows);
    let mut rhs_mat: Vec<Vec<MultiPoly>> = Vec::with_capacity(nrows);
    for i in 0..nrows {
        let mut all: Vec<RatFn> = a[i].clone();
        if nrhs > 0 {
            all.extend(rhs[i].iter().cloned());
        }
        if all.is_empty() {
            mat.push(Vec::new());
            rhs_mat.push(Vec::new());
            continue;
        }
        let (nums, _den) = RatFn::clear_denominators(&all);
        mat.push(nums[..ncols].to_vec());
        rhs_mat.push(nums[ncols..].to_vec());
    }

    let mut col_order: Vec<usize> = (0..ncols).collect();
    let mut prev = MultiPoly::one(vars);
    let mut rank = 0;
    let mut swap_sign = 1i8;

    for step in 0..nrows.min(ncols) {
        // Lowest-total-degree nonzero pivot in the remaining block.
        let mut best: Option<(usize, usize, u32)> = None;
        for i in step..nrows {
            for k in step..ncols {
                let e = &mat[i][col_order[k]];
                if !e.is_zero() {
                    let d = e.total_degree();
                    if best.map(|(_, _, bd)| d < bd).unwrap_or(true) {
                        best = Some((i, k, d));
                    }
                }
            }
        }
        let Some((pi, pk, _)) = best else { break };
        if pi != step {
            mat.swap(pi, step);
            rhs_mat.swap(pi, step);
            swap_sign = -swap_sign;
        }
        if pk != step {
            col_order.swap(step, pk);
            swap_sign = -swap_sign;
        }
        let pivot = mat[step][col_order[step]].clone();
        for i in step + 1..nrows {
            let factor = mat[i][col_order[step]].clone();
            for k in step + 1..ncols {
                let c = col_order[k];
                let num = pivot.mul(&mat[i][c]).sub(&factor.mul(&mat[step][c]));
                mat[i][c] = num.exact_div(&prev).expect("Bareiss division is exact");
            }
            for k in 0..nrhs {
                let num = pivot.mul(&rhs_mat[i][k]).sub(&factor.mul(&rhs_mat[step][k]));
                rhs_mat[i][k] = num.exact_div(&prev).expect("Bareiss division is exact");
            }
            mat[i][col_order[step]] = MultiPoly::zero(vars);
        }
        prev = pivot;
        rank += 1;
    }

    PolyEchelon {
        vars: vars.clone(),
        mat,
        rhs: rhs_mat,
        col_order,
        rank,
        swap_sign,
    }
}

impl PolyEchelon {
    fn nrows(&self) -> usize {
        self.mat.len()
    }

    fn ncols(&self) -> usize {
        self.col_order.len()
    }

    fn entry(&self, i: usize, logical_col: usize) -> &MultiPoly {
        &self.mat[i][self.col_order[logical_col]]
    }

    /// Consistency of every rhs column: no zero row may have a nonzero rhs.
    pub fn consistent(&self) -> bool {
        for i in self.rank..self.nrows() {
            if self.rhs[i].iter().any(|p| !p.is_zero()) {
                return false;
            }
        }
        true
    }

    /// Back-substitute one rhs column into a solution with free variables set
    /// to zero. Returns `None` when the system is inconsistent.
    pub fn solve_column(&self, k: usize) -> Option<Vec<RatFn>> {
        for i in self.rank..self.nrows() {
            if !self.rhs[i][k].is_zero() {
                return None;
            }
        }
        let mut x = vec![RatFn::zero(&self.vars); self.ncols()];
        for r in (0..self.rank).rev() {
            let mut acc = RatFn::from_poly(self.rhs[r][k].clone());
            for c in r + 1..self.ncols() {
                let coeff = self.entry(r, c);
                if !coeff.is_zero() {
                    let xc = &x[self.col_order[c]];
                    if !xc.is_zero() {
                        acc = acc.sub(&RatFn::from_poly(coeff.clone()).mul(xc));
                    }
                }
            }
            let pivot = RatFn::from_poly(self.entry(r, r).clone());
            x[self.col_order[r]] = acc.div(&pivot).expect("pivot nonzero");
        }
        Some(x)
    }

    /// Basis of the kernel over the rational-function field.
    pub fn nullspace(&self) -> Vec<Vec<RatFn>> {
        let mut basis = Vec::new();
        for free in self.rank..self.ncols() {
            let mut x = vec![RatFn::zero(&self.vars); self.ncols()];
            x[self.col_order[free]] = RatFn::one(&self.vars);
            for r in (0..self.rank).rev() {
                let mut acc = RatFn::zero(&self.vars);
                for c in r + 1..self.ncols() {
                    let coeff = self.entry(r, c);
                    if !coeff.is_zero() {
                        let xc = &x[self.col_order[c]];
                        if !xc.is_zero() {
                            acc = acc.sub(&RatFn::from_poly(coeff.clone()).mul(xc));
                        }
                    }
                }
                let pivot = RatFn::from_poly(self.entry(r, r).clone());
                x[self.col_order[r]] = acc.div(&pivot).expect("pivot nonzero");
            }
            basis.push(x);
        }
        basis
    }
}

/// Exact determinant of a square rational-function matrix.
pub fn rf_det(a: &[Vec<RatFn>], vars: &VarSet) -> RatFn {
    let n = a.len();
    if n == 0 {
        return RatFn::one(vars);
    }
    // Track the row-clearing multipliers so the polynomial determinant can be
    // divided back down to the rational-function one.
    let mut mat: Vec<Vec<MultiPoly>> = Vec::with_capacity(n);
    let mut scale = RatFn::one(vars);
    for row in a {
        let (nums, den) = RatFn::clear_denominators(row);
        scale = scale.mul(&RatFn::from_poly(den));
        mat.push(nums);
    }
    let rf_rows: Vec<Vec<RatFn>> = mat
        .iter()
        .map(|r| r.iter().map(|p| RatFn::from_poly(p.clone())).collect())
        .collect();
    let ech = bareiss(&rf_rows, &[], vars);
    if ech.rank < n {
        return RatFn::zero(vars);
    }
    let mut det = RatFn::from_poly(ech.entry(n - 1, n - 1).clone());
    if ech.swap_sign < 0 {
        det = det.neg();
    }
    det.div(&scale).expect("row multipliers are nonzero")
}

/// Solve `A x = b` over the rational-function field; free variables are set
/// to zero. `None` when inconsistent.
pub fn rf_solve(a: &[Vec<RatFn>], b: &[RatFn], vars: &VarSet) -> Option<Vec<RatFn>> {
    let rhs: Vec<Vec<RatFn>> = b.iter().map(|x| vec![x.clone()]).collect();
    let ech = bareiss(a, &rhs, vars);
    ech.solve_column(0)
}

/// Kernel basis of `A` over the rational-function field.
pub fn rf_nullspace(a: &[Vec<RatFn>], vars: &VarSet) -> Vec<Vec<RatFn>> {
    bareiss(a, &[], vars).nullspace()
}

/// Inverse of a square rational-function matrix.
pub fn rf_inverse(a: &[Vec<RatFn>], vars: &VarSet) -> ExprResult<Vec<Vec<RatFn>>> {
    let n = a.len();
    let mut rhs = vec![vec![RatFn::zero(vars); n]; n];
    for (i, row) in rhs.iter_mut().enumerate() {
        row[i] = RatFn::one(vars);
    }
    let ech = bareiss(a, &rhs, vars);
    if ech.rank < n {
        return Err(ExprError::ZeroDenominator);
    }
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        cols.push(ech.solve_column(k).expect("full rank"));
    }
    // cols[k] is the k-th column of the inverse; transpose to rows.
    let mut inv = vec![vec![RatFn::zero(vars); n]; n];
    for (k, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][k] = col[i].clone();
        }
    }
    Ok(inv)
}

#[allow(dead_code)]
fn unused(_: ExprError) {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::{parse_rf, q, varset};

    #[test]
    fn qmat_solve_and_nullspace() {
        let a = QMat::from_rows(vec![
            vec![q(1), q(2), q(3)],
            vec![q(2), q(4), q(6)],
            vec![q(1), q(0), q(1)],
        ]);
        assert_eq!(a.rank(), 2);
        let ns = a.nullspace();
        assert_eq!(ns.len(), 1);
        // A * v = 0
        for i in 0..3 {
            let mut acc = Rational::zero();
            for j in 0..3 {
                acc += a.get(i, j) * &ns[0][j];
            }
            assert!(acc.is_zero());
        }
        let b = vec![q(6), q(12), q(2)];
        let x = a.solve(&b).unwrap();
        for i in 0..3 {
            let mut acc = Rational::zero();
            for j in 0..3 {
                acc += a.get(i, j) * &x[j];
            }
            assert_eq!(acc, b[i]);
        }
        assert!(a.solve(&[q(1), q(0), q(0)]).is_none());
    }

    #[test]
    fn rf_inverse_of_frame_matrix() {
        let vs = varset(&["x", "y", "z"]);
        let e = |s: &str| parse_rf(s, &vs).unwrap();
        // Rows are the Riccati symmetry fields y^2 ∂x, y ∂y, z ∂z.
        let a = vec![
            vec![e("y^2"), e("0"), e("0")],
            vec![e("0"), e("y"), e("0")],
            vec![e("0"), e("0"), e("z")],
        ];
        let inv = rf_inverse(&a, &vs).unwrap();
        assert_eq!(inv[0][0], e("1/y^2"));
        assert_eq!(inv[1][1], e("1/y"));
        assert_eq!(inv[2][2], e("1/z"));
    }

    #[test]
    fn rf_det_matches_cofactor() {
        let vs = varset(&["x", "y"]);
        let e = |s: &str| parse_rf(s, &vs).unwrap();
        let a = vec![vec![e("x"), e("1/y")], vec![e("y"), e("x")]];
        let det = rf_det(&a, &vs);
        assert_eq!(det, e("x^2 - 1"));
        // Singular case
        let s = vec![vec![e("x"), e("x")], vec![e("y"), e("y")]];
        assert!(rf_det(&s, &vs).is_zero());
    }

    #[test]
    fn rf_solve_underdetermined_sets_free_vars_to_zero() {
        let vs = varset(&["x"]);
        let e = |s: &str| parse_rf(s, &vs).unwrap();
        // One equation, two unknowns: x*a + b = x^2
        let a = vec![vec![e("x"), e("1")]];
        let b = vec![e("x^2")];
        let sol = rf_solve(&a, &b, &vs).unwrap();
        // Check the residual exactly.
        let lhs = a[0][0].mul(&sol[0]).add(&a[0][1].mul(&sol[1]));
        assert_eq!(lhs, b[0]);
        let ns = rf_nullspace(&a, &vs);
        assert_eq!(ns.len(), 1);
    }

    #[test]
    fn inconsistent_system_detected() {
        let vs = varset(&["x"]);
        let e = |s: &str| parse_rf(s, &vs).unwrap();
        let a = vec![vec![e("x")], vec![e("x")]];
        let b = vec![e("1"), e("2")];
        assert!(rf_solve(&a, &b, &vs).is_none());
    }
}
