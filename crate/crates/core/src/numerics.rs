//! Dense complex linear algebra used by every other module.
//!
//! [`ComplexMatrix`] is a thin newtype over a `nalgebra` dynamic matrix.
//! Cholesky and LU come from `nalgebra`. The SVD is a one-sided Jacobi
//! iteration written here: the `nalgebra` complex SVD returns wrong factors
//! for a noticeable fraction of rank-deficient inputs (e.g. rank-one 4x64
//! LOS channels). On top of these sit the rank-truncated pseudo-inverse,
//! the log-det capacity, constant-modulus phase extraction and a Cholesky
//! solve with diagonal jitter.

use std::fmt;
use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sweep cap for the Jacobi SVD. Convergence is quadratic; 64x64 inputs
/// settle in about ten sweeps.
const SVD_MAX_SWEEPS: usize = 100;

/// Number of decades the Cholesky jitter is allowed to grow by.
const JITTER_DECADES: i32 = 3;

/// Cholesky factorization that fails on non positive definite input.
///
/// `nalgebra` takes complex square roots of the pivots, so an indefinite
/// matrix still "factors"; reject any pivot that is not real positive.
fn positive_cholesky(m: DMatrix<Complex64>) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re
    });
    ok.then_some(chol)
}

/// Dense complex matrix, indexed `(row, col)`.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{})", self.rows(), self.cols())?;
        for r in 0..self.rows() {
            write!(f, "\n  [")?;
            for c in 0..self.cols() {
                let z = self[(r, c)];
                write!(f, " {:+.4}{:+.4}j", z.re, z.im)?;
            }
            write!(f, " ]")?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.0[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut Complex64 {
        &mut self.0[idx]
    }
}

impl From<DMatrix<Complex64>> for ComplexMatrix {
    fn from(m: DMatrix<Complex64>) -> Self {
        ComplexMatrix(m)
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        ComplexMatrix(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::shape(
                "from_row_slice",
                format!("{} entries for a {rows}x{cols} matrix", entries.len()),
            ));
        }
        Ok(ComplexMatrix(DMatrix::from_row_slice(rows, cols, entries)))
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_row_slice(rows, cols, &c)
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        ComplexMatrix(DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                diag[r]
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let c: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diagonal(&c)
    }

    /// Column vector from its entries.
    pub fn column(entries: &[Complex64]) -> Self {
        ComplexMatrix(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn as_inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexMatrix(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        ComplexMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(ComplexMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "sub",
                format!("{:?} - {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(ComplexMatrix(&self.0 - &other.0))
    }

    /// Copy of the given column range.
    pub fn columns(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.cols() {
            return Err(Error::shape(
                "columns",
                format!("range {range:?} of {} columns", self.cols()),
            ));
        }
        Ok(ComplexMatrix(
            self.0.columns(range.start, range.len()).into_owned(),
        ))
    }

    /// Copy of the given row range.
    pub fn row_range(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.rows() {
            return Err(Error::shape(
                "row_range",
                format!("range {range:?} of {} rows", self.rows()),
            ));
        }
        Ok(ComplexMatrix(self.0.rows(range.start, range.len()).into_owned()))
    }

    /// Vertical concatenation `[self; below]`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols() != below.cols() {
            return Err(Error::shape(
                "vstack",
                format!("{} vs {} columns", self.cols(), below.cols()),
            ));
        }
        let top = self.rows();
        Ok(ComplexMatrix::from_fn(
            top + below.rows(),
            self.cols(),
            |r, c| {
                if r < top {
                    self[(r, c)]
                } else {
                    below[(r - top, c)]
                }
            },
        ))
    }

    /// Squared Euclidean norm of each column.
    pub fn column_norms_sqr(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.norm_squared()).collect()
    }
}

/// Conjugate transpose.
pub fn hermitian(m: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(m.0.adjoint())
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(ComplexMatrix(&a.0 * &b.0))
}

pub fn trace(m: &ComplexMatrix) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::shape("trace", format!("{:?} is not square", m.shape())));
    }
    Ok(m.0.trace())
}

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.0.norm()
}

/// `m mᴴ` expressed through its squared Frobenius norm: `tr(m mᴴ)`.
pub fn power(m: &ComplexMatrix) -> f64 {
    m.0.norm_squared()
}

/// `(A + Aᴴ) / 2`.
pub fn symmetrize(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix((&a.0 + a.0.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Thin SVD `m = U diag(s) Vᴴ`, `s` descending, `p = min(rows, cols)`.
struct Svd {
    /// `rows x p`; columns for zero singular values are zero.
    u: DMatrix<Complex64>,
    s: Vec<f64>,
    /// `cols x p`.
    v: DMatrix<Complex64>,
}

fn svd(m: &ComplexMatrix, op: &'static str) -> Result<Svd> {
    if m.rows() < m.cols() {
        let t = jacobi_svd(&m.0.adjoint(), op)?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    jacobi_svd(&m.0, op)
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
fn jacobi_svd(a: &DMatrix<Complex64>, op: &'static str) -> Result<Svd> {
    let (rows, n) = a.shape();
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| Complex64::new(f64::from(u8::from(i == j)), 0.0)).collect())
        .collect();
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(a, b)| a.conj() * b).sum() };
    let rotate = |x: &mut Vec<Complex64>, y: &mut Vec<Complex64>, c: f64, s: f64, e: Complex64| {
        for (xp, yq) in x.iter_mut().zip(y.iter_mut()) {
            let (p, q) = (*xp, *yq);
            *xp = p * c - e.conj() * q * s;
            *yq = e * p * s + q * c;
        }
    };
    // Columns below this squared norm are rounding noise; rotating them
    // changes nothing above eps and can cycle forever.
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = n < 2;
    for _ in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]).re;
                let beta = dot(&cols[q], &cols[q]).re;
                let gamma = dot(&cols[p], &cols[q]);
                let g = gamma.norm();
                if alpha.min(beta) <= negligible || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = gamma / g;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, e);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, e);
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure { op, iterations: SVD_MAX_SWEEPS });
    }
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).re.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let u = DMatrix::from_fn(rows, n, |r, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            cols[j][r] / norms[j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let vm = DMatrix::from_fn(n, n, |r, k| v[order[k]][r]);
    Ok(Svd { u, s: order.iter().map(|&j| norms[j]).collect(), v: vm })
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(svd(m, "singular_values")?.s)
}

/// Orthonormal basis (`rows x r`) of the column space of `m`, keeping left
/// singular vectors whose singular value exceeds `rcond * σ_max`.
pub fn range_basis(m: &ComplexMatrix, rcond: f64) -> Result<ComplexMatrix> {
    if !(rcond >= 0.0) {
        return Err(Error::config(format!("range_basis: rcond {rcond} must be non-negative")));
    }
    let d = svd(m, "range_basis")?;
    let s_max = d.s.first().copied().unwrap_or(0.0);
    let keep = d.s.iter().filter(|&&s| s_max > 0.0 && s > rcond * s_max).count();
    Ok(ComplexMatrix::from_fn(m.rows(), keep, |r, c| d.u[(r, c)]))
}

/// Pseudo-inverse together with the rank it kept.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: ComplexMatrix,
    pub rank: usize,
    /// Singular values of the input, descending.
    pub singular_values: Vec<f64>,
}

impl PseudoInverse {
    /// Ratio of the largest to the smallest singular value (infinite when
    /// the input is rank deficient).
    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

/// Default relative truncation: `max(rows, cols) * eps`.
pub fn default_pinv_tol(m: &ComplexMatrix) -> f64 {
    m.rows().max(m.cols()) as f64 * f64::EPSILON
}

/// Moore–Penrose pseudo-inverse.
///
/// Singular values below `tol * sigma_max` are treated as zero. `None`
/// selects [`default_pinv_tol`].
pub fn pseudo_inverse(m: &ComplexMatrix, tol: Option<f64>) -> Result<ComplexMatrix> {
    pseudo_inverse_detailed(m, tol).map(|p| p.matrix)
}

pub fn pseudo_inverse_detailed(m: &ComplexMatrix, tol: Option<f64>) -> Result<PseudoInverse> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::shape("pseudo_inverse", "empty matrix"));
    }
    let tol = tol.unwrap_or_else(|| default_pinv_tol(m));
    if !(tol >= 0.0) {
        return Err(Error::config(format!("pseudo_inverse tolerance {tol} < 0")));
    }
    let d = svd(m, "pseudo_inverse")?;
    let cutoff = tol * d.s.first().copied().unwrap_or(0.0);

    let (rows, cols) = m.shape();
    let mut out = DMatrix::<Complex64>::zeros(cols, rows);
    let mut rank = 0;
    for (i, &s) in d.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        // out += v_i * (1/s) * u_iᴴ
        out.ger(
            Complex64::new(1.0 / s, 0.0),
            &d.v.column(i),
            &d.u.column(i).map(|z| z.conj()),
            Complex64::new(1.0, 0.0),
        );
    }
    Ok(PseudoInverse {
        matrix: ComplexMatrix(out),
        rank,
        singular_values: d.s,
    })
}

/// Diagnostic raised when a log-det argument is not positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalWarning {
    /// Real part of `det(I + A)` after symmetrization.
    pub determinant: f64,
}

/// `log2 det(I + A)` after Hermitian symmetrization of `A`.
///
/// Returns the value together with a warning when `I + A` was not positive
/// definite; a non-positive determinant is clamped to a capacity of zero.
pub fn log_det_capacity_checked(a: &ComplexMatrix) -> Result<(f64, Option<NumericalWarning>)> {
    if !a.is_square() {
        return Err(Error::shape(
            "log_det_capacity",
            format!("{:?} is not square", a.shape()),
        ));
    }
    let n = a.rows();
    let m = &symmetrize(a).0 + DMatrix::<Complex64>::identity(n, n);
    if let Some(chol) = positive_cholesky(m.clone()) {
        let l = chol.l_dirty();
        let ln_det: f64 = (0..n).map(|i| l[(i, i)].re.ln()).sum::<f64>() * 2.0;
        return Ok(((ln_det / std::f64::consts::LN_2).max(0.0), None));
    }
    let det = m.lu().determinant().re;
    let warning = Some(NumericalWarning { determinant: det });
    if det <= 0.0 || !det.is_finite() {
        log::warn!("log_det_capacity: det(I + A) = {det:e} clamped to zero capacity");
        return Ok((0.0, warning));
    }
    Ok((det.log2().max(0.0), warning))
}

/// `log2 det(I + A)`; see [`log_det_capacity_checked`].
pub fn log_det_capacity(a: &ComplexMatrix) -> Result<f64> {
    log_det_capacity_checked(a).map(|(v, _)| v)
}

/// `scale * exp(j * arg(m))` entrywise, with `arg(0) = 0`.
pub fn phase_matrix(m: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    ComplexMatrix(m.0.map(|z| {
        if z.re == 0.0 && z.im == 0.0 {
            Complex64::new(scale, 0.0)
        } else {
            Complex64::from_polar(scale, z.arg())
        }
    }))
}

/// Lower Cholesky factor of a Hermitian PSD matrix, with the diagonal jitter
/// that was needed to obtain it.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    chol: Cholesky<Complex64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn lower(&self) -> ComplexMatrix {
        ComplexMatrix(self.chol.l())
    }

    /// `L⁻¹ b`.
    pub fn whiten(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let l = self.chol.l_dirty();
        if b.rows() != l.nrows() {
            return Err(Error::shape(
                "whiten",
                format!("factor is {}x{}, rhs has {} rows", l.nrows(), l.ncols(), b.rows()),
            ));
        }
        l.solve_lower_triangular(&b.0)
            .map(ComplexMatrix)
            .ok_or(Error::NumericalFailure {
                op: "whiten",
                iterations: 1,
            })
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.rows() != self.chol.l_dirty().nrows() {
            return Err(Error::shape("solve_hermitian_psd", "rhs row count"));
        }
        Ok(ComplexMatrix(self.chol.solve(&b.0)))
    }
}

/// Cholesky factorization of `(A + Aᴴ)/2`, adding `1e-12 * tr(A)/n * 10^d`
/// to the diagonal for `d = 0..=3` when the plain factorization fails.
pub fn cholesky_with_jitter(a: &ComplexMatrix) -> Result<JitteredCholesky> {
    if !a.is_square() {
        return Err(Error::shape(
            "cholesky_with_jitter",
            format!("{:?} is not square", a.shape()),
        ));
    }
    let n = a.rows();
    let sym = symmetrize(a).0;
    if let Some(chol) = positive_cholesky(sym.clone()) {
        return Ok(JitteredCholesky { chol, jitter: 0.0 });
    }
    let mean_diag = sym.trace().re / n as f64;
    let base = 1e-12 * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for decade in 0..=JITTER_DECADES {
        let jitter = base * 10f64.powi(decade);
        let mut m = sym.clone();
        for i in 0..n {
            m[(i, i)] += Complex64::new(jitter, 0.0);
        }
        if let Some(chol) = positive_cholesky(m) {
            log::trace!("cholesky_with_jitter: succeeded with jitter {jitter:e}");
            return Ok(JitteredCholesky { chol, jitter });
        }
    }
    Err(Error::NumericalFailure {
        op: "cholesky_with_jitter",
        iterations: JITTER_DECADES as usize + 2,
    })
}

/// Solves `A X = B` for Hermitian PSD `A`.
pub fn solve_hermitian_psd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "solve_hermitian_psd",
            format!("{:?} \\ {:?}", a.shape(), b.shape()),
        ));
    }
    cholesky_with_jitter(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i3 = ComplexMatrix::identity(3);
        let p = pseudo_inverse(&i3, None).unwrap();
        assert!(max_abs_diff(&p, &i3) < 1e-14);
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let m = ComplexMatrix::from_real_diagonal(&[2.0, 0.0]);
        let p = pseudo_inverse_detailed(&m, None).unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[0.5, 0.0]);
        assert!(max_abs_diff(&p.matrix, &expected) < 1e-14);
        assert_eq!(p.rank, 1);
        assert!(p.condition_number().is_infinite());
    }

    #[test]
    fn pinv_rejects_negative_tolerance() {
        let m = ComplexMatrix::identity(2);
        assert!(matches!(pseudo_inverse(&m, Some(-1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn pinv_shape_is_transposed() {
        let m = ComplexMatrix::from_fn(2, 5, |r, c| c64(r as f64 + 1.0, c as f64));
        let p = pseudo_inverse(&m, None).unwrap();
        assert_eq!(p.shape(), (5, 2));
    }

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Rank-one 4x64 products, the LOS user-channel shape.
    #[test]
    fn pinv_of_rank_one_outer_products() {
        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..300 {
            let a = ComplexMatrix::from_fn(4, 1, |_, _| c64(next(), next()));
            let b = ComplexMatrix::from_fn(1, 64, |_, _| c64(next(), next()));
            let m = matmul(&a, &b).unwrap();
            let p = pseudo_inverse_detailed(&m, Some(1e-10)).unwrap();
            assert_eq!(p.rank, 1);
            let mp = matmul(&m, &p.matrix).unwrap();
            let mpm = matmul(&mp, &m).unwrap();
            let err = frobenius_norm(&mpm.sub(&m).unwrap()) / frobenius_norm(&m);
            let herm = frobenius_norm(&hermitian(&mp).sub(&mp).unwrap()) / frobenius_norm(&mp);
            assert!(err < 1e-12 && herm < 1e-12, "{err:e} {herm:e}");
        }
    }

    #[test]
    fn log_det_trivial_values() {
        assert_eq!(log_det_capacity(&ComplexMatrix::zeros(2, 2)).unwrap(), 0.0);
        let s = ComplexMatrix::from_real(1, 1, &[3.0]).unwrap();
        assert!((log_det_capacity(&s).unwrap() - 2.0).abs() < 1e-12);
        let d = ComplexMatrix::from_real_diagonal(&[1.0, 3.0]);
        assert!((log_det_capacity(&d).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_det_rejects_non_square() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(log_det_capacity(&m), Err(Error::Shape { .. })));
    }

    #[test]
    fn log_det_clamps_non_positive_determinant() {
        // I + A = diag(-1, 1) -> det < 0
        let a = ComplexMatrix::from_real_diagonal(&[-2.0, 0.0]);
        let (v, warn) = log_det_capacity_checked(&a).unwrap();
        assert_eq!(v, 0.0);
        assert!(warn.unwrap().determinant < 0.0);
    }

    #[test]
    fn log_det_symmetrizes_input() {
        // Upper-triangular perturbation has the same Hermitian part as a
        // symmetric split of it.
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.4, 0.2), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        let b = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(1.0, 0.0)])
            .unwrap();
        let va = log_det_capacity(&a).unwrap();
        let vb = log_det_capacity(&b).unwrap();
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn phase_matrix_examples() {
        let m = ComplexMatrix::from_row_slice(1, 1, &[c(1.0, 1.0)]).unwrap();
        let p = phase_matrix(&m, 1.0);
        assert!((p[(0, 0)] - Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)).norm() < 1e-15);

        let m = ComplexMatrix::from_real(1, 1, &[-2.0]).unwrap();
        let p = phase_matrix(&m, 0.5);
        assert!((p[(0, 0)] - Complex64::from_polar(0.5, std::f64::consts::PI)).norm() < 1e-15);
    }

    #[test]
    fn phase_of_zero_is_positive_real() {
        let p = phase_matrix(&ComplexMatrix::zeros(2, 2), 0.25);
        for z in p.iter() {
            assert_eq!(*z, c(0.25, 0.0));
        }
    }

    #[test]
    fn trace_and_norm() {
        assert_eq!(trace(&ComplexMatrix::identity(4)).unwrap(), c(4.0, 0.0));
        let d = ComplexMatrix::from_real_diagonal(&[3.0, 4.0]);
        assert!((frobenius_norm(&d) - 5.0).abs() < 1e-15);
        assert!(trace(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matmul_shape_error() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape { .. })));
    }

    #[test]
    fn solve_recovers_rhs() {
        let a = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)],
        )
        .unwrap();
        let b = ComplexMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 2.0)]).unwrap();
        let x = solve_hermitian_psd(&a, &b).unwrap();
        let back = matmul(&a, &x).unwrap();
        assert!(max_abs_diff(&back, &b) < 1e-12);
    }

    #[test]
    fn cholesky_jitter_handles_rank_one() {
        let v = ComplexMatrix::column(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        let a = matmul(&v, &hermitian(&v)).unwrap();
        let chol = cholesky_with_jitter(&a).unwrap();
        assert!(chol.jitter > 0.0);
        assert!(chol.jitter <= 1e-12 * 1e3 * 1.0 + 1e-30);
        let l = chol.lower();
        let rebuilt = matmul(&l, &hermitian(&l)).unwrap();
        assert!(max_abs_diff(&rebuilt, &a) < 1e-8);
    }

    #[test]
    fn cholesky_fails_on_negative_definite() {
        let a = ComplexMatrix::from_real_diagonal(&[-1.0, -1.0]);
        assert!(matches!(
            cholesky_with_jitter(&a),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn vstack_and_slices() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = ComplexMatrix::from_real(1, 2, &[5.0, 6.0]).unwrap();
        let s = a.vstack(&b).unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert_eq!(s.row_range(0..2).unwrap(), a);
        assert_eq!(s.row_range(2..3).unwrap(), b);
        assert_eq!(s.columns(1..2).unwrap().row_major(), vec![c(2.0, 0.0), c(4.0, 0.0), c(6.0, 0.0)]);
        assert!(a.vstack(&ComplexMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn range_basis_of_rank_one() {
        let v = ComplexMatrix::column(&[c(1.0, 0.5), c(-2.0, 0.0), c(0.0, 1.0)]);
        let m = matmul(&v, &hermitian(&v)).unwrap();
        let u = range_basis(&m, 1e-10).unwrap();
        assert_eq!(u.shape(), (3, 1));
        let proj = matmul(&matmul(&u, &hermitian(&u)).unwrap(), &v).unwrap();
        assert!(max_abs_diff(&proj, &v) < 1e-12);
        assert_eq!(range_basis(&ComplexMatrix::zeros(2, 2), 1e-10).unwrap().cols(), 0);
        assert_eq!(range_basis(&ComplexMatrix::identity(3), 1e-10).unwrap().cols(), 3);
    }
}
