//! Dense operator algebra: products, commutators, norms and Hermitian
//! eigendecompositions on the many-body Hilbert space.
//!
//! Everything is generic over [`Scalar`], implemented for `f64` and
//! [`c64`]. Hamiltonians that start real stay real under the flow, so the real
//! instantiation carries most of the heavy numerics at half the cost.

use std::ops::{Add, Mul, Neg, Sub};

use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::traits::ComplexField;
use faer::{Accum, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::par::kernel_par;

pub use faer::c64;

/// Complex dense operator in the computational basis.
pub type OperatorMatrix = Mat<c64>;

/// Real dense operator; used when every entry is known to be real.
pub type RealOperator = Mat<f64>;

/// Relative Frobenius tolerance for Hermiticity preconditions.
pub const HERMITICITY_TOL: f64 = 1e-8;

/// Field of matrix entries.
pub trait Scalar:
    ComplexField<Real = f64>
    + Copy
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn from_real(x: f64) -> Self;
    /// `None` when the value has a nonzero imaginary part and `Self` is real.
    fn from_c64(z: c64) -> Option<Self>;
    fn to_c64(self) -> c64;
    fn conjugate(self) -> Self;
    fn re(self) -> f64;
    fn modulus_sq(self) -> f64;
    fn finite(self) -> bool;
    fn scaled(self, s: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_c64(z: c64) -> Option<Self> {
        (z.im == 0.0).then_some(z.re)
    }
    #[inline]
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
    #[inline]
    fn conjugate(self) -> Self {
        self
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn modulus_sq(self) -> f64 {
        self * self
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
    #[inline]
    fn scaled(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for c64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        c64::new(x, 0.0)
    }
    #[inline]
    fn from_c64(z: c64) -> Option<Self> {
        Some(z)
    }
    #[inline]
    fn to_c64(self) -> c64 {
        self
    }
    #[inline]
    fn conjugate(self) -> Self {
        self.conj()
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn modulus_sq(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    #[inline]
    fn scaled(self, s: f64) -> Self {
        self * s
    }
}

fn check_square<T>(m: MatRef<'_, T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_same_dim<T>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<usize> {
    let n = check_square(a)?;
    let m = check_square(b)?;
    if n != m {
        return Err(Error::DimensionMismatch { left: n, right: m });
    }
    Ok(n)
}

pub fn identity<T: Scalar>(dim: usize) -> Mat<T> {
    Mat::from_fn(dim, dim, |i, j| T::from_real(if i == j { 1.0 } else { 0.0 }))
}

/// `ab - ba`.
pub fn commutator<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<Mat<T>> {
    let n = check_same_dim(a, b)?;
    let mut out = Mat::<T>::zeros(n, n);
    let par = kernel_par();
    matmul(out.as_mut(), Accum::Replace, a, b, T::from_real(1.0), par);
    matmul(out.as_mut(), Accum::Add, b, a, T::from_real(-1.0), par);
    Ok(out)
}

/// Frobenius norm `sqrt(Tr M^dagger M)`.
pub fn frobenius_norm<T: Scalar>(m: MatRef<'_, T>) -> f64 {
    m.norm_l2()
}

/// `||a - b||_F`.
pub fn frobenius_distance<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<f64> {
    let n = check_same_dim(a, b)?;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += (a[(i, j)] - b[(i, j)]).modulus_sq();
        }
    }
    Ok(acc.sqrt())
}

pub fn trace<T: Scalar>(m: MatRef<'_, T>) -> c64 {
    let n = m.nrows().min(m.ncols());
    (0..n).fold(c64::new(0.0, 0.0), |acc, i| acc + m[(i, i)].to_c64())
}

pub fn adjoint<T: Scalar>(m: MatRef<'_, T>) -> Mat<T> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conjugate())
}

/// `||M - M^dagger||_F / ||M||_F`, zero for the zero matrix.
pub fn hermiticity_defect<T: Scalar>(m: MatRef<'_, T>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += (m[(i, j)] - m[(j, i)].conjugate()).modulus_sq();
        }
    }
    let norm = frobenius_norm(m);
    if norm == 0.0 {
        0.0
    } else {
        acc.sqrt() / norm
    }
}

pub fn is_finite<T: Scalar>(m: MatRef<'_, T>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].finite()))
}

pub fn to_complex(m: MatRef<'_, f64>) -> OperatorMatrix {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// Real part, provided the imaginary part is below `tol` relative to the norm.
pub fn to_real(m: MatRef<'_, c64>, tol: f64) -> Option<RealOperator> {
    let norm = frobenius_norm(m);
    let mut im = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            im += m[(i, j)].im * m[(i, j)].im;
        }
    }
    if im.sqrt() > tol * norm.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re))
}

/// `out += alpha * m`, elementwise.
pub(crate) fn axpy<T: Scalar>(out: &mut Mat<T>, alpha: f64, m: &Mat<T>) {
    for j in 0..out.ncols() {
        let dst = out.col_as_slice_mut(j);
        let src = m.col_as_slice(j);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = *d + s.scaled(alpha);
        }
    }
}

/// `out = a + alpha * b`, elementwise.
pub(crate) fn add_scaled_into<T: Scalar>(out: &mut Mat<T>, a: &Mat<T>, alpha: f64, b: &Mat<T>) {
    for j in 0..out.ncols() {
        let dst = out.col_as_slice_mut(j);
        let xa = a.col_as_slice(j);
        let xb = b.col_as_slice(j);
        for ((d, x), y) in dst.iter_mut().zip(xa).zip(xb) {
            *d = *x + y.scaled(alpha);
        }
    }
}

/// Writes `alpha (a a^dagger - a^dagger a)` into `out`. Only the lower
/// triangle is multiplied; the result is Hermitian by construction.
pub(crate) fn self_commutator_adjoint_into<T: Scalar>(out: &mut Mat<T>, a: MatRef<'_, T>, alpha: f64) {
    let par = kernel_par();
    let n = a.nrows();
    triangular::matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        a,
        BlockStructure::Rectangular,
        a.adjoint(),
        BlockStructure::Rectangular,
        T::from_real(alpha),
        par,
    );
    triangular::matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Add,
        a.adjoint(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        T::from_real(-alpha),
        par,
    );
    mirror_lower(out, n);
}

/// Overwrites the strict upper triangle with the conjugate of the lower one
/// and drops imaginary parts on the diagonal.
pub(crate) fn mirror_lower<T: Scalar>(out: &mut Mat<T>, n: usize) {
    for j in 0..n {
        let d = out[(j, j)];
        out[(j, j)] = T::from_real(d.re());
        for i in (j + 1)..n {
            let v = out[(i, j)].conjugate();
            out[(j, i)] = v;
        }
    }
}

/// Writes `b a - a b` into `out`.
pub(crate) fn reverse_commutator_into<T: Scalar>(out: &mut Mat<T>, a: MatRef<'_, T>, b: MatRef<'_, T>) {
    let par = kernel_par();
    matmul(out.as_mut(), Accum::Replace, b, a, T::from_real(1.0), par);
    matmul(out.as_mut(), Accum::Add, a, b, T::from_real(-1.0), par);
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T> {
    pub values: Vec<f64>,
    pub vectors: Mat<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(lambda)) V^dagger`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> c64) -> OperatorMatrix {
        let n = self.dim();
        let v = &self.vectors;
        let weights: Vec<c64> = self.values.iter().map(|&l| f(l)).collect();
        let vc = Mat::<c64>::from_fn(n, n, |i, k| v[(i, k)].to_c64());
        let scaled = Mat::<c64>::from_fn(n, n, |i, k| vc[(i, k)] * weights[k]);
        let mut out = Mat::<c64>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            scaled.as_ref(),
            vc.adjoint(),
            c64::new(1.0, 0.0),
            kernel_par(),
        );
        out
    }

    /// `V diag(f(lambda)) V^dagger` for real-valued `f`, staying in `T`.
    pub fn map_spectrum_real(&self, f: impl Fn(f64) -> f64) -> Mat<T> {
        let n = self.dim();
        let v = &self.vectors;
        let scaled = Mat::<T>::from_fn(n, n, |i, k| v[(i, k)].scaled(f(self.values[k])));
        let mut out = Mat::<T>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            scaled.as_ref(),
            v.adjoint(),
            T::from_real(1.0),
            kernel_par(),
        );
        out
    }

    /// `V^dagger M V`.
    pub fn to_eigenbasis(&self, m: MatRef<'_, T>) -> Result<Mat<T>> {
        let n = check_same_dim(m, self.vectors.as_ref())?;
        let par = kernel_par();
        let mut tmp = Mat::<T>::zeros(n, n);
        matmul(tmp.as_mut(), Accum::Replace, m, self.vectors.as_ref(), T::from_real(1.0), par);
        let mut out = Mat::<T>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.vectors.adjoint(),
            tmp.as_ref(),
            T::from_real(1.0),
            par,
        );
        Ok(out)
    }

    /// `V M V^dagger`.
    pub fn from_eigenbasis(&self, m: MatRef<'_, T>) -> Result<Mat<T>> {
        let n = check_same_dim(m, self.vectors.as_ref())?;
        let par = kernel_par();
        let mut tmp = Mat::<T>::zeros(n, n);
        matmul(tmp.as_mut(), Accum::Replace, self.vectors.as_ref(), m, T::from_real(1.0), par);
        let mut out = Mat::<T>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            tmp.as_ref(),
            self.vectors.adjoint(),
            T::from_real(1.0),
            par,
        );
        Ok(out)
    }
}

/// Hermitian eigendecomposition with a relative Hermiticity precondition of
/// [`HERMITICITY_TOL`].
pub fn eigh<T: Scalar>(m: MatRef<'_, T>) -> Result<EigenDecomposition<T>> {
    check_square(m)?;
    let defect = hermiticity_defect(m);
    if !(defect <= HERMITICITY_TOL) {
        return Err(Error::NotHermitian { defect });
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re()).collect();
    Ok(EigenDecomposition {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigvalsh<T: Scalar>(m: MatRef<'_, T>) -> Result<Vec<f64>> {
    check_square(m)?;
    let defect = hermiticity_defect(m);
    if !(defect <= HERMITICITY_TOL) {
        return Err(Error::NotHermitian { defect });
    }
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenSolver)?;
    Ok(vals.into_iter().map(|x| x.re()).collect())
}

/// `exp(scale * M)` for Hermitian `M`, via its eigendecomposition.
pub fn expm_hermitian<T: Scalar>(m: MatRef<'_, T>, scale: c64) -> Result<OperatorMatrix> {
    let evd = eigh(m)?;
    Ok(evd.map_spectrum(|l| (scale * l).exp()))
}

/// Eigenvalues of a general complex matrix, unordered.
pub fn eigvals_general(m: MatRef<'_, c64>) -> Result<Vec<c64>> {
    check_square(m)?;
    m.eigenvalues().map_err(|_| Error::EigenSolver)
}

/// `||U^dagger U - 1||_F`.
pub fn unitarity_defect(u: MatRef<'_, c64>) -> Result<f64> {
    let n = check_square(u)?;
    let mut g = Mat::<c64>::zeros(n, n);
    matmul(
        g.as_mut(),
        Accum::Replace,
        u.adjoint(),
        u,
        c64::new(1.0, 0.0),
        kernel_par(),
    );
    for i in 0..n {
        g[(i, i)] -= c64::new(1.0, 0.0);
    }
    Ok(frobenius_norm(g.as_ref()))
}

/// Dense product `a b`.
pub fn product<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<Mat<T>> {
    if a.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch {
            left: a.ncols(),
            right: b.nrows(),
        });
    }
    let mut out = Mat::<T>::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, T::from_real(1.0), kernel_par());
    Ok(out)
}
