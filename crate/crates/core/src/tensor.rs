//! Dense complex tensor primitives: contraction and the LAPACK-backed
//! factorisations (SVD, QR, Hermitian eigendecomposition, unitary matrix
//! exponential) that everything above is built on.
//!
//! Two conventions matter for reproducibility and are enforced here rather
//! than at call sites:
//!
//! - **SVD phase fixing.** LAPACK's singular vectors are unique only up to a
//!   phase per singular pair. [`svd_descending`] rotates each pair so the
//!   largest-magnitude entry of the left singular vector is real positive
//!   (ties broken by lowest index), making decompositions reproducible and
//!   comparable across code paths.
//! - **QR sign fixing.** [`qr_thin`] makes every diagonal entry of `R` real
//!   non-negative, so canonicalisation sweeps are deterministic and a
//!   QR of an already-isometric matrix returns it unchanged.
//!
//! All factorisations verify their outputs are finite and return
//! [`Error::Numerical`] otherwise; shape violations name both operands.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, Eigh, JobSvd, SVDDC, UPLO, QR};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Elementwise finiteness check over any complex array view.
fn ensure_finite<'a>(name: &str, data: impl IntoIterator<Item = &'a C64>) -> Result<()> {
    if data.into_iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("{name} produced a non-finite entry")))
    }
}

fn ensure_finite_real<'a>(name: &str, data: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if data.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("{name} produced a non-finite entry")))
    }
}

/// Reshape an owned array reading its elements in logical row-major order,
/// regardless of memory layout.
///
/// `into_shape` reinterprets the existing buffer: applied to a column-major
/// array it silently produces Fortran-order strides, permuting the logical
/// elements. `dot` returns column-major output whenever both operands have
/// unit row stride (e.g. a `(m, 1)` lhs against a transposed-view rhs), so
/// any reshape of a product must go through here rather than `into_shape`.
pub(crate) fn reshaped<A, D, E>(a: Array<A, D>, shape: E) -> Array<A, E::Dim>
where
    A: Clone,
    D: Dimension,
    E: ndarray::IntoDimension,
{
    let a = if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    };
    a.into_shape(shape)
        .expect("reshaped: element count mismatch")
}

/// Economy SVD `m = u · diag(s) · vh` with descending singular values and the
/// phase convention described in the module docs.
///
/// For an `(r, c)` input, `u` is `(r, k)`, `s` has length `k`, `vh` is
/// `(k, c)` with `k = min(r, c)`.
pub fn svd_descending(m: &ArrayView2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let owned = m.as_standard_layout().into_owned();
    let (u, s, vh) = owned
        .svddc(JobSvd::Some)
        .map_err(|e| Error::numerical(format!("SVD failed: {e}")))?;
    let mut u = u.ok_or_else(|| Error::numerical("SVD returned no left vectors"))?;
    let mut vh = vh.ok_or_else(|| Error::numerical("SVD returned no right vectors"))?;
    ensure_finite("svd (u)", u.iter())?;
    ensure_finite_real("svd (s)", s.iter())?;
    // LAPACK guarantees non-increasing order; assert it, don't re-sort.
    debug_assert!(s.windows(2).into_iter().all(|w| w[0] >= w[1]));

    for k in 0..s.len() {
        let col = u.column(k);
        let mut imax = 0;
        let mut best = -1.0_f64;
        for (i, z) in col.iter().enumerate() {
            let a = z.norm_sqr();
            if a > best + 1e-30 {
                best = a;
                imax = i;
            }
        }
        let pivot = u[[imax, k]];
        let mag = pivot.norm();
        if mag > 1e-300 {
            let phase = pivot / mag;
            let conj = phase.conj();
            u.column_mut(k).mapv_inplace(|z| z * conj);
            vh.row_mut(k).mapv_inplace(|z| z * phase);
        }
    }
    Ok((u, s, vh))
}

/// Thin QR `m = q · r` with the diagonal of `r` real non-negative.
///
/// For `(r, c)` input with `r >= c`, `q` is `(r, c)` and `r` is `(c, c)`;
/// wide inputs give `(r, r)` and `(r, c)`.
pub fn qr_thin(m: &ArrayView2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let owned = m.as_standard_layout().into_owned();
    let (mut q, mut r) = owned
        .qr()
        .map_err(|e| Error::numerical(format!("QR failed: {e}")))?;
    for j in 0..r.nrows().min(r.ncols()) {
        let d = r[[j, j]];
        let mag = d.norm();
        if mag > 1e-300 {
            let phase = d / mag;
            let conj = phase.conj();
            r.row_mut(j).mapv_inplace(|z| z * conj);
            q.column_mut(j).mapv_inplace(|z| z * phase);
        }
    }
    ensure_finite("qr (q)", q.iter())?;
    Ok((q, r))
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the corresponding orthonormal eigenvectors as columns.
pub fn eigh_hermitian(h: &ArrayView2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let owned = h.as_standard_layout().into_owned();
    let (w, v) = owned
        .eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("Hermitian eigendecomposition failed: {e}")))?;
    // The backend hands row-major memory to column-major LAPACK, so it
    // diagonalises conj(h); conjugating restores columns-as-eigenvectors.
    let v = v.mapv(|z| z.conj()).as_standard_layout().into_owned();
    ensure_finite_real("eigh (values)", w.iter())?;
    ensure_finite("eigh (vectors)", v.iter())?;
    Ok((w, v))
}

/// General (non-symmetric) eigendecomposition; eigenvectors as columns.
pub fn eig_general(m: &ArrayView2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    let owned = m.as_standard_layout().into_owned();
    let (w, v) = owned
        .eig()
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e}")))?;
    ensure_finite("eig (values)", w.iter())?;
    ensure_finite("eig (vectors)", v.iter())?;
    Ok((w, v))
}

/// Maximum elementwise deviation from Hermiticity, `max |h - h^H|`.
pub fn hermiticity_defect(h: &ArrayView2<C64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let d = (h[[i, j]] - h[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Unitary exponential `exp(i h)` of a Hermitian `h`, via eigendecomposition.
///
/// `h` must be square and Hermitian within `1e-12` elementwise.
pub fn expm_unitary(h: &ArrayView2<C64>) -> Result<Array2<C64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::shape(format!(
            "expm_unitary needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let defect = hermiticity_defect(h);
    if defect > 1e-12 {
        return Err(Error::validation(format!(
            "expm_unitary input is not Hermitian (defect {defect:.3e} > 1e-12)"
        )));
    }
    let (w, v) = eigh_hermitian(h)?;
    // v · diag(e^{i w}) · v^H
    let phases: Array1<C64> = w.mapv(|x| C64::new(0.0, x).exp());
    let mut scaled = v.clone();
    for (j, p) in phases.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * p);
    }
    let vh = conj_transpose(&v.view());
    Ok(scaled.dot(&vh))
}

/// Conjugate transpose.
pub fn conj_transpose(m: &ArrayView2<C64>) -> Array2<C64> {
    let mut t = Array2::zeros((m.ncols(), m.nrows()));
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t[[j, i]] = m[[i, j]].conj();
        }
    }
    t
}

/// Frobenius norm.
pub fn fro_norm(m: &ArrayView2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum elementwise deviation `max |a - b|`.
pub fn max_abs_diff(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Deviation from unitarity, `max |m^H m - I|`.
pub fn unitarity_defect(m: &ArrayView2<C64>) -> f64 {
    let prod = conj_transpose(m).dot(m);
    let n = prod.nrows();
    let eye = Array2::<C64>::eye(n);
    max_abs_diff(&prod.view(), &eye.view())
}

/// General pairwise tensor contraction (tensordot): contracts `axes` pairs
/// `(axis_of_a, axis_of_b)` and returns the free axes of `a` followed by the
/// free axes of `b`.
pub fn contract(
    a: &ArrayViewD<C64>,
    b: &ArrayViewD<C64>,
    axes: &[(usize, usize)],
) -> Result<ArrayD<C64>> {
    for &(ia, ib) in axes {
        if ia >= a.ndim() || ib >= b.ndim() {
            return Err(Error::shape(format!(
                "contract axis pair ({ia},{ib}) out of range for shapes {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if a.shape()[ia] != b.shape()[ib] {
            return Err(Error::shape(format!(
                "contract extent mismatch on pair ({ia},{ib}): lhs shape {:?}, rhs shape {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    let a_contracted: Vec<usize> = axes.iter().map(|&(ia, _)| ia).collect();
    let b_contracted: Vec<usize> = axes.iter().map(|&(_, ib)| ib).collect();
    let a_free: Vec<usize> = (0..a.ndim()).filter(|i| !a_contracted.contains(i)).collect();
    let b_free: Vec<usize> = (0..b.ndim()).filter(|i| !b_contracted.contains(i)).collect();

    let mut a_perm = a_free.clone();
    a_perm.extend_from_slice(&a_contracted);
    let mut b_perm = b_contracted.clone();
    b_perm.extend_from_slice(&b_free);

    let a_t = a.view().permuted_axes(a_perm.as_slice());
    let b_t = b.view().permuted_axes(b_perm.as_slice());

    let m: usize = a_free.iter().map(|&i| a.shape()[i]).product();
    let k: usize = a_contracted.iter().map(|&i| a.shape()[i]).product();
    let n: usize = b_free.iter().map(|&i| b.shape()[i]).product();

    let a_mat = a_t
        .as_standard_layout()
        .into_owned()
        .into_shape((m, k))
        .expect("contract: lhs reshape");
    let b_mat = b_t
        .as_standard_layout()
        .into_owned()
        .into_shape((k, n))
        .expect("contract: rhs reshape");
    let prod = a_mat.dot(&b_mat);

    let mut out_shape: Vec<usize> = a_free.iter().map(|&i| a.shape()[i]).collect();
    out_shape.extend(b_free.iter().map(|&i| b.shape()[i]));
    if out_shape.is_empty() {
        out_shape.push(1);
        // scalar result is returned as a 1-element rank-1 tensor
    }
    Ok(reshaped(prod, ndarray::IxDyn(&out_shape)))
}
