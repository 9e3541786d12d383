//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// `scale · AᵀB` for column-major `a` (n×p) and `b` (n×q), without forming `Aᵀ`.
pub fn scaled_tr_mul(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "row mismatch in AᵀB");
    let (n, p, q) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = DMatrix::<f64>::zeros(p, q);
    if n == 0 || p == 0 || q == 0 {
        return c;
    }
    // SAFETY: all three buffers are contiguous column-major storage of the
    // stated shapes, `c` does not alias the inputs, and strides stay in bounds.
    unsafe {
        matrixmultiply::dgemm(
            p,
            n,
            q,
            scale,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            p as isize,
        );
    }
    c
}

/// `scale · XᵀX`, symmetrised to remove rounding asymmetry.
pub fn gram(x: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let mut g = scaled_tr_mul(x, x, scale);
    let p = g.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `scale · A B` through matrixmultiply.
pub fn scaled_mul(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimension mismatch in AB");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = DMatrix::<f64>::zeros(m, n);
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    // SAFETY: contiguous column-major buffers of the stated shapes; no aliasing.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            scale,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn symmetric_eigenvalues_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
