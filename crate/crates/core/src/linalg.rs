//! Small symmetric-matrix helpers on packed upper-triangle storage.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::field::{packed_index, unpack_symmetric};

/// Smallest eigenvalue of a packed symmetric matrix.
pub fn min_eigenvalue_packed(d: usize, p: &[f64]) -> f64 {
    match d {
        1 => p[0],
        2 => {
            let (a, b, c) = (p[0], p[1], p[2]);
            0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
        }
        _ => min_eigenvalue(&unpack_symmetric(d, p)),
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Eigenvalues in ascending order.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Symmetric PSD square root of a packed matrix, written as a full row-major `d×d` block.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything more negative returns
/// `Err(min_eigenvalue)`.
pub fn sqrt_psd_packed(d: usize, p: &[f64], out: &mut [f64], tol: f64) -> Result<(), f64> {
    match d {
        1 => {
            if p[0] < -tol {
                return Err(p[0]);
            }
            out[0] = p[0].max(0.0).sqrt();
            Ok(())
        }
        2 => {
            let (a, b, c) = (p[0], p[1], p[2]);
            let lmin = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
            if lmin < -tol {
                return Err(lmin);
            }
            let s = (a * c - b * b).max(0.0).sqrt();
            let t = (a + c + 2.0 * s).max(0.0).sqrt();
            if t == 0.0 {
                out[..4].iter_mut().for_each(|v| *v = 0.0);
            } else {
                out[0] = (a + s) / t;
                out[1] = b / t;
                out[2] = b / t;
                out[3] = (c + s) / t;
            }
            Ok(())
        }
        _ => {
            let eig = SymmetricEigen::new(unpack_symmetric(d, p));
            let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            if lmin < -tol {
                return Err(lmin);
            }
            let q = &eig.eigenvectors;
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += q[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt() * q[(j, k)];
                    }
                    out[i * d + j] = acc;
                }
            }
            Ok(())
        }
    }
}

/// Diagonal entries of a packed symmetric matrix.
pub fn packed_diagonal(d: usize, p: &[f64]) -> impl Iterator<Item = f64> + '_ {
    (0..d).map(move |i| p[packed_index(d, i, i)])
}

/// Symmetrize in place: `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::packed_index;
    use proptest::prelude::*;

    fn check_sqrt(d: usize, a: &DMatrix<f64>) {
        let c = a * a.transpose();
        let mut p = vec![0.0; d * (d + 1) / 2];
        for i in 0..d {
            for j in i..d {
                p[packed_index(d, i, j)] = c[(i, j)];
            }
        }
        let mut out = vec![0.0; d * d];
        sqrt_psd_packed(d, &p, &mut out, 1e-12).unwrap();
        let s = DMatrix::from_row_slice(d, d, &out);
        let back = &s * &s;
        assert!((back - &c).abs().max() < 1e-9 * (1.0 + c.abs().max()));
        assert!((s.clone() - s.transpose()).abs().max() < 1e-12);
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(v in prop::collection::vec(-2.0f64..2.0, 9)) {
            check_sqrt(2, &DMatrix::from_row_slice(2, 2, &v[..4]));
            check_sqrt(3, &DMatrix::from_row_slice(3, 3, &v));
        }
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let mut out = [0.0; 4];
        assert!(sqrt_psd_packed(2, &[1.0, 0.0, -0.3], &mut out, 1e-12).is_err());
        assert!((min_eigenvalue_packed(2, &[1.0, 0.0, -0.3]) + 0.3).abs() < 1e-15);
    }
}
