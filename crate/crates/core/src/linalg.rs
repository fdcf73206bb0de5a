//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Only what the Fréchet-distance computation needs: eigensolve of a
//! symmetric matrix and the principal square root of a PSD matrix.

use alloc::string::String;
use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

const JACOBI_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-12;

/// Tolerance below zero for calling an eigenvalue "nonnegative".
/// Anything in `[-PSD_SLACK, 0)` is treated as rounding noise and
/// clamped to zero; anything below it is a genuine negative direction.
pub const PSD_SLACK: f64 = 1e-6;

/// Eigenvalues and matching orthonormal eigenvectors (columns) of a
/// symmetric matrix. `a = v * diag(values) * v^T`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

/// Cyclic Jacobi eigendecomposition. `a` must be square and symmetric
/// to within `1e-9` per entry.
pub fn sym_eigen(a: &Tensor) -> Result<SymEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(CoreError::shape("sym_eigen: matrix not square"));
    }
    for r in 0..n {
        for c in (r + 1)..n {
            if (a.get(r, c) - a.get(c, r)).abs() > 1e-9 {
                return Err(CoreError::Input(String::from(
                    "sym_eigen: matrix not symmetric",
                )));
            }
        }
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, avg);
            m.set(c, r, avg);
        }
    }
    let mut v = Tensor::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });

    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += m.get(r, c) * m.get(r, c);
            }
        }
        if off.sqrt() <= OFF_DIAG_TOL {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= OFF_DIAG_TOL * 1e-3 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-angle root keeps rotations stable.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = t * cos;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, cos * mkp - sin * mkq);
                    m.set(k, q, sin * mkp + cos * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, cos * mpk - sin * mqk);
                    m.set(q, k, sin * mpk + cos * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, cos * vkp - sin * vkq);
                    v.set(k, q, sin * vkp + cos * vkq);
                }
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    Ok(SymEigen { values, vectors: v })
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues in `[-PSD_SLACK, 0)` are clamped to zero; anything more
/// negative is an error.
pub fn matrix_sqrt_psd(a: &Tensor) -> Result<Tensor> {
    let eig = sym_eigen(a)?;
    let n = a.rows();
    let mut roots = Vec::with_capacity(n);
    for &lambda in &eig.values {
        if lambda < -PSD_SLACK {
            return Err(CoreError::NotPsd(alloc::format!(
                "eigenvalue {lambda:.3e} below -{PSD_SLACK:.0e}"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // v * diag(roots) * v^T.
    let mut scaled = eig.vectors.clone();
    for r in 0..n {
        for c in 0..n {
            scaled.set(r, c, scaled.get(r, c) * roots[c]);
        }
    }
    scaled.matmul(&eig.vectors.transpose())
}

/// Sum of the diagonal.
pub fn trace(a: &Tensor) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(CoreError::shape("trace: matrix not square"));
    }
    Ok((0..a.rows()).map(|i| a.get(i, i)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_sqrt_is_elementwise() {
        let a = Tensor::from_vec(2, 2, vec![4.0, 0.0, 0.0, 9.0]).unwrap();
        let s = matrix_sqrt_psd(&a).unwrap();
        let expect = Tensor::from_vec(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        assert!(max_abs_diff(&s, &expect) < 1e-12);
    }

    #[test]
    fn sqrt_squares_back_to_input() {
        // Random-ish symmetric PSD matrix: b^T b.
        let b = Tensor::from_vec(
            3,
            3,
            vec![0.8, -0.3, 0.5, 0.2, 1.1, -0.7, -0.4, 0.6, 0.9],
        )
        .unwrap();
        let a = b.transpose().matmul(&b).unwrap();
        let s = matrix_sqrt_psd(&a).unwrap();
        let back = s.matmul(&s).unwrap();
        assert!(max_abs_diff(&back, &a) < 1e-9, "diff {}", max_abs_diff(&back, &a));
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let b = Tensor::from_vec(3, 3, vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let eig = sym_eigen(&b).unwrap();
        let vtv = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
        let eye = Tensor::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        assert!(max_abs_diff(&vtv, &eye) < 1e-10);
    }

    #[test]
    fn genuinely_negative_matrix_is_rejected() {
        let a = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, -0.5]).unwrap();
        assert!(matches!(matrix_sqrt_psd(&a), Err(CoreError::NotPsd(_))));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let a = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, -1e-7]).unwrap();
        let s = matrix_sqrt_psd(&a).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn trace_sums_diagonal() {
        let a = Tensor::from_vec(2, 2, vec![1.5, 9.0, 9.0, 2.5]).unwrap();
        assert_eq!(trace(&a).unwrap(), 4.0);
    }
}
