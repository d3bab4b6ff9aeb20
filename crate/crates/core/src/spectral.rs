//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Sweeps visit `(p, q)` pairs in row order, which makes the output a pure
//! function of the input bits. Convergence: off-diagonal Frobenius norm below
//! `1e-12 * ||M||_F`, at most 100 sweeps.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};
use crate::graph::{normalized_laplacian, Graph};

const REL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Φ diag(f(λ)) Φᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &l) in scaled.columns_mut().into_iter().zip(&self.eigenvalues) {
            col *= f(l);
        }
        scaled.dot(&self.eigenvectors.t())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.reconstruct_with(|l| l)
    }
}

/// Eigendecomposition of a symmetric matrix. Only the upper triangle's
/// mirror image is assumed; callers must symmetrize non-symmetric input.
pub fn sym_eig(m: &Array2<f64>) -> Result<EigenDecomposition> {
    let n = check_square(m)?;
    let mut a: Vec<f64> = m.iter().copied().collect();
    let mut vt = identity_vec(n);
    jacobi(&mut a, &mut vt, n);
    Ok(assemble(&a, &vt, n))
}

/// Same result contract as [`sym_eig`], but starts from an orthonormal basis
/// `q` that nearly diagonalizes `m` (for example the previous decomposition of
/// a slowly drifting matrix). Cuts the sweep count to one or two.
pub fn sym_eig_warm(m: &Array2<f64>, q: &Array2<f64>) -> Result<EigenDecomposition> {
    let n = check_square(m)?;
    if q.dim() != (n, n) {
        return Err(CoreError::dim("sym_eig_warm basis", format!("{n}x{n}"), format!("{:?}", q.dim())));
    }
    let rotated = q.t().dot(m).dot(q);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (rotated[[i, j]] + rotated[[j, i]]);
        }
    }
    let mut vt = identity_vec(n);
    jacobi(&mut a, &mut vt, n);
    let inner = assemble(&a, &vt, n);
    Ok(EigenDecomposition {
        eigenvalues: inner.eigenvalues,
        eigenvectors: q.dot(&inner.eigenvectors),
    })
}

fn check_square(m: &Array2<f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(CoreError::dim("sym_eig", "square matrix", format!("{r}x{c}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("sym_eig input".into()));
    }
    Ok(r)
}

fn identity_vec(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

/// `a` is row-major and symmetric; `vt` accumulates the rotations with
/// eigenvectors stored as rows so both updates touch contiguous memory.
fn jacobi(a: &mut [f64], vt: &mut [f64], n: usize) {
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fro == 0.0 || n < 2 {
        return;
    }
    let tol = REL_TOL * fro;
    let skip = 0.1 * tol / n as f64;
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        if off_norm(a, n) < tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let (xp, xq) = (a[p * n + k], a[q * n + k]);
                    row_p[k] = c * xp - s * xq;
                    row_q[k] = s * xp + c * xq;
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;
                for k in 0..n {
                    a[p * n + k] = row_p[k];
                    a[q * n + k] = row_q[k];
                    a[k * n + p] = row_p[k];
                    a[k * n + q] = row_q[k];
                }

                for k in 0..n {
                    let (xp, xq) = (vt[p * n + k], vt[q * n + k]);
                    vt[p * n + k] = c * xp - s * xq;
                    vt[q * n + k] = s * xp + c * xq;
                }
            }
        }
    }
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

fn assemble(a: &[f64], vt: &[f64], n: usize) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps original column order among ties
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[[k, col]] = vt[src * n + k];
        }
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Spectrum of the normalized Laplacian of `g`.
pub fn laplacian_spectrum(g: &Graph) -> EigenDecomposition {
    sym_eig(&normalized_laplacian(g)).expect("laplacian is square and finite")
}

/// Relative Frobenius reconstruction error and orthonormality error of a decomposition.
pub fn decomposition_errors(m: &Array2<f64>, e: &EigenDecomposition) -> (f64, f64) {
    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let rec = e.reconstruct();
    let rec_err = (&rec - m).iter().map(|v| v * v).sum::<f64>().sqrt() / norm;
    let gram = e.eigenvectors.t().dot(&e.eigenvectors);
    let n = gram.nrows();
    let mut orth = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((gram[[i, j]] - want).abs());
        }
    }
    (rec_err, orth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_input() {
        let e = sym_eig(&array![[3.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![1.0, 3.0]);
        assert_eq!(e.eigenvectors, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn swap_matrix() {
        let e = sym_eig(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_all_ones() {
        let e = sym_eig(&Array2::eye(6)).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            sym_eig(&Array2::zeros((2, 3))),
            Err(CoreError::Dimension { .. })
        ));
    }

    #[test]
    fn p2_and_triangle_spectra() {
        let p2 = Graph::new(Array2::ones((2, 1)), [(0, 1)], 0, 0).unwrap();
        let e = laplacian_spectrum(&p2);
        assert!(e.eigenvalues[0].abs() < 1e-14 && (e.eigenvalues[1] - 2.0).abs() < 1e-14);

        let tri = Graph::new(Array2::ones((3, 1)), [(0, 1), (1, 2), (0, 2)], 0, 0).unwrap();
        let e = laplacian_spectrum(&tri);
        for (got, want) in e.eigenvalues.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn edgeless_graph_all_zero() {
        let g = Graph::new(Array2::ones((4, 2)), [], 0, 0).unwrap();
        assert!(laplacian_spectrum(&g).eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn warm_start_matches_cold() {
        let m = array![[2.0, 0.3, 0.1], [0.3, -1.0, 0.4], [0.1, 0.4, 0.5]];
        let cold = sym_eig(&m).unwrap();
        let drift = &m + &array![[1e-3, 0.0, 2e-3], [0.0, 0.0, 1e-3], [2e-3, 1e-3, 0.0]];
        let warm = sym_eig_warm(&drift, &cold.eigenvectors).unwrap();
        let fresh = sym_eig(&drift).unwrap();
        for (a, b) in warm.eigenvalues.iter().zip(fresh.eigenvalues.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (rec, orth) = decomposition_errors(&drift, &warm);
        assert!(rec < 1e-12 && orth < 1e-12);
    }
}
