//! Dense Hermitian eigensolver wrapper and a restarted Lanczos ground-state
//! solver for matrix-free Hermitian operators.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fock::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("Lanczos did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("empty operator")]
    Empty,
}

/// Largest `|A_ij - conj(A_ji)|`.
pub fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Indices of rows holding at least one nonzero entry. Exactly-zero rows of
/// a Hermitian matrix carry zero eigenvalues and are split off before the
/// dense solve, which can otherwise return NaN on such input.
fn support(m: &DMatrix<C64>) -> Vec<usize> {
    (0..m.nrows()).filter(|&i| m.row(i).iter().any(|z| *z != C64::new(0.0, 0.0))).collect()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let keep = support(&sym);
    let eig = sym.select_rows(&keep).select_columns(&keep).symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<C64>)> = (0..keep.len())
        .map(|k| {
            let mut v = DVector::zeros(n);
            for (j, &row) in keep.iter().enumerate() {
                v[row] = eig.eigenvectors[(j, k)];
            }
            (eig.eigenvalues[k], v)
        })
        .collect();
    let mut zero_rows = vec![true; n];
    keep.iter().for_each(|&i| zero_rows[i] = false);
    for (i, _) in zero_rows.iter().enumerate().filter(|(_, z)| **z) {
        let mut v = DVector::zeros(n);
        v[i] = C64::new(1.0, 0.0);
        pairs.push((0.0, v));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| pairs[c].1[r]);
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let keep = support(&sym);
    let mut v: Vec<f64> = sym
        .select_rows(&keep)
        .select_columns(&keep)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.resize(m.nrows(), 0.0);
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tolerance: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 60,
            max_restarts: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: Vec<C64>,
    /// `‖Hψ − Eψ‖` of the returned normalized vector.
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of a Hermitian operator given as a matrix-vector
/// product, by thick-free restarted Lanczos with full reorthogonalization.
pub fn lanczos_ground<F>(
    apply: F,
    start: Vec<C64>,
    opts: LanczosOptions,
) -> Result<GroundState, LinalgError>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let dim = start.len();
    if dim == 0 {
        return Err(LinalgError::Empty);
    }
    let mut v0 = start;
    let n0 = norm(&v0);
    if n0 == 0.0 {
        v0 = vec![C64::new(1.0, 0.0); dim];
    }
    let scale = 1.0 / norm(&v0);
    v0.iter_mut().for_each(|x| *x *= scale);

    let k_max = opts.krylov_dim.max(2).min(dim);
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;

    for _ in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..k_max {
            let mut w = apply(&basis[j]);
            iterations += 1;
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Two passes of Gram–Schmidt against the whole Krylov basis.
            for _ in 0..2 {
                for q in &basis {
                    let p = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let b = norm(&w);
            if j + 1 == k_max || b < 1e-13 {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }

        let k = alpha.len();
        let t = DMatrix::<f64>::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        let s: DVector<f64> = eig.eigenvectors.column(imin).into_owned();
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for (q, &c) in basis.iter().zip(s.iter()) {
            y.iter_mut().zip(q).for_each(|(x, v)| *x += v * c);
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|x| *x /= ny);
        let hy = apply(&y);
        let energy = dot(&y, &hy).re;
        let residual = norm(
            &hy.iter()
                .zip(&y)
                .map(|(h, v)| h - v * energy)
                .collect::<Vec<_>>(),
        );
        last_residual = residual;
        if residual < opts.tolerance {
            return Ok(GroundState {
                energy,
                vector: y,
                residual,
                iterations,
            });
        }
        v0 = y;
    }
    Err(LinalgError::NoConvergence {
        residual: last_residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<C64>::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn eigh_diagonalizes() {
        let h = random_hermitian(6, 3);
        let (vals, vecs) = eigh(&h);
        let d = vecs.adjoint() * &h * &vecs;
        for r in 0..6 {
            for c in 0..6 {
                let expect = if r == c { vals[r] } else { 0.0 };
                assert!((d[(r, c)] - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lanczos_matches_dense() {
        let h = random_hermitian(40, 11);
        let dense = eigvalsh(&h)[0];
        let start = vec![C64::new(1.0, 0.0); 40];
        let gs = lanczos_ground(
            |v| (&h * DVector::from_column_slice(v)).iter().copied().collect(),
            start,
            LanczosOptions {
                krylov_dim: 12,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((gs.energy - dense).abs() < 1e-10);
        assert!(gs.residual < 1e-10);
    }

    #[test]
    fn lanczos_reports_non_convergence() {
        let h = random_hermitian(50, 5);
        let err = lanczos_ground(
            |v| (&h * DVector::from_column_slice(v)).iter().copied().collect(),
            vec![C64::new(1.0, 0.0); 50],
            LanczosOptions {
                krylov_dim: 2,
                max_restarts: 1,
                tolerance: 1e-12,
            },
        )
        .unwrap_err();
        assert!(matches!(err, LinalgError::NoConvergence { .. }));
    }

    #[test]
    fn zero_rows_are_deflated() {
        let n = 12;
        let mut psi = DMatrix::<C64>::zeros(n, n);
        for (r, c, v) in [(0, 1, 0.6), (3, 1, 0.3), (3, 7, -0.5), (9, 2, 0.4)] {
            psi[(r, c)] = C64::new(v, 0.0);
        }
        let rho = &psi * psi.adjoint();
        let vals = eigvalsh(&rho);
        assert_eq!(vals.len(), n);
        assert!(vals.iter().all(|v| v.is_finite()));
        let svd: f64 = psi.svd(false, false).singular_values.iter().map(|s| s * s).sum();
        assert!((vals.iter().sum::<f64>() - svd).abs() < 1e-12);
        let (w, vecs) = eigh(&rho);
        let recon = &vecs * DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|&x| C64::new(x, 0.0)))) * vecs.adjoint();
        assert!((recon - rho).norm() < 1e-12);
    }
}
