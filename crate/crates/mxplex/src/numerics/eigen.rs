//! Symmetric eigendecomposition via Householder tridiagonalization followed
//! by the implicit-shift QL iteration, with accumulated eigenvectors.

use super::DenseMatrix;
use crate::{Error, Result};

/// Result of [`sym_eig`].
///
/// Eigenvalues are sorted by descending absolute value (ties broken by
/// descending signed value); column `i` of `eigenvectors` pairs with
/// `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    /// Eigenvalues reordered by ascending absolute value. The spectral-gap
    /// scan in model-order estimation walks the spectrum from the small end.
    pub fn abs_ascending(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.eigenvalues.iter().map(|x| x.abs()).collect();
        v.reverse();
        v
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.eigenvectors.rows();
        let mut scaled = self.eigenvectors.clone();
        for i in 0..n {
            for (j, lam) in self.eigenvalues.iter().enumerate() {
                scaled.set(i, j, scaled.get(i, j) * lam);
            }
        }
        scaled.matmul_nt(&self.eigenvectors).expect("square shapes")
    }
}

const MAX_QL_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix.
///
/// The input must be square and symmetric within `1e-10` (relative to its
/// magnitude). Off-pair asymmetry below that tolerance is averaged away
/// before factorization, so the result is an exact decomposition of
/// `(A + Aᵀ)/2`.
pub fn sym_eig(a: &DenseMatrix) -> Result<EigenDecomposition> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("eigendecomposition of 0x0 matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "sym_eig input".into(),
        });
    }
    let tol = 1e-10 * a.max_abs().max(1.0);
    let asym = a.max_asymmetry();
    if asym > tol {
        return Err(Error::NotSymmetric {
            max_asym: asym,
            tol,
        });
    }

    let mut v = a.clone();
    v.symmetrize();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    // Order by |λ| descending, ties toward the larger signed value.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        d[j].abs()
            .partial_cmp(&d[i].abs())
            .unwrap()
            .then(d[j].partial_cmp(&d[i]).unwrap())
    });
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in idx.iter().enumerate() {
        for r in 0..n {
            eigenvectors.set(r, new_col, v.get(r, old_col));
        }
    }

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction to tridiagonal form, accumulating transformations.
/// On exit `d` holds the diagonal, `e[1..]` the subdiagonal, and `v` the
/// accumulated orthogonal matrix.
fn tred2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = v.rows();
    for j in 0..n {
        d[j] = v.get(n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
                v.set(j, i, 0.0);
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v.set(j, i, f);
                g = e[j] + v.get(j, j) * f;
                for k in (j + 1)..i {
                    g += v.get(k, j) * d[k];
                    e[k] += v.get(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let x = v.get(k, j) - (f * e[k] + g * d[k]);
                    v.set(k, j, x);
                }
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v.set(n - 1, i, v.get(i, i));
        v.set(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.get(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.get(k, i + 1) * v.get(k, j);
                }
                for k in 0..=i {
                    let x = v.get(k, j) - g * d[k];
                    v.set(k, j, x);
                }
            }
        }
        for k in 0..=i {
            v.set(k, i + 1, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.get(n - 1, j);
        v.set(n - 1, j, 0.0);
    }
    v.set(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix, updating
/// the accumulated eigenvector matrix in place.
fn tql2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = v.rows();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::EigenNoConvergence { iters: sweeps });
                }

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v.get(k, i + 1);
                        v.set(k, i + 1, s * v.get(k, i) + c * h);
                        v.set(k, i, c * v.get(k, i) - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rand_matrix, RandomStream};

    fn random_symmetric(seed: u64, n: usize, scale: f64) -> DenseMatrix {
        let mut m = rand_matrix(&RandomStream::new(seed, 0), n, n, -scale, scale).unwrap();
        m.symmetrize();
        m
    }

    fn check_decomposition(a: &DenseMatrix, tol_rel: f64) {
        let eig = sym_eig(a).unwrap();
        let rec = eig.reconstruct();
        let mut diff = a.clone();
        diff.symmetrize();
        diff.sub_assign(&rec).unwrap();
        let denom = a.frobenius_norm().max(f64::MIN_POSITIVE);
        assert!(
            diff.frobenius_norm() / denom <= tol_rel,
            "reconstruction error {:e}",
            diff.frobenius_norm() / denom
        );

        let vtv = eig.eigenvectors.matmul_tn(&eig.eigenvectors).unwrap();
        let mut id = DenseMatrix::identity(a.rows());
        id.sub_assign(&vtv).unwrap();
        assert!(id.max_abs() <= 1e-8, "orthonormality {:e}", id.max_abs());

        // Sorted by descending |λ|.
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0].abs() >= w[1].abs() - 1e-12);
        }
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let eig = sym_eig(&DenseMatrix::identity(3)).unwrap();
        for lam in &eig.eigenvalues {
            assert!((lam - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn two_cycle_adjacency() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        let mut vals = eig.eigenvalues.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] + 1.0).abs() <= 1e-12);
        assert!((vals[1] - 1.0).abs() <= 1e-12);
        // Both have |λ| = 1; tie-break puts +1 first.
        assert!((eig.eigenvalues[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let a = random_symmetric(3, 8, 1.0);
        let eig = sym_eig(&a).unwrap();
        let norm = a.frobenius_norm();
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            for i in 0..8 {
                let mut av = 0.0;
                for k in 0..8 {
                    av += a.get(i, k) * eig.eigenvectors.get(k, j);
                }
                let resid = (av - lam * eig.eigenvectors.get(i, j)).abs();
                assert!(resid <= 1e-8 * norm, "residual {resid:e}");
            }
        }
    }

    #[test]
    fn random_reconstruction_tight() {
        for seed in 0..5 {
            check_decomposition(&random_symmetric(seed, 8, 1.0), 1e-10);
        }
        check_decomposition(&random_symmetric(17, 1, 5.0), 1e-10);
        check_decomposition(&random_symmetric(18, 2, 5.0), 1e-10);
        // Repeated eigenvalues.
        check_decomposition(&DenseMatrix::identity(6), 1e-10);
        check_decomposition(&DenseMatrix::zeros(5, 5), 1e-10);
    }

    #[test]
    fn large_scale_matrices_within_contract() {
        // ‖A‖_F up to 1e3.
        for (seed, n, scale) in [(21u64, 16usize, 60.0), (22, 24, 40.0), (23, 40, 25.0)] {
            check_decomposition(&random_symmetric(seed, n, scale), 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            sym_eig(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let mut a = DenseMatrix::zeros(3, 3);
        a.set(0, 1, 1.0);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn abs_ascending_reverses_order() {
        let a = random_symmetric(9, 6, 1.0);
        let eig = sym_eig(&a).unwrap();
        let asc = eig.abs_ascending();
        for w in asc.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        assert_eq!(asc.len(), 6);
    }
}
