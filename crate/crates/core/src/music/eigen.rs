//! Cyclic Jacobi eigensolver for complex Hermitian matrices.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{DoaError, Result};

/// Relative off-diagonal Frobenius norm at which the sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 64;
const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Eigenpairs sorted by descending eigenvalue; column `i` of `vectors` belongs
/// to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Array2<Complex64>,
}

impl EigenDecomposition {
    /// `V·diag(λ)·Vᴴ`.
    pub fn reconstruct(&self) -> Array2<Complex64> {
        let n = self.values.len();
        let mut out = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &lambda) in self.values.iter().enumerate() {
                    acc += self.vectors[[i, k]] * lambda * self.vectors[[j, k]].conj();
                }
                out[[i, j]] = acc;
            }
        }
        out
    }
}

fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn off_diagonal_norm(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Each rotation first removes the phase of `a[p][q]` and then applies the
/// real symmetric Jacobi rotation that annihilates it.
pub fn eig_hermitian(a: &Array2<Complex64>) -> Result<EigenDecomposition> {
    let (n, cols) = a.dim();
    if n != cols {
        return Err(DoaError::Shape(format!("matrix must be square, got {n}x{cols}")));
    }
    if n == 0 {
        return Err(DoaError::Domain("empty matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DoaError::Numeric("matrix has non-finite entries".into()));
    }
    let scale = max_abs(a);
    let tol = HERMITIAN_TOLERANCE * scale.max(1.0);
    for i in 0..n {
        for j in i..n {
            if (a[[i, j]] - a[[j, i]].conj()).norm() > tol {
                return Err(DoaError::Domain(format!(
                    "matrix is not Hermitian at ({i}, {j})"
                )));
            }
        }
    }

    let mut m = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = Complex64::new(a[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let v = (a[[i, j]] + a[[j, i]].conj()) * 0.5;
            m[[i, j]] = v;
            m[[j, i]] = v.conj();
        }
    }
    let mut v = Array2::<Complex64>::eye(n);

    let fro = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut converged = fro == 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        if off_diagonal_norm(&m) <= JACOBI_TOLERANCE * fro {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > JACOBI_TOLERANCE * fro {
        return Err(DoaError::Numeric(format!(
            "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::<Complex64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(EigenDecomposition { values, vectors })
}

fn rotate(m: &mut Array2<Complex64>, v: &mut Array2<Complex64>, p: usize, q: usize) {
    let g = m[[p, q]];
    let abs_g = g.norm();
    if abs_g == 0.0 {
        return;
    }
    let app = m[[p, p]].re;
    let aqq = m[[q, q]].re;
    // Skip rotations that can no longer change the diagonal.
    if abs_g < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[[p, q]] = Complex64::new(0.0, 0.0);
        m[[q, p]] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = g / abs_g;
    let theta = (aqq - app) / (2.0 * abs_g);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // U = diag(1, conj(phase)) · [[c, s], [-s, c]]
    let u_pp = Complex64::new(c, 0.0);
    let u_pq = Complex64::new(s, 0.0);
    let u_qp = -phase.conj() * s;
    let u_qq = phase.conj() * c;

    let n = m.nrows();
    // M ← M·U
    for k in 0..n {
        let mkp = m[[k, p]];
        let mkq = m[[k, q]];
        m[[k, p]] = mkp * u_pp + mkq * u_qp;
        m[[k, q]] = mkp * u_pq + mkq * u_qq;
    }
    // M ← Uᴴ·M
    for k in 0..n {
        let mpk = m[[p, k]];
        let mqk = m[[q, k]];
        m[[p, k]] = u_pp.conj() * mpk + u_qp.conj() * mqk;
        m[[q, k]] = u_pq.conj() * mpk + u_qq.conj() * mqk;
    }
    m[[p, q]] = Complex64::new(0.0, 0.0);
    m[[q, p]] = Complex64::new(0.0, 0.0);
    m[[p, p]].im = 0.0;
    m[[q, q]].im = 0.0;
    // V ← V·U
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = vkp * u_pp + vkq * u_qp;
        v[[k, q]] = vkp * u_pq + vkq * u_qq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
        let mut a = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            a[[i, i]] = Complex64::new(rng.random_range(-3.0..3.0), 0.0);
            for j in (i + 1)..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                a[[i, j]] = z;
                a[[j, i]] = z.conj();
            }
        }
        a
    }

    #[test]
    fn identity() {
        let e = eig_hermitian(&Array2::eye(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
    }

    #[test]
    fn diagonal_sorted_descending() {
        let mut a = Array2::<Complex64>::zeros((2, 2));
        a[[0, 0]] = Complex64::new(1.0, 0.0);
        a[[1, 1]] = Complex64::new(3.0, 0.0);
        let e = eig_hermitian(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[[1, 0]].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[[0, 1]].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(6, &mut rng);
        let e = eig_hermitian(&a).unwrap();
        let dev = (&e.reconstruct() - &a).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(dev < 1e-8, "deviation {dev}");
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvector_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=10 {
            let a = random_hermitian(n, &mut rng);
            let e = eig_hermitian(&a).unwrap();
            let norm = max_abs(&a);
            for k in 0..n {
                let col = e.vectors.column(k);
                let av = a.dot(&col);
                let res = av
                    .iter()
                    .zip(col.iter())
                    .map(|(x, y)| (x - y * e.values[k]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(res < 1e-8 * norm.max(1.0));
                for j in 0..n {
                    let dot: Complex64 = e
                        .vectors
                        .column(j)
                        .iter()
                        .zip(col.iter())
                        .map(|(x, y)| x.conj() * y)
                        .sum();
                    let expected = if j == k { 1.0 } else { 0.0 };
                    assert!((dot - expected).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_non_hermitian_and_non_square() {
        let mut a = Array2::<Complex64>::eye(3);
        a[[0, 1]] = Complex64::new(0.0, 1.0);
        assert!(matches!(eig_hermitian(&a), Err(DoaError::Domain(_))));
        let b = Array2::<Complex64>::zeros((2, 3));
        assert!(matches!(eig_hermitian(&b), Err(DoaError::Shape(_))));
    }

    #[test]
    fn zero_matrix() {
        let e = eig_hermitian(&Array2::zeros((3, 3))).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
    }
}
