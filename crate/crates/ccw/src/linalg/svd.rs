//! Truncated SVD of a sparse linear operator by restarted subspace iteration
//! with Rayleigh-Ritz extraction. The operator is never densified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, symmetric_eigen, Mat};
use crate::{Error, Result, Scalar};

/// Matrix-free operator interface.
pub trait LinearOp<S: Scalar> {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// y = A x, with |x| = cols, |y| = rows.
    fn apply(&self, x: &[S], y: &mut [S]);
    /// y = A^T x, with |x| = rows, |y| = cols.
    fn apply_transpose(&self, x: &[S], y: &mut [S]);
}

pub struct TruncatedSvd<S> {
    /// Singular values, descending.
    pub singular_values: Vec<S>,
    /// Left singular vectors as columns (rows x r).
    pub u: Mat<S>,
    /// Right singular vectors as columns (cols x r).
    pub v: Mat<S>,
    pub iterations: usize,
}

const MAX_ITER: usize = 300;

/// Top-`r` singular triplets, deterministic per seed.
pub fn truncated_svd<S: Scalar, A: LinearOp<S>>(
    op: &A,
    r: usize,
    tol: f64,
    seed: u64,
) -> Result<TruncatedSvd<S>> {
    let (rows, cols) = (op.rows(), op.cols());
    let max_rank = rows.min(cols);
    if r == 0 || r > max_rank {
        return Err(Error::Argument(format!(
            "requested {r} singular triplets from a {rows}x{cols} operator"
        )));
    }
    // Oversample a little; subspace iteration converges faster with guard
    // vectors when the trailing gap is small.
    let work = (r + 2).min(max_rank);
    let tol = S::from_f64(tol);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<S>> = (0..work)
        .map(|_| {
            (0..cols)
                .map(|_| S::from_f64(rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    orthonormalize(&mut basis, &mut rng);

    let mut sigma_prev = vec![S::zero(); work];
    let mut sigmas = vec![S::zero(); work];
    let mut iterations = 0;
    let mut image: Vec<Vec<S>> = vec![vec![S::zero(); rows]; work];

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        // image = A * basis
        for (b, w) in basis.iter().zip(image.iter_mut()) {
            op.apply(b, w);
        }
        // Rayleigh-Ritz on A^T A: small = image^T image
        let mut small = Mat::zeros(work, work);
        for i in 0..work {
            for j in i..work {
                let v = dot(&image[i], &image[j]);
                small.set(i, j, v);
                small.set(j, i, v);
            }
        }
        let (eigenvalues, q) = symmetric_eigen(&small);
        for (s, &lambda) in sigmas.iter_mut().zip(&eigenvalues) {
            *s = lambda.max(S::zero()).sqrt();
        }

        // Rotate the basis to the Ritz vectors.
        let mut rotated: Vec<Vec<S>> = vec![vec![S::zero(); cols]; work];
        for (j, col) in rotated.iter_mut().enumerate() {
            for (i, b) in basis.iter().enumerate() {
                let w = q.get(i, j);
                if w != S::zero() {
                    super::axpy(w, b, col);
                }
            }
        }
        basis = rotated;

        let scale = sigmas[0].max(S::one());
        let converged = sigmas
            .iter()
            .zip(&sigma_prev)
            .take(r)
            .all(|(&s, &p)| (s - p).abs() <= tol * scale);
        sigma_prev.copy_from_slice(&sigmas);
        if converged && iter > 0 {
            break;
        }

        // Power step: basis <- orth(A^T A basis)
        let mut next: Vec<Vec<S>> = vec![vec![S::zero(); cols]; work];
        for ((b, w), n) in basis.iter().zip(image.iter_mut()).zip(next.iter_mut()) {
            op.apply(b, w);
            op.apply_transpose(w, n);
        }
        basis = next;
        orthonormalize(&mut basis, &mut rng);
    }

    // Final extraction: u_j = A v_j / sigma_j.
    let mut u = Mat::zeros(rows, r);
    let mut v = Mat::zeros(cols, r);
    let mut av = vec![S::zero(); rows];
    for j in 0..r {
        op.apply(&basis[j], &mut av);
        let s = sigmas[j];
        for i in 0..cols {
            v.set(i, j, basis[j][i]);
        }
        if s > S::from_f64(1e-12) {
            for i in 0..rows {
                u.set(i, j, av[i] / s);
            }
        }
    }

    Ok(TruncatedSvd {
        singular_values: sigmas[..r].to_vec(),
        u,
        v,
        iterations,
    })
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Degenerate
/// columns are replaced by fresh random directions.
fn orthonormalize<S: Scalar>(vectors: &mut [Vec<S>], rng: &mut ChaCha8Rng) {
    let n = vectors.first().map_or(0, Vec::len);
    for i in 0..vectors.len() {
        for _attempt in 0..3 {
            for _pass in 0..2 {
                for j in 0..i {
                    let (head, tail) = vectors.split_at_mut(i);
                    let proj = dot(&head[j], &tail[0]);
                    super::axpy(-proj, &head[j], &mut tail[0]);
                }
            }
            let nrm = super::norm(&vectors[i]);
            if nrm > S::from_f64(1e-12) {
                let inv = S::one() / nrm;
                vectors[i].iter_mut().for_each(|x| *x *= inv);
                break;
            }
            vectors[i] = (0..n).map(|_| S::from_f64(rng.gen_range(-1.0..1.0))).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct DenseOp {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    impl LinearOp<f64> for DenseOp {
        fn rows(&self) -> usize {
            self.rows
        }
        fn cols(&self) -> usize {
            self.cols
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for r in 0..self.rows {
                y[r] = (0..self.cols).map(|c| self.data[r * self.cols + c] * x[c]).sum();
            }
        }
        fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
            for c in 0..self.cols {
                y[c] = (0..self.rows).map(|r| self.data[r * self.cols + c] * x[r]).sum();
            }
        }
    }

    #[test]
    fn diagonal_matrix_singular_values() {
        let op = DenseOp {
            rows: 4,
            cols: 3,
            data: vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0],
        };
        let svd = truncated_svd(&op, 3, 1e-10, 7).unwrap();
        assert_relative_eq!(svd.singular_values[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(svd.singular_values[1], 2.0, epsilon = 1e-8);
        assert_relative_eq!(svd.singular_values[2], 0.5, epsilon = 1e-8);
        // dominant right singular vector is e_0 up to sign
        assert_relative_eq!(svd.v.get(0, 0).abs(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn rank_one_outer_product() {
        // A = 2 * u v^T with unit u (1/sqrt(2), 1/sqrt(2)), v = e_1.
        let s = (0.5f64).sqrt();
        let op = DenseOp {
            rows: 2,
            cols: 2,
            data: vec![0.0, 2.0 * s, 0.0, 2.0 * s],
        };
        let svd = truncated_svd(&op, 2, 1e-10, 1).unwrap();
        assert_relative_eq!(svd.singular_values[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(svd.singular_values[1], 0.0, epsilon = 1e-8);
        assert_relative_eq!(svd.u.get(0, 0).abs(), s, epsilon = 1e-7);
    }

    #[test]
    fn deterministic_per_seed() {
        let op = DenseOp {
            rows: 5,
            cols: 4,
            data: (0..20).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0).collect(),
        };
        let a = truncated_svd(&op, 2, 1e-9, 42).unwrap();
        let b = truncated_svd(&op, 2, 1e-9, 42).unwrap();
        assert_eq!(a.singular_values, b.singular_values);
        assert_eq!(a.v.data(), b.v.data());
    }
}
