//! Seeded random matrices shared by the optimizer, experiments and tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

/// Generator for sample `stream` of a run seeded with `seed`. Streams are
/// independent, so parallel loops give the same draws as serial ones.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `k x n` matrix with orthonormal rows, uniformly distributed.
pub fn random_orthonormal_rows<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    random_orthogonal(n, rng).columns(0, k).transpose()
}

/// Random symmetric positive definite matrix `B B^T / n + floor I`.
pub fn random_spd<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> DMatrix<f64> {
    let b = gaussian_matrix(n, n, rng);
    let mut s = &b * b.transpose() / n as f64;
    for i in 0..n {
        s[(i, i)] += floor;
    }
    0.5 * (&s + s.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = stream_rng(7, 0);
        let q = random_orthogonal(5, &mut rng);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
        let w = random_orthonormal_rows(2, 5, &mut rng);
        assert!((&w * w.transpose() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = gaussian_matrix(2, 2, &mut stream_rng(1, 3));
        let b = gaussian_matrix(2, 2, &mut stream_rng(1, 3));
        let c = gaussian_matrix(2, 2, &mut stream_rng(1, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
