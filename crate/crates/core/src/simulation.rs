//! Seeded micro and macro trajectories.
//!
//! Noise is `eps_t = F z_t` with `F` the lower Cholesky factor of `Sigma` and
//! `z_t` one standard-normal d-vector per step, drawn in order from stream 0
//! of the seed.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::random;
use crate::spectral;
use crate::system::{reduce, CoarseMap, LinearSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `(steps + 1) x d`, row `t` is the state at time `t0 + t`.
    pub states: DMatrix<f64>,
    pub t0: i64,
    pub seed: u64,
    /// `steps x d`, row `t` is the noise added between `t` and `t + 1`.
    pub noise_record: Option<DMatrix<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// CSV with header `t,<prefix>1,...,<prefix>d`.
    pub fn write_csv<W: Write>(&self, out: W, prefix: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("{prefix}{i}")));
        w.write_record(&header)?;
        for (i, row) in self.states.row_iter().enumerate() {
            let mut rec = vec![(self.t0 + i as i64).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn draw_noise(sigma: &DMatrix<f64>, steps: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    let f = spectral::checked_cholesky(sigma)?.l();
    let mut rng = random::stream_rng(seed, 0);
    let mut z = DMatrix::<f64>::zeros(steps, d);
    // row-major fill: one d-vector per step
    for t in 0..steps {
        for i in 0..d {
            z[(t, i)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z * f.transpose())
}

/// Iterate `x_{t+1} = A x_t + eps_t` using a given noise record.
pub fn replay(a: &DMatrix<f64>, x0: &DVector<f64>, noise: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if a.ncols() != d || x0.len() != d || noise.ncols() != d {
        return Err(Error::DimensionMismatch("A, x0 and noise dimensions differ".into()));
    }
    let steps = noise.nrows();
    let mut states = DMatrix::zeros(steps + 1, d);
    states.set_row(0, &x0.transpose());
    let mut x = x0.clone();
    for t in 0..steps {
        x = a * x + noise.row(t).transpose();
        states.set_row(t + 1, &x.transpose());
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(states)
}

pub fn simulate_micro(sys: &LinearSystem, x0: &DVector<f64>, steps: usize, seed: u64) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, system dimension is {}", x0.len(), sys.dim())));
    }
    let noise = draw_noise(sys.sigma(), steps, seed)?;
    let states = replay(sys.a(), x0, &noise)?;
    Ok(Trajectory {
        states,
        t0: 0,
        seed,
        noise_record: Some(noise),
    })
}

/// Observed macro states `y_t = W x_t` from one micro run, and the macro
/// iteration `y_hat_{t+1} = W A W^+ y_hat_t + W eps_t` fed the same noise.
pub fn macro_pair(sys: &LinearSystem, cm: &CoarseMap, x0: &DVector<f64>, steps: usize, seed: u64) -> Result<(Trajectory, Trajectory)> {
    let micro = simulate_micro(sys, x0, steps, seed)?;
    let w = cm.w();
    let noise = micro.noise_record.as_ref().expect("micro runs record noise");
    let macro_noise = noise * w.transpose();
    let y = Trajectory {
        states: &micro.states * w.transpose(),
        t0: 0,
        seed,
        noise_record: Some(macro_noise.clone()),
    };
    let m = reduce(sys, cm)?;
    let y_hat = Trajectory {
        states: replay(&m.a_m, &(w * x0), &macro_noise)?,
        t0: 0,
        seed,
        noise_record: Some(macro_noise),
    };
    Ok((y, y_hat))
}

/// Largest entrywise gap between the sample covariance of `n_samples`
/// synthesized noise vectors and `Sigma`.
pub fn noise_covariance_check(sys: &LinearSystem, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples < 10 {
        return Err(Error::InvalidArgument("need at least 10 samples".into()));
    }
    let e = draw_noise(sys.sigma(), n_samples, seed)?;
    let mean = e.row_mean();
    let centered = DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| e[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n_samples as f64 - 1.0);
    Ok((cov - sys.sigma()).amax())
}

/// Root-mean-square distance between two equally shaped trajectories,
/// divided by the RMS of `reference`.
pub fn relative_rmse(reference: &DMatrix<f64>, other: &DMatrix<f64>) -> f64 {
    let diff = (reference - other).norm();
    diff / reference.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::optimal_w;

    fn heat() -> LinearSystem {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[0.6, 0.2, 0.0, 0.0, 0.2, 0.7, 0.1, 0.0, 0.0, 0.1, 0.4, 0.1, 0.0, 0.0, 0.1, 0.3],
        );
        LinearSystem::isotropic(a, 0.01).unwrap()
    }

    #[test]
    fn zero_noise_is_matrix_power() {
        let sys = heat();
        let x0 = DVector::from_element(4, 10.0);
        let states = replay(sys.a(), &x0, &DMatrix::zeros(6, 4)).unwrap();
        let mut want = x0.clone();
        for t in 0..=6 {
            assert!((states.row(t).transpose() - &want).amax() < 1e-12);
            want = sys.a() * want;
        }
    }

    #[test]
    fn heat_decays() {
        let sys = heat();
        let x0 = DVector::from_element(4, 10.0);
        let mut small = 0;
        for seed in 0..200 {
            let tr = simulate_micro(&sys, &x0, 50, seed).unwrap();
            assert_eq!(tr.states.nrows(), 51);
            if tr.states.row(50).norm() < 0.5 {
                small += 1;
            }
        }
        assert!(small >= 198, "{small}");
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let sys = heat();
        let x0 = DVector::from_element(4, 1.0);
        assert_eq!(simulate_micro(&sys, &x0, 30, 9).unwrap(), simulate_micro(&sys, &x0, 30, 9).unwrap());
    }

    #[test]
    fn identity_map_pair_agrees() {
        let sys = heat();
        let (y, y_hat) = macro_pair(&sys, &CoarseMap::identity(4), &DVector::from_element(4, 3.0), 40, 2).unwrap();
        assert!((y.states - y_hat.states).amax() < 1e-12);
    }

    #[test]
    fn heat_macro_tracks_observed() {
        let sys = heat();
        let w = optimal_w(&sys, 1, 0.0).unwrap().w;
        let (y, y_hat) = macro_pair(&sys, &w, &DVector::from_element(4, 10.0), 50, 1).unwrap();
        assert!(relative_rmse(&y.states, &y_hat.states) < 0.1);
    }

    #[test]
    fn invariant_subspace_start_is_exact() {
        let sys = LinearSystem::isotropic(heat().a().clone(), 1e-12).unwrap();
        let w = optimal_w(&sys, 2, 0.0).unwrap().w;
        // a right eigenvector of a top-2 eigenvalue
        let spec = spectral::eig_sorted(sys.a()).unwrap();
        let x0 = spec.right_eigenvectors.column(0).map(|c| c.re);
        let (y, y_hat) = macro_pair(&sys, &w, &(x0 * 5.0), 30, 4).unwrap();
        assert!((y.states - y_hat.states).amax() < 1e-10);
    }

    #[test]
    fn replay_linearity_and_macro_identity() {
        let sys = heat();
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let tr = simulate_micro(&sys, &x0, 20, 5).unwrap();
        let noise = tr.noise_record.clone().unwrap();
        let zero = DMatrix::zeros(20, 4);
        let free = replay(sys.a(), &x0, &zero).unwrap();
        let doubled = replay(sys.a(), &(&x0 * 2.0), &noise).unwrap();
        let noise_part = &tr.states - &free;
        assert!(((&doubled - &noise_part) - &free * 2.0).amax() < 1e-12);

        let w = CoarseMap::new(DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0])).unwrap();
        let (y, _) = macro_pair(&sys, &w, &x0, 20, 5).unwrap();
        for t in 0..20 {
            let lhs = y.states.row(t + 1).transpose() - w.w() * sys.a() * tr.states.row(t).transpose();
            let rhs = w.w() * noise.row(t).transpose();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn noise_covariance_converges() {
        let sys = LinearSystem::new(DMatrix::identity(4, 4), DMatrix::identity(4, 4)).unwrap();
        let dev = noise_covariance_check(&sys, 100_000, 3).unwrap();
        assert!(dev < 0.02, "{dev}");
        assert_eq!(dev, noise_covariance_check(&sys, 100_000, 3).unwrap());
        // 1/sqrt(N): averaged over seeds, 4x samples roughly halves the error
        let avg = |n: usize| (0..20).map(|s| noise_covariance_check(&sys, n, s).unwrap()).sum::<f64>() / 20.0;
        let ratio = avg(4_000) / avg(16_000);
        assert!(ratio > 1.0 && ratio < 3.0, "{ratio}");
    }

    #[test]
    fn seeds_are_uncorrelated() {
        let sys = LinearSystem::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let a = simulate_micro(&sys, &DVector::zeros(1), 10_000, 1).unwrap().noise_record.unwrap();
        let b = simulate_micro(&sys, &DVector::zeros(1), 10_000, 2).unwrap().noise_record.unwrap();
        let rho = crate::emergence::pearson(a.as_slice(), b.as_slice());
        assert!(rho.abs() < 0.05);
    }

    #[test]
    fn csv_header_and_rows() {
        let sys = heat();
        let tr = simulate_micro(&sys, &DVector::zeros(4), 2, 0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, "x").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,x3,x4"));
        assert_eq!(text.lines().count(), 4);
        assert!(lines.next().unwrap().starts_with("0,0,0"));
    }
}
