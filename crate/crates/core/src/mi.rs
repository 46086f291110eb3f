//! Monte Carlo check of analytic emergence: sample `(x, y = A x + eps)` with
//! `x` uniform on the intervention box, estimate mutual information from the
//! samples, and compare `MI_macro / k - MI_micro / n` against `Delta J`.

use std::io::Write;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::digamma;

use crate::emergence::delta_j;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::random;
use crate::spectral;
use crate::system::{reduce, CoarseMap, LinearSystem};

pub const DEFAULT_NEIGHBORS: usize = 4;

/// Mutual-information estimator used by [`delta_i`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MiEstimator {
    /// Kraskov-Stoegbauer-Grassberger, variant 1.
    Ksg,
    /// `H(Y) - H(Y - X B)` with both entropies from the Kozachenko-Leonenko
    /// k-NN estimator and `B` fitted by least squares.
    #[default]
    ResidualEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MIEstimate {
    /// Nats, clamped at 0.
    pub value: f64,
    pub n_samples: usize,
    pub k_neighbors: usize,
    pub seed: Option<u64>,
    pub estimator: MiEstimator,
}

/// Interventional samples: rows of `X` uniform on `[-L/2, L/2]^n`, rows of
/// `Y` are `A x + eps` with fresh noise each.
pub fn sample_interventional(sys: &LinearSystem, n_samples: usize, l: f64, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    sample_pair(sys.a(), sys.sigma(), n_samples, l, seed, 0)
}

fn sample_pair(a: &DMatrix<f64>, sigma: &DMatrix<f64>, n_samples: usize, l: f64, seed: u64, stream: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    let d = a.nrows();
    let f = spectral::checked_cholesky(sigma)?.l();
    let mut rng = random::stream_rng(seed, stream);
    let mut x = DMatrix::<f64>::zeros(n_samples, d);
    let mut z = DMatrix::<f64>::zeros(n_samples, d);
    for i in 0..n_samples {
        for j in 0..d {
            x[(i, j)] = l * (rng.random::<f64>() - 0.5);
        }
        for j in 0..d {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let y = &x * a.transpose() + z * f.transpose();
    Ok((x, y))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn warn_constant_columns(m: &DMatrix<f64>, what: &str) {
    for (j, col) in m.column_iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            warn!("{what} column {j} is constant; k-NN estimates are unreliable");
        }
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch("X and Y must have the same number of rows".into()));
    }
    if k == 0 || x.nrows() < k + 1 {
        return Err(Error::InvalidArgument(format!("need k >= 1 and more than k samples, got k = {k}, N = {}", x.nrows())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    warn_constant_columns(x, "X");
    warn_constant_columns(y, "Y");
    Ok(())
}

/// Kraskov (variant 1, max-norm) estimate of `I(X; Y)` in nats.
pub fn knn_mi(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> Result<MIEstimate> {
    check_inputs(x, y, k)?;
    let n = x.nrows();
    let (dx, dy) = (x.ncols(), y.ncols());
    let joint_m = DMatrix::from_fn(n, dx + dy, |i, j| if j < dx { x[(i, j)] } else { y[(i, j - dx)] });
    let joint = row_major(&joint_m);
    let xs = row_major(x);
    let ys = row_major(y);
    let jt = KdTree::new(&joint, dx + dy);
    let xt = KdTree::new(&xs, dx);
    let yt = KdTree::new(&ys, dy);

    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            // k + 1 because the point itself sits at distance 0
            let eps = jt.kth_distance(&joint[i * (dx + dy)..(i + 1) * (dx + dy)], k + 1);
            let self_hit = usize::from(eps > 0.0);
            let nx = xt.count_within(&xs[i * dx..(i + 1) * dx], eps) - self_hit;
            let ny = yt.count_within(&ys[i * dy..(i + 1) * dy], eps) - self_hit;
            digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0)
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let raw = digamma(k as f64) + digamma(n as f64) - mean;
    if raw >= digamma(n as f64) - digamma(k as f64) - 1e-9 {
        warn!("KSG estimate saturated at psi(N) - psi(k); Y looks like a deterministic copy of X");
    }
    Ok(MIEstimate {
        value: clamp(raw),
        n_samples: n,
        k_neighbors: k,
        seed: None,
        estimator: MiEstimator::Ksg,
    })
}

fn clamp(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Kozachenko-Leonenko differential entropy (max-norm) in nats.
pub fn kl_entropy(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = m.nrows();
    let d = m.ncols();
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidArgument("need more than k samples".into()));
    }
    let pts = row_major(m);
    let tree = KdTree::new(&pts, d);
    let logs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (2.0 * tree.kth_distance(&pts[i * d..(i + 1) * d], k + 1)).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    if !mean.is_finite() {
        warn!("duplicate samples make the entropy estimate -inf");
    }
    Ok(digamma(n as f64) - digamma(k as f64) + d as f64 * mean)
}

/// `I(X; Y) = H(Y) - H(Y | X)`, where `H(Y | X)` is estimated as the entropy
/// of the least-squares residual of `Y` on `[1, X]`. Exact for additive
/// noise independent of `X` and a linear conditional mean.
pub fn residual_entropy_mi(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> Result<MIEstimate> {
    check_inputs(x, y, k)?;
    let n = x.nrows();
    let design = DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let coef = design
        .clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let resid = y - &design * coef;
    let value = kl_entropy(y, k)? - kl_entropy(&resid, k)?;
    Ok(MIEstimate {
        value: clamp(value),
        n_samples: n,
        k_neighbors: k,
        seed: None,
        estimator: MiEstimator::ResidualEntropy,
    })
}

pub fn estimate_mi(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize, estimator: MiEstimator) -> Result<MIEstimate> {
    match estimator {
        MiEstimator::Ksg => knn_mi(x, y, k),
        MiEstimator::ResidualEntropy => residual_entropy_mi(x, y, k),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaI {
    pub delta_i: f64,
    pub mi_micro: MIEstimate,
    pub mi_macro: MIEstimate,
}

/// Numerical emergence `MI_macro / k - MI_micro / n`. Micro samples use RNG
/// stream 0 of `seed`, macro samples stream 1.
pub fn delta_i(
    sys: &LinearSystem,
    cm: &CoarseMap,
    n_samples: usize,
    l: f64,
    k_neighbors: usize,
    seed: u64,
    estimator: MiEstimator,
) -> Result<DeltaI> {
    let m = reduce(sys, cm)?;
    let (x, y) = sample_pair(sys.a(), sys.sigma(), n_samples, l, seed, 0)?;
    let (xm, ym) = sample_pair(&m.a_m, &m.sigma_m, n_samples, l, seed, 1)?;
    let mut mi_micro = estimate_mi(&x, &y, k_neighbors, estimator)?;
    let mut mi_macro = estimate_mi(&xm, &ym, k_neighbors, estimator)?;
    mi_micro.seed = Some(seed);
    mi_macro.seed = Some(seed);
    Ok(DeltaI {
        delta_i: mi_macro.value / cm.k() as f64 - mi_micro.value / sys.dim() as f64,
        mi_micro,
        mi_macro,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n_samples: usize,
    pub delta_i_mean: f64,
    pub delta_i_std: f64,
    pub delta_j: f64,
    #[serde(skip)]
    pub delta_i_values: Vec<f64>,
}

impl SweepRow {
    pub fn median_abs_error(&self) -> f64 {
        let mut errs: Vec<f64> = self.delta_i_values.iter().map(|v| (v - self.delta_j).abs()).collect();
        median(&mut errs)
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `delta_i` over a grid of sample sizes and a set of seeds. The standard
/// deviation is the sample one (0 for a single seed).
pub fn convergence_sweep(
    sys: &LinearSystem,
    cm: &CoarseMap,
    grid: &[usize],
    l: f64,
    seeds: &[u64],
    k_neighbors: usize,
    estimator: MiEstimator,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sample grid and seed list must be non-empty".into()));
    }
    let dj = delta_j(sys, cm)?.delta_j;
    grid.iter()
        .map(|&n| {
            let values = seeds
                .iter()
                .map(|&s| delta_i(sys, cm, n, l, k_neighbors, s, estimator).map(|d| d.delta_i))
                .collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            Ok(SweepRow {
                n_samples: n,
                delta_i_mean: mean,
                delta_i_std: std,
                delta_j: dj,
                delta_i_values: values,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form `I(X; Y)` for jointly Gaussian blocks of `cov`: `0.5 ln(det Cxx det Cyy / det C)`.
pub fn gaussian_mi(cov: &DMatrix<f64>, dx: usize) -> Result<f64> {
    let d = cov.nrows();
    let cxx = cov.view((0, 0), (dx, dx)).into_owned();
    let cyy = cov.view((dx, dx), (d - dx, d - dx)).into_owned();
    Ok(0.5 * (spectral::spd_log_det(&cxx)? + spectral::spd_log_det(&cyy)? - spectral::spd_log_det(cov)?))
}

/// Samples from `N(0, cov)` split into the first `dx` and remaining columns.
pub fn gaussian_samples(cov: &DMatrix<f64>, dx: usize, n: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f = spectral::checked_cholesky(cov)?.l();
    let d = cov.nrows();
    let mut rng = random::stream_rng(seed, 0);
    let z = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = z * f.transpose();
    Ok((s.columns(0, dx).into_owned(), s.columns(dx, d - dx).into_owned()))
}
