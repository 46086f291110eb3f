//! Dynamical prediction loss of a coarse-graining and its supremum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::optimal_w;
use crate::random;
use crate::spectral;
use crate::system::{reduce, CoarseMap, LinearSystem};

/// Coefficient on the noise term of the supremum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SdMode {
    /// `(n - k) * eps_norm`.
    #[default]
    Standard,
    /// `sqrt(n - k) * eps_norm`, the Frobenius norm of the discarded projector.
    Tight,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    /// Largest sampled loss, if samples were drawn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_d: Option<f64>,
    pub s_d: f64,
    pub s_d_mode: SdMode,
    pub frobenius_term: f64,
    pub noise_term: f64,
}

fn projector(cm: &CoarseMap) -> DMatrix<f64> {
    cm.pinv() * cm.w()
}

fn check_dims(sys: &LinearSystem, cm: &CoarseMap) -> Result<usize> {
    let n = sys.dim();
    if cm.n() != n {
        return Err(Error::DimensionMismatch(format!("W has {} columns, system dimension is {n}", cm.n())));
    }
    Ok(n)
}

/// `|| (P A P - A) x + (P - I) eps ||` with `P = W^+ W`: the error of
/// lifting one macro step back to micro space.
pub fn dynamical_loss(sys: &LinearSystem, cm: &CoarseMap, x: &DVector<f64>, eps: &DVector<f64>) -> Result<f64> {
    let n = check_dims(sys, cm)?;
    if x.len() != n || eps.len() != n {
        return Err(Error::DimensionMismatch("state and noise must have length n".into()));
    }
    let p = projector(cm);
    let a = sys.a();
    let r = (&p * a * &p - a) * x + (&p - DMatrix::identity(n, n)) * eps;
    Ok(r.norm())
}

/// `||A - P A P||_F * x_sup + c * eps_norm` with `c` set by `mode`.
pub fn loss_supremum(sys: &LinearSystem, cm: &CoarseMap, x_sup: f64, eps_norm: f64, mode: SdMode) -> Result<LossReport> {
    let n = check_dims(sys, cm)?;
    if !(x_sup >= 0.0) || !(eps_norm >= 0.0) || !x_sup.is_finite() || !eps_norm.is_finite() {
        return Err(Error::InvalidArgument("x_sup and eps_norm must be finite and >= 0".into()));
    }
    let p = projector(cm);
    let frob = (sys.a() - &p * sys.a() * &p).norm();
    let dropped = (n - cm.k()) as f64;
    let coef = match mode {
        SdMode::Standard => dropped,
        SdMode::Tight => dropped.sqrt(),
    };
    let frobenius_term = frob * x_sup;
    let noise_term = coef * eps_norm;
    Ok(LossReport {
        l_d: None,
        s_d: frobenius_term + noise_term,
        s_d_mode: mode,
        frobenius_term,
        noise_term,
    })
}

fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, random::gaussian_matrix(n, 1, rng).iter().copied());
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Supremum report with `l_d` set to the largest loss over `samples` random
/// pairs (`||x|| <= x_sup` uniform in the ball, `||eps|| = eps_norm`).
pub fn sampled_loss_report(
    sys: &LinearSystem,
    cm: &CoarseMap,
    x_sup: f64,
    eps_norm: f64,
    mode: SdMode,
    samples: usize,
    seed: u64,
) -> Result<LossReport> {
    let mut report = loss_supremum(sys, cm, x_sup, eps_norm, mode)?;
    let n = sys.dim();
    let mut worst: f64 = 0.0;
    let mut rng = random::stream_rng(seed, 0);
    for _ in 0..samples {
        let radius = x_sup * rng.random::<f64>().powf(1.0 / n as f64);
        let x = random_direction(n, &mut rng) * radius;
        let eps = random_direction(n, &mut rng) * eps_norm;
        worst = worst.max(dynamical_loss(sys, cm, &x, &eps)?);
    }
    report.l_d = Some(worst);
    Ok(report)
}

/// Per-step losses along a recorded trajectory: `states` has one more row
/// than `noise`.
pub fn trajectory_losses(sys: &LinearSystem, cm: &CoarseMap, states: &DMatrix<f64>, noise: &DMatrix<f64>) -> Result<Vec<f64>> {
    if states.nrows() != noise.nrows() + 1 || states.ncols() != noise.ncols() {
        return Err(Error::DimensionMismatch("states must have one more row than noise".into()));
    }
    (0..noise.nrows())
        .map(|t| {
            let x = states.row(t).transpose();
            let e = noise.row(t).transpose();
            dynamical_loss(sys, cm, &x, &e)
        })
        .collect()
}

/// Rows rescaled to an orthonormal basis of the same row space.
pub fn orthonormalize_rows(cm: &CoarseMap) -> Result<CoarseMap> {
    let q = cm.w().transpose().qr().q();
    CoarseMap::new(q.transpose())
}

#[derive(Clone, Debug, Serialize)]
pub struct ArgminSdSweep {
    /// Frobenius term of the supremum for each candidate (index 0 is the
    /// optimal map).
    pub frobenius: Vec<f64>,
    pub delta_j1: Vec<f64>,
    pub argmin_sd: usize,
    pub argmax_dj1: usize,
    pub consistent: bool,
}

/// Compare `S_D` and degeneracy emergence across `n_candidates` random maps
/// plus the optimal one, all normalized to orthonormal rows. `S_D` is
/// compared through its Frobenius term, the only part that varies.
pub fn argmin_sd_sweep(sys: &LinearSystem, k: usize, eta: f64, n_candidates: usize, seed: u64) -> Result<ArgminSdSweep> {
    let n = sys.dim();
    let mut candidates = vec![orthonormalize_rows(&optimal_w(sys, k, eta)?.w)?];
    let drawn: Vec<Option<CoarseMap>> = (0..n_candidates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = random::stream_rng(seed, i);
            CoarseMap::new(random::gaussian_matrix(k, n, &mut rng))
                .and_then(|c| orthonormalize_rows(&c))
                .ok()
        })
        .collect();
    candidates.extend(drawn.into_iter().flatten());

    let log_det_a = spectral::log_abs_det(sys.a())?;
    let scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|cm| -> Result<(f64, f64)> {
            let frob = loss_supremum(sys, cm, 1.0, 0.0, SdMode::Standard)?.frobenius_term;
            let am = reduce(sys, cm)?.a_m;
            let dj1 = spectral::log_abs_det(&am)? / k as f64 - log_det_a / n as f64;
            Ok((frob, dj1))
        })
        .collect::<Result<_>>()?;
    let (frobenius, delta_j1): (Vec<f64>, Vec<f64>) = scored.into_iter().unzip();

    // first index wins ties
    let argmin_sd = (0..frobenius.len()).fold(0, |b, i| if frobenius[i] < frobenius[b] { i } else { b });
    let argmax_dj1 = (0..delta_j1.len()).fold(0, |b, i| if delta_j1[i] > delta_j1[b] { i } else { b });
    let consistent = delta_j1[argmin_sd] >= delta_j1[argmax_dj1] - 1e-6;
    Ok(ArgminSdSweep {
        frobenius,
        delta_j1,
        argmin_sd,
        argmax_dj1,
        consistent,
    })
}

/// Whether the candidate with the smallest `S_D` also has the largest
/// degeneracy emergence (within 1e-6).
pub fn argmin_sd_check(sys: &LinearSystem, k: usize, eta: f64, n_candidates: usize, seed: u64) -> Result<bool> {
    Ok(argmin_sd_sweep(sys, k, eta, n_candidates, seed)?.consistent)
}
