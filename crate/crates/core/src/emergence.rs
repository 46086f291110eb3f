//! Causal emergence `Delta J = J_macro - J_micro` and its analytic bounds.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::ei::{self, jacobian_at, StateMap, DEFAULT_L};
use crate::error::{Error, Result};
use crate::random;
use crate::spectral;
use crate::system::{self, CoarseMap, LinearSystem, MacroSystem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmergenceReport {
    pub j_micro: f64,
    pub j_macro: f64,
    pub delta_j: f64,
    /// Degeneracy emergence (dynamics determinant ratio).
    pub delta_j1: f64,
    /// Determinism emergence (noise determinant ratio).
    pub delta_j2: f64,
    pub k: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_satisfied: Option<bool>,
}

impl EmergenceReport {
    /// Attach the entropy-gap verdict for budget `eta`.
    pub fn with_constraint(mut self, sys: &LinearSystem, cm: &CoarseMap, eta: f64) -> Result<Self> {
        self.constraint_satisfied = Some(system::check_constraint(sys, cm, eta)?);
        self.constraint_eta = Some(eta);
        Ok(self)
    }
}

/// `Delta J` with `J` values reported at the default intervention width.
pub fn delta_j(sys: &LinearSystem, cm: &CoarseMap) -> Result<EmergenceReport> {
    delta_j_at(sys, cm, DEFAULT_L)
}

/// `Delta J` for `W`. The difference itself never touches `l`; `l` only
/// sets the reported `j_micro` and `j_macro`. A singular `A_M` gives
/// `-inf` for `delta_j1`, `delta_j` and `j_macro`.
pub fn delta_j_at(sys: &LinearSystem, cm: &CoarseMap, l: f64) -> Result<EmergenceReport> {
    let macro_sys = system::reduce(sys, cm)?;
    let (n, k) = (sys.dim(), cm.k());
    let log_det_a = spectral::log_abs_det(sys.a())?;
    if !log_det_a.is_finite() {
        return Err(Error::Singular("micro dynamics A is singular, J_micro is -inf".into()));
    }
    let log_det_am = spectral::log_abs_det(&macro_sys.a_m)?;
    if !log_det_am.is_finite() {
        warn!("macro dynamics W A W^+ is singular; Delta J is -inf");
    }
    let delta_j1 = log_det_am / k as f64 - log_det_a / n as f64;
    let delta_j2 = system::entropy_gap(sys, cm)?;

    let j_micro = ei::j_value(sys, l)?;
    let j_macro = macro_j(&macro_sys, l)?;
    Ok(EmergenceReport {
        j_micro,
        j_macro,
        delta_j: delta_j1 + delta_j2,
        delta_j1,
        delta_j2,
        k,
        n,
        l,
        constraint_eta: None,
        constraint_satisfied: None,
    })
}

fn macro_j(m: &MacroSystem, l: f64) -> Result<f64> {
    let k = m.dim() as f64;
    let log_det = spectral::log_abs_det(&m.a_m)?;
    if !log_det.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    Ok(log_det / k + l.ln() - half_log_2pi_e - spectral::spd_log_det(&m.sigma_m)? / (2.0 * k))
}

/// Product of the `k` largest eigenvalue moduli: an upper bound on
/// `|det(W A W^+)|` over every rank-`k` map.
pub fn degeneracy_bound(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    let spec = spectral::eig_sorted(a)?;
    check_k(k, spec.dim())?;
    Ok(spec.top_moduli(k).iter().product())
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(())
}

/// Lower and upper bounds on `det(W Sigma W^T)^(1/2k)` from the singular
/// values of `W` and the eigenvalues of `Sigma`.
pub fn sigma_det_bounds(sigma: &DMatrix<f64>, w: &CoarseMap) -> Result<(f64, f64)> {
    let n = w.n();
    if sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Sigma does not match W".into()));
    }
    spectral::checked_cholesky(sigma)?;
    let k = w.k();
    let s = spectral::singular_values(w.w());
    let kappa = spectral::symmetric_eigenvalues(sigma);
    let mut lower = 0.0;
    let mut upper = 0.0;
    for i in 0..k {
        lower += s[i].ln() + 0.5 * kappa[n - 1 - i].ln();
        upper += s[i].ln() + 0.5 * kappa[i].ln();
    }
    Ok(((lower / k as f64).exp(), (upper / k as f64).exp()))
}

fn mean_log_gap(moduli: &[f64], k: usize) -> Result<f64> {
    if moduli.iter().any(|&m| m == 0.0) {
        return Err(Error::Singular("zero eigenvalue modulus".into()));
    }
    let top = moduli[..k].iter().map(|m| m.ln()).sum::<f64>() / k as f64;
    let all = moduli.iter().map(|m| m.ln()).sum::<f64>() / moduli.len() as f64;
    Ok(top - all)
}

/// Maximum causal emergence over maps meeting the entropy-gap budget `eta`.
pub fn delta_j_max(sys: &LinearSystem, k: usize, eta: f64) -> Result<f64> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be finite and >= 0, got {eta}")));
    }
    check_k(k, sys.dim())?;
    let spec = spectral::eig_sorted(sys.a())?;
    spec.check_prefix(k)?;
    warn_if_degenerate(&spec.moduli, k);
    Ok(mean_log_gap(&spec.moduli, k)? + eta)
}

pub(crate) fn warn_if_degenerate(moduli: &[f64], k: usize) {
    if k < moduli.len() && moduli[k - 1] - moduli[k] < 1e-8 * moduli[0] {
        warn!(
            "eigenvalue moduli {} and {} are nearly equal; the optimal map is not unique",
            moduli[k - 1],
            moduli[k]
        );
    }
}

/// Whether some admissible `k x n` map achieves `Delta J > 0`.
pub fn feasibility(sys: &LinearSystem, k: usize, eta: f64) -> Result<bool> {
    Ok(delta_j_max(sys, k, eta)? > 0.0)
}

/// Bound on `Delta J` over maps with orthonormal rows, from the eigenvalue
/// moduli of `A Sigma^(-1/2)`. Not a bound for non-normal systems in
/// general; see the README.
pub fn delta_j_orthogonal_bound(sys: &LinearSystem, k: usize) -> Result<f64> {
    check_k(k, sys.dim())?;
    let whitened = sys.a() * spectral::spd_power(sys.sigma(), -0.5)?;
    let spec = spectral::eig_sorted(&whitened)?;
    mean_log_gap(&spec.moduli, k)
}

/// Sorted `|lambda_i| / sqrt(kappa_i)`.
pub(crate) fn whitened_moduli(lambda: &[f64], kappa: &[f64]) -> Result<Vec<(usize, f64)>> {
    if lambda.len() != kappa.len() || lambda.is_empty() {
        return Err(Error::DimensionMismatch("lambda and kappa must have equal nonzero length".into()));
    }
    if kappa.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(Error::NotPositiveDefinite("kappa must be positive".into()));
    }
    let mut d: Vec<(usize, f64)> = lambda
        .iter()
        .zip(kappa)
        .map(|(l, c)| l.abs() / c.sqrt())
        .enumerate()
        .collect();
    // stable: ties keep input order
    d.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(d)
}

/// Exact `Delta J` of the best orthonormal map when `A` and `Sigma` share
/// eigenvectors (`A = V diag(lambda) V^T`, `Sigma = V diag(kappa) V^T`).
pub fn delta_j_shared_eigs(lambda: &[f64], kappa: &[f64], k: usize) -> Result<f64> {
    check_k(k, lambda.len())?;
    let d: Vec<f64> = whitened_moduli(lambda, kappa)?.into_iter().map(|(_, v)| v).collect();
    mean_log_gap(&d, k)
}

/// Local `Delta J` of a nonlinear map at `x`. The macro Jacobian is
/// `W Df(W^+ W x) W^+`. Singular Jacobians give `-inf`.
pub fn delta_j_local<M: StateMap + ?Sized>(
    f: &M,
    cm: &CoarseMap,
    x: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let n = f.dim();
    if cm.n() != n || sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch("map, W and Sigma dimensions differ".into()));
    }
    let k = cm.k();
    let w = cm.w();
    let w_pinv = cm.pinv();
    let micro = jacobian_at(f, x)?;
    let lifted = &w_pinv * (w * x);
    let macro_jac = w * jacobian_at(f, &lifted)? * &w_pinv;

    let ld_micro = spectral::log_abs_det(&micro)?;
    let ld_macro = spectral::log_abs_det(&macro_jac)?;
    if !ld_micro.is_finite() || !ld_macro.is_finite() {
        warn!("singular Jacobian in local Delta J at {:?}", x.as_slice());
        return Ok(f64::NEG_INFINITY);
    }
    let sigma_m = w * sigma * w.transpose();
    let det_term = spectral::spd_log_det(sigma)? / (2.0 * n as f64) - spectral::spd_log_det(&sigma_m)? / (2.0 * k as f64);
    Ok(ld_macro / k as f64 - ld_micro / n as f64 + det_term)
}

/// Outcome of the degeneracy/determinism cooperation experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CooperationResult {
    /// Pearson correlation of `kappa` against `lambda` for each draw.
    pub kappa_lambda_corr: Vec<f64>,
    /// Pearson correlation of `delta_j1` against `delta_j2` over random
    /// orthonormal maps, per draw.
    pub dj_corr: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares `(slope, intercept)` of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// For each draw: shuffle `kappa` against `lambda`, rotate both into a random
/// shared eigenbasis, and correlate `delta_j1` with `delta_j2` over
/// `maps_per_draw` random orthonormal `k x n` maps. Draws are independent
/// RNG streams of `seed`.
pub fn cooperation_experiment(
    lambda: &[f64],
    kappa: &[f64],
    k: usize,
    draws: usize,
    maps_per_draw: usize,
    seed: u64,
) -> Result<CooperationResult> {
    let n = lambda.len();
    whitened_moduli(lambda, kappa)?;
    check_k(k, n)?;
    if draws < 2 || maps_per_draw < 2 {
        return Err(Error::InvalidArgument("need at least two draws and two maps per draw".into()));
    }
    let per_draw: Vec<Result<(f64, f64)>> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = random::stream_rng(seed, d);
            let mut perm = kappa.to_vec();
            perm.shuffle(&mut rng);
            let v = random::random_orthogonal(n, &mut rng);
            let a = &v * DMatrix::from_diagonal(&DVector::from_column_slice(lambda)) * v.transpose();
            let s = &v * DMatrix::from_diagonal(&DVector::from_column_slice(&perm)) * v.transpose();
            let sys = LinearSystem::new(a, 0.5 * (&s + s.transpose()))?;
            let mut dj1 = Vec::with_capacity(maps_per_draw);
            let mut dj2 = Vec::with_capacity(maps_per_draw);
            for _ in 0..maps_per_draw {
                let cm = CoarseMap::new(random::random_orthonormal_rows(k, n, &mut rng))?;
                let r = delta_j(&sys, &cm)?;
                dj1.push(r.delta_j1);
                dj2.push(r.delta_j2);
            }
            Ok((pearson(&perm, lambda), pearson(&dj1, &dj2)))
        })
        .collect();
    let mut kappa_lambda_corr = Vec::with_capacity(draws);
    let mut dj_corr = Vec::with_capacity(draws);
    for r in per_draw {
        let (c, d) = r?;
        kappa_lambda_corr.push(c);
        dj_corr.push(d);
    }
    let (slope, intercept) = linear_fit(&kappa_lambda_corr, &dj_corr);
    Ok(CooperationResult {
        kappa_lambda_corr,
        dj_corr,
        slope,
        intercept,
    })
}
