//! Effective information (EI) under a uniform do-intervention.
//!
//! Every routine returns an [`EiBreakdown`] whose `ei` splits into a
//! determinism term (noise entropy, negated) and a degeneracy term (log volume
//! of the effect distribution). Continuous quantities are in nats; the
//! discrete transition-matrix form is in bits.

use std::f64::consts::{E, PI};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{self, ensure_square};
use crate::system::LinearSystem;

/// Side length of the default intervention box `[-1, 1]^n`.
pub const DEFAULT_L: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoUnit {
    Nats,
    Bits,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EiBreakdown {
    pub ei: f64,
    pub determinism: f64,
    pub degeneracy: f64,
    /// `ei / dimension`.
    pub per_dimension: f64,
    pub dimension: usize,
    /// Intervention width in state units; `None` for discrete TPMs.
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub units: InfoUnit,
}

fn half_log_2pi_e() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

fn check_l(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("intervention width L must be positive, got {l}")))
    }
}

/// EI of a row-stochastic transition matrix, in bits.
pub fn ei_tpm(m: &DMatrix<f64>) -> Result<EiBreakdown> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty TPM".into()));
    }
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::NotStochastic(format!("row {i} has a negative or non-finite entry")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotStochastic(format!("row {i} sums to {total}")));
        }
    }
    let nf = n as f64;
    let effect: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();

    let mut ei = 0.0;
    let mut determinism = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = m[(i, j)];
            if p > 0.0 {
                ei += p * (p / effect[j]).log2();
                determinism += p * p.log2();
            }
        }
    }
    ei /= nf;
    determinism /= nf;
    let degeneracy = -effect
        .iter()
        .filter(|&&e| e > 0.0)
        .map(|&e| e * e.log2())
        .sum::<f64>();
    Ok(EiBreakdown {
        ei,
        determinism,
        degeneracy,
        per_dimension: ei / nf,
        dimension: n,
        l: None,
        units: InfoUnit::Bits,
    })
}

/// Gaussian EI of a full-rank linear system in the small-noise form
/// `ln[|det A| L^n / ((2 pi e)^(n/2) det(Sigma)^(1/2))]`.
pub fn ei_gaussian(sys: &LinearSystem, l: f64) -> Result<EiBreakdown> {
    check_l(l)?;
    if !sys.is_full_rank() {
        return Err(Error::Singular(
            "A is rank deficient; use ei_rectangular for the pseudo-determinant form".into(),
        ));
    }
    let n = sys.dim();
    let nf = n as f64;
    let log_det_a = spectral::log_abs_det(sys.a())?;
    let log_det_sigma = spectral::spd_log_det(sys.sigma())?;
    let determinism = -nf * half_log_2pi_e() - 0.5 * log_det_sigma;
    let degeneracy = log_det_a + nf * l.ln();
    let ei = log_det_a + nf * l.ln() - nf * half_log_2pi_e() - 0.5 * log_det_sigma;
    Ok(EiBreakdown {
        ei,
        determinism,
        degeneracy,
        per_dimension: ei / nf,
        dimension: n,
        l: Some(l),
        units: InfoUnit::Nats,
    })
}

/// Dimension-averaged EI, `J = EI / n`.
pub fn j_value(sys: &LinearSystem, l: f64) -> Result<f64> {
    Ok(ei_gaussian(sys, l)?.per_dimension)
}

/// EI for an `m x n` (possibly rank-deficient) dynamics matrix via
/// `pdet(A^T Sigma^-1 A)`. A zero pseudo-determinant yields `-inf`.
pub fn ei_rectangular(a: &DMatrix<f64>, sigma: &DMatrix<f64>, l: f64) -> Result<EiBreakdown> {
    check_l(l)?;
    let (m, n) = a.shape();
    if sigma.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "Sigma is {}x{}, A has {m} rows",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    spectral::ensure_finite(a)?;
    let chol = spectral::checked_cholesky(sigma)?;
    let (mf, nf) = (m as f64, n as f64);
    let log_det_sigma = spectral::spd_log_det(sigma)?;
    let determinism = -mf * half_log_2pi_e() - 0.5 * log_det_sigma;

    let info = a.transpose() * chol.solve(a);
    let info = 0.5 * (&info + info.transpose());
    let pd = spectral::pdet(&info)?;
    let ei = if pd > 0.0 {
        0.5 * pd.ln() + nf * l.ln() - 0.5 * nf * (2.0 * PI).ln() - 0.5 * mf
    } else {
        warn!("pseudo-determinant of A^T Sigma^-1 A is zero; EI is -inf");
        f64::NEG_INFINITY
    };
    Ok(EiBreakdown {
        ei,
        determinism,
        degeneracy: ei - determinism,
        per_dimension: ei / nf,
        dimension: n,
        l: Some(l),
        units: InfoUnit::Nats,
    })
}

/// EI with observation noise on cause (`theta_x`) and effect (`theta_y`):
/// the noise covariance becomes `theta_y + A theta_x A^T + Sigma`.
pub fn ei_observed(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    theta_x: &DMatrix<f64>,
    theta_y: &DMatrix<f64>,
    l: f64,
) -> Result<EiBreakdown> {
    let (m, n) = a.shape();
    if theta_x.shape() != (n, n) || theta_y.shape() != (m, m) {
        return Err(Error::DimensionMismatch("observation noise shapes do not match A".into()));
    }
    spectral::ensure_psd(theta_x, "Theta_x")?;
    spectral::ensure_psd(theta_y, "Theta_y")?;
    let theta = theta_y + a * theta_x * a.transpose() + sigma;
    ei_rectangular(a, &theta, l)
}

/// A differentiable state map `f: R^n -> R^n`.
pub trait StateMap {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Analytic Jacobian if available; `None` falls back to finite differences.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `f(x) = A x`.
pub struct LinearMap(pub DMatrix<f64>);

impl StateMap for LinearMap {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.0.clone())
    }
}

/// Closure-backed map with an optional analytic Jacobian.
pub struct FnMap<F, J = fn(&DVector<f64>) -> DMatrix<f64>> {
    pub dim: usize,
    pub f: F,
    pub jac: Option<J>,
}

impl<F> FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, jac: None }
    }
}

impl<F, J> FnMap<F, J>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub fn with_jacobian(dim: usize, f: F, jac: J) -> Self {
        Self { dim, f, jac: Some(jac) }
    }
}

impl<F, J> StateMap for FnMap<F, J>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jac.as_ref().map(|j| j(x))
    }
}

/// Central-difference Jacobian with step `1e-5 (1 + |x_i|)`.
pub fn finite_difference_jacobian<M: StateMap + ?Sized>(f: &M, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let rows = f.eval(x).len();
    let mut jac = DMatrix::zeros(rows, n);
    for i in 0..n {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        let diff = (f.eval(&plus) - f.eval(&minus)) / (2.0 * h);
        jac.set_column(i, &diff);
    }
    jac
}

/// Analytic Jacobian when the map provides one, otherwise finite differences.
pub fn jacobian_at<M: StateMap + ?Sized>(f: &M, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, map dimension is {}",
            x.len(),
            f.dim()
        )));
    }
    let jac = f.jacobian(x).unwrap_or_else(|| finite_difference_jacobian(f, x));
    spectral::ensure_finite(&jac)?;
    Ok(jac)
}

/// Local dimension-averaged EI of a nonlinear map at `x`:
/// `ln[|det Df(x)|^(1/n) L / ((2 pi e)^(1/2) det(Sigma)^(1/2n))]`.
/// A singular Jacobian returns `-inf`.
pub fn local_j_nonlinear<M: StateMap + ?Sized>(
    f: &M,
    x: &DVector<f64>,
    sigma: &DMatrix<f64>,
    l: f64,
) -> Result<f64> {
    check_l(l)?;
    let jac = jacobian_at(f, x)?;
    let n = jac.nrows();
    if jac.ncols() != n || sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Jacobian and Sigma must be n x n".into()));
    }
    let nf = n as f64;
    let log_det_sigma = spectral::spd_log_det(sigma)?;
    let log_det_jac = spectral::log_abs_det(&jac)?;
    if !log_det_jac.is_finite() {
        warn!("singular Jacobian at {:?}; local J is -inf", x.as_slice());
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_det_jac / nf + l.ln() - half_log_2pi_e() - log_det_sigma / (2.0 * nf))
}
