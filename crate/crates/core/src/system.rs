//! Micro system, coarse-graining map, macro reduction and the entropy-gap
//! constraint on admissible maps.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{self, ensure_finite, ensure_square};

/// `x_{t+1} = A x_t + e_t` with `e_t ~ N(0, Sigma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    sigma: DMatrix<f64>,
    full_rank: bool,
}

impl LinearSystem {
    /// Validates dimensions and positive definiteness of `sigma`. A rank
    /// deficient `a` is accepted but flagged through [`Self::is_full_rank`].
    pub fn new(a: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = ensure_square(&a)?;
        ensure_finite(&a)?;
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
        }
        if sigma.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Sigma is {}x{}, A is {n}x{n}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        spectral::checked_cholesky(&sigma)?;
        let full_rank = spectral::numerical_rank(&a) == n;
        Ok(Self { a, sigma, full_rank })
    }

    /// Isotropic noise `Sigma = sigma^2 I`.
    pub fn isotropic(a: DMatrix<f64>, sigma: f64) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, DMatrix::identity(n, n) * (sigma * sigma))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_full_rank(&self) -> bool {
        self.full_rank
    }
}

/// Full-row-rank `k x n` map `y = W x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseMap {
    w: DMatrix<f64>,
}

impl CoarseMap {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&w)?;
        let (k, n) = w.shape();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "coarse map must be k x n with 1 <= k <= n, got {k}x{n}"
            )));
        }
        let rank = spectral::numerical_rank(&w);
        if rank < k {
            return Err(Error::RankDeficient { rank, k });
        }
        Ok(Self { w })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            w: DMatrix::identity(n, n),
        }
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn pinv(&self) -> DMatrix<f64> {
        spectral::pinv(&self.w)
    }

    /// Same map multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.w * c)
    }

    fn check_against(&self, sys: &LinearSystem) -> Result<()> {
        if self.n() != sys.dim() {
            return Err(Error::DimensionMismatch(format!(
                "W has {} columns, system dimension is {}",
                self.n(),
                sys.dim()
            )));
        }
        Ok(())
    }
}

/// Macro dynamics `y_{t+1} = A_M y_t + e_M`, `e_M ~ N(0, Sigma_M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSystem {
    pub a_m: DMatrix<f64>,
    pub sigma_m: DMatrix<f64>,
}

impl MacroSystem {
    pub fn dim(&self) -> usize {
        self.a_m.nrows()
    }
}

/// `A_M = W A W^+`, `Sigma_M = W Sigma W^T`.
pub fn reduce(sys: &LinearSystem, cm: &CoarseMap) -> Result<MacroSystem> {
    cm.check_against(sys)?;
    let w = cm.w();
    let a_m = w * sys.a() * cm.pinv();
    let sigma_m = w * sys.sigma() * w.transpose();
    spectral::checked_cholesky(&sigma_m)?;
    Ok(MacroSystem { a_m, sigma_m })
}

/// Differential entropy of `N(0, Sigma)` in nats.
pub fn gaussian_entropy(sigma: &DMatrix<f64>) -> Result<f64> {
    let d = sigma.nrows() as f64;
    Ok(0.5 * d * (2.0 * PI * E).ln() + 0.5 * spectral::spd_log_det(sigma)?)
}

/// Per-dimension entropy removed by coarse-graining, in nats:
/// `H(Sigma)/n - H(W Sigma W^T)/k`.
pub fn entropy_gap(sys: &LinearSystem, cm: &CoarseMap) -> Result<f64> {
    cm.check_against(sys)?;
    let (n, k) = (sys.dim() as f64, cm.k() as f64);
    let sigma_m = cm.w() * sys.sigma() * cm.w().transpose();
    // the (1/2) ln(2 pi e) terms cancel per dimension
    Ok(spectral::spd_log_det(sys.sigma())? / (2.0 * n) - spectral::spd_log_det(&sigma_m)? / (2.0 * k))
}

/// Slack granted on the entropy-gap budget.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

/// `entropy_gap <= eta` (with [`CONSTRAINT_SLACK`]).
pub fn check_constraint(sys: &LinearSystem, cm: &CoarseMap, eta: f64) -> Result<bool> {
    if !eta.is_finite() {
        return Err(Error::InvalidArgument("eta must be finite".into()));
    }
    Ok(entropy_gap(sys, cm)? <= eta + CONSTRAINT_SLACK)
}

/// Determinant form of the same constraint:
/// `det(W Sigma W^T)^(1/k) >= exp(-2 eta) det(Sigma)^(1/n)`.
pub fn check_constraint_det(sys: &LinearSystem, cm: &CoarseMap, eta: f64) -> Result<bool> {
    cm.check_against(sys)?;
    let (n, k) = (sys.dim() as f64, cm.k() as f64);
    let sigma_m = cm.w() * sys.sigma() * cm.w().transpose();
    let lhs = spectral::spd_log_det(&sigma_m)? / k;
    let rhs = -2.0 * eta + spectral::spd_log_det(sys.sigma())? / n;
    Ok((lhs - rhs).exp() >= (-2.0 * CONSTRAINT_SLACK).exp())
}

/// `det(W Sigma W^T)^(1/k) / det(Sigma)^(1/n)`.
pub fn determinant_ratio(sys: &LinearSystem, cm: &CoarseMap) -> Result<f64> {
    Ok((-2.0 * entropy_gap(sys, cm)?).exp())
}
