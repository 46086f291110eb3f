//! Coarse-graining maps that attain the maximum causal emergence.

use std::cmp::Ordering;

use log::warn;
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use crate::emergence::{delta_j, delta_j_max, whitened_moduli};
use crate::error::{Error, Result};
use crate::random;
use crate::spectral;
use crate::system::{self, CoarseMap, LinearSystem};

#[derive(Clone, Debug)]
pub struct OptimalCoarsening {
    pub w: CoarseMap,
    pub achieved_delta_j: f64,
    /// `delta_j_max`, or NaN when `k` splits a conjugate pair.
    pub analytic_bound: f64,
    /// `analytic_bound - achieved_delta_j`.
    pub gap: f64,
    pub retained_moduli: Vec<f64>,
}

/// Flip rows so the first nonzero entry of each is positive.
pub fn canonical_signs(w: &mut DMatrix<f64>) {
    for mut row in w.row_iter_mut() {
        let tol = 1e-12 * row.amax();
        if let Some(first) = row.iter().copied().find(|v| v.abs() > tol) {
            if first < 0.0 {
                row.neg_mut();
            }
        }
    }
}

/// Scale factor bringing the entropy gap of `w` to exactly `eta`.
fn tight_scale(sys: &LinearSystem, w: &CoarseMap, eta: f64) -> Result<f64> {
    Ok((system::entropy_gap(sys, w)? - eta).exp())
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eta must be finite and >= 0, got {eta}")))
    }
}

/// Map spanning the left invariant subspace of the `k` largest-modulus
/// eigenvalues, scaled so the entropy-gap budget is used exactly.
pub fn optimal_w(sys: &LinearSystem, k: usize, eta: f64) -> Result<OptimalCoarsening> {
    check_eta(eta)?;
    let n = sys.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let bound = delta_j_max(sys, k, eta)?;
    let (q, moduli) = spectral::schur_top_k(&sys.a().transpose(), k)?;
    let w0 = CoarseMap::new(q.transpose())?;

    let retained = spectral::eig_sorted(&(w0.w() * sys.a() * w0.w().transpose()))?;
    let scale = moduli[0].max(1.0);
    for (got, want) in retained.moduli.iter().zip(&moduli) {
        if (got - want).abs() > 1e-8 * scale {
            return Err(Error::NoConvergence);
        }
    }

    let mut w = w0.w() * tight_scale(sys, &w0, eta)?;
    canonical_signs(&mut w);
    let w = CoarseMap::new(w)?;
    let achieved = delta_j(sys, &w)?.delta_j;
    Ok(OptimalCoarsening {
        w,
        achieved_delta_j: achieved,
        analytic_bound: bound,
        gap: bound - achieved,
        retained_moduli: moduli,
    })
}

/// Solution circle of the `n = 3`, `k = 2` example with isotropic noise.
///
/// Optimal rows live in the plane orthogonal to `v3`, the right eigenvector
/// of the discarded eigenvalue. With perpendicular rows the constraint reads
/// `|w1| |w2| = exp(-2 eta)`, so for a partner of norm `|w2|` the first row
/// lies on the circle of radius `exp(-2 eta) / |w2|` in that plane.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleSolutionSet {
    pub center: Vector3<f64>,
    pub radius: f64,
    /// Orthonormal basis `(b1, b2)` of the plane, with `b2 = w2 / |w2|`.
    pub basis: [Vector3<f64>; 2],
    pub constraint_plane_normal: Vector3<f64>,
    pub partner_norm: f64,
}

impl CircleSolutionSet {
    /// Point `w1(t)` on the circle.
    pub fn w1(&self, t: f64) -> Vector3<f64> {
        self.center + self.radius * (t.cos() * self.basis[0] + t.sin() * self.basis[1])
    }

    /// Partner row at angle `t`, perpendicular to `w1(t)` with the original
    /// norm of `w2`. At `t = 0` it is `w2` itself.
    pub fn w2(&self, t: f64) -> Vector3<f64> {
        self.partner_norm * (-t.sin() * self.basis[0] + t.cos() * self.basis[1])
    }

    pub fn map(&self, t: f64) -> Result<CoarseMap> {
        let (a, b) = (self.w1(t), self.w2(t));
        CoarseMap::new(DMatrix::from_row_slice(2, 3, &[a[0], a[1], a[2], b[0], b[1], b[2]]))
    }

    /// `m` equally spaced angles on `[0, 2 pi)`.
    pub fn sample_angles(m: usize) -> Vec<f64> {
        (0..m).map(|i| 2.0 * std::f64::consts::PI * i as f64 / m as f64).collect()
    }
}

pub fn circle_solution_set(v3: &Vector3<f64>, w2: &Vector3<f64>, sigma: f64, eta: f64) -> Result<CircleSolutionSet> {
    check_eta(eta)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let v_norm = v3.norm();
    let w_norm = w2.norm();
    if v_norm == 0.0 || w_norm == 0.0 {
        return Err(Error::InvalidArgument("v3 and w2 must be nonzero".into()));
    }
    let normal = v3 / v_norm;
    if w2.dot(&normal).abs() > 1e-9 * w_norm.max(1.0) {
        return Err(Error::InvalidArgument("w2 is not perpendicular to v3".into()));
    }
    let b2 = w2 / w_norm;
    let b1 = b2.cross(&normal);
    Ok(CircleSolutionSet {
        center: Vector3::zeros(),
        radius: (-2.0 * eta).exp() / w_norm,
        basis: [b1, b2],
        constraint_plane_normal: normal,
        partner_norm: w_norm,
    })
}

fn lex_cmp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    // row-major comparison
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            match a[(i, j)].total_cmp(&b[(i, j)]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
    }
    Ordering::Equal
}

/// Best of `n_samples` Gaussian maps, each rescaled to meet the budget with
/// equality. Sample `i` uses RNG stream `i` of `seed`, so the result does
/// not depend on thread count. Ties go to the lexicographically smallest `W`.
pub fn random_search(sys: &LinearSystem, k: usize, eta: f64, n_samples: usize, seed: u64) -> Result<OptimalCoarsening> {
    check_eta(eta)?;
    let n = sys.dim();
    if k == 0 || k > n || n_samples == 0 {
        return Err(Error::InvalidArgument("need 1 <= k <= n and at least one sample".into()));
    }
    let best = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, DMatrix<f64>)>> {
            let mut rng = random::stream_rng(seed, i);
            let raw = random::gaussian_matrix(k, n, &mut rng);
            let Ok(cm) = CoarseMap::new(raw) else {
                return Ok(None);
            };
            let cm = cm.scaled(tight_scale(sys, &cm, eta)?)?;
            let dj = delta_j(sys, &cm)?.delta_j;
            Ok(Some((dj, cm.w().clone())))
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(x), Some(y)) => match x.0.total_cmp(&y.0) {
                        Ordering::Greater => Some(x),
                        Ordering::Less => Some(y),
                        Ordering::Equal => {
                            if lex_cmp(&x.1, &y.1) != Ordering::Greater {
                                Some(x)
                            } else {
                                Some(y)
                            }
                        }
                    },
                })
            },
        )?;
    let (achieved, w) = best.ok_or_else(|| Error::InvalidArgument("no full-rank sample drawn".into()))?;
    let spec = spectral::eig_sorted(sys.a())?;
    let bound = match delta_j_max(sys, k, eta) {
        Ok(b) => b,
        Err(Error::ConjugatePairSplit { .. }) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(OptimalCoarsening {
        w: CoarseMap::new(w)?,
        achieved_delta_j: achieved,
        analytic_bound: bound,
        gap: bound - achieved,
        retained_moduli: spec.top_moduli(k).to_vec(),
    })
}

/// Orthonormal-row optimum when `A = V diag(lambda) V^T` and
/// `Sigma = V diag(kappa) V^T`: keep the eigenvectors with the largest
/// `|lambda_i| / sqrt(kappa_i)`. Ties are broken by input order.
pub fn orthogonal_optimal_w(lambda: &[f64], kappa: &[f64], v: &DMatrix<f64>, k: usize) -> Result<CoarseMap> {
    let n = lambda.len();
    if v.shape() != (n, n) {
        return Err(Error::DimensionMismatch("V must be n x n".into()));
    }
    if (v.transpose() * v - DMatrix::<f64>::identity(n, n)).amax() > 1e-10 {
        return Err(Error::InvalidArgument("V is not orthogonal".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let order = whitened_moduli(lambda, kappa)?;
    if k < n && (order[k - 1].1 - order[k].1).abs() <= 1e-12 * order[0].1 {
        warn!("whitened moduli tie across position {k}; keeping input order");
    }
    let mut w = DMatrix::zeros(k, n);
    for (row, &(idx, _)) in order[..k].iter().enumerate() {
        w.set_row(row, &v.column(idx).transpose());
    }
    CoarseMap::new(w)
}
