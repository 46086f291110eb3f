//! Dense linear-algebra substrate.
//!
//! Everything the emergence formulas consume lives here: a modulus-ordered
//! eigendecomposition, an ordered real Schur form (so that the invariant
//! subspace of the `k` largest-modulus eigenvalues has a real orthonormal
//! basis), the Moore-Penrose pseudoinverse, the pseudo-determinant and
//! singular values.
//!
//! The unordered real Schur form comes from `nalgebra`; block reordering is
//! done here with the direct swapping method (solve a small Sylvester
//! equation, then an orthogonal similarity on the two adjacent blocks).

use nalgebra::{Cholesky, Complex, DMatrix, Dyn, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Relative factor of the numerical-rank rule: a singular value counts as
/// nonzero when it exceeds `RANK_RTOL * s_max * max(rows, cols)`.
pub const RANK_RTOL: f64 = 1e-10;

/// Modulus-sorted eigenstructure of a real square matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Eigenvalues, descending modulus; ties broken by descending real part,
    /// then descending imaginary part. Conjugate pairs are adjacent.
    pub eigenvalues: Vec<Complex64>,
    pub moduli: Vec<f64>,
    /// Column `i` is a unit-norm right eigenvector for `eigenvalues[i]`.
    pub right_eigenvectors: DMatrix<Complex64>,
    block_sizes: Vec<usize>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sizes of the real Schur blocks in eigenvalue order (2 = conjugate pair).
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// True when the first `k` eigenvalues do not split a conjugate pair.
    pub fn is_block_boundary(&self, k: usize) -> bool {
        block_boundary(&self.block_sizes, k)
    }

    /// Every `k` in `1..=n` that keeps conjugate pairs together.
    pub fn admissible_ks(&self) -> Vec<usize> {
        admissible(&self.block_sizes)
    }

    /// Errors with [`Error::ConjugatePairSplit`] when the prefix of length `k`
    /// cuts through a conjugate pair.
    pub fn check_prefix(&self, k: usize) -> Result<()> {
        check_boundary(&self.block_sizes, k)
    }

    pub fn top_moduli(&self, k: usize) -> &[f64] {
        &self.moduli[..k.min(self.moduli.len())]
    }
}

/// Real Schur form `A = Q T Q^T` with diagonal blocks ordered by
/// non-increasing eigenvalue modulus.
#[derive(Clone, Debug)]
pub struct OrderedSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
}

impl OrderedSchur {
    /// Eigenvalues read off the diagonal blocks, in block order. The member
    /// of a pair with positive imaginary part comes first.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.t.nrows());
        let mut start = 0;
        for &size in &self.block_sizes {
            let (first, second) = block_eigenvalues(&self.t, start, size);
            out.push(first);
            if let Some(second) = second {
                out.push(second);
            }
            start += size;
        }
        out
    }
}

fn block_boundary(blocks: &[usize], k: usize) -> bool {
    let mut acc = 0;
    if k == 0 {
        return true;
    }
    for &b in blocks {
        acc += b;
        if acc == k {
            return true;
        }
        if acc > k {
            return false;
        }
    }
    false
}

fn admissible(blocks: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    blocks
        .iter()
        .map(|b| {
            acc += b;
            acc
        })
        .collect()
}

fn check_boundary(blocks: &[usize], k: usize) -> Result<()> {
    let n: usize = blocks.iter().sum();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={n}"
        )));
    }
    if block_boundary(blocks, k) {
        Ok(())
    } else {
        let suggestions = admissible(blocks)
            .into_iter()
            .filter(|&c| c + 1 == k || c == k + 1)
            .collect();
        Err(Error::ConjugatePairSplit { k, suggestions })
    }
}

pub(crate) fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalue(s) of the diagonal block starting at `start`.
fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> (Complex64, Option<Complex64>) {
    if size == 1 {
        return (Complex64::new(t[(start, start)], 0.0), None);
    }
    let (a, b, c, d) = (
        t[(start, start)],
        t[(start, start + 1)],
        t[(start + 1, start)],
        t[(start + 1, start + 1)],
    );
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    let im = (-disc).max(0.0).sqrt();
    (Complex64::new(mean, im), Some(Complex64::new(mean, -im)))
}

/// Strict "comes before" relation of the eigenvalue ordering.
fn precedes(a: Complex64, b: Complex64, tol: f64) -> bool {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > tol {
        return ma > mb;
    }
    if (a.re - b.re).abs() > tol {
        return a.re > b.re;
    }
    if (a.im - b.im).abs() > tol {
        return a.im > b.im;
    }
    false
}

/// `T <- G^T T G` on rows/columns `j..j+m`, and `Q <- Q G`.
fn apply_similarity(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, j: usize, g: &DMatrix<f64>) {
    let m = g.nrows();
    let rows = g.transpose() * t.rows(j, m);
    t.rows_mut(j, m).copy_from(&rows);
    let cols = t.columns(j, m) * g;
    t.columns_mut(j, m).copy_from(&cols);
    let qcols = q.columns(j, m) * g;
    q.columns_mut(j, m).copy_from(&qcols);
}

/// Splits a 2x2 diagonal block with real eigenvalues into two 1x1 blocks.
fn split_real_block(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, i: usize) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half = 0.5 * (a - d);
    let root = (half * half + b * c).max(0.0).sqrt();
    let lambda = 0.5 * (a + d) + if half >= 0.0 { root } else { -root };
    // two candidate eigenvectors; keep the better scaled one
    let (x1, y1) = (lambda - d, c);
    let (x2, y2) = (b, lambda - a);
    let (x, y) = if x1.hypot(y1) >= x2.hypot(y2) { (x1, y1) } else { (x2, y2) };
    let norm = x.hypot(y);
    if norm == 0.0 {
        t[(i + 1, i)] = 0.0;
        return;
    }
    let (cs, sn) = (x / norm, y / norm);
    let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    apply_similarity(t, q, i, &g);
    t[(i + 1, i)] = 0.0;
}

/// Swaps adjacent diagonal blocks of sizes `p` (upper) and `s` (lower)
/// starting at row `j`.
fn swap_blocks(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, j: usize, p: usize, s: usize) -> Result<()> {
    let m = p * s;
    // Sylvester equation A11 X - X A22 = A12, column-major vec(X)
    let mut kron = DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for c in 0..s {
        for r in 0..p {
            let row = c * p + r;
            rhs[row] = t[(j + r, j + p + c)];
            for l in 0..p {
                kron[(row, c * p + l)] += t[(j + r, j + l)];
            }
            for l in 0..s {
                kron[(row, l * p + r)] -= t[(j + p + l, j + p + c)];
            }
        }
    }
    let x = kron.lu().solve(&rhs).ok_or(Error::NoConvergence)?;
    let size = p + s;
    let mut basis = DMatrix::<f64>::zeros(size, size);
    for c in 0..s {
        for r in 0..p {
            basis[(r, c)] = x[c * p + r];
        }
        basis[(p + c, c)] = -1.0;
    }
    for r in 0..p {
        basis[(r, s + r)] = 1.0;
    }
    let g = basis.qr().q();
    apply_similarity(t, q, j, &g);
    for r in 0..p {
        for c in 0..s {
            t[(j + s + r, j + c)] = 0.0;
        }
    }
    Ok(())
}

/// Real Schur form with blocks sorted by descending eigenvalue modulus.
pub fn ordered_schur(a: &DMatrix<f64>) -> Result<OrderedSchur> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10)).ok_or(Error::NoConvergence)?;
    let (mut q, mut t) = schur.unpack();

    // identify blocks; split any 2x2 block whose eigenvalues are real
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)].abs();
            let diag = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            let negligible = sub <= f64::EPSILON * if diag > 0.0 { diag } else { scale };
            if !negligible {
                let (_, second) = block_eigenvalues(&t, i, 2);
                let complex = second.map(|z| z.im != 0.0).unwrap_or(false);
                if complex {
                    blocks.push(2);
                    i += 2;
                    continue;
                }
                split_real_block(&mut t, &mut q, i);
            } else {
                t[(i + 1, i)] = 0.0;
            }
        }
        blocks.push(1);
        i += 1;
    }
    for r in 0..n {
        for c in 0..r.saturating_sub(1) {
            t[(r, c)] = 0.0;
        }
    }

    let tol = 1e-12 * scale.max(1.0);
    let mut keys: Vec<Complex64> = {
        let mut start = 0;
        blocks
            .iter()
            .map(|&b| {
                let key = block_eigenvalues(&t, start, b).0;
                start += b;
                key
            })
            .collect()
    };
    // bubble sort of adjacent blocks; at most nb^2 swaps
    loop {
        let mut swapped = false;
        let mut start = 0;
        for b in 0..blocks.len().saturating_sub(1) {
            if precedes(keys[b + 1], keys[b], tol) {
                let (p, s) = (blocks[b], blocks[b + 1]);
                swap_blocks(&mut t, &mut q, start, p, s)?;
                blocks.swap(b, b + 1);
                keys[b] = block_eigenvalues(&t, start, s).0;
                keys[b + 1] = block_eigenvalues(&t, start + s, p).0;
                swapped = true;
            }
            start += blocks[b];
        }
        if !swapped {
            break;
        }
    }

    Ok(OrderedSchur {
        q,
        t,
        block_sizes: blocks,
    })
}

/// Eigenvectors of a quasi-upper-triangular `t` in its own basis, by back
/// substitution in complex arithmetic.
fn quasi_triangular_eigenvectors(t: &DMatrix<f64>, blocks: &[usize]) -> DMatrix<Complex64> {
    let n = t.nrows();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let mut starts = Vec::with_capacity(blocks.len());
    let mut acc = 0;
    for &b in blocks {
        starts.push(acc);
        acc += b;
    }
    let tc = |r: usize, c: usize| Complex64::new(t[(r, c)], 0.0);
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    let mut col = 0;
    for (bi, (&s0, &size)) in starts.iter().zip(blocks).enumerate() {
        let (lambda, _) = block_eigenvalues(t, s0, size);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        if size == 1 {
            y[s0] = Complex64::new(1.0, 0.0);
        } else {
            y[s0] = tc(s0, s0 + 1);
            y[s0 + 1] = lambda - tc(s0, s0);
        }
        let end = s0 + size;
        for bj in (0..bi).rev() {
            let (st, sz) = (starts[bj], blocks[bj]);
            let rhs: Vec<Complex64> = (st..st + sz)
                .map(|r| -(st + sz..end).map(|l| tc(r, l) * y[l]).sum::<Complex64>())
                .collect();
            if sz == 1 {
                let mut denom = tc(st, st) - lambda;
                if denom.norm() < smin {
                    denom = Complex64::new(smin, 0.0);
                }
                y[st] = rhs[0] / denom;
            } else {
                let m11 = tc(st, st) - lambda;
                let m12 = tc(st, st + 1);
                let m21 = tc(st + 1, st);
                let m22 = tc(st + 1, st + 1) - lambda;
                let mut det = m11 * m22 - m12 * m21;
                if det.norm() < smin {
                    det = Complex64::new(smin, 0.0);
                }
                y[st] = (rhs[0] * m22 - m12 * rhs[1]) / det;
                y[st + 1] = (m11 * rhs[1] - m21 * rhs[0]) / det;
            }
        }
        for (r, v) in y.iter().enumerate() {
            out[(r, col)] = *v;
        }
        if size == 2 {
            for (r, v) in y.iter().enumerate() {
                out[(r, col + 1)] = v.conj();
            }
        }
        col += size;
    }
    out
}

/// Modulus-sorted eigendecomposition of a real square matrix.
pub fn eig_sorted(a: &DMatrix<f64>) -> Result<Spectrum> {
    let schur = ordered_schur(a)?;
    let n = a.nrows();
    let eigenvalues = schur.eigenvalues();
    let y = quasi_triangular_eigenvectors(&schur.t, &schur.block_sizes);
    let qc = schur.q.map(|v| Complex64::new(v, 0.0));
    let mut vecs = qc * y;
    for mut column in vecs.column_iter_mut() {
        let norm = column.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            column /= Complex64::new(norm, 0.0);
        }
    }
    debug_assert_eq!(vecs.ncols(), n);
    Ok(Spectrum {
        moduli: eigenvalues.iter().map(|z| z.norm()).collect(),
        eigenvalues,
        right_eigenvectors: vecs,
        block_sizes: schur.block_sizes,
    })
}

/// Orthonormal real basis of the invariant subspace belonging to the `k`
/// largest-modulus eigenvalues, plus their moduli.
pub fn schur_top_k(a: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = ensure_square(a)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    let schur = ordered_schur(a)?;
    check_boundary(&schur.block_sizes, k)?;
    let moduli = schur.eigenvalues().iter().take(k).map(|z| z.norm()).collect();
    Ok((schur.q.columns(0, k).clone_owned(), moduli))
}

fn svd(m: &DMatrix<f64>) -> SVD<f64, Dyn, Dyn> {
    SVD::new(m.clone(), true, true)
}

fn rank_tolerance(s_max: f64, rows: usize, cols: usize) -> f64 {
    RANK_RTOL * s_max * rows.max(cols) as f64
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let Some(&s_max) = s.first() else { return 0 };
    if s_max == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(s_max, m.nrows(), m.ncols());
    s.iter().filter(|&&v| v > tol).count()
}

/// Moore-Penrose pseudoinverse via the SVD, with the numerical-rank rule.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(cols, rows);
    }
    let dec = svd(m);
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let s_max = dec.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = rank_tolerance(s_max, rows, cols);
    let mut out = DMatrix::<f64>::zeros(cols, rows);
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            out += (v_t.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    out
}

fn is_symmetric(m: &DMatrix<f64>, rtol: f64) -> bool {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    (m - m.transpose()).iter().all(|v| v.abs() <= rtol * scale)
}

/// Product of the moduli of the nonzero eigenvalues.
///
/// Returns 0 for a matrix whose eigenvalues are all numerically zero, so that
/// `ln pdet` reports the degenerate case as `-inf`.
pub fn pdet(m: &DMatrix<f64>) -> Result<f64> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    if n == 0 {
        return Ok(1.0);
    }
    let moduli: Vec<f64> = if is_symmetric(m, 1e-12) {
        let sym = 0.5 * (m + m.transpose());
        SymmetricEigen::new(sym).eigenvalues.iter().map(|v| v.abs()).collect()
    } else {
        eig_sorted(m)?.moduli
    };
    let top = moduli.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top == 0.0 {
        return Ok(0.0);
    }
    let tol = rank_tolerance(top, n, n);
    Ok(moduli.iter().filter(|&&v| v > tol).product())
}

/// `ln |det m|` via LU; `-inf` for an exactly singular pivot.
pub fn log_abs_det(m: &DMatrix<f64>) -> Result<f64> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(0.0);
    }
    let lu = m.clone().lu();
    let u = lu.u();
    Ok((0..n).map(|i| u[(i, i)].abs().ln()).sum())
}

/// Cholesky factorization that also enforces symmetry (to 1e-10 relative)
/// and a pivot floor of `1e-12 * trace`.
pub fn checked_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    if n == 0 {
        return Err(Error::NotPositiveDefinite("empty matrix".into()));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::NotPositiveDefinite("not symmetric".into()));
    }
    let sym = 0.5 * (m + m.transpose());
    let trace = sym.trace();
    if trace <= 0.0 {
        return Err(Error::NotPositiveDefinite("non-positive trace".into()));
    }
    let chol = sym
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("square-root factorization failed".into()))?;
    let floor = 1e-12 * trace;
    let l = chol.l_dirty();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= floor) {
        return Err(Error::NotPositiveDefinite("pivot below 1e-12 * trace".into()));
    }
    Ok(chol)
}

/// `ln det` of a symmetric positive-definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = checked_cholesky(m)?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = 0.5 * (m + m.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Principal SPD square root raised to `power` (e.g. `-0.5`).
pub fn spd_power(m: &DMatrix<f64>, power: f64) -> Result<DMatrix<f64>> {
    checked_cholesky(m)?;
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite("non-positive eigenvalue".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.powf(power)));
    let v = &eig.eigenvectors;
    Ok(v * d * v.transpose())
}

/// Checks positive semidefiniteness with tolerance `1e-12 * max|m|`.
pub fn ensure_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if m.is_empty() {
        return Ok(());
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::NotPositiveSemidefinite(format!("{what} is not symmetric")));
    }
    let scale = max_abs(m);
    let min = symmetric_eigenvalues(m).last().copied().unwrap_or(0.0);
    if min < -1e-12 * scale.max(1.0) {
        return Err(Error::NotPositiveSemidefinite(format!(
            "{what} has eigenvalue {min:e}"
        )));
    }
    Ok(())
}
