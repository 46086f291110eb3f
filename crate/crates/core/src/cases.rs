//! The three case studies (random walk, heat dissipation, spiral rotation)
//! and a runner that writes their result files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::emergence::{delta_j, delta_j_max, delta_j_orthogonal_bound, pearson, EmergenceReport};
use crate::error::{Error, Result};
use crate::optimizer::optimal_w;
use crate::random;
use crate::simulation::{macro_pair, simulate_micro, Trajectory};
use crate::spectral::{self, Complex64};
use crate::specfile::SystemSpecFile;
use crate::system::{reduce, CoarseMap, LinearSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    RandomWalk,
    Heat,
    Spiral,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpiralParams {
    pub u0: [f64; 3],
    pub theta: f64,
    pub psi: [f64; 3],
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseConfig {
    pub name: CaseName,
    pub system: LinearSystem,
    pub eta: f64,
    pub default_k: usize,
    pub x0: DVector<f64>,
    pub steps: usize,
    pub spiral: Option<SpiralParams>,
    /// Published coarse map, where the case has one.
    pub published_w: Option<CoarseMap>,
}

pub fn heat_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[0.6, 0.2, 0.0, 0.0, 0.2, 0.7, 0.1, 0.0, 0.0, 0.1, 0.4, 0.1, 0.0, 0.0, 0.1, 0.3],
    )
}

pub fn random_walk_sigma() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.4782, -0.1967, -0.0287, 0.0419, //
            -0.1967, 0.6711, 0.0233, -0.1067, //
            -0.0287, 0.0233, 0.3154, 0.0738, //
            0.0419, -0.1067, 0.0738, 0.4211,
        ],
    )
}

pub const RANDOM_WALK_ETA: f64 = 0.3466;
pub const RANDOM_WALK_W: [f64; 4] = [-0.0819, 0.1432, -0.8421, 0.5135];

pub fn build_random_walk() -> CaseConfig {
    let system = LinearSystem::new(DMatrix::identity(4, 4), random_walk_sigma()).expect("fixture is valid");
    CaseConfig {
        name: CaseName::RandomWalk,
        system,
        eta: RANDOM_WALK_ETA,
        default_k: 1,
        x0: DVector::zeros(4),
        steps: 100,
        spiral: None,
        published_w: Some(CoarseMap::new(DMatrix::from_row_slice(1, 4, &RANDOM_WALK_W)).expect("fixture is valid")),
    }
}

pub fn build_heat() -> CaseConfig {
    CaseConfig {
        name: CaseName::Heat,
        system: LinearSystem::isotropic(heat_matrix(), 0.01).expect("fixture is valid"),
        eta: 0.0,
        default_k: 1,
        x0: DVector::from_element(4, 10.0),
        steps: 50,
        spiral: None,
        published_w: None,
    }
}

/// Rotation by `theta` about the unit vector along `u0` (right-hand rule).
pub fn rotation_matrix(u0: &Vector3<f64>, theta: f64) -> Result<Matrix3<f64>> {
    let norm = u0.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("rotation axis must be nonzero".into()));
    }
    let u = u0 / norm;
    let (s, c) = theta.sin_cos();
    let cross = Matrix3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0);
    Ok(Matrix3::identity() * c + cross * s + u * u.transpose() * (1.0 - c))
}

/// Admissible `k` with the largest `delta_j_max` (smallest on ties).
pub fn best_k(sys: &LinearSystem, eta: f64) -> Result<usize> {
    let spec = spectral::eig_sorted(sys.a())?;
    let mut best: Option<(usize, f64)> = None;
    for k in spec.admissible_ks() {
        let v = delta_j_max(sys, k, eta)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    Ok(best.expect("k = n is always admissible").0)
}

/// `A = R(u0, theta) diag(psi)`, `Sigma = sigma^2 I`, `eta = 0`.
pub fn build_spiral(u0: [f64; 3], theta: f64, psi: [f64; 3], sigma: f64) -> Result<CaseConfig> {
    if psi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("psi entries must be positive".into()));
    }
    let r = rotation_matrix(&Vector3::from(u0), theta)?;
    let a = r * Matrix3::from_diagonal(&Vector3::from(psi));
    let a = DMatrix::from_fn(3, 3, |i, j| a[(i, j)]);
    let system = LinearSystem::isotropic(a, sigma)?;
    let default_k = best_k(&system, 0.0)?;
    Ok(CaseConfig {
        name: CaseName::Spiral,
        system,
        eta: 0.0,
        default_k,
        x0: DVector::from_element(3, 1.0),
        steps: 100,
        spiral: Some(SpiralParams { u0, theta, psi, sigma }),
        published_w: None,
    })
}

pub const SPIRAL_AXIS: [f64; 3] = [0.0, 0.1, 1.0];
pub const SPIRAL_THETA: f64 = PI / 16.0;

/// Contraction towards the rotation axis.
pub fn spiral_scenario_1() -> CaseConfig {
    let mut cfg = build_spiral(SPIRAL_AXIS, SPIRAL_THETA, [0.94, 0.94, 0.99], 0.01).expect("fixture is valid");
    cfg.x0 = DVector::from_vec(vec![1.0, 1.0, 3.0]);
    cfg
}

/// Collapse onto the plane perpendicular to the axis.
pub fn spiral_scenario_2() -> CaseConfig {
    build_spiral(SPIRAL_AXIS, SPIRAL_THETA, [0.99, 0.97, 0.2], 0.01).expect("fixture is valid")
}

/// Builtin case by CLI name.
pub fn builtin(name: &str) -> Option<CaseConfig> {
    match name {
        "heat" => Some(build_heat()),
        "random-walk" | "randomwalk" | "random_walk" => Some(build_random_walk()),
        "spiral" | "spiral-1" => Some(spiral_scenario_1()),
        "spiral-2" => Some(spiral_scenario_2()),
        _ => None,
    }
}

pub fn config_for(name: CaseName) -> CaseConfig {
    match name {
        CaseName::RandomWalk => build_random_walk(),
        CaseName::Heat => build_heat(),
        CaseName::Spiral => spiral_scenario_1(),
    }
}

/// Write `contents` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepKRow {
    pub k: usize,
    pub admissible: bool,
    /// Empty when `k` splits a conjugate pair.
    pub delta_j_max: Option<f64>,
    pub delta_j_orthonormal_bound: f64,
}

pub fn sweep_k(sys: &LinearSystem, eta: f64) -> Result<Vec<SweepKRow>> {
    let spec = spectral::eig_sorted(sys.a())?;
    (1..=sys.dim())
        .map(|k| {
            let admissible = spec.is_block_boundary(k);
            let dj = if admissible { Some(delta_j_max(sys, k, eta)?) } else { None };
            Ok(SweepKRow {
                k,
                admissible,
                delta_j_max: dj,
                delta_j_orthonormal_bound: delta_j_orthogonal_bound(sys, k)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepThetaRow {
    pub theta: f64,
    pub delta_j_max: Option<f64>,
}

/// `delta_j_max` at fixed `k` for `n_points` angles on `[0, 2 pi)`, other
/// spiral parameters held. Angles where `k` splits a pair are left empty.
pub fn sweep_theta(params: &SpiralParams, k: usize, eta: f64, n_points: usize) -> Result<Vec<SweepThetaRow>> {
    (0..n_points)
        .into_par_iter()
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / n_points as f64;
            let cfg = build_spiral(params.u0, theta, params.psi, params.sigma)?;
            let v = match delta_j_max(&cfg.system, k, eta) {
                Ok(v) => Some(v),
                Err(Error::ConjugatePairSplit { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepThetaRow { theta, delta_j_max: v })
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn matrix_csv(m: &DMatrix<f64>, prefix: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Observed and macro-iterated trajectories side by side:
/// `t,y1..yk,yhat1..yhatk`.
fn macro_csv(y: &Trajectory, y_hat: &Trajectory) -> Result<Vec<u8>> {
    let k = y.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("y{i}")));
    header.extend((1..=k).map(|i| format!("yhat{i}")));
    w.write_record(&header)?;
    for t in 0..y.states.nrows() {
        let mut rec = vec![(y.t0 + t as i64).to_string()];
        rec.extend(y.states.row(t).iter().map(|v| v.to_string()));
        rec.extend(y_hat.states.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Zero-mean Gaussian densities on a grid: each micro marginal and the
/// one-dimensional macro noise `W eps`.
fn noise_density_csv(sys: &LinearSystem, w: &CoarseMap) -> Result<Vec<u8>> {
    let n = sys.dim();
    let macro_var = (w.w() * sys.sigma() * w.w().transpose())[(0, 0)];
    let mut w_csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string()];
    header.extend((1..=n).map(|i| format!("micro{i}")));
    header.push("macro".into());
    w_csv.write_record(&header)?;
    let density = |x: f64, var: f64| (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt();
    for i in 0..=120 {
        let x = -3.0 + 6.0 * i as f64 / 120.0;
        let mut rec = vec![x.to_string()];
        rec.extend((0..n).map(|j| density(x, sys.sigma()[(j, j)]).to_string()));
        rec.push(density(x, macro_var).to_string());
        w_csv.write_record(&rec)?;
    }
    w_csv.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

/// Contents of `emergence.json`.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub case: CaseName,
    #[serde(flatten)]
    pub report: EmergenceReport,
    pub delta_j_max: f64,
    pub entropy_gap: f64,
    pub eta: f64,
    pub w: Vec<Vec<f64>>,
    pub eigenvalues: Vec<ComplexValue>,
    pub eigenvalue_moduli: Vec<f64>,
    pub macro_eigenvalues: Vec<ComplexValue>,
    pub steps: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub published_w_report: Option<EmergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral: Option<SpiralParams>,
    pub units: BTreeMap<&'static str, &'static str>,
}

fn units() -> BTreeMap<&'static str, &'static str> {
    [
        ("j_micro", "nats"),
        ("j_macro", "nats"),
        ("delta_j", "nats"),
        ("delta_j1", "nats"),
        ("delta_j2", "nats"),
        ("delta_j_max", "nats"),
        ("entropy_gap", "nats"),
        ("eta", "nats"),
        ("constraint_eta", "nats"),
        ("L", "state units"),
        ("w", "dimensionless"),
        ("eigenvalues", "dimensionless"),
        ("eigenvalue_moduli", "dimensionless"),
        ("macro_eigenvalues", "dimensionless"),
        ("k", "count"),
        ("n", "count"),
        ("steps", "count"),
        ("seed", "dimensionless"),
        ("theta", "radians"),
        ("sigma", "state units"),
        ("psi", "dimensionless"),
        ("u0", "dimensionless"),
    ]
    .into_iter()
    .collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Run a case and write its files into `out_dir`. `k` defaults to the
/// case's own choice, `steps` to the case's trajectory length.
pub fn run_case(cfg: &CaseConfig, k: Option<usize>, steps: Option<usize>, seed: u64, out_dir: &Path) -> Result<CaseReport> {
    let sys = &cfg.system;
    let k = k.unwrap_or(cfg.default_k);
    let steps = steps.unwrap_or(cfg.steps);
    let opt = optimal_w(sys, k, cfg.eta)?;
    let report = delta_j(sys, &opt.w)?.with_constraint(sys, &opt.w, cfg.eta)?;
    let spec = spectral::eig_sorted(sys.a())?;
    let macro_spec = spectral::eig_sorted(&reduce(sys, &opt.w)?.a_m)?;

    let published_w_report = match &cfg.published_w {
        Some(w) => Some(delta_j(sys, w)?.with_constraint(sys, w, cfg.eta)?),
        None => None,
    };

    let mut spec_file = SystemSpecFile::from_system(sys).with_map(&opt.w);
    spec_file.eta = Some(cfg.eta);
    spec_file.seed = Some(seed);
    write_atomic(out_dir, "system.json", spec_file.to_json()?.as_bytes())?;
    write_atomic(out_dir, "w_optimal.csv", &matrix_csv(opt.w.w(), "w")?)?;

    let micro = simulate_micro(sys, &cfg.x0, steps, seed)?;
    let mut buf = Vec::new();
    micro.write_csv(&mut buf, "x")?;
    write_atomic(out_dir, "trajectory_micro.csv", &buf)?;
    let (y, y_hat) = macro_pair(sys, &opt.w, &cfg.x0, steps, seed)?;
    write_atomic(out_dir, "trajectory_macro.csv", &macro_csv(&y, &y_hat)?)?;

    write_atomic(out_dir, "sweep_k.csv", &csv_bytes(&sweep_k(sys, cfg.eta)?)?)?;
    if let Some(params) = &cfg.spiral {
        write_atomic(out_dir, "sweep_theta.csv", &csv_bytes(&sweep_theta(params, cfg.default_k, cfg.eta, 64)?)?)?;
    }
    if let (CaseName::RandomWalk, Some(w)) = (cfg.name, &cfg.published_w) {
        write_atomic(out_dir, "noise_density.csv", &noise_density_csv(sys, w)?)?;
    }

    let case = CaseReport {
        case: cfg.name,
        entropy_gap: report.delta_j2,
        report,
        delta_j_max: opt.analytic_bound,
        eta: cfg.eta,
        w: rows_of(opt.w.w()),
        eigenvalues: spec.eigenvalues.iter().map(|&c| c.into()).collect(),
        eigenvalue_moduli: spec.moduli.clone(),
        macro_eigenvalues: macro_spec.eigenvalues.iter().map(|&c| c.into()).collect(),
        steps,
        seed,
        published_w_report,
        spiral: cfg.spiral.clone(),
        units: units(),
    };
    write_atomic(out_dir, "emergence.json", serde_json::to_string_pretty(&case)?.as_bytes())?;
    Ok(case)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            r[p] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSpreadResult {
    pub kappa_std: Vec<f64>,
    pub best_delta_j: Vec<f64>,
    pub spearman: f64,
}

/// Random-walk noise-spread experiment. Each draw builds
/// `Sigma = V diag(kappa) V^T` with log-normal `kappa` of random spread,
/// normalized to unit determinant, and records the best `Delta J` over
/// `maps` random orthonormal `k x 4` maps (`A = I`).
pub fn noise_spread_experiment(draws: usize, maps: usize, k: usize, seed: u64) -> Result<NoiseSpreadResult> {
    let n = 4;
    let results: Vec<(f64, f64)> = (0..draws as u64)
        .into_par_iter()
        .map(|d| -> Result<(f64, f64)> {
            let mut rng = random::stream_rng(seed, d);
            let spread: f64 = 1.5 * rand::Rng::random::<f64>(&mut rng);
            let z = random::gaussian_matrix(n, 1, &mut rng);
            let log_k: Vec<f64> = z.iter().map(|v| spread * v).collect();
            let mean = log_k.iter().sum::<f64>() / n as f64;
            let kappa: Vec<f64> = log_k.iter().map(|v| (v - mean).exp()).collect();
            let v = random::random_orthogonal(n, &mut rng);
            let s = &v * DMatrix::from_diagonal(&DVector::from_column_slice(&kappa)) * v.transpose();
            let sys = LinearSystem::new(DMatrix::identity(n, n), 0.5 * (&s + s.transpose()))?;
            let mut best = f64::NEG_INFINITY;
            for _ in 0..maps {
                let cm = CoarseMap::new(random::random_orthonormal_rows(k, n, &mut rng))?;
                best = best.max(delta_j(&sys, &cm)?.delta_j);
            }
            let km = kappa.iter().sum::<f64>() / n as f64;
            let std = (kappa.iter().map(|x| (x - km).powi(2)).sum::<f64>() / n as f64).sqrt();
            Ok((std, best))
        })
        .collect::<Result<_>>()?;
    let (kappa_std, best_delta_j): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    let rho = spearman(&kappa_std, &best_delta_j);
    Ok(NoiseSpreadResult {
        kappa_std,
        best_delta_j,
        spearman: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_fixture() {
        let cfg = build_random_walk();
        assert!(spectral::symmetric_eigenvalues(cfg.system.sigma()).iter().all(|&e| e > 0.0));
        let r = delta_j(&cfg.system, cfg.published_w.as_ref().unwrap()).unwrap();
        assert!((r.delta_j2 - 0.2439).abs() < 1e-2);
        assert!(r.delta_j1.abs() < 1e-12);
        for k in 1..=4 {
            assert_eq!(delta_j_max(&cfg.system, k, cfg.eta).unwrap(), 0.3466);
        }
    }

    #[test]
    fn heat_fixture() {
        let cfg = build_heat();
        let spec = spectral::eig_sorted(cfg.system.a()).unwrap();
        for (m, want) in spec.moduli.iter().zip([0.8702, 0.5, 0.4, 0.2298]) {
            assert!((m - want).abs() < 1e-4, "{m}");
        }
        assert!((cfg.system.a().trace() - 2.0).abs() < 1e-15);
        let sum: f64 = spec.eigenvalues.iter().map(|c| c.re).sum();
        assert!((sum - 2.0).abs() < 1e-12);
        let rows = sweep_k(&cfg.system, 0.0).unwrap();
        let k1 = rows[0].delta_j_max.unwrap();
        assert!((k1 - 0.6657).abs() < 1e-3);
        assert!(rows[1..3].iter().all(|r| r.delta_j_max.unwrap() < k1));
    }

    #[test]
    fn rotation_properties() {
        assert_eq!(rotation_matrix(&Vector3::new(0.0, 0.1, 1.0), 0.0).unwrap(), Matrix3::identity());
        let r = rotation_matrix(&Vector3::new(0.3, -1.0, 2.0), 1.1).unwrap();
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-10);
        let u = Vector3::new(0.3, -1.0, 2.0).normalize();
        assert!((r * u - u).amax() < 1e-12);
        assert!(rotation_matrix(&Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn spiral_scenarios() {
        let s1 = spiral_scenario_1();
        assert_eq!(s1.default_k, 1);
        let v1 = delta_j_max(&s1.system, 1, 0.0).unwrap();
        assert!((v1 - 0.0341).abs() < 1e-3, "{v1}");
        let s2 = spiral_scenario_2();
        assert_eq!(s2.default_k, 2);
        let v2 = delta_j_max(&s2.system, 2, 0.0).unwrap();
        assert!((v2 - 0.5295).abs() < 1e-3, "{v2}");
        let det = s2.system.a().determinant();
        assert!((det - 0.99 * 0.97 * 0.2).abs() < 1e-12);
        let spec = spectral::eig_sorted(s2.system.a()).unwrap();
        let prod: f64 = spec.moduli.iter().product();
        assert!((prod - det).abs() < 1e-12);
        assert!((spec.moduli[2] - 0.2001).abs() < 1e-3);
        assert!((spec.eigenvalues[0].re - 0.9612).abs() < 1e-3);
        assert!((spec.eigenvalues[0].im.abs() - 0.1900).abs() < 1e-3);
    }

    #[test]
    fn theta_sweep_shape() {
        let s1 = spiral_scenario_1();
        let rows = sweep_theta(s1.spiral.as_ref().unwrap(), 1, 0.0, 64).unwrap();
        assert_eq!(rows.len(), 64);
        let at_pi = rows[32].delta_j_max.unwrap();
        assert!((rows[32].theta - PI).abs() < 1e-12);
        assert!(rows[31].delta_j_max.unwrap() >= at_pi && rows[33].delta_j_max.unwrap() >= at_pi);
        assert!(rows[0].delta_j_max.unwrap() > at_pi);
        assert!(rows[63].delta_j_max.unwrap() > at_pi);
    }

    #[test]
    fn random_walk_orthonormal_sweep_decreases() {
        let rows = sweep_k(&build_random_walk().system, RANDOM_WALK_ETA).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].delta_j_orthonormal_bound <= pair[0].delta_j_orthonormal_bound + 1e-12);
        }
    }

    #[test]
    fn noise_spread_is_positively_correlated() {
        let r = noise_spread_experiment(60, 100, 1, 3).unwrap();
        assert!(r.spearman > 0.0, "{}", r.spearman);
    }

    #[test]
    fn spearman_handles_ties() {
        assert!((spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn heat_run_writes_files_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_case(&build_heat(), None, None, 0, dir.path()).unwrap();
        assert!((rep.report.delta_j - 0.6656).abs() < 1e-3);
        assert!((rep.macro_eigenvalues[0].re - 0.8702).abs() < 1e-3);
        for f in ["system.json", "w_optimal.csv", "emergence.json", "trajectory_micro.csv", "trajectory_macro.csv", "sweep_k.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let spec = SystemSpecFile::read(&dir.path().join("system.json")).unwrap();
        let again = delta_j(&spec.system().unwrap(), &spec.coarse_map().unwrap().unwrap()).unwrap();
        assert_eq!(again.delta_j, rep.report.delta_j);
    }

    #[test]
    fn spiral_and_random_walk_runs() {
        let dir = tempfile::tempdir().unwrap();
        run_case(&spiral_scenario_1(), None, Some(20), 1, dir.path()).unwrap();
        assert!(dir.path().join("sweep_theta.csv").exists());
        let dir = tempfile::tempdir().unwrap();
        let rep = run_case(&build_random_walk(), None, Some(20), 1, dir.path()).unwrap();
        assert!((rep.report.delta_j - RANDOM_WALK_ETA).abs() < 1e-9);
        assert!(dir.path().join("noise_density.csv").exists());
    }
}
