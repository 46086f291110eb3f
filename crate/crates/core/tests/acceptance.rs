//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits non-zero if any
//! criterion fails.

use std::f64::consts::{E, PI};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use ce_lab::cases::{self, build_heat, build_random_walk, spiral_scenario_1, spiral_scenario_2, RANDOM_WALK_ETA};
use ce_lab::emergence::{
    cooperation_experiment, degeneracy_bound, delta_j, delta_j_at, delta_j_max, delta_j_orthogonal_bound, delta_j_shared_eigs,
    sigma_det_bounds,
};
use ce_lab::loss::{argmin_sd_check, sampled_loss_report, SdMode};
use ce_lab::mi::{convergence_sweep, MiEstimator, DEFAULT_NEIGHBORS};
use ce_lab::optimizer::{circle_solution_set, optimal_w, random_search, CircleSolutionSet};
use ce_lab::random::{gaussian_matrix, random_orthogonal, random_orthonormal_rows, random_spd, stream_rng};
use ce_lab::spectral::eig_sorted;
use ce_lab::system::{determinant_ratio, entropy_gap, reduce, CoarseMap, LinearSystem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let el = t.elapsed();
    o.detail = format!("{} [{:.2?}, limit {:?}]", o.detail, el, limit);
    o.pass &= el < limit;
    o
}

/// General (non-normal) random system of size n.
fn random_system(n: usize, rng: &mut impl Rng) -> LinearSystem {
    let a = gaussian_matrix(n, n, rng) / (n as f64).sqrt();
    LinearSystem::new(a, random_spd(n, 0.1, rng)).unwrap()
}

/// Symmetric random system: `A = V diag(lambda) V^T`.
fn random_symmetric_system(n: usize, rng: &mut impl Rng) -> LinearSystem {
    let v = random_orthogonal(n, rng);
    let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let a = &v * DMatrix::from_diagonal(&DVector::from_vec(lambda)) * v.transpose();
    LinearSystem::new(0.5 * (&a + a.transpose()), random_spd(n, 0.1, rng)).unwrap()
}

fn c1_heat() -> Outcome {
    timed(Duration::from_secs(1), || {
        let dir = tempfile::tempdir().unwrap();
        cases::run_case(&build_heat(), Some(1), None, 0, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("emergence.json")).unwrap()).unwrap();
        let dj = v["delta_j"].as_f64().unwrap();
        let w: Vec<f64> = v["w"][0].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let sign = w[0].signum();
        let want_w = [0.5856, 0.7910, 0.1748, 0.03065];
        let w_ok = w.iter().zip(want_w).all(|(a, b)| within(sign * a, b, 1e-3));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let am = v["macro_eigenvalues"][0]["re"].as_f64().unwrap();
        let moduli: Vec<f64> = v["eigenvalue_moduli"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let mod_ok = moduli.iter().zip([0.8702, 0.5, 0.4, 0.2298]).all(|(a, b)| within(*a, b, 1e-4));
        outcome(
            within(dj, 0.6656, 1e-3) && w_ok && within(norm, 1.0, 1e-3) && within(am, 0.8702, 1e-3) && mod_ok,
            format!("delta_j={dj:.5} W={w:.5?} |W|={norm:.6} A_M={am:.5} moduli={moduli:.5?}"),
        )
    })
}

fn c2_random_walk() -> Outcome {
    timed(Duration::from_secs(1), || {
        let cfg = build_random_walk();
        let w = cfg.published_w.as_ref().unwrap();
        let ratio = determinant_ratio(&cfg.system, w).unwrap();
        let dj2 = delta_j(&cfg.system, w).unwrap().delta_j2;
        let maxes: Vec<f64> = (1..=4).map(|k| delta_j_max(&cfg.system, k, RANDOM_WALK_ETA).unwrap()).collect();
        outcome(
            within(ratio, 0.614, 0.01) && within(dj2, 0.2439, 1e-2) && maxes.iter().all(|&m| m == RANDOM_WALK_ETA),
            format!("det ratio={ratio:.5} delta_j2={dj2:.5} delta_j*(k=1..4)={maxes:?}"),
        )
    })
}

fn c3_spiral() -> Outcome {
    timed(Duration::from_secs(5), || {
        let s1 = spiral_scenario_1();
        let s2 = spiral_scenario_2();
        let v1 = delta_j_max(&s1.system, 1, 0.0).unwrap();
        let v2 = delta_j_max(&s2.system, 2, 0.0).unwrap();
        let rows = cases::sweep_theta(s1.spiral.as_ref().unwrap(), 1, 0.0, 64).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.delta_j_max.unwrap()).collect();
        let mid = 32;
        let local_min = (rows[mid].theta - PI).abs() < 1e-12 && y[mid] <= y[mid - 1] && y[mid] <= y[mid + 1];
        let edges = y[0] > y[mid] && y[63] > y[mid];
        outcome(
            within(v1, 0.0341, 1e-3) && within(v2, 0.5295, 1e-3) && local_min && edges,
            format!(
                "s1 k=1: {v1:.5}, s2 k=2: {v2:.5}; sweep at 0/pi/2pi-: {:.5}/{:.5}/{:.5}, local min at pi: {local_min}",
                y[0], y[mid], y[63]
            ),
        )
    })
}

fn c4_mi() -> Outcome {
    timed(Duration::from_secs(300), || {
        let sys = build_heat().system;
        let w = optimal_w(&sys, 1, 0.0).unwrap().w;
        let seeds = [0, 1, 2, 3, 4];
        let rows = convergence_sweep(&sys, &w, &[1_000, 100_000], 2.0, &seeds, DEFAULT_NEIGHBORS, MiEstimator::ResidualEntropy).unwrap();
        let (e_small, e_large) = (rows[0].median_abs_error(), rows[1].median_abs_error());
        outcome(
            e_large < 0.05 && e_large < e_small,
            format!("median |dI-dJ|: 1e3 -> {e_small:.4}, 1e5 -> {e_large:.4} (dJ={:.4})", rows[0].delta_j),
        )
    })
}

#[derive(Default)]
struct BoundStats {
    det_viol: usize,
    det_worst: f64,
    sandwich_viol: usize,
    search_viol: usize,
    search_worst: f64,
    search_runs: usize,
    ortho_viol: usize,
    ortho_worst: f64,
}

fn bound_suite(symmetric: bool, seed: u64) -> BoundStats {
    let mut st = BoundStats::default();
    for i in 0..1000u64 {
        let mut rng = stream_rng(seed, i);
        let n = rng.random_range(2..=5);
        let sys = if symmetric { random_symmetric_system(n, &mut rng) } else { random_system(n, &mut rng) };
        let k = rng.random_range(1..=n);
        let eta = rng.random_range(0.0..1.0);

        let Ok(w) = CoarseMap::new(gaussian_matrix(k, n, &mut rng)) else { continue };
        let det = reduce(&sys, &w).unwrap().a_m.determinant().abs();
        let bound = degeneracy_bound(sys.a(), k).unwrap();
        if det > bound + 1e-9 {
            st.det_viol += 1;
            st.det_worst = st.det_worst.max(det - bound);
        }

        let (lo, hi) = sigma_det_bounds(sys.sigma(), &w).unwrap();
        let sm = w.w() * sys.sigma() * w.w().transpose();
        let val = sm.determinant().powf(0.5 / k as f64);
        if val < lo * (1.0 - 1e-9) || val > hi * (1.0 + 1e-9) {
            st.sandwich_viol += 1;
        }

        if let Ok(star) = delta_j_max(&sys, k, eta) {
            st.search_runs += 1;
            let found = random_search(&sys, k, eta, 50, i).unwrap().achieved_delta_j;
            if found > star + 1e-8 {
                st.search_viol += 1;
                st.search_worst = st.search_worst.max(found - star);
            }
        }

        let q = CoarseMap::new(random_orthonormal_rows(k, n, &mut rng)).unwrap();
        let dj = delta_j(&sys, &q).unwrap().delta_j;
        let ob = delta_j_orthogonal_bound(&sys, k).unwrap();
        if dj > ob + 1e-6 {
            st.ortho_viol += 1;
            st.ortho_worst = st.ortho_worst.max(dj - ob);
        }
    }
    st
}

fn describe(st: &BoundStats) -> String {
    format!(
        "det>bound: {} (worst +{:.3e}); sandwich: {}; search>dJ*: {}/{} (worst +{:.3e}); orthonormal>bound: {} (worst +{:.3e})",
        st.det_viol, st.det_worst, st.sandwich_viol, st.search_viol, st.search_runs, st.search_worst, st.ortho_viol, st.ortho_worst
    )
}

fn ok(st: &BoundStats) -> bool {
    st.det_viol == 0 && st.sandwich_viol == 0 && st.search_viol == 0 && st.ortho_viol == 0
}

fn c5_bounds() -> Outcome {
    timed(Duration::from_secs(120), || {
        let st = bound_suite(false, 5);
        outcome(ok(&st), format!("1000 general systems: {}", describe(&st)))
    })
}

fn c5b_bounds_symmetric() -> Outcome {
    let st = bound_suite(true, 55);
    outcome(ok(&st), format!("1000 symmetric systems: {}", describe(&st)))
}

fn c6_attainment() -> Outcome {
    let mut worst_dj: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut done = 0;
    let mut i = 0u64;
    while done < 100 {
        let mut rng = stream_rng(6, i);
        i += 1;
        let n = rng.random_range(2..=6);
        let sys = random_system(n, &mut rng);
        let spec = eig_sorted(sys.a()).unwrap();
        let m = &spec.moduli;
        let ks: Vec<usize> = spec
            .admissible_ks()
            .into_iter()
            .filter(|&k| k == n || m[k - 1] - m[k] >= 0.05 * m[0])
            .collect();
        if ks.is_empty() || m[n - 1] < 1e-3 {
            continue;
        }
        let k = ks[rng.random_range(0..ks.len())];
        let eta = rng.random_range(0.0..1.0);
        let opt = optimal_w(&sys, k, eta).unwrap();
        let dj = delta_j(&sys, &opt.w).unwrap().delta_j;
        worst_dj = worst_dj.max((dj - delta_j_max(&sys, k, eta).unwrap()).abs());
        worst_gap = worst_gap.max((entropy_gap(&sys, &opt.w).unwrap() - eta).abs());
        done += 1;
    }
    outcome(
        worst_dj <= 1e-8 && worst_gap <= 1e-9,
        format!("100 systems: max |dJ(W*) - dJ*| = {worst_dj:.2e}, max |gap - eta| = {worst_gap:.2e}"),
    )
}

/// `J(L)` straight from determinants.
fn j_direct(a: &DMatrix<f64>, sigma: &DMatrix<f64>, l: f64) -> f64 {
    let n = a.nrows() as f64;
    a.determinant().abs().ln() / n + l.ln() - 0.5 * (2.0 * PI * E).ln() - sigma.determinant().ln() / (2.0 * n)
}

fn c7_l_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = stream_rng(7, i);
        let n = rng.random_range(2..=5);
        let sys = random_system(n, &mut rng);
        let k = rng.random_range(1..=n);
        let w = CoarseMap::new(gaussian_matrix(k, n, &mut rng)).unwrap();
        let m = reduce(&sys, &w).unwrap();
        for l in [1.0, 10.0, 1000.0] {
            let formula = delta_j_at(&sys, &w, l).unwrap().delta_j;
            let diff = j_direct(&m.a_m, &m.sigma_m, l) - j_direct(sys.a(), sys.sigma(), l);
            worst = worst.max((formula - diff).abs());
        }
    }
    outcome(worst <= 1e-9, format!("100 instances x L in {{1,10,1000}}: max deviation {worst:.2e}"))
}

fn c8_circle() -> Outcome {
    let mut rng = stream_rng(8, 0);
    let v = random_orthogonal(3, &mut rng) + DMatrix::<f64>::identity(3, 3) * 0.3;
    let a = &v * DMatrix::from_diagonal(&DVector::from_vec(vec![1.1, -0.8, 0.25])) * v.clone().try_inverse().unwrap();
    let sigma = 0.3;
    let eta = 0.2;
    let sys = LinearSystem::isotropic(a, sigma).unwrap();
    let v3 = Vector3::new(v[(0, 2)], v[(1, 2)], v[(2, 2)]);
    let w2 = v3.cross(&Vector3::new(0.0, 1.0, 0.0)).normalize() * 0.8;
    let c = circle_solution_set(&v3, &w2, sigma, eta).unwrap();
    let best = delta_j_max(&sys, 2, eta).unwrap();
    let vhat = v3.normalize();
    let (mut dj_err, mut plane_err, mut sphere_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for t in CircleSolutionSet::sample_angles(32) {
        let (w1, w2t) = (c.w1(t), c.w2(t));
        dj_err = dj_err.max((delta_j(&sys, &c.map(t).unwrap()).unwrap().delta_j - best).abs());
        plane_err = plane_err.max(w1.dot(&vhat).abs()).max(w2t.dot(&vhat).abs());
        sphere_err = sphere_err.max((w1.norm_squared() - c.radius * c.radius).abs());
    }
    outcome(
        dj_err <= 1e-8 && plane_err <= 1e-9 && sphere_err <= 1e-9,
        format!("32 samples: max |dJ - dJ*| = {dj_err:.2e}, plane {plane_err:.2e}, sphere {sphere_err:.2e}"),
    )
}

fn c9_loss() -> Outcome {
    let mut all = true;
    let mut parts = Vec::new();
    for (name, cfg) in [("heat", build_heat()), ("random-walk", build_random_walk()), ("spiral", spiral_scenario_1())] {
        let k = cfg.default_k;
        let w = optimal_w(&cfg.system, k, cfg.eta).unwrap().w;
        let r = sampled_loss_report(&cfg.system, &w, 10.0, 0.1, SdMode::Standard, 1000, 9).unwrap();
        let ld = r.l_d.unwrap();
        let p = w.pinv() * w.w();
        let n = cfg.system.dim();
        let proj = (DMatrix::<f64>::identity(n, n) - p).norm();
        let proj_ok = within(proj, ((n - k) as f64).sqrt(), 1e-9);
        all &= ld <= r.s_d && proj_ok;
        parts.push(format!("{name}: L_D={ld:.4} <= S_D={:.4}, |I-P|_F={proj:.6}", r.s_d));
    }
    let argmin = argmin_sd_check(&build_heat().system, 1, 0.0, 1000, 9).unwrap();
    all &= argmin;
    parts.push(format!("argmin_sd_check(heat, 1000)={argmin}"));
    outcome(all, parts.join("; "))
}

fn c10_shared() -> Outcome {
    let lambda = [0.8, 0.6, 0.4, 0.2];
    let kappa = [0.2, 0.4, 0.6, 0.8];
    let v = delta_j_shared_eigs(&lambda, &kappa, 2).unwrap();
    let coop = cooperation_experiment(&lambda, &lambda, 2, 1000, 40, 10).unwrap();
    outcome(
        within(v, 0.6719, 1e-3) && coop.slope < 0.0,
        format!("shared-eig dJ = {v:.5}; cooperation slope over 1000 draws = {:.4}", coop.slope),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1", c1_heat),
        ("2", c2_random_walk),
        ("3", c3_spiral),
        ("4", c4_mi),
        ("5", c5_bounds),
        ("6", c6_attainment),
        ("7", c7_l_invariance),
        ("8", c8_circle),
        ("9", c9_loss),
        ("10", c10_shared),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        let o = f();
        println!("criterion {id:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    let o = c5b_bounds_symmetric();
    println!("criterion 5b (info, not counted): {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
