//! Command-line front end. Every command prints JSON (or CSV for tabular
//! output) on stdout; `--output DIR` additionally writes the result files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cases::{self, write_atomic, CaseName};
use crate::ei::{ei_gaussian, ei_rectangular, DEFAULT_L};
use crate::emergence::{delta_j_at, delta_j_max, feasibility};
use crate::error::{Error, Result};
use crate::mi::{self, MiEstimator, DEFAULT_NEIGHBORS};
use crate::optimizer::optimal_w;
use crate::simulation::{macro_pair, simulate_micro};
use crate::specfile::{load_map, MapSpec, SystemSpecFile};
use crate::system::{CoarseMap, LinearSystem};

#[derive(Debug, Parser)]
#[command(name = "ce-lab", version, about = "Effective information and causal emergence for linear Gaussian iteration systems")]
pub struct Cli {
    /// RNG seed for randomized commands (defaults to the spec's seed, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for result files.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// System spec JSON, or a builtin case: heat, random-walk, spiral, spiral-2.
    #[arg(long)]
    pub spec: String,
    /// Intervention box side length.
    #[arg(long = "L")]
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepOver {
    K,
    Theta,
    Samples,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective information of the micro system.
    Ei {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Delta J for a given map, or the optimum for a macro dimension.
    Emergence {
        #[command(flatten)]
        spec: SpecArgs,
        /// Map file (spec with W, or {"k", "data"}), or `identity`.
        #[arg(long, conflicts_with = "k", required_unless_present = "k")]
        w: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Entropy-gap budget in nats (defaults to the spec's eta, then 0).
        #[arg(long, requires = "k")]
        eta: Option<f64>,
    },
    /// Whether some k-dimensional map yields positive emergence.
    Feasibility {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Seeded micro trajectory, plus the macro pair when a map is given.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        w: Option<String>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Comma-separated initial state (defaults to the case's or zero).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
    /// Monte Carlo Delta I against the analytic Delta J.
    ValidateMi {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, conflicts_with = "k")]
        w: Option<String>,
        /// Use the optimal map of this dimension (default: the case's k, else 1).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
        neighbors: usize,
        #[arg(long, value_enum, default_value_t = MiEstimator::default())]
        estimator: MiEstimator,
    },
    /// Run a case study and write its files.
    Case {
        #[arg(value_enum)]
        name: CaseName,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Parameter sweeps: Delta J* over k, over the spiral angle, or Delta I
    /// over sample sizes.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum, default_value_t = SweepOver::K)]
        over: SweepOver,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// Number of angles for `--over theta`.
        #[arg(long, default_value_t = 64)]
        points: usize,
        /// Sample-size grid for `--over samples`.
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        grid: Vec<usize>,
        /// Number of seeds per grid point (seed, seed+1, ...).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = MiEstimator::default())]
        estimator: MiEstimator,
    },
}

/// What a command produced: the stdout body plus files for `--output`.
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<(String, Vec<u8>)>,
}

fn annotated<T: Serialize>(body: &T, units: &[(&str, &str)]) -> Result<Value> {
    let mut v = serde_json::to_value(body)?;
    if let Value::Object(obj) = &mut v {
        let map: Map<String, Value> = units.iter().map(|(k, u)| (k.to_string(), Value::from(*u))).collect();
        obj.insert("units".into(), Value::Object(map));
    }
    Ok(v)
}

fn pretty(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

const REPORT_UNITS: &[(&str, &str)] = &[
    ("j_micro", "nats"),
    ("j_macro", "nats"),
    ("delta_j", "nats"),
    ("delta_j1", "nats"),
    ("delta_j2", "nats"),
    ("constraint_eta", "nats"),
    ("delta_j_max", "nats"),
    ("gap", "nats"),
    ("retained_moduli", "dimensionless"),
    ("w", "dimensionless"),
    ("L", "state units"),
    ("k", "count"),
    ("n", "count"),
];

struct Loaded {
    spec: SystemSpecFile,
    sys: LinearSystem,
    case: Option<cases::CaseConfig>,
    /// Directory of the spec file; `None` for builtins.
    dir: Option<PathBuf>,
}

fn load(arg: &str) -> Result<Loaded> {
    let spec = SystemSpecFile::load(arg)?;
    let sys = spec.system()?;
    let case = cases::builtin(arg);
    let dir = if case.is_some() {
        None
    } else {
        Some(Path::new(arg).parent().map(Path::to_path_buf).unwrap_or_default())
    };
    Ok(Loaded { spec, sys, case, dir })
}

impl Loaded {
    fn l(&self, arg: Option<f64>) -> f64 {
        arg.or(self.spec.l).unwrap_or(DEFAULT_L)
    }

    fn eta(&self, arg: Option<f64>) -> f64 {
        arg.or(self.spec.eta).unwrap_or(0.0)
    }

    fn seed(&self, arg: Option<u64>) -> u64 {
        arg.or(self.spec.seed).unwrap_or(0)
    }

    fn default_k(&self) -> usize {
        self.case.as_ref().map_or(1, |c| c.default_k)
    }

    fn map(&self, w: Option<&str>, k: Option<usize>, eta: Option<f64>) -> Result<CoarseMap> {
        match w {
            Some(w) => load_map(w, self.sys.dim()),
            None => Ok(optimal_w(&self.sys, k.unwrap_or(self.default_k()), self.eta(eta))?.w),
        }
    }
}

fn check_l(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("L must be positive, got {l}")))
    }
}

fn rows_of(cm: &CoarseMap) -> Vec<Vec<f64>> {
    cm.w().row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn cmd_ei(spec: &SpecArgs) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let l = ld.l(spec.l);
    let b = if ld.sys.is_full_rank() {
        ei_gaussian(&ld.sys, l)?
    } else {
        ei_rectangular(ld.sys.a(), ld.sys.sigma(), l)?
    };
    let v = annotated(
        &b,
        &[
            ("ei", "nats"),
            ("determinism", "nats"),
            ("degeneracy", "nats"),
            ("per_dimension", "nats"),
            ("dimension", "count"),
            ("L", "state units"),
        ],
    )?;
    let text = pretty(&v)?;
    Ok(Outcome {
        files: vec![("ei.json".into(), text.clone().into_bytes())],
        stdout: text,
    })
}

fn cmd_emergence(spec: &SpecArgs, w: Option<&str>, k: Option<usize>, eta: Option<f64>, output: Option<&Path>) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let l = ld.l(spec.l);
    check_l(l)?;
    if let Some(w) = w {
        let cm = load_map(w, ld.sys.dim())?;
        let mut report = delta_j_at(&ld.sys, &cm, l)?;
        if let Some(eta) = eta.or(ld.spec.eta) {
            report = report.with_constraint(&ld.sys, &cm, eta)?;
        }
        let text = pretty(&annotated(&report, REPORT_UNITS)?)?;
        return Ok(Outcome {
            files: vec![("emergence.json".into(), text.clone().into_bytes())],
            stdout: text,
        });
    }
    let k = k.expect("clap requires --k without --w");
    let eta = ld.eta(eta);
    let opt = optimal_w(&ld.sys, k, eta)?;
    let report = delta_j_at(&ld.sys, &opt.w, l)?.with_constraint(&ld.sys, &opt.w, eta)?;

    // The optimal map is written next to the spec unless --output says otherwise.
    let dir = output.map(Path::to_path_buf).or(ld.dir.clone()).unwrap_or_default();
    let map = MapSpec {
        k: opt.w.k(),
        data: opt.w.w().transpose().as_slice().to_vec(),
    };
    write_atomic(&dir, "w_optimal.json", (serde_json::to_string_pretty(&map)? + "\n").as_bytes())?;

    let mut v = annotated(&report, REPORT_UNITS)?;
    let obj = v.as_object_mut().expect("report is an object");
    obj.insert("delta_j_max".into(), json!(opt.analytic_bound));
    obj.insert("gap".into(), json!(opt.gap));
    obj.insert("retained_moduli".into(), json!(opt.retained_moduli));
    obj.insert("w".into(), json!(rows_of(&opt.w)));
    obj.insert("w_path".into(), json!(dir.join("w_optimal.json")));
    let text = pretty(&v)?;
    Ok(Outcome {
        files: vec![("emergence.json".into(), text.clone().into_bytes())],
        stdout: text,
    })
}

fn cmd_feasibility(spec: &SpecArgs, k: usize, eta: Option<f64>) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let eta = ld.eta(eta);
    let feasible = feasibility(&ld.sys, k, eta)?;
    let v = json!({
        "feasible": feasible,
        "k": k,
        "eta": eta,
        "delta_j_max": delta_j_max(&ld.sys, k, eta)?,
        "units": {"k": "count", "eta": "nats", "delta_j_max": "nats"},
    });
    let text = pretty(&v)?;
    Ok(Outcome {
        files: vec![("feasibility.json".into(), text.clone().into_bytes())],
        stdout: text,
    })
}

fn cmd_simulate(spec: &SpecArgs, w: Option<&str>, steps: usize, x0: Option<&[f64]>, seed: Option<u64>) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let seed = ld.seed(seed);
    let n = ld.sys.dim();
    let x0 = match (x0, &ld.case) {
        (Some(v), _) => {
            if v.len() != n {
                return Err(Error::Parse(format!("--x0 has {} entries, system dimension is {n}", v.len())));
            }
            DVector::from_column_slice(v)
        }
        (None, Some(c)) => c.x0.clone(),
        (None, None) => DVector::zeros(n),
    };
    let micro = simulate_micro(&ld.sys, &x0, steps, seed)?;
    let mut buf = Vec::new();
    micro.write_csv(&mut buf, "x")?;
    let stdout = String::from_utf8(buf.clone()).expect("csv output is utf-8");
    let mut files = vec![("trajectory_micro.csv".to_string(), buf)];
    if let Some(w) = w {
        let cm = load_map(w, n)?;
        let (y, y_hat) = macro_pair(&ld.sys, &cm, &x0, steps, seed)?;
        let mut b = Vec::new();
        y.write_csv(&mut b, "y")?;
        files.push(("trajectory_macro_observed.csv".into(), b));
        let mut b = Vec::new();
        y_hat.write_csv(&mut b, "yhat")?;
        files.push(("trajectory_macro.csv".into(), b));
    }
    Ok(Outcome { stdout, files })
}

#[allow(clippy::too_many_arguments)]
fn cmd_validate_mi(
    spec: &SpecArgs,
    w: Option<&str>,
    k: Option<usize>,
    eta: Option<f64>,
    samples: usize,
    neighbors: usize,
    estimator: MiEstimator,
    seed: Option<u64>,
) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let l = ld.l(spec.l);
    let seed = ld.seed(seed);
    let cm = ld.map(w, k, eta)?;
    let d = mi::delta_i(&ld.sys, &cm, samples, l, neighbors, seed, estimator)?;
    let dj = delta_j_at(&ld.sys, &cm, l)?.delta_j;
    let mut v = annotated(
        &d,
        &[
            ("delta_i", "nats"),
            ("delta_j", "nats"),
            ("abs_error", "nats"),
            ("mi_micro.value", "nats"),
            ("mi_macro.value", "nats"),
            ("n_samples", "count"),
            ("k_neighbors", "count"),
            ("L", "state units"),
            ("seed", "dimensionless"),
        ],
    )?;
    let obj = v.as_object_mut().expect("object");
    obj.insert("delta_j".into(), json!(dj));
    obj.insert("abs_error".into(), json!((d.delta_i - dj).abs()));
    obj.insert("L".into(), json!(l));
    obj.insert("seed".into(), json!(seed));
    let text = pretty(&v)?;
    Ok(Outcome {
        files: vec![("validate_mi.json".into(), text.clone().into_bytes())],
        stdout: text,
    })
}

fn csv_of<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    spec: &SpecArgs,
    over: SweepOver,
    k: Option<usize>,
    eta: Option<f64>,
    points: usize,
    grid: &[usize],
    n_seeds: u64,
    estimator: MiEstimator,
    seed: Option<u64>,
) -> Result<Outcome> {
    let ld = load(&spec.spec)?;
    let eta = ld.eta(eta);
    let (name, bytes) = match over {
        SweepOver::K => ("sweep_k.csv", csv_of(&cases::sweep_k(&ld.sys, eta)?)?),
        SweepOver::Theta => {
            let params = ld
                .case
                .as_ref()
                .and_then(|c| c.spiral.clone())
                .ok_or_else(|| Error::InvalidArgument("--over theta needs a spiral builtin spec".into()))?;
            if points == 0 {
                return Err(Error::InvalidArgument("--points must be positive".into()));
            }
            let k = k.unwrap_or(ld.default_k());
            ("sweep_theta.csv", csv_of(&cases::sweep_theta(&params, k, eta, points)?)?)
        }
        SweepOver::Samples => {
            let cm = ld.map(None, k, Some(eta))?;
            let base = ld.seed(seed);
            let seeds: Vec<u64> = (0..n_seeds).map(|i| base + i).collect();
            let rows = mi::convergence_sweep(&ld.sys, &cm, grid, ld.l(spec.l), &seeds, DEFAULT_NEIGHBORS, estimator)?;
            let mut buf = Vec::new();
            mi::write_sweep_csv(&rows, &mut buf)?;
            ("sweep_samples.csv", buf)
        }
    };
    Ok(Outcome {
        stdout: String::from_utf8(bytes.clone()).expect("csv output is utf-8"),
        files: vec![(name.into(), bytes)],
    })
}

fn cmd_case(name: CaseName, k: Option<usize>, eta: Option<f64>, steps: Option<usize>, seed: Option<u64>, output: Option<&Path>) -> Result<Outcome> {
    let mut cfg = cases::config_for(name);
    if let Some(eta) = eta {
        cfg.eta = eta;
    }
    let dir = match output {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from("out").join(match name {
            CaseName::RandomWalk => "random_walk",
            CaseName::Heat => "heat",
            CaseName::Spiral => "spiral",
        }),
    };
    let report = cases::run_case(&cfg, k, steps, seed.unwrap_or(0), &dir)?;
    let mut v = serde_json::to_value(&report)?;
    v.as_object_mut().expect("object").insert("output_dir".into(), json!(dir));
    Ok(Outcome {
        stdout: pretty(&v)?,
        files: Vec::new(),
    })
}

/// Run a parsed command; files go to `--output` when given.
pub fn run(cli: &Cli) -> Result<String> {
    let out = cli.output.as_deref();
    let outcome = match &cli.command {
        Command::Ei { spec } => cmd_ei(spec)?,
        Command::Emergence { spec, w, k, eta } => cmd_emergence(spec, w.as_deref(), *k, *eta, out)?,
        Command::Feasibility { spec, k, eta } => cmd_feasibility(spec, *k, *eta)?,
        Command::Simulate { spec, w, steps, x0 } => cmd_simulate(spec, w.as_deref(), *steps, x0.as_deref(), cli.seed)?,
        Command::ValidateMi {
            spec,
            w,
            k,
            eta,
            samples,
            neighbors,
            estimator,
        } => cmd_validate_mi(spec, w.as_deref(), *k, *eta, *samples, *neighbors, *estimator, cli.seed)?,
        Command::Case { name, k, eta, steps } => cmd_case(*name, *k, *eta, *steps, cli.seed, out)?,
        Command::Sweep {
            spec,
            over,
            k,
            eta,
            points,
            grid,
            seeds,
            estimator,
        } => cmd_sweep(spec, *over, *k, *eta, *points, grid, *seeds, *estimator, cli.seed)?,
    };
    if let Some(dir) = out {
        for (name, bytes) in &outcome.files {
            write_atomic(dir, name, bytes)?;
        }
    }
    Ok(outcome.stdout)
}

/// Size the global rayon pool from `CE_LAB_THREADS` when it is set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CE_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("CE_LAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Parse("CE_LAB_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}
