//! JSON system description shared by the CLI and the case runner.
//!
//! ```json
//! {"n": 2, "A": [0.5, 0.1, 0.0, 0.3], "Sigma": {"isotropic": 0.1},
//!  "W": {"k": 1, "data": [1.0, 0.0]}, "eta": 0.0, "L": 2.0, "seed": 7}
//! ```
//! Matrices are row-major. `Sigma` is either a full row-major array or
//! `{"isotropic": sigma}` meaning `sigma^2 I`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cases;
use crate::error::{Error, Result};
use crate::system::{CoarseMap, LinearSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Full(Vec<f64>),
    Isotropic { isotropic: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub k: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpecFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "Sigma")]
    pub sigma: SigmaSpec,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn matrix(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("{what} has {} entries, expected {rows}x{cols}", data.len())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{what} contains a non-finite value")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl SystemSpecFile {
    pub fn from_system(sys: &LinearSystem) -> Self {
        Self {
            n: sys.dim(),
            a: row_major(sys.a()),
            sigma: SigmaSpec::Full(row_major(sys.sigma())),
            w: None,
            eta: None,
            l: None,
            seed: None,
        }
    }

    pub fn with_map(mut self, cm: &CoarseMap) -> Self {
        self.w = Some(MapSpec {
            k: cm.k(),
            data: row_major(cm.w()),
        });
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// A JSON path, or one of the builtin case names.
    pub fn load(arg: &str) -> Result<Self> {
        if let Some(cfg) = cases::builtin(arg) {
            let mut spec = Self::from_system(&cfg.system);
            spec.eta = Some(cfg.eta);
            if let Some(w) = &cfg.published_w {
                spec = spec.with_map(w);
            }
            return Ok(spec);
        }
        Self::read(Path::new(arg))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn system(&self) -> Result<LinearSystem> {
        if self.n == 0 {
            return Err(Error::Parse("n must be at least 1".into()));
        }
        let a = matrix(self.n, self.n, &self.a, "A")?;
        let sigma = match &self.sigma {
            SigmaSpec::Full(v) => matrix(self.n, self.n, v, "Sigma")?,
            SigmaSpec::Isotropic { isotropic } => {
                if !isotropic.is_finite() {
                    return Err(Error::Parse("Sigma.isotropic is not finite".into()));
                }
                DMatrix::identity(self.n, self.n) * (isotropic * isotropic)
            }
        };
        for v in [self.eta, self.l].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Parse("eta and L must be finite".into()));
            }
        }
        LinearSystem::new(a, sigma)
    }

    pub fn coarse_map(&self) -> Result<Option<CoarseMap>> {
        match &self.w {
            None => Ok(None),
            Some(w) => Ok(Some(CoarseMap::new(matrix(w.k, self.n, &w.data, "W")?)?)),
        }
    }
}

/// Coarse map from `identity`, a spec JSON with a `W` entry, or a bare JSON
/// object `{"k": .., "data": [..]}`.
pub fn load_map(arg: &str, n: usize) -> Result<CoarseMap> {
    if arg == "identity" {
        return Ok(CoarseMap::identity(n));
    }
    let text = std::fs::read_to_string(arg)?;
    if let Ok(spec) = serde_json::from_str::<SystemSpecFile>(&text) {
        return spec
            .coarse_map()?
            .ok_or_else(|| Error::Parse(format!("{arg} has no W entry")));
    }
    let w: MapSpec = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    CoarseMap::new(matrix(w.k, n, &w.data, "W")?)
}
