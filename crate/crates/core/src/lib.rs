//! Effective information and causal emergence for linear stochastic
//! iteration systems `x_{t+1} = A x_t + e_t`, `e_t ~ N(0, Sigma)`.

pub mod cases;
pub mod cli;
pub mod ei;
pub mod emergence;
pub mod error;
pub mod kdtree;
pub mod loss;
pub mod mi;
pub mod optimizer;
pub mod random;
pub mod simulation;
pub mod specfile;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
