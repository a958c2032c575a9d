//! Kernel survival support vector machines.
//!
//! Trains a ranking-based survival SVM with a squared-hinge loss directly in
//! the primal. Coefficients are found by truncated Newton optimization, and
//! the objective, gradient and Hessian-vector products are evaluated through
//! per-sample support counts gathered with a binary indexed tree, so the
//! quadratic set of comparable pairs is never built.
//!
//! ```no_run
//! use kssvm::{model::{fit, predict, KernelChoice, PairMode}, newton::OptimizerOptions, synth};
//!
//! # fn main() -> kssvm::Result<()> {
//! let (train, test) = synth::generate(&synth::SynthConfig::new(500, 500, 7))?;
//! let model = fit(&train, &KernelChoice::Clinical, 2f64.powi(-4), &OptimizerOptions::default(), PairMode::Full)?;
//! let risk = predict(&model, test.x())?;
//! let c = kssvm::metrics::harrell_c(test.time(), test.event(), &risk)?;
//! println!("c-index {:.3}", c.cindex);
//! # Ok(())
//! # }
//! ```

pub mod counter;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod newton;
pub mod objective;
pub mod pairs;
pub mod synth;

pub use data::{FeatureKind, FeatureSpec, StandardizationStats, SurvivalDataset};
pub use error::{Error, Result};
pub use kernels::{GramMatrix, KernelConfig, KernelKind};
pub use model::TrainedModel;
