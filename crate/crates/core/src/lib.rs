//! Multivariate conditional outlier detection.
//!
//! Instances pair a real-valued context `x` with a binary response vector `y`.
//! A decomposed conditional model (one L2-penalized logistic factor per
//! output, each conditioned on `x` and the other outputs) maps every instance
//! to `rho`, the probabilities it assigns to the observed outputs. Outliers
//! are ranked by reliability-weighted negative log-probabilities in that
//! space. LOF and an independent-factor model serve as baselines, and
//! [`eval`] measures detection precision against injected outliers.
//!
//! ```no_run
//! use mcode::dataset::{inject_outliers, load_csv};
//! use mcode::model::{estimate_rho, fit_mcode, LambdaPolicy, Mode};
//! use mcode::scoring::{global_weights, score_rw};
//! use mcode::eval::atpar;
//!
//! let ds = load_csv("data.csv", 14)?;
//! let (noisy, truth) = inject_outliers(&ds, 0.01, 0.1, 7)?;
//! let model = fit_mcode(&noisy, Mode::FullConditional, &LambdaPolicy::default())?;
//! let rho = estimate_rho(&model, &noisy)?;
//! let scores = score_rw(&rho, &global_weights(&rho))?;
//! println!("ATPAR = {:.3}", atpar(&scores, &truth, 0.01));
//! # Ok::<(), mcode::McodeError>(())
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod lof;
pub mod model;
pub mod optim;
pub mod par;
pub mod persist;
pub mod scoring;
pub mod synthetic;

pub use dataset::{Dataset, PerturbationLog, StandardizationStats};
pub use error::{ErrorKind, McodeError, Result};
pub use eval::{Method, TrialReport};
pub use model::{LambdaPolicy, McodeModel, Mode, RhoMatrix};
pub use optim::Factor;
pub use scoring::ScoreVector;
