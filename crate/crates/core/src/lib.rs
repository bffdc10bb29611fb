//! Recurrent sequence models with relaxed parameter sharing.
//!
//! The crate provides plain LSTMs, `shiftLSTM-K` (K cells switched on a fixed
//! time-block schedule), `mixLSTM-K` (per-step convex mixtures of K cells) and
//! the feed-forward / time-feature baselines, together with everything needed
//! to train and study them:
//!
//! - [`numerics`]: tensors, seeded RNG streams, initializers, Adam, gradient checking
//! - [`synthgen`]: the drifting-weights copy-memory benchmark
//! - [`cells`]: LSTM cell math, time-block schedules, parameter mixing, temporal encodings
//! - [`models`]: full sequence predictors and model files
//! - [`training`]: losses, smoothness regularizer, early stopping, random search
//! - [`evaluation`]: max-over-time scoring, AUROC/AUPR, bootstrap intervals
//! - [`interpret`]: input-gradient saliency and grouped permutation importance
//! - [`datapipe`]: JSON-Lines datasets, carry-forward preprocessing, splits
//! - [`experiments`]: the named experiment suites

pub mod cells;
pub mod datapipe;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod interpret;
pub mod models;
pub mod numerics;
pub mod synthgen;
mod task;
pub mod training;

pub use error::{Error, Result};
pub use task::Task;
