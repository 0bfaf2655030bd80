//! Bernoulli stochastic block model: snapshots, sufficient statistics, DNML
//! code lengths, block inference, model selection and label alignment.

mod align;
mod graph;
pub mod infer;
mod select;
mod stats;

pub use align::align_labels;
pub use graph::{BlockAssignment, GraphSnapshot};
pub use infer::{complete_log_likelihood, infer_assignments, EmOptions, PreparedWindow, WindowFit};
pub use select::{select_model, Candidate, ModelSelection, SelectionSettings};
pub(crate) use select::select_prepared;
pub(crate) use stats::check_uniform;
pub use stats::{
    dnml_code_length, pool_stats, window_code_length, DnmlCodeLength, SbmSufficientStats, WindowMode,
};
