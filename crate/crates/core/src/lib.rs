//! Hierarchical change detection for streams of network snapshots.
//!
//! Each window of snapshots is encoded with the decomposed normalized maximum
//! likelihood (DNML) code of a stochastic block model. Comparing the code
//! length of a window against that of its two halves gives an MDL change
//! statistic which splits exactly into a data-given-blocks part (level 1), a
//! block-distribution part (level 2) and a model part (level 3, the number
//! of blocks). Each part is tested against a threshold that bounds its false
//! alarm probability.

pub mod baselines;
pub mod detector;
mod error;
pub mod eval;
pub mod io;
pub mod nml;
pub mod rng;
pub mod sbm;
pub mod stream;

pub use detector::{
    run_hcdl, ChangeReport, DetectionOutcome, DetectorConfig, HierarchicalDetector, Thresholds,
    WindowStatistic,
};
pub use error::{Error, Result};
pub use nml::{log_multinomial_complexity, LogComplexityTable};
pub use sbm::{BlockAssignment, GraphSnapshot, SbmSufficientStats, WindowMode};
pub use stream::{GeneratedStream, ScenarioKind, StreamScenario};
