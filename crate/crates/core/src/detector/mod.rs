//! Sliding-window MDL change statistics with DNML code lengths, decomposed
//! into data-given-latent, latent and model parts, and the hierarchical alarm
//! driver built on them.

mod model_code;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use model_code::{kt_change_probability, model_code_len, model_pair_code_len};

use crate::error::{invalid, Error, Result};
use crate::nml::LogComplexityTable;
use crate::rng::derive_seed;
use crate::sbm::{
    align_labels, select_prepared, BlockAssignment, DnmlCodeLength, GraphSnapshot, ModelSelection,
    PreparedWindow, SelectionSettings, WindowMode,
};

pub const DEFAULT_PATIENCE: usize = 2;

/// Detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Window half-width in snapshots.
    pub h: usize,
    /// Confidence parameter of the model (level 3) test.
    pub delta: f64,
    /// Confidence parameter of the data-given-latent (level 1) test.
    pub delta_xz: f64,
    /// Confidence parameter of the latent (level 2) test.
    pub delta_z: f64,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub window_mode: WindowMode,
    /// Early-stopping patience of the block-count scan; `None` scans all of
    /// `1..=k_max`.
    #[serde(default)]
    pub patience: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            h: 2,
            delta: 0.05,
            delta_xz: 0.05,
            delta_z: 0.05,
            k_max: 10,
            restarts: 10,
            seed: 0,
            window_mode: WindowMode::Pooled,
            patience: Some(DEFAULT_PATIENCE),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(invalid("h must be >= 1"));
        }
        for (name, d) in [("delta", self.delta), ("delta_xz", self.delta_xz), ("delta_z", self.delta_z)] {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid(format!("{name} = {d} must lie in (0, 1)")));
            }
        }
        if self.k_max == 0 {
            return Err(invalid("k_max must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be >= 1"));
        }
        if self.patience == Some(0) {
            return Err(invalid("patience must be >= 1"));
        }
        Ok(())
    }
}

/// Everything computed for one window position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    /// Timestamp of the last snapshot before the split.
    pub t: i64,
    /// 1-based position of that snapshot in the stream.
    pub position: usize,
    pub phi: f64,
    pub phi_xz: f64,
    pub phi_z: f64,
    pub delta_l: f64,
    pub eps: f64,
    pub eps_xz: f64,
    pub eps_z: f64,
    pub k_hat: usize,
    pub k_hat1: usize,
    pub k_hat2: usize,
    pub alarm_level3: bool,
    pub alarm_level2: bool,
    pub alarm_level1: bool,
    pub w_xz: Option<f64>,
    pub w_z: Option<f64>,
}

/// Scores of one window before thresholds and alarms are attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStatistic {
    pub phi: f64,
    pub phi_xz: f64,
    pub phi_z: f64,
    pub delta_l: f64,
    pub k_hat: usize,
    pub k_hat1: usize,
    pub k_hat2: usize,
    /// Code length of the full window under `k_hat`.
    pub full: DnmlCodeLength,
}

/// Alarm thresholds in nats per snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub eps: f64,
    pub eps_xz: f64,
    pub eps_z: f64,
}

/// Thresholds bounding the false-alarm probability of each test by its
/// confidence parameter, with the complexities evaluated for the full window
/// under the selected model `k_hat`.
pub fn thresholds(k_hat: usize, full: &DnmlCodeLength, config: &DetectorConfig) -> Result<Thresholds> {
    let two_h = (2 * config.h) as f64;
    let cxz = full.log_complexity_xz;
    let cz = full.log_complexity_z;
    Ok(Thresholds {
        eps: (cxz + cz + model_code_len(k_hat)? - config.delta.ln()) / two_h,
        eps_xz: (cxz - config.delta_xz.ln()) / two_h,
        eps_z: (cz - config.delta_z.ln()) / two_h,
    })
}

/// Relative importance of simultaneous level-1 and level-2 changes.
pub fn weights(phi_xz: f64, phi_z: f64) -> (f64, f64) {
    let total = phi_xz + phi_z;
    (phi_xz / total, phi_z / total)
}

/// Combines model selections of the full window and of both halves into the
/// change statistic and its decomposition.
///
/// The half-window models are chosen jointly, minimizing both halves' DNML code
/// lengths plus the pair code `L(k1, k2)`.
pub fn combine_fits(
    full: &ModelSelection,
    left: &ModelSelection,
    right: &ModelSelection,
    h: usize,
    n_changes_so_far: usize,
    t: usize,
) -> Result<WindowStatistic> {
    let k_max = full.k_max;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for k1 in 1..=left.candidates.len() {
        let l1 = left.dnml_total(k1);
        if !l1.is_finite() {
            continue;
        }
        for k2 in 1..=right.candidates.len() {
            let l2 = right.dnml_total(k2);
            if !l2.is_finite() {
                continue;
            }
            let pair = model_pair_code_len(k1, k2, n_changes_so_far, t, k_max)?;
            let cost = l1 + l2 + pair;
            if best.is_none_or(|(_, _, c, _)| cost < c) {
                best = Some((k1, k2, cost, pair));
            }
        }
    }
    let (k1, k2, _, pair) = best.expect("k = 1 is always available");
    let a = full.best();
    let b = left.candidates[k1 - 1].as_ref().expect("finite candidate");
    let c = right.candidates[k2 - 1].as_ref().expect("finite candidate");
    let model_full = model_code_len(full.k_hat)?;
    let two_h = (2 * h) as f64;
    Ok(WindowStatistic {
        phi: ((a.dnml.total + model_full) - (b.dnml.total + c.dnml.total + pair)) / two_h,
        phi_xz: (a.dnml.x_given_z - b.dnml.x_given_z - c.dnml.x_given_z) / two_h,
        phi_z: (a.dnml.z - b.dnml.z - c.dnml.z) / two_h,
        delta_l: (model_full - pair) / two_h,
        k_hat: full.k_hat,
        k_hat1: k1,
        k_hat2: k2,
        full: a.dnml,
    })
}

/// MDL change statistic between two adjacent half-windows of `config.h`
/// snapshots each.
pub fn mdl_change_statistic(
    left: &[GraphSnapshot],
    right: &[GraphSnapshot],
    config: &DetectorConfig,
    n_changes_so_far: usize,
    t: usize,
    table: &LogComplexityTable,
) -> Result<WindowStatistic> {
    config.validate()?;
    if left.len() != config.h || right.len() != config.h {
        return Err(Error::DimensionMismatch(format!(
            "half-windows must hold h = {} snapshots (got {} and {})",
            config.h,
            left.len(),
            right.len()
        )));
    }
    let full: Vec<GraphSnapshot> = left.iter().chain(right).cloned().collect();
    let settings = selection_settings(config, full[0].n_nodes());
    let fit = |w: &[GraphSnapshot], tag: u64| {
        let s = SelectionSettings { seed: derive_seed(config.seed, &[tag]), ..settings };
        select_prepared(&PreparedWindow::new(w)?, s, table)
    };
    let f = fit(&full, 0)?;
    let l = fit(left, 1)?;
    let r = fit(right, 2)?;
    combine_fits(&f, &l, &r, config.h, n_changes_so_far, t)
}

fn selection_settings(config: &DetectorConfig, n_nodes: usize) -> SelectionSettings {
    SelectionSettings {
        k_max: config.k_max.min(n_nodes),
        restarts: config.restarts,
        seed: config.seed,
        mode: config.window_mode,
        patience: config.patience,
    }
}

/// Reports plus the label-aligned block assignment of each report's split
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub reports: Vec<ChangeReport>,
    pub labels: Vec<BlockAssignment>,
}

/// Hierarchical change detector over a snapshot stream.
#[derive(Debug)]
pub struct HierarchicalDetector {
    config: DetectorConfig,
    table: LogComplexityTable,
}

impl HierarchicalDetector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, table: LogComplexityTable::new(config.k_max)? })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn table(&self) -> &LogComplexityTable {
        &self.table
    }

    /// Slides the window over `stream`; one report per split position
    /// `t = h..=len - h`.
    pub fn run(&self, stream: &[GraphSnapshot]) -> Result<DetectionOutcome> {
        let h = self.config.h;
        if stream.len() < 2 * h {
            return Err(Error::StreamTooShort { len: stream.len(), min: 2 * h });
        }
        crate::sbm::check_uniform(stream)?;
        let settings = selection_settings(&self.config, stream[0].n_nodes());
        let mut cache: HashMap<(usize, usize), ModelSelection> = HashMap::new();
        let mut reports = Vec::with_capacity(stream.len() - 2 * h + 1);
        let mut labels: Vec<BlockAssignment> = Vec::with_capacity(reports.capacity());
        let mut n_changes = 0usize;

        for t in h..=stream.len() - h {
            for (start, len) in [(t - h, 2 * h), (t - h, h), (t, h)] {
                if !cache.contains_key(&(start, len)) {
                    let window = &stream[start..start + len];
                    let s = SelectionSettings {
                        seed: derive_seed(self.config.seed, &[start as u64, len as u64]),
                        ..settings
                    };
                    let fit = select_prepared(&PreparedWindow::new(window)?, s, &self.table)?;
                    cache.insert((start, len), fit);
                }
            }
            let full = &cache[&(t - h, 2 * h)];
            let stat = combine_fits(full, &cache[&(t - h, h)], &cache[&(t, h)], h, n_changes, t)?;
            let th = thresholds(stat.k_hat, &stat.full, &self.config)?;

            let mut report = ChangeReport {
                t: stream[t - 1].timestamp(),
                position: t,
                phi: stat.phi,
                phi_xz: stat.phi_xz,
                phi_z: stat.phi_z,
                delta_l: stat.delta_l,
                eps: th.eps,
                eps_xz: th.eps_xz,
                eps_z: th.eps_z,
                k_hat: stat.k_hat,
                k_hat1: stat.k_hat1,
                k_hat2: stat.k_hat2,
                alarm_level3: false,
                alarm_level2: false,
                alarm_level1: false,
                w_xz: None,
                w_z: None,
            };
            if stat.phi > th.eps {
                report.alarm_level3 = true;
                n_changes += 1;
            } else {
                report.alarm_level1 = stat.phi_xz > th.eps_xz;
                report.alarm_level2 = stat.phi_z > th.eps_z;
                if report.alarm_level1 && report.alarm_level2 {
                    let (w_xz, w_z) = weights(stat.phi_xz, stat.phi_z);
                    report.w_xz = Some(w_xz);
                    report.w_z = Some(w_z);
                }
            }

            let split_labels = &full.assignments()[h - 1];
            let aligned = match labels.last() {
                Some(prev) => align_labels(prev, split_labels)?,
                None => split_labels.clone(),
            };
            labels.push(aligned);
            reports.push(report);
            cache.retain(|&(start, _), _| start + h > t);
        }
        Ok(DetectionOutcome { reports, labels })
    }
}

/// Runs the hierarchical detector and returns its reports.
pub fn run_hcdl(stream: &[GraphSnapshot], config: &DetectorConfig) -> Result<Vec<ChangeReport>> {
    Ok(HierarchicalDetector::new(*config)?.run(stream)?.reports)
}
