use crate::detector::model_code_len;
use crate::error::{invalid, Result};
use crate::nml::LogComplexityTable;
use crate::rng::derive_seed;
use crate::sbm::infer::{PreparedWindow, WindowFit};
use crate::sbm::stats::{window_code_length, DnmlCodeLength, SbmSufficientStats, WindowMode};
use crate::sbm::{BlockAssignment, GraphSnapshot};

/// One block count evaluated during model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub k: usize,
    pub dnml: DnmlCodeLength,
    pub stats: SbmSufficientStats,
    pub assignments: Vec<BlockAssignment>,
}

/// Outcome of DNML model selection over `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub k_hat: usize,
    /// Upper end of the search range (the scan may stop before it).
    pub k_max: usize,
    /// `L_DNML + L(k_hat)` in nats.
    pub code_length: f64,
    /// Indexed by `k - 1`; `None` when the fit for `k` lost a block, which
    /// counts as an infinite code length. Block counts past the point where
    /// the scan stopped are absent and count as infinite too.
    pub candidates: Vec<Option<Candidate>>,
}

impl ModelSelection {
    pub fn best(&self) -> &Candidate {
        self.candidates[self.k_hat - 1].as_ref().expect("selected candidate exists")
    }

    pub fn assignments(&self) -> &[BlockAssignment] {
        &self.best().assignments
    }

    /// DNML code length (without `L(k)`) for block count `k`, `+inf` when
    /// unavailable.
    pub fn dnml_total(&self, k: usize) -> f64 {
        self.candidates
            .get(k - 1)
            .and_then(|c| c.as_ref())
            .map_or(f64::INFINITY, |c| c.dnml.total)
    }
}

/// Settings shared by every model-selection call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionSettings {
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub mode: WindowMode,
    /// Stop scanning once this many consecutive block counts fail to improve
    /// on the best code length so far; `None` scans the whole range.
    pub patience: Option<usize>,
}

/// Picks the block count minimizing `L_DNML + L(k)`; ties go to smaller `k`.
///
/// Block counts are scanned upward from 1, so with `patience` set the result
/// is the first local minimum that survives `patience` worse successors.
pub fn select_model(
    snapshots: &[GraphSnapshot],
    settings: SelectionSettings,
    table: &LogComplexityTable,
) -> Result<ModelSelection> {
    let prepared = PreparedWindow::new(snapshots)?;
    select_prepared(&prepared, settings, table)
}

pub(crate) fn select_prepared(
    prepared: &PreparedWindow<'_>,
    settings: SelectionSettings,
    table: &LogComplexityTable,
) -> Result<ModelSelection> {
    let snapshots = prepared.snapshots();
    let n = snapshots[0].n_nodes();
    if settings.k_max == 0 || settings.k_max > n {
        return Err(invalid(format!("k_max = {} outside 1..={n}", settings.k_max)));
    }
    if settings.k_max > table.max_k() {
        return Err(invalid(format!(
            "k_max = {} exceeds complexity table limit {}",
            settings.k_max,
            table.max_k()
        )));
    }
    let mut candidates = Vec::with_capacity(settings.k_max);
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=settings.k_max {
        let seed = derive_seed(settings.seed, &[k as u64]);
        let WindowFit { k: k_eff, assignments, .. } = prepared.fit(k, settings.restarts, seed)?;
        if k_eff < k {
            candidates.push(None);
            if let (Some(p), Some((best_k, _))) = (settings.patience, best) {
                if k - best_k >= p {
                    break;
                }
            }
            continue;
        }
        let (dnml, stats) = window_code_length(snapshots, &assignments, k, table, settings.mode)?;
        let total = dnml.total + model_code_len(k)?;
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((k, total));
        }
        candidates.push(Some(Candidate { k, dnml, stats, assignments }));
        if let (Some(p), Some((best_k, _))) = (settings.patience, best) {
            if k - best_k >= p {
                break;
            }
        }
    }
    let (k_hat, code_length) = best.expect("k = 1 never loses a block");
    Ok(ModelSelection { k_hat, k_max: settings.k_max, code_length, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(k_max: usize) -> SelectionSettings {
        SelectionSettings { k_max, restarts: 4, seed: 1, mode: WindowMode::Pooled, patience: None }
    }

    #[test]
    fn empty_window_selects_one_block() {
        let table = LogComplexityTable::new(10).unwrap();
        let window: Vec<_> = (0..4).map(|t| GraphSnapshot::empty(30, false, t)).collect();
        let sel = select_model(&window, settings(5), &table).unwrap();
        assert_eq!(sel.k_hat, 1);
        // k = 1 really is the minimizer among the candidates that survived
        let k1 = sel.dnml_total(1) + model_code_len(1).unwrap();
        for k in 2..=5 {
            assert!(sel.dnml_total(k) + model_code_len(k).unwrap() >= k1);
        }
    }

    #[test]
    fn singleton_search_space() {
        let table = LogComplexityTable::new(3).unwrap();
        let g = GraphSnapshot::new(5, false, 0, [(0, 1), (2, 3)]).unwrap();
        let sel = select_model(&[g], settings(1), &table).unwrap();
        assert_eq!(sel.k_hat, 1);
        assert_eq!(sel.candidates.len(), 1);
    }

    #[test]
    fn rejects_bad_k_max() {
        let table = LogComplexityTable::new(3).unwrap();
        let g = GraphSnapshot::empty(2, false, 0);
        assert!(select_model(std::slice::from_ref(&g), settings(0), &table).is_err());
        assert!(select_model(std::slice::from_ref(&g), settings(3), &table).is_err());
        let g = GraphSnapshot::empty(8, false, 0);
        assert!(select_model(&[g], settings(4), &table).is_err(), "table too small");
    }
}
