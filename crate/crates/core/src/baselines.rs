//! Comparison detectors: fixed-share tracking of the best block-count expert,
//! and a DeltaCon-style similarity between consecutive snapshots.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nml::LogComplexityTable;
use crate::rng::derive_seed;
use crate::sbm::{window_code_length, GraphSnapshot, PreparedWindow, WindowMode};

/// Fixed-share weights over experts `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertState {
    pub weights: Vec<f64>,
    pub eta: f64,
    pub alpha: f64,
}

impl ExpertState {
    /// Uniform weights over `n_experts`.
    pub fn uniform(n_experts: usize, eta: f64, alpha: f64) -> Result<Self> {
        if n_experts == 0 {
            return Err(invalid("need at least one expert"));
        }
        let state = Self { weights: vec![1.0 / n_experts as f64; n_experts], eta, alpha };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("eta = {} must be finite and >= 0", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.weights.is_empty() || self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// Index of the heaviest expert (0-based; expert `k` sits at `k - 1`).
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// One fixed-share step: exponential loss update, then every expert gives
/// away a fraction `alpha` of its weight, shared evenly among the others.
pub fn tbe_update(state: &ExpertState, losses: &[f64]) -> Result<ExpertState> {
    state.validate()?;
    let k = state.weights.len();
    if losses.len() != k {
        return Err(Error::DimensionMismatch(format!("{} losses for {k} experts", losses.len())));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(invalid(format!("non-finite loss {bad}")));
    }
    let m: Vec<f64> = state
        .weights
        .iter()
        .zip(losses)
        .map(|(w, l)| w * (-state.eta * l.abs()).exp())
        .collect();
    let next: Vec<f64> = if k == 1 {
        m
    } else {
        let pool: f64 = m.iter().map(|w| state.alpha * w).sum();
        m.iter()
            .map(|w| (1.0 - state.alpha) * w + (pool - state.alpha * w) / (k - 1) as f64)
            .collect()
    };
    let total: f64 = next.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(invalid("all expert weights vanished; lower eta"));
    }
    Ok(ExpertState { weights: next.iter().map(|w| w / total).collect(), eta: state.eta, alpha: state.alpha })
}

/// Settings of the fixed-share baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbeConfig {
    pub eta: f64,
    pub alpha: f64,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TbeConfig {
    fn default() -> Self {
        Self { eta: 1.0, alpha: 0.2, k_max: 10, restarts: 10, seed: 0 }
    }
}

/// DNML code length of every snapshot under each block count `1..=k_max`.
/// Row `t` holds the values for snapshot `t`.
pub fn snapshot_code_lengths(
    stream: &[GraphSnapshot],
    k_max: usize,
    restarts: usize,
    seed: u64,
    table: &LogComplexityTable,
) -> Result<Vec<Vec<f64>>> {
    stream
        .iter()
        .enumerate()
        .map(|(t, g)| {
            let window = std::slice::from_ref(g);
            let prepared = PreparedWindow::new(window)?;
            (1..=k_max.min(g.n_nodes()))
                .map(|k| {
                    let fit = prepared.fit(k, restarts, derive_seed(seed, &[t as u64, k as u64]))?;
                    // a fit that emptied blocks is still a valid assignment for k blocks
                    let (code, _) = window_code_length(window, &fit.assignments, k, table, WindowMode::Pooled)?;
                    Ok(code.total)
                })
                .collect()
        })
        .collect()
}

/// Fixed-share change scores: the total-variation distance between the
/// expert weights after snapshot `t` and before it.
///
/// The loss of expert `k` at `t` is the gap between its code length and the
/// code length under the true block count `true_k[t]`, so the true block
/// counts must be supplied.
pub fn tbe_scores(code_lengths: &[Vec<f64>], true_k: &[usize], eta: f64, alpha: f64) -> Result<Vec<f64>> {
    if code_lengths.len() != true_k.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} snapshots but {} true block counts",
            code_lengths.len(),
            true_k.len()
        )));
    }
    let n_experts = code_lengths.first().map_or(0, Vec::len);
    let mut state = ExpertState::uniform(n_experts, eta, alpha)?;
    let mut scores = Vec::with_capacity(code_lengths.len());
    for (row, &k_t) in code_lengths.iter().zip(true_k) {
        if row.len() != n_experts {
            return Err(Error::DimensionMismatch("ragged code-length table".into()));
        }
        if k_t == 0 || k_t > n_experts {
            return Err(invalid(format!("true block count {k_t} outside 1..={n_experts}")));
        }
        let reference = row[k_t - 1];
        let losses: Vec<f64> = row.iter().map(|c| reference - c).collect();
        let next = tbe_update(&state, &losses)?;
        let tv = 0.5 * next.weights.iter().zip(&state.weights).map(|(a, b)| (a - b).abs()).sum::<f64>();
        scores.push(tv);
        state = next;
    }
    Ok(scores)
}

/// Fixed-share scores of a stream, one per snapshot.
pub fn run_tbe(stream: &[GraphSnapshot], true_k: &[usize], config: &TbeConfig) -> Result<Vec<f64>> {
    let table = LogComplexityTable::new(config.k_max)?;
    let codes = snapshot_code_lengths(stream, config.k_max, config.restarts, config.seed, &table)?;
    tbe_scores(&codes, true_k, config.eta, config.alpha)
}

/// FaBP affinity matrix `(I + eps^2 D - eps A)^-1`.
fn affinity(g: &GraphSnapshot, eps: f64) -> Result<DMatrix<f64>> {
    let n = g.n_nodes();
    let mut m = DMatrix::<f64>::identity(n, n);
    for &(u, v) in g.edges() {
        let (u, v) = (u as usize, v as usize);
        // symmetrized adjacency; a reciprocated directed pair counts once
        if m[(u, v)] == 0.0 {
            m[(u, v)] = -eps;
            m[(v, u)] = -eps;
            m[(u, u)] += eps * eps;
            m[(v, v)] += eps * eps;
        }
    }
    m.lu().try_inverse().ok_or_else(|| Error::Singular(format!("FaBP system at t={} with eps={eps}", g.timestamp())))
}

fn max_degree(g: &GraphSnapshot) -> usize {
    let mut deg = vec![0usize; g.n_nodes()];
    for &(u, v) in g.edges() {
        deg[u as usize] += 1;
        deg[v as usize] += 1;
    }
    deg.into_iter().max().unwrap_or(0)
}

/// Default FaBP coupling for a pair of snapshots, `1 / (1 + max degree)`.
pub fn default_fabp_eps(g1: &GraphSnapshot, g2: &GraphSnapshot) -> f64 {
    1.0 / (1.0 + max_degree(g1).max(max_degree(g2)) as f64)
}

/// `1 - 1 / (1 + d)` where `d` is the Matusita distance between the FaBP
/// affinity matrices of the two snapshots. `None` picks
/// [`default_fabp_eps`].
pub fn deltacon_score(g1: &GraphSnapshot, g2: &GraphSnapshot, eps_fabp: Option<f64>) -> Result<f64> {
    if g1.n_nodes() != g2.n_nodes() {
        return Err(Error::DimensionMismatch(format!("{} vs {} nodes", g1.n_nodes(), g2.n_nodes())));
    }
    let eps = eps_fabp.unwrap_or_else(|| default_fabp_eps(g1, g2));
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("FaBP eps = {eps} must be positive")));
    }
    let s1 = affinity(g1, eps)?;
    let s2 = affinity(g2, eps)?;
    // negative affinities only arise when eps is too large for the graph
    let root = |x: f64| x.max(0.0).sqrt();
    let d = s1.iter().zip(s2.iter()).map(|(a, b)| (root(*a) - root(*b)).powi(2)).sum::<f64>().sqrt();
    Ok(1.0 - 1.0 / (1.0 + d))
}

/// DeltaCon scores of a stream; entry `t` compares snapshots `t - 1` and `t`
/// and the first entry is 0.
pub fn deltacon_scores(stream: &[GraphSnapshot], eps_fabp: Option<f64>) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(stream.len());
    if !stream.is_empty() {
        scores.push(0.0);
    }
    for pair in stream.windows(2) {
        scores.push(deltacon_score(&pair[0], &pair[1], eps_fabp)?);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn two_expert_example() {
        let s = ExpertState { weights: vec![0.5, 0.5], eta: 1.0, alpha: 0.2 };
        let next = tbe_update(&s, &[0.0, 1.0]).unwrap();
        // hand evaluation: w^m = (0.5, 0.5/e), pool = 0.2 * sum
        let m = [0.5, 0.5 * (-1.0f64).exp()];
        let pool = 0.2 * (m[0] + m[1]);
        let raw = [0.8 * m[0] + pool - 0.2 * m[0], 0.8 * m[1] + pool - 0.2 * m[1]];
        let total = raw[0] + raw[1];
        assert_abs_diff_eq!(next.weights[0], raw[0] / total, epsilon = 1e-12);
        assert_abs_diff_eq!(next.weights[0], 0.6387, epsilon = 1e-4);
        assert_abs_diff_eq!(next.weights[1], 0.3613, epsilon = 1e-4);
        assert_eq!(next.best(), 0);
    }

    #[test]
    fn zero_alpha_is_exponential_weighting() {
        let s = ExpertState { weights: vec![0.2, 0.3, 0.5], eta: 0.5, alpha: 0.0 };
        let losses = [1.0, 2.0, 0.5];
        let next = tbe_update(&s, &losses).unwrap();
        let raw: Vec<f64> = s.weights.iter().zip(losses).map(|(w, l)| w * (-0.5 * l).exp()).collect();
        let total: f64 = raw.iter().sum();
        for (a, b) in next.weights.iter().zip(&raw) {
            assert_abs_diff_eq!(*a, b / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn equal_losses_keep_ranking() {
        let s = ExpertState { weights: vec![0.1, 0.6, 0.3], eta: 2.0, alpha: 0.2 };
        let next = tbe_update(&s, &[4.0; 3]).unwrap();
        assert!(next.weights[1] > next.weights[2] && next.weights[2] > next.weights[0]);
    }

    #[test]
    fn rejects_bad_losses() {
        let s = ExpertState::uniform(2, 1.0, 0.2).unwrap();
        assert!(tbe_update(&s, &[0.0, f64::NAN]).is_err());
        assert!(tbe_update(&s, &[0.0, f64::INFINITY]).is_err());
        assert!(tbe_update(&s, &[0.0]).is_err());
        assert!(ExpertState::uniform(2, 1.0, 1.5).is_err());
    }

    #[test]
    fn tbe_scores_react_to_block_count_change() {
        // expert 2 is right before the switch, expert 3 after it
        let mut codes = vec![vec![50.0, 10.0, 12.0]; 5];
        codes.extend(vec![vec![80.0, 30.0, 11.0]; 5]);
        let truth = [2, 2, 2, 2, 2, 3, 3, 3, 3, 3];
        let scores = tbe_scores(&codes, &truth, 1.0, 0.2).unwrap();
        let peak = (0..10).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert!(peak == 0 || peak == 5, "peak at {peak}: {scores:?}");
        assert!(scores[5] > 0.5);
        assert!(scores[3] < 1e-2 && scores[8] < 1e-2);
    }

    fn graph(n: usize, edges: &[(u32, u32)]) -> GraphSnapshot {
        GraphSnapshot::new(n, false, 0, edges.iter().copied()).unwrap()
    }

    #[test]
    fn deltacon_identical_graphs_score_zero() {
        let g = graph(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 5)]);
        assert_eq!(deltacon_score(&g, &g, Some(0.1)).unwrap(), 0.0);
        assert_eq!(deltacon_score(&g, &g, None).unwrap(), 0.0);
    }

    #[test]
    fn deltacon_empty_vs_complete() {
        let empty = graph(10, &[]);
        let mut all = Vec::new();
        for u in 0..10 {
            for v in u + 1..10 {
                all.push((u, v));
            }
        }
        let complete = graph(10, &all);
        let score = deltacon_score(&empty, &complete, None).unwrap();
        assert!(score > 0.0 && score < 1.0);
        assert_eq!(deltacon_score(&empty, &empty, None).unwrap(), 0.0);
    }

    #[test]
    fn deltacon_rejects_size_mismatch() {
        assert!(deltacon_score(&graph(3, &[]), &graph(4, &[]), None).is_err());
    }

    #[test]
    fn deltacon_stream_scores() {
        let a = graph(5, &[(0, 1)]);
        let b = graph(5, &[(0, 1), (2, 3)]);
        let scores = deltacon_scores(&[a.clone(), a.clone(), b], None).unwrap();
        assert_eq!(scores.len(), 3);
        assert_eq!(scores[0], 0.0);
        assert_eq!(scores[1], 0.0);
        assert!(scores[2] > 0.0);
    }

    fn arb_pair() -> impl Strategy<Value = (GraphSnapshot, GraphSnapshot)> {
        let edges = || proptest::collection::vec((0u32..8, 0u32..8), 0..20);
        (edges(), edges()).prop_map(|(a, b)| {
            let clean = |e: Vec<(u32, u32)>| e.into_iter().filter(|(u, v)| u != v).collect::<Vec<_>>();
            (graph(8, &clean(a)), graph(8, &clean(b)))
        })
    }

    proptest! {
        #[test]
        fn deltacon_symmetric((a, b) in arb_pair()) {
            let ab = deltacon_score(&a, &b, None).unwrap();
            let ba = deltacon_score(&b, &a, None).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((0.0..1.0).contains(&ab));
        }

        #[test]
        fn fixed_share_stays_normalized(
            w in proptest::collection::vec(0.01f64..1.0, 2..6),
            losses in proptest::collection::vec(0.0f64..50.0, 6),
            alpha in 0.0f64..=1.0,
        ) {
            let total: f64 = w.iter().sum();
            let s = ExpertState { weights: w.iter().map(|x| x / total).collect(), eta: 1.0, alpha };
            let next = tbe_update(&s, &losses[..w.len()]).unwrap();
            prop_assert!((next.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(next.weights.iter().all(|&x| x >= 0.0));
        }
    }
}
