//! Synthetic dynamic-SBM streams with planted changes at each level.
//!
//! Two scenarios are provided. `abrupt` (80 snapshots) changes the link
//! probabilities at t = 20, the block proportions at t = 40 and splits the
//! largest block at t = 60. `gradual` (90 snapshots) interpolates the same
//! kinds of change over t = 10..15, 35..40 and 60..70. Between changes each
//! snapshot is derived from the previous one by resampling every dyad with
//! probability `beta`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_for;
use crate::sbm::{BlockAssignment, GraphSnapshot};

/// Persistence resampling probability between change points.
pub const DEFAULT_BETA: f64 = 0.02;
/// Clipping margin for perturbed link probabilities.
pub const THETA_EPS: f64 = 1e-6;
pub const DEFAULT_NODES: usize = 100;

/// Which synthetic scenario to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Abrupt,
    Gradual,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abrupt" => Ok(Self::Abrupt),
            "gradual" => Ok(Self::Gradual),
            other => Err(invalid(format!("unknown scenario {other:?} (expected abrupt or gradual)"))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Abrupt => "abrupt",
            Self::Gradual => "gradual",
        })
    }
}

/// A run of snapshots `start..=end` (1-based) generated from one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub k: usize,
    pub pi: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
}

/// A planted change spanning `start..=end` at the given level (1, 2 or 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub start: usize,
    pub end: usize,
    pub level: u8,
}

/// Ground truth of a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScenario {
    pub kind: ScenarioKind,
    pub length: usize,
    pub n_nodes: usize,
    pub beta: f64,
    pub seed: u64,
    pub segments: Vec<Segment>,
    pub transitions: Vec<Transition>,
}

impl StreamScenario {
    /// Planted change for `level`, if any.
    pub fn transition(&self, level: u8) -> Option<Transition> {
        self.transitions.iter().copied().find(|t| t.level == level)
    }

    /// True block count at 1-based time `t`.
    pub fn k_at(&self, t: usize) -> Option<usize> {
        self.segments.iter().find(|s| s.start <= t && t <= s.end).map(|s| s.k)
    }
}

/// Snapshots, their true memberships and the scenario that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStream {
    pub snapshots: Vec<GraphSnapshot>,
    pub truth: Vec<BlockAssignment>,
    pub scenario: StreamScenario,
}

fn check_pi(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(invalid("mixture vector is empty"));
    }
    if pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(invalid(format!("mixture entries must lie in [0, 1]: {pi:?}")));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("mixture sums to {sum}, not 1")));
    }
    Ok(())
}

fn check_theta(theta: &[Vec<f64>], k: usize) -> Result<()> {
    if theta.len() != k || theta.iter().any(|row| row.len() != k) {
        return Err(Error::DimensionMismatch(format!("link matrix must be {k} x {k}")));
    }
    for (a, row) in theta.iter().enumerate() {
        for (b, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("link probability {p} at ({a}, {b}) outside [0, 1]")));
            }
            if (p - theta[b][a]).abs() > 1e-12 {
                return Err(invalid("link matrix must be symmetric for undirected output"));
            }
        }
    }
    Ok(())
}

fn draw_label(pi: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // rounding: fall back to the last block with positive mass
    pi.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Draws an undirected SBM snapshot: memberships from `pi`, then each dyad
/// independently with probability `theta[z_u][z_v]`.
pub fn sample_sbm(
    pi: &[f64],
    theta: &[Vec<f64>],
    n_nodes: usize,
    timestamp: i64,
    rng: &mut ChaCha8Rng,
) -> Result<(GraphSnapshot, BlockAssignment)> {
    check_pi(pi)?;
    check_theta(theta, pi.len())?;
    if n_nodes == 0 {
        return Err(invalid("n_nodes must be >= 1"));
    }
    let labels: Vec<u32> = (0..n_nodes).map(|_| draw_label(pi, rng)).collect();
    let mut edges = Vec::new();
    for u in 0..n_nodes {
        for v in u + 1..n_nodes {
            if rng.random::<f64>() < theta[labels[u] as usize][labels[v] as usize] {
                edges.push((u as u32, v as u32));
            }
        }
    }
    let z = BlockAssignment::new(labels, pi.len())?;
    Ok((GraphSnapshot::new(n_nodes, false, timestamp, edges)?, z))
}

/// Like [`link_trans`], also returning how many dyads were resampled.
pub fn link_trans_counted(
    prev: &GraphSnapshot,
    z: &BlockAssignment,
    theta: &[Vec<f64>],
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(GraphSnapshot, usize)> {
    if z.n_nodes() != prev.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "assignment covers {} nodes, snapshot has {}",
            z.n_nodes(),
            prev.n_nodes()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta = {beta} outside [0, 1]")));
    }
    if prev.directed() {
        return Err(invalid("persistence kernel is defined for undirected snapshots"));
    }
    check_theta(theta, z.k())?;
    let n = prev.n_nodes();
    let labels = z.labels();
    let mut edges = Vec::with_capacity(prev.n_edges());
    let mut resampled = 0;
    for u in 0..n {
        for v in u + 1..n {
            let (u32_, v32) = (u as u32, v as u32);
            let linked = if rng.random::<f64>() < beta {
                resampled += 1;
                rng.random::<f64>() < theta[labels[u] as usize][labels[v] as usize]
            } else {
                prev.has_edge(u32_, v32)
            };
            if linked {
                edges.push((u32_, v32));
            }
        }
    }
    Ok((GraphSnapshot::new(n, false, prev.timestamp() + 1, edges)?, resampled))
}

/// Persistence kernel: each dyad is redrawn from `theta` with probability
/// `beta` and copied from `prev` otherwise.
pub fn link_trans(
    prev: &GraphSnapshot,
    z: &BlockAssignment,
    theta: &[Vec<f64>],
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GraphSnapshot> {
    Ok(link_trans_counted(prev, z, theta, beta, rng)?.0)
}

fn draw_initial_params(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dirichlet = Dirichlet::new([1.0; 3]).expect("valid concentration");
    let mut pi = dirichlet.sample(rng).to_vec();
    pi.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let beta = Beta::new(1.0, 1.0).expect("valid shape");
    let mut theta = vec![vec![0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let p = beta.sample(rng);
            theta[a][b] = p;
            theta[b][a] = p;
        }
    }
    (pi, theta)
}

/// Adds `U(-0.1, 0.1)` noise to each link probability, clipping into
/// `[eps, 1 - eps]`.
pub fn perturb_theta(theta: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = theta.len();
    let mut out = theta.to_vec();
    for a in 0..k {
        for b in a..k {
            let u: f64 = rng.random_range(-0.1..0.1);
            let p = (theta[a][b] + u).clamp(THETA_EPS, 1.0 - THETA_EPS);
            out[a][b] = p;
            out[b][a] = p;
        }
    }
    out
}

/// Grows `theta` by one block whose links to every block are drawn from
/// `Beta(1, 1)`.
pub fn extend_theta(theta: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = theta.len();
    let beta = Beta::new(1.0, 1.0).expect("valid shape");
    let mut out: Vec<Vec<f64>> = theta.iter().map(|row| {
        let mut r = row.clone();
        r.push(0.0);
        r
    }).collect();
    out.push(vec![0.0; k + 1]);
    for a in 0..=k {
        let p = beta.sample(rng);
        out[a][k] = p;
        out[k][a] = p;
    }
    out
}

/// Moves a third of the gap between the two largest blocks from the third to
/// the second block.
pub fn shift_mixture(pi: &[f64]) -> Vec<f64> {
    let d = (pi[2] - pi[1]) / 3.0;
    vec![pi[0], pi[1] + d, pi[2] - d]
}

/// Splits the third block 3:1 into blocks three and four.
pub fn split_mixture(pi: &[f64]) -> Vec<f64> {
    vec![pi[0], pi[1], 3.0 * pi[2] / 4.0, pi[2] / 4.0]
}

/// Mixture during the gradual level-2 change, `t` in `35..=40`.
pub fn gradual_shift_mixture(pi: &[f64], t: usize) -> Vec<f64> {
    let step = (t as f64 - 35.0) * (pi[2] - pi[1]) / 10.0;
    vec![pi[0], pi[1] + step, pi[2] - step]
}

/// Mixture during the gradual split, `t` in `60..=70`.
pub fn gradual_split_mixture(pi: &[f64], t: usize) -> Vec<f64> {
    let moved = (t as f64 - 60.0) * pi[2] / 40.0;
    vec![pi[0], pi[1], pi[2] - moved, moved]
}

/// Link probabilities during the gradual level-1 change, `t` in `10..=15`.
pub fn gradual_theta(from: &[Vec<f64>], to: &[Vec<f64>], t: usize) -> Vec<Vec<f64>> {
    let w = (t as f64 - 10.0) / 5.0;
    from.iter()
        .zip(to)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
        .collect()
}

enum Step<'a> {
    Fresh { pi: &'a [f64], theta: &'a [Vec<f64>] },
    Persist { theta: &'a [Vec<f64>] },
}

struct Builder {
    rng: ChaCha8Rng,
    n_nodes: usize,
    snapshots: Vec<GraphSnapshot>,
    truth: Vec<BlockAssignment>,
    segments: Vec<Segment>,
}

impl Builder {
    fn step(&mut self, t: usize, step: Step<'_>) -> Result<()> {
        match step {
            Step::Fresh { pi, theta } => {
                let (g, z) = sample_sbm(pi, theta, self.n_nodes, t as i64, &mut self.rng)?;
                self.snapshots.push(g);
                self.truth.push(z);
            }
            Step::Persist { theta } => {
                let prev = self.snapshots.last().expect("stream starts with a fresh draw");
                let z = self.truth.last().expect("matching truth").clone();
                let g = link_trans(prev, &z, theta, DEFAULT_BETA, &mut self.rng)?.with_timestamp(t as i64);
                self.snapshots.push(g);
                self.truth.push(z);
            }
        }
        Ok(())
    }

    fn segment(&mut self, start: usize, end: usize, pi: &[f64], theta: &[Vec<f64>]) {
        self.segments.push(Segment { start, end, k: pi.len(), pi: pi.to_vec(), theta: theta.to_vec() });
    }
}

fn builder(n_nodes: usize, seed: u64, kind: ScenarioKind) -> Result<Builder> {
    if n_nodes < 20 {
        return Err(invalid(format!("scenario needs n_nodes >= 20, got {n_nodes}")));
    }
    Ok(Builder {
        rng: rng_for(seed, &[kind as u64]),
        n_nodes,
        snapshots: Vec::new(),
        truth: Vec::new(),
        segments: Vec::new(),
    })
}

/// Abrupt scenario: 80 snapshots, level 1 at t = 20, level 2 at t = 40,
/// level 3 (K = 3 -> 4) at t = 60.
pub fn gen_abrupt(n_nodes: usize, seed: u64) -> Result<GeneratedStream> {
    let mut b = builder(n_nodes, seed, ScenarioKind::Abrupt)?;
    let (pi1, theta1) = draw_initial_params(&mut b.rng);
    let theta2 = perturb_theta(&theta1, &mut b.rng);
    let pi2 = shift_mixture(&pi1);
    let pi3 = split_mixture(&pi2);
    let theta3 = extend_theta(&theta2, &mut b.rng);

    let phases: [(usize, usize, &[f64], &[Vec<f64>]); 4] = [
        (1, 19, &pi1, &theta1),
        (20, 39, &pi1, &theta2),
        (40, 59, &pi2, &theta2),
        (60, 80, &pi3, &theta3),
    ];
    for (start, end, pi, theta) in phases {
        b.step(start, Step::Fresh { pi, theta })?;
        for t in start + 1..=end {
            b.step(t, Step::Persist { theta })?;
        }
        b.segment(start, end, pi, theta);
    }
    Ok(GeneratedStream {
        scenario: StreamScenario {
            kind: ScenarioKind::Abrupt,
            length: 80,
            n_nodes,
            beta: DEFAULT_BETA,
            seed,
            segments: b.segments,
            transitions: vec![
                Transition { start: 20, end: 20, level: 1 },
                Transition { start: 40, end: 40, level: 2 },
                Transition { start: 60, end: 60, level: 3 },
            ],
        },
        snapshots: b.snapshots,
        truth: b.truth,
    })
}

/// Gradual scenario: 90 snapshots, link probabilities drift over t = 10..15,
/// mixture over t = 35..40, and a fourth block grows over t = 60..70.
pub fn gen_gradual(n_nodes: usize, seed: u64) -> Result<GeneratedStream> {
    let mut b = builder(n_nodes, seed, ScenarioKind::Gradual)?;
    let (pi1, theta1) = draw_initial_params(&mut b.rng);
    let theta2 = perturb_theta(&theta1, &mut b.rng);
    let mid = (pi1[1] + pi1[2]) / 2.0;
    let pi2 = vec![pi1[0], mid, mid];
    let theta3 = extend_theta(&theta2, &mut b.rng);
    let pi3 = split_mixture(&pi2);

    let persist = |b: &mut Builder, start: usize, end: usize, pi: &[f64], theta: &[Vec<f64>]| -> Result<()> {
        for t in start..=end {
            b.step(t, Step::Persist { theta })?;
        }
        b.segment(start, end, pi, theta);
        Ok(())
    };

    b.step(1, Step::Fresh { pi: &pi1, theta: &theta1 })?;
    b.segment(1, 1, &pi1, &theta1);
    persist(&mut b, 2, 9, &pi1, &theta1)?;
    for t in 10..=15 {
        let theta = gradual_theta(&theta1, &theta2, t);
        b.step(t, Step::Fresh { pi: &pi1, theta: &theta })?;
        b.segment(t, t, &pi1, &theta);
    }
    persist(&mut b, 16, 34, &pi1, &theta2)?;
    for t in 35..=40 {
        let pi = gradual_shift_mixture(&pi1, t);
        b.step(t, Step::Fresh { pi: &pi, theta: &theta2 })?;
        b.segment(t, t, &pi, &theta2);
    }
    persist(&mut b, 41, 59, &pi2, &theta2)?;
    for t in 60..=70 {
        let pi = gradual_split_mixture(&pi2, t);
        b.step(t, Step::Fresh { pi: &pi, theta: &theta3 })?;
        b.segment(t, t, &pi, &theta3);
    }
    persist(&mut b, 71, 90, &pi3, &theta3)?;

    Ok(GeneratedStream {
        scenario: StreamScenario {
            kind: ScenarioKind::Gradual,
            length: 90,
            n_nodes,
            beta: DEFAULT_BETA,
            seed,
            segments: b.segments,
            transitions: vec![
                Transition { start: 10, end: 15, level: 1 },
                Transition { start: 35, end: 40, level: 2 },
                Transition { start: 60, end: 70, level: 3 },
            ],
        },
        snapshots: b.snapshots,
        truth: b.truth,
    })
}

/// Generates the named scenario.
pub fn generate(kind: ScenarioKind, n_nodes: usize, seed: u64) -> Result<GeneratedStream> {
    match kind {
        ScenarioKind::Abrupt => gen_abrupt(n_nodes, seed),
        ScenarioKind::Gradual => gen_gradual(n_nodes, seed),
    }
}
