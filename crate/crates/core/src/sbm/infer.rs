//! Block-assignment inference for a window of snapshots.
//!
//! The link probabilities and block proportions are shared by all snapshots of
//! the window while every snapshot carries its own memberships. Each restart
//! seeds a hard partition by k-means++ on the window-averaged adjacency rows,
//! runs mean-field EM from it, extracts the most probable
//! block of every node, and polishes the hard partition with classification EM
//! sweeps. The restart with the highest complete-data log-likelihood wins.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::rng::rng_for;
use crate::sbm::stats::{check_uniform, pool_stats, SbmSufficientStats};
use crate::sbm::{BlockAssignment, GraphSnapshot};

const PROB_FLOOR: f64 = 1e-9;
const INIT_SMOOTHING: f64 = 0.2;
const KMEANS_ITERS: usize = 20;
/// EM also stops once the most probable blocks have not moved for this many
/// iterations.
const STABLE_ITERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub polish_sweeps: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-4, polish_sweeps: 15 }
    }
}

/// Result of fitting one block count to a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFit {
    pub requested_k: usize,
    /// Blocks left after dropping empty ones; `<= requested_k`.
    pub k: usize,
    pub assignments: Vec<BlockAssignment>,
    pub log_likelihood: f64,
}

/// Sparse neighbour lists of one snapshot.
#[derive(Debug, Clone)]
struct Adjacency {
    out_off: Vec<usize>,
    out: Vec<u32>,
    // only for directed graphs
    in_off: Vec<usize>,
    inc: Vec<u32>,
}

impl Adjacency {
    fn new(g: &GraphSnapshot) -> Self {
        let n = g.n_nodes();
        let build = |pairs: &mut dyn Iterator<Item = (u32, u32)>| {
            let pairs: Vec<(u32, u32)> = pairs.collect();
            let mut off = vec![0usize; n + 1];
            for &(u, _) in &pairs {
                off[u as usize + 1] += 1;
            }
            for i in 0..n {
                off[i + 1] += off[i];
            }
            let mut fill = off.clone();
            let mut tgt = vec![0u32; pairs.len()];
            for &(u, v) in &pairs {
                tgt[fill[u as usize]] = v;
                fill[u as usize] += 1;
            }
            (off, tgt)
        };
        let edges = g.edges();
        if g.directed() {
            let (out_off, out) = build(&mut edges.iter().copied());
            let (in_off, inc) = build(&mut edges.iter().map(|&(u, v)| (v, u)));
            Self { out_off, out, in_off, inc }
        } else {
            let (out_off, out) = build(&mut edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]));
            Self { out_off, out, in_off: Vec::new(), inc: Vec::new() }
        }
    }

    fn out(&self, i: usize) -> &[u32] {
        &self.out[self.out_off[i]..self.out_off[i + 1]]
    }

    fn inc(&self, i: usize) -> &[u32] {
        &self.inc[self.in_off[i]..self.in_off[i + 1]]
    }
}

/// A window with neighbour lists built once, reusable across block counts
/// and restarts.
#[derive(Debug, Clone)]
pub struct PreparedWindow<'a> {
    snapshots: &'a [GraphSnapshot],
    adjacency: Vec<Adjacency>,
    n: usize,
    directed: bool,
    options: EmOptions,
}

impl<'a> PreparedWindow<'a> {
    pub fn new(snapshots: &'a [GraphSnapshot]) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(invalid("cannot infer blocks on an empty window"));
        }
        check_uniform(snapshots)?;
        Ok(Self {
            snapshots,
            adjacency: snapshots.iter().map(Adjacency::new).collect(),
            n: snapshots[0].n_nodes(),
            directed: snapshots[0].directed(),
            options: EmOptions::default(),
        })
    }

    pub fn with_options(mut self, options: EmOptions) -> Self {
        self.options = options;
        self
    }

    pub fn snapshots(&self) -> &'a [GraphSnapshot] {
        self.snapshots
    }

    /// Best of `restarts` EM runs for `k` blocks. Deterministic in `seed`.
    pub fn fit(&self, k: usize, restarts: usize, seed: u64) -> Result<WindowFit> {
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if k > self.n {
            return Err(invalid(format!("k = {k} exceeds node count {}", self.n)));
        }
        if restarts == 0 {
            return Err(invalid("restarts must be >= 1"));
        }
        let s = self.snapshots.len();
        if k == 1 {
            let labels = vec![vec![0u32; self.n]; s];
            return self.finish(k, labels);
        }
        let mut best: Option<(f64, Vec<Vec<u32>>)> = None;
        for r in 0..restarts {
            let mut rng = rng_for(seed, &[k as u64, r as u64]);
            let init = self.kmeans_init(k, &mut rng);
            let labels = self.run_em(k, &init);
            let labels = self.polish(k, labels);
            let ll = complete_log_likelihood(&self.stats(k, &labels));
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, labels));
            }
        }
        let (_, labels) = best.expect("at least one restart");
        self.finish(k, labels)
    }

    fn stats(&self, k: usize, labels: &[Vec<u32>]) -> SbmSufficientStats {
        let assignments: Vec<BlockAssignment> = labels
            .iter()
            .map(|l| BlockAssignment::new(l.clone(), k).expect("labels in range"))
            .collect();
        pool_stats(self.snapshots, &assignments, k).expect("shapes checked")
    }

    /// Drops empty blocks and packages the fit.
    fn finish(&self, k: usize, labels: Vec<Vec<u32>>) -> Result<WindowFit> {
        let mut used = vec![false; k];
        for l in labels.iter().flatten() {
            used[*l as usize] = true;
        }
        let mut mapping = vec![0u32; k];
        let mut next = 0u32;
        for (old, &u) in used.iter().enumerate() {
            if u {
                mapping[old] = next;
                next += 1;
            }
        }
        let k_eff = next as usize;
        let assignments = labels
            .into_iter()
            .map(|l| BlockAssignment::new(l.into_iter().map(|x| mapping[x as usize]).collect(), k_eff))
            .collect::<Result<Vec<_>>>()?;
        let stats = pool_stats(self.snapshots, &assignments, k_eff)?;
        Ok(WindowFit {
            requested_k: k,
            k: k_eff,
            assignments,
            log_likelihood: complete_log_likelihood(&stats),
        })
    }

    /// Window-averaged adjacency rows (out and in halves when directed).
    fn profile_rows(&self) -> Vec<f64> {
        let n = self.n;
        let dim = if self.directed { 2 * n } else { n };
        let mut rows = vec![0.0f64; n * dim];
        let w = 1.0 / self.snapshots.len() as f64;
        for g in self.snapshots {
            for &(u, v) in g.edges() {
                let (u, v) = (u as usize, v as usize);
                rows[u * dim + v] += w;
                if self.directed {
                    rows[v * dim + n + u] += w;
                } else {
                    rows[v * dim + u] += w;
                }
            }
        }
        rows
    }

    /// k-means++ seeding followed by Lloyd iterations on adjacency rows.
    fn kmeans_init(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let n = self.n;
        let rows = self.profile_rows();
        let dim = rows.len() / n;
        let row = |i: usize| &rows[i * dim..(i + 1) * dim];
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

        let mut centers: Vec<f64> = Vec::with_capacity(k * dim);
        centers.extend_from_slice(row(rng.random_range(0..n)));
        let mut nearest: Vec<f64> = (0..n).map(|i| dist(row(i), &centers[..dim])).collect();
        for _ in 1..k {
            let total: f64 = nearest.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d) in nearest.iter().enumerate() {
                    if u < d {
                        chosen = i;
                        break;
                    }
                    u -= d;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let start = centers.len();
            centers.extend_from_slice(row(pick));
            for i in 0..n {
                nearest[i] = nearest[i].min(dist(row(i), &centers[start..start + dim]));
            }
        }

        let mut labels = vec![0u32; n];
        for _ in 0..KMEANS_ITERS {
            let mut changed = false;
            for i in 0..n {
                let mut best = (0usize, f64::INFINITY);
                for c in 0..k {
                    let d = dist(row(i), &centers[c * dim..(c + 1) * dim]);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                if labels[i] != best.0 as u32 {
                    labels[i] = best.0 as u32;
                    changed = true;
                }
            }
            let mut counts = vec![0usize; k];
            let mut sums = vec![0.0f64; k * dim];
            for i in 0..n {
                let c = labels[i] as usize;
                counts[c] += 1;
                for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for d in 0..dim {
                        centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        labels
    }

    /// Mean-field EM; returns the most probable block of every node.
    fn run_em(&self, k: usize, init: &[u32]) -> Vec<Vec<u32>> {
        let n = self.n;
        let s_count = self.snapshots.len();
        let off = INIT_SMOOTHING / k as f64;
        let mut tau = vec![0.0f64; s_count * n * k];
        for s in 0..s_count {
            for i in 0..n {
                let row = &mut tau[(s * n + i) * k..(s * n + i + 1) * k];
                row.fill(off);
                row[init[i] as usize] += 1.0 - INIT_SMOOTHING;
            }
        }
        let mut out_sums = vec![0.0f64; s_count * n * k];
        let mut in_sums = if self.directed { vec![0.0f64; s_count * n * k] } else { Vec::new() };
        let mut sizes = vec![0.0f64; s_count * k];
        let mut log_theta1 = vec![0.0f64; k * k];
        let mut log_theta0 = vec![0.0f64; k * k];
        let mut log_pi = vec![0.0f64; k];
        let mut logits = vec![0.0f64; k];

        let mut hard: Vec<u32> = (0..s_count).flat_map(|_| init.iter().copied()).collect();
        let mut stable = 0usize;
        for _ in 0..self.options.max_iter {
            // neighbour sums and block masses
            out_sums.fill(0.0);
            if self.directed {
                in_sums.fill(0.0);
            }
            sizes.fill(0.0);
            for (s, adj) in self.adjacency.iter().enumerate() {
                let base = s * n * k;
                for i in 0..n {
                    for l in 0..k {
                        sizes[s * k + l] += tau[base + i * k + l];
                    }
                    let dst = base + i * k;
                    for &j in adj.out(i) {
                        let src = base + j as usize * k;
                        for l in 0..k {
                            out_sums[dst + l] += tau[src + l];
                        }
                    }
                    if self.directed {
                        for &j in adj.inc(i) {
                            let src = base + j as usize * k;
                            for l in 0..k {
                                in_sums[dst + l] += tau[src + l];
                            }
                        }
                    }
                }
            }
            // M-step
            let mut num = vec![0.0f64; k * k];
            let mut den = vec![0.0f64; k * k];
            for s in 0..s_count {
                let base = s * n * k;
                for a in 0..k {
                    for b in 0..k {
                        den[a * k + b] += sizes[s * k + a] * sizes[s * k + b];
                    }
                }
                for i in 0..n {
                    let t = &tau[base + i * k..base + (i + 1) * k];
                    let o = &out_sums[base + i * k..base + (i + 1) * k];
                    for a in 0..k {
                        for b in 0..k {
                            num[a * k + b] += t[a] * o[b];
                            den[a * k + b] -= t[a] * t[b];
                        }
                    }
                }
            }
            for idx in 0..k * k {
                let theta = if den[idx] > 1e-12 { num[idx] / den[idx] } else { 0.5 };
                let theta = theta.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                log_theta1[idx] = theta.ln();
                log_theta0[idx] = (1.0 - theta).ln();
            }
            let total = (s_count * n) as f64;
            for l in 0..k {
                let mass: f64 = (0..s_count).map(|s| sizes[s * k + l]).sum();
                log_pi[l] = (mass / total).max(PROB_FLOOR).ln();
            }
            // E-step
            let mut max_change = 0.0f64;
            for s in 0..s_count {
                let base = s * n * k;
                for i in 0..n {
                    let row = base + i * k;
                    for a in 0..k {
                        let mut v = log_pi[a];
                        for b in 0..k {
                            let others = sizes[s * k + b] - tau[row + b];
                            let links = out_sums[row + b];
                            v += links * log_theta1[a * k + b] + (others - links) * log_theta0[a * k + b];
                            if self.directed {
                                let links_in = in_sums[row + b];
                                v += links_in * log_theta1[b * k + a]
                                    + (others - links_in) * log_theta0[b * k + a];
                            }
                        }
                        logits[a] = v;
                    }
                    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for v in logits.iter_mut() {
                        *v = (*v - m).exp();
                        z += *v;
                    }
                    for a in 0..k {
                        let new = logits[a] / z;
                        max_change = max_change.max((new - tau[row + a]).abs());
                        tau[row + a] = new;
                    }
                }
            }
            if max_change < self.options.tol {
                break;
            }
            let mut moved = false;
            for (r, h) in hard.iter_mut().enumerate() {
                let a = argmax(&tau[r * k..(r + 1) * k]) as u32;
                if a != *h {
                    *h = a;
                    moved = true;
                }
            }
            stable = if moved { 0 } else { stable + 1 };
            if stable >= STABLE_ITERS {
                break;
            }
        }

        (0..s_count)
            .map(|s| {
                (0..n)
                    .map(|i| {
                        let row = &tau[(s * n + i) * k..(s * n + i + 1) * k];
                        argmax(row) as u32
                    })
                    .collect()
            })
            .collect()
    }

    /// Classification EM sweeps on a hard partition; keeps the best partition
    /// seen by complete-data log-likelihood.
    fn polish(&self, k: usize, mut labels: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
        let n = self.n;
        let mut best_ll = complete_log_likelihood(&self.stats(k, &labels));
        let mut best = labels.clone();
        let mut counts_out = vec![0.0f64; n * k];
        let mut counts_in = vec![0.0f64; n * k];
        let mut scores = vec![0.0f64; k];
        for _ in 0..self.options.polish_sweeps {
            let stats = self.stats(k, &labels);
            let mut log_theta1 = vec![0.0; k * k];
            let mut log_theta0 = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    let (plus, dyads) = if self.directed || a <= b {
                        (stats.links(a, b), stats.dyads(a, b))
                    } else {
                        (stats.links(b, a), stats.dyads(b, a))
                    };
                    let theta = if dyads > 0 { plus as f64 / dyads as f64 } else { 0.5 };
                    let theta = theta.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                    log_theta1[a * k + b] = theta.ln();
                    log_theta0[a * k + b] = (1.0 - theta).ln();
                }
            }
            let log_pi: Vec<f64> = stats
                .block_sizes
                .iter()
                .map(|&c| (c as f64 / stats.n_total as f64).max(PROB_FLOOR).ln())
                .collect();
            let mut changed = false;
            let mut next = labels.clone();
            for (s, adj) in self.adjacency.iter().enumerate() {
                let z = &labels[s];
                let mut sizes = vec![0.0f64; k];
                for &l in z {
                    sizes[l as usize] += 1.0;
                }
                counts_out.fill(0.0);
                counts_in.fill(0.0);
                for i in 0..n {
                    for &j in adj.out(i) {
                        counts_out[i * k + z[j as usize] as usize] += 1.0;
                    }
                    if self.directed {
                        for &j in adj.inc(i) {
                            counts_in[i * k + z[j as usize] as usize] += 1.0;
                        }
                    }
                }
                for i in 0..n {
                    let own = z[i] as usize;
                    for a in 0..k {
                        let mut v = log_pi[a];
                        for b in 0..k {
                            let others = sizes[b] - if b == own { 1.0 } else { 0.0 };
                            let links = counts_out[i * k + b];
                            v += links * log_theta1[a * k + b] + (others - links) * log_theta0[a * k + b];
                            if self.directed {
                                let links_in = counts_in[i * k + b];
                                v += links_in * log_theta1[b * k + a]
                                    + (others - links_in) * log_theta0[b * k + a];
                            }
                        }
                        scores[a] = v;
                    }
                    let pick = argmax(&scores);
                    if scores[pick] > scores[own] + 1e-12 {
                        next[s][i] = pick as u32;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
            labels = next;
            let ll = complete_log_likelihood(&self.stats(k, &labels));
            if ll > best_ll {
                best_ll = ll;
                best = labels.clone();
            }
        }
        best
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn xlogx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * (x as f64).ln()
    }
}

/// Maximized complete-data log-likelihood of pooled counts (nats).
pub fn complete_log_likelihood(stats: &SbmSufficientStats) -> f64 {
    let mut ll = 0.0;
    for (a, b) in stats.pairs() {
        let (p, m) = (stats.links(a, b), stats.non_links(a, b));
        ll += xlogx(p) + xlogx(m) - xlogx(p + m);
    }
    ll + stats.block_sizes.iter().map(|&c| xlogx(c)).sum::<f64>() - xlogx(stats.n_total)
}

/// Per-snapshot hard assignments for `k` blocks over a window.
pub fn infer_assignments(
    snapshots: &[GraphSnapshot],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<BlockAssignment>> {
    Ok(PreparedWindow::new(snapshots)?.fit(k, restarts, seed)?.assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn planted(n: usize, p_in: f64, p_out: f64, seed: u64) -> (GraphSnapshot, Vec<u32>) {
        let mut rng = rng_for(seed, &[99]);
        let truth: Vec<u32> = (0..n).map(|i| (i * 2 / n) as u32).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if truth[u] == truth[v] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    edges.push((u as u32, v as u32));
                }
            }
        }
        (GraphSnapshot::new(n, false, 0, edges).unwrap(), truth)
    }

    fn agreement_up_to_permutation(a: &[u32], b: &[u32]) -> f64 {
        let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
        let flipped = a.iter().zip(b).filter(|(x, y)| x != y).count();
        same.max(flipped) as f64 / a.len() as f64
    }

    #[test]
    fn single_block_is_trivial() {
        let (g, _) = planted(20, 0.9, 0.1, 1);
        let z = infer_assignments(&[g], 1, 3, 7).unwrap();
        assert!(z[0].labels().iter().all(|&l| l == 0));
        assert_eq!(z[0].k(), 1);
    }

    #[test]
    fn recovers_planted_partition() {
        let mut hits = 0;
        for seed in 0..20 {
            let (g, truth) = planted(50, 0.9, 0.05, seed);
            let z = infer_assignments(&[g], 2, 10, seed).unwrap();
            if z[0].k() == 2 && agreement_up_to_permutation(z[0].labels(), &truth) >= 0.999 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "recovered {hits}/20");
    }

    #[test]
    fn empty_graph_converges() {
        let g = GraphSnapshot::empty(12, false, 0);
        let fit = PreparedWindow::new(std::slice::from_ref(&g)).unwrap().fit(2, 4, 3).unwrap();
        assert!(fit.k >= 1 && fit.k <= 2);
        assert!(fit.assignments[0].labels().iter().all(|&l| (l as usize) < fit.k));
        assert_eq!(fit.log_likelihood.is_finite(), true);
    }

    #[test]
    fn rejects_too_many_blocks() {
        let g = GraphSnapshot::empty(3, false, 0);
        assert!(infer_assignments(&[g.clone()], 4, 1, 0).is_err());
        assert!(infer_assignments(&[g], 0, 1, 0).is_err());
        assert!(infer_assignments(&[], 1, 1, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (g, _) = planted(40, 0.6, 0.2, 5);
        let a = infer_assignments(&[g.clone(), g.clone()], 3, 4, 11).unwrap();
        let b = infer_assignments(&[g.clone(), g], 3, 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn directed_planted_partition() {
        let n = 40;
        let mut rng = rng_for(3, &[1]);
        let truth: Vec<u32> = (0..n).map(|i| (i * 2 / n) as u32).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                // block 0 -> block 1 dense, everything else sparse
                let p = if truth[u] == 0 && truth[v] == 1 { 0.8 } else { 0.05 };
                if u != v && rng.random::<f64>() < p {
                    edges.push((u as u32, v as u32));
                }
            }
        }
        let g = GraphSnapshot::new(n, true, 0, edges).unwrap();
        let z = infer_assignments(&[g], 2, 5, 2).unwrap();
        assert!(agreement_up_to_permutation(z[0].labels(), &truth) >= 0.999);
    }
}
