use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nml::LogComplexityTable;
use crate::sbm::{BlockAssignment, GraphSnapshot};

/// Link / no-link counts per block pair and block membership counts, pooled
/// over one or more snapshots.
///
/// Pair counts are stored row-major in `k * k` arrays. For undirected graphs
/// only the upper triangle (`k1 <= k2`) is populated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SbmSufficientStats {
    pub k: usize,
    pub directed: bool,
    pub n_plus: Vec<u64>,
    pub n_minus: Vec<u64>,
    pub block_sizes: Vec<u64>,
    pub n_total: u64,
}

impl SbmSufficientStats {
    pub fn zeros(k: usize, directed: bool) -> Self {
        Self {
            k,
            directed,
            n_plus: vec![0; k * k],
            n_minus: vec![0; k * k],
            block_sizes: vec![0; k],
            n_total: 0,
        }
    }

    pub fn links(&self, k1: usize, k2: usize) -> u64 {
        self.n_plus[k1 * self.k + k2]
    }

    pub fn non_links(&self, k1: usize, k2: usize) -> u64 {
        self.n_minus[k1 * self.k + k2]
    }

    pub fn dyads(&self, k1: usize, k2: usize) -> u64 {
        self.links(k1, k2) + self.non_links(k1, k2)
    }

    /// Block pairs that carry counts: all ordered pairs when directed, the
    /// upper triangle otherwise.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.k;
        let directed = self.directed;
        (0..k).flat_map(move |a| (0..k).map(move |b| (a, b))).filter(move |&(a, b)| directed || a <= b)
    }

    /// Elementwise sum; both sides must share `k` and directedness.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.k != other.k || self.directed != other.directed {
            return Err(Error::DimensionMismatch("cannot merge stats with different shapes".into()));
        }
        for (a, b) in self.n_plus.iter_mut().zip(&other.n_plus) {
            *a += b;
        }
        for (a, b) in self.n_minus.iter_mut().zip(&other.n_minus) {
            *a += b;
        }
        for (a, b) in self.block_sizes.iter_mut().zip(&other.block_sizes) {
            *a += b;
        }
        self.n_total += other.n_total;
        Ok(())
    }

    /// Sufficient statistics of a single snapshot under `assignment`.
    pub fn from_snapshot(snapshot: &GraphSnapshot, assignment: &BlockAssignment, k: usize) -> Result<Self> {
        if assignment.n_nodes() != snapshot.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "assignment covers {} nodes, snapshot has {}",
                assignment.n_nodes(),
                snapshot.n_nodes()
            )));
        }
        if let Some(&label) = assignment.labels().iter().find(|&&l| l as usize >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        let directed = snapshot.directed();
        let mut stats = Self::zeros(k, directed);
        let labels = assignment.labels();
        for &l in labels {
            stats.block_sizes[l as usize] += 1;
        }
        stats.n_total = labels.len() as u64;
        for &(u, v) in snapshot.edges() {
            let (mut a, mut b) = (labels[u as usize] as usize, labels[v as usize] as usize);
            if !directed && a > b {
                std::mem::swap(&mut a, &mut b);
            }
            stats.n_plus[a * k + b] += 1;
        }
        for a in 0..k {
            for b in 0..k {
                if !directed && a > b {
                    continue;
                }
                let (ca, cb) = (stats.block_sizes[a], stats.block_sizes[b]);
                let dyads = if a == b {
                    let ordered = ca * ca.saturating_sub(1);
                    if directed { ordered } else { ordered / 2 }
                } else {
                    ca * cb
                };
                stats.n_minus[a * k + b] = dyads - stats.n_plus[a * k + b];
            }
        }
        Ok(stats)
    }
}

/// Pools statistics over a window of snapshots, each with its own assignment.
pub fn pool_stats(
    snapshots: &[GraphSnapshot],
    assignments: &[BlockAssignment],
    k: usize,
) -> Result<SbmSufficientStats> {
    if snapshots.is_empty() {
        return Err(Error::Empty);
    }
    if snapshots.len() != assignments.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} snapshots but {} assignments",
            snapshots.len(),
            assignments.len()
        )));
    }
    check_uniform(snapshots)?;
    let mut pooled = SbmSufficientStats::zeros(k, snapshots[0].directed());
    for (g, z) in snapshots.iter().zip(assignments) {
        pooled.merge(&SbmSufficientStats::from_snapshot(g, z, k)?)?;
    }
    Ok(pooled)
}

pub(crate) fn check_uniform(snapshots: &[GraphSnapshot]) -> Result<()> {
    let first = &snapshots[0];
    for g in snapshots {
        if g.n_nodes() != first.n_nodes() || g.directed() != first.directed() {
            return Err(Error::DimensionMismatch(
                "snapshots in a window must share node count and directedness".into(),
            ));
        }
    }
    Ok(())
}

fn xlogx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let xf = x as f64;
        xf * xf.ln()
    }
}

/// DNML code length split into its data-given-latent and latent parts, with
/// the log-complexity share of each part kept separately for thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DnmlCodeLength {
    pub total: f64,
    pub x_given_z: f64,
    pub z: f64,
    /// `ln C_{X|Z}`: sum of per-pair binomial complexities.
    pub log_complexity_xz: f64,
    /// `ln C_Z`: multinomial complexity of the memberships.
    pub log_complexity_z: f64,
}

impl std::ops::Add for DnmlCodeLength {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            total: self.total + o.total,
            x_given_z: self.x_given_z + o.x_given_z,
            z: self.z + o.z,
            log_complexity_xz: self.log_complexity_xz + o.log_complexity_xz,
            log_complexity_z: self.log_complexity_z + o.log_complexity_z,
        }
    }
}

/// DNML code length of a Bernoulli SBM in nats. Uses `0 ln 0 = 0`; block
/// pairs without dyads contribute nothing.
pub fn dnml_code_length(stats: &SbmSufficientStats, table: &LogComplexityTable) -> DnmlCodeLength {
    let mut entropy_xz = 0.0;
    let mut complexity_xz = 0.0;
    for (a, b) in stats.pairs() {
        let plus = stats.links(a, b);
        let minus = stats.non_links(a, b);
        let n = plus + minus;
        if n == 0 {
            continue;
        }
        entropy_xz += xlogx(n) - xlogx(plus) - xlogx(minus);
        complexity_xz += table.entry(n, 2);
    }
    let n = stats.n_total;
    let entropy_z = xlogx(n) - stats.block_sizes.iter().map(|&c| xlogx(c)).sum::<f64>();
    let complexity_z = table.entry(n, stats.k);
    let x_given_z = entropy_xz + complexity_xz;
    let z = entropy_z + complexity_z;
    DnmlCodeLength {
        total: x_given_z + z,
        x_given_z,
        z,
        log_complexity_xz: complexity_xz,
        log_complexity_z: complexity_z,
    }
}

/// How a window's code length is formed from its snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// One DNML code over the pooled counts of the whole window.
    #[default]
    Pooled,
    /// Sum of the DNML code lengths of the individual snapshots.
    PerSnapshot,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "per-snapshot" => Ok(Self::PerSnapshot),
            other => Err(Error::InvalidParameter(format!(
                "unknown window mode {other:?} (expected pooled or per-snapshot)"
            ))),
        }
    }
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pooled => "pooled",
            Self::PerSnapshot => "per-snapshot",
        })
    }
}

/// Code length of a window under the given mode, together with the pooled
/// statistics (always returned pooled, whatever the mode).
pub fn window_code_length(
    snapshots: &[GraphSnapshot],
    assignments: &[BlockAssignment],
    k: usize,
    table: &LogComplexityTable,
    mode: WindowMode,
) -> Result<(DnmlCodeLength, SbmSufficientStats)> {
    let pooled = pool_stats(snapshots, assignments, k)?;
    let code = match mode {
        WindowMode::Pooled => dnml_code_length(&pooled, table),
        WindowMode::PerSnapshot => {
            let mut acc = DnmlCodeLength::default();
            for (g, z) in snapshots.iter().zip(assignments) {
                acc = acc + dnml_code_length(&SbmSufficientStats::from_snapshot(g, z, k)?, table);
            }
            acc
        }
    };
    Ok((code, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nml::log_multinomial_complexity;

    fn table() -> LogComplexityTable {
        LogComplexityTable::new(10).unwrap()
    }

    fn complete(n: u32) -> GraphSnapshot {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        GraphSnapshot::new(n as usize, false, 0, edges).unwrap()
    }

    #[test]
    fn pooling_examples() {
        let g = GraphSnapshot::empty(4, false, 0);
        let z = BlockAssignment::single_block(4);
        let s = pool_stats(std::slice::from_ref(&g), std::slice::from_ref(&z), 1).unwrap();
        assert_eq!((s.links(0, 0), s.non_links(0, 0)), (0, 6));
        assert_eq!(s.block_sizes, vec![4]);

        let s2 = pool_stats(&[g.clone(), g], &[z.clone(), z], 1).unwrap();
        assert_eq!(s2.non_links(0, 0), 12);
        assert_eq!(s2.n_total, 8);

        let g = GraphSnapshot::new(4, false, 0, [(0, 1), (2, 3)]).unwrap();
        let z = BlockAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let s = pool_stats(&[g], &[z], 2).unwrap();
        assert_eq!(s.links(0, 0), 1);
        assert_eq!(s.links(1, 1), 1);
        assert_eq!(s.links(0, 1), 0);
        assert_eq!(s.non_links(0, 1), 4);
        assert_eq!(s.dyads(1, 0), 0, "lower triangle stays empty");
    }

    #[test]
    fn directed_counts_ordered_dyads() {
        let g = GraphSnapshot::new(3, true, 0, [(0, 1), (1, 0), (2, 0)]).unwrap();
        let z = BlockAssignment::new(vec![0, 0, 1], 2).unwrap();
        let s = pool_stats(&[g], &[z], 2).unwrap();
        assert_eq!(s.dyads(0, 0), 2);
        assert_eq!(s.links(0, 0), 2);
        assert_eq!(s.dyads(1, 0), 2);
        assert_eq!(s.links(1, 0), 1);
        assert_eq!(s.dyads(0, 1), 2);
        let total: u64 = s.pairs().map(|(a, b)| s.dyads(a, b)).sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn pooling_errors() {
        let g = GraphSnapshot::empty(4, false, 0);
        let z = BlockAssignment::single_block(4);
        assert!(pool_stats(&[g.clone()], &[], 1).is_err());
        let short = BlockAssignment::single_block(3);
        assert!(pool_stats(&[g.clone()], &[short], 1).is_err());
        let wide = BlockAssignment::new(vec![0, 1, 0, 0], 2).unwrap();
        assert!(matches!(pool_stats(&[g.clone()], &[wide], 1), Err(Error::LabelOutOfRange { .. })));
        let other = GraphSnapshot::empty(5, false, 1);
        assert!(pool_stats(&[g, other], &[z.clone(), BlockAssignment::single_block(5)], 1).is_err());
    }

    #[test]
    fn dnml_single_block_examples() {
        let t = table();
        let c62 = log_multinomial_complexity(6, 2).unwrap();
        for g in [GraphSnapshot::empty(4, false, 0), complete(4)] {
            let s = pool_stats(&[g], &[BlockAssignment::single_block(4)], 1).unwrap();
            let d = dnml_code_length(&s, &t);
            assert!((d.x_given_z - c62).abs() < 1e-12);
            assert_eq!(d.z, 0.0);
            assert!((d.total - c62).abs() < 1e-12);
        }
    }

    #[test]
    fn dnml_two_block_hand_check() {
        let g = GraphSnapshot::new(4, false, 0, [(0, 1), (2, 3)]).unwrap();
        let z = BlockAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let d = dnml_code_length(&pool_stats(&[g], &[z], 2).unwrap(), &table());
        assert!((d.total - 6.4968).abs() < 1e-3, "{}", d.total);
        assert_eq!(d.total, d.x_given_z + d.z);
    }

    #[test]
    fn per_snapshot_mode_sums_snapshots() {
        let t = table();
        let g1 = GraphSnapshot::new(4, false, 0, [(0, 1)]).unwrap();
        let g2 = GraphSnapshot::new(4, false, 1, [(2, 3), (0, 2)]).unwrap();
        let z = BlockAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let (per, pooled) =
            window_code_length(&[g1.clone(), g2.clone()], &[z.clone(), z.clone()], 2, &t, WindowMode::PerSnapshot)
                .unwrap();
        let a = dnml_code_length(&pool_stats(&[g1], &[z.clone()], 2).unwrap(), &t);
        let b = dnml_code_length(&pool_stats(&[g2], &[z], 2).unwrap(), &t);
        assert!((per.total - (a.total + b.total)).abs() < 1e-12);
        assert_eq!(pooled.n_total, 8);
    }

    #[test]
    fn window_mode_parses() {
        assert_eq!("pooled".parse::<WindowMode>().unwrap(), WindowMode::Pooled);
        assert_eq!("per-snapshot".parse::<WindowMode>().unwrap(), WindowMode::PerSnapshot);
        assert!("sum".parse::<WindowMode>().is_err());
    }
}
