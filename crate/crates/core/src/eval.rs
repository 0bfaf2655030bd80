//! Benefit and false-alarm-rate metrics, and repeated-trial experiments on
//! the synthetic scenarios comparing the detector against the baselines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::{deltacon_scores, snapshot_code_lengths, tbe_scores, TbeConfig};
use crate::detector::{ChangeReport, DetectorConfig, HierarchicalDetector};
use crate::error::{invalid, Result};
use crate::nml::LogComplexityTable;
use crate::rng::derive_seed;
use crate::stream::{generate, GeneratedStream, ScenarioKind, DEFAULT_NODES};

/// Benefit decay horizon `T`.
pub const DEFAULT_HORIZON: f64 = 5.0;
/// Length `U` of the pre-change window where alarms count as false.
pub const DEFAULT_GUARD: usize = 10;
pub const TBE_GRID: [f64; 3] = [0.2, 0.5, 0.8];
pub const DELTACON_GRID: [f64; 7] = [0.02, 0.025, 0.03, 0.035, 0.04, 0.045, 0.05];

/// `max(1 - |t_hat - t_star| / horizon, 0)` for a detection at or after the
/// change; 0 without one.
pub fn benefit(t_hat: Option<i64>, t_star: i64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("benefit horizon must be positive, got {horizon}")));
    }
    Ok(match t_hat {
        Some(t) if t >= t_star => (1.0 - (t - t_star) as f64 / horizon).max(0.0),
        _ => 0.0,
    })
}

/// A score and the threshold it is compared against at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePoint {
    pub t: i64,
    pub score: f64,
    pub threshold: f64,
}

impl ScorePoint {
    pub fn exceeds(&self) -> bool {
        self.score > self.threshold
    }
}

/// Pairs a constant threshold with every score.
pub fn with_threshold(times: &[i64], scores: &[f64], threshold: f64) -> Vec<ScorePoint> {
    times.iter().zip(scores).map(|(&t, &score)| ScorePoint { t, score, threshold }).collect()
}

/// Earliest exceedance at or after `t_star`.
pub fn first_detection(series: &[ScorePoint], t_star: i64) -> Option<i64> {
    series.iter().filter(|p| p.t >= t_star && p.exceeds()).map(|p| p.t).min()
}

/// Fraction of points in `t_star - guard < t < t_star` that exceed their
/// threshold.
pub fn far(series: &[ScorePoint], t_star: i64, guard: usize) -> Result<f64> {
    if guard == 0 {
        return Err(invalid("guard length must be >= 1"));
    }
    let lo = t_star - guard as i64;
    let window: Vec<&ScorePoint> = series.iter().filter(|p| p.t > lo && p.t < t_star).collect();
    if window.is_empty() {
        return Err(invalid(format!("no scores in the guard window ({lo}, {t_star})")));
    }
    Ok(window.iter().filter(|p| p.exceeds()).count() as f64 / window.len() as f64)
}

/// Benefit and FAR of one score series at one change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub t_hat: Option<i64>,
    pub benefit: f64,
    pub far: f64,
}

pub fn evaluate(series: &[ScorePoint], t_star: i64, horizon: f64, guard: usize) -> Result<LevelOutcome> {
    let t_hat = first_detection(series, t_star);
    Ok(LevelOutcome { t_hat, benefit: benefit(t_hat, t_star, horizon)?, far: far(series, t_star, guard)? })
}

/// Score series the detector offers for change `level`: the full statistic
/// for level 3, the latent part for level 2 and the data-given-latent part
/// for level 1. A report splitting after time `t` is placed at `t + 1`, the
/// first snapshot of its right half.
pub fn hcdl_series(reports: &[ChangeReport], level: u8) -> Vec<ScorePoint> {
    reports
        .iter()
        .map(|r| {
            let (score, threshold) = match level {
                3 => (r.phi, r.eps),
                2 => (r.phi_z, r.eps_z),
                _ => (r.phi_xz, r.eps_xz),
            };
            ScorePoint { t: r.t + 1, score, threshold }
        })
        .collect()
}

/// Change onset used as `t_star` for each level.
pub fn change_time(stream: &GeneratedStream, level: u8) -> Result<i64> {
    stream
        .scenario
        .transition(level)
        .map(|t| t.start as i64)
        .ok_or_else(|| invalid(format!("scenario has no level-{level} change")))
}

/// Experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub n_nodes: usize,
    pub trials: usize,
    pub h_values: Vec<usize>,
    /// Base detector settings; `h` is overridden by each entry of `h_values`.
    pub detector: DetectorConfig,
    pub tbe: TbeConfig,
    /// FaBP coupling; `None` uses `1 / (1 + max degree)` per pair.
    pub deltacon_eps: Option<f64>,
    pub baselines: bool,
    pub horizon: f64,
    pub guard: usize,
    pub seed: u64,
    /// Worker threads for independent trials; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Abrupt,
            n_nodes: DEFAULT_NODES,
            trials: 20,
            h_values: vec![2],
            detector: DetectorConfig::default(),
            tbe: TbeConfig::default(),
            deltacon_eps: None,
            baselines: true,
            horizon: DEFAULT_HORIZON,
            guard: DEFAULT_GUARD,
            seed: 0,
            threads: None,
        }
    }
}

/// Per-trial outcome of one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub method: String,
    pub h: Option<usize>,
    pub level: u8,
    pub t_star: i64,
    pub threshold: Option<f64>,
    #[serde(flatten)]
    pub outcome: LevelOutcome,
}

/// Mean and standard deviation over trials of one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub h: Option<usize>,
    pub level: u8,
    pub t_star: i64,
    /// Tuned threshold for baselines; the detector uses its own.
    pub threshold: Option<f64>,
    pub benefit_mean: f64,
    pub benefit_std: f64,
    pub far_mean: f64,
    pub far_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: ScenarioKind,
    pub trials: usize,
    pub rows: Vec<MethodRow>,
    pub details: Vec<TrialOutcome>,
}

impl ExperimentResult {
    pub fn row(&self, method: &str, h: Option<usize>, level: u8) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method && r.h == h && r.level == level)
    }
}

pub const LEVELS: [u8; 3] = [3, 2, 1];

/// Raw material of one trial.
struct TrialScores {
    times: Vec<i64>,
    t_star: [i64; 3],
    hcdl: Vec<(usize, Vec<ChangeReport>)>,
    tbe: Option<Vec<f64>>,
    deltacon: Option<Vec<f64>>,
}

fn level_index(level: u8) -> usize {
    3 - level as usize
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialScores> {
    let seed = derive_seed(config.seed, &[trial as u64]);
    let stream = generate(config.scenario, config.n_nodes, seed)?;
    let mut t_star = [0i64; 3];
    for level in LEVELS {
        t_star[level_index(level)] = change_time(&stream, level)?;
    }
    let mut hcdl = Vec::with_capacity(config.h_values.len());
    for &h in &config.h_values {
        let detector_config = DetectorConfig { h, seed: derive_seed(seed, &[1, h as u64]), ..config.detector };
        let outcome = HierarchicalDetector::new(detector_config)?.run(&stream.snapshots)?;
        hcdl.push((h, outcome.reports));
    }
    let (tbe, deltacon) = if config.baselines {
        let true_k: Vec<usize> = (1..=stream.snapshots.len())
            .map(|t| stream.scenario.k_at(t).expect("segments cover the stream"))
            .collect();
        let table = LogComplexityTable::new(config.tbe.k_max)?;
        let codes = snapshot_code_lengths(
            &stream.snapshots,
            config.tbe.k_max,
            config.tbe.restarts,
            derive_seed(seed, &[2]),
            &table,
        )?;
        let tbe = tbe_scores(&codes, &true_k, config.tbe.eta, config.tbe.alpha)?;
        (Some(tbe), Some(deltacon_scores(&stream.snapshots, config.deltacon_eps)?))
    } else {
        (None, None)
    };
    log::info!("trial {trial} of {} done", config.trials);
    Ok(TrialScores {
        times: stream.snapshots.iter().map(|g| g.timestamp()).collect(),
        t_star,
        hcdl,
        tbe,
        deltacon,
    })
}

fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialScores>> {
    let workers = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, config.trials.max(1));
    if workers == 1 {
        return (0..config.trials).map(|i| run_trial(config, i)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<TrialScores>>> = (0..config.trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= config.trials {
                            break done;
                        }
                        done.push((i, run_trial(config, i)));
                    }
                })
            })
            .collect();
        for handle in handles {
            for (i, r) in handle.join().expect("trial worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Picks the grid threshold maximizing the harmonic mean of the mean level-3
/// benefit and one minus the mean level-3 FAR; ties keep the earlier entry.
pub fn tune_threshold(
    series: &[(Vec<i64>, Vec<f64>, i64)],
    grid: &[f64],
    horizon: f64,
    guard: usize,
) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &threshold in grid {
        let mut benefits = Vec::with_capacity(series.len());
        let mut fars = Vec::with_capacity(series.len());
        for (times, scores, t_star) in series {
            let o = evaluate(&with_threshold(times, scores, threshold), *t_star, horizon, guard)?;
            benefits.push(o.benefit);
            fars.push(o.far);
        }
        let score = harmonic_mean(mean_std(&benefits).0, 1.0 - mean_std(&fars).0);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((threshold, score));
        }
    }
    best.map(|(t, _)| t).ok_or_else(|| invalid("empty threshold grid"))
}

/// Runs `config.trials` independent streams through the detector (one run
/// per `h`) and, if enabled, both baselines, then aggregates benefit and FAR
/// per method and level.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    if config.h_values.is_empty() && !config.baselines {
        return Err(invalid("nothing to evaluate: no h values and baselines disabled"));
    }
    config.detector.validate()?;
    let trials = run_trials(config)?;
    let mut details = Vec::new();

    for (hi, &h) in config.h_values.iter().enumerate() {
        for (trial, scores) in trials.iter().enumerate() {
            let reports = &scores.hcdl[hi].1;
            for level in LEVELS {
                let t_star = scores.t_star[level_index(level)];
                let outcome = evaluate(&hcdl_series(reports, level), t_star, config.horizon, config.guard)?;
                details.push(TrialOutcome {
                    trial,
                    method: "HCDL".into(),
                    h: Some(h),
                    level,
                    t_star,
                    threshold: None,
                    outcome,
                });
            }
        }
    }

    if config.baselines {
        let baselines: [(&str, &[f64], fn(&TrialScores) -> &Vec<f64>); 2] = [
            ("TBE", &TBE_GRID, |s| s.tbe.as_ref().expect("baselines ran")),
            ("DeltaCon", &DELTACON_GRID, |s| s.deltacon.as_ref().expect("baselines ran")),
        ];
        for (name, grid, get) in baselines {
            let tuning: Vec<_> =
                trials.iter().map(|s| (s.times.clone(), get(s).clone(), s.t_star[0])).collect();
            let threshold = tune_threshold(&tuning, grid, config.horizon, config.guard)?;
            for (trial, scores) in trials.iter().enumerate() {
                let series = with_threshold(&scores.times, get(scores), threshold);
                for level in LEVELS {
                    let t_star = scores.t_star[level_index(level)];
                    details.push(TrialOutcome {
                        trial,
                        method: name.into(),
                        h: None,
                        level,
                        t_star,
                        threshold: Some(threshold),
                        outcome: evaluate(&series, t_star, config.horizon, config.guard)?,
                    });
                }
            }
        }
    }

    let mut rows: Vec<MethodRow> = Vec::new();
    for d in &details {
        if rows.iter().any(|r| r.method == d.method && r.h == d.h && r.level == d.level) {
            continue;
        }
        let group: Vec<&TrialOutcome> =
            details.iter().filter(|x| x.method == d.method && x.h == d.h && x.level == d.level).collect();
        let (benefit_mean, benefit_std) = mean_std(&group.iter().map(|x| x.outcome.benefit).collect::<Vec<_>>());
        let (far_mean, far_std) = mean_std(&group.iter().map(|x| x.outcome.far).collect::<Vec<_>>());
        rows.push(MethodRow {
            method: d.method.clone(),
            h: d.h,
            level: d.level,
            t_star: d.t_star,
            threshold: d.threshold,
            benefit_mean,
            benefit_std,
            far_mean,
            far_std,
        });
    }
    Ok(ExperimentResult { scenario: config.scenario, trials: config.trials, rows, details })
}

/// Writes the aggregated rows as CSV.
pub fn write_result_csv<W: Write>(writer: W, result: &ExperimentResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "scenario",
        "method",
        "h",
        "level",
        "t_star",
        "threshold",
        "benefit_mean",
        "benefit_std",
        "far_mean",
        "far_std",
    ])?;
    for r in &result.rows {
        out.write_record([
            result.scenario.to_string(),
            r.method.clone(),
            r.h.map(|h| h.to_string()).unwrap_or_default(),
            r.level.to_string(),
            r.t_star.to_string(),
            r.threshold.map(|t| t.to_string()).unwrap_or_default(),
            format!("{:.4}", r.benefit_mean),
            format!("{:.4}", r.benefit_std),
            format!("{:.4}", r.far_mean),
            format!("{:.4}", r.far_std),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn benefit_examples() {
        assert_eq!(benefit(Some(60), 60, 5.0).unwrap(), 1.0);
        assert!((benefit(Some(62), 60, 5.0).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(benefit(Some(66), 60, 5.0).unwrap(), 0.0);
        assert_eq!(benefit(Some(59), 60, 5.0).unwrap(), 0.0);
        assert_eq!(benefit(None, 60, 5.0).unwrap(), 0.0);
        assert!(benefit(Some(60), 60, 0.0).is_err());
        assert!(benefit(Some(60), 60, -1.0).is_err());
    }

    fn series(scores: &[f64], start: i64) -> Vec<ScorePoint> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &score)| ScorePoint { t: start + i as i64, score, threshold: 1.0 })
            .collect()
    }

    #[test]
    fn far_examples() {
        // guard window for t_star = 20, U = 10 is t = 11..=19
        let below = series(&[0.0; 30], 1);
        assert_eq!(far(&below, 20, 10).unwrap(), 0.0);
        let above = series(&[2.0; 30], 1);
        assert_eq!(far(&above, 20, 10).unwrap(), 1.0);
        let mut scores = vec![0.0; 30];
        scores[12] = 2.0; // t = 13
        scores[17] = 2.0; // t = 18
        let two = series(&scores, 1);
        assert!((far(&two, 20, 10).unwrap() - 2.0 / 9.0).abs() < 1e-12);
        // a 10-point guard window with two exceedances
        let ten: Vec<ScorePoint> = (0..10)
            .map(|i| ScorePoint { t: 11 + i, score: if i < 2 { 2.0 } else { 0.0 }, threshold: 1.0 })
            .collect();
        assert!((far(&ten, 21, 11).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn far_rejects_empty_guard() {
        let s = series(&[0.0; 5], 50);
        assert!(far(&s, 20, 10).is_err());
        assert!(far(&s, 52, 0).is_err());
    }

    #[test]
    fn first_detection_ignores_earlier_alarms() {
        let mut scores = vec![0.0; 30];
        scores[5] = 3.0; // t = 6
        scores[22] = 3.0; // t = 23
        let s = series(&scores, 1);
        assert_eq!(first_detection(&s, 20), Some(23));
        let o = evaluate(&s, 20, 5.0, 10).unwrap();
        assert_eq!(o.t_hat, Some(23));
        assert!((o.benefit - 0.4).abs() < 1e-12);
        assert_eq!(o.far, 0.0);
    }

    #[test]
    fn hcdl_series_shifts_to_right_half() {
        let r = ChangeReport {
            t: 59,
            position: 59,
            phi: 5.0,
            phi_xz: 1.0,
            phi_z: 2.0,
            delta_l: 2.0,
            eps: 4.0,
            eps_xz: 3.0,
            eps_z: 1.5,
            k_hat: 4,
            k_hat1: 3,
            k_hat2: 4,
            alarm_level3: true,
            alarm_level2: false,
            alarm_level1: false,
            w_xz: None,
            w_z: None,
        };
        let s3 = hcdl_series(std::slice::from_ref(&r), 3);
        assert_eq!(s3[0], ScorePoint { t: 60, score: 5.0, threshold: 4.0 });
        let s2 = hcdl_series(std::slice::from_ref(&r), 2);
        assert!(s2[0].exceeds());
        let s1 = hcdl_series(std::slice::from_ref(&r), 1);
        assert!(!s1[0].exceeds());
    }

    #[test]
    fn tuning_prefers_clean_threshold() {
        // spike of 0.6 at the change, noise of 0.3 before it
        let times: Vec<i64> = (1..=80).collect();
        let mut scores = vec![0.3; 80];
        scores[59] = 0.6;
        let t = tune_threshold(&[(times, scores, 60)], &[0.2, 0.5, 0.8], 5.0, 10).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn rejects_zero_trials() {
        let config = ExperimentConfig { trials: 0, ..ExperimentConfig::default() };
        assert!(run_experiment(&config).is_err());
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_monotone(
            scores in proptest::collection::vec(0.0f64..10.0, 40),
            lo in 0.0f64..5.0,
            gap in 0.0f64..5.0,
        ) {
            let times: Vec<i64> = (1..=40).collect();
            let loose = evaluate(&with_threshold(&times, &scores, lo), 25, 5.0, 10).unwrap();
            let tight = evaluate(&with_threshold(&times, &scores, lo + gap), 25, 5.0, 10).unwrap();
            for o in [loose, tight] {
                prop_assert!((0.0..=1.0).contains(&o.benefit));
                prop_assert!((0.0..=1.0).contains(&o.far));
            }
            prop_assert!(loose.far >= tight.far);
            prop_assert!(loose.benefit >= tight.benefit);
        }
    }
}
