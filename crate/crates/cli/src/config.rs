//! Key-value configuration files and their merge with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use latent_change::{DetectorConfig, ScenarioKind, WindowMode};
use serde::Deserialize;

/// Settings read from a TOML file of `key = value` lines. Every key is
/// optional; flags given on the command line take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub h: Option<usize>,
    pub h_values: Option<Vec<usize>>,
    pub delta: Option<f64>,
    pub delta_xz: Option<f64>,
    pub delta_z: Option<f64>,
    #[serde(alias = "k_max")]
    pub kmax: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub window_mode: Option<String>,
    pub patience: Option<usize>,
    pub scenario: Option<String>,
    pub trials: Option<usize>,
    pub nodes: Option<usize>,
    pub threads: Option<usize>,
    pub baselines: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn window_mode(&self) -> Result<Option<WindowMode>> {
        Ok(self.window_mode.as_deref().map(str::parse).transpose()?)
    }

    pub fn scenario(&self) -> Result<Option<ScenarioKind>> {
        Ok(self.scenario.as_deref().map(str::parse).transpose()?)
    }
}

/// Detector settings that may come from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorOverrides {
    pub h: Option<usize>,
    pub delta: Option<f64>,
    pub delta_xz: Option<f64>,
    pub delta_z: Option<f64>,
    pub k_max: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub window_mode: Option<WindowMode>,
    pub patience: Option<usize>,
}

/// Flags over file values over defaults. A patience of 0 disables early
/// stopping of the block-count scan.
pub fn resolve_detector(flags: &DetectorOverrides, file: &FileConfig) -> Result<DetectorConfig> {
    let d = DetectorConfig::default();
    let patience = match flags.patience.or(file.patience) {
        Some(0) => None,
        Some(p) => Some(p),
        None => d.patience,
    };
    let config = DetectorConfig {
        h: flags.h.or(file.h).unwrap_or(d.h),
        delta: flags.delta.or(file.delta).unwrap_or(d.delta),
        delta_xz: flags.delta_xz.or(file.delta_xz).unwrap_or(d.delta_xz),
        delta_z: flags.delta_z.or(file.delta_z).unwrap_or(d.delta_z),
        k_max: flags.k_max.or(file.kmax).unwrap_or(d.k_max),
        restarts: flags.restarts.or(file.restarts).unwrap_or(d.restarts),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        window_mode: match flags.window_mode {
            Some(m) => m,
            None => file.window_mode()?.unwrap_or(d.window_mode),
        },
        patience,
    };
    config.validate()?;
    Ok(config)
}

/// Fails unless the directory that will hold `path` exists.
pub fn check_output(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(())
}

pub fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} not found", path.display());
    }
    Ok(())
}

/// `reports.csv` -> `reports.json`; a `.json` output gets `.summary.json`.
pub fn sidecar_path(output: &Path, suffix: &str) -> PathBuf {
    let candidate = output.with_extension(suffix);
    if candidate == output {
        output.with_extension(format!("summary.{suffix}"))
    } else {
        candidate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = FileConfig::parse("h = 3\ndelta = 0.1\nkmax = 6\nwindow_mode = \"per-snapshot\"\n").unwrap();
        let flags = DetectorOverrides { h: Some(4), ..Default::default() };
        let c = resolve_detector(&flags, &file).unwrap();
        assert_eq!(c.h, 4);
        assert_eq!(c.delta, 0.1);
        assert_eq!(c.k_max, 6);
        assert_eq!(c.window_mode, WindowMode::PerSnapshot);
        assert_eq!(c.delta_z, DetectorConfig::default().delta_z);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FileConfig::parse("bogus = 1\n").is_err());
        let file = FileConfig::parse("delta = 1.5\n").unwrap();
        assert!(resolve_detector(&DetectorOverrides::default(), &file).is_err());
        let file = FileConfig::parse("window_mode = \"sideways\"\n").unwrap();
        assert!(resolve_detector(&DetectorOverrides::default(), &file).is_err());
    }

    #[test]
    fn zero_patience_scans_everything() {
        let flags = DetectorOverrides { patience: Some(0), ..Default::default() };
        let c = resolve_detector(&flags, &FileConfig::default()).unwrap();
        assert_eq!(c.patience, None);
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("out/r.csv"), "json"), PathBuf::from("out/r.json"));
        assert_eq!(sidecar_path(Path::new("r.json"), "json"), PathBuf::from("r.summary.json"));
        assert_eq!(sidecar_path(Path::new("s.txt"), "truth.json"), PathBuf::from("s.truth.json"));
    }
}
