//! Experiment configuration: TOML sections `[experiment]`, `[kernel]`,
//! `[schedule]`, `[forecaster]`, `[adversary]`, `[ewa]` and `[effdim]`.
//!
//! Every key has a default, so an empty file is a valid (smooth, `d = 1`)
//! experiment. Overrides use `section.key=value`, where `value` is read as a
//! TOML value and falls back to a bare string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaar::{Schedule, DEFAULT_EPSILON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub kernel: KernelSection,
    pub schedule: ScheduleSection,
    pub forecaster: ForecasterSection,
    pub adversary: AdversarySection,
    pub ewa: EwaSection,
    pub effdim: EffDimSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    /// Every checkpoint horizon is a separate game tuned for that horizon.
    PerHorizon,
    /// One game of the full horizon, tuned once, sampled at checkpoints.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    /// Horizon `n`.
    pub horizon: usize,
    /// Regret checkpoints; powers of two up to `horizon` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// First seed; games use `seed, seed + 1, ..`.
    pub seed: u64,
    pub n_seeds: usize,
    /// Label bound `M`.
    pub label_bound: f64,
    pub tuning: Tuning,
    /// Floor applied to nonpositive regrets before the log-log fit.
    pub regret_floor: f64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "experiment".into(),
            horizon: 1024,
            checkpoints: None,
            seed: 0,
            n_seeds: 1,
            label_bound: 1.0,
            tuning: Tuning::PerHorizon,
            regret_floor: 1e-9,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub d: usize,
    /// RKHS smoothness; taken from the schedule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { d: 1, s: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Smooth,
    Hard,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub regime: RegimeKind,
    /// Comparator smoothness `beta`.
    pub beta: f64,
    /// Integrability `p`; `inf` for Hölder balls.
    pub p: f64,
    pub epsilon: f64,
    /// Regularization for the manual regime.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { regime: RegimeKind::Smooth, beta: 1.0, p: 2.0, epsilon: DEFAULT_EPSILON, tau: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Kaar,
    KaarClipped,
    Ewa,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterSection {
    pub kind: ForecasterKind,
}

impl Default for ForecasterSection {
    fn default() -> Self {
        ForecasterSection { kind: ForecasterKind::Kaar }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Shattering,
    Iid,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    Representer,
    Bump,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    pub stream: StreamKind,
    /// Comparator for iid and replay streams; shattering streams always use
    /// their matched bump comparator.
    pub comparator: ComparatorKind,
    pub noise_sd: f64,
    /// `|f|^2` of the representer comparator.
    pub norm_sq: f64,
    pub n_centers: usize,
    /// Bump-class grid parameter for iid bump comparators.
    pub n_grid: usize,
    /// Stream CSV for the replay stream.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream_file: Option<PathBuf>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            stream: StreamKind::Shattering,
            comparator: ComparatorKind::Representer,
            noise_sd: 0.1,
            norm_sq: 0.19,
            n_centers: 5,
            n_grid: 8,
            stream_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EwaSection {
    /// Net scale; `n^{-beta/(beta+1)}`, coarsened until the net fits, when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub max_experts: usize,
}

impl Default for EwaSection {
    fn default() -> Self {
        EwaSection { epsilon: None, max_experts: 1 << 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Equispaced,
    Uniform,
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffDimSection {
    pub layouts: Vec<Layout>,
    pub n: Vec<usize>,
    pub tau: Vec<f64>,
}

impl Default for EffDimSection {
    fn default() -> Self {
        EffDimSection { layouts: vec![Layout::Equispaced], n: vec![256, 512, 1024, 2048], tau: vec![1.0] }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text`, applies `overrides` and validates the result.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Resolved configuration as TOML; reparses to an equal value.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checkpoints, defaulting to powers of two up to the horizon.
    pub fn checkpoints(&self) -> Vec<usize> {
        self.experiment.checkpoints.clone().unwrap_or_else(|| default_checkpoints(self.experiment.horizon))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.experiment.n_seeds as u64).map(|i| self.experiment.seed + i).collect()
    }

    /// Schedule for horizon `n`.
    pub fn schedule(&self, n: usize) -> Result<Schedule> {
        let s = &self.schedule;
        Ok(match s.regime {
            RegimeKind::Smooth => Schedule { p: s.p, epsilon: s.epsilon, ..Schedule::smooth(s.beta, n) },
            RegimeKind::Hard => Schedule::hard(s.beta, s.p, s.epsilon, n),
            RegimeKind::Manual => {
                let tau = s.tau.ok_or_else(|| Error::Config("manual regime needs schedule.tau".into()))?;
                let smooth = self.kernel.s.ok_or_else(|| Error::Config("manual regime needs kernel.s".into()))?;
                Schedule { beta: s.beta, p: s.p, ..Schedule::manual(smooth, tau, n) }
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let fail = |m: String| Err(Error::Config(m));
        if e.horizon == 0 {
            return fail("experiment.horizon must be at least 1".into());
        }
        if e.n_seeds == 0 {
            return fail("experiment.n_seeds must be at least 1".into());
        }
        if !(e.label_bound > 0.0) || !e.label_bound.is_finite() {
            return fail(format!("experiment.label_bound must be positive, got {}", e.label_bound));
        }
        if !(e.regret_floor > 0.0) {
            return fail("experiment.regret_floor must be positive".into());
        }
        if let Some(cps) = &e.checkpoints {
            if cps.is_empty() || cps.iter().any(|&c| c == 0 || c > e.horizon) {
                return fail(format!("checkpoints must lie in [1, {}]", e.horizon));
            }
            if cps.windows(2).any(|w| w[0] >= w[1]) {
                return fail("checkpoints must be strictly increasing".into());
            }
        }
        if self.kernel.d == 0 {
            return fail("kernel.d must be at least 1".into());
        }
        let s = &self.schedule;
        if !(s.p >= 2.0) {
            return fail(format!("schedule.p must be at least 2, got {}", s.p));
        }
        self.schedule(e.horizon)?.validate(self.kernel.d).map_err(|err| Error::Config(err.to_string()))?;
        if let Some(smooth) = self.kernel.s {
            if !(smooth > self.kernel.d as f64 / 2.0) {
                return fail(format!("kernel.s must exceed d/2, got {smooth}"));
            }
        }
        let a = &self.adversary;
        if !(a.noise_sd >= 0.0) || !(a.norm_sq >= 0.0) || a.n_centers == 0 || a.n_grid == 0 {
            return fail("adversary parameters out of range".into());
        }
        if a.stream == StreamKind::Replay && a.stream_file.is_none() {
            return fail("replay stream needs adversary.stream_file".into());
        }
        if let Some(eps) = self.ewa.epsilon {
            if !(eps > 0.0) {
                return fail(format!("ewa.epsilon must be positive, got {eps}"));
            }
        }
        if self.ewa.max_experts == 0 {
            return fail("ewa.max_experts must be at least 1".into());
        }
        let ed = &self.effdim;
        if ed.tau.iter().any(|t| !(*t > 0.0)) || ed.n.iter().any(|&n| n < 2) {
            return fail("effdim grid needs tau > 0 and n >= 2".into());
        }
        Ok(())
    }
}

/// `1, 2, 4, ..` up to `n`.
pub fn default_checkpoints(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&c| c.checked_mul(2)).take_while(|&c| c <= n).collect()
}

/// Applies one `section.key=value` override to a parsed table.
pub fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {entry:?} is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key {path:?} is not of the form section.key")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sect = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{section} is not a section")))?;
    sect.insert(key.to_string(), value);
    Ok(())
}
