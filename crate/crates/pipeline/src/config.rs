//! Pipeline configuration: every numeric constant of the construction
//! pipeline lives here, loaded from one TOML file and hashed into the
//! manifest header for auditability.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use segforge_core::filter::FilterConfig;
use segforge_core::Task;
use segforge_gateway::GatewayConfig;
use segforge_instruct::{PointRule, ScoreThresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    /// Roots holding `images/*.png` and `masks/*.png` with matching stems.
    pub roots: Vec<PathBuf>,
    /// Taxonomy table path (tab-separated; see segforge-core).
    pub taxonomy: Option<PathBuf>,
    pub taxonomy_id: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { roots: Vec::new(), taxonomy: None, taxonomy_id: "unified-v1".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TilingConfig {
    pub tile: u32,
    pub stride: u32,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self { tile: 512, stride: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasoningConfig {
    /// Fraction of most category-diverse patches eligible for reasoning.
    pub diversity_quantile: f64,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self { diversity_quantile: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractiveConfig {
    /// Probability that an interactive record uses a box instead of points.
    pub box_fraction: f64,
}

impl Default for InteractiveConfig {
    fn default() -> Self {
        Self { box_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub interactive_final_multiplier: f64,
    pub total_steps: u64,
    /// Data-proportional base shares; must sum to 1.
    pub base_shares: BTreeMap<Task, f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            interactive_final_multiplier: 0.7,
            total_steps: 10_000,
            base_shares: BTreeMap::from([
                (Task::Interactive, 0.42),
                (Task::Referring, 0.29),
                (Task::Reasoning, 0.29),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    pub generator: String,
    pub gate: String,
    pub evaluators: [String; 2],
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            generator: "generator".into(),
            gate: "gate-judge".into(),
            evaluators: ["judge-a".into(), "judge-b".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for patch processing; 0 uses the rayon default.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Stop after this many patches (0 = no limit); the checkpoint still
    /// covers the processed prefix, so a later run resumes.
    pub max_patches: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 42, workers: 0, out_dir: PathBuf::from("out"), max_patches: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub default_threshold: u8,
    pub overrides: BTreeMap<String, u8>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { default_threshold: 7, overrides: BTreeMap::new() }
    }
}

impl ScoringConfig {
    pub fn thresholds(&self) -> ScoreThresholds {
        ScoreThresholds { default: self.default_threshold, overrides: self.overrides.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub tiling: TilingConfig,
    pub filter: FilterConfig,
    pub points: PointRule,
    pub scoring: ScoringConfig,
    pub reasoning: ReasoningConfig,
    pub interactive: InteractiveConfig,
    pub schedule: ScheduleConfig,
    pub models: ModelsConfig,
    pub run: RunConfig,
    pub gateway: GatewayConfig,
}

impl PipelineConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.as_ref().display()))?;
        let cfg: PipelineConfig = toml::from_str(&text).context("parsing config TOML")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.filter;
        if !(0.0..=1.0).contains(&f.area_min) || !(0.0..=1.0).contains(&f.area_max) || f.area_min > f.area_max {
            bail!("filter area bounds must satisfy 0 <= area_min <= area_max <= 1");
        }
        if f.proximity_px < 0.0 {
            bail!("filter.proximity_px must be non-negative");
        }
        if f.cap_per_category == 0 {
            bail!("filter.cap_per_category must be >= 1");
        }
        if self.tiling.tile == 0 || self.tiling.stride == 0 {
            bail!("tiling.tile and tiling.stride must be >= 1");
        }
        let dist_sum: f64 = self.points.dist.iter().sum();
        if (dist_sum - 1.0).abs() > 1e-9 || self.points.dist.iter().any(|p| *p < 0.0) {
            bail!("points.dist must be a probability vector");
        }
        if !(self.reasoning.diversity_quantile > 0.0 && self.reasoning.diversity_quantile <= 1.0) {
            bail!("reasoning.diversity_quantile must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.interactive.box_fraction) {
            bail!("interactive.box_fraction must lie in [0, 1]");
        }
        if !(1..=10).contains(&self.scoring.default_threshold) {
            bail!("scoring.default_threshold must lie in 1..=10");
        }
        if self.models.evaluators[0] == self.models.evaluators[1] {
            bail!("models.evaluators must name two distinct models");
        }
        self.gateway.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(())
    }

    /// Hash of the full configuration; stamped into the manifest header so a
    /// manifest can always be traced back to the settings that built it.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_encode_the_documented_constants() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.filter.area_min, 0.005);
        assert_eq!(cfg.filter.area_max, 0.70);
        assert_eq!(cfg.filter.max_siblings, 6);
        assert_eq!(cfg.filter.proximity_px, 15.0);
        assert_eq!(cfg.filter.cap_per_category, 2);
        assert_eq!(cfg.points.small_area, 200);
        assert_eq!(cfg.points.dist, [0.6, 0.2, 0.2]);
        assert_eq!(cfg.tiling.tile, 512);
        assert_eq!(cfg.tiling.stride, 256);
        assert_eq!(cfg.schedule.interactive_final_multiplier, 0.7);
        assert_eq!(cfg.reasoning.diversity_quantile, 0.1);
        assert_eq!(cfg.scoring.default_threshold, 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.config_hash(), PipelineConfig::default().config_hash());
        let mut other = cfg.clone();
        other.run.seed = 43;
        assert_ne!(cfg.config_hash(), other.config_hash());
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let parsed: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, cfg);

        // sparse config files inherit defaults
        let sparse: PipelineConfig = toml::from_str("[run]\nseed = 7\n").unwrap();
        assert_eq!(sparse.run.seed, 7);
        assert_eq!(sparse.filter.max_siblings, 6);
    }

    #[test]
    fn validation_rejects_out_of_range_thresholds() {
        let mut cfg = PipelineConfig::default();
        cfg.filter.area_min = 0.9;
        assert!(cfg.validate().is_err());

        let mut cfg = PipelineConfig::default();
        cfg.points.dist = [0.5, 0.2, 0.2];
        assert!(cfg.validate().is_err());

        let mut cfg = PipelineConfig::default();
        cfg.models.evaluators = ["same".into(), "same".into()];
        assert!(cfg.validate().is_err());
    }
}
