//! Scenario files: TOML with one section per subsystem.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::experiment::trial::{EngineConfig, Method};
use crate::galvo::{GalvoConfig, OpticsConfig};
use crate::ppm::SegNoiseConfig;
use crate::scene::SceneConfig;

/// What the experiment subcommands sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// Gaze points per stage for the recall curve.
    pub budgets: Vec<u64>,
    /// Trials per scene.
    pub seeds: u64,
    /// Scene variants drawn from the scene section.
    pub scenes: u64,
    /// High-prior area fractions of the proportion sweep.
    pub proportions: Vec<f64>,
    pub sweep_budget: u64,
    pub sweep_methods: Vec<Method>,
    /// Prior of the high-probability band in generated sweep scenes.
    pub sweep_high_prior: f64,
    pub sweep_low_prior: f64,
    pub ablation_budget: u64,
    pub presets: Vec<String>,
    pub deviation_budget: u64,
    /// Method and budget of the `trial` subcommand.
    pub trial_method: Method,
    pub trial_budget: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::PpmPs,
                Method::PpmOnly,
                Method::Rpm,
                Method::Mpf,
                Method::Uniform,
            ],
            budgets: vec![100, 200, 300, 400, 500, 600, 700, 800],
            seeds: 20,
            scenes: 5,
            proportions: vec![0.27, 0.35, 0.41, 0.49, 0.63],
            sweep_budget: 300,
            sweep_methods: vec![Method::PpmPs, Method::Mpf],
            sweep_high_prior: 0.9,
            sweep_low_prior: 0.004,
            ablation_budget: 300,
            presets: DetectorConfig::PRESETS.iter().map(|s| s.to_string()).collect(),
            deviation_budget: 400,
            trial_method: Method::PpmPs,
            trial_budget: 400,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.methods.is_empty() {
            out.push("experiment.methods must not be empty".to_string());
        }
        if self.budgets.is_empty() {
            out.push("experiment.budgets must not be empty".to_string());
        }
        if self.seeds == 0 {
            out.push("experiment.seeds must be >= 1".to_string());
        }
        if self.scenes == 0 {
            out.push("experiment.scenes must be >= 1".to_string());
        }
        for (i, p) in self.proportions.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                out.push(format!("experiment.proportions[{i}] = {p} must be in (0, 1]"));
            }
        }
        for (name, p) in [
            ("sweep_high_prior", self.sweep_high_prior),
            ("sweep_low_prior", self.sweep_low_prior),
        ] {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("experiment.{name} must be in [0, 1], got {p}"));
            }
        }
        for (i, name) in self.presets.iter().enumerate() {
            if DetectorConfig::preset(name).is_none() {
                out.push(format!(
                    "experiment.presets[{i}] `{name}` is not one of {}",
                    DetectorConfig::PRESETS.join(", ")
                ));
            }
        }
        if self.jobs == 0 {
            out.push("experiment.jobs must be >= 1".to_string());
        }
        out
    }
}

/// A complete scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Base seed; scenes and trials derive theirs from it.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub scene: SceneConfig,
    pub segmentation: SegNoiseConfig,
    pub detector: DetectorConfig,
    pub optics: OpticsConfig,
    pub galvo: GalvoConfig,
    pub engine: EngineConfig,
    pub experiment: ExperimentConfig,
}

impl ScenarioConfig {
    /// Parses a scenario; syntax and type errors carry the line number.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_error(text, &e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Loads `path` (or the defaults when absent) and applies `key=value`
    /// overrides before deserializing.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let plain = Self::from_toml(&text)?;
        if overrides.is_empty() {
            return Ok(plain);
        }
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| parse_error(&text, &e))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let merged = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        toml::from_str(&merged).map_err(|e| Error::Config(format!("after --set overrides: {}", e.message())))
    }

    /// Every violated invariant, each prefixed by its key path.
    pub fn issues(&self) -> Vec<String> {
        let mut out = self.scene.issues();
        out.extend(self.detector.issues());
        out.extend(self.engine.issues());
        out.extend(self.experiment.issues());
        let s = &self.segmentation;
        for (name, v) in [
            ("label_flip_prob", s.label_flip_prob),
            ("confidence_floor", s.confidence_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("segmentation.{name} must be in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("center_noise_px", s.center_noise_px),
            ("confidence_noise", s.confidence_noise),
        ] {
            if !(v >= 0.0) {
                out.push(format!("segmentation.{name} must be >= 0, got {v}"));
            }
        }
        if !(s.size_half_px > 0.0) {
            out.push(format!(
                "segmentation.size_half_px must be > 0, got {}",
                s.size_half_px
            ));
        }
        let o = &self.optics;
        if !(o.alpha > 0.0) {
            out.push(format!("optics.alpha must be > 0, got {}", o.alpha));
        }
        if o.view_width == 0 || o.view_height == 0 {
            out.push("optics.view_width and optics.view_height must be > 0".to_string());
        }
        if let Some(m) = o.magnification {
            if !(m > 0.0) {
                out.push(format!("optics.magnification must be > 0, got {m}"));
            }
        }
        let g = &self.galvo;
        if !(g.range_deg > 0.0) {
            out.push(format!("galvo.range_deg must be > 0, got {}", g.range_deg));
        }
        for (name, v) in [("step_response_ms", g.step_response_ms), ("dwell_ms", g.dwell_ms)] {
            if !(v >= 0.0) {
                out.push(format!("galvo.{name} must be >= 0, got {v}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.message().to_string(),
    }
}

/// Sets a dotted key, e.g. `engine.sigma_t=0.05`. The value is read as a
/// TOML value and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
        assert!(ScenarioConfig::default().issues().is_empty());
    }

    #[test]
    fn parse_error_has_line() {
        let err = ScenarioConfig::from_toml("seed = 1\n\n[engine]\nsigma_t = \"x\"\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let err = ScenarioConfig::from_toml("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn zero_sigma_t_rejected() {
        let cfg = ScenarioConfig::from_toml("[engine]\nsigma_t = 0.0\n").unwrap();
        let issues = cfg.issues();
        assert_eq!(issues.len(), 1);
        assert!(issues[0].contains("σ_t must be > 0"));
    }

    #[test]
    fn overlapping_regions_rejected() {
        let text = "[scene]\n[[scene.region]]\nlabel = \"a\"\nrect = [0, 0, 100, 100]\n\
                    [[scene.region]]\nlabel = \"b\"\nrect = [50, 50, 150, 150]\n";
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert!(cfg.issues().iter().any(|s| s.starts_with("partition error")));
    }

    #[test]
    fn overrides_apply() {
        let cfg = ScenarioConfig::load_with_overrides(
            None,
            &[
                "engine.iterations=6".into(),
                "seed=9".into(),
                "experiment.methods=[\"mpf\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.engine.iterations, 6);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.experiment.methods, vec![Method::Mpf]);
        assert!(ScenarioConfig::load_with_overrides(None, &["engine.nope=1".into()]).is_err());
        assert!(ScenarioConfig::load_with_overrides(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }
}
