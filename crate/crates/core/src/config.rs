//! Audit configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! deterministic = true
//! out = "audit-out"
//!
//! [input]
//! path = "projects.jsonl"
//! format = "jsonl"
//! text_fields = ["title", "essay"]
//! class_fields = ["poverty_level", "grade_level"]
//! id_field = "id"
//! on_missing = "skip"
//!
//! [filter]
//! min_chars = 2500
//! max_chars = 4000
//!
//! [classify]
//! c_grid = [0.5, 1.0, 5.0]
//! ```
//!
//! Exactly one of `[input]` or `[synthetic]` must be present. Every
//! section is optional otherwise and falls back to its defaults. The
//! top-level `seed` overrides any seed given inside a stage section.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Format, LoadOptions, OnMissing};
use crate::embed::EmbedParams;
use crate::error::{Error, Result};
use crate::groundtruth::SynthSpec;
use crate::project::TsneParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub format: Format,
    pub text_fields: Vec<String>,
    pub class_fields: Vec<String>,
    #[serde(default)]
    pub id_field: Option<String>,
    #[serde(default)]
    pub on_missing: OnMissing,
}

impl InputConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            text_fields: self.text_fields.clone(),
            class_fields: self.class_fields.clone(),
            id_field: self.id_field.clone(),
            on_missing: self.on_missing,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_chars: usize,
    /// No upper bound when absent.
    pub max_chars: Option<usize>,
    /// Word-count z-score cutoff; disabled when absent.
    pub zscore_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeConfig {
    pub ngram_max: usize,
    pub min_df: usize,
    pub normalize: bool,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self { ngram_max: 2, min_df: 2, normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub train_fraction: f64,
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            folds: 10,
            c_grid: vec![5.0],
            max_epochs: 1000,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NfisConfig {
    pub k: usize,
}

impl Default for NfisConfig {
    fn default() -> Self {
        Self { k: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Documents projected at most; larger corpora are sampled with the seed.
    pub sample_cap: usize,
    pub tsne: TsneParams,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self { sample_cap: 5000, tsne: TsneParams::default() }
    }
}

/// Thresholds of the verdict rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictRule {
    pub subjective_f1_below: f64,
    pub subjective_imbalance_above: f64,
    pub subjective_silhouette_below: f64,
    pub objective_f1_at_least: f64,
    pub objective_imbalance_at_most: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self {
            subjective_f1_below: 0.60,
            subjective_imbalance_above: 2.0,
            subjective_silhouette_below: 0.05,
            objective_f1_at_least: 0.75,
            objective_imbalance_at_most: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub seed: u64,
    /// Keeps wall-clock timings out of the report so reruns are byte-identical.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub input: Option<InputConfig>,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
    /// Target classes to audit; all loaded classes when absent.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub vectorize: VectorizeConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub nfis: NfisConfig,
    #[serde(default)]
    pub embed: EmbedParams,
    #[serde(default)]
    pub project: ProjectConfig,
    #[serde(default)]
    pub verdict: VerdictRule,
}

impl AuditConfig {
    /// Config for a synthetic corpus with every other setting at its default.
    pub fn synthetic(spec: SynthSpec) -> Self {
        Self {
            seed: spec.seed,
            deterministic: true,
            out: None,
            input: None,
            synthetic: Some(spec),
            classes: None,
            filter: FilterConfig::default(),
            vectorize: VectorizeConfig::default(),
            classify: ClassifyConfig::default(),
            nfis: NfisConfig::default(),
            embed: EmbedParams::default(),
            project: ProjectConfig::default(),
            verdict: VerdictRule::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative input path is resolved against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(input), Some(dir)) = (cfg.input.as_mut(), path.parent()) {
            if input.path.is_relative() {
                input.path = dir.join(&input.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Sets the top-level seed and pushes it into every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.propagate_seed();
        self
    }

    pub(crate) fn propagate_seed(&mut self) {
        self.embed.seed = self.seed;
        self.project.tsne.seed = self.seed;
        if let Some(s) = self.synthetic.as_mut() {
            s.seed = self.seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("config: {msg}")));
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => return bad("[input] and [synthetic] are mutually exclusive".into()),
            (None, None) => return bad("one of [input] or [synthetic] is required".into()),
            (Some(input), None) => {
                if input.text_fields.is_empty() || input.class_fields.is_empty() {
                    return bad("input.text_fields and input.class_fields must be non-empty".into());
                }
            }
            (None, Some(spec)) => spec.validate()?,
        }
        if let Some(classes) = &self.classes {
            let known = self.class_names();
            if classes.is_empty() {
                return bad("classes is empty".into());
            }
            if let Some(c) = classes.iter().find(|c| !known.contains(c)) {
                return Err(Error::UnknownClass(c.clone()));
            }
        }
        if let Some(max) = self.filter.max_chars {
            if max < self.filter.min_chars {
                return bad(format!("filter.max_chars {max} < min_chars {}", self.filter.min_chars));
            }
        }
        if !(self.classify.train_fraction > 0.0 && self.classify.train_fraction < 1.0) {
            return bad("classify.train_fraction must lie in (0, 1)".into());
        }
        if self.classify.folds < 2 {
            return bad("classify.folds must be at least 2".into());
        }
        if self.classify.c_grid.is_empty() || self.classify.c_grid.iter().any(|c| !(*c > 0.0)) {
            return bad("classify.c_grid must be non-empty and positive".into());
        }
        if !(1..=2).contains(&self.vectorize.ngram_max) || self.vectorize.min_df == 0 {
            return bad("vectorize.ngram_max must be 1 or 2 and min_df positive".into());
        }
        if self.nfis.k == 0 {
            return bad("nfis.k must be positive".into());
        }
        if self.embed.dim == 0 || self.embed.epochs == 0 {
            return bad("embed.dim and embed.epochs must be positive".into());
        }
        if self.project.sample_cap < 3 || !(self.project.tsne.perplexity >= 2.0) {
            return bad("project.sample_cap must be >= 3 and perplexity >= 2".into());
        }
        Ok(())
    }

    /// Target classes named by the input section (or the synthetic spec).
    pub fn class_names(&self) -> Vec<String> {
        match (&self.input, &self.synthetic) {
            (Some(input), _) => input.class_fields.clone(),
            (None, Some(spec)) => vec![spec.class_name.clone()],
            (None, None) => Vec::new(),
        }
    }

    pub fn audited_classes(&self) -> Vec<String> {
        self.classes.clone().unwrap_or_else(|| self.class_names())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [input]
        path = "data.jsonl"
        format = "jsonl"
        text_fields = ["text"]
        class_fields = ["level"]
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = AuditConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.classify, ClassifyConfig::default());
        assert_eq!(cfg.nfis.k, 100);
        assert_eq!(cfg.project.sample_cap, 5000);
        assert_eq!(cfg.audited_classes(), vec!["level".to_string()]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = AuditConfig::synthetic(SynthSpec::objective(100, 50, 3));
        cfg.classify.c_grid = vec![0.1, 5.0];
        cfg.filter.max_chars = Some(4000);
        let back = AuditConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(AuditConfig::from_toml("seed = 1").is_err());
        assert!(AuditConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
        assert!(AuditConfig::from_toml(&format!("{MINIMAL}\n[classify]\nfolds = 1")).is_err());
        assert!(AuditConfig::from_toml(&format!("{MINIMAL}\n[filter]\nmin_chars = 10\nmax_chars = 5")).is_err());
        let unknown = format!("classes = [\"grade\"]\n{MINIMAL}");
        assert!(matches!(AuditConfig::from_toml(&unknown), Err(Error::UnknownClass(c)) if c == "grade"));
    }

    #[test]
    fn seed_reaches_every_stage() {
        let cfg = AuditConfig::synthetic(SynthSpec::objective(100, 50, 3)).with_seed(42);
        assert_eq!(cfg.embed.seed, 42);
        assert_eq!(cfg.project.tsne.seed, 42);
        assert_eq!(cfg.synthetic.unwrap().seed, 42);
    }

    #[test]
    fn relative_input_path_follows_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = AuditConfig::from_file(&path).unwrap();
        assert_eq!(cfg.input.unwrap().path, dir.path().join("data.jsonl"));
    }
}
