use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajekt_core::survival::{Competing, Ties, WeightTemplate};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Directory with persons/visits/events/measurements CSVs.
    pub input_dir: PathBuf,
    /// Concept configuration; relative paths resolve against `input_dir`.
    pub concepts: PathBuf,
    pub output_dir: PathBuf,
    pub cohort: CohortSection,
    pub impute: ImputeSection,
    pub features: FeatureSection,
    pub cluster: ClusterSection,
    pub msm: MsmSection,
    pub survival: SurvivalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input_dir: PathBuf::from("data"),
            concepts: PathBuf::from("concepts.toml"),
            output_dir: PathBuf::from("out"),
            cohort: CohortSection::default(),
            impute: ImputeSection::default(),
            features: FeatureSection::default(),
            cluster: ClusterSection::default(),
            msm: MsmSection::default(),
            survival: SurvivalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSection {
    pub baseline_ckd_threshold: f64,
    pub rise_factor: f64,
    pub eligibility_hours: i64,
    pub day1_hours: i64,
    pub medication_lookback_days: i64,
}

impl Default for CohortSection {
    fn default() -> Self {
        let d = trajekt_core::cohort::CohortConfig::default();
        Self {
            baseline_ckd_threshold: d.baseline_ckd_threshold,
            rise_factor: d.rise_factor,
            eligibility_hours: d.eligibility_hours,
            day1_hours: d.day1_hours,
            medication_lookback_days: d.medication_lookback_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputeSection {
    pub missing_threshold: f64,
    /// SoftImpute penalty; unset picks σ_max / 50 of the standardized matrix.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub knn_k: usize,
}

impl Default for ImputeSection {
    fn default() -> Self {
        Self { missing_threshold: 0.5, lambda: None, tol: 1e-5, max_iter: 300, knn_k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeEmbedderChoice {
    Hashed,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesEmbedderChoice {
    Summary,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub code_embedder: CodeEmbedderChoice,
    pub series_embedder: SeriesEmbedderChoice,
    /// `person_id,delta_t,v0..` files for external embedders.
    pub code_embeddings: Option<PathBuf>,
    pub series_embeddings: Option<PathBuf>,
    pub allow_fallback: bool,
    pub d1: usize,
    pub d2: usize,
    pub code_scale: f64,
    pub series_scale: f64,
    /// Recency half-life of the hashed code counts; unset keeps them cumulative.
    pub code_half_life_days: Option<f64>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            code_embedder: CodeEmbedderChoice::Hashed,
            series_embedder: SeriesEmbedderChoice::Summary,
            code_embeddings: None,
            series_embeddings: None,
            allow_fallback: false,
            d1: trajekt_core::features::DEFAULT_D1,
            d2: trajekt_core::features::SERIES_DIM,
            code_scale: 1.0,
            series_scale: 1.0,
            code_half_life_days: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k_min: usize,
    pub k_max: usize,
    /// Fixes K and skips knee selection.
    pub k: Option<usize>,
    pub sensitivity: f64,
    /// Restarts per k in the sweep and for the final fit.
    pub sweep_restarts: usize,
    pub restarts: usize,
    /// The sweep runs on an evenly strided subsample of at most this many
    /// vectors; 0 uses every vector.
    pub max_sweep_points: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Condition prevalence a state must exceed to list it.
    pub prevalence_threshold: f64,
    /// Vectors in the 2-D projection plot data; 0 disables it.
    pub projection_points: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k_min: 3,
            k_max: 40,
            k: None,
            sensitivity: 1.0,
            sweep_restarts: 3,
            restarts: 10,
            max_sweep_points: 5000,
            max_iter: 300,
            tol: 1e-8,
            prevalence_threshold: 0.20,
            projection_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsmSection {
    pub bootstrap: usize,
    pub horizons_years: Vec<f64>,
    /// Spacing of the transition-curve grid.
    pub curve_step_days: f64,
}

impl Default for MsmSection {
    fn default() -> Self {
        Self {
            bootstrap: 200,
            horizons_years: trajekt_core::msm::DEFAULT_HORIZONS_YEARS.to_vec(),
            curve_step_days: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalSection {
    pub ties: Ties,
    pub weights: WeightTemplate,
    pub competing: Competing,
    pub alpha: f64,
    pub collinearity: f64,
    pub min_binary_events: usize,
    pub transition_prevalence: f64,
    pub min_size: usize,
}

impl Default for SurvivalSection {
    fn default() -> Self {
        Self {
            ties: Ties::Efron,
            weights: WeightTemplate::Ahr,
            competing: Competing::CauseSpecific,
            alpha: 0.05,
            collinearity: 0.7,
            min_binary_events: 5,
            transition_prevalence: 0.05,
            min_size: 50,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub input_dir: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub ties: Option<Ties>,
    pub weights: Option<WeightTemplate>,
    pub competing: Option<Competing>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub bootstrap: Option<usize>,
    pub missing_threshold: Option<f64>,
    pub knn_k: Option<usize>,
    pub softimpute_lambda: Option<f64>,
    pub allow_fallback: bool,
}

impl PipelineConfig {
    /// File (or defaults), then `TRAJEKT_SEED`, then flags.
    pub fn resolve(path: Option<&Path>, env_seed: Option<String>, o: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg: PipelineConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                // paths in a config file are relative to the file
                let base = p.parent().unwrap_or(Path::new(""));
                for dir in [&mut cfg.input_dir, &mut cfg.output_dir] {
                    if dir.is_relative() {
                        *dir = base.join(&*dir);
                    }
                }
                cfg
            }
            None => PipelineConfig::default(),
        };
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("TRAJEKT_SEED={s:?} is not an unsigned integer")))?;
        }
        macro_rules! apply {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = o.$field.clone() { cfg.$($target).+ = v; })*
            };
        }
        apply!(
            seed => seed,
            input_dir => input_dir,
            concepts => concepts,
            output_dir => output_dir,
            ties => survival.ties,
            weights => survival.weights,
            competing => survival.competing,
            alpha => survival.alpha,
            bootstrap => msm.bootstrap,
            missing_threshold => impute.missing_threshold,
            knn_k => impute.knn_k,
        );
        if let Some(k) = o.k {
            cfg.cluster.k = Some(k);
        }
        if let Some(l) = o.softimpute_lambda {
            cfg.impute.lambda = Some(l);
        }
        cfg.features.allow_fallback |= o.allow_fallback;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        if !unit_open(self.impute.missing_threshold) && self.impute.missing_threshold != 1.0 {
            return bad("impute.missing_threshold must be in (0, 1]");
        }
        if self.impute.lambda.is_some_and(|l| !(l > 0.0)) || !(self.impute.tol > 0.0) || self.impute.knn_k == 0 {
            return bad("impute: lambda and tol must be positive, knn_k at least 1");
        }
        let f = &self.features;
        if f.d1 == 0 || f.d2 == 0 || !(f.code_scale >= 0.0) || !(f.series_scale >= 0.0) {
            return bad("features: dimensions must be positive and scales non-negative");
        }
        if f.code_half_life_days.is_some_and(|h| !(h > 0.0)) {
            return bad("features.code_half_life_days must be positive");
        }
        if f.code_embedder == CodeEmbedderChoice::External && f.code_embeddings.is_none() {
            return bad("features.code_embeddings is required for the external code embedder");
        }
        if f.series_embedder == SeriesEmbedderChoice::External && f.series_embeddings.is_none() {
            return bad("features.series_embeddings is required for the external series embedder");
        }
        let c = &self.cluster;
        if c.k_min < 2 || c.k_max < c.k_min + 2 {
            return bad("cluster: need k_min ≥ 2 and at least three k values");
        }
        if c.k.is_some_and(|k| k == 0) || c.restarts == 0 || c.sweep_restarts == 0 || c.max_iter == 0 {
            return bad("cluster: k, restarts and max_iter must be positive");
        }
        if !(c.sensitivity > 0.0) || !unit_open(c.prevalence_threshold) {
            return bad("cluster: sensitivity must be positive, prevalence_threshold in (0, 1)");
        }
        let m = &self.msm;
        if m.bootstrap < 2 || m.horizons_years.is_empty() || m.horizons_years.iter().any(|&h| !(h > 0.0)) {
            return bad("msm: bootstrap ≥ 2 and positive horizons required");
        }
        if !(m.curve_step_days > 0.0) {
            return bad("msm.curve_step_days must be positive");
        }
        let s = &self.survival;
        if !unit_open(s.alpha) || !unit_open(s.collinearity) || !unit_open(s.transition_prevalence) {
            return bad("survival: alpha, collinearity and transition_prevalence must be in (0, 1)");
        }
        if !(self.cohort.rise_factor > 1.0) || !(self.cohort.baseline_ckd_threshold > 0.0) {
            return bad("cohort: rise_factor must exceed 1 and the baseline threshold be positive");
        }
        if self.cohort.eligibility_hours <= 0 || self.cohort.day1_hours <= 0 || self.cohort.medication_lookback_days < 0 {
            return bad("cohort: windows must be positive");
        }
        Ok(())
    }

    pub fn concepts_path(&self) -> PathBuf {
        if self.concepts.is_relative() {
            self.input_dir.join(&self.concepts)
        } else {
            self.concepts.clone()
        }
    }

    pub fn cohort_config(&self) -> trajekt_core::cohort::CohortConfig {
        trajekt_core::cohort::CohortConfig {
            baseline_ckd_threshold: self.cohort.baseline_ckd_threshold,
            rise_factor: self.cohort.rise_factor,
            eligibility_hours: self.cohort.eligibility_hours,
            day1_hours: self.cohort.day1_hours,
            medication_lookback_days: self.cohort.medication_lookback_days,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 1\n[survival]\nties = \"breslow\"\n").unwrap();
        let cfg = PipelineConfig::resolve(Some(&path), None, &Overrides::default()).unwrap();
        assert_eq!((cfg.seed, cfg.survival.ties), (1, Ties::Breslow));
        let cfg = PipelineConfig::resolve(Some(&path), Some("9".into()), &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 9);
        let o = Overrides { seed: Some(4), ties: Some(Ties::Efron), ..Default::default() };
        let cfg = PipelineConfig::resolve(Some(&path), Some("9".into()), &o).unwrap();
        assert_eq!((cfg.seed, cfg.survival.ties), (4, Ties::Efron));
        assert_eq!(cfg.input_dir, dir.path().join("data"));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        for text in ["[survival]\nalpha = 1.5\n", "[cluster]\nk_min = 5\nk_max = 6\n", "bogus = 1\n", "[survival]\nties = \"exact\"\n"] {
            std::fs::write(&path, text).unwrap();
            assert!(matches!(PipelineConfig::resolve(Some(&path), None, &Overrides::default()), Err(CliError::Config(_))), "{text}");
        }
        assert!(matches!(
            PipelineConfig::resolve(None, Some("x".into()), &Overrides::default()),
            Err(CliError::Config(_))
        ));
    }
}
