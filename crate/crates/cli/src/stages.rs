use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use trajekt_core::cluster::{
    characterize_states, kmeans_fit, kneedle, pca_2d, read_states_csv, sweep_k, write_states_csv, assign_states,
    KMeansOptions, PrevalenceTable,
};
use trajekt_core::cohort::{build_cohort, read_cohort_csv, write_cohort_csv, CohortPatient, DAYS_PER_YEAR};
use trajekt_core::features::{
    build_frame, Embedder, EmbedderKind, ExternalEmbedder, FrameManifest, FrameOptions, HashedCodeEmbedder,
    SeriesEmbedder, TrajectoryFrame,
};
use trajekt_core::impute::{complete_numeric, drop_high_missingness, SoftImputeOptions};
use trajekt_core::ingest::{load_concept_sets, load_event_log, ConceptSets, EventLog, EventLogPaths, Ontology};
use trajekt_core::linalg::Matrix;
use trajekt_core::msm::{
    aalen_johansen, bootstrap_transition_ci, extract_transitions, terminal_probability_table, write_terminal_table,
};
use trajekt_core::survival::{covariate_table, risk_factor_analysis, CoxOptions, RiskConfig, ScreenConfig};
use trajekt_core::{Error as CoreError, StateSequence64};

use crate::config::{CodeEmbedderChoice, PipelineConfig, SeriesEmbedderChoice};
use crate::error::{CliError, CliResult, StageContext};
use crate::manifest::{file_sha256, sha256_hex, Manifest, StageEntry};
use crate::report;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Cohort,
    Impute,
    Featurize,
    Cluster,
    Msm,
    Cox,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Cohort,
        Stage::Impute,
        Stage::Featurize,
        Stage::Cluster,
        Stage::Msm,
        Stage::Cox,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cohort => "cohort",
            Stage::Impute => "impute",
            Stage::Featurize => "featurize",
            Stage::Cluster => "cluster",
            Stage::Msm => "msm",
            Stage::Cox => "cox",
            Stage::Report => "report",
        }
    }

    /// Artifact subdirectory of the output directory.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Featurize => "features",
            Stage::Cox => "survival",
            other => other.name(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown stage {s:?}")))
    }
}

/// Artifact locations relative to the output directory.
pub mod artifact {
    pub const INGEST_SUMMARY: &str = "ingest/summary.json";
    pub const COHORT: &str = "cohort/cohort.csv";
    pub const ATTRITION: &str = "cohort/attrition.csv";
    pub const COHORT_WARNINGS: &str = "cohort/warnings.txt";
    pub const COVARIATES: &str = "impute/covariates.csv";
    pub const IMPUTE_REPORT: &str = "impute/report.json";
    pub const FRAME: &str = "features/frame.csv";
    pub const FRAME_MANIFEST: &str = "features/frame_manifest.json";
    pub const WCSS: &str = "cluster/wcss_curve.csv";
    pub const SELECTION: &str = "cluster/selection.json";
    pub const NEAR_KNEE: &str = "cluster/near_knee.csv";
    pub const CENTROIDS: &str = "cluster/centroids.csv";
    pub const STATES: &str = "cluster/states.csv";
    pub const PREVALENCE: &str = "cluster/prevalence.csv";
    pub const BANDS: &str = "cluster/bands.csv";
    pub const PROFILES: &str = "cluster/profiles.csv";
    pub const PROJECTION: &str = "cluster/projection_pca.csv";
    pub const TRANSITIONS: &str = "msm/transitions.csv";
    pub const AJ_SERIES: &str = "msm/aj_series.csv";
    pub const TERMINAL: &str = "msm/terminal_table.csv";
    pub const CI: &str = "msm/ci.csv";
    pub const MSM_SUMMARY: &str = "msm/summary.json";
    pub const RISK: &str = "survival/risk_factors.csv";
    pub const DIAGNOSTICS: &str = "survival/diagnostics.csv";
    pub const NOTICES: &str = "survival/notices.txt";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub persons: usize,
    pub visits: usize,
    pub events: usize,
    pub measurements: usize,
    pub ontology_edges_closure: usize,
    pub disease_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeSummary {
    pub rows: usize,
    pub dropped_high_missing: Vec<String>,
    pub imputed_cells: BTreeMap<String, usize>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// How the number of states was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub knee: Option<usize>,
    pub k: usize,
    pub overridden: bool,
    pub vectors: usize,
    pub sweep_points: usize,
    pub wcss: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmSummary {
    pub k: usize,
    pub patients: usize,
    pub transitions: BTreeMap<String, usize>,
    pub zero_at_risk: usize,
    pub bootstrap_replicates: usize,
    pub bootstrap_degenerate: usize,
}

/// One pipeline invocation over an output directory.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    manifest: Manifest,
    config_sha256: String,
}

fn io_err(stage: &'static str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Stage { stage, source: CoreError::Io { path: path.to_path_buf(), source: e } }
}

pub(crate) fn write_text(stage: &'static str, path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

pub(crate) fn write_json<T: Serialize>(stage: &'static str, path: &Path, value: &T) -> CliResult<()> {
    write_text(stage, path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Stage {
        stage,
        source: CoreError::schema(&path.display().to_string(), e.line(), e.to_string()),
    })
}

pub(crate) fn csv_err(stage: &'static str, path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(stage, path, io),
        other => CliError::Stage { stage, source: CoreError::schema(&path.display().to_string(), row, format!("{other:?}")) },
    }
}

/// Writes rows of already formatted cells.
pub(crate) fn write_rows(stage: &'static str, path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(stage, path, e))?;
    w.write_record(header).map_err(|e| csv_err(stage, path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(stage, path, e))?;
    }
    w.flush().map_err(|e| io_err(stage, path, e))
}

/// Evenly strided indices, at most `max` of them (`0` keeps all).
pub fn stride_indices(n: usize, max: usize) -> Vec<usize> {
    if max == 0 || n <= max {
        return (0..n).collect();
    }
    let step = n.div_ceil(max);
    (0..n).step_by(step).collect()
}

fn rows_matrix(flat: &[f64], dim: usize, rows: &[usize]) -> Matrix<f64> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &i in rows {
        data.extend_from_slice(&flat[i * dim..(i + 1) * dim]);
    }
    Matrix::from_vec(rows.len(), dim, data).expect("consistent shape")
}

/// K sweep on a strided subsample of the frame and the knee it proposes.
pub struct KneeProposal {
    pub sweep: trajekt_core::cluster::Sweep<f64>,
    pub sweep_rows: Vec<usize>,
    pub knee: Option<usize>,
}

/// Sweep, knee and final fit on one frame.
pub struct ClusterRun {
    pub selection: Selection,
    pub proposal: KneeProposal,
    pub clustering: trajekt_core::Clustering64,
    pub points: Matrix<f64>,
}

fn kmeans_options(cfg: &PipelineConfig, restarts: usize) -> KMeansOptions<f64> {
    let c = &cfg.cluster;
    KMeansOptions { restarts, tol: c.tol, max_iter: c.max_iter, seed: derive_seed(cfg.seed, "cluster") }
}

pub fn propose_k(frame: &TrajectoryFrame, cfg: &PipelineConfig) -> CliResult<KneeProposal> {
    const S: &str = "cluster";
    let c = &cfg.cluster;
    let flat = frame.flat_points();
    let sweep_rows = stride_indices(frame.n_vectors(), c.max_sweep_points);
    let sample = rows_matrix(&flat, frame.dim(), &sweep_rows);
    let k_max = c.k_max.min(sample.rows());
    if k_max < c.k_min + 2 {
        return Err(CliError::Stage {
            stage: S,
            source: CoreError::Infeasible(format!("{} vectors cannot support a k sweep from {}", sample.rows(), c.k_min)),
        });
    }
    let sweep = sweep_k(&sample, c.k_min..=k_max, &kmeans_options(cfg, c.sweep_restarts)).stage(S)?;
    let ks: Vec<f64> = sweep.ks.iter().map(|&k| k as f64).collect();
    let knee = kneedle(&ks, &sweep.wcss, c.sensitivity).map(|k| k.round() as usize);
    Ok(KneeProposal { sweep, sweep_rows, knee })
}

pub fn cluster_frame(frame: &TrajectoryFrame, cfg: &PipelineConfig) -> CliResult<ClusterRun> {
    const S: &str = "cluster";
    let proposal = propose_k(frame, cfg)?;
    let k = match (cfg.cluster.k, proposal.knee) {
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => {
            return Err(CliError::Stage {
                stage: S,
                source: CoreError::Infeasible("the WCSS curve has no knee; choose k explicitly with --k".into()),
            })
        }
    };
    let all: Vec<usize> = (0..frame.n_vectors()).collect();
    let points = rows_matrix(&frame.flat_points(), frame.dim(), &all);
    let clustering = kmeans_fit(&points, k, &kmeans_options(cfg, cfg.cluster.restarts)).stage(S)?;
    let selection = Selection {
        knee: proposal.knee,
        k,
        overridden: cfg.cluster.k.is_some(),
        vectors: points.rows(),
        sweep_points: proposal.sweep_rows.len(),
        wcss: clustering.wcss,
        converged: clustering.converged,
    };
    Ok(ClusterRun { selection, proposal, clustering, points })
}

pub fn code_embedder(cfg: &PipelineConfig) -> CliResult<Box<dyn Embedder>> {
    let f = &cfg.features;
    Ok(match f.code_embedder {
        CodeEmbedderChoice::Hashed => Box::new(HashedCodeEmbedder {
            dim: f.d1,
            half_life_days: f.code_half_life_days,
            ..Default::default()
        }),
        CodeEmbedderChoice::External => {
            let path = f.code_embeddings.as_ref().expect("validated");
            Box::new(ExternalEmbedder::load(path, f.d1, EmbedderKind::CodeSequence, f.allow_fallback).stage("featurize")?)
        }
    })
}

pub fn series_embedder(cfg: &PipelineConfig) -> CliResult<Box<dyn Embedder>> {
    let f = &cfg.features;
    Ok(match f.series_embedder {
        SeriesEmbedderChoice::Summary => Box::new(SeriesEmbedder),
        SeriesEmbedderChoice::External => {
            let path = f.series_embeddings.as_ref().expect("validated");
            Box::new(ExternalEmbedder::load(path, f.d2, EmbedderKind::Series, f.allow_fallback).stage("featurize")?)
        }
    })
}

pub fn featurize(log: &EventLog, cohort: &[CohortPatient], sets: &ConceptSets, cfg: &PipelineConfig) -> CliResult<TrajectoryFrame> {
    let code = code_embedder(cfg)?;
    let series = series_embedder(cfg)?;
    let f = &cfg.features;
    let opts = FrameOptions {
        code: code.as_ref(),
        series: series.as_ref(),
        d1: f.d1,
        d2: f.d2,
        code_scale: f.code_scale,
        series_scale: f.series_scale,
    };
    build_frame(log, cohort, sets, &opts).stage("featurize")
}

/// Day grid for transition curves, including every horizon.
pub fn curve_grid(cfg: &PipelineConfig) -> Vec<f64> {
    let horizons: Vec<f64> = cfg.msm.horizons_years.iter().map(|h| h * DAYS_PER_YEAR).collect();
    let last = horizons.iter().copied().fold(0.0, f64::max);
    let step = cfg.msm.curve_step_days;
    let mut grid: Vec<f64> = (1..).map(|i| i as f64 * step).take_while(|&t| t <= last).collect();
    grid.extend(horizons);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn risk_config(cfg: &PipelineConfig) -> RiskConfig {
    let s = &cfg.survival;
    RiskConfig {
        prevalence_threshold: s.transition_prevalence,
        min_size: s.min_size,
        missing_threshold: cfg.impute.missing_threshold,
        alpha: s.alpha,
        knn_k: cfg.impute.knn_k,
        template: s.weights,
        cox: CoxOptions { ties: s.ties, competing: s.competing, ..Default::default() },
        screen: ScreenConfig { max_abs_correlation: s.collinearity, min_binary_events: s.min_binary_events },
        impute: impute_options(cfg),
    }
}

fn impute_options(cfg: &PipelineConfig) -> SoftImputeOptions<f64> {
    SoftImputeOptions { lambda: cfg.impute.lambda, tol: cfg.impute.tol, max_iter: cfg.impute.max_iter }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> CliResult<Self> {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err("pipeline", &cfg.output_dir, e))?;
        let manifest = Manifest::load_or_new(&cfg.output_dir, cfg.seed);
        // locations are not part of the digest, so relocated runs compare equal
        let mut portable = cfg.clone();
        portable.input_dir = PathBuf::new();
        portable.output_dir = PathBuf::new();
        portable.concepts = cfg.concepts.file_name().map(PathBuf::from).unwrap_or_default();
        let config_sha256 = sha256_hex(serde_json::to_string(&portable).expect("serializable").as_bytes());
        Ok(Self { cfg, manifest, config_sha256 })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    fn require(&self, stage: Stage, needs: Stage, rel: &str) -> CliResult<PathBuf> {
        let p = self.out(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Dependency { stage: stage.name(), needs: needs.name(), path: p })
        }
    }

    fn input_paths(&self) -> EventLogPaths {
        EventLogPaths::in_dir(&self.cfg.input_dir)
    }

    fn load_log(&self, stage: Stage) -> CliResult<EventLog> {
        load_event_log(&self.input_paths()).stage(stage.name())
    }

    fn load_concepts(&self, stage: Stage) -> CliResult<(ConceptSets, Ontology)> {
        load_concept_sets(&self.cfg.concepts_path()).stage(stage.name())
    }

    fn load_cohort(&self, stage: Stage) -> CliResult<Vec<CohortPatient>> {
        read_cohort_csv(&self.require(stage, Stage::Cohort, artifact::COHORT)?).stage(stage.name())
    }

    fn load_states(&self, stage: Stage, cohort: &[CohortPatient]) -> CliResult<(Vec<StateSequence64>, usize)> {
        let sel: Selection = read_json(stage.name(), &self.require(stage, Stage::Cluster, artifact::SELECTION)?)?;
        let seqs = read_states_csv(&self.require(stage, Stage::Cluster, artifact::STATES)?, cohort).stage(stage.name())?;
        Ok((seqs, sel.k))
    }

    fn log_inputs(&self) -> Vec<(String, PathBuf)> {
        let p = self.input_paths();
        let mut v: Vec<(String, PathBuf)> = [p.persons, p.visits, p.events, p.measurements]
            .into_iter()
            .map(|path| (format!("input/{}", path.file_name().unwrap_or_default().to_string_lossy()), path))
            .collect();
        let concepts = self.cfg.concepts_path();
        v.push((format!("input/{}", concepts.file_name().unwrap_or_default().to_string_lossy()), concepts));
        v
    }

    fn record(&mut self, stage: Stage, inputs: Vec<(String, PathBuf)>, artifacts: &[&str]) -> CliResult<()> {
        let hash = |pairs: Vec<(String, PathBuf)>| -> CliResult<BTreeMap<String, String>> {
            pairs.into_iter().map(|(k, p)| file_sha256(&p).map(|h| (k, h))).collect()
        };
        let entry = StageEntry {
            seed: derive_seed(self.cfg.seed, stage.name()),
            config_sha256: self.config_sha256.clone(),
            inputs: hash(inputs)?,
            artifacts: hash(artifacts.iter().map(|a| (a.to_string(), self.out(a))).collect())?,
        };
        self.manifest.stages.insert(stage.name().to_string(), entry);
        self.manifest.write(&self.cfg.output_dir)
    }

    fn out_inputs(&self, rels: &[&str]) -> Vec<(String, PathBuf)> {
        rels.iter().map(|r| (r.to_string(), self.out(r))).collect()
    }

    /// Runs `stages` in pipeline order.
    pub fn run(&mut self, stages: &[Stage]) -> CliResult<()> {
        let mut todo = stages.to_vec();
        todo.sort();
        todo.dedup();
        for stage in todo {
            let t = Instant::now();
            let dir = self.out(stage.dir());
            std::fs::create_dir_all(&dir).map_err(|e| io_err(stage.name(), &dir, e))?;
            match stage {
                Stage::Ingest => self.ingest()?,
                Stage::Cohort => self.cohort()?,
                Stage::Impute => self.impute()?,
                Stage::Featurize => self.features()?,
                Stage::Cluster => self.cluster()?,
                Stage::Msm => self.msm()?,
                Stage::Cox => self.cox()?,
                Stage::Report => self.report()?,
            }
            log::info!("{stage} finished in {:.2?}", t.elapsed());
        }
        Ok(())
    }

    fn ingest(&mut self) -> CliResult<()> {
        let log = self.load_log(Stage::Ingest)?;
        let (sets, ontology) = self.load_concepts(Stage::Ingest)?;
        let c = log.counts();
        let summary = IngestSummary {
            persons: c.persons,
            visits: c.visits,
            events: c.events,
            measurements: c.measurements,
            ontology_edges_closure: ontology.len(),
            disease_groups: sets.disease_groups.len(),
        };
        log::info!("ingest: {} persons, {} events, {} measurements", c.persons, c.events, c.measurements);
        write_json("ingest", &self.out(artifact::INGEST_SUMMARY), &summary)?;
        self.record(Stage::Ingest, self.log_inputs(), &[artifact::INGEST_SUMMARY])
    }

    fn cohort(&mut self) -> CliResult<()> {
        const S: &str = "cohort";
        self.require(Stage::Cohort, Stage::Ingest, artifact::INGEST_SUMMARY)?;
        let log = self.load_log(Stage::Cohort)?;
        let (sets, _) = self.load_concepts(Stage::Cohort)?;
        let build = build_cohort(&log, &sets, &self.cfg.cohort_config());
        for w in &build.warnings {
            log::warn!("cohort: {w}");
        }
        if build.patients.is_empty() {
            return Err(CliError::Stage { stage: S, source: CoreError::Contract("no patient passed the cohort filters".into()) });
        }
        log::info!("cohort: {} patients", build.patients.len());
        write_cohort_csv(&build.patients, &self.out(artifact::COHORT)).stage(S)?;
        build.attrition.write_csv(&self.out(artifact::ATTRITION)).stage(S)?;
        let warnings: String = build.warnings.iter().map(|w| format!("{w}\n")).collect();
        write_text(S, &self.out(artifact::COHORT_WARNINGS), &warnings)?;
        let mut inputs = self.log_inputs();
        inputs.extend(self.out_inputs(&[artifact::INGEST_SUMMARY]));
        self.record(Stage::Cohort, inputs, &[artifact::COHORT, artifact::ATTRITION, artifact::COHORT_WARNINGS])
    }

    fn impute(&mut self) -> CliResult<()> {
        const S: &str = "impute";
        let cohort = self.load_cohort(Stage::Impute)?;
        let refs: Vec<&CohortPatient> = cohort.iter().collect();
        let table = covariate_table(&refs, self.cfg.impute.knn_k).stage(S)?;
        let (kept, dropped) = drop_high_missingness(&table, self.cfg.impute.missing_threshold).stage(S)?;
        let done = complete_numeric(&kept, &impute_options(&self.cfg)).stage(S)?;
        let mut header = vec!["person_id"];
        header.extend(done.table.columns.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..done.table.n_rows())
            .map(|i| {
                let mut r = vec![done.table.row_ids[i].clone()];
                r.extend(done.table.row(i).iter().map(|v| v.expect("completed").to_string()));
                r
            })
            .collect();
        write_rows(S, &self.out(artifact::COVARIATES), &header, &rows)?;
        let summary = ImputeSummary {
            rows: done.table.n_rows(),
            dropped_high_missing: dropped,
            imputed_cells: done.table.columns.iter().cloned().zip(done.imputed_counts.iter().copied()).collect(),
            lambda: done.lambda,
            iterations: done.iterations,
            converged: done.converged,
            objective: done.objective,
        };
        if !summary.converged {
            log::warn!("impute: SoftImpute stopped at max_iter without converging");
        }
        write_json(S, &self.out(artifact::IMPUTE_REPORT), &summary)?;
        let inputs = self.out_inputs(&[artifact::COHORT]);
        self.record(Stage::Impute, inputs, &[artifact::COVARIATES, artifact::IMPUTE_REPORT])
    }

    fn features(&mut self) -> CliResult<()> {
        const S: &str = "featurize";
        let cohort = self.load_cohort(Stage::Featurize)?;
        let log = self.load_log(Stage::Featurize)?;
        let (sets, _) = self.load_concepts(Stage::Featurize)?;
        let frame = featurize(&log, &cohort, &sets, &self.cfg)?;
        let (code, series) = (code_embedder(&self.cfg)?, series_embedder(&self.cfg)?);
        let f = &self.cfg.features;
        let manifest = FrameManifest {
            d1: f.d1,
            d2: f.d2,
            code_embedder: code.id(),
            series_embedder: series.id(),
            code_scale: f.code_scale,
            series_scale: f.series_scale,
            seed: self.cfg.seed,
            vectors: frame.n_vectors(),
            patients: frame.patients.len(),
        };
        log::info!("featurize: {} vectors of width {}", frame.n_vectors(), frame.dim());
        frame.write_csv(&self.out(artifact::FRAME)).stage(S)?;
        write_json(S, &self.out(artifact::FRAME_MANIFEST), &manifest)?;
        let mut inputs = self.log_inputs();
        inputs.extend(self.out_inputs(&[artifact::COHORT]));
        for p in [&f.code_embeddings, &f.series_embeddings].into_iter().flatten() {
            inputs.push((format!("input/{}", p.file_name().unwrap_or_default().to_string_lossy()), p.clone()));
        }
        self.record(Stage::Featurize, inputs, &[artifact::FRAME, artifact::FRAME_MANIFEST])
    }

    fn cluster(&mut self) -> CliResult<()> {
        const S: &str = "cluster";
        let cohort = self.load_cohort(Stage::Cluster)?;
        let fm: FrameManifest = read_json(S, &self.require(Stage::Cluster, Stage::Featurize, artifact::FRAME_MANIFEST)?)?;
        let frame = TrajectoryFrame::read_csv(&self.require(Stage::Cluster, Stage::Featurize, artifact::FRAME)?, fm.d1, fm.d2)
            .stage(S)?;
        let log = self.load_log(Stage::Cluster)?;
        let (sets, ontology) = self.load_concepts(Stage::Cluster)?;
        let run = cluster_frame(&frame, &self.cfg)?;
        let sel = &run.selection;
        match sel.knee {
            Some(knee) => log::info!("cluster: knee at k={knee}, using k={}", sel.k),
            None => log::info!("cluster: no knee, using k={}", sel.k),
        }

        let wcss_rows: Vec<Vec<String>> =
            run.proposal.sweep.ks.iter().zip(&run.proposal.sweep.wcss).map(|(k, w)| vec![k.to_string(), w.to_string()]).collect();
        write_rows(S, &self.out(artifact::WCSS), &["k", "wcss"], &wcss_rows)?;
        write_json(S, &self.out(artifact::SELECTION), sel)?;

        // sizes and spread for k around the proposal, for review before overriding
        let sample = Matrix::from_rows(&run.proposal.sweep_rows.iter().map(|&i| run.points.row(i).to_vec()).collect::<Vec<_>>())
            .stage(S)?;
        let centre = sel.knee.unwrap_or(sel.k);
        let mut near = Vec::new();
        for fit in run.proposal.sweep.fits.iter().filter(|f| f.k + 2 >= centre && f.k <= centre + 2) {
            let sse = fit.cluster_sse(&sample);
            let mut sizes = vec![0usize; fit.k];
            for &a in &fit.assignments {
                sizes[a] += 1;
            }
            let smallest = sizes.iter().min().copied().unwrap_or(0);
            log::info!("cluster: k={} wcss={:.4} smallest cluster {} vectors", fit.k, fit.wcss, smallest);
            for s in 0..fit.k {
                near.push(vec![fit.k.to_string(), format!("S{s}"), sizes[s].to_string(), sse[s].to_string()]);
            }
        }
        write_rows(S, &self.out(artifact::NEAR_KNEE), &["k", "state", "vectors", "sse"], &near)?;

        let dim = frame.dim();
        let mut header = vec!["state".to_string()];
        header.extend((0..dim).map(|j| format!("f{j}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let cents: Vec<Vec<String>> = (0..sel.k)
            .map(|s| {
                let mut r = vec![format!("S{s}")];
                r.extend(run.clustering.centroids.row(s).iter().map(f64::to_string));
                r
            })
            .collect();
        write_rows(S, &self.out(artifact::CENTROIDS), &header, &cents)?;

        let seqs = assign_states(&frame, &run.clustering, &cohort).stage(S)?;
        write_states_csv(&seqs, &self.out(artifact::STATES)).stage(S)?;
        let table = characterize_states(&seqs, sel.k, &log, &cohort, &ontology, &sets, self.cfg.cluster.prevalence_threshold)
            .stage(S)?;
        table.write_prevalence_csv(&self.out(artifact::PREVALENCE)).stage(S)?;
        table.write_bands_csv(&self.out(artifact::BANDS)).stage(S)?;
        self.write_profiles(&table)?;
        self.write_projection(&frame, &run)?;

        let mut inputs = self.log_inputs();
        inputs.extend(self.out_inputs(&[artifact::COHORT, artifact::FRAME, artifact::FRAME_MANIFEST]));
        self.record(
            Stage::Cluster,
            inputs,
            &[
                artifact::WCSS,
                artifact::SELECTION,
                artifact::NEAR_KNEE,
                artifact::CENTROIDS,
                artifact::STATES,
                artifact::PREVALENCE,
                artifact::BANDS,
                artifact::PROFILES,
                artifact::PROJECTION,
            ],
        )
    }

    fn write_profiles(&self, table: &PrevalenceTable) -> CliResult<()> {
        let fmt_counts = |m: &BTreeMap<String, usize>| m.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(";");
        let rows: Vec<Vec<String>> = table
            .profiles
            .iter()
            .enumerate()
            .map(|(s, p)| {
                vec![
                    format!("S{s}"),
                    p.vectors.to_string(),
                    p.patients.to_string(),
                    p.age_quartiles[0].to_string(),
                    p.age_quartiles[1].to_string(),
                    p.age_quartiles[2].to_string(),
                    fmt_counts(&p.sex),
                    fmt_counts(&p.race),
                    fmt_counts(&p.ethnicity),
                ]
            })
            .collect();
        write_rows(
            "cluster",
            &self.out(artifact::PROFILES),
            &["state", "vectors", "patients", "age_q1", "age_median", "age_q3", "sex", "race", "ethnicity"],
            &rows,
        )
    }

    /// PCA scatter data; a linear projection for plotting, not a UMAP embedding.
    fn write_projection(&self, frame: &TrajectoryFrame, run: &ClusterRun) -> CliResult<()> {
        let keep = if self.cfg.cluster.projection_points == 0 {
            Vec::new()
        } else {
            stride_indices(run.points.rows(), self.cfg.cluster.projection_points)
        };
        let mut rows = Vec::new();
        if keep.len() >= 2 {
            let ids: Vec<(&str, i64)> = frame
                .patients
                .iter()
                .flat_map(|p| p.delta_t.iter().map(move |&d| (p.person_id.as_str(), d)))
                .collect();
            let sub = Matrix::from_rows(&keep.iter().map(|&i| run.points.row(i).to_vec()).collect::<Vec<_>>())
                .stage("cluster")?;
            let proj = pca_2d(&sub);
            for (r, &i) in keep.iter().enumerate() {
                rows.push(vec![
                    ids[i].0.to_string(),
                    ids[i].1.to_string(),
                    format!("S{}", run.clustering.assignments[i]),
                    proj[(r, 0)].to_string(),
                    proj[(r, 1)].to_string(),
                ]);
            }
        }
        write_rows("cluster", &self.out(artifact::PROJECTION), &["person_id", "delta_t", "state", "pc1", "pc2"], &rows)
    }

    fn msm(&mut self) -> CliResult<()> {
        const S: &str = "msm";
        let cohort = self.load_cohort(Stage::Msm)?;
        let (seqs, k) = self.load_states(Stage::Msm, &cohort)?;
        let events = extract_transitions(&seqs, k).stage(S)?;
        events.write_csv(&self.out(artifact::TRANSITIONS)).stage(S)?;
        let grid = curve_grid(&self.cfg);
        let series = aalen_johansen(&events, 0.0, &grid).stage(S)?;
        series.write_csv(&self.out(artifact::AJ_SERIES), k).stage(S)?;
        let table = terminal_probability_table(&series, k, &self.cfg.msm.horizons_years).stage(S)?;
        write_terminal_table(&table, k, &self.out(artifact::TERMINAL)).stage(S)?;
        let ci = bootstrap_transition_ci(&events, self.cfg.msm.bootstrap, derive_seed(self.cfg.seed, S), &grid).stage(S)?;
        ci.write_csv(&self.out(artifact::CI), k).stage(S)?;
        if ci.degenerate > 0 {
            log::warn!("msm: {} of {} bootstrap replicates were degenerate", ci.degenerate, ci.replicates);
        }
        let counts = events.transition_counts();
        let mut transitions = BTreeMap::new();
        for (a, row) in counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                if c > 0 {
                    transitions.insert(
                        format!("{}->{}", trajekt_core::msm::state_label(a, k), trajekt_core::msm::state_label(b, k)),
                        c,
                    );
                }
            }
        }
        let summary = MsmSummary {
            k,
            patients: events.patients.len(),
            transitions,
            zero_at_risk: series.zero_at_risk.len(),
            bootstrap_replicates: ci.replicates,
            bootstrap_degenerate: ci.degenerate,
        };
        write_json(S, &self.out(artifact::MSM_SUMMARY), &summary)?;
        let inputs = self.out_inputs(&[artifact::COHORT, artifact::STATES, artifact::SELECTION]);
        self.record(
            Stage::Msm,
            inputs,
            &[artifact::TRANSITIONS, artifact::AJ_SERIES, artifact::TERMINAL, artifact::CI, artifact::MSM_SUMMARY],
        )
    }

    fn cox(&mut self) -> CliResult<()> {
        const S: &str = "cox";
        let cohort = self.load_cohort(Stage::Cox)?;
        let (seqs, k) = self.load_states(Stage::Cox, &cohort)?;
        let report = risk_factor_analysis(&cohort, &seqs, k, &risk_config(&self.cfg)).stage(S)?;
        for n in &report.notices {
            log::warn!("cox: {n}");
        }
        log::info!("cox: {} models, {} rows", report.diagnostics.len(), report.rows.len());
        report.write_csv(&self.out(artifact::RISK)).stage(S)?;
        report.write_diagnostics_csv(&self.out(artifact::DIAGNOSTICS)).stage(S)?;
        let notices: String = report.notices.iter().map(|n| format!("{n}\n")).collect();
        write_text(S, &self.out(artifact::NOTICES), &notices)?;
        let inputs = self.out_inputs(&[artifact::COHORT, artifact::STATES, artifact::SELECTION]);
        self.record(Stage::Cox, inputs, &[artifact::RISK, artifact::DIAGNOSTICS, artifact::NOTICES])
    }

    fn report(&mut self) -> CliResult<()> {
        let needs = [
            (Stage::Cohort, artifact::COHORT),
            (Stage::Cohort, artifact::ATTRITION),
            (Stage::Cluster, artifact::SELECTION),
            (Stage::Cluster, artifact::PREVALENCE),
            (Stage::Cluster, artifact::BANDS),
            (Stage::Cluster, artifact::PROFILES),
            (Stage::Msm, artifact::TERMINAL),
            (Stage::Msm, artifact::CI),
            (Stage::Cox, artifact::RISK),
            (Stage::Cox, artifact::NOTICES),
        ];
        for (stage, rel) in needs {
            self.require(Stage::Report, stage, rel)?;
        }
        let written = report::emit_report(&self.cfg)?;
        let inputs = self.out_inputs(&needs.map(|n| n.1));
        let rels: Vec<&str> = written.iter().map(String::as_str).collect();
        self.record(Stage::Report, inputs, &rels)
    }
}
