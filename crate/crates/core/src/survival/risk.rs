//! Risk factors of CKD within state-defined subpopulations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::cohort::{csv_io, CohortPatient, Outcome, DAY1_VARIABLES};
use crate::error::{Error, Result};
use crate::impute::{complete_numeric, drop_high_missingness, knn_impute_categorical, NumericTable, SoftImputeOptions};
use crate::ingest::{Sex, COMORBIDITIES, MEDICATION_CLASSES};
use crate::msm::{state_label, StateSequence};

use super::cox::{ph_test, weighted_cox_fit, CoxOptions, Status, SurvivalData, WeightTemplate};
use super::screen::{screen_covariates, CovariateTable, ScreenConfig};

pub const RISK_COLUMNS: [&str; 9] = [
    "subpopulation",
    "covariate",
    "average_hazard_ratio",
    "ci_lower",
    "ci_upper",
    "uncorrected_p_value",
    "corrected_p_value",
    "n",
    "significant",
];

/// Patients grouped by their first state, or by their first two states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subpopulation {
    Initial(usize),
    Pair(usize, usize),
}

impl Subpopulation {
    pub fn label(&self, k: usize) -> String {
        match *self {
            Subpopulation::Initial(a) => state_label(a, k),
            Subpopulation::Pair(a, b) => format!("{}->{}", state_label(a, k), state_label(b, k)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskConfig {
    /// Minimum cohort share of an initial state or a first-to-second pair.
    pub prevalence_threshold: f64,
    pub min_size: usize,
    /// Columns missing in more than this fraction are dropped before imputation.
    pub missing_threshold: f64,
    pub alpha: f64,
    pub knn_k: usize,
    pub template: WeightTemplate,
    pub cox: CoxOptions<f64>,
    pub screen: ScreenConfig<f64>,
    pub impute: SoftImputeOptions<f64>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            prevalence_threshold: 0.05,
            min_size: 50,
            missing_threshold: 0.5,
            alpha: 0.05,
            knn_k: 5,
            template: WeightTemplate::Ahr,
            cox: CoxOptions::default(),
            screen: ScreenConfig::default(),
            impute: SoftImputeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub subpopulation: String,
    pub covariate: String,
    pub ahr: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub n: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDiagnostics {
    pub subpopulation: String,
    pub n: usize,
    pub n_events: usize,
    pub converged: bool,
    pub iterations: usize,
    pub weight_caps: usize,
    pub imputed_cells: usize,
    /// `None` when the test is undefined for the model.
    pub ph_global_p: Option<f64>,
    pub ph_p: Vec<(String, f64)>,
    pub dropped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub diagnostics: Vec<ModelDiagnostics>,
    pub notices: Vec<String>,
}

impl fmt::Display for RiskRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: AHR {:.3} ({:.3}-{:.3}) p={:.4} q={:.4} n={}",
            self.subpopulation, self.covariate, self.ahr, self.ci_lower, self.ci_upper, self.p_raw, self.p_adjusted, self.n
        )
    }
}

/// Initial states and first-to-second pairs whose share of the sequences
/// exceeds `threshold`, with their members (indices into `sequences`).
pub fn select_subpopulations(
    sequences: &[StateSequence<f64>],
    threshold: f64,
) -> Vec<(Subpopulation, Vec<usize>)> {
    let mut groups: BTreeMap<Subpopulation, Vec<usize>> = BTreeMap::new();
    for (i, s) in sequences.iter().enumerate() {
        let Some(&(_, first)) = s.points.first() else { continue };
        groups.entry(Subpopulation::Initial(first)).or_default().push(i);
        if let Some(&(_, second)) = s.points.iter().find(|p| p.1 != first) {
            groups.entry(Subpopulation::Pair(first, second)).or_default().push(i);
        }
    }
    let total = sequences.iter().filter(|s| !s.points.is_empty()).count() as f64;
    groups
        .into_iter()
        .filter(|(_, members)| members.len() as f64 / total > threshold)
        .collect()
}

/// Covariate table of the cohort panel; sex unknown is imputed by kNN.
pub fn covariate_table(patients: &[&CohortPatient], knn_k: usize) -> Result<NumericTable<f64>> {
    let mut columns = vec!["age_at_encounter".to_string(), "baseline_egfr".to_string()];
    columns.extend(COMORBIDITIES.iter().map(|c| c.to_string()));
    columns.extend(MEDICATION_CLASSES.iter().map(|c| c.to_string()));
    columns.push("sepsis_day1".into());
    columns.extend(DAY1_VARIABLES.iter().map(|v| format!("day1_{v}")));
    let rows: Vec<Vec<Option<f64>>> = patients
        .iter()
        .map(|p| {
            let c = &p.covariates;
            let mut row = vec![Some(c.age_at_encounter), c.baseline_egfr];
            row.extend(COMORBIDITIES.iter().map(|n| c.comorbidities.get(*n).map(|&v| f64::from(v))));
            row.extend(MEDICATION_CLASSES.iter().map(|n| c.medications.get(*n).map(|&v| f64::from(v))));
            row.push(Some(f64::from(c.sepsis_day1)));
            row.extend(DAY1_VARIABLES.iter().map(|v| c.day1.get(*v).copied()));
            row
        })
        .collect();
    let ids: Vec<String> = patients.iter().map(|p| p.person_id.clone()).collect();
    let base = NumericTable::new(columns.clone(), ids.clone(), rows.clone())?;
    let sex: Vec<Option<String>> = patients
        .iter()
        .map(|p| match p.covariates.sex {
            Sex::Unknown => None,
            s => Some(s.to_string()),
        })
        .collect();
    let sex = if sex.iter().any(Option::is_none) {
        knn_impute_categorical(&base, &sex, knn_k)?
    } else {
        sex.into_iter().map(Option::unwrap).collect()
    };
    columns.insert(1, "sex_male".into());
    let rows = rows
        .into_iter()
        .zip(&sex)
        .map(|(mut r, s)| {
            r.insert(1, Some(f64::from(u8::from(s == "M"))));
            r
        })
        .collect();
    NumericTable::new(columns, ids, rows)
}

struct Fitted {
    rows: Vec<RiskRow>,
    diagnostics: ModelDiagnostics,
}

fn fit_subpopulation(label: &str, patients: &[&CohortPatient], cfg: &RiskConfig) -> Result<Fitted> {
    let table = covariate_table(patients, cfg.knn_k)?;
    let (table, high_missing) = drop_high_missingness(&table, cfg.missing_threshold)?;
    let completed = complete_numeric(&table, &cfg.impute)?;
    let imputed_cells = completed.imputed_counts.iter().sum();
    let x = completed.table.to_matrix().expect("completed table is fully observed");
    let events: Vec<bool> = patients.iter().map(|p| p.window.outcome == Outcome::Ckd).collect();
    let covariates = CovariateTable::new(completed.table.columns.clone(), x)?;
    let (kept, screening) = screen_covariates(&covariates, &events, &cfg.screen)?;
    let screening = screening.with_high_missing(&high_missing);
    let times = patients.iter().map(|p| p.window.length_days() as f64).collect();
    let status = patients
        .iter()
        .map(|p| match p.window.outcome {
            Outcome::Ckd => Status::Event,
            Outcome::Death => Status::Competing,
            Outcome::Censored => Status::Censored,
        })
        .collect();
    let data = SurvivalData::new(times, status, kept.x, kept.names)?;
    let fit = weighted_cox_fit(&data, cfg.template, &cfg.cox)?;
    let ph = ph_test(&fit, &data).ok();
    let rows = (0..fit.names.len())
        .map(|j| RiskRow {
            subpopulation: label.to_string(),
            covariate: fit.names[j].clone(),
            ahr: fit.hazard_ratio[j],
            ci_lower: fit.ci_lower[j],
            ci_upper: fit.ci_upper[j],
            p_raw: fit.p_raw[j],
            p_adjusted: fit.p_adjusted[j],
            n: patients.len(),
            significant: fit.p_adjusted[j] < cfg.alpha,
        })
        .collect();
    let diagnostics = ModelDiagnostics {
        subpopulation: label.to_string(),
        n: patients.len(),
        n_events: fit.n_events,
        converged: fit.converged,
        iterations: fit.iterations,
        weight_caps: fit.weight_caps,
        imputed_cells,
        ph_global_p: ph.as_ref().map(|t| t.global_p),
        ph_p: ph.map(|t| t.names.into_iter().zip(t.p_values).collect()).unwrap_or_default(),
        dropped: screening.dropped.iter().map(|(n, r)| (n.clone(), r.to_string())).collect(),
    };
    Ok(Fitted { rows, diagnostics })
}

/// Impute, screen, weighted Cox, PH test and BH per subpopulation. Small
/// subpopulations, zero-length windows and failed fits become notices.
pub fn risk_factor_analysis(
    cohort: &[CohortPatient],
    sequences: &[StateSequence<f64>],
    k: usize,
    cfg: &RiskConfig,
) -> Result<RiskReport> {
    let by_id: BTreeMap<&str, &CohortPatient> = cohort.iter().map(|p| (p.person_id.as_str(), p)).collect();
    let mut notices = Vec::new();
    let mut jobs = Vec::new();
    for (sub, members) in select_subpopulations(sequences, cfg.prevalence_threshold) {
        let label = sub.label(k);
        let mut patients = Vec::with_capacity(members.len());
        let mut zero_length = 0;
        for &i in &members {
            let id = sequences[i].person_id.as_str();
            let p = by_id
                .get(id)
                .ok_or_else(|| Error::Contract(format!("state sequence for {id} has no cohort patient")))?;
            if p.window.length_days() > 0 {
                patients.push(*p);
            } else {
                zero_length += 1;
            }
        }
        if zero_length > 0 {
            notices.push(format!("{label}: {zero_length} zero-length windows left out of the model"));
        }
        if patients.len() < cfg.min_size {
            notices.push(format!("{label}: skipped, {} patients below minimum {}", patients.len(), cfg.min_size));
            continue;
        }
        jobs.push((label, patients));
    }
    let fitted: Vec<(String, Result<Fitted>)> =
        jobs.par_iter().map(|(label, patients)| (label.clone(), fit_subpopulation(label, patients, cfg))).collect();
    let mut report = RiskReport { notices, ..Default::default() };
    for (label, result) in fitted {
        match result {
            Ok(f) => {
                report.rows.extend(f.rows);
                report.diagnostics.push(f.diagnostics);
            }
            Err(e) => report.notices.push(format!("{label}: model skipped: {e}")),
        }
    }
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

impl RiskReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(RISK_COLUMNS).map_err(|e| csv_io(path, e))?;
        for r in &self.rows {
            w.write_record([
                r.subpopulation.clone(),
                r.covariate.clone(),
                r.ahr.to_string(),
                r.ci_lower.to_string(),
                r.ci_upper.to_string(),
                r.p_raw.to_string(),
                r.p_adjusted.to_string(),
                r.n.to_string(),
                r.significant.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_diagnostics_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record([
            "subpopulation",
            "n",
            "n_events",
            "converged",
            "iterations",
            "weight_caps",
            "imputed_cells",
            "ph_global_p",
            "ph_p_values",
            "dropped",
        ])
        .map_err(|e| csv_io(path, e))?;
        for d in &self.diagnostics {
            let ph = d.ph_p.iter().map(|(n, p)| format!("{n}={p}")).collect::<Vec<_>>().join(";");
            let dropped = d.dropped.iter().map(|(n, r)| format!("{n}:{r}")).collect::<Vec<_>>().join(";");
            w.write_record([
                d.subpopulation.clone(),
                d.n.to_string(),
                d.n_events.to_string(),
                d.converged.to_string(),
                d.iterations.to_string(),
                d.weight_caps.to_string(),
                d.imputed_cells.to_string(),
                fmt_opt(d.ph_global_p),
                ph,
                dropped,
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
