//! Cohort construction: baseline creatinine cascade, AKI eligibility,
//! prior-CKD exclusion, observation windows and the covariate panel.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    format_date, parse_date, ConceptSets, EventLog, Measurement, Person, Sex, Visit,
    COMORBIDITIES, MEDICATION_CLASSES,
};

/// Day-1 severity panel variables, in report order.
pub const DAY1_VARIABLES: [&str; 23] = [
    "Temp", "SBP", "DBP", "HR", "RR", "SpO2", "Na", "K", "HCO3", "BUN", "Cr", "Glu", "Ca", "Mg",
    "albumin", "bilirubin", "AST", "ALT", "ALP", "WBC", "Hb", "Plts", "INR",
];

pub const CREATININE: &str = "Cr";
pub const HEIGHT: &str = "Height";
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineRule {
    #[serde(rename = "median_365_7")]
    Median365To7,
    #[serde(rename = "min_7_0")]
    Min7To0,
    MinInVisit,
}

impl BaselineRule {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineRule::Median365To7 => "median_365_7",
            BaselineRule::Min7To0 => "min_7_0",
            BaselineRule::MinInVisit => "min_in_visit",
        }
    }
}

impl FromStr for BaselineRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "median_365_7" => Ok(Self::Median365To7),
            "min_7_0" => Ok(Self::Min7To0),
            "min_in_visit" => Ok(Self::MinInVisit),
            _ => Err(format!("unknown baseline rule {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCreatinine {
    /// mg/dL
    pub value: f64,
    pub rule: BaselineRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ckd,
    Death,
    Censored,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ckd => "ckd",
            Outcome::Death => "death",
            Outcome::Censored => "censored",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ckd" => Ok(Outcome::Ckd),
            "death" => Ok(Outcome::Death),
            "censored" => Ok(Outcome::Censored),
            _ => Err(format!("unknown outcome {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationWindow {
    pub t_start: NaiveDate,
    pub t_end: NaiveDate,
    pub outcome: Outcome,
}

impl ObservationWindow {
    pub fn length_days(&self) -> i64 {
        (self.t_end - self.t_start).num_days()
    }

    /// Whether `date` falls inside `[t_start, t_end]`.
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.t_start && date <= self.t_end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePanel {
    pub sex: Sex,
    pub age_at_encounter: f64,
    /// mL/min/1.73m²
    pub baseline_egfr: Option<f64>,
    /// Keyed by [`COMORBIDITIES`]; values 0/1.
    pub comorbidities: BTreeMap<String, u8>,
    /// Keyed by [`MEDICATION_CLASSES`]; values 0/1.
    pub medications: BTreeMap<String, u8>,
    pub sepsis_day1: u8,
    /// Day-1 means of in-range measurements; absent when unobserved.
    pub day1: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortPatient {
    pub person_id: String,
    pub visit_id: String,
    pub baseline: BaselineCreatinine,
    pub window: ObservationWindow,
    pub covariates: CovariatePanel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AkiDecision {
    Eligible,
    TooFewMeasurements,
    NoRiseIn48h,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionDecision {
    Keep,
    PriorCkd,
    BaselineAtLeastThreshold,
}

/// Ordered `(filter, patients remaining)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttritionReport {
    pub steps: Vec<(String, usize)>,
}

impl AttritionReport {
    pub fn final_count(&self) -> usize {
        self.steps.last().map_or(0, |s| s.1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["filter", "remaining"]).map_err(|e| csv_io(path, e))?;
        for (name, n) in &self.steps {
            w.write_record([name.as_str(), &n.to_string()])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(&path.display().to_string(), row, format!("{other:?}")),
    }
}

/// Pediatric eGFR formula `(age, sex, scr mg/dL, height m) -> eGFR`.
pub type ChildEgfrFormula = fn(f64, Sex, f64, f64) -> Result<f64>;

#[derive(Debug, Clone)]
pub struct CohortConfig {
    pub baseline_ckd_threshold: f64,
    pub rise_factor: f64,
    pub eligibility_hours: i64,
    pub day1_hours: i64,
    pub medication_lookback_days: i64,
    pub child_egfr: ChildEgfrFormula,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            baseline_ckd_threshold: 1.2,
            rise_factor: 1.5,
            eligibility_hours: 48,
            day1_hours: 24,
            medication_lookback_days: 365,
            child_egfr: ckid_u25_egfr,
        }
    }
}

/// Timestamped creatinine value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrPoint {
    pub at: NaiveDateTime,
    pub value: f64,
}

fn midnight(d: NaiveDate) -> NaiveDateTime {
    d.and_time(NaiveTime::MIN)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Creatinine measurements of one person, sorted by time.
pub fn creatinine_points<'a>(
    measurements: impl Iterator<Item = &'a Measurement>,
    sets: &ConceptSets,
) -> Vec<CrPoint> {
    let concepts = sets.panel_concepts(CREATININE);
    let mut pts: Vec<CrPoint> = measurements
        .filter(|m| concepts.contains(&m.concept_id))
        .map(|m| CrPoint {
            at: m.datetime,
            value: m.value,
        })
        .collect();
    pts.sort_by(|a, b| a.at.cmp(&b.at).then(a.value.total_cmp(&b.value)));
    pts
}

/// Baseline cascade: median over `[start-365d, start-7d)`, else minimum over
/// `[start-7d, start)`, else minimum during the visit. `None` when no
/// creatinine exists in any window.
pub fn baseline_creatinine(visit: &Visit, creatinine: &[CrPoint]) -> Option<BaselineCreatinine> {
    let start = midnight(visit.start_date);
    let in_range = |lo: NaiveDateTime, hi: NaiveDateTime| -> Vec<f64> {
        creatinine
            .iter()
            .filter(|p| p.at >= lo && p.at < hi)
            .map(|p| p.value)
            .collect()
    };
    let mut pre = in_range(start - Duration::days(365), start - Duration::days(7));
    if !pre.is_empty() {
        return Some(BaselineCreatinine {
            value: median(&mut pre),
            rule: BaselineRule::Median365To7,
        });
    }
    let recent = in_range(start - Duration::days(7), start);
    if let Some(v) = recent.into_iter().reduce(f64::min) {
        return Some(BaselineCreatinine {
            value: v,
            rule: BaselineRule::Min7To0,
        });
    }
    let visit_end = midnight(visit.end_date) + Duration::days(1);
    in_range(start, visit_end)
        .into_iter()
        .reduce(f64::min)
        .map(|v| BaselineCreatinine {
            value: v,
            rule: BaselineRule::MinInVisit,
        })
}

/// At least two creatinine values in `[start, start+48h]` and one of them at
/// least `rise_factor` times the baseline.
pub fn aki_eligibility(
    baseline: &BaselineCreatinine,
    visit: &Visit,
    creatinine: &[CrPoint],
    cfg: &CohortConfig,
) -> AkiDecision {
    let start = midnight(visit.start_date);
    let end = start + Duration::hours(cfg.eligibility_hours);
    let window: Vec<f64> = creatinine
        .iter()
        .filter(|p| p.at >= start && p.at <= end)
        .map(|p| p.value)
        .collect();
    if window.len() < 2 {
        return AkiDecision::TooFewMeasurements;
    }
    let threshold = cfg.rise_factor * baseline.value;
    if window.iter().any(|&v| v >= threshold) {
        AkiDecision::Eligible
    } else {
        AkiDecision::NoRiseIn48h
    }
}

/// Excludes prior or concurrent CKD: a CKD concept dated on or before the
/// visit end, or a baseline at or above the threshold.
pub fn ckd_exclusion(
    log: &EventLog,
    visit: &Visit,
    baseline: &BaselineCreatinine,
    sets: &ConceptSets,
    cfg: &CohortConfig,
) -> ExclusionDecision {
    let prior = log
        .events_of(&visit.person_id)
        .any(|e| e.date <= visit.end_date && sets.ckd.contains(&e.concept_id));
    if prior {
        ExclusionDecision::PriorCkd
    } else if baseline.value >= cfg.baseline_ckd_threshold {
        ExclusionDecision::BaselineAtLeastThreshold
    } else {
        ExclusionDecision::Keep
    }
}

/// `t_end` is the earliest of the first CKD concept on or after the visit
/// start, the death date and the last recorded entry; ties resolve CKD, then
/// death, then censoring.
pub fn observation_window(
    log: &EventLog,
    person: &Person,
    visit: &Visit,
    sets: &ConceptSets,
) -> Result<ObservationWindow> {
    let t_start = visit.start_date;
    // the death date is itself a recorded entry
    let last = log
        .last_record_date(&person.person_id)
        .max(person.death_date)
        .filter(|&d| d >= t_start)
        .ok_or_else(|| Error::DegenerateWindow(person.person_id.clone()))?;
    let ckd = log
        .events_of(&person.person_id)
        .filter(|e| e.date >= t_start && sets.ckd.contains(&e.concept_id))
        .map(|e| e.date)
        .min();
    let death = person.death_date;
    let mut best = (last, Outcome::Censored);
    if let Some(d) = death {
        if d <= best.0 {
            best = (d, Outcome::Death);
        }
    }
    if let Some(c) = ckd {
        if c <= best.0 {
            best = (c, Outcome::Ckd);
        }
    }
    if best.0 < t_start {
        return Err(Error::DegenerateWindow(person.person_id.clone()));
    }
    Ok(ObservationWindow {
        t_start,
        t_end: best.0,
        outcome: best.1,
    })
}

/// Mean of in-range panel measurements in `[start, start+24h]`, per variable.
pub fn day1_severity<'a>(
    visit: &Visit,
    measurements: impl Iterator<Item = &'a Measurement>,
    sets: &ConceptSets,
    cfg: &CohortConfig,
) -> BTreeMap<String, f64> {
    let start = midnight(visit.start_date);
    let end = start + Duration::hours(cfg.day1_hours);
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for m in measurements {
        if m.datetime < start || m.datetime > end {
            continue;
        }
        let Some(var) = sets.panel.get(&m.concept_id) else {
            continue;
        };
        if !DAY1_VARIABLES.contains(&var.as_str()) {
            continue;
        }
        if let Some(r) = sets.ranges.get(var) {
            if !r.contains(m.value) {
                continue;
            }
        }
        let e = acc.entry(var.as_str()).or_insert((0.0, 0));
        e.0 += m.value;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k.to_string(), s / n as f64))
        .collect()
}

/// Adult eGFR (2021 CKD-EPI creatinine equation).
pub fn ckd_epi_2021(age: f64, sex: Sex, scr: f64) -> Result<f64> {
    if !(scr > 0.0) {
        return Err(Error::Domain(format!("serum creatinine must be positive, got {scr}")));
    }
    let (kappa, alpha, female_factor) = match sex {
        Sex::F => (0.7, -0.241, 1.012),
        Sex::M => (0.9, -0.302, 1.0),
        Sex::Unknown => return Err(Error::Domain("eGFR requires a known sex".into())),
    };
    let ratio = scr / kappa;
    Ok(142.0
        * ratio.min(1.0).powf(alpha)
        * ratio.max(1.0).powf(-1.200)
        * 0.9938f64.powf(age)
        * female_factor)
}

/// Pediatric eGFR, CKiD U25 creatinine equation: `K · height / scr` with an
/// age- and sex-dependent `K`; height in metres.
pub fn ckid_u25_egfr(age: f64, sex: Sex, scr: f64, height_m: f64) -> Result<f64> {
    if !(scr > 0.0) {
        return Err(Error::Domain(format!("serum creatinine must be positive, got {scr}")));
    }
    if !(height_m > 0.0) {
        return Err(Error::Domain(format!("height must be positive, got {height_m}")));
    }
    let k = match sex {
        Sex::M if age < 12.0 => 39.0 * 1.008f64.powf(age - 12.0),
        Sex::M if age < 18.0 => 39.0 * 1.045f64.powf(age - 12.0),
        Sex::M => 50.8,
        Sex::F if age < 12.0 => 36.1 * 1.008f64.powf(age - 12.0),
        Sex::F if age < 18.0 => 36.1 * 1.023f64.powf(age - 12.0),
        Sex::F => 41.4,
        Sex::Unknown => return Err(Error::Domain("eGFR requires a known sex".into())),
    };
    Ok(k * height_m / scr)
}

/// eGFR in mL/min/1.73m²: CKD-EPI 2021 for adults, the pediatric formula of
/// `cfg` below 18 years.
pub fn egfr(age: f64, sex: Sex, scr: f64, height_m: Option<f64>, cfg: &CohortConfig) -> Result<f64> {
    if !(age >= 0.0) {
        return Err(Error::Domain(format!("age must be non-negative, got {age}")));
    }
    if !(scr > 0.0) {
        return Err(Error::Domain(format!("serum creatinine must be positive, got {scr}")));
    }
    if age >= 18.0 {
        ckd_epi_2021(age, sex, scr)
    } else {
        let h = height_m.ok_or(Error::MissingHeight { age })?;
        (cfg.child_egfr)(age, sex, scr, h)
    }
}

pub fn age_years(birth: NaiveDate, at: NaiveDate) -> f64 {
    (at - birth).num_days() as f64 / DAYS_PER_YEAR
}

/// Assembles the covariate panel. Absent evidence means a flag of 0.
pub fn assemble_covariates(
    log: &EventLog,
    person: &Person,
    visit: &Visit,
    sets: &ConceptSets,
    day1: BTreeMap<String, f64>,
    baseline: &BaselineCreatinine,
    cfg: &CohortConfig,
) -> CovariatePanel {
    let start = visit.start_date;
    let events: Vec<_> = log.events_of(&person.person_id).collect();
    let comorbidities = COMORBIDITIES
        .iter()
        .map(|&name| {
            let hit = sets.comorbidity(name).is_some_and(|set| {
                events
                    .iter()
                    .any(|e| e.date < start && set.contains(&e.concept_id))
            });
            (name.to_string(), u8::from(hit))
        })
        .collect();
    let lookback = start - Duration::days(cfg.medication_lookback_days);
    let medications = MEDICATION_CLASSES
        .iter()
        .map(|&name| {
            let hit = sets.medication(name).is_some_and(|set| {
                events
                    .iter()
                    .any(|e| e.date >= lookback && e.date <= start && set.contains(&e.concept_id))
            });
            (name.to_string(), u8::from(hit))
        })
        .collect();
    let day1_end = midnight(start) + Duration::hours(cfg.day1_hours);
    let sepsis = events.iter().any(|e| {
        let at = midnight(e.date);
        at >= midnight(start) && at <= day1_end && sets.sepsis.contains(&e.concept_id)
    });
    let age = age_years(person.birth_date, start);
    let height_concepts = sets.panel_concepts(HEIGHT);
    let height = log
        .measurements_of(&person.person_id)
        .filter(|m| m.datetime <= day1_end && height_concepts.contains(&m.concept_id))
        .last()
        .map(|m| m.value);
    let baseline_egfr = egfr(age, person.sex, baseline.value, height, cfg).ok();
    CovariatePanel {
        sex: person.sex,
        age_at_encounter: age,
        baseline_egfr,
        comorbidities,
        medications,
        sepsis_day1: u8::from(sepsis),
        day1,
    }
}

/// First visit carrying an AKI concept within its dates.
pub fn first_aki_visit<'a>(log: &'a EventLog, person_id: &str, sets: &ConceptSets) -> Option<&'a Visit> {
    let aki_dates: Vec<NaiveDate> = log
        .events_of(person_id)
        .filter(|e| sets.aki.contains(&e.concept_id))
        .map(|e| e.date)
        .collect();
    log.visits_of(person_id)
        .find(|v| aki_dates.iter().any(|&d| d >= v.start_date && d <= v.end_date))
}

/// Where a person left the funnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fate {
    NoAkiVisit,
    NoCreatinine,
    TooFewMeasurements,
    NoRiseIn48h,
    PriorCkd,
    BaselineAtLeastThreshold,
    DegenerateWindow,
    Included,
}

const ATTRITION_STEPS: [&str; 8] = [
    "persons",
    "aki_visit",
    "has_creatinine",
    "two_cr_within_48h",
    "cr_rise_50pct_within_48h",
    "no_prior_ckd",
    "baseline_cr_below_1.2",
    "valid_window",
];

/// Runs the eligibility funnel for one person.
pub fn evaluate_person(
    log: &EventLog,
    person: &Person,
    sets: &ConceptSets,
    cfg: &CohortConfig,
) -> (Fate, Option<CohortPatient>) {
    let Some(visit) = first_aki_visit(log, &person.person_id, sets) else {
        return (Fate::NoAkiVisit, None);
    };
    let cr = creatinine_points(log.measurements_of(&person.person_id), sets);
    let Some(baseline) = baseline_creatinine(visit, &cr) else {
        return (Fate::NoCreatinine, None);
    };
    match aki_eligibility(&baseline, visit, &cr, cfg) {
        AkiDecision::Eligible => {}
        AkiDecision::TooFewMeasurements => return (Fate::TooFewMeasurements, None),
        AkiDecision::NoRiseIn48h => return (Fate::NoRiseIn48h, None),
    }
    match ckd_exclusion(log, visit, &baseline, sets, cfg) {
        ExclusionDecision::Keep => {}
        ExclusionDecision::PriorCkd => return (Fate::PriorCkd, None),
        ExclusionDecision::BaselineAtLeastThreshold => {
            return (Fate::BaselineAtLeastThreshold, None)
        }
    }
    let Ok(window) = observation_window(log, person, visit, sets) else {
        return (Fate::DegenerateWindow, None);
    };
    let day1 = day1_severity(visit, log.measurements_of(&person.person_id), sets, cfg);
    let covariates = assemble_covariates(log, person, visit, sets, day1, &baseline, cfg);
    (
        Fate::Included,
        Some(CohortPatient {
            person_id: person.person_id.clone(),
            visit_id: visit.visit_id.clone(),
            baseline,
            window,
            covariates,
        }),
    )
}

#[derive(Debug, Clone)]
pub struct CohortBuild {
    /// In person_id order.
    pub patients: Vec<CohortPatient>,
    pub attrition: AttritionReport,
    pub fates: BTreeMap<String, Fate>,
    pub warnings: Vec<String>,
}

/// Applies the funnel to every person; results are merged in person_id order.
pub fn build_cohort(log: &EventLog, sets: &ConceptSets, cfg: &CohortConfig) -> CohortBuild {
    let ids: Vec<&str> = log.person_ids().collect();
    let results: Vec<(Fate, Option<CohortPatient>)> = ids
        .par_iter()
        .map(|id| {
            let person = log.person(id).expect("indexed person");
            evaluate_person(log, person, sets, cfg)
        })
        .collect();
    let mut remaining = [0usize; ATTRITION_STEPS.len()];
    let mut fates = BTreeMap::new();
    let mut patients = Vec::new();
    for (id, (fate, patient)) in ids.iter().zip(results) {
        // a person survives every filter strictly before its fate
        let survived = fate as usize + 1;
        for r in remaining.iter_mut().take(survived.min(ATTRITION_STEPS.len())) {
            *r += 1;
        }
        fates.insert(id.to_string(), fate);
        patients.extend(patient);
    }
    let attrition = AttritionReport {
        steps: ATTRITION_STEPS
            .iter()
            .zip(remaining)
            .map(|(n, c)| (n.to_string(), c))
            .collect(),
    };
    let mut warnings = Vec::new();
    if patients.is_empty() {
        warnings.push("cohort is empty".to_string());
    }
    let rule3 = patients
        .iter()
        .filter(|p| p.baseline.rule == BaselineRule::MinInVisit)
        .count();
    if rule3 > 0 {
        warnings.push(format!(
            "{rule3} patients use the in-visit minimum baseline (same series as the rise test)"
        ));
    }
    CohortBuild {
        patients,
        attrition,
        fates,
        warnings,
    }
}

fn cohort_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "person_id",
        "visit_id",
        "sex",
        "age_at_encounter",
        "baseline_cr",
        "baseline_rule",
        "t_start",
        "t_end",
        "outcome",
        "follow_up_days",
        "baseline_egfr",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(COMORBIDITIES.iter().map(|s| s.to_string()));
    h.extend(MEDICATION_CLASSES.iter().map(|s| s.to_string()));
    h.push("sepsis_day1".into());
    h.extend(DAY1_VARIABLES.iter().map(|v| format!("day1_{v}")));
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per patient with window fields and every covariate.
pub fn write_cohort_csv(patients: &[CohortPatient], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(cohort_header()).map_err(|e| csv_io(path, e))?;
    for p in patients {
        let c = &p.covariates;
        let mut row = vec![
            p.person_id.clone(),
            p.visit_id.clone(),
            c.sex.to_string(),
            c.age_at_encounter.to_string(),
            p.baseline.value.to_string(),
            p.baseline.rule.as_str().to_string(),
            format_date(p.window.t_start),
            format_date(p.window.t_end),
            p.window.outcome.to_string(),
            p.window.length_days().to_string(),
            opt(c.baseline_egfr),
        ];
        row.extend(COMORBIDITIES.iter().map(|k| c.comorbidities[*k].to_string()));
        row.extend(MEDICATION_CLASSES.iter().map(|k| c.medications[*k].to_string()));
        row.push(c.sepsis_day1.to_string());
        row.extend(DAY1_VARIABLES.iter().map(|v| opt(c.day1.get(*v).copied())));
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cohort_csv(path: &Path) -> Result<Vec<CohortPatient>> {
    const T: &str = "cohort";
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = r.headers().map_err(|e| csv_io(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(T, 0, format!("missing column {name:?}")))
    };
    let idx: BTreeMap<String, usize> = cohort_header()
        .into_iter()
        .map(|h| col(&h).map(|i| (h, i)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::parse(T, row, "record", e))?;
        let get = |name: &str| rec.get(idx[name]).unwrap_or("");
        let num = |name: &str| -> Result<f64> {
            get(name)
                .parse::<f64>()
                .map_err(|e| Error::parse(T, row, name, e))
        };
        let opt_num = |name: &str| -> Result<Option<f64>> {
            let s = get(name);
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| Error::parse(T, row, name, e))
            }
        };
        let flag = |name: &str| -> Result<u8> {
            match get(name) {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::parse(T, row, name, format!("flag {other:?}"))),
            }
        };
        let date = |name: &str| -> Result<NaiveDate> {
            parse_date(get(name)).map_err(|e| Error::parse(T, row, name, e))
        };
        let mut day1 = BTreeMap::new();
        for v in DAY1_VARIABLES {
            if let Some(x) = opt_num(&format!("day1_{v}"))? {
                day1.insert(v.to_string(), x);
            }
        }
        out.push(CohortPatient {
            person_id: get("person_id").to_string(),
            visit_id: get("visit_id").to_string(),
            baseline: BaselineCreatinine {
                value: num("baseline_cr")?,
                rule: get("baseline_rule")
                    .parse()
                    .map_err(|e| Error::parse(T, row, "baseline_rule", e))?,
            },
            window: ObservationWindow {
                t_start: date("t_start")?,
                t_end: date("t_end")?,
                outcome: get("outcome")
                    .parse()
                    .map_err(|e| Error::parse(T, row, "outcome", e))?,
            },
            covariates: CovariatePanel {
                sex: get("sex").parse().map_err(|e| Error::parse(T, row, "sex", e))?,
                age_at_encounter: num("age_at_encounter")?,
                baseline_egfr: opt_num("baseline_egfr")?,
                comorbidities: COMORBIDITIES
                    .iter()
                    .map(|k| flag(k).map(|f| (k.to_string(), f)))
                    .collect::<Result<_>>()?,
                medications: MEDICATION_CLASSES
                    .iter()
                    .map(|k| flag(k).map(|f| (k.to_string(), f)))
                    .collect::<Result<_>>()?,
                sepsis_day1: flag("sepsis_day1")?,
                day1,
            },
        });
    }
    Ok(out)
}
