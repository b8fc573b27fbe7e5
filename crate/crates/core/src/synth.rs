//! Synthetic event-log cohorts with a planted multi-state process.
//!
//! Each patient follows a continuous-time Markov chain over `K` transient
//! states plus CKD and death, simulated from the intensity matrix `Q`
//! (per day) by exponential holding times. The chain clock starts at the
//! admission date. A transition at time `τ` is visible in the records from
//! day `⌈τ⌉`, so the state written for day `d` is the latent state at `d`.
//! Admission records (pre-visit creatinine, a 48h rise, an AKI code) are
//! planted so every patient passes the cohort funnel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::CREATININE;
use crate::error::{Error, Result};
use crate::features::HashedCodeEmbedder;
use crate::ingest::{
    write_event_log, ConceptConfig, Domain, Event, EventLog, EventLogPaths, Measurement, Person, Sex, ValidRange,
    Visit, COMORBIDITIES,
};
use crate::linalg::{expm, Matrix};
use crate::msm::{PatientPath, Transition, TransitionEventSet};

pub const AKI_CONCEPT: &str = "SYN_AKI";
pub const CKD_CONCEPT: &str = "SYN_CKD";
pub const SEPSIS_CONCEPT: &str = "SYN_SEPSIS";
pub const FOLLOW_UP_CONCEPT: &str = "SYN_FOLLOWUP";
const CR_CONCEPT: &str = "SYN_CR";
const EXPM_TOL: f64 = 1e-10;

/// Day-1 panel variables the generator fills: (variable, concept, lo, hi).
const PANEL: [(&str, &str, f64, f64); 5] = [
    ("BUN", "SYN_BUN", 8.0, 60.0),
    ("HR", "SYN_HR", 55.0, 120.0),
    ("SBP", "SYN_SBP", 90.0, 170.0),
    ("Na", "SYN_NA", 130.0, 148.0),
    ("WBC", "SYN_WBC", 4.0, 18.0),
];
const RACES: [&str; 4] = ["white", "black", "asian", "other"];
const ETHNICITIES: [&str; 2] = ["hispanic", "not_hispanic"];

/// Emission model of one transient state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEmission {
    /// Condition concepts recorded while in the state.
    pub pool: Vec<String>,
    /// Probability that a day in the state carries records.
    pub daily_rate: f64,
    /// Per-code inclusion probability on a record day (at least one is kept).
    pub code_prob: f64,
    pub cr_mean: f64,
    pub cr_sd: f64,
    /// Creatinine change per year spent in the state.
    pub cr_drift: f64,
}

/// Binary comorbidity acting on the CKD intensity by `exp(log_hr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCovariate {
    /// One of the comorbidity names known to the cohort module.
    pub name: String,
    pub prevalence: f64,
    pub log_hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Transient state count; `Q` is `(K+2)×(K+2)` with CKD at `K`, death at `K+1`.
    pub k: usize,
    pub q: Vec<Vec<f64>>,
    /// Entry distribution over the transient states.
    pub initial: Vec<f64>,
    pub emission: Vec<StateEmission>,
    #[serde(default)]
    pub covariates: Vec<PlantedCovariate>,
    /// Rate of the exponential censoring clock, per day.
    pub censor_rate: f64,
    pub max_follow_up_days: f64,
    /// Probability of a creatinine draw on a record day.
    pub cr_prob: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (k, n) = (self.k, self.k + 2);
        if k == 0 || self.n_patients == 0 {
            return bad("need at least one transient state and one patient".into());
        }
        if self.q.len() != n || self.q.iter().any(|r| r.len() != n) {
            return bad(format!("Q must be {n}×{n} for K={k}"));
        }
        for (i, row) in self.q.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return bad(format!("Q row {i} has a non-finite entry"));
            }
            if row.iter().enumerate().any(|(j, &v)| j != i && v < 0.0) {
                return bad(format!("Q row {i} has a negative off-diagonal intensity"));
            }
            let scale = row.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
            if row.iter().sum::<f64>().abs() > 1e-9 * scale {
                return bad(format!("Q row {i} does not sum to zero"));
            }
            if i >= k && row.iter().any(|&v| v != 0.0) {
                return bad(format!("terminal row {i} of Q must be zero"));
            }
        }
        if self.initial.len() != k
            || self.initial.iter().any(|&p| !(p >= 0.0))
            || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("initial distribution must have K non-negative entries summing to 1".into());
        }
        if self.emission.len() != k {
            return bad(format!("need {k} emission models, got {}", self.emission.len()));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for (s, e) in self.emission.iter().enumerate() {
            if e.pool.is_empty() || !unit(e.daily_rate) || !unit(e.code_prob) {
                return bad(format!("emission of state {s}: empty pool or rate outside [0, 1]"));
            }
            if !(e.cr_mean > 0.0) || !(e.cr_sd >= 0.0) || !e.cr_drift.is_finite() {
                return bad(format!("emission of state {s}: invalid creatinine model"));
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.covariates {
            if !COMORBIDITIES.contains(&c.name.as_str()) || !seen.insert(&c.name) {
                return bad(format!("planted covariate {:?} is unknown or repeated", c.name));
            }
            if !unit(c.prevalence) || !c.log_hr.is_finite() {
                return bad(format!("planted covariate {:?} has an invalid prevalence or effect", c.name));
            }
        }
        if !(self.censor_rate >= 0.0) || !(self.max_follow_up_days >= 1.0) || !unit(self.cr_prob) {
            return bad("censoring needs rate ≥ 0 and max follow-up ≥ 1 day; cr_prob in [0, 1]".into());
        }
        Ok(())
    }

    /// Illness-free baseline: one transient state, CKD and death.
    pub fn three_state(n_patients: usize) -> Self {
        let (ckd, death) = (3e-4, 1.5e-4);
        Self {
            n_patients,
            k: 1,
            q: vec![vec![-(ckd + death), ckd, death], vec![0.0; 3], vec![0.0; 3]],
            initial: vec![1.0],
            emission: vec![StateEmission {
                pool: vec!["SYN_S0_A".into(), "SYN_S0_B".into()],
                daily_rate: 0.01,
                code_prob: 0.7,
                cr_mean: 1.0,
                cr_sd: 0.1,
                cr_drift: 0.05,
            }],
            covariates: vec![
                PlantedCovariate { name: "DM".into(), prevalence: 0.4, log_hr: 0.7 },
                PlantedCovariate { name: "HTN".into(), prevalence: 0.5, log_hr: 0.0 },
            ],
            censor_rate: 2e-4,
            max_follow_up_days: 3653.0,
            cr_prob: 0.5,
        }
    }

    /// Progressive chain over `k` transient states with forward and backward
    /// moves, CKD intensity rising along the chain, and well-separated code
    /// pools (distinct hash buckets under the default code embedder).
    pub fn progressive(k: usize, n_patients: usize) -> Self {
        let n = k + 2;
        let mut q = vec![vec![0.0; n]; n];
        for s in 0..k {
            let fwd = if s + 1 < k { 1.6e-3 } else { 0.0 };
            let back = if s > 0 { 8e-4 } else { 0.0 };
            let ckd = 1e-4 + 6e-4 * s as f64 / k.max(2) as f64;
            let death = 1.5e-4;
            if s + 1 < k {
                q[s][s + 1] = fwd;
            }
            if s > 0 {
                q[s][s - 1] = back;
            }
            q[s][k] = ckd;
            q[s][k + 1] = death;
            q[s][s] = -(fwd + back + ckd + death);
        }
        let pools = distinct_pools(k, 3);
        let emission = pools
            .into_iter()
            .enumerate()
            .map(|(s, pool)| StateEmission {
                pool,
                daily_rate: 0.03,
                code_prob: 1.0,
                cr_mean: 0.8 + 0.06 * s as f64,
                cr_sd: 0.08,
                cr_drift: 0.02,
            })
            .collect();
        Self {
            n_patients,
            k,
            q,
            initial: vec![1.0 / k as f64; k],
            emission,
            covariates: vec![
                PlantedCovariate { name: "DM".into(), prevalence: 0.35, log_hr: 0.5 },
                PlantedCovariate { name: "HTN".into(), prevalence: 0.5, log_hr: 0.2 },
                PlantedCovariate { name: "CHF".into(), prevalence: 0.15, log_hr: 0.0 },
            ],
            censor_rate: 3e-4,
            max_follow_up_days: 1826.0,
            cr_prob: 0.3,
        }
    }

    pub fn q_matrix(&self) -> Matrix<f64> {
        Matrix::from_rows(&self.q).expect("validated square Q")
    }

    /// Concept configuration matching the codes the generator emits.
    pub fn concept_config(&self) -> ConceptConfig {
        let mut cfg = ConceptConfig::default();
        cfg.sets.insert("aki".into(), vec![AKI_CONCEPT.into()]);
        cfg.sets.insert("ckd".into(), vec![CKD_CONCEPT.into()]);
        cfg.sets.insert("sepsis".into(), vec![SEPSIS_CONCEPT.into()]);
        for name in COMORBIDITIES {
            cfg.comorbidities.insert(name.into(), vec![comorbidity_concept(name)]);
        }
        cfg.panel.insert(CR_CONCEPT.into(), CREATININE.into());
        cfg.ranges.insert(CREATININE.into(), ValidRange { lo: 0.1, hi: 20.0, unit: "mg/dL".into() });
        for (var, concept, lo, hi) in PANEL {
            cfg.panel.insert(concept.into(), var.into());
            cfg.ranges.insert(var.into(), ValidRange { lo: lo * 0.5, hi: hi * 1.5, unit: String::new() });
        }
        for (s, e) in self.emission.iter().enumerate() {
            let group = format!("SYN_GROUP_{s}");
            cfg.disease_groups.insert(format!("state_{s}_codes"), vec![group.clone()]);
            cfg.edges.extend(e.pool.iter().map(|c| (c.clone(), group.clone())));
        }
        cfg
    }
}

fn comorbidity_concept(name: &str) -> String {
    format!("SYN_{}", name.to_uppercase())
}

/// `k` pools of `m` codes whose hash buckets collide neither with each
/// other nor with the fixed admission, panel and comorbidity codes.
fn distinct_pools(k: usize, m: usize) -> Vec<Vec<String>> {
    let hasher = HashedCodeEmbedder::default();
    let fixed = [AKI_CONCEPT, CKD_CONCEPT, SEPSIS_CONCEPT, FOLLOW_UP_CONCEPT, CR_CONCEPT]
        .into_iter()
        .map(String::from)
        .chain(PANEL.iter().map(|p| p.1.to_string()))
        .chain(COMORBIDITIES.iter().map(|c| comorbidity_concept(c)));
    let mut used: BTreeSet<usize> = fixed.map(|c| hasher.bucket(&c)).collect();
    let exhaustive = used.len() + k * m <= hasher.dim;
    let mut pools = Vec::with_capacity(k);
    let mut serial = 0usize;
    for s in 0..k {
        let mut pool = Vec::with_capacity(m);
        while pool.len() < m {
            let code = format!("SYN_S{s}_C{serial}");
            serial += 1;
            // once buckets run out, any fresh name will do
            if !exhaustive || used.insert(hasher.bucket(&code)) {
                pool.push(code);
            }
        }
        pools.push(pool);
    }
    pools
}

/// Latent path of one patient in continuous time (days since admission).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub person_id: String,
    pub initial: usize,
    /// `(time, to)` in time order.
    pub jumps: Vec<(f64, usize)>,
    /// Integer censoring day; `None` when absorbed first.
    pub censor_day: Option<i64>,
    /// Planted covariate values, in config order.
    pub x: Vec<f64>,
}

impl LatentPath {
    /// State occupied at `t`; `None` beyond follow-up.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        if self.censor_day.is_some_and(|c| t > c as f64) {
            return None;
        }
        Some(self.jumps.iter().take_while(|j| j.0 <= t).last().map_or(self.initial, |j| j.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub k: usize,
    pub q: Matrix<f64>,
    pub beta: BTreeMap<String, f64>,
    pub paths: Vec<LatentPath>,
}

impl GroundTruth {
    /// `P(0, t] = exp(Q t)`.
    pub fn transition_probabilities(&self, t_days: f64) -> Result<Matrix<f64>> {
        expm(&self.q.scale(t_days), EXPM_TOL)
    }

    /// Latent paths in continuous time as multi-state input.
    pub fn event_set(&self) -> TransitionEventSet<f64> {
        let patients = self
            .paths
            .iter()
            .map(|p| {
                let mut from = p.initial;
                let transitions = p
                    .jumps
                    .iter()
                    .map(|&(time, to)| {
                        let t = Transition { time, from, to };
                        from = to;
                        t
                    })
                    .collect();
                PatientPath {
                    person_id: p.person_id.clone(),
                    entry_state: p.initial,
                    transitions,
                    censor: p.censor_day.map(|c| c as f64),
                }
            })
            .collect();
        TransitionEventSet { k: self.k, patients }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct TruthFile<'a> {
            seed: u64,
            k: usize,
            n_patients: usize,
            q: Vec<Vec<f64>>,
            beta: &'a BTreeMap<String, f64>,
        }
        let q = (0..self.q.rows()).map(|i| self.q.row(i).to_vec()).collect();
        let body = TruthFile { seed: self.seed, k: self.k, n_patients: self.paths.len(), q, beta: &self.beta };
        let text = serde_json::to_string_pretty(&body).map_err(|e| Error::Numeric(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub log: EventLog,
    pub concepts: ConceptConfig,
    pub truth: GroundTruth,
}

impl SynthCohort {
    /// Ingest CSVs, `concepts.toml` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_event_log(&self.log, &EventLogPaths::in_dir(dir))?;
        let concepts = dir.join("concepts.toml");
        let text = toml::to_string(&self.concepts).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&concepts, text).map_err(|e| Error::io(&concepts, e))?;
        self.truth.write_json(&dir.join("truth.json"))
    }
}

struct PatientRecords {
    person: Person,
    visit: Visit,
    events: Vec<Event>,
    measurements: Vec<Measurement>,
    path: LatentPath,
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding fell off the end; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn at_hour(d: NaiveDate, h: u32) -> NaiveDateTime {
    d.and_hms_opt(h, 0, 0).expect("valid hour")
}

fn simulate_patient(cfg: &SynthConfig, seed: u64, index: usize) -> PatientRecords {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let k = cfg.k;
    let pid = format!("P{:06}", index + 1);
    let origin = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let t0 = origin + Duration::days(rng.random_range(0..730));
    let age_days = (rng.random_range(40.0..85.0) * 365.25f64).round() as i64;
    let sex = if rng.random::<bool>() { Sex::M } else { Sex::F };
    let race = RACES[rng.random_range(0..RACES.len())];
    let ethnicity = ETHNICITIES[rng.random_range(0..ETHNICITIES.len())];
    let x: Vec<f64> = cfg.covariates.iter().map(|c| f64::from(u8::from(rng.random::<f64>() < c.prevalence))).collect();
    let risk = cfg.covariates.iter().zip(&x).map(|(c, xi)| c.log_hr * xi).sum::<f64>().exp();

    // Latent chain.
    let initial = categorical(&mut rng, &cfg.initial);
    let censor_day = {
        let t = if cfg.censor_rate > 0.0 { 1.0 + exp_draw(&mut rng, cfg.censor_rate) } else { f64::INFINITY };
        t.min(cfg.max_follow_up_days).floor() as i64
    };
    let mut jumps = Vec::new();
    let (mut state, mut t) = (initial, 0.0);
    while state < k {
        let rates: Vec<f64> = (0..k + 2)
            .map(|j| match j {
                _ if j == state => 0.0,
                _ if j == k => cfg.q[state][j] * risk,
                _ => cfg.q[state][j],
            })
            .collect();
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        t += exp_draw(&mut rng, total);
        if t > censor_day as f64 {
            break;
        }
        state = categorical(&mut rng, &rates);
        jumps.push((t, state));
    }
    let absorbed = state >= k;
    let end_day = if absorbed { jumps.last().expect("absorbing jump").0.ceil() as i64 } else { censor_day };
    let path = LatentPath {
        person_id: pid.clone(),
        initial,
        jumps,
        censor_day: (!absorbed).then_some(censor_day),
        x,
    };

    let date = |d: i64| t0 + Duration::days(d);
    let mut events = Vec::new();
    let mut measurements = Vec::new();
    let event = |d: i64, domain: Domain, concept: &str| Event {
        person_id: pid.clone(),
        date: date(d),
        domain,
        concept_id: concept.to_string(),
    };
    let measure = |at: NaiveDateTime, concept: &str, value: f64, unit: &str| Measurement {
        person_id: pid.clone(),
        datetime: at,
        concept_id: concept.to_string(),
        value,
        unit: unit.to_string(),
    };

    // Admission: history, baseline creatinine, the 48h rise, the AKI code.
    let baseline = rng.random_range(0.6..1.1);
    for (c, &xi) in cfg.covariates.iter().zip(&path.x) {
        if xi > 0.0 {
            events.push(event(-400, Domain::Condition, &comorbidity_concept(&c.name)));
        }
    }
    for (d, f) in [(-100, 0.97), (-50, 1.03)] {
        measurements.push(measure(at_hour(date(d), 9), CR_CONCEPT, baseline * f, "mg/dL"));
    }
    measurements.push(measure(at_hour(t0, 2), CR_CONCEPT, 1.6 * baseline, "mg/dL"));
    measurements.push(measure(at_hour(t0, 6), CR_CONCEPT, 2.0 * baseline, "mg/dL"));
    events.push(event(0, Domain::Condition, AKI_CONCEPT));
    if rng.random::<f64>() < 0.2 {
        events.push(event(0, Domain::Condition, SEPSIS_CONCEPT));
    }
    for (_, concept, lo, hi) in PANEL {
        if rng.random::<f64>() < 0.85 {
            measurements.push(measure(at_hour(t0, 4), concept, rng.random_range(lo..hi), ""));
        }
    }

    // Follow-up records: every day the latent state is transient may carry
    // codes; admission, transition and final days always do.
    let stamped: BTreeSet<i64> = path.jumps.iter().map(|j| j.0.ceil() as i64).collect();
    let mut entered = 0i64;
    let mut current = initial;
    let mut next_jump = 0;
    let last_transient_day = if absorbed { end_day - 1 } else { end_day };
    for d in 0..=last_transient_day {
        while next_jump < path.jumps.len() && path.jumps[next_jump].0 <= d as f64 {
            current = path.jumps[next_jump].1;
            entered = d;
            next_jump += 1;
        }
        debug_assert!(current < k);
        let e = &cfg.emission[current];
        // the last transient day is an encounter too, ahead of CKD or death
        let forced = d == 0 || stamped.contains(&d) || d == last_transient_day;
        if !(forced || rng.random::<f64>() < e.daily_rate) {
            continue;
        }
        let before = events.len();
        for code in &e.pool {
            if rng.random::<f64>() < e.code_prob {
                events.push(event(d, Domain::Condition, code));
            }
        }
        if events.len() == before {
            let code = &e.pool[rng.random_range(0..e.pool.len())];
            events.push(event(d, Domain::Condition, code));
        }
        if d >= 2 && rng.random::<f64>() < cfg.cr_prob {
            let z: f64 = StandardNormal.sample(&mut rng);
            let years = (d - entered) as f64 / 365.25;
            let v = (e.cr_mean + e.cr_drift * years + e.cr_sd * z).max(0.2);
            measurements.push(measure(at_hour(date(d), 8), CR_CONCEPT, v, "mg/dL"));
        }
    }
    let mut death_date = None;
    match path.jumps.last() {
        Some(&(_, s)) if absorbed && s == k => events.push(event(end_day, Domain::Condition, CKD_CONCEPT)),
        Some(_) if absorbed => death_date = Some(date(end_day)),
        _ => events.push(event(end_day, Domain::Observation, FOLLOW_UP_CONCEPT)),
    }

    PatientRecords {
        person: Person {
            person_id: pid.clone(),
            birth_date: t0 - Duration::days(age_days),
            sex,
            race: race.into(),
            ethnicity: ethnicity.into(),
            death_date,
        },
        visit: Visit {
            visit_id: format!("V{:06}", index + 1),
            person_id: pid,
            start_date: t0,
            end_date: t0,
        },
        events,
        measurements,
        path,
    }
}

/// Simulates `cfg.n_patients` patients; identical for identical `(cfg, seed)`.
pub fn generate_cohort(cfg: &SynthConfig, seed: u64) -> Result<SynthCohort> {
    cfg.validate()?;
    let records: Vec<PatientRecords> = (0..cfg.n_patients).into_par_iter().map(|i| simulate_patient(cfg, seed, i)).collect();
    let mut persons = Vec::with_capacity(records.len());
    let mut visits = Vec::with_capacity(records.len());
    let mut events = Vec::new();
    let mut measurements = Vec::new();
    let mut paths = Vec::with_capacity(records.len());
    for r in records {
        persons.push(r.person);
        visits.push(r.visit);
        events.extend(r.events);
        measurements.extend(r.measurements);
        paths.push(r.path);
    }
    let log = EventLog::new(persons, visits, events, measurements)?;
    let beta = cfg.covariates.iter().map(|c| (c.name.clone(), c.log_hr)).collect();
    Ok(SynthCohort {
        log,
        concepts: cfg.concept_config(),
        truth: GroundTruth { seed, k: cfg.k, q: cfg.q_matrix(), beta, paths },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{build_cohort, CohortConfig, Outcome};

    fn small(n: usize) -> SynthConfig {
        let mut cfg = SynthConfig::progressive(3, n);
        cfg.max_follow_up_days = 400.0;
        cfg
    }

    #[test]
    fn same_seed_same_log() {
        let a = generate_cohort(&small(40), 7).unwrap();
        let b = generate_cohort(&small(40), 7).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.truth, b.truth);
        let c = generate_cohort(&small(40), 8).unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn zero_intensities_censor_everyone_in_the_initial_state() {
        let mut cfg = small(30);
        cfg.q.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        let cohort = generate_cohort(&cfg, 3).unwrap();
        for p in &cohort.truth.paths {
            assert!(p.jumps.is_empty());
            assert!(p.censor_day.is_some());
        }
        let (sets, _) = cohort.concepts.clone().into_stores(None).unwrap();
        let built = build_cohort(&cohort.log, &sets, &CohortConfig::default());
        assert_eq!(built.patients.len(), 30);
        assert!(built.patients.iter().all(|p| p.window.outcome == Outcome::Censored));
    }

    #[test]
    fn invalid_q_is_a_config_error() {
        let mut cfg = small(5);
        cfg.q[0][1] = -1e-3;
        assert!(matches!(generate_cohort(&cfg, 1), Err(Error::Config(_))));
        let mut cfg = small(5);
        cfg.q[3][0] = 1e-3;
        cfg.q[3][3] = -1e-3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small(5);
        cfg.q[1][1] += 1e-3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn every_patient_is_eligible_and_windows_match_truth() {
        let cohort = generate_cohort(&small(200), 11).unwrap();
        let (sets, _) = cohort.concepts.clone().into_stores(None).unwrap();
        let built = build_cohort(&cohort.log, &sets, &CohortConfig::default());
        assert_eq!(built.patients.len(), 200);
        for (p, truth) in built.patients.iter().zip(&cohort.truth.paths) {
            assert_eq!(p.person_id, truth.person_id);
            let len = p.window.length_days();
            match truth.censor_day {
                Some(c) => {
                    assert_eq!(p.window.outcome, Outcome::Censored);
                    assert_eq!(len, c);
                }
                None => {
                    let (t, s) = *truth.jumps.last().unwrap();
                    assert_eq!(len, t.ceil() as i64);
                    let want = if s == 3 { Outcome::Ckd } else { Outcome::Death };
                    assert_eq!(p.window.outcome, want);
                }
            }
        }
    }

    #[test]
    fn record_days_carry_the_latent_state() {
        let cfg = small(100);
        let cohort = generate_cohort(&cfg, 5).unwrap();
        let owner: BTreeMap<&str, usize> = cfg
            .emission
            .iter()
            .enumerate()
            .flat_map(|(s, e)| e.pool.iter().map(move |c| (c.as_str(), s)))
            .collect();
        let t0: BTreeMap<&str, NaiveDate> =
            cohort.log.visits().iter().map(|v| (v.person_id.as_str(), v.start_date)).collect();
        let paths: BTreeMap<&str, &LatentPath> = cohort.truth.paths.iter().map(|p| (p.person_id.as_str(), p)).collect();
        let mut checked = 0;
        for e in cohort.log.events() {
            if let Some(&s) = owner.get(e.concept_id.as_str()) {
                let d = (e.date - t0[e.person_id.as_str()]).num_days();
                assert_eq!(paths[e.person_id.as_str()].state_at(d as f64), Some(s));
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn pools_use_distinct_buckets() {
        let pools = distinct_pools(15, 3);
        let h = HashedCodeEmbedder::default();
        let buckets: BTreeSet<usize> = pools.iter().flatten().map(|c| h.bucket(c)).collect();
        assert_eq!(buckets.len(), 45);
    }

    #[test]
    fn written_cohort_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = generate_cohort(&small(20), 2).unwrap();
        cohort.write(dir.path()).unwrap();
        let log = crate::ingest::load_event_log(&EventLogPaths::in_dir(dir.path())).unwrap();
        assert_eq!(log, cohort.log);
        let (sets, _) = crate::ingest::load_concept_sets(&dir.path().join("concepts.toml")).unwrap();
        assert!(sets.aki.contains(AKI_CONCEPT));
        let truth: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
        assert_eq!(truth["seed"], 2);
        assert_eq!(truth["q"].as_array().unwrap().len(), 5);
    }
}
