//! Time-indexed cumulative patient vectors.
//!
//! Each recorded day of the observation window yields one vector: a code
//! block summarizing every concept seen so far, followed by a creatinine
//! series block.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{age_years, csv_io, CohortPatient, ObservationWindow, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::ingest::{ConceptSets, EventLog, Person};

pub const DEFAULT_D1: usize = 64;
pub const SERIES_DIM: usize = 10;
pub const SERIES_FEATURES: [&str; SERIES_DIM] = [
    "cr_last",
    "cr_min",
    "cr_max",
    "cr_mean",
    "cr_slope_per_day",
    "cr_count",
    "days_since_cr",
    "cr_last_over_baseline",
    "age",
    "delta_t",
];

/// One calendar day of averaged creatinine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    /// mg/dL, mean of the day's values.
    pub value: f64,
    pub age: f64,
}

/// Creatinine in the window, averaged per date, ascending.
pub fn creatinine_series(
    person: &Person,
    window: &ObservationWindow,
    log: &EventLog,
    sets: &ConceptSets,
) -> Vec<SeriesPoint> {
    let concepts = sets.panel_concepts(crate::cohort::CREATININE);
    let mut by_day: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for m in log.measurements_of(&person.person_id) {
        let d = m.datetime.date();
        if concepts.contains(&m.concept_id) && window.contains(d) {
            let e = by_day.entry(d).or_insert((0.0, 0));
            e.0 += m.value;
            e.1 += 1;
        }
    }
    by_day
        .into_iter()
        .map(|(date, (sum, n))| SeriesPoint {
            date,
            value: sum / n as f64,
            age: age_years(person.birth_date, date),
        })
        .collect()
}

/// Everything an embedder may look at for one patient.
#[derive(Debug, Clone)]
pub struct PatientContext {
    pub person_id: String,
    pub t_start: NaiveDate,
    pub age_at_start: f64,
    pub baseline_cr: f64,
    /// `(day offset, concept)` for coded events in the window, sorted.
    pub codes: Vec<(i64, String)>,
    /// `(day offset, point)` ascending.
    pub series: Vec<(i64, SeriesPoint)>,
    /// Distinct days with at least one record.
    pub record_days: Vec<i64>,
}

impl PatientContext {
    pub fn build(log: &EventLog, patient: &CohortPatient, sets: &ConceptSets) -> Result<Self> {
        let person = log
            .person(&patient.person_id)
            .ok_or_else(|| Error::Contract(format!("unknown person {}", patient.person_id)))?;
        let w = &patient.window;
        let offset = |d: NaiveDate| (d - w.t_start).num_days();
        let mut codes: Vec<(i64, String)> = log
            .events_of(&person.person_id)
            .filter(|e| w.contains(e.date))
            .map(|e| (offset(e.date), e.concept_id.clone()))
            .collect();
        codes.sort();
        // measurement days are recorded days too, though only events are coded
        let measured = log
            .measurements_of(&person.person_id)
            .filter(|m| w.contains(m.datetime.date()))
            .map(|m| offset(m.datetime.date()));
        let record_days: Vec<i64> = codes.iter().map(|c| c.0).chain(measured).collect::<BTreeSet<_>>().into_iter().collect();
        let series = creatinine_series(person, w, log, sets)
            .into_iter()
            .map(|p| (offset(p.date), p))
            .collect();
        Ok(Self {
            person_id: person.person_id.clone(),
            t_start: w.t_start,
            age_at_start: age_years(person.birth_date, w.t_start),
            baseline_cr: patient.baseline.value,
            codes,
            series,
            record_days,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    CodeSequence,
    Series,
}

impl fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedderKind::CodeSequence => "code_sequence",
            EmbedderKind::Series => "series",
        })
    }
}

/// Maps a patient prefix `[t_start, t_start + Δt]` to a fixed-length vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn kind(&self) -> EmbedderKind;
    fn id(&self) -> String;

    /// One vector per entry of `days`, which is ascending.
    fn embed_days(&self, ctx: &PatientContext, days: &[i64]) -> Result<Vec<Vec<f64>>>;

    /// Whether outputs should be z-scaled with cohort statistics.
    fn wants_standardization(&self) -> bool {
        false
    }
}

/// 64-bit FNV-1a with a fixed non-default basis.
fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashed cumulative concept counts, L2-normalized.
///
/// With a half-life, older codes are down-weighted by `0.5^(age / h)` so the
/// vector tracks recent history rather than the whole prefix.
#[derive(Debug, Clone)]
pub struct HashedCodeEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub half_life_days: Option<f64>,
}

impl Default for HashedCodeEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_D1,
            seed: 0x7472_616a,
            half_life_days: None,
        }
    }
}

impl HashedCodeEmbedder {
    pub fn bucket(&self, concept: &str) -> usize {
        (fnv1a(concept.as_bytes(), self.seed) % self.dim as u64) as usize
    }

    /// Unnormalized counts per day.
    pub fn raw_counts(&self, ctx: &PatientContext, days: &[i64]) -> Vec<Vec<f64>> {
        let mut counts = vec![0.0; self.dim];
        let mut out = Vec::with_capacity(days.len());
        let mut next = 0;
        let mut last = None;
        for &day in days {
            while next < ctx.codes.len() && ctx.codes[next].0 <= day {
                let (d, code) = &ctx.codes[next];
                if let (Some(h), Some(prev)) = (self.half_life_days, last) {
                    if *d > prev {
                        let f = 0.5f64.powf((*d - prev) as f64 / h);
                        counts.iter_mut().for_each(|c| *c *= f);
                    }
                }
                last = Some(*d);
                counts[self.bucket(code)] += 1.0;
                next += 1;
            }
            if let (Some(h), Some(prev)) = (self.half_life_days, last) {
                if day > prev {
                    let f = 0.5f64.powf((day - prev) as f64 / h);
                    counts.iter_mut().for_each(|c| *c *= f);
                    last = Some(day);
                }
            }
            out.push(counts.clone());
        }
        out
    }
}

impl Embedder for HashedCodeEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbedderKind {
        EmbedderKind::CodeSequence
    }

    fn id(&self) -> String {
        match self.half_life_days {
            None => format!("hashed_counts(d={},seed={})", self.dim, self.seed),
            Some(h) => format!("hashed_counts(d={},seed={},half_life={h})", self.dim, self.seed),
        }
    }

    fn embed_days(&self, ctx: &PatientContext, days: &[i64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .raw_counts(ctx, days)
            .into_iter()
            .map(|mut v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect())
    }
}

/// Summary statistics of the creatinine prefix; see [`SERIES_FEATURES`].
#[derive(Debug, Clone, Default)]
pub struct SeriesEmbedder;

impl SeriesEmbedder {
    pub fn features(ctx: &PatientContext, day: i64, upto: &[(i64, SeriesPoint)]) -> [f64; SERIES_DIM] {
        let age = ctx.age_at_start + day as f64 / DAYS_PER_YEAR;
        let Some(last) = upto.last() else {
            let b = ctx.baseline_cr;
            return [b, b, b, b, 0.0, 0.0, day as f64, 1.0, age, day as f64];
        };
        let n = upto.len() as f64;
        let vals = upto.iter().map(|p| p.1.value);
        let min = vals.clone().fold(f64::INFINITY, f64::min);
        let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.sum::<f64>() / n;
        let tbar = upto.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, p) in upto {
            let dt = *t as f64 - tbar;
            sxy += dt * (p.value - mean);
            sxx += dt * dt;
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        [
            last.1.value,
            min,
            max,
            mean,
            slope,
            n,
            (day - last.0) as f64,
            last.1.value / ctx.baseline_cr,
            age,
            day as f64,
        ]
    }
}

impl Embedder for SeriesEmbedder {
    fn dimension(&self) -> usize {
        SERIES_DIM
    }

    fn kind(&self) -> EmbedderKind {
        EmbedderKind::Series
    }

    fn id(&self) -> String {
        "creatinine_summary(d=10)".to_string()
    }

    fn embed_days(&self, ctx: &PatientContext, days: &[i64]) -> Result<Vec<Vec<f64>>> {
        Ok(days
            .iter()
            .map(|&day| {
                let k = ctx.series.partition_point(|p| p.0 <= day);
                Self::features(ctx, day, &ctx.series[..k]).to_vec()
            })
            .collect())
    }

    fn wants_standardization(&self) -> bool {
        true
    }
}

/// Lists `(person, Δt)` pairs absent from an external embedding file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub requested: usize,
    pub missing: Vec<(String, i64)>,
}

impl CoverageReport {
    pub fn coverage(&self) -> f64 {
        if self.requested == 0 {
            1.0
        } else {
            1.0 - self.missing.len() as f64 / self.requested as f64
        }
    }
}

/// Lookup-backed embedder read from `person_id,delta_t,v0..` rows.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    kind: EmbedderKind,
    dim: usize,
    source: String,
    table: BTreeMap<(String, i64), Vec<f64>>,
    allow_fallback: bool,
}

impl ExternalEmbedder {
    pub fn load(path: &Path, dim: usize, kind: EmbedderKind, allow_fallback: bool) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let table_name = path.display().to_string();
        let mut table = BTreeMap::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| csv_io(path, e))?;
            if rec.len() < 2 {
                return Err(Error::schema(&table_name, row, "expected person_id, delta_t, vector"));
            }
            let got = rec.len() - 2;
            if got != dim {
                return Err(Error::Contract(format!(
                    "{table_name}: row {row}: embedding length {got} differs from declared {dim}"
                )));
            }
            let dt: i64 = rec[1]
                .trim()
                .parse()
                .map_err(|e| Error::parse(&table_name, row, "delta_t", e))?;
            let v = (2..rec.len())
                .map(|j| {
                    rec[j]
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(&table_name, row, &format!("v{}", j - 2), e))
                })
                .collect::<Result<Vec<f64>>>()?;
            if table.insert((rec[0].to_string(), dt), v).is_some() {
                return Err(Error::Conflict(format!(
                    "{table_name}: duplicate embedding for ({}, {dt})",
                    &rec[0]
                )));
            }
        }
        Ok(Self {
            kind,
            dim,
            source: table_name,
            table,
            allow_fallback,
        })
    }

    pub fn coverage<'a>(&self, keys: impl IntoIterator<Item = (&'a str, i64)>) -> CoverageReport {
        let mut rep = CoverageReport::default();
        for (p, d) in keys {
            rep.requested += 1;
            if !self.table.contains_key(&(p.to_string(), d)) {
                rep.missing.push((p.to_string(), d));
            }
        }
        rep
    }
}

impl Embedder for ExternalEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbedderKind {
        self.kind
    }

    fn id(&self) -> String {
        format!("external({})", self.source)
    }

    fn embed_days(&self, ctx: &PatientContext, days: &[i64]) -> Result<Vec<Vec<f64>>> {
        days.iter()
            .map(|&d| match self.table.get(&(ctx.person_id.clone(), d)) {
                Some(v) => Ok(v.clone()),
                None if self.allow_fallback => Ok(vec![0.0; self.dim]),
                None => Err(Error::Contract(format!(
                    "no external embedding for ({}, {d}); pass --allow-fallback to use zeros",
                    ctx.person_id
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientFrame {
    pub person_id: String,
    pub delta_t: Vec<i64>,
    pub vectors: Vec<Vec<f64>>,
}

/// All patients' vectors, `d1 + d2` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub d1: usize,
    pub d2: usize,
    pub patients: Vec<PatientFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub d1: usize,
    pub d2: usize,
    pub code_embedder: String,
    pub series_embedder: String,
    pub code_scale: f64,
    pub series_scale: f64,
    pub seed: u64,
    pub vectors: usize,
    pub patients: usize,
}

impl TrajectoryFrame {
    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn n_vectors(&self) -> usize {
        self.patients.iter().map(|p| p.vectors.len()).sum()
    }

    /// Row-major copy of every vector, patient by patient.
    pub fn flat_points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_vectors() * self.dim());
        for p in &self.patients {
            for v in &p.vectors {
                out.extend_from_slice(v);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = vec!["person_id".to_string(), "delta_t".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for p in &self.patients {
            for (dt, v) in p.delta_t.iter().zip(&p.vectors) {
                let mut rec = vec![p.person_id.clone(), dt.to_string()];
                rec.extend(v.iter().map(f64::to_string));
                w.write_record(&rec).map_err(|e| csv_io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, d1: usize, d2: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let name = path.display().to_string();
        let mut patients: Vec<PatientFrame> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_io(path, e))?;
            if rec.len() != d1 + d2 + 2 {
                return Err(Error::schema(&name, i + 1, "vector width differs from manifest"));
            }
            let dt: i64 = rec[1].parse().map_err(|e| Error::parse(&name, i + 1, "delta_t", e))?;
            let v = (2..rec.len())
                .map(|j| rec[j].parse::<f64>().map_err(|e| Error::parse(&name, i + 1, "vector", e)))
                .collect::<Result<Vec<_>>>()?;
            match patients.last_mut() {
                Some(p) if p.person_id == rec[0] => {
                    p.delta_t.push(dt);
                    p.vectors.push(v);
                }
                _ => patients.push(PatientFrame {
                    person_id: rec[0].to_string(),
                    delta_t: vec![dt],
                    vectors: vec![v],
                }),
            }
        }
        Ok(Self { d1, d2, patients })
    }
}

#[derive(Clone)]
pub struct FrameOptions<'a> {
    pub code: &'a dyn Embedder,
    pub series: &'a dyn Embedder,
    pub d1: usize,
    pub d2: usize,
    pub code_scale: f64,
    pub series_scale: f64,
}

/// Vector for each recorded day: `code(Δt) ∥ series(Δt)`.
pub fn featurize_patient(ctx: &PatientContext, opts: &FrameOptions<'_>) -> Result<PatientFrame> {
    for (e, want) in [(opts.code, opts.d1), (opts.series, opts.d2)] {
        if e.dimension() != want {
            return Err(Error::Contract(format!(
                "{} embedder has dimension {}, declared {want}",
                e.kind(),
                e.dimension()
            )));
        }
    }
    let days = &ctx.record_days;
    let a = opts.code.embed_days(ctx, days)?;
    let b = opts.series.embed_days(ctx, days)?;
    let vectors = a
        .into_iter()
        .zip(b)
        .map(|(mut x, y)| {
            if x.len() != opts.d1 || y.len() != opts.d2 {
                return Err(Error::Contract("embedder returned a vector of the wrong length".into()));
            }
            x.extend(y);
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatientFrame {
        person_id: ctx.person_id.clone(),
        delta_t: days.clone(),
        vectors,
    })
}

/// Column means and standard deviations over a block of every vector.
fn block_moments(frame: &TrajectoryFrame, lo: usize, hi: usize) -> Vec<(f64, f64)> {
    let n = frame.n_vectors().max(1) as f64;
    let mut mean = vec![0.0; hi - lo];
    for v in frame.patients.iter().flat_map(|p| &p.vectors) {
        for j in lo..hi {
            mean[j - lo] += v[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; hi - lo];
    for v in frame.patients.iter().flat_map(|p| &p.vectors) {
        for j in lo..hi {
            var[j - lo] += (v[j] - mean[j - lo]).powi(2);
        }
    }
    mean.into_iter()
        .zip(var)
        .map(|(m, s)| {
            let sd = (s / n).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Featurizes the cohort in parallel, standardizes blocks that ask for it,
/// and applies the per-block scale factors.
pub fn build_frame(
    log: &EventLog,
    cohort: &[CohortPatient],
    sets: &ConceptSets,
    opts: &FrameOptions<'_>,
) -> Result<TrajectoryFrame> {
    let patients = cohort
        .par_iter()
        .map(|p| PatientContext::build(log, p, sets).and_then(|ctx| featurize_patient(&ctx, opts)))
        .collect::<Result<Vec<_>>>()?;
    let mut frame = TrajectoryFrame {
        d1: opts.d1,
        d2: opts.d2,
        patients,
    };
    let blocks = [
        (0, opts.d1, opts.code.wants_standardization(), opts.code_scale),
        (opts.d1, opts.d1 + opts.d2, opts.series.wants_standardization(), opts.series_scale),
    ];
    for (lo, hi, standardize, scale) in blocks {
        let moments = if standardize { Some(block_moments(&frame, lo, hi)) } else { None };
        if moments.is_none() && scale == 1.0 {
            continue;
        }
        for v in frame.patients.iter_mut().flat_map(|p| p.vectors.iter_mut()) {
            for j in lo..hi {
                if let Some(m) = &moments {
                    v[j] = (v[j] - m[j - lo].0) / m[j - lo].1;
                }
                v[j] *= scale;
            }
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(codes: &[(i64, &str)], series: &[(i64, f64)]) -> PatientContext {
        let t_start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let mut codes: Vec<(i64, String)> = codes.iter().map(|&(d, c)| (d, c.to_string())).collect();
        codes.sort();
        let record_days = codes.iter().map(|c| c.0).collect::<BTreeSet<_>>().into_iter().collect();
        PatientContext {
            person_id: "p1".into(),
            t_start,
            age_at_start: 60.0,
            baseline_cr: 1.0,
            codes,
            series: series
                .iter()
                .map(|&(d, v)| {
                    (d, SeriesPoint { date: t_start + chrono::Duration::days(d), value: v, age: 60.0 })
                })
                .collect(),
            record_days,
        }
    }

    #[test]
    fn vectors_per_recorded_day() {
        let c = ctx(&[(0, "a"), (3, "b"), (3, "a"), (7, "c")], &[(0, 2.0), (7, 1.5)]);
        let (code, series) = (HashedCodeEmbedder::default(), SeriesEmbedder);
        let opts = FrameOptions { code: &code, series: &series, d1: 64, d2: 10, code_scale: 1.0, series_scale: 1.0 };
        let f = featurize_patient(&c, &opts).unwrap();
        assert_eq!(f.delta_t, vec![0, 3, 7]);
        assert!(f.vectors.iter().all(|v| v.len() == 74));
    }

    #[test]
    fn prefix_counts_nest() {
        let c = ctx(&[(0, "a"), (3, "b"), (3, "a"), (7, "c"), (7, "d")], &[]);
        let e = HashedCodeEmbedder::default();
        let raw = e.raw_counts(&c, &[0, 3, 7]);
        for w in raw.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
        }
        assert_eq!(raw[2].iter().sum::<f64>(), 5.0);
        let v = e.embed_days(&c, &[7]).unwrap();
        assert!((v[0].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_life_discounts_old_codes() {
        let c = ctx(&[(0, "a"), (10, "b")], &[]);
        let e = HashedCodeEmbedder { half_life_days: Some(10.0), ..Default::default() };
        let raw = e.raw_counts(&c, &[0, 10, 20]);
        let (a, b) = (e.bucket("a"), e.bucket("b"));
        assert_ne!(a, b);
        assert_eq!(raw[0][a], 1.0);
        assert!((raw[1][a] - 0.5).abs() < 1e-15 && raw[1][b] == 1.0);
        assert!((raw[2][a] - 0.25).abs() < 1e-15 && (raw[2][b] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn series_summary_values() {
        let c = ctx(&[(0, "a"), (2, "a"), (4, "a")], &[(0, 2.0), (2, 3.0), (4, 1.0)]);
        let f = SeriesEmbedder.embed_days(&c, &[0, 4]).unwrap();
        assert_eq!(&f[0][..4], &[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(f[1][0], 1.0);
        assert_eq!(f[1][5], 3.0);
        assert!((f[1][4] - (-0.25)).abs() < 1e-12);
        assert_eq!(f[1][7], 1.0);
        let empty = ctx(&[(5, "a")], &[]);
        let g = SeriesEmbedder.embed_days(&empty, &[5]).unwrap();
        assert_eq!(g[0][0], 1.0);
        assert_eq!(g[0][6], 5.0);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let c = ctx(&[(0, "a")], &[]);
        let (code, series) = (HashedCodeEmbedder { dim: 32, seed: 1, half_life_days: None }, SeriesEmbedder);
        let opts = FrameOptions { code: &code, series: &series, d1: 64, d2: 10, code_scale: 1.0, series_scale: 1.0 };
        assert!(matches!(featurize_patient(&c, &opts), Err(Error::Contract(_))));
    }

    #[test]
    fn external_embeddings_load_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        std::fs::write(&path, "person_id,delta_t,v0,v1\np1,0,0.5,1.0\np1,3,0.1,0.2\n").unwrap();
        let e = ExternalEmbedder::load(&path, 2, EmbedderKind::Series, false).unwrap();
        let rep = e.coverage([("p1", 0), ("p1", 3), ("p1", 7)]);
        assert_eq!(rep.missing, vec![("p1".to_string(), 7)]);
        let c = ctx(&[(0, "a"), (3, "b"), (7, "c")], &[]);
        assert!(e.embed_days(&c, &c.record_days).is_err());
        let lenient = ExternalEmbedder::load(&path, 2, EmbedderKind::Series, true).unwrap();
        assert_eq!(lenient.embed_days(&c, &c.record_days).unwrap()[2], vec![0.0, 0.0]);

        assert!(matches!(ExternalEmbedder::load(&path, 3, EmbedderKind::Series, false), Err(Error::Contract(_))));
        std::fs::write(&path, "person_id,delta_t,v0\np1,0,0.5\np1,0,0.7\n").unwrap();
        assert!(matches!(ExternalEmbedder::load(&path, 1, EmbedderKind::Series, false), Err(Error::Conflict(_))));
    }

    #[test]
    fn frame_csv_round_trip() {
        let frame = TrajectoryFrame {
            d1: 2,
            d2: 1,
            patients: vec![
                PatientFrame { person_id: "a".into(), delta_t: vec![0, 2], vectors: vec![vec![0.1, 0.2, 1.0 / 3.0], vec![1.0, 0.0, -2.5]] },
                PatientFrame { person_id: "b".into(), delta_t: vec![0], vectors: vec![vec![0.0, 1.0, 0.0]] },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        frame.write_csv(&path).unwrap();
        assert_eq!(TrajectoryFrame::read_csv(&path, 2, 1).unwrap(), frame);
    }
}
