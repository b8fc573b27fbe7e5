use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::Duration;
use rayon::prelude::*;

use crate::cohort::{age_years, csv_io, CohortPatient};
use crate::error::{Error, Result};
use crate::features::TrajectoryFrame;
use crate::ingest::{ConceptSets, Domain, EventLog, Ontology};
use crate::linalg::{svd, Matrix};
use crate::msm::{quantile_sorted, StateSequence};

use super::kmeans::{nearest, Clustering};

/// Maps every vector to its nearest centroid and attaches the window outcome.
pub fn assign_states(
    frame: &TrajectoryFrame,
    clustering: &Clustering<f64>,
    cohort: &[CohortPatient],
) -> Result<Vec<StateSequence<f64>>> {
    if clustering.centroids.cols() != frame.dim() {
        return Err(Error::Contract(format!(
            "centroids have {} columns, frame vectors {}",
            clustering.centroids.cols(),
            frame.dim()
        )));
    }
    let windows: BTreeMap<&str, &CohortPatient> = cohort.iter().map(|p| (p.person_id.as_str(), p)).collect();
    frame
        .patients
        .iter()
        .map(|p| {
            let cp = windows
                .get(p.person_id.as_str())
                .ok_or_else(|| Error::Contract(format!("{} is not in the cohort", p.person_id)))?;
            let points = p
                .delta_t
                .iter()
                .zip(&p.vectors)
                .map(|(&dt, v)| (dt as f64, nearest(v, &clustering.centroids).0))
                .collect();
            Ok(StateSequence {
                person_id: p.person_id.clone(),
                points,
                t_end: cp.window.length_days() as f64,
                outcome: cp.window.outcome,
            })
        })
        .collect()
}

pub fn write_states_csv(sequences: &[StateSequence<f64>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["person_id", "delta_t", "state"]).map_err(|e| csv_io(path, e))?;
    for s in sequences {
        for (dt, st) in &s.points {
            w.write_record([s.person_id.clone(), dt.to_string(), format!("S{st}")])
                .map_err(|e| csv_io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `states.csv`, attaching windows from the cohort. Sequences keep the
/// file's person order; rows of one person must be contiguous.
pub fn read_states_csv(path: &Path, cohort: &[CohortPatient]) -> Result<Vec<StateSequence<f64>>> {
    let windows: BTreeMap<&str, &CohortPatient> = cohort.iter().map(|p| (p.person_id.as_str(), p)).collect();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let table = path.display().to_string();
    let mut out: Vec<StateSequence<f64>> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let row = i + 1;
        if rec.len() != 3 {
            return Err(Error::schema(&table, row, "expected person_id,delta_t,state"));
        }
        let id = &rec[0];
        let dt: f64 = rec[1].trim().parse().map_err(|_| Error::parse(&table, row, "delta_t", "not a number"))?;
        let state: usize = rec[2]
            .trim()
            .strip_prefix('S')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&table, row, "state", "expected S<index>"))?;
        if out.last().is_none_or(|s| s.person_id != id) {
            let cp = windows
                .get(id)
                .ok_or_else(|| Error::Contract(format!("{id} in {table} is not in the cohort")))?;
            if !seen.insert(id.to_string()) {
                return Err(Error::schema(&table, row, "rows of one person are not contiguous"));
            }
            out.push(StateSequence {
                person_id: id.to_string(),
                points: Vec::new(),
                t_end: cp.window.length_days() as f64,
                outcome: cp.window.outcome,
            });
        }
        out.last_mut().expect("pushed above").points.push((dt, state));
    }
    Ok(out)
}

/// Prevalence band: 1 below 50%, 2 to 74%, 3 to 89%, 4 to 94%, 5 from 95%.
pub fn prevalence_band(p: f64) -> u8 {
    match p {
        p if p < 0.50 => 1,
        p if p < 0.75 => 2,
        p if p < 0.90 => 3,
        p if p < 0.95 => 4,
        _ => 5,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateProfile {
    pub vectors: usize,
    pub patients: usize,
    /// Quartiles of age at interval end dates.
    pub age_quartiles: [f64; 3],
    pub sex: BTreeMap<String, usize>,
    pub race: BTreeMap<String, usize>,
    pub ethnicity: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceTable {
    pub k: usize,
    /// Retained conditions, sorted.
    pub conditions: Vec<String>,
    /// `[state][condition]`
    pub prevalence: Vec<Vec<f64>>,
    pub groups: Vec<String>,
    /// `[state][group]`
    pub group_prevalence: Vec<Vec<f64>>,
    pub bands: Vec<Vec<u8>>,
    pub profiles: Vec<StateProfile>,
}

#[derive(Default)]
struct Tally {
    vectors: Vec<usize>,
    condition_hits: Vec<BTreeMap<String, usize>>,
    group_hits: Vec<Vec<usize>>,
    ages: Vec<Vec<f64>>,
    patients: Vec<BTreeSet<String>>,
}

impl Tally {
    fn new(k: usize, groups: usize) -> Self {
        Self {
            vectors: vec![0; k],
            condition_hits: vec![BTreeMap::new(); k],
            group_hits: vec![vec![0; groups]; k],
            ages: vec![Vec::new(); k],
            patients: vec![BTreeSet::new(); k],
        }
    }

    fn merge(mut self, other: Tally) -> Self {
        for s in 0..self.vectors.len() {
            self.vectors[s] += other.vectors[s];
            for (c, n) in &other.condition_hits[s] {
                *self.condition_hits[s].entry(c.clone()).or_default() += n;
            }
            for (a, b) in self.group_hits[s].iter_mut().zip(&other.group_hits[s]) {
                *a += b;
            }
            self.ages[s].extend(&other.ages[s]);
            self.patients[s].extend(other.patients[s].iter().cloned());
        }
        self
    }
}

/// Condition prevalence per state with ancestor expansion, disease-group
/// bands and demographic summaries.
pub fn characterize_states(
    sequences: &[StateSequence<f64>],
    k: usize,
    log: &EventLog,
    cohort: &[CohortPatient],
    ontology: &Ontology,
    sets: &ConceptSets,
    threshold: f64,
) -> Result<PrevalenceTable> {
    let starts: BTreeMap<&str, &CohortPatient> = cohort.iter().map(|p| (p.person_id.as_str(), p)).collect();
    let groups: Vec<String> = sets.disease_groups.keys().cloned().collect();
    let tally = sequences
        .par_iter()
        .map(|seq| -> Result<Tally> {
            let mut t = Tally::new(k, groups.len());
            let cp = starts
                .get(seq.person_id.as_str())
                .ok_or_else(|| Error::Contract(format!("{} is not in the cohort", seq.person_id)))?;
            let person = log
                .person(&seq.person_id)
                .ok_or_else(|| Error::Contract(format!("unknown person {}", seq.person_id)))?;
            let t0 = cp.window.t_start;
            let mut conds: Vec<(i64, &str)> = log
                .events_of(&seq.person_id)
                .filter(|e| e.domain == Domain::Condition && cp.window.contains(e.date))
                .map(|e| ((e.date - t0).num_days(), e.concept_id.as_str()))
                .collect();
            conds.sort();
            let mut present: BTreeSet<&str> = BTreeSet::new();
            let mut next = 0;
            for &(dt, state) in &seq.points {
                if state >= k {
                    return Err(Error::Contract(format!("state {state} outside 0..{k}")));
                }
                while next < conds.len() && conds[next].0 as f64 <= dt {
                    present.extend(ontology.expand(conds[next].1));
                    next += 1;
                }
                t.vectors[state] += 1;
                for c in &present {
                    *t.condition_hits[state].entry(c.to_string()).or_default() += 1;
                }
                for (g, name) in groups.iter().enumerate() {
                    if sets.disease_groups[name].iter().any(|c| present.contains(c.as_str())) {
                        t.group_hits[state][g] += 1;
                    }
                }
                let end = t0 + Duration::days(dt as i64);
                t.ages[state].push(age_years(person.birth_date, end));
                t.patients[state].insert(seq.person_id.clone());
            }
            Ok(t)
        })
        .try_reduce(|| Tally::new(k, groups.len()), |a, b| Ok(a.merge(b)))?;

    let frac = |hits: usize, s: usize| {
        if tally.vectors[s] == 0 {
            0.0
        } else {
            hits as f64 / tally.vectors[s] as f64
        }
    };
    let all_conditions: BTreeSet<&String> = tally.condition_hits.iter().flat_map(|m| m.keys()).collect();
    let conditions: Vec<String> = all_conditions
        .into_iter()
        .filter(|c| (0..k).any(|s| frac(tally.condition_hits[s].get(*c).copied().unwrap_or(0), s) > threshold))
        .cloned()
        .collect();
    let prevalence = (0..k)
        .map(|s| {
            conditions
                .iter()
                .map(|c| frac(tally.condition_hits[s].get(c).copied().unwrap_or(0), s))
                .collect()
        })
        .collect();
    let group_prevalence: Vec<Vec<f64>> = (0..k)
        .map(|s| tally.group_hits[s].iter().map(|&h| frac(h, s)).collect())
        .collect();
    let bands = group_prevalence
        .iter()
        .map(|row| row.iter().map(|&p| prevalence_band(p)).collect())
        .collect();
    let profiles = (0..k)
        .map(|s| {
            let mut ages = tally.ages[s].clone();
            ages.sort_by(f64::total_cmp);
            let q = |p: f64| if ages.is_empty() { f64::NAN } else { quantile_sorted(&ages, p) };
            let mut sex = BTreeMap::new();
            let mut race = BTreeMap::new();
            let mut ethnicity = BTreeMap::new();
            for pid in &tally.patients[s] {
                if let Some(p) = log.person(pid) {
                    *sex.entry(p.sex.to_string()).or_default() += 1;
                    *race.entry(p.race.clone()).or_default() += 1;
                    *ethnicity.entry(p.ethnicity.clone()).or_default() += 1;
                }
            }
            StateProfile {
                vectors: tally.vectors[s],
                patients: tally.patients[s].len(),
                age_quartiles: [q(0.25), q(0.5), q(0.75)],
                sex,
                race,
                ethnicity,
            }
        })
        .collect();
    Ok(PrevalenceTable {
        k,
        conditions,
        prevalence,
        groups,
        group_prevalence,
        bands,
        profiles,
    })
}

impl PrevalenceTable {
    pub fn write_prevalence_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["state", "concept_id", "prevalence"]).map_err(|e| csv_io(path, e))?;
        for s in 0..self.k {
            for (c, p) in self.conditions.iter().zip(&self.prevalence[s]) {
                w.write_record([format!("S{s}"), c.clone(), p.to_string()])
                    .map_err(|e| csv_io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_bands_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["state", "disease_group", "prevalence", "band"])
            .map_err(|e| csv_io(path, e))?;
        for s in 0..self.k {
            for (g, name) in self.groups.iter().enumerate() {
                w.write_record([
                    format!("S{s}"),
                    name.clone(),
                    self.group_prevalence[s][g].to_string(),
                    self.bands[s][g].to_string(),
                ])
                .map_err(|e| csv_io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Projection of the vectors onto their two leading principal axes.
/// Plotting aid only; axis signs are fixed so the largest loading is positive.
pub fn pca_2d(points: &Matrix<f64>) -> Matrix<f64> {
    let (n, d) = (points.rows(), points.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(points.row(i)) {
            *m += v / n as f64;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for i in 0..n {
        let r = points.row(i);
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    let dec = svd(&cov);
    let comps = d.min(2);
    let mut axes: Vec<Vec<f64>> = (0..comps).map(|c| dec.u.column(c)).collect();
    for ax in &mut axes {
        let lead = ax.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
        if lead < 0.0 {
            ax.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        for (c, ax) in axes.iter().enumerate() {
            out[(i, c)] = points.row(i).iter().zip(&mean).zip(ax).map(|((v, m), a)| (v - m) * a).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_thresholds() {
        assert_eq!(prevalence_band(0.96), 5);
        assert_eq!(prevalence_band(0.95), 5);
        assert_eq!(prevalence_band(0.94), 4);
        assert_eq!(prevalence_band(0.90), 4);
        assert_eq!(prevalence_band(0.89), 3);
        assert_eq!(prevalence_band(0.72), 2);
        assert_eq!(prevalence_band(0.50), 2);
        assert_eq!(prevalence_band(0.10), 1);
    }

    #[test]
    fn pca_recovers_dominant_axis() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.01 * ((i * 7) % 5) as f64]).collect();
        let p = pca_2d(&Matrix::from_rows(&rows).unwrap());
        assert!(p[(19, 0)] > p[(0, 0)]);
        assert!((p[(19, 0)] - p[(0, 0)] - 19.0).abs() < 1e-3);
    }

    #[test]
    fn states_csv_round_trip() {
        use crate::cohort::{build_cohort, CohortConfig};
        use crate::synth::{generate_cohort, SynthConfig};
        let c = generate_cohort(&SynthConfig::three_state(6), 1).unwrap();
        let (sets, _) = c.concepts.clone().into_stores(None).unwrap();
        let cohort = build_cohort(&c.log, &sets, &CohortConfig::default()).patients;
        let seqs: Vec<StateSequence<f64>> = cohort
            .iter()
            .enumerate()
            .map(|(i, p)| StateSequence {
                person_id: p.person_id.clone(),
                points: vec![(0.0, i % 3), (4.0, 11)],
                t_end: p.window.length_days() as f64,
                outcome: p.window.outcome,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("states.csv");
        write_states_csv(&seqs, &path).unwrap();
        assert_eq!(read_states_csv(&path, &cohort).unwrap(), seqs);
        std::fs::write(&path, "person_id,delta_t,state\nP000001,0,X\n").unwrap();
        assert!(matches!(read_states_csv(&path, &cohort), Err(Error::Parse { .. })));
    }
}
