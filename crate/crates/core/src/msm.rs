//! Multi-state transition data and Aalen-Johansen estimation.
//!
//! States `0..k` are transient clinical states; `k` is CKD and `k + 1`
//! is death. Both terminal states are absorbing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cohort::{csv_io, Outcome, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Horizons of the terminal-probability table, in years.
pub const DEFAULT_HORIZONS_YEARS: [f64; 5] = [0.5, 1.0, 3.0, 5.0, 10.0];

pub fn state_label(state: usize, k: usize) -> String {
    match state {
        s if s < k => format!("S{s}"),
        s if s == k => "CKD".to_string(),
        _ => "death".to_string(),
    }
}

/// Daily state assignments for one patient over the observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence<T> {
    pub person_id: String,
    /// `(Δt days, state)` on recorded days, ascending in time.
    pub points: Vec<(T, usize)>,
    pub t_end: T,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub time: T,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientPath<T> {
    pub person_id: String,
    pub entry_state: usize,
    pub transitions: Vec<Transition<T>>,
    /// Set when follow-up ends without a terminal event.
    pub censor: Option<T>,
}

impl<T: Real> PatientPath<T> {
    /// Time at which the patient leaves observation or is absorbed.
    pub fn exit(&self) -> T {
        match self.censor {
            Some(c) => c,
            None => self.transitions.last().map_or(T::zero(), |t| t.time),
        }
    }

    /// Sojourns as `(state, enter, exit, next state)`.
    fn sojourns(&self) -> Vec<(usize, T, T, Option<usize>)> {
        let mut out = Vec::with_capacity(self.transitions.len() + 1);
        let mut state = self.entry_state;
        let mut enter = T::zero();
        for t in &self.transitions {
            out.push((state, enter, t.time, Some(t.to)));
            state = t.to;
            enter = t.time;
        }
        if let Some(c) = self.censor {
            out.push((state, enter, c, None));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEventSet<T> {
    /// Number of transient states.
    pub k: usize,
    pub patients: Vec<PatientPath<T>>,
}

impl<T: Real> TransitionEventSet<T> {
    pub fn n_states(&self) -> usize {
        self.k + 2
    }

    /// Transition counts `[from][to]` over all patients.
    pub fn transition_counts(&self) -> Vec<Vec<usize>> {
        let n = self.n_states();
        let mut c = vec![vec![0; n]; n];
        for p in &self.patients {
            for t in &p.transitions {
                c[t.from][t.to] += 1;
            }
        }
        c
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["person_id", "time", "from", "to"])
            .map_err(|e| csv_io(path, e))?;
        for p in &self.patients {
            for t in &p.transitions {
                w.write_record([
                    p.person_id.clone(),
                    t.time.to_string(),
                    state_label(t.from, self.k),
                    state_label(t.to, self.k),
                ])
                .map_err(|e| csv_io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Builds counting-process transitions with last-observation-carried-forward occupancy.
///
/// A state change on the terminal day is superseded by the terminal transition.
pub fn extract_transitions<T: Real>(sequences: &[StateSequence<T>], k: usize) -> Result<TransitionEventSet<T>> {
    let mut patients = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let Some(&(t0, entry)) = seq.points.first() else {
            return Err(Error::Contract(format!("person {} has no state assignments", seq.person_id)));
        };
        if t0 < T::zero() || seq.points.iter().any(|p| p.1 >= k) {
            return Err(Error::Contract(format!("person {}: invalid state sequence", seq.person_id)));
        }
        if seq.points.windows(2).any(|w| w[1].0 <= w[0].0) || seq.points.last().unwrap().0 > seq.t_end {
            return Err(Error::Contract(format!(
                "person {}: state days must increase within the window",
                seq.person_id
            )));
        }
        let mut transitions = Vec::new();
        let mut current = entry;
        for &(day, state) in &seq.points[1..] {
            if state != current {
                if day == seq.t_end && seq.outcome != Outcome::Censored {
                    break;
                }
                transitions.push(Transition { time: day, from: current, to: state });
                current = state;
            }
        }
        let censor = match seq.outcome {
            Outcome::Ckd | Outcome::Death => {
                let to = if seq.outcome == Outcome::Ckd { k } else { k + 1 };
                transitions.push(Transition { time: seq.t_end, from: current, to });
                None
            }
            Outcome::Censored => Some(seq.t_end),
        };
        patients.push(PatientPath {
            person_id: seq.person_id.clone(),
            entry_state: entry,
            transitions,
            censor,
        });
    }
    Ok(TransitionEventSet { k, patients })
}

/// Running products `P(s, u]` at each transition time.
#[derive(Debug, Clone)]
pub struct TransitionMatrixSeries<T> {
    pub s: T,
    pub times: Vec<T>,
    pub matrices: Vec<Matrix<T>>,
    /// `(time, state)` pairs whose increment was skipped for lack of anyone at risk.
    pub zero_at_risk: Vec<(T, usize)>,
    /// Transitions consumed per `[from][to]`.
    pub consumed: Vec<Vec<usize>>,
    n_states: usize,
}

impl<T: Real> TransitionMatrixSeries<T> {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Step-function lookup of `P(s, t]`.
    pub fn at(&self, t: T) -> Matrix<T> {
        let i = self.times.partition_point(|&u| u <= t);
        if i == 0 {
            Matrix::identity(self.n_states)
        } else {
            self.matrices[i - 1].clone()
        }
    }

    pub fn last_time(&self) -> Option<T> {
        self.times.last().copied()
    }

    /// Long-format export `(time, from, to, prob)`.
    pub fn write_csv(&self, path: &Path, k: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["time", "from", "to", "prob"]).map_err(|e| csv_io(path, e))?;
        for (t, m) in self.times.iter().zip(&self.matrices) {
            for a in 0..self.n_states {
                for b in 0..self.n_states {
                    let v = m[(a, b)];
                    if a != b && v == T::zero() {
                        continue;
                    }
                    w.write_record([
                        t.to_string(),
                        state_label(a, k),
                        state_label(b, k),
                        v.to_string(),
                    ])
                    .map_err(|e| csv_io(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Aalen-Johansen product integral from `s` up to the last grid point.
///
/// At-risk counting is occupancy based: a patient is at risk in `l` at `u`
/// when it entered `l` before `u` and left it at or after `u`.
pub fn aalen_johansen<T: Real>(events: &TransitionEventSet<T>, s: T, grid: &[T]) -> Result<TransitionMatrixSeries<T>> {
    if events.patients.is_empty() {
        return Err(Error::Contract("Aalen-Johansen needs at least one patient".into()));
    }
    if s < T::zero() {
        return Err(Error::Contract("start time must be non-negative".into()));
    }
    let n = events.n_states();
    let horizon = grid.iter().copied().fold(T::neg_infinity(), T::max);
    let mut enters: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut exits: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut moves: Vec<(T, usize, usize)> = Vec::new();
    for p in &events.patients {
        for (state, enter, exit, next) in p.sojourns() {
            enters[state].push(enter);
            exits[state].push(exit);
            if let Some(to) = next {
                if exit > s && exit <= horizon {
                    moves.push((exit, state, to));
                }
            }
        }
    }
    let by_value = |a: &T, b: &T| a.partial_cmp(b).expect("finite times");
    for v in enters.iter_mut().chain(exits.iter_mut()) {
        v.sort_by(by_value);
    }
    moves.sort_by(|a, b| by_value(&a.0, &b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut p = Matrix::identity(n);
    let mut series = TransitionMatrixSeries {
        s,
        times: Vec::new(),
        matrices: Vec::new(),
        zero_at_risk: Vec::new(),
        consumed: vec![vec![0; n]; n],
        n_states: n,
    };
    let mut counts = vec![vec![0usize; n]; n];
    let mut i = 0;
    while i < moves.len() {
        let u = moves[i].0;
        let mut rows: Vec<usize> = Vec::new();
        while i < moves.len() && moves[i].0 == u {
            let (_, from, to) = moves[i];
            if counts[from].iter().all(|&c| c == 0) {
                rows.push(from);
            }
            counts[from][to] += 1;
            i += 1;
        }
        // Increment matrix rows for states with transitions at u.
        let mut m_rows: Vec<(usize, Vec<T>)> = Vec::with_capacity(rows.len());
        for &l in &rows {
            let at_risk = enters[l].partition_point(|&e| e < u) - exits[l].partition_point(|&x| x < u);
            if at_risk == 0 {
                series.zero_at_risk.push((u, l));
            } else {
                let y = T::from_count(at_risk);
                let mut row = vec![T::zero(); n];
                let mut off = T::zero();
                for m in 0..n {
                    if m != l && counts[l][m] > 0 {
                        row[m] = T::from_count(counts[l][m]) / y;
                        off += row[m];
                        series.consumed[l][m] += counts[l][m];
                    }
                }
                row[l] = T::one() - off;
                m_rows.push((l, row));
            }
            counts[l].iter_mut().for_each(|c| *c = 0);
        }
        if m_rows.is_empty() {
            continue;
        }
        let mut next = p.clone();
        for a in 0..n {
            for &(l, _) in &m_rows {
                next[(a, l)] = T::zero();
            }
            for (l, row) in &m_rows {
                let pal = p[(a, *l)];
                if pal == T::zero() {
                    continue;
                }
                for b in 0..n {
                    if row[b] != T::zero() {
                        next[(a, b)] = next[(a, b)] + pal * row[b];
                    }
                }
            }
        }
        p = next;
        series.times.push(u);
        series.matrices.push(p.clone());
    }
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiBand<T> {
    pub from: usize,
    pub to: usize,
    pub horizon: T,
    pub point: T,
    pub lower: T,
    pub upper: T,
}

#[derive(Debug, Clone)]
pub struct CiBands<T> {
    pub bands: Vec<CiBand<T>>,
    pub replicates: usize,
    pub degenerate: usize,
}

impl<T: Real> CiBands<T> {
    pub fn write_csv(&self, path: &Path, k: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["from", "to", "horizon_days", "estimate", "lower", "upper"])
            .map_err(|e| csv_io(path, e))?;
        for b in &self.bands {
            w.write_record([
                state_label(b.from, k),
                state_label(b.to, k),
                b.horizon.to_string(),
                b.point.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = T::from_count(n - 1) * q;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - T::from_count(lo)) * (sorted[hi] - sorted[lo])
}

/// Patient-level percentile bootstrap for transition probabilities at `horizons` (days).
pub fn bootstrap_transition_ci<T: Real>(
    events: &TransitionEventSet<T>,
    replicates: usize,
    seed: u64,
    horizons: &[T],
) -> Result<CiBands<T>> {
    if replicates < 2 {
        return Err(Error::Contract("bootstrap needs at least two replicates".into()));
    }
    let point = aalen_johansen(events, T::zero(), horizons)?;
    let n = events.n_states();
    let m = events.patients.len();
    let draws: Vec<Option<Vec<Matrix<T>>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let patients = (0..m)
                .map(|_| events.patients[rng.random_range(0..m)].clone())
                .collect();
            let sample = TransitionEventSet { k: events.k, patients };
            match aalen_johansen(&sample, T::zero(), horizons) {
                Ok(s) if s.zero_at_risk.is_empty() => Some(horizons.iter().map(|&h| s.at(h)).collect()),
                _ => None,
            }
        })
        .collect();
    let valid: Vec<&Vec<Matrix<T>>> = draws.iter().flatten().collect();
    let degenerate = replicates - valid.len();
    if valid.is_empty() {
        return Err(Error::Numeric("every bootstrap replicate was degenerate".into()));
    }
    let (lo_q, hi_q) = (T::lit(0.025), T::lit(0.975));
    let mut bands = Vec::new();
    for (h, &horizon) in horizons.iter().enumerate() {
        let est = point.at(horizon);
        for from in 0..events.k {
            for to in 0..n {
                let mut v: Vec<T> = valid.iter().map(|r| r[h][(from, to)]).collect();
                v.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
                let clamp = |x: T| x.max(T::zero()).min(T::one());
                bands.push(CiBand {
                    from,
                    to,
                    horizon,
                    point: est[(from, to)],
                    lower: clamp(quantile_sorted(&v, lo_q)),
                    upper: clamp(quantile_sorted(&v, hi_q)),
                });
            }
        }
    }
    Ok(CiBands {
        bands,
        replicates,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalRow<T> {
    pub state: usize,
    pub horizon_years: T,
    pub p_ckd: T,
    pub p_death: T,
    /// Horizon lies beyond the last transition; values are carried forward.
    pub extrapolated: bool,
}

/// `P(state → CKD]` and `P(state → death]` at horizons given in years.
pub fn terminal_probability_table<T: Real>(
    series: &TransitionMatrixSeries<T>,
    k: usize,
    horizons_years: &[T],
) -> Result<Vec<TerminalRow<T>>> {
    if series.s != T::zero() {
        return Err(Error::Contract("terminal table needs a series started at 0".into()));
    }
    let last = series.last_time().unwrap_or(T::zero());
    let mut rows = Vec::new();
    for state in 0..k + 2 {
        for &h in horizons_years {
            let days = h * T::lit(DAYS_PER_YEAR);
            let m = series.at(days);
            rows.push(TerminalRow {
                state,
                horizon_years: h,
                p_ckd: m[(state, k)],
                p_death: m[(state, k + 1)],
                extrapolated: days > last,
            });
        }
    }
    Ok(rows)
}

pub fn horizon_label<T: Real>(years: T) -> String {
    let y = years.as_f64();
    if y < 1.0 {
        format!("{} months", (y * 12.0).round())
    } else if y == 1.0 {
        "1 year".to_string()
    } else {
        format!("{y} years")
    }
}

pub fn write_terminal_table<T: Real>(rows: &[TerminalRow<T>], k: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["state", "horizon", "horizon_years", "p_ckd", "p_death", "extrapolated"])
        .map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.write_record([
            state_label(r.state, k),
            horizon_label(r.horizon_years),
            r.horizon_years.to_string(),
            r.p_ckd.to_string(),
            r.p_death.to_string(),
            r.extrapolated.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::KaplanMeier;
    use proptest::prelude::*;

    fn seq(points: &[(f64, usize)], t_end: f64, outcome: Outcome) -> StateSequence<f64> {
        StateSequence {
            person_id: "p".into(),
            points: points.to_vec(),
            t_end,
            outcome,
        }
    }

    fn path(entry: usize, tr: &[(f64, usize, usize)], censor: Option<f64>) -> PatientPath<f64> {
        PatientPath {
            person_id: "p".into(),
            entry_state: entry,
            transitions: tr.iter().map(|&(time, from, to)| Transition { time, from, to }).collect(),
            censor,
        }
    }

    #[test]
    fn extraction_examples() {
        let k = 15;
        let s = seq(&[(0.0, 0), (30.0, 0), (55.0, 0), (56.0, 12), (120.0, 12)], 200.0, Outcome::Ckd);
        let ev = extract_transitions(&[s], k).unwrap();
        assert_eq!(
            ev.patients[0].transitions,
            vec![
                Transition { time: 56.0, from: 0, to: 12 },
                Transition { time: 200.0, from: 12, to: k },
            ]
        );
        let ev = extract_transitions(&[seq(&[(0.0, 3), (100.0, 3)], 410.0, Outcome::Censored)], k).unwrap();
        assert!(ev.patients[0].transitions.is_empty());
        assert_eq!(ev.patients[0].censor, Some(410.0));
        let ev = extract_transitions(&[seq(&[(0.0, 2)], 200.0, Outcome::Death)], k).unwrap();
        assert_eq!(ev.patients[0].transitions, vec![Transition { time: 200.0, from: 2, to: k + 1 }]);
    }

    #[test]
    fn terminal_day_change_yields_to_outcome() {
        let ev = extract_transitions(&[seq(&[(0.0, 0), (90.0, 1)], 90.0, Outcome::Death)], 2).unwrap();
        assert_eq!(ev.patients[0].transitions, vec![Transition { time: 90.0, from: 0, to: 3 }]);
    }

    #[test]
    fn no_transitions_gives_identity() {
        let ev = TransitionEventSet { k: 1, patients: vec![path(0, &[], Some(5.0))] };
        let s = aalen_johansen(&ev, 0.0, &[10.0]).unwrap();
        assert_eq!(s.at(10.0), Matrix::identity(3));
    }

    #[test]
    fn two_state_matches_kaplan_meier() {
        // k = 0: state 0 is "CKD" here, used as the single absorbing target.
        let ev = TransitionEventSet {
            k: 1,
            patients: vec![
                path(0, &[(1.0, 0, 2)], None),
                path(0, &[(2.0, 0, 2)], None),
                path(0, &[], Some(3.0)),
            ],
        };
        let s = aalen_johansen(&ev, 0.0, &[3.0]).unwrap();
        assert!((s.at(2.0)[(0, 2)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn illness_death_hand_product() {
        // States 0 -> 1 -> 2 with k = 2 transient states; 2 is CKD.
        let ev = TransitionEventSet {
            k: 2,
            patients: vec![path(0, &[(1.0, 0, 1), (2.0, 1, 2)], None), path(0, &[], Some(3.0))],
        };
        let s = aalen_johansen(&ev, 0.0, &[3.0]).unwrap();
        let p = s.at(2.0);
        assert_eq!([p[(0, 0)], p[(0, 1)], p[(0, 2)]], [0.5, 0.0, 0.5]);
        assert_eq!(s.consumed, ev.transition_counts());
    }

    #[test]
    fn absorbing_rows_stay_unit() {
        let ev = TransitionEventSet {
            k: 1,
            patients: vec![path(0, &[(1.0, 0, 1)], None), path(0, &[(2.0, 0, 2)], None), path(0, &[], Some(4.0))],
        };
        let rows = terminal_probability_table(&aalen_johansen(&ev, 0.0, &[3650.0]).unwrap(), 1, &[0.5, 1.0]).unwrap();
        for r in rows.iter().filter(|r| r.state == 1) {
            assert_eq!((r.p_ckd, r.p_death), (1.0, 0.0));
        }
        assert!(rows.iter().all(|r| r.extrapolated));
    }

    #[test]
    fn single_patient_bootstrap_has_zero_width() {
        let ev = TransitionEventSet { k: 1, patients: vec![path(0, &[(5.0, 0, 1)], None)] };
        let ci = bootstrap_transition_ci(&ev, 10, 3, &[10.0]).unwrap();
        assert!(ci.bands.iter().all(|b| b.lower == b.upper));
        assert_eq!(ci.degenerate, 0);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }

    #[test]
    fn horizon_labels() {
        assert_eq!(horizon_label(0.5), "6 months");
        assert_eq!(horizon_label(1.0), "1 year");
        assert_eq!(horizon_label(10.0), "10 years");
    }

    fn random_paths(seeds: Vec<(u8, u8, u8, bool)>) -> TransitionEventSet<f64> {
        // k = 2 transient states; each patient may move once then end.
        let patients = seeds
            .into_iter()
            .map(|(a, b, c, died)| {
                let entry = (a % 2) as usize;
                let t1 = 1.0 + (b % 20) as f64;
                let t2 = t1 + 1.0 + (c % 20) as f64;
                let mut tr = Vec::new();
                if b % 3 == 0 {
                    tr.push((t1, entry, 1 - entry));
                }
                let cur = tr.last().map_or(entry, |t| t.2);
                if died {
                    tr.push((t2, cur, 2 + (c % 2) as usize));
                    path(entry, &tr, None)
                } else {
                    path(entry, &tr, Some(t2))
                }
            })
            .collect();
        TransitionEventSet { k: 2, patients }
    }

    proptest! {
        #[test]
        fn rows_are_stochastic_and_absorption_monotone(
            seeds in prop::collection::vec((any::<u8>(), any::<u8>(), any::<u8>(), any::<bool>()), 1..60)
        ) {
            let ev = random_paths(seeds);
            let s = aalen_johansen(&ev, 0.0, &[100.0]).unwrap();
            let mut prev = Matrix::identity(4);
            for m in &s.matrices {
                for a in 0..4 {
                    let row: f64 = m.row(a).iter().sum();
                    prop_assert!((row - 1.0).abs() < 1e-12);
                    prop_assert!(m.row(a).iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
                    for t in [2, 3] {
                        prop_assert!(m[(a, t)] >= prev[(a, t)] - 1e-15);
                    }
                }
                prev = m.clone();
            }
            prop_assert_eq!(s.consumed, ev.transition_counts());
        }

        #[test]
        fn patient_order_is_irrelevant(
            seeds in prop::collection::vec((any::<u8>(), any::<u8>(), any::<u8>(), any::<bool>()), 1..40)
        ) {
            let ev = random_paths(seeds);
            let mut rev = ev.clone();
            rev.patients.reverse();
            let a = aalen_johansen(&ev, 0.0, &[100.0]).unwrap();
            let b = aalen_johansen(&rev, 0.0, &[100.0]).unwrap();
            prop_assert_eq!(a.times, b.times);
            prop_assert_eq!(a.matrices, b.matrices);
        }

        #[test]
        fn two_state_reduction(times in prop::collection::vec((1u16..200, any::<bool>()), 1..100)) {
            let patients = times
                .iter()
                .map(|&(t, e)| if e { path(0, &[(t as f64, 0, 2)], None) } else { path(0, &[], Some(t as f64)) })
                .collect();
            let ev = TransitionEventSet { k: 1, patients };
            let s = aalen_johansen(&ev, 0.0, &[1e6]).unwrap();
            let t: Vec<f64> = times.iter().map(|p| p.0 as f64).collect();
            let e: Vec<bool> = times.iter().map(|p| p.1).collect();
            let km = KaplanMeier::fit(&t, &e).unwrap();
            for u in km.event_times() {
                prop_assert!(((1.0 - s.at(u)[(0, 0)]) - (1.0 - km.survival_at(u))).abs() <= 1e-12);
            }
        }
    }
}
