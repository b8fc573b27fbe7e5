use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, solve_spd, Matrix};
use crate::scalar::Real;

use super::km::KaplanMeier;
use super::stats::bh_adjust;

/// Per-subject status for the event of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Censored,
    Event,
    /// Competing terminal event (death without CKD).
    Competing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Competing {
    #[default]
    CauseSpecific,
    ExcludeDeaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTemplate {
    Unit,
    #[default]
    Ahr,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Ties { Efron => "efron", Breslow => "breslow" });
keyword_enum!(Competing { CauseSpecific => "cause_specific", ExcludeDeaths => "exclude_deaths" });
keyword_enum!(WeightTemplate { Unit => "unit", Ahr => "ahr" });

/// Survival times with covariates; one row of `x` per subject.
#[derive(Debug, Clone)]
pub struct SurvivalData<T> {
    pub times: Vec<T>,
    pub status: Vec<Status>,
    pub x: Matrix<T>,
    pub names: Vec<String>,
}

impl<T: Real> SurvivalData<T> {
    pub fn new(times: Vec<T>, status: Vec<Status>, x: Matrix<T>, names: Vec<String>) -> Result<Self> {
        let n = times.len();
        if status.len() != n || x.rows() != n || x.cols() != names.len() {
            return Err(Error::Contract("survival data dimensions disagree".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t <= T::zero()) {
            return Err(Error::Contract("survival times must be finite and positive".into()));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("covariates must be finite".into()));
        }
        Ok(Self { times, status, x, names })
    }

    /// Convenience constructor for plain event/censoring data.
    pub fn from_events(times: Vec<T>, events: Vec<bool>, x: Matrix<T>, names: Vec<String>) -> Result<Self> {
        let status = events
            .into_iter()
            .map(|e| if e { Status::Event } else { Status::Censored })
            .collect();
        Self::new(times, status, x, names)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|s| **s == Status::Event).count()
    }
}

#[derive(Debug, Clone)]
pub struct CoxOptions<T> {
    pub ties: Ties,
    pub competing: Competing,
    pub max_iter: usize,
    pub tol: T,
    /// |β_j| beyond this is treated as a diverging (monotone) likelihood.
    pub beta_bound: T,
    /// Ceiling for raw AHR weights, also used when Ĝ(t-) = 0.
    pub weight_cap: T,
}

impl<T: Real> Default for CoxOptions<T> {
    fn default() -> Self {
        Self {
            ties: Ties::Efron,
            competing: Competing::CauseSpecific,
            max_iter: 10_000,
            tol: T::lit(1e-9),
            beta_bound: T::lit(20.0),
            weight_cap: T::lit(1e3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HazardFit<T> {
    pub names: Vec<String>,
    pub beta: Vec<T>,
    pub se: Vec<T>,
    pub hazard_ratio: Vec<T>,
    pub ci_lower: Vec<T>,
    pub ci_upper: Vec<T>,
    pub covariance: Matrix<T>,
    pub p_raw: Vec<T>,
    pub p_adjusted: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub ties: Ties,
    pub competing: Competing,
    /// `None` for the plain partial-likelihood fit.
    pub template: Option<WeightTemplate>,
    /// Objective after each accepted Newton step, starting at β = 0.
    pub objective_trace: Vec<T>,
    pub n: usize,
    pub n_events: usize,
    /// Event times whose AHR weight hit the cap.
    pub weight_caps: usize,
}

/// Subjects that enter the model, with covariates centered.
pub(crate) struct Prepared<T> {
    pub times: Vec<T>,
    pub events: Vec<bool>,
    pub x: Matrix<T>,
    /// Distinct times descending; each holds subject indices.
    groups: Vec<Vec<usize>>,
}

impl<T: Real> Prepared<T> {
    pub fn new(data: &SurvivalData<T>, competing: Competing) -> Result<Self> {
        let keep: Vec<usize> = (0..data.len())
            .filter(|&i| !(competing == Competing::ExcludeDeaths && data.status[i] == Status::Competing))
            .collect();
        let p = data.x.cols();
        if p == 0 {
            return Err(Error::EmptyModel);
        }
        let times: Vec<T> = keep.iter().map(|&i| data.times[i]).collect();
        let events: Vec<bool> = keep.iter().map(|&i| data.status[i] == Status::Event).collect();
        if !events.iter().any(|&e| e) {
            return Err(Error::Contract("Cox model needs at least one event".into()));
        }
        let n = keep.len();
        let mut mean = vec![T::zero(); p];
        for &i in &keep {
            for (m, &v) in mean.iter_mut().zip(data.x.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= T::from_count(n);
        }
        let mut x = Matrix::zeros(n, p);
        for (r, &i) in keep.iter().enumerate() {
            for j in 0..p {
                x[(r, j)] = data.x[(i, j)] - mean[j];
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].partial_cmp(&times[a]).expect("finite").then(a.cmp(&b)));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if times[g[0]] == times[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        Ok(Self { times, events, x, groups })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    fn risk_scores(&self, beta: &[T]) -> (Vec<T>, T) {
        let eta: Vec<T> = (0..self.len())
            .map(|i| self.x.row(i).iter().zip(beta).map(|(&a, &b)| a * b).sum())
            .collect();
        let c = eta.iter().copied().fold(T::neg_infinity(), T::max);
        (eta, c)
    }

    /// Weighted partial log-likelihood, score and information.
    /// `w[i]` is read only for event subjects.
    pub fn evaluate(&self, beta: &[T], w: &[T], ties: Ties) -> Evaluation<T> {
        let p = self.p();
        let (eta, c) = self.risk_scores(beta);
        let r: Vec<T> = eta.iter().map(|&e| (e - c).exp()).collect();
        let mut s0 = T::zero();
        let mut s1 = vec![T::zero(); p];
        let mut s2 = Matrix::zeros(p, p);
        let mut loglik = T::zero();
        let mut score = vec![T::zero(); p];
        let mut info = Matrix::zeros(p, p);
        let mut num1 = vec![T::zero(); p];

        for group in &self.groups {
            for &i in group {
                accumulate(&mut s0, &mut s1, &mut s2, self.x.row(i), r[i]);
            }
            let dead: Vec<usize> = group.iter().copied().filter(|&i| self.events[i]).collect();
            if dead.is_empty() {
                continue;
            }
            let d = T::from_count(dead.len());
            let wg = w[dead[0]];
            let (mut d0, mut d1, mut d2) = (T::zero(), vec![T::zero(); p], Matrix::zeros(p, p));
            for &i in &dead {
                accumulate(&mut d0, &mut d1, &mut d2, self.x.row(i), r[i]);
                loglik += wg * eta[i];
                for (g, &v) in score.iter_mut().zip(self.x.row(i)) {
                    *g += wg * v;
                }
            }
            let steps = match ties {
                Ties::Breslow => 1,
                Ties::Efron => dead.len(),
            };
            for k in 0..steps {
                let (f, mult) = match ties {
                    Ties::Breslow => (T::zero(), d),
                    Ties::Efron => (T::from_count(k) / d, T::one()),
                };
                let den = s0 - f * d0;
                for j in 0..p {
                    num1[j] = s1[j] - f * d1[j];
                }
                loglik -= wg * mult * (den.ln() + c);
                for j in 0..p {
                    score[j] -= wg * mult * num1[j] / den;
                }
                for a in 0..p {
                    for b in 0..p {
                        let num2 = s2[(a, b)] - f * d2[(a, b)];
                        info[(a, b)] += wg * mult * (num2 / den - num1[a] * num1[b] / (den * den));
                    }
                }
            }
        }
        Evaluation { loglik, score, info }
    }

    /// Per-event-time summaries at `beta` used by residual computations.
    fn event_summaries(&self, beta: &[T], ties: Ties) -> (Vec<T>, Vec<EventTime<T>>) {
        let p = self.p();
        let (eta, c) = self.risk_scores(beta);
        let r: Vec<T> = eta.iter().map(|&e| (e - c).exp()).collect();
        let mut s0 = T::zero();
        let mut s1 = vec![T::zero(); p];
        let mut s2 = Matrix::zeros(p, p);
        let mut out = Vec::new();
        for group in &self.groups {
            for &i in group {
                accumulate(&mut s0, &mut s1, &mut s2, self.x.row(i), r[i]);
            }
            let dead: Vec<usize> = group.iter().copied().filter(|&i| self.events[i]).collect();
            if dead.is_empty() {
                continue;
            }
            let mut d0 = T::zero();
            let mut d1 = vec![T::zero(); p];
            for &i in &dead {
                d0 += r[i];
                for (a, &v) in d1.iter_mut().zip(self.x.row(i)) {
                    *a += r[i] * v;
                }
            }
            let xbar_breslow: Vec<T> = s1.iter().map(|&v| v / s0).collect();
            let xbar_ties = match ties {
                Ties::Breslow => xbar_breslow.clone(),
                Ties::Efron => {
                    let d = T::from_count(dead.len());
                    let mut m = vec![T::zero(); p];
                    for k in 0..dead.len() {
                        let f = T::from_count(k) / d;
                        let den = s0 - f * d0;
                        for j in 0..p {
                            m[j] += (s1[j] - f * d1[j]) / den / d;
                        }
                    }
                    m
                }
            };
            out.push(EventTime {
                time: self.times[group[0]],
                dead,
                s0,
                xbar_breslow,
                xbar_ties,
            });
        }
        out.reverse();
        (r, out)
    }

    /// Score residuals in Breslow form, one row per subject.
    fn score_residuals(&self, beta: &[T], w: &[T]) -> Matrix<T> {
        let p = self.p();
        let (r, events) = self.event_summaries(beta, Ties::Breslow);
        // Cumulative hazard pieces over event times ascending.
        let mut cum_h = Vec::with_capacity(events.len());
        let mut cum_hx = Vec::with_capacity(events.len());
        let mut h = T::zero();
        let mut hx = vec![T::zero(); p];
        for e in &events {
            let d = T::from_count(e.dead.len());
            let inc = w[e.dead[0]] * d / e.s0;
            h += inc;
            for j in 0..p {
                hx[j] += inc * e.xbar_breslow[j];
            }
            cum_h.push(h);
            cum_hx.push(hx.clone());
        }
        let mut xbar_at = vec![None; self.len()];
        for e in &events {
            for &i in &e.dead {
                xbar_at[i] = Some(&e.xbar_breslow);
            }
        }
        let mut u = Matrix::zeros(self.len(), p);
        for i in 0..self.len() {
            let k = events.partition_point(|e| e.time <= self.times[i]);
            let xi = self.x.row(i);
            for j in 0..p {
                let mut v = T::zero();
                if let Some(xbar) = xbar_at[i] {
                    v += w[i] * (xi[j] - xbar[j]);
                }
                if k > 0 {
                    v -= r[i] * (xi[j] * cum_h[k - 1] - cum_hx[k - 1][j]);
                }
                u[(i, j)] = v;
            }
        }
        u
    }
}

pub(crate) struct Evaluation<T> {
    pub loglik: T,
    pub score: Vec<T>,
    pub info: Matrix<T>,
}

struct EventTime<T> {
    time: T,
    dead: Vec<usize>,
    s0: T,
    xbar_breslow: Vec<T>,
    xbar_ties: Vec<T>,
}

fn accumulate<T: Real>(s0: &mut T, s1: &mut [T], s2: &mut Matrix<T>, x: &[T], r: T) {
    *s0 += r;
    for a in 0..x.len() {
        s1[a] += r * x[a];
        for b in 0..x.len() {
            s2[(a, b)] += r * x[a] * x[b];
        }
    }
}

struct Newton<T> {
    beta: Vec<T>,
    info: Matrix<T>,
    converged: bool,
    iterations: usize,
    trace: Vec<T>,
}

fn newton<T: Real>(prep: &Prepared<T>, w: &[T], names: &[String], opts: &CoxOptions<T>) -> Result<Newton<T>> {
    let p = prep.p();
    let mut beta = vec![T::zero(); p];
    let mut ev = prep.evaluate(&beta, w, opts.ties);
    if !ev.loglik.is_finite() {
        return Err(Error::Numeric("partial likelihood is not finite at beta = 0".into()));
    }
    let mut trace = vec![ev.loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let step = solve_spd(&ev.info, &ev.score).map_err(|_| {
            Error::Numeric("information matrix is not positive definite; check for constant covariates".into())
        })?;
        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + scale * s).collect();
            let ev_c = prep.evaluate(&cand, w, opts.ties);
            if ev_c.loglik.is_finite() && ev_c.loglik >= ev.loglik {
                accepted = Some((cand, ev_c));
                break;
            }
            scale = scale * T::lit(0.5);
        }
        let Some((cand, ev_c)) = accepted else {
            // No ascent left at working precision.
            converged = true;
            break;
        };
        debug_assert!(ev_c.loglik >= ev.loglik);
        let delta = beta
            .iter()
            .zip(&cand)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        beta = cand;
        ev = ev_c;
        trace.push(ev.loglik);
        if let Some(j) = (0..p).find(|&j| beta[j].abs() > opts.beta_bound) {
            return Err(Error::NonIdentifiable {
                covariate: names[j].clone(),
            });
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(Newton {
        beta,
        info: ev.info,
        converged,
        iterations,
        trace,
    })
}

fn two_sided_p<T: Real>(z: T) -> T {
    T::lit(statrs::function::erf::erfc(z.abs().as_f64() / std::f64::consts::SQRT_2))
}

fn assemble<T: Real>(
    data: &SurvivalData<T>,
    prep: &Prepared<T>,
    fit: Newton<T>,
    covariance: Matrix<T>,
    opts: &CoxOptions<T>,
    template: Option<WeightTemplate>,
    weight_caps: usize,
) -> HazardFit<T> {
    let z = T::lit(1.96);
    let p = fit.beta.len();
    let se: Vec<T> = (0..p).map(|j| covariance[(j, j)].max(T::zero()).sqrt()).collect();
    let hazard_ratio = fit.beta.iter().map(|b| b.exp()).collect();
    let ci_lower = (0..p).map(|j| (fit.beta[j] - z * se[j]).exp()).collect();
    let ci_upper = (0..p).map(|j| (fit.beta[j] + z * se[j]).exp()).collect();
    let p_raw: Vec<T> = (0..p).map(|j| two_sided_p(fit.beta[j] / se[j])).collect();
    let p_adjusted = bh_adjust(&p_raw);
    HazardFit {
        names: data.names.clone(),
        beta: fit.beta,
        se,
        hazard_ratio,
        ci_lower,
        ci_upper,
        covariance,
        p_raw,
        p_adjusted,
        converged: fit.converged,
        iterations: fit.iterations,
        ties: opts.ties,
        competing: opts.competing,
        template,
        objective_trace: fit.trace,
        n: prep.len(),
        n_events: prep.n_events(),
        weight_caps,
    }
}

/// Cox proportional-hazards fit by Newton-Raphson with step-halving.
pub fn cox_fit<T: Real>(data: &SurvivalData<T>, opts: &CoxOptions<T>) -> Result<HazardFit<T>> {
    let prep = Prepared::new(data, opts.competing)?;
    let w = vec![T::one(); prep.len()];
    let fit = newton(&prep, &w, &data.names, opts)?;
    let covariance = inverse_spd(&fit.info)?;
    Ok(assemble(data, &prep, fit, covariance, opts, None, 0))
}

/// Event-time weights `Ŝ(t-)/Ĝ(t-)`, normalized to mean one over events.
pub fn ahr_weights<T: Real>(times: &[T], events: &[bool], cap: T) -> Result<(Vec<T>, usize)> {
    let s = KaplanMeier::fit(times, events)?;
    let reversed: Vec<bool> = events.iter().map(|e| !e).collect();
    let g = KaplanMeier::fit(times, &reversed)?;
    let mut caps = 0;
    let mut w = vec![T::one(); times.len()];
    let mut total = T::zero();
    let mut n = 0usize;
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        let gi = g.survival_before(times[i]);
        let raw = if gi > T::zero() {
            s.survival_before(times[i]) / gi
        } else {
            cap
        };
        w[i] = if raw >= cap {
            caps += 1;
            cap
        } else {
            raw
        };
        total += w[i];
        n += 1;
    }
    let mean = total / T::from_count(n.max(1));
    if mean > T::zero() {
        for i in 0..times.len() {
            if events[i] {
                w[i] /= mean;
            }
        }
    }
    Ok((w, caps))
}

/// Weighted Cox fit with a robust sandwich covariance.
pub fn weighted_cox_fit<T: Real>(
    data: &SurvivalData<T>,
    template: WeightTemplate,
    opts: &CoxOptions<T>,
) -> Result<HazardFit<T>> {
    let prep = Prepared::new(data, opts.competing)?;
    let (w, caps) = match template {
        WeightTemplate::Unit => (vec![T::one(); prep.len()], 0),
        WeightTemplate::Ahr => ahr_weights(&prep.times, &prep.events, opts.weight_cap)?,
    };
    let fit = newton(&prep, &w, &data.names, opts)?;
    let a_inv = inverse_spd(&fit.info)?;
    let u = prep.score_residuals(&fit.beta, &w);
    let b = u.transpose().matmul(&u)?;
    let mut covariance = a_inv.matmul(&b)?.matmul(&a_inv)?;
    let p = covariance.rows();
    for i in 0..p {
        for j in 0..i {
            let m = (covariance[(i, j)] + covariance[(j, i)]) * T::lit(0.5);
            covariance[(i, j)] = m;
            covariance[(j, i)] = m;
        }
    }
    Ok(assemble(data, &prep, fit, covariance, opts, Some(template), caps))
}

/// Weighted score at `beta`; zero at the weighted estimate.
pub fn weighted_score<T: Real>(
    data: &SurvivalData<T>,
    template: WeightTemplate,
    beta: &[T],
    opts: &CoxOptions<T>,
) -> Result<Vec<T>> {
    let prep = Prepared::new(data, opts.competing)?;
    let w = match template {
        WeightTemplate::Unit => vec![T::one(); prep.len()],
        WeightTemplate::Ahr => ahr_weights(&prep.times, &prep.events, opts.weight_cap)?.0,
    };
    Ok(prep.evaluate(beta, &w, opts.ties).score)
}

/// Proportional-hazards diagnostic from scaled Schoenfeld residuals.
#[derive(Debug, Clone)]
pub struct PhTest<T> {
    pub names: Vec<String>,
    pub correlation: Vec<T>,
    pub chi2: Vec<T>,
    pub p_values: Vec<T>,
    pub global_chi2: T,
    pub global_df: usize,
    pub global_p: T,
}

/// Grambsch-Therneau test against the Kaplan-Meier time transform.
pub fn ph_test<T: Real>(fit: &HazardFit<T>, data: &SurvivalData<T>) -> Result<PhTest<T>> {
    if fit.template.is_some() {
        return Err(Error::Contract("ph_test expects an unweighted fit".into()));
    }
    let prep = Prepared::new(data, fit.competing)?;
    let p = prep.p();
    let ndead = prep.n_events();
    if ndead < 2 || ndead < p {
        return Err(Error::UndefinedTest(format!(
            "{ndead} events for {p} covariates"
        )));
    }
    let (_, events) = prep.event_summaries(&fit.beta, fit.ties);
    let km = KaplanMeier::fit(&prep.times, &prep.events)?;

    let mut ttimes = Vec::with_capacity(ndead);
    let mut resid: Vec<Vec<T>> = Vec::with_capacity(ndead);
    for e in &events {
        let g = T::one() - km.survival_before(e.time);
        for &i in &e.dead {
            ttimes.push(g);
            resid.push((0..p).map(|j| prep.x[(i, j)] - e.xbar_ties[j]).collect());
        }
    }
    let n = T::from_count(ndead);
    let tbar = ttimes.iter().copied().sum::<T>() / n;
    let xx: Vec<T> = ttimes.iter().map(|&t| t - tbar).collect();
    let sxx: T = xx.iter().map(|&v| v * v).sum();
    if !(sxx > T::zero()) {
        return Err(Error::UndefinedTest("all events share one transformed time".into()));
    }
    let v = &fit.covariance;
    // Scaled residuals r2 = resid · V · ndead.
    let r2: Vec<Vec<T>> = resid
        .iter()
        .map(|r| (0..p).map(|j| (0..p).map(|l| r[l] * v[(l, j)]).sum::<T>() * n).collect())
        .collect();

    let chi = statrs_chi2_sf;
    let mut correlation = Vec::with_capacity(p);
    let mut chi2 = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<T> = r2.iter().map(|r| r[j]).collect();
        let test: T = xx.iter().zip(&col).map(|(&a, &b)| a * b).sum();
        let mean = col.iter().copied().sum::<T>() / n;
        let syy: T = col.iter().map(|&c| (c - mean) * (c - mean)).sum();
        correlation.push(if syy > T::zero() { test / (sxx * syy).sqrt() } else { T::zero() });
        let z = test * test / (v[(j, j)] * n * sxx);
        chi2.push(z);
        p_values.push(chi(z, 1));
    }
    let test: Vec<T> = (0..p)
        .map(|j| xx.iter().zip(&resid).map(|(&a, r)| a * r[j]).sum())
        .collect();
    let mut quad = T::zero();
    for a in 0..p {
        for b in 0..p {
            quad += test[a] * v[(a, b)] * test[b];
        }
    }
    let global_chi2 = quad * n / sxx;
    Ok(PhTest {
        names: fit.names.clone(),
        correlation,
        chi2,
        p_values,
        global_chi2,
        global_df: p,
        global_p: chi(global_chi2, p),
    })
}

pub(crate) fn statrs_chi2_sf<T: Real>(x: T, df: usize) -> T {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    T::lit(dist.sf(x.as_f64().max(0.0)))
}
