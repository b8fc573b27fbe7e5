//! Missing-data handling for the covariate panel.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::scalar::Real;

/// Rectangular table of optional reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable<T> {
    pub columns: Vec<String>,
    pub row_ids: Vec<String>,
    cells: Vec<Option<T>>,
}

impl<T: Real> NumericTable<T> {
    pub fn new(columns: Vec<String>, row_ids: Vec<String>, rows: Vec<Vec<Option<T>>>) -> Result<Self> {
        if rows.len() != row_ids.len() || rows.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Contract("table is not rectangular".into()));
        }
        let cells: Vec<Option<T>> = rows.into_iter().flatten().collect();
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Contract("observed cells must be finite".into()));
        }
        Ok(Self { columns, row_ids, cells })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.cells[i * self.n_cols() + j]
    }

    pub fn row(&self, i: usize) -> &[Option<T>] {
        let p = self.n_cols();
        &self.cells[i * p..(i + 1) * p]
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn missing_fraction(&self, j: usize) -> T {
        let miss = (0..self.n_rows()).filter(|&i| self.get(i, j).is_none()).count();
        T::from_count(miss) / T::from_count(self.n_rows().max(1))
    }

    /// Mean and standard deviation over observed cells; sd is 1 when degenerate.
    pub fn column_moments(&self, j: usize) -> (T, T) {
        let vals: Vec<T> = (0..self.n_rows()).filter_map(|i| self.get(i, j)).collect();
        if vals.is_empty() {
            return (T::zero(), T::one());
        }
        let n = T::from_count(vals.len());
        let mean = vals.iter().copied().sum::<T>() / n;
        let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let sd = if var > T::zero() { var.sqrt() } else { T::one() };
        (mean, sd)
    }

    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let rows = (0..self.n_rows())
            .map(|i| keep.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        Self::new(
            keep.iter().map(|&j| self.columns[j].clone()).collect(),
            self.row_ids.clone(),
            rows,
        )
        .expect("selection keeps shape")
    }

    /// Dense values; `None` if any cell is missing.
    pub fn to_matrix(&self) -> Option<Matrix<T>> {
        let data: Option<Vec<T>> = self.cells.iter().copied().collect();
        Matrix::from_vec(self.n_rows(), self.n_cols(), data?).ok()
    }
}

/// Removes columns whose missing fraction is strictly above `threshold`.
pub fn drop_high_missingness<T: Real>(table: &NumericTable<T>, threshold: T) -> Result<(NumericTable<T>, Vec<String>)> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(Error::Contract("missingness threshold must lie in (0, 1]".into()));
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..table.n_cols()).partition(|&j| table.missing_fraction(j) <= threshold);
    if keep.is_empty() {
        return Err(Error::EmptyTable(format!(
            "every column exceeds missingness {threshold}"
        )));
    }
    let dropped = drop.iter().map(|&j| table.columns[j].clone()).collect();
    Ok((table.select_columns(&keep), dropped))
}

/// Nan-Euclidean distance over mutually observed standardized columns.
fn nan_euclidean<T: Real>(a: &[Option<T>], b: &[Option<T>], scale: &[(T, T)]) -> T {
    let mut sum = T::zero();
    let mut shared = 0usize;
    for j in 0..a.len() {
        if let (Some(x), Some(y)) = (a[j], b[j]) {
            let d = (x - y) / scale[j].1;
            sum += d * d;
            shared += 1;
        }
    }
    if shared == 0 {
        return T::infinity();
    }
    (sum * T::from_count(a.len()) / T::from_count(shared)).sqrt()
}

/// Fills missing categories by majority vote of the `k` nearest complete rows.
pub fn knn_impute_categorical<T: Real>(
    features: &NumericTable<T>,
    target: &[Option<String>],
    k: usize,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if target.len() != features.n_rows() {
        return Err(Error::Contract("target length differs from table rows".into()));
    }
    let donors: Vec<usize> = (0..target.len()).filter(|&i| target[i].is_some()).collect();
    if donors.is_empty() && target.iter().any(Option::is_none) {
        return Err(Error::ImputationImpossible("no row has an observed category".into()));
    }
    let scale: Vec<(T, T)> = (0..features.n_cols()).map(|j| features.column_moments(j)).collect();
    let mut out = Vec::with_capacity(target.len());
    for (i, t) in target.iter().enumerate() {
        if let Some(v) = t {
            out.push(v.clone());
            continue;
        }
        let mut cand: Vec<(T, &str)> = donors
            .iter()
            .map(|&d| {
                let dist = nan_euclidean(features.row(i), features.row(d), &scale);
                (dist, target[d].as_deref().unwrap())
            })
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("distances are not NaN").then(a.1.cmp(b.1)));
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, c) in cand.iter().take(k) {
            *votes.entry(c).or_default() += 1;
        }
        // BTreeMap order makes the first maximum the lexicographically smallest.
        let best = votes.iter().fold((None, 0), |acc, (c, &n)| if n > acc.1 { (Some(*c), n) } else { acc });
        out.push(best.0.expect("at least one donor").to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SoftImputeFit<T> {
    pub z: Matrix<T>,
    /// Objective after each iteration.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

fn objective<T: Real>(x: &Matrix<T>, observed: &[bool], z: &Matrix<T>, lambda: T, nuclear: T) -> T {
    let fit: T = x
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .zip(observed)
        .filter(|(_, &o)| o)
        .map(|((&a, &b), _)| (a - b) * (a - b))
        .sum();
    T::lit(0.5) * fit + lambda * nuclear
}

/// Largest singular value of `x` with unobserved cells set to zero.
pub fn zero_filled_sigma_max<T: Real>(x: &Matrix<T>, observed: &[bool]) -> T {
    let mut filled = x.clone();
    for (i, &o) in observed.iter().enumerate() {
        if !o {
            filled[(i / x.cols(), i % x.cols())] = T::zero();
        }
    }
    svd(&filled).s.first().copied().unwrap_or(T::zero())
}

/// Spectral-regularized matrix completion by iterative SVD soft-thresholding.
///
/// `observed` is row-major like `x`; unobserved entries of `x` are ignored.
pub fn soft_impute<T: Real>(
    x: &Matrix<T>,
    observed: &[bool],
    lambda: T,
    tol: T,
    max_iter: usize,
) -> Result<SoftImputeFit<T>> {
    if observed.len() != x.rows() * x.cols() {
        return Err(Error::Contract("mask shape differs from matrix".into()));
    }
    if lambda < T::zero() {
        return Err(Error::Contract("lambda must be non-negative".into()));
    }
    let (n, p) = (x.rows(), x.cols());
    for j in 0..p {
        if !(0..n).any(|i| observed[i * p + j]) {
            return Err(Error::ImputationImpossible(format!("column {j} has no observed entry")));
        }
    }
    let mut z = Matrix::zeros(n, p);
    let mut trace = Vec::new();
    let mut prev_obj = objective(x, observed, &z, lambda, T::zero());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut filled = z.clone();
        for (idx, &o) in observed.iter().enumerate() {
            if o {
                filled[(idx / p, idx % p)] = x[(idx / p, idx % p)];
            }
        }
        let dec = svd(&filled);
        let nuclear: T = dec.s.iter().map(|&s| (s - lambda).max(T::zero())).sum();
        let next = dec.reconstruct_with(|s| (s - lambda).max(T::zero()));
        let obj = objective(x, observed, &next, lambda, nuclear);
        // Majorization guarantees descent; allow only rounding slack.
        let slack = T::lit(1e-9) * (T::one() + prev_obj.abs());
        debug_assert!(obj <= prev_obj + slack, "objective rose: {prev_obj} -> {obj}");
        trace.push(obj);
        prev_obj = obj;
        let mut diff = T::zero();
        for (a, b) in next.as_slice().iter().zip(z.as_slice()) {
            diff += (*a - *b) * (*a - *b);
        }
        let norm = z.frobenius_norm();
        z = next;
        let rel = if norm > T::zero() {
            diff.sqrt() / norm
        } else if diff == T::zero() {
            T::zero()
        } else {
            T::infinity()
        };
        if rel < tol {
            converged = true;
            break;
        }
    }
    Ok(SoftImputeFit {
        z,
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct SoftImputeOptions<T> {
    /// `None` selects σ_max of the standardized zero-filled matrix over 50.
    pub lambda: Option<T>,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SoftImputeOptions<T> {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: T::lit(1e-5),
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult<T> {
    pub table: NumericTable<T>,
    pub imputed_counts: Vec<usize>,
    pub objective: T,
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: T,
}

/// SoftImpute on z-standardized columns; observed cells are returned unchanged.
pub fn complete_numeric<T: Real>(table: &NumericTable<T>, opts: &SoftImputeOptions<T>) -> Result<CompletionResult<T>> {
    let (n, p) = (table.n_rows(), table.n_cols());
    let moments: Vec<(T, T)> = (0..p).map(|j| table.column_moments(j)).collect();
    let mut x = Matrix::zeros(n, p);
    let mut observed = vec![false; n * p];
    for i in 0..n {
        for j in 0..p {
            if let Some(v) = table.get(i, j) {
                x[(i, j)] = (v - moments[j].0) / moments[j].1;
                observed[i * p + j] = true;
            }
        }
    }
    let imputed_counts: Vec<usize> = (0..p).map(|j| (0..n).filter(|&i| !observed[i * p + j]).count()).collect();
    if imputed_counts.iter().all(|&c| c == 0) {
        return Ok(CompletionResult {
            table: table.clone(),
            imputed_counts,
            objective: T::zero(),
            objective_trace: Vec::new(),
            iterations: 0,
            converged: true,
            lambda: T::zero(),
        });
    }
    let lambda = opts
        .lambda
        .unwrap_or_else(|| zero_filled_sigma_max(&x, &observed) / T::lit(50.0));
    let fit = soft_impute(&x, &observed, lambda, opts.tol, opts.max_iter)?;
    let rows = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| Some(table.get(i, j).unwrap_or(fit.z[(i, j)] * moments[j].1 + moments[j].0)))
                .collect()
        })
        .collect();
    Ok(CompletionResult {
        table: NumericTable::new(table.columns.clone(), table.row_ids.clone(), rows)?,
        imputed_counts,
        objective: fit.objective_trace.last().copied().unwrap_or(T::zero()),
        objective_trace: fit.objective_trace,
        iterations: fit.iterations,
        converged: fit.converged,
        lambda,
    })
}
