use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Continuous,
    Binary,
}

/// Complete (imputed) covariate table in declared column order.
#[derive(Debug, Clone)]
pub struct CovariateTable<T> {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    pub x: Matrix<T>,
}

impl<T: Real> CovariateTable<T> {
    /// Kinds inferred from values: a column of zeros and ones is binary.
    pub fn new(names: Vec<String>, x: Matrix<T>) -> Result<Self> {
        if names.len() != x.cols() {
            return Err(Error::Contract("covariate names and columns disagree".into()));
        }
        let kinds = (0..x.cols())
            .map(|j| {
                let binary = (0..x.rows()).all(|i| {
                    let v = x[(i, j)];
                    v == T::zero() || v == T::one()
                });
                if binary {
                    CovariateKind::Binary
                } else {
                    CovariateKind::Continuous
                }
            })
            .collect();
        Ok(Self { names, kinds, x })
    }

    pub fn select(&self, columns: &[usize]) -> Self {
        let mut x = Matrix::zeros(self.x.rows(), columns.len());
        for i in 0..self.x.rows() {
            for (c, &j) in columns.iter().enumerate() {
                x[(i, c)] = self.x[(i, j)];
            }
        }
        Self {
            names: columns.iter().map(|&j| self.names[j].clone()).collect(),
            kinds: columns.iter().map(|&j| self.kinds[j]).collect(),
            x,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let p = self.x.cols();
        let mut data = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            data.extend_from_slice(self.x.row(i));
        }
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            x: Matrix::from_vec(rows.len(), p, data).expect("row selection keeps shape"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    Collinear { partner: String },
    RareBinary,
    HighMissing,
    Constant,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::Collinear { partner } => write!(f, "collinear({partner})"),
            DropReason::RareBinary => f.write_str("rare_binary"),
            DropReason::HighMissing => f.write_str("high_missing"),
            DropReason::Constant => f.write_str("constant"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreeningReport {
    pub kept: Vec<String>,
    pub dropped: Vec<(String, DropReason)>,
}

impl ScreeningReport {
    /// Adds columns removed earlier for missingness.
    pub fn with_high_missing(mut self, names: &[String]) -> Self {
        self.dropped
            .extend(names.iter().map(|n| (n.clone(), DropReason::HighMissing)));
        self
    }
}

#[derive(Debug, Clone)]
pub struct ScreenConfig<T> {
    pub max_abs_correlation: T,
    pub min_binary_events: usize,
}

impl<T: Real> Default for ScreenConfig<T> {
    fn default() -> Self {
        Self {
            max_abs_correlation: T::lit(0.7),
            min_binary_events: 5,
        }
    }
}

pub fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::from_count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa > T::zero() && sbb > T::zero() {
        sab / (saa * sbb).sqrt()
    } else {
        T::zero()
    }
}

/// Drops rare binaries, constants and later members of collinear pairs.
pub fn screen_covariates<T: Real>(
    table: &CovariateTable<T>,
    events: &[bool],
    cfg: &ScreenConfig<T>,
) -> Result<(CovariateTable<T>, ScreeningReport)> {
    if events.len() != table.x.rows() {
        return Err(Error::Contract("events and covariate rows disagree".into()));
    }
    let mut report = ScreeningReport::default();
    let mut kept: Vec<usize> = Vec::new();
    let columns: Vec<Vec<T>> = (0..table.x.cols()).map(|j| table.x.column(j)).collect();
    for (j, col) in columns.iter().enumerate() {
        let name = &table.names[j];
        let first = col.first().copied();
        if col.iter().all(|&v| Some(v) == first) {
            report.dropped.push((name.clone(), DropReason::Constant));
            continue;
        }
        match table.kinds[j] {
            CovariateKind::Binary => {
                let positives = col
                    .iter()
                    .zip(events)
                    .filter(|(&v, &e)| e && v == T::one())
                    .count();
                if positives < cfg.min_binary_events {
                    report.dropped.push((name.clone(), DropReason::RareBinary));
                    continue;
                }
            }
            CovariateKind::Continuous => {
                let partner = kept.iter().copied().find(|&k| {
                    table.kinds[k] == CovariateKind::Continuous
                        && pearson(&columns[k], col).abs() > cfg.max_abs_correlation
                });
                if let Some(k) = partner {
                    report.dropped.push((
                        name.clone(),
                        DropReason::Collinear {
                            partner: table.names[k].clone(),
                        },
                    ));
                    continue;
                }
            }
        }
        kept.push(j);
        report.kept.push(name.clone());
    }
    if kept.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok((table.select(&kept), report))
}
