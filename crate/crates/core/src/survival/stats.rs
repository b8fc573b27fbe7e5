use crate::error::{Error, Result};
use crate::scalar::Real;

use super::cox::statrs_chi2_sf;

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust<T: Real>(p: &[T]) -> Vec<T> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("p-values are not NaN").then(a.cmp(&b)));
    let mut out = vec![T::zero(); m];
    let mut running = T::one();
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        let q = T::from_count(m) / T::from_count(rank) * p[i];
        running = running.min(q);
        out[i] = running;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult<T> {
    pub statistic: T,
    pub p_value: T,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> Result<KsResult<T>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("KS test needs two nonempty samples".into()));
    }
    let sorted = |v: &[T]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
        s
    };
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (T::from_count(sa.len()), T::from_count(sb.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < sa.len() || j < sb.len() {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        d = d.max((T::from_count(i) / na - T::from_count(j) / nb).abs());
    }
    let ne = (na * nb / (na + nb)).as_f64();
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d.as_f64();
    Ok(KsResult {
        statistic: d,
        p_value: T::lit(kolmogorov_sf(lambda)),
    })
}

/// Upper tail of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Series in exp(-π²/8λ²) converges fast for small λ.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6)
            .map(|k| ((2 * k - 1) as f64).powi(2))
            .map(|m| (m * y).exp())
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Result<T> {
    pub statistic: T,
    pub df: usize,
    pub p_value: T,
}

/// Pearson chi-square test of independence on an r×c table.
pub fn chi2_independence<T: Real>(table: &[Vec<T>]) -> Result<Chi2Result<T>> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!("{r}x{c} table has no degrees of freedom")));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::DegenerateTable("ragged table".into()));
    }
    let rows: Vec<T> = table.iter().map(|row| row.iter().copied().sum()).collect();
    let cols: Vec<T> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if rows.iter().chain(&cols).any(|&s| !(s > T::zero())) {
        return Err(Error::DegenerateTable("zero marginal total".into()));
    }
    let total: T = rows.iter().copied().sum();
    let mut statistic = T::zero();
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / total;
            let diff = table[i][j] - e;
            statistic += diff * diff / e;
        }
    }
    let df = (r - 1) * (c - 1);
    Ok(Chi2Result {
        statistic,
        df,
        p_value: statrs_chi2_sf(statistic, df),
    })
}
