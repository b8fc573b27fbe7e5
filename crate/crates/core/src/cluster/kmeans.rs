use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct KMeansOptions<T> {
    pub restarts: usize,
    pub tol: T,
    pub max_iter: usize,
    pub seed: u64,
}

impl<T: Real> Default for KMeansOptions<T> {
    fn default() -> Self {
        Self {
            restarts: 10,
            tol: T::lit(1e-8),
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub k: usize,
    pub centroids: Matrix<T>,
    pub assignments: Vec<usize>,
    pub wcss: T,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// WCSS after every assignment pass of the winning run.
    pub wcss_trace: Vec<T>,
}

impl<T: Real> Clustering<T> {
    /// Per-cluster sums of squared distances.
    pub fn cluster_sse(&self, points: &Matrix<T>) -> Vec<T> {
        let mut sse = vec![T::zero(); self.k];
        for (i, &c) in self.assignments.iter().enumerate() {
            sse[c] += sq_dist(points.row(i), self.centroids.row(c));
        }
        sse
    }
}

pub fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lower index.
pub fn nearest<T: Real>(point: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, sq_dist(point, centroids.row(0)));
    for c in 1..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Whether at least `k` distinct rows exist.
fn has_distinct<T: Real>(points: &Matrix<T>, k: usize) -> bool {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for i in 0..points.rows() {
        seen.insert(points.row(i).iter().map(|v| v.as_f64().to_bits()).collect());
        if seen.len() >= k {
            return true;
        }
    }
    false
}

fn check_feasible<T: Real>(points: &Matrix<T>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if !has_distinct(points, k) {
        return Err(Error::Infeasible(format!("k = {k} exceeds the number of distinct points")));
    }
    Ok(())
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// D² seeding: uniform first centroid, then proportional to squared distance.
pub fn kmeans_pp_init<T: Real>(points: &Matrix<T>, k: usize, seed: u64) -> Result<Matrix<T>> {
    check_feasible(points, k)?;
    Ok(pp_init(points, k, &mut rng_for(seed, 0)))
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` draws from
/// the D² distribution, judged by the resulting potential.
fn pp_init<T: Real>(points: &Matrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let (n, d) = (points.rows(), points.cols());
    let trials = 2 + (k as f64).ln() as usize;
    let mut centroids = Matrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<T> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().map(|v| v.as_f64()).sum();
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, v) in d2.iter().enumerate() {
                    let w = v.as_f64();
                    if w <= 0.0 {
                        continue;
                    }
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
                pick.expect("feasibility guarantees a point off the chosen centroids")
            })
            .collect();
        // lowest potential wins; ties go to the earlier draw
        let (best, best_d2) = candidates
            .iter()
            .map(|&cand| {
                let nd: Vec<T> = (0..n)
                    .into_par_iter()
                    .map(|i| sq_dist(points.row(i), points.row(cand)).min(d2[i]))
                    .collect();
                let pot: f64 = nd.iter().map(|v| v.as_f64()).sum();
                (cand, nd, pot)
            })
            .fold(None, |acc: Option<(usize, Vec<T>, f64)>, cur| match acc {
                Some(a) if a.2 <= cur.2 => Some(a),
                _ => Some(cur),
            })
            .map(|(c, nd, _)| (c, nd))
            .expect("at least two trials");
        centroids.row_mut(c).copy_from_slice(points.row(best));
        d2 = best_d2;
    }
    centroids
}

fn assign<T: Real>(points: &Matrix<T>, centroids: &Matrix<T>) -> Vec<(usize, T)> {
    (0..points.rows())
        .into_par_iter()
        .map(|i| nearest(points.row(i), centroids))
        .collect()
}

/// Lloyd iterations from the given centroids.
pub fn lloyd<T: Real>(points: &Matrix<T>, init: Matrix<T>, tol: T, max_iter: usize, seed: u64) -> Clustering<T> {
    let (n, d, k) = (points.rows(), points.cols(), init.rows());
    let mut centroids = init;
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let a = assign(points, &centroids);
        let wcss: T = a.iter().map(|p| p.1).sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(wcss <= prev + T::lit(1e-9) * (T::one() + prev), "WCSS rose: {prev} -> {wcss}");
        }
        trace.push(wcss);
        let mut sums: Matrix<T> = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in a.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut next = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] > 0 {
                let m = T::from_count(counts[c]);
                for (o, &s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *o = s / m;
                }
            }
        }
        // Empty clusters seize the points farthest from their centroids.
        let mut repaired = false;
        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .fold(None::<(usize, T)>, |best, i| match best {
                    Some((_, bd)) if a[i].1 <= bd => best,
                    _ => Some((i, a[i].1)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                next.row_mut(c).copy_from_slice(points.row(i));
                repaired = true;
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(next.row(c), centroids.row(c)).sqrt())
            .fold(T::zero(), T::max);
        centroids = next;
        if !repaired && shift < tol {
            converged = true;
            break;
        }
    }
    let a = assign(points, &centroids);
    let wcss: T = a.iter().map(|p| p.1).sum();
    if trace.last().is_none_or(|&w| w != wcss) {
        trace.push(wcss);
    }
    Clustering {
        k,
        centroids,
        assignments: a.into_iter().map(|p| p.0).collect(),
        wcss,
        seed,
        iterations,
        converged,
        wcss_trace: trace,
    }
}

fn best_of<T: Real>(runs: Vec<Clustering<T>>) -> Clustering<T> {
    runs.into_iter()
        .reduce(|best, r| if r.wcss < best.wcss { r } else { best })
        .expect("at least one run")
}

fn restarts<T: Real>(points: &Matrix<T>, k: usize, opts: &KMeansOptions<T>, stream_base: u64) -> Vec<Clustering<T>> {
    (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(opts.seed, stream_base + r as u64);
            let init = pp_init(points, k, &mut rng);
            lloyd(points, init, opts.tol, opts.max_iter, opts.seed)
        })
        .collect()
}

/// Best of `restarts` k-means++ initialized Lloyd runs.
pub fn kmeans_fit<T: Real>(points: &Matrix<T>, k: usize, opts: &KMeansOptions<T>) -> Result<Clustering<T>> {
    check_feasible(points, k)?;
    Ok(best_of(restarts(points, k, opts, 0)))
}

/// Previous centroids plus the point of the worst cluster farthest from its centroid.
fn split_worst<T: Real>(points: &Matrix<T>, prev: &Clustering<T>) -> Matrix<T> {
    let sse = prev.cluster_sse(points);
    let worst = (0..prev.k).fold(0, |b, c| if sse[c] > sse[b] { c } else { b });
    let far = (0..points.rows())
        .filter(|&i| prev.assignments[i] == worst)
        .fold(None::<(usize, T)>, |best, i| {
            let d = sq_dist(points.row(i), prev.centroids.row(worst));
            match best {
                Some((_, bd)) if d <= bd => best,
                _ => Some((i, d)),
            }
        })
        .map_or(0, |p| p.0);
    let d = points.cols();
    let mut data = prev.centroids.as_slice().to_vec();
    data.extend_from_slice(points.row(far));
    Matrix::from_vec(prev.k + 1, d, data).expect("shape")
}

/// WCSS curve with every per-k clustering.
#[derive(Debug, Clone)]
pub struct Sweep<T> {
    pub ks: Vec<usize>,
    pub wcss: Vec<T>,
    pub fits: Vec<Clustering<T>>,
}

/// Fits each k ascending; each k also runs a warm start from the previous
/// solution with its worst cluster split, which makes the curve non-increasing.
pub fn sweep_k<T: Real>(points: &Matrix<T>, ks: std::ops::RangeInclusive<usize>, opts: &KMeansOptions<T>) -> Result<Sweep<T>> {
    let mut out = Sweep {
        ks: Vec::new(),
        wcss: Vec::new(),
        fits: Vec::new(),
    };
    for k in ks {
        check_feasible(points, k)?;
        let mut runs = restarts(points, k, opts, (k as u64) << 32);
        if let Some(prev) = out.fits.last() {
            if prev.k + 1 == k {
                runs.push(lloyd(points, split_worst(points, prev), opts.tol, opts.max_iter, opts.seed));
            }
        }
        let best = best_of(runs);
        if let Some(&prev) = out.wcss.last() {
            debug_assert!(best.wcss <= prev, "sweep curve rose at k = {k}");
        }
        out.ks.push(k);
        out.wcss.push(best.wcss);
        out.fits.push(best);
    }
    Ok(out)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per: usize) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (l, c) in centers.iter().enumerate() {
            for _ in 0..per {
                data.push(c[0] + noise.sample(&mut rng));
                data.push(c[1] + noise.sample(&mut rng));
                labels.push(l);
            }
        }
        (Matrix::from_vec(labels.len(), 2, data).unwrap(), labels)
    }

    #[test]
    fn init_examples() {
        let p = Matrix::from_rows(&[vec![0.0, 0.0], vec![100.0, 100.0]]).unwrap();
        let c = kmeans_pp_init(&p, 2, 5).unwrap();
        let mut rows = vec![c.row(0).to_vec(), c.row(1).to_vec()];
        rows.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![100.0, 100.0]]);
        assert_eq!(kmeans_pp_init(&p, 2, 5).unwrap(), c);
        assert!(matches!(kmeans_pp_init(&p, 3, 5), Err(Error::Infeasible(_))));
        let one = kmeans_pp_init(&p, 1, 9).unwrap();
        assert!(one.row(0) == p.row(0) || one.row(0) == p.row(1));
    }

    #[test]
    fn degenerate_fits_have_zero_wcss() {
        let p = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        assert_eq!(kmeans_fit(&p, 3, &KMeansOptions::default()).unwrap().wcss, 0.0);
        let same = Matrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        assert_eq!(kmeans_fit(&same, 1, &KMeansOptions::default()).unwrap().wcss, 0.0);
    }

    #[test]
    fn blobs_are_recovered() {
        let (p, labels) = blobs(1, 50);
        let fit = kmeans_fit(&p, 3, &KMeansOptions { seed: 3, ..Default::default() }).unwrap();
        assert!(adjusted_rand_index(&fit.assignments, &labels) > 0.99);
        assert!(fit.converged);
        for i in 0..p.rows() {
            let own = sq_dist(p.row(i), fit.centroids.row(fit.assignments[i]));
            for c in 0..3 {
                assert!(own <= sq_dist(p.row(i), fit.centroids.row(c)));
            }
        }
    }

    #[test]
    fn sweep_is_monotone() {
        let (p, _) = blobs(2, 30);
        let s = sweep_k(&p, 1..=8, &KMeansOptions { restarts: 2, seed: 1, ..Default::default() }).unwrap();
        assert!(s.wcss.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(s.ks, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.5714285714285715).abs() < 1e-12);
    }

    #[test]
    fn nearest_prefers_lower_id_on_ties() {
        let c = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(nearest(&[0.0], &c).0, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lloyd_trace_never_rises(seed in 0u64..1000, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..120).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = Matrix::from_vec(40, 3, data).unwrap();
            let fit = kmeans_fit(&p, k, &KMeansOptions { restarts: 2, seed, ..Default::default() }).unwrap();
            prop_assert!(fit.wcss_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let direct: f64 = (0..40).map(|i| sq_dist(p.row(i), fit.centroids.row(fit.assignments[i]))).sum();
            prop_assert!((direct - fit.wcss).abs() <= 1e-9 * (1.0 + direct));
        }
    }
}
