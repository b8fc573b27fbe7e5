use crate::scalar::Real;

/// Knee of a convex decreasing curve; `None` when no candidate survives.
///
/// Follows the offline kneedle procedure: normalize both axes, flip y,
/// take the difference curve, then accept the first local maximum whose
/// difference falls below its threshold before the next local maximum.
pub fn kneedle<T: Real>(x: &[T], y: &[T], sensitivity: T) -> Option<T> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let norm = |v: &[T]| -> Option<Vec<T>> {
        let lo = v.iter().copied().fold(T::infinity(), T::min);
        let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
        let span = hi - lo;
        (span > T::zero()).then(|| v.iter().map(|&a| (a - lo) / span).collect())
    };
    let xn = norm(x)?;
    let yn = norm(y)?;
    let diff: Vec<T> = (0..n).map(|i| (T::one() - yn[i]) - xn[i]).collect();
    let dmax = diff.iter().copied().fold(T::neg_infinity(), T::max);
    if dmax <= T::lit(1e-9) {
        return None;
    }
    // Local extrema with clipped neighbours, as in argrelextrema(mode="clip").
    let at = |i: isize| diff[i.clamp(0, n as isize - 1) as usize];
    let is_max = |i: usize| diff[i] >= at(i as isize - 1) && diff[i] >= at(i as isize + 1);
    let is_min = |i: usize| diff[i] <= at(i as isize - 1) && diff[i] <= at(i as isize + 1);
    let maxima: Vec<usize> = (0..n).filter(|&i| is_max(i)).collect();
    let mean_dx = (0..n - 1).map(|i| xn[i + 1] - xn[i]).sum::<T>() / T::from_count(n - 1);
    let first = *maxima.first()?;

    let mut threshold = T::zero();
    let mut threshold_index = first;
    for i in first..n - 1 {
        if is_max(i) {
            threshold = diff[i] - sensitivity * mean_dx.abs();
            threshold_index = i;
        }
        if is_min(i) {
            threshold = T::zero();
        }
        if diff[i + 1] < threshold {
            return Some(x[threshold_index]);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks(n: usize) -> Vec<f64> {
        (1..=n).map(|k| k as f64).collect()
    }

    #[test]
    fn fixture_knee_is_four() {
        let y = [10.0, 6.0, 3.0, 1.5, 1.4, 1.3, 1.2, 1.1];
        assert_eq!(kneedle(&ks(8), &y, 1.0), Some(4.0));
    }

    #[test]
    fn straight_line_has_no_knee() {
        let y: Vec<f64> = ks(10).iter().map(|k| 10.0 - k).collect();
        assert_eq!(kneedle(&ks(10), &y, 1.0), None);
    }

    #[test]
    fn short_or_flat_curves_have_no_knee() {
        assert_eq!(kneedle(&[1.0, 2.0], &[2.0, 1.0], 1.0), None);
        assert_eq!(kneedle(&ks(4), &[1.0; 4], 1.0), None);
    }

    #[test]
    fn sharp_elbow_is_found() {
        let y: Vec<f64> = (1..=20).map(|k| if k <= 6 { 100.0 - 15.0 * k as f64 } else { 10.0 - 0.1 * k as f64 }).collect();
        assert_eq!(kneedle(&ks(20), &y, 1.0), Some(6.0));
    }
}
