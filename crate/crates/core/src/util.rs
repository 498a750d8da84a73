use crate::scalar::Scalar;

/// Pairwise (tree) summation in a fixed order.
pub fn tree_sum<T: Scalar>(v: &[T]) -> T {
    const LEAF: usize = 32;
    if v.len() <= LEAF {
        return v.iter().copied().fold(T::zero(), |a, b| a + b);
    }
    let mid = v.len() / 2;
    tree_sum(&v[..mid]) + tree_sum(&v[mid..])
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median<T: Scalar>(v: &[T]) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / T::lit(2.0) })
}

/// Linearly interpolated `p`-quantile of a non-empty slice, `p` in `[0, 1]`.
pub fn quantile<T: Scalar>(v: &[T], p: f64) -> Option<T> {
    if v.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = p * (s.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    let hi = s[(i + 1).min(s.len() - 1)];
    Some(s[i] + (hi - s[i]) * T::lit(frac))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(tree_sum(&v), 499_500.0);
        assert_eq!(tree_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 0.0, 2.0, 1.0, 3.0];
        assert_eq!(quantile(&v, 0.25), Some(1.0));
        assert_eq!(quantile(&v, 0.5), median(&v));
        assert_eq!(quantile(&v, 0.875), Some(3.5));
        assert_eq!(quantile(&v, 1.5), None);
    }
}
