//! Exponentially scaled modified Bessel functions of the first kind.
//!
//! `e^(-x) I_nu(x)` for `nu` in {0, 1, 2}. Unscaled `I_nu` overflows `f64`
//! near x = 713, while the likelihood routinely evaluates arguments of order
//! 1e4, so everything downstream works with the scaled form plus the
//! linear exponent.
//!
//! Small arguments use the ascending power series (all terms positive, no
//! cancellation). Large arguments use the Hankel asymptotic expansion, which
//! at the crossover already converges below machine precision.

use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Below this argument the power series is used.
pub const SERIES_CROSSOVER: f64 = 25.0;

const MAX_SERIES_TERMS: usize = 500;
const MAX_ASYMPTOTIC_TERMS: usize = 200;

/// `e^(-x) I_order(x)` for `order` in {0, 1, 2} and finite `x >= 0`.
pub fn bessel_i_scaled<T: Scalar>(order: u32, x: T) -> Result<T> {
    if order > 2 {
        return domain(format!("bessel order {order} not supported (0, 1, 2)"));
    }
    if !x.is_finite() || x < T::zero() {
        return domain(format!("bessel argument must be finite and >= 0, got {x}"));
    }
    Ok(scaled_unchecked(order, x))
}

/// Same as [`bessel_i_scaled`] without argument validation.
#[inline]
pub(crate) fn scaled_unchecked<T: Scalar>(order: u32, x: T) -> T {
    scaled_with_crossover(order, x, T::lit(SERIES_CROSSOVER))
}

/// Evaluation with an explicit series/asymptotic crossover; exposed so the
/// self-test can demonstrate that a bad crossover is caught.
pub fn scaled_with_crossover<T: Scalar>(order: u32, x: T, crossover: T) -> T {
    if x == T::zero() {
        return if order == 0 { T::one() } else { T::zero() };
    }
    if x <= crossover {
        power_series(order, x) * (-x).exp()
    } else {
        asymptotic(order, x)
    }
}

fn power_series<T: Scalar>(order: u32, x: T) -> T {
    let half = x / T::lit(2.0);
    let q = half * half;
    let nu = T::from_u32(order).unwrap_or_else(T::zero);
    // (x/2)^nu / nu!
    let mut term = match order {
        0 => T::one(),
        1 => half,
        _ => q / T::lit(2.0),
    };
    let mut sum = term;
    for k in 1..MAX_SERIES_TERMS {
        let kf = T::from_usize_lossy(k);
        term *= q / (kf * (kf + nu));
        sum += term;
        if term <= sum * T::epsilon() * T::lit(0.5) {
            break;
        }
    }
    sum
}

fn asymptotic<T: Scalar>(order: u32, x: T) -> T {
    let four_nu2 = T::from_u32(4 * order * order).unwrap_or_else(T::zero);
    let eight_x = T::lit(8.0) * x;
    let mut term = T::one();
    let mut sum = T::one();
    let mut last = T::infinity();
    for k in 1..MAX_ASYMPTOTIC_TERMS {
        let odd = T::from_usize_lossy(2 * k - 1);
        term = -term * (four_nu2 - odd * odd) / (T::from_usize_lossy(k) * eight_x);
        let mag = term.abs();
        if mag >= last {
            // terms started growing; the series is only asymptotic
            break;
        }
        sum += term;
        if mag <= sum.abs() * T::epsilon() * T::lit(0.25) {
            break;
        }
        last = mag;
    }
    sum / (T::lit(2.0) * T::lit(std::f64::consts::PI) * x).sqrt()
}

/// `log(sqrt(s) * I_1(xi))` with `xi = 2 sqrt(y s / mu)` and its derivative in `s`.
///
/// This is the per-event building block of the likelihood: the negated value
/// is one event's contribution to the smooth cost, and `-d_ds` is the amount
/// added to the gradient of every bin in the event's neighborhood.
pub fn log_bessel_ratio_term<T: Scalar>(s: T, y: T, mu: T) -> Result<(T, T)> {
    if !(s > T::zero()) || !s.is_finite() {
        return domain(format!("cumulative rate s must be finite and > 0, got {s}"));
    }
    if !(y > T::zero()) || !y.is_finite() {
        return domain(format!("event weight y must be finite and > 0, got {y}"));
    }
    if !(mu > T::zero()) {
        return domain(format!("mu must be > 0, got {mu}"));
    }
    Ok(log_bessel_ratio_unchecked(s, y, mu))
}

#[inline]
pub(crate) fn log_bessel_ratio_unchecked<T: Scalar>(s: T, y: T, mu: T) -> (T, T) {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let xi = two * (y * s / mu).sqrt();
    let i1 = scaled_unchecked(1, xi);
    let value = half * s.ln() + i1.ln() + xi;
    let ratio = if xi < T::lit(1e-8) {
        // (I0 + I2) / (2 I1) = 1/xi + xi/4 + O(xi^3)
        xi.recip() + xi / T::lit(4.0)
    } else {
        (scaled_unchecked(0, xi) + scaled_unchecked(2, xi)) / (two * i1)
    };
    let d_ds = half / s + (y / (mu * s)).sqrt() * ratio;
    (value, d_ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    // e^-x I_nu(x) at 40 significant digits (mpmath), rounded to 20.
    pub(crate) const REFERENCE: &[(f64, [f64; 3])] = &[
        (0.0, [1.0, 0.0, 0.0]),
        (1e-12, [0.999999999999, 0.0000000000004999999999995, 0.000000000000000000000000124999999999875]),
        (1e-8, [0.999999990000000075, 0.0000000049999999500000003125, 0.000000000000000012499999875000000729]),
        (1e-4, [0.99990000749958335156, 0.000049995000312485417214, 0.0000000012498750072913541774]),
        (0.01, [0.99007458514970749901, 0.0049503110471182756055, 0.000012375726052377898592]),
        (0.1, [0.90710092578230109644, 0.045298446808809325007, 0.0011319896061145962936]),
        (0.5, [0.64503527044915006811, 0.15642080318487169714, 0.019352057709663279537]),
        (1.0, [0.4657596075936404365, 0.20791041534970844887, 0.049938776894223538763]),
        (2.0, [0.30850832255367103953, 0.21526928924893765916, 0.093239033304733380375]),
        (3.7, [0.21604944167297372642, 0.18383785802735623393, 0.11667762652305143781]),
        (7.5, [0.14831583007739550284, 0.13804121154855420249, 0.11150484033111438217]),
        (12.0, [0.11642622121344044298, 0.11146429929018097642, 0.097848837998410280243]),
        (19.9, [0.090008588864389594038, 0.087717102131706098075, 0.081192799705424157045]),
        (24.999, [0.080198394256804469958, 0.078577635747769436228, 0.073911931938490182488]),
        (25.001, [0.08019515293634487052, 0.078574590979157337904, 0.073909437086646271432]),
        (30.0, [0.073145946482237293929, 0.071916330598647554706, 0.068351524442327456949]),
        (45.5, [0.059307675999559350106, 0.05865228081142094024, 0.056729553766090297788]),
        (80.0, [0.044673291782275277952, 0.044393200058097465141, 0.043563461780822841323]),
        (150.0, [0.032600747883918049485, 0.032491896388848942482, 0.032167522598733396919]),
        (333.3, [0.021860270459169866212, 0.021827452102240338992, 0.02172929264877538473]),
        (700.0, [0.015081295651531357587, 0.015070519444716846949, 0.01503823702454645231]),
        (750.0, [0.014569742116743979078, 0.014560025713286366714, 0.014530915381508548767]),
        (1500.0, [0.010301504096519597732, 0.01029806968913303955, 0.010287773336934087012]),
        (1e4, [0.0039894726746047321064, 0.0039892731959836622645, 0.0039886748199655353739]),
        (12345.678, [0.0035905170260988794083, 0.003590371607202486488, 0.0035899353858508181051]),
        (1e5, [0.0012615678379767767669, 0.0012615615301218171273, 0.0012615426067461743306]),
        (5e5, [0.00056418972459531085254, 0.0005641891604053041618, 0.00056418746783866923132]),
        (1e6, [0.00039894233026924577878, 0.00039894213079803077631, 0.00039894153238498418272]),
    ];

    fn rel_err(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    /// 60-term power series for I_1 accumulated in double-double arithmetic.
    fn i1_series_dd(x: f64) -> f64 {
        // (hi, lo) two-sum accumulation; terms themselves are formed in f64
        let q = (x / 2.0) * (x / 2.0);
        let mut term = x / 2.0;
        let (mut hi, mut lo) = (term, 0.0f64);
        for k in 1..60 {
            term *= q / ((k * (k + 1)) as f64);
            let s = hi + term;
            let bp = s - hi;
            lo += (hi - (s - bp)) + (term - bp);
            hi = s;
        }
        hi + lo
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i_scaled(1, 0.0f64).unwrap(), 0.0);
        assert_eq!(bessel_i_scaled(0, 0.0f64).unwrap(), 1.0);
        assert_eq!(bessel_i_scaled(2, 0.0f64).unwrap(), 0.0);
    }

    #[test]
    fn order_one_at_two_matches_series_oracle() {
        let expected = (-2.0f64).exp() * i1_series_dd(2.0);
        let got = bessel_i_scaled(1, 2.0f64).unwrap();
        assert!(rel_err(got, expected) <= 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn reference_table_within_1e_12() {
        for &(x, vals) in REFERENCE {
            for (nu, &want) in vals.iter().enumerate() {
                let got = bessel_i_scaled(nu as u32, x).unwrap();
                assert!(rel_err(got, want) <= 1e-12, "nu={nu} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn continuous_across_crossover() {
        for nu in 0..3 {
            let x = SERIES_CROSSOVER;
            let series = scaled_with_crossover(nu, x, x + 1.0);
            let asymptotic = scaled_with_crossover(nu, x, x - 1.0);
            assert!(rel_err(series, asymptotic) < 1e-12, "nu={nu}: {series} vs {asymptotic}");
        }
    }

    #[test]
    fn f32_is_usable() {
        let got = bessel_i_scaled(1, 2.0f32).unwrap();
        assert!((got - 0.215_269_28).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bessel_i_scaled(0, -1.0f64).is_err());
        assert!(bessel_i_scaled(0, f64::NAN).is_err());
        assert!(bessel_i_scaled(0, f64::INFINITY).is_err());
        assert!(bessel_i_scaled(3, 1.0f64).is_err());
        assert!(log_bessel_ratio_term(0.0f64, 1.0, 1.0).is_err());
        assert!(log_bessel_ratio_term(1.0f64, 0.0, 1.0).is_err());
        assert!(log_bessel_ratio_term(-1.0f64, 1.0, 1.0).is_err());
    }

    #[test]
    fn ratio_term_at_xi_two() {
        // s = 1, y = mu: xi = 2, d_ds = 1/2 + (I0(2) + I2(2)) / (2 I1(2))
        let mu = 3.5;
        let (_, d) = log_bessel_ratio_term(1.0f64, mu, mu).unwrap();
        let r = REFERENCE.iter().find(|r| r.0 == 2.0).unwrap().1;
        let want = 0.5 + (r[0] + r[2]) / (2.0 * r[1]);
        assert!(rel_err(d, want) <= 1e-13, "{d} vs {want}");
    }

    #[test]
    fn ratio_term_matches_finite_difference() {
        let (s, y, mu) = (0.7f64, 3.1, 1.4);
        let h = 1e-6;
        let f = |s: f64| log_bessel_ratio_term(s, y, mu).unwrap().0;
        let fd = (f(s + h) - f(s - h)) / (2.0 * h);
        let (_, d) = log_bessel_ratio_term(s, y, mu).unwrap();
        assert!(rel_err(d, fd) <= 1e-6, "{d} vs {fd}");
    }

    #[test]
    fn ratio_term_small_argument_branch_is_continuous() {
        // straddle xi = 1e-8: y s / mu = 2.5e-17
        let y = 1.0f64;
        let mu = 1.0;
        let s_lo = 0.99 * 2.5e-17;
        let s_hi = 1.01 * 2.5e-17;
        let (_, d_lo) = log_bessel_ratio_term(s_lo, y, mu).unwrap();
        let (_, d_hi) = log_bessel_ratio_term(s_hi, y, mu).unwrap();
        // derivative ~ 1/s in this regime
        assert!(rel_err(d_lo * s_lo, 1.0) < 1e-6);
        assert!(rel_err(d_hi * s_hi, 1.0) < 1e-6);
    }

    #[test]
    fn ratio_term_large_argument_does_not_overflow() {
        let (v, d) = log_bessel_ratio_term(1e6f64, 1e6, 1.0).unwrap();
        assert!(v.is_finite() && d.is_finite());
        // xi = 2e6; log I1(xi) ~ xi - 0.5 log(2 pi xi)
        let xi = 2e6f64;
        let approx = 0.5 * 1e6f64.ln() + xi - 0.5 * (2.0 * std::f64::consts::PI * xi).ln();
        assert!(rel_err(v, approx) < 1e-9);
    }
}
