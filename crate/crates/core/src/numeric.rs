//! Small numeric utilities shared across estimators: compensated summation,
//! least-squares fits, the standard normal CDF and a Kolmogorov-Smirnov
//! distance. Nothing here knows about billiards or shifts.

/// Neumaier-compensated sum; order-sensitive, so callers fix the order.
pub fn comp_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "mean of empty slice");
    comp_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss = comp_sum(xs.iter().map(|x| (x - m) * (x - m)));
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Ordinary least squares y = a + b x; returns (intercept, slope).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    weighted_linear_fit(xs, ys, &vec![1.0; xs.len()])
}

/// Weighted least squares y = a + b x with weights `w` (typically 1/se^2);
/// returns (intercept, slope).
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], w: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), w.len());
    assert!(xs.len() >= 2, "fit needs at least two points");
    let sw = comp_sum(w.iter().copied());
    let mx = comp_sum(xs.iter().zip(w).map(|(x, w)| w * x)) / sw;
    let my = comp_sum(ys.iter().zip(w).map(|(y, w)| w * y)) / sw;
    let sxx = comp_sum(xs.iter().zip(w).map(|(x, w)| w * (x - mx) * (x - mx)));
    let sxy = comp_sum(
        xs.iter()
            .zip(ys)
            .zip(w)
            .map(|((x, y), w)| w * (x - mx) * (y - my)),
    );
    assert!(sxx > 0.0, "fit abscissae are degenerate");
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Standard error of the slope in an unweighted least-squares fit.
pub fn slope_std_error(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 3, "slope error needs at least three points");
    let (a, b) = linear_fit(xs, ys);
    let mx = mean(xs);
    let sxx = comp_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let ss_res = comp_sum(
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (a + b * x);
                r * r
            }),
    );
    (ss_res / (n - 2) as f64 / sxx).sqrt()
}

/// Complementary error function, fractional error below 1.2e-7 everywhere
/// (rational Chebyshev approximation).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
/// Sorts a copy of the sample internally.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty(), "KS distance of empty sample");
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Pearson chi-square statistic for observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    comp_sum(observed.iter().zip(expected).map(|(&o, &e)| {
        assert!(e > 0.0, "expected count must be positive");
        let d = o as f64 - e;
        d * d / e
    }))
}
