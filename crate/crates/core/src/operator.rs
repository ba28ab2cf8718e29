//! Truncated renewal operator and its counting identities.
//!
//! On sequence space the operator `R` has the weight vector `r` as its first
//! column and ones on the superdiagonal: `(Rx)_i = r_i x_1 + x_{i+1}`. Its
//! powers count loops: `(R^n)_{1,1} = a_n`, the number of length-n first
//! return words, which also satisfies the convolution `a_n = sum_{k} r_k
//! a_{n-k}` with `a_0 = 1`. Conjugating by `H = diag(e^{-h}, e^{-2h}, ...)`
//! replaces `r` by `r'_n = r_n e^{-hn}`, giving the rescaled action
//! `e^{-hn} R^n = H^{-1} (R')^n H` whose L1 dynamics exposes the dichotomy:
//! column sum above 1 means growth, below 1 decay, exactly 1 a conserved
//! norm, because `|R'x|_1 = |x|_1 + (sum r' - 1) x_1` for `x >= 0`.

use crate::numeric;
use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("weights must be finite, nonnegative, with positive last entry")]
    BadWeights,
    #[error("column weights are not integral; exact counting needs integer weights")]
    NonIntegralWeights,
    #[error("truncation leak: support touches index {index} of a rank-{rank} truncation")]
    TruncationLeak { index: usize, rank: usize },
    #[error("probe needs a nonzero, nonnegative start vector")]
    BadStartVector,
}

fn check_weights(r: &[f64]) -> Result<(), OperatorError> {
    if r.is_empty()
        || r.iter().any(|x| !x.is_finite() || *x < 0.0)
        || *r.last().expect("nonempty") == 0.0
    {
        return Err(OperatorError::BadWeights);
    }
    Ok(())
}

/// Dense truncation of the renewal operator to rank `n`: first column `r`
/// (zero-padded or an error if it does not fit), superdiagonal ones.
#[derive(Debug, Clone)]
pub struct TruncatedRenewalMatrix {
    rank: usize,
    column: Vec<f64>,
}

impl TruncatedRenewalMatrix {
    pub fn new(column: &[f64], rank: usize) -> Result<Self, OperatorError> {
        check_weights(column)?;
        if column.len() > rank {
            return Err(OperatorError::TruncationLeak {
                index: column.len(),
                rank,
            });
        }
        let mut c = column.to_vec();
        c.resize(rank, 0.0);
        Ok(Self { rank, column: c })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `(Rx)_i = r_i x_1 + x_{i+1}`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rank);
        let x1 = x[0];
        (0..self.rank)
            .map(|i| self.column[i] * x1 + if i + 1 < self.rank { x[i + 1] } else { 0.0 })
            .collect()
    }
}

/// `a_0..a_{n_max}` by the first-return convolution, exact in big integers.
/// Weights must be integral.
pub fn count_sequence_exact(r: &[f64], n_max: usize) -> Result<Vec<BigUint>, OperatorError> {
    check_weights(r)?;
    let ints: Vec<u64> = r
        .iter()
        .map(|&x| {
            if (x - x.round()).abs() < 1e-9 && x.round() >= 0.0 {
                Ok(x.round() as u64)
            } else {
                Err(OperatorError::NonIntegralWeights)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut a = vec![BigUint::from(0u32); n_max + 1];
    a[0] = BigUint::from(1u32);
    for n in 1..=n_max {
        let mut acc = BigUint::from(0u32);
        for (k, &rk) in ints.iter().enumerate() {
            let k = k + 1;
            if k > n {
                break;
            }
            if rk > 0 {
                acc += &a[n - k] * BigUint::from(rk);
            }
        }
        a[n] = acc;
    }
    Ok(a)
}

/// `a_0..a_{n_max}` by the convolution in f64, with a crude forward error
/// bound per term (each `a_n` costs at most `2 support` rounded operations).
pub fn count_sequence_f64(r: &[f64], n_max: usize) -> Result<(Vec<f64>, Vec<f64>), OperatorError> {
    check_weights(r)?;
    let mut a = vec![0.0f64; n_max + 1];
    let mut err = vec![0.0f64; n_max + 1];
    a[0] = 1.0;
    for n in 1..=n_max {
        let mut acc = 0.0;
        let mut acc_err = 0.0;
        for (k, &rk) in r.iter().enumerate() {
            let k = k + 1;
            if k > n {
                break;
            }
            acc += rk * a[n - k];
            acc_err += rk * err[n - k];
        }
        a[n] = acc;
        err[n] = acc_err + 2.0 * r.len() as f64 * f64::EPSILON * acc.abs();
    }
    Ok((a, err))
}

/// `(R^n)_{1,1}` for n = 0..=n_max via explicit big-integer matrix powers.
/// Independent of the convolution path; used to cross-check it.
pub fn matrix_power_counts(r: &[f64], n_max: usize) -> Result<Vec<BigUint>, OperatorError> {
    check_weights(r)?;
    let ints: Vec<BigUint> = r
        .iter()
        .map(|&x| {
            if (x - x.round()).abs() < 1e-9 && x.round() >= 0.0 {
                Ok(BigUint::from(x.round() as u64))
            } else {
                Err(OperatorError::NonIntegralWeights)
            }
        })
        .collect::<Result<_, _>>()?;
    // rank n_max + 1 keeps every path of length <= n_max inside the block
    let rank = (n_max + 1).max(ints.len());
    let mut column = vec![BigUint::from(0u32); rank];
    column[..ints.len()].clone_from_slice(&ints);

    let zero = BigUint::from(0u32);
    // power accumulates R^n as a dense matrix; row i of R*M is
    // column_i * row_1(M) + row_{i+1}(M).
    let mut power: Vec<Vec<BigUint>> = (0..rank)
        .map(|i| {
            let mut row = vec![zero.clone(); rank];
            row[i] = BigUint::from(1u32);
            row
        })
        .collect();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(BigUint::from(1u32));
    for _ in 1..=n_max {
        let first_row = power[0].clone();
        let mut next: Vec<Vec<BigUint>> = Vec::with_capacity(rank);
        for i in 0..rank {
            let mut row: Vec<BigUint> = if i + 1 < rank {
                power[i + 1].clone()
            } else {
                vec![zero.clone(); rank]
            };
            if column[i] != zero {
                for (cell, f) in row.iter_mut().zip(first_row.iter()) {
                    *cell += &column[i] * f;
                }
            }
            next.push(row);
        }
        power = next;
        out.push(power[0][0].clone());
    }
    Ok(out)
}

/// Renewal-theorem diagnostic: the rescaled counts `a_n lambda^{-n}`, which
/// approach `1/S` (`S` the mean return time at `lambda`).
#[derive(Debug, Clone, Serialize)]
pub struct RenewalLimit {
    pub rescaled: Vec<f64>,
    pub limit: f64,
}

/// Computes `a_n lambda^{-n}` by the scaled recursion
/// `u_n = sum_k (r_k lambda^{-k}) u_{n-k}`, avoiding overflow, and the
/// predicted limit `1/S`.
pub fn renewal_limit(r: &[f64], lambda: f64, n_max: usize) -> Result<RenewalLimit, OperatorError> {
    check_weights(r)?;
    if !(lambda > 1.0) {
        return Err(OperatorError::BadWeights);
    }
    let scaled: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, &rk)| rk * lambda.powi(-(i as i32 + 1)))
        .collect();
    let mut u = vec![0.0f64; n_max + 1];
    u[0] = 1.0;
    for n in 1..=n_max {
        let mut acc = 0.0;
        for (k, &sk) in scaled.iter().enumerate() {
            let k = k + 1;
            if k > n {
                break;
            }
            acc += sk * u[n - k];
        }
        u[n] = acc;
    }
    let s = numeric::comp_sum(
        r.iter()
            .enumerate()
            .map(|(i, &rk)| (i + 1) as f64 * rk * lambda.powi(-(i as i32 + 1))),
    );
    Ok(RenewalLimit {
        rescaled: u,
        limit: 1.0 / s,
    })
}

/// Verdict of the rescaled-count boundedness probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthVerdict {
    Decay,
    Bounded,
    Growth,
}

/// Boundedness check for `u_n = a_n e^{-h n}` at a candidate rate `h`.
#[derive(Debug, Clone, Serialize)]
pub struct RateProbe {
    pub verdict: GrowthVerdict,
    /// `sum r_n e^{-hn} - 1`; positive residual forces growth, negative decay.
    pub residual: f64,
    /// min/max of `u_n` over the upper third of the window.
    pub window_min: f64,
    pub window_max: f64,
    pub rescaled: Vec<f64>,
}

/// Probes whether `a_n e^{-hn}` stays bounded away from zero and infinity
/// over `n <= n_max`, and cross-reports the series residual at `e^h`. The
/// trichotomy (residual sign vs observed trend) is the practical test for
/// whether `h` is the true growth rate.
pub fn verify_growth_rate(r: &[f64], h: f64, n_max: usize) -> Result<RateProbe, OperatorError> {
    check_weights(r)?;
    if n_max < 8 {
        return Err(OperatorError::BadStartVector);
    }
    let lim = renewal_limit(r, h.exp(), n_max)?;
    let u = lim.rescaled;
    let residual = numeric::comp_sum(
        r.iter()
            .enumerate()
            .map(|(i, &rk)| rk * (-h * (i as f64 + 1.0)).exp()),
    ) - 1.0;
    // disjoint windows: trend shows up as lower third vs upper third
    let first = &u[1..=n_max / 3];
    let second = &u[2 * n_max / 3..=n_max];
    let fmax = first.iter().cloned().fold(f64::MIN, f64::max);
    let fmin = first.iter().cloned().fold(f64::MAX, f64::min);
    let smax = second.iter().cloned().fold(f64::MIN, f64::max);
    let smin = second.iter().cloned().fold(f64::MAX, f64::min);
    let verdict = if smin > 1.5 * fmax {
        GrowthVerdict::Growth
    } else if smax < fmin / 1.5 {
        GrowthVerdict::Decay
    } else {
        GrowthVerdict::Bounded
    };
    Ok(RateProbe {
        verdict,
        residual,
        window_min: smin,
        window_max: smax,
        rescaled: u,
    })
}

/// Trajectory summary of the conjugated-column iteration.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyProbe {
    /// `sum r'_n - 1`: the conserved-norm defect per unit of first-entry mass.
    pub column_defect: f64,
    pub verdict: GrowthVerdict,
    /// L1 norms along the trajectory (index 0 is the start vector).
    pub norms: Vec<f64>,
    /// Steps taken before the norm left [init/10, 10*init], if it did.
    pub exit_step: Option<usize>,
}

/// Iterates `x <- R' x` for the conjugated column `r'` and classifies the
/// L1-norm trajectory: conserved when `sum r' = 1` (the critical case),
/// 10x contraction or growth otherwise, within `n_steps`.
pub fn dichotomy_probe(
    r_prime: &[f64],
    x0: &[f64],
    n_steps: usize,
) -> Result<DichotomyProbe, OperatorError> {
    check_weights(r_prime)?;
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(OperatorError::BadStartVector);
    }
    let norm0 = numeric::comp_sum(x0.iter().copied());
    if norm0 <= 0.0 {
        return Err(OperatorError::BadStartVector);
    }
    let rank = (r_prime.len() + n_steps).max(x0.len() + 1);
    let matrix = TruncatedRenewalMatrix::new(r_prime, rank)?;
    let mut x = x0.to_vec();
    x.resize(rank, 0.0);
    let mut norms = Vec::with_capacity(n_steps + 1);
    norms.push(norm0);
    let mut exit_step = None;
    for step in 1..=n_steps {
        x = matrix.apply(&x);
        let n = numeric::comp_sum(x.iter().copied());
        norms.push(n);
        if exit_step.is_none() && (n >= 10.0 * norm0 || n <= norm0 / 10.0) {
            exit_step = Some(step);
        }
    }
    let column_defect = numeric::comp_sum(r_prime.iter().copied()) - 1.0;
    let last = *norms.last().expect("nonempty");
    let verdict = if last >= 10.0 * norm0 {
        GrowthVerdict::Growth
    } else if last <= norm0 / 10.0 {
        GrowthVerdict::Decay
    } else {
        GrowthVerdict::Bounded
    };
    Ok(DichotomyProbe {
        column_defect,
        verdict,
        norms,
        exit_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const R12: [f64; 2] = [1.0, 2.0];

    #[test]
    fn counts_for_r_one_two_match_hand_values() {
        // a_n = a_{n-1} + 2 a_{n-2}: 1, 1, 3, 5, 11, 21, ...
        let a = count_sequence_exact(&R12, 5).unwrap();
        let expect: Vec<u64> = vec![1, 1, 3, 5, 11, 21];
        for (got, want) in a.iter().zip(&expect) {
            assert_eq!(got, &BigUint::from(*want));
        }
    }

    #[test]
    fn counts_match_generating_function_closed_form() {
        // 1/(1 - z - 2z^2) expands with a_n = (2^{n+1} + (-1)^n) / 3.
        let a = count_sequence_exact(&R12, 20).unwrap();
        for (n, got) in a.iter().enumerate() {
            let two = BigUint::from(2u32).pow(n as u32 + 1);
            let want = if n % 2 == 0 {
                (two + BigUint::from(1u32)) / BigUint::from(3u32)
            } else {
                (two - BigUint::from(1u32)) / BigUint::from(3u32)
            };
            assert_eq!(got, &want, "closed form mismatch at n = {n}");
        }
    }

    #[test]
    fn matrix_powers_agree_with_convolution_exactly() {
        let conv = count_sequence_exact(&R12, 30).unwrap();
        let mat = matrix_power_counts(&R12, 30).unwrap();
        assert_eq!(conv, mat);
        // a second alphabet: full shift on 3 symbols has a_n = 3^n
        let conv3 = count_sequence_exact(&[3.0], 12).unwrap();
        let mat3 = matrix_power_counts(&[3.0], 12).unwrap();
        assert_eq!(conv3, mat3);
        assert_eq!(conv3[12], BigUint::from(3u64).pow(12));
    }

    #[test]
    fn f64_counts_track_exact_counts() {
        let (a, err) = count_sequence_f64(&R12, 40).unwrap();
        let exact = count_sequence_exact(&R12, 40).unwrap();
        for n in 0..=40 {
            let want: f64 = exact[n].to_string().parse().unwrap();
            assert!(
                (a[n] - want).abs() <= err[n].max(1e-6 * want),
                "n = {n}: {} vs {want} (err bound {})",
                a[n],
                err[n]
            );
        }
    }

    #[test]
    fn rescaled_counts_approach_inverse_mean_return_time() {
        // r = (1,2): lambda = 2, S = 3/2, a_n 2^{-n} -> 2/3.
        let lim = renewal_limit(&R12, 2.0, 20).unwrap();
        assert!((lim.limit - 2.0 / 3.0).abs() <= 1e-12);
        let last = lim.rescaled[20];
        assert!(
            (last - lim.limit).abs() <= 0.01 * lim.limit,
            "a_20 2^{{-20}} = {last} should be within 1% of 2/3"
        );
        // rates at or below 1 are rejected
        let bad = renewal_limit(&[4.0], 1.0, 10).map(|_| ()).unwrap_err();
        assert_eq!(bad, OperatorError::BadWeights);
        // full shift r = (k): a_n = k^n, so the rescaled counts are 1 exactly
        let shift = renewal_limit(&[4.0], 4.0, 10).unwrap();
        assert!(shift.rescaled.iter().all(|&u| (u - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn growth_rate_probe_reports_trichotomy() {
        let ln2 = 2.0f64.ln();
        let probe = verify_growth_rate(&R12, ln2, 30).unwrap();
        assert_eq!(probe.verdict, GrowthVerdict::Bounded);
        assert!(probe.residual.abs() <= 1e-12);
        // a_n 2^{-n} lives in [1/2, 1] with limit 2/3
        assert!(probe.window_min >= 0.5 && probe.window_max <= 1.0);

        let low = verify_growth_rate(&R12, ln2 - 0.1, 30).unwrap();
        assert_eq!(low.verdict, GrowthVerdict::Growth);
        assert!(low.residual > 0.0);

        let high = verify_growth_rate(&R12, ln2 + 0.1, 30).unwrap();
        assert_eq!(high.verdict, GrowthVerdict::Decay);
        assert!(high.residual < 0.0);
    }

    #[test]
    fn critical_column_conserves_l1_norm_exactly() {
        // r' = r_n lambda^{-n} at the true rate: (1/2, 1/2); sum = 1.
        let probe = dichotomy_probe(&[0.5, 0.5], &[1.0], 64).unwrap();
        assert_eq!(probe.verdict, GrowthVerdict::Bounded);
        assert!(probe.column_defect.abs() <= 1e-15);
        for n in &probe.norms {
            assert!((n - 1.0).abs() <= 1e-12, "critical norm drifted: {n}");
        }
    }

    #[test]
    fn scaled_columns_contract_or_grow_tenfold() {
        let shrink = dichotomy_probe(&[0.45, 0.45], &[1.0], 200).unwrap();
        assert_eq!(shrink.verdict, GrowthVerdict::Decay);
        assert!(shrink.exit_step.is_some());
        let grow = dichotomy_probe(&[0.55, 0.55], &[1.0], 200).unwrap();
        assert_eq!(grow.verdict, GrowthVerdict::Growth);
        assert!(grow.exit_step.is_some());
    }

    #[test]
    fn truncation_leak_is_detected_at_construction() {
        assert!(matches!(
            TruncatedRenewalMatrix::new(&[1.0, 1.0, 1.0], 2),
            Err(OperatorError::TruncationLeak { .. })
        ));
    }

    #[test]
    fn non_integral_weights_refuse_exact_counting() {
        assert_eq!(
            count_sequence_exact(&[1.5], 4).unwrap_err(),
            OperatorError::NonIntegralWeights
        );
        assert_eq!(
            matrix_power_counts(&[1.5], 4).unwrap_err(),
            OperatorError::NonIntegralWeights
        );
        // but the f64 path accepts them
        assert!(count_sequence_f64(&[1.5], 4).is_ok());
    }
}
