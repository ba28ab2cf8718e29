//! Monte Carlo harness over the renewal shift: correlation decay, central
//! limit behavior of block sums, and entropy along sample paths.
//!
//! Observables are depth-k cylinder functions of the form
//! `sum_j c_j g(s_{i+j})` for a per-symbol rule `g`; they are locally
//! constant, hence Hoelder for the separation metric, and their stationary
//! means and (depth-1) variances integrate exactly against the one-cylinder
//! masses. Estimators are deterministic given a seed: work is split into
//! chunks that each own a ChaCha stream, and chunk results are folded in
//! index order, so the thread count never changes a reported number.

use crate::entropy::{predict_rates, EntropyError, RatePrediction};
use crate::exec;
use crate::numeric;
use crate::renewal::{RenewalMeasure, Symbol, SymbolStream};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("observable is not centered: exact mean {mean} exceeds {tol}")]
    NonCentered { mean: f64, tol: f64 },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("zero asymptotic variance: {0}")]
    ZeroVariance(String),
    #[error("label parity needs integral weights")]
    LabelParityNeedsIntegral,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Rates(#[from] EntropyError),
}

/// Per-symbol value rule feeding an [`Observable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SymbolRule {
    /// 1 on return symbols, 0 on climbs.
    ReturnIndicator,
    /// `min(node, cap)` as a float; grows with ladder depth.
    NodeDepth { cap: u32 },
    /// `ln(1 + node)`: non-lattice values, which keeps normalized block
    /// sums off a lattice and KS distances clean.
    LogNode,
    /// +1 for odd return labels, -1 for even, 0 on climbs; needs integral
    /// weights so labels exist.
    LabelParity,
}

impl SymbolRule {
    fn value(&self, s: Symbol) -> f64 {
        match (*self, s) {
            (SymbolRule::ReturnIndicator, sym) => {
                if sym.is_return() {
                    1.0
                } else {
                    0.0
                }
            }
            (SymbolRule::NodeDepth { cap }, sym) => sym.node().min(cap) as f64,
            (SymbolRule::LogNode, sym) => (1.0 + sym.node() as f64).ln(),
            (SymbolRule::LabelParity, Symbol::Return { label: Some(l), .. }) => {
                if l % 2 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            (SymbolRule::LabelParity, _) => 0.0,
        }
    }

    /// Exact stationary mean of the rule against the one-cylinder masses.
    fn exact_mean(&self, m: &RenewalMeasure) -> f64 {
        self.exact_moment(m, 1)
    }

    /// Exact stationary `E[g^power]`, `power` = 1 or 2.
    fn exact_moment(&self, m: &RenewalMeasure, power: u32) -> f64 {
        let lambda = m.lambda();
        let s = m.mean_return_time();
        let terms = (1..=m.node_count()).flat_map(|n| {
            let climb = Symbol::Climb { node: n as u32 };
            let climb_term = m.w(n + 1) * self.value(climb).powi(power as i32);
            let edge_mass = lambda.powi(-(n as i32)) / s;
            let r_n = m.spec().weights()[n - 1];
            let return_term = match self {
                SymbolRule::LabelParity => {
                    // labels 1..=r: parity sum is r mod 2; squares sum to r
                    let r = r_n.round();
                    let label_sum = if power == 1 { (r as i64 % 2) as f64 } else { r };
                    edge_mass * label_sum
                }
                _ => {
                    let v = self
                        .value(Symbol::Return {
                            node: n as u32,
                            label: None,
                        })
                        .powi(power as i32);
                    edge_mass * r_n * v
                }
            };
            [climb_term, return_term]
        });
        numeric::comp_sum(terms)
    }
}

/// Depth-k cylinder observable `sum_j coeffs[j] g(s_{i+j}) - offset`.
#[derive(Debug, Clone, Serialize)]
pub struct Observable {
    rule: SymbolRule,
    coeffs: Vec<f64>,
    offset: f64,
}

impl Observable {
    /// Uncentered observable (offset 0).
    pub fn raw(rule: SymbolRule, coeffs: Vec<f64>) -> Result<Self, StatsError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(StatsError::BadConfig(
                "window coefficients must be finite and nonempty".into(),
            ));
        }
        Ok(Self {
            rule,
            coeffs,
            offset: 0.0,
        })
    }

    /// Observable centered exactly against the measure's one-cylinder
    /// integral, so its stationary mean vanishes.
    pub fn centered(
        m: &RenewalMeasure,
        rule: SymbolRule,
        coeffs: Vec<f64>,
    ) -> Result<Self, StatsError> {
        if rule == SymbolRule::LabelParity && !m.spec().is_integral() {
            return Err(StatsError::LabelParityNeedsIntegral);
        }
        let mut obs = Self::raw(rule, coeffs)?;
        obs.offset = obs.exact_mean(m);
        Ok(obs)
    }

    /// Depth-1 convenience constructor.
    pub fn depth1(m: &RenewalMeasure, rule: SymbolRule) -> Result<Self, StatsError> {
        Self::centered(m, rule, vec![1.0])
    }

    pub fn depth(&self) -> usize {
        self.coeffs.len()
    }

    pub fn rule(&self) -> SymbolRule {
        self.rule
    }

    /// Value on a window of at least `depth` symbols starting the cylinder.
    pub fn value(&self, window: &[Symbol]) -> f64 {
        debug_assert!(window.len() >= self.depth());
        let mut acc = -self.offset;
        for (c, s) in self.coeffs.iter().zip(window) {
            acc += c * self.rule.value(*s);
        }
        acc
    }

    /// Exact stationary mean (after the centering offset).
    pub fn exact_mean(&self, m: &RenewalMeasure) -> f64 {
        let per_symbol = self.rule.exact_mean(m);
        numeric::comp_sum(self.coeffs.iter().map(|c| c * per_symbol)) - self.offset
    }

    /// Exact stationary variance, available for depth-1 observables.
    pub fn exact_variance(&self, m: &RenewalMeasure) -> Option<f64> {
        if self.depth() != 1 {
            return None;
        }
        let c = self.coeffs[0];
        let m1 = self.rule.exact_mean(m);
        let m2 = self.rule.exact_moment(m, 2);
        Some(c * c * (m2 - m1 * m1))
    }

    /// Hoelder seminorm bound with respect to the separation metric: a
    /// depth-k cylinder function can differ only on paths separating before
    /// their k-th return block, so `|u|_gamma <= osc(u) lambda_sep^{gamma k}`.
    pub fn holder_bound(&self, osc: f64, gamma: f64, lambda_sep: f64) -> f64 {
        osc * lambda_sep.powf(gamma * self.depth() as f64)
    }

    fn assert_centered(&self, m: &RenewalMeasure) -> Result<(), StatsError> {
        let mean = self.exact_mean(m);
        let scale = 1.0 + self.offset.abs();
        if mean.abs() > 1e-10 * scale {
            return Err(StatsError::NonCentered {
                mean,
                tol: 1e-10 * scale,
            });
        }
        Ok(())
    }
}

/// Correlation estimates on a set of lags, with batch-mean standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationEstimate {
    pub lags: Vec<usize>,
    /// `c[j]` estimates `C(lags[j]) = E[u(x) v(sigma^lag x)]`.
    pub c: Vec<f64>,
    pub se: Vec<f64>,
    /// Variance-like lag-0 estimate `E[u v]`.
    pub c0: f64,
    pub c0_se: f64,
    pub batches: usize,
    pub steps_per_batch: u64,
}

impl CorrelationEstimate {
    pub fn at(&self, lag: usize) -> Option<(f64, f64)> {
        self.lags
            .iter()
            .position(|&l| l == lag)
            .map(|i| (self.c[i], self.se[i]))
    }
}

/// Configuration for [`estimate_correlations`].
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationConfig {
    pub total_steps: u64,
    pub batches: usize,
    pub lags: Vec<usize>,
    pub seed: u64,
}

/// Estimates `C(lag) = E[u(x) v(sigma^lag x)]` for centered `u`, `v` from
/// stationary sample paths with overlapping windows.
///
/// The step budget is split into `batches` equal stationary segments, one
/// ChaCha stream each; segments run on the worker pool and are folded in
/// index order. Batch means give the standard errors.
pub fn estimate_correlations(
    m: &RenewalMeasure,
    u: &Observable,
    v: &Observable,
    cfg: &CorrelationConfig,
) -> Result<CorrelationEstimate, StatsError> {
    u.assert_centered(m)?;
    v.assert_centered(m)?;
    if cfg.lags.is_empty() || cfg.batches < 2 {
        return Err(StatsError::BadConfig(
            "need at least one lag and two batches".into(),
        ));
    }
    let mut lags = cfg.lags.clone();
    lags.sort_unstable();
    lags.dedup();
    let max_lag = *lags.last().expect("nonempty");
    let k = u.depth().max(v.depth());
    let steps_per_batch = cfg.total_steps / cfg.batches as u64;
    if steps_per_batch < (max_lag as u64 + k as u64) * 10 {
        return Err(StatsError::InsufficientSamples(format!(
            "{steps_per_batch} steps per batch cannot resolve lag {max_lag}"
        )));
    }

    // one pass per batch: ring buffer of u-values, running sums per lag
    let per_batch: Vec<(Vec<f64>, f64)> = exec::map_indexed(cfg.batches, |b| {
        batch_correlations(m, u, v, &lags, steps_per_batch, cfg.seed, b as u64)
    });

    let batches = cfg.batches as f64;
    let mut c = Vec::with_capacity(lags.len());
    let mut se = Vec::with_capacity(lags.len());
    for j in 0..lags.len() {
        let vals: Vec<f64> = per_batch.iter().map(|(m, _)| m[j]).collect();
        c.push(numeric::mean(&vals));
        se.push(numeric::sample_std(&vals) / batches.sqrt());
    }
    let c0s: Vec<f64> = per_batch.iter().map(|&(_, c0)| c0).collect();
    Ok(CorrelationEstimate {
        lags,
        c,
        se,
        c0: numeric::mean(&c0s),
        c0_se: numeric::sample_std(&c0s) / batches.sqrt(),
        batches: cfg.batches,
        steps_per_batch,
    })
}

/// Single stationary segment: lag means and the lag-0 mean, streamed
/// through a ring buffer of past `u`-values.
fn batch_correlations(
    m: &RenewalMeasure,
    u: &Observable,
    v: &Observable,
    lags: &[usize],
    steps: u64,
    seed: u64,
    stream_id: u64,
) -> (Vec<f64>, f64) {
    let k = u.depth().max(v.depth());
    let max_lag = *lags.last().expect("nonempty sorted lags");
    let mut stream = SymbolStream::stationary(m, seed, stream_id);
    let mut window: Vec<Symbol> = Vec::with_capacity(k);
    for _ in 0..k {
        window.push(stream.next().expect("infinite stream"));
    }
    let ring_len = max_lag + 1;
    let mut u_ring = vec![0.0f64; ring_len];
    let mut acc = vec![0.0f64; lags.len()];
    let mut counts = vec![0u64; lags.len()];
    let mut acc0 = 0.0f64;
    let positions = steps - k as u64 + 1;
    for i in 0..positions {
        let ui = u.value(&window);
        let vi = v.value(&window);
        u_ring[(i % ring_len as u64) as usize] = ui;
        acc0 += ui * vi;
        for (j, &lag) in lags.iter().enumerate() {
            if i >= lag as u64 {
                let past = u_ring[((i - lag as u64) % ring_len as u64) as usize];
                acc[j] += past * vi;
                counts[j] += 1;
            }
        }
        // slide the symbol window one step
        window.rotate_left(1);
        let last = window.len() - 1;
        window[last] = stream.next().expect("infinite stream");
    }
    let means: Vec<f64> = acc
        .iter()
        .zip(&counts)
        .map(|(a, &n)| a / n as f64)
        .collect();
    (means, acc0 / positions as f64)
}

/// Weighted log-log fit of `|C(lag)|` against lag.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub slope_se: f64,
    pub used_lags: Vec<usize>,
    /// Lags dropped because their standard error exceeded half the
    /// estimate's magnitude.
    pub discarded_lags: Vec<usize>,
}

/// Fits the polynomial decay exponent on lags in `[lag_lo, lag_hi]`,
/// weighting by inverse squared relative error and discarding lags whose
/// standard error exceeds `|C|/2`.
pub fn fit_decay_slope(
    est: &CorrelationEstimate,
    lag_lo: usize,
    lag_hi: usize,
) -> Result<DecayFit, StatsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut used = Vec::new();
    let mut discarded = Vec::new();
    for (j, &lag) in est.lags.iter().enumerate() {
        if !(lag_lo..=lag_hi).contains(&lag) {
            continue;
        }
        let (cj, sej) = (est.c[j], est.se[j]);
        if cj == 0.0 || sej > cj.abs() / 2.0 {
            discarded.push(lag);
            continue;
        }
        xs.push((lag as f64).ln());
        ys.push(cj.abs().ln());
        // relative error of |C| transfers to the log
        let rel = sej / cj.abs();
        ws.push(1.0 / (rel * rel));
        used.push(lag);
    }
    if used.len() < 3 {
        return Err(StatsError::InsufficientSamples(format!(
            "only {} usable lags in [{lag_lo}, {lag_hi}]",
            used.len()
        )));
    }
    let (_, slope) = numeric::weighted_linear_fit(&xs, &ys, &ws);
    let slope_se = numeric::slope_std_error(&xs, &ys);
    Ok(DecayFit {
        slope,
        slope_se,
        used_lags: used,
        discarded_lags: discarded,
    })
}

/// Green-Kubo variance from a correlation estimate.
#[derive(Debug, Clone, Serialize)]
pub struct GreenKuboVariance {
    pub sigma2: f64,
    pub cutoff: usize,
    /// Bound on the truncated tail `2 sum_{k > cutoff} |C(k)|` under the
    /// envelope `|C(k)| <= |C(cutoff)| (cutoff/k)^{alpha-2}`; infinite when
    /// no integrable envelope is supplied.
    pub tail_bound: f64,
}

/// `sigma^2 = C(0) + 2 sum_{k=1}^{cutoff} C(k)`; the estimate must carry
/// every lag `1..=cutoff`. `alpha_envelope` (> 3) bounds the dropped tail.
pub fn green_kubo(
    est: &CorrelationEstimate,
    cutoff: usize,
    alpha_envelope: Option<f64>,
) -> Result<GreenKuboVariance, StatsError> {
    let mut sum = 0.0;
    for lag in 1..=cutoff {
        let Some((c, _)) = est.at(lag) else {
            return Err(StatsError::BadConfig(format!(
                "estimate is missing lag {lag} below the cutoff"
            )));
        };
        sum += c;
    }
    let sigma2 = est.c0 + 2.0 * sum;
    if sigma2 <= 0.0 {
        return Err(StatsError::ZeroVariance(format!(
            "Green-Kubo sum collapsed to {sigma2}"
        )));
    }
    let c_last = est.at(cutoff).map(|(c, _)| c.abs()).unwrap_or(0.0);
    let tail_bound = match alpha_envelope {
        Some(alpha) if alpha > 3.0 => {
            // sum_{k>n} (n/k)^{alpha-2} <= n / (alpha - 3)
            2.0 * c_last * cutoff as f64 / (alpha - 3.0)
        }
        _ => f64::INFINITY,
    };
    Ok(GreenKuboVariance {
        sigma2,
        cutoff,
        tail_bound,
    })
}

/// Kolmogorov-Smirnov check of normalized block sums against the standard
/// normal law.
#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub ks: f64,
    pub n_block: usize,
    pub replicates: usize,
    pub sigma2: f64,
    pub z_mean: f64,
    pub z_std: f64,
}

/// Draws `replicates` independent stationary blocks of length `n_block`,
/// normalizes their sums by `sqrt(n_block sigma2)` and reports the KS
/// distance to the standard normal CDF. One ChaCha stream per replicate.
pub fn clt_check(
    m: &RenewalMeasure,
    v: &Observable,
    n_block: usize,
    replicates: usize,
    sigma2: f64,
    seed: u64,
) -> Result<CltReport, StatsError> {
    v.assert_centered(m)?;
    if sigma2 <= 0.0 || !sigma2.is_finite() {
        return Err(StatsError::ZeroVariance(format!(
            "normalization variance {sigma2}"
        )));
    }
    if n_block < 2 || replicates < 10 {
        return Err(StatsError::InsufficientSamples(
            "need n_block >= 2 and at least 10 replicates".into(),
        ));
    }
    let k = v.depth();
    let norm = (n_block as f64 * sigma2).sqrt();
    let zs = exec::map_indexed(replicates, |j| {
        let mut stream = SymbolStream::stationary(m, seed, j as u64);
        let mut window: Vec<Symbol> = (0..k).map(|_| stream.next().expect("infinite")).collect();
        let mut sum = 0.0;
        for _ in 0..n_block {
            sum += v.value(&window);
            window.rotate_left(1);
            let last = window.len() - 1;
            window[last] = stream.next().expect("infinite");
        }
        sum / norm
    });
    let ks = numeric::ks_distance(&zs, numeric::normal_cdf);
    Ok(CltReport {
        ks,
        n_block,
        replicates,
        sigma2,
        z_mean: numeric::mean(&zs),
        z_std: numeric::sample_std(&zs),
    })
}

/// Entropy along sampled paths.
#[derive(Debug, Clone, Serialize)]
pub struct SmbEstimate {
    /// Mean of `-(1/n) log mu(C_n(x))` over the samples.
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub samples: usize,
}

/// Shannon-McMillan-Breiman estimate: depth-`n` cylinder masses along
/// `samples` stationary paths, one stream per sample.
pub fn smb_entropy(
    m: &RenewalMeasure,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SmbEstimate, StatsError> {
    if n < 1 || samples < 2 {
        return Err(StatsError::InsufficientSamples(
            "need n >= 1 and at least two samples".into(),
        ));
    }
    let hs = exec::map_indexed(samples, |j| {
        let prefix: Vec<Symbol> = SymbolStream::stationary(m, seed, j as u64)
            .take(n)
            .collect();
        let log_mass = m
            .log_cylinder_mass(&prefix)
            .expect("sampled prefixes are compatible by construction");
        -log_mass / n as f64
    });
    Ok(SmbEstimate {
        mean: numeric::mean(&hs),
        se: numeric::sample_std(&hs) / (samples as f64).sqrt(),
        n,
        samples,
    })
}

/// Merged verdict: billiard-side estimates against symbolic-side rates.
#[derive(Debug, Clone, Serialize)]
pub struct TierReport {
    pub prediction: RatePrediction,
    /// Complexity plateau evidence: bounded K_n supports the
    /// super-polynomial route regardless of the decay tier.
    pub kn_bounded_evidence: Option<bool>,
    pub superpolynomial_tag: bool,
    /// Measured symbolic decay slope at a matching alpha, when available.
    pub measured_decay_slope: Option<f64>,
    pub predicted_decay_slope: Option<f64>,
    /// Human-readable inconsistencies between prediction and measurement.
    pub mismatches: Vec<String>,
}

/// Builds the tier narrative from an entropy estimate, a recurrence
/// fraction, optional complexity-boundedness evidence, and an optional
/// measured decay slope with the alpha it was measured at.
pub fn tier_report(
    h_hat: f64,
    s0_hat: f64,
    kn_bounded_evidence: Option<bool>,
    measured_decay: Option<(f64, f64)>,
) -> Result<TierReport, StatsError> {
    let prediction = predict_rates(h_hat, s0_hat)?;
    let mut mismatches = Vec::new();
    let mut predicted_decay_slope = None;
    let mut measured_decay_slope = None;
    if let Some((slope, alpha)) = measured_decay {
        // the symbolic model at tail exponent alpha decays like n^{-(alpha-2)}
        let predicted = -(alpha - 2.0);
        predicted_decay_slope = Some(predicted);
        measured_decay_slope = Some(slope);
        if (slope - predicted).abs() > 0.7 {
            mismatches.push(format!(
                "measured decay slope {slope:.3} is far from the alpha-governed {predicted:.3}"
            ));
        }
        if !prediction.tier_decay && !prediction.boundary_decay {
            mismatches.push(
                "decay tier threshold not met, yet a decay measurement was supplied".into(),
            );
        }
    }
    let superpolynomial_tag = kn_bounded_evidence.unwrap_or(false);
    Ok(TierReport {
        prediction,
        kn_bounded_evidence,
        superpolynomial_tag,
        measured_decay_slope,
        predicted_decay_slope,
        mismatches,
    })
}
