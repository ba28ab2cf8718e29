//! Entropy, sparse-recurrence and complexity estimators, plus the pure
//! threshold arithmetic tying them to the symbolic model's predictions.
//!
//! The estimators that need billiard dynamics (growth of leaf counts,
//! worst-window recurrence fractions, singularity multiplicities) live at
//! the bottom; the threshold arithmetic at the top is exact and does not
//! touch geometry.

use crate::curves::{self, EvolveParams, UnstableCurve};
use crate::exec;
use crate::map::{self, PhasePoint};
use crate::table::Table;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no growth detected: {0}")]
    InsufficientGrowth(String),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("curve evolution failed: {0}")]
    Evolution(String),
}

/// Tier thresholds and rate predictions derived from an entropy estimate
/// `h` and a sparse-recurrence fraction `s0`.
///
/// The three tiers compare `h` against `s0 log 2`, `s0 log 4` and
/// `s0 log 8`: the first admits the sparse-recurrence condition, the second
/// polynomial decay of correlations with exponent `h/(s0 log 2) - 2`
/// (up to epsilon), the third the almost-sure invariance principle with
/// error exponent threshold `p > (h/(s0 log 2) - 1)^{-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct RatePrediction {
    pub h: f64,
    pub s0: f64,
    /// `h / (s0 log 2)`.
    pub ratio: f64,
    pub margin_sparse: f64,
    pub margin_decay: f64,
    pub margin_asip: f64,
    pub tier_sparse: bool,
    pub tier_decay: bool,
    pub tier_asip: bool,
    /// True when the corresponding margin sits at zero to rounding;
    /// the strict inequality is then met only in the limit.
    pub boundary_sparse: bool,
    pub boundary_decay: bool,
    pub boundary_asip: bool,
    /// Polynomial decay exponent `ratio - 2`, present when positive.
    pub decay_exponent_bound: Option<f64>,
    /// ASIP block-error threshold `1/(ratio - 1)`, present when `ratio > 1`.
    pub asip_p_threshold: Option<f64>,
}

/// Evaluates the tier thresholds at `(h, s0)`. `h` must be positive and
/// `s0` must be a fraction in (0, 1].
pub fn predict_rates(h: f64, s0: f64) -> Result<RatePrediction, EntropyError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(EntropyError::DegenerateInput(format!(
            "entropy estimate must be positive, got {h}"
        )));
    }
    if !(s0 > 0.0 && s0 <= 1.0) {
        return Err(EntropyError::DegenerateInput(format!(
            "recurrence fraction must lie in (0, 1], got {s0}"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let ratio = h / (s0 * ln2);
    let margins = [h - s0 * ln2, h - s0 * 2.0 * ln2, h - s0 * 3.0 * ln2];
    let boundary: Vec<bool> = margins.iter().map(|m| m.abs() <= 1e-12 * h).collect();
    Ok(RatePrediction {
        h,
        s0,
        ratio,
        margin_sparse: margins[0],
        margin_decay: margins[1],
        margin_asip: margins[2],
        tier_sparse: margins[0] > 0.0,
        tier_decay: margins[1] > 0.0,
        tier_asip: margins[2] > 0.0,
        boundary_sparse: boundary[0],
        boundary_decay: boundary[1],
        boundary_asip: boundary[2],
        decay_exponent_bound: (ratio > 2.0).then_some(ratio - 2.0),
        asip_p_threshold: (ratio > 1.0).then_some(1.0 / (ratio - 1.0)),
    })
}

/// Exponent `alpha = (h - h') / (s0 log 2)` comparing full-scale growth `h`
/// to a short-curve growth allowance `h' < h`.
pub fn alpha_envelope(h: f64, h_prime: f64, s0: f64) -> Result<f64, EntropyError> {
    if !(h_prime >= 0.0 && h_prime < h) {
        return Err(EntropyError::DegenerateInput(format!(
            "need 0 <= h' < h, got h' = {h_prime}, h = {h}"
        )));
    }
    if !(s0 > 0.0 && s0 <= 1.0) {
        return Err(EntropyError::DegenerateInput(format!(
            "recurrence fraction must lie in (0, 1], got {s0}"
        )));
    }
    Ok((h - h_prime) / (s0 * std::f64::consts::LN_2))
}

/// Least-squares slope of `log count` against `n` over `window`
/// (inclusive); this is the growth-rate estimator applied to leaf counts.
pub fn fit_growth_rate(
    counts: &[(usize, u64)],
    window: (usize, usize),
) -> Result<f64, EntropyError> {
    let (lo, hi) = window;
    if lo >= hi {
        return Err(EntropyError::DegenerateInput(
            "fit window must contain at least two points".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(n, _)| (lo..=hi).contains(n))
        .map(|&(n, c)| (n as f64, (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(EntropyError::InsufficientData(format!(
            "window [{lo}, {hi}] covers {} count points",
            pts.len()
        )));
    }
    if counts.iter().any(|&(_, c)| c == 0) {
        return Err(EntropyError::InsufficientGrowth("a count is zero".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, slope) = crate::numeric::linear_fit(&xs, &ys);
    Ok(slope)
}

/// Window parameters for the sparse-recurrence search: the smallest window
/// length `n0` with `k_bound / n0 < eps0`, and a ladder of angle cutoffs
/// climbing toward pi/2 to drive the recurrence fraction below `eps0`.
#[derive(Debug, Clone, Serialize)]
pub struct SparseParams {
    pub n0: usize,
    pub eps0: f64,
    /// Candidate `phi0` cutoffs, each halving the distance to pi/2.
    pub phi0_ladder: Vec<f64>,
}

/// Chooses `(n0, phi0)` candidates from a complexity bound `k_bound` and a
/// target fraction `eps0`.
pub fn suggest_sparse_params(
    k_bound: f64,
    eps0: f64,
    ladder_len: usize,
) -> Result<SparseParams, EntropyError> {
    if !(k_bound > 0.0) || !(eps0 > 0.0) {
        return Err(EntropyError::DegenerateInput(
            "k_bound and eps0 must be positive".into(),
        ));
    }
    // smallest n0 with k_bound / n0 strictly below eps0
    let n0 = (k_bound / eps0).floor() as usize + 1;
    let base = std::f64::consts::FRAC_PI_4;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let phi0_ladder = (0..ladder_len.max(1))
        .map(|j| half_pi - (half_pi - base) / (1u64 << j) as f64)
        .collect();
    Ok(SparseParams {
        n0,
        eps0,
        phi0_ladder,
    })
}

/// Seed curves for the growth estimator must be at least this fraction of
/// the smallest scatterer perimeter (the delta_1 scale of the lower
/// exponential envelope).
pub const SEED_LENGTH_FLOOR_FRACTION: f64 = 1e-4;

/// Growth-rate estimate from leaf counts across several seed curves.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyEstimate {
    /// nats per collision.
    pub h_hat: f64,
    pub window: (usize, usize),
    pub per_seed: Vec<f64>,
    /// Relative dispersion (max - min) / h_hat over the seeds.
    pub spread: f64,
    pub counts: Vec<Vec<usize>>,
}

/// Fits the leaf-count growth rate over the upper half of [0, n_max],
/// averaged over the seed curves.
pub fn estimate_h(
    table: &Table,
    seeds: &[UnstableCurve],
    n_max: u32,
    params: &EvolveParams,
) -> Result<EntropyEstimate, EntropyError> {
    if n_max < 8 {
        return Err(EntropyError::InsufficientData(format!(
            "growth window needs n_max >= 8, got {n_max}"
        )));
    }
    if seeds.len() < 3 {
        return Err(EntropyError::InsufficientData(format!(
            "spread needs at least 3 seed curves, got {}",
            seeds.len()
        )));
    }
    let min_perim = (0..table.scatterers().len())
        .map(|i| table.perimeter(i))
        .fold(f64::INFINITY, f64::min);
    let floor = SEED_LENGTH_FLOOR_FRACTION * min_perim;
    for (i, s) in seeds.iter().enumerate() {
        if s.length() < floor {
            return Err(EntropyError::DegenerateInput(format!(
                "seed {i} has length {} under the floor {floor}",
                s.length()
            )));
        }
    }
    let window = (n_max as usize / 2, n_max as usize);
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut counts = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let rep = curves::evolve(table, seed.clone(), n_max, params)
            .map_err(|e| EntropyError::Evolution(e.to_string()))?;
        if rep.counts[n_max as usize] < 16 {
            return Err(EntropyError::InsufficientGrowth(format!(
                "leaf count {} at depth {n_max} is below the fit floor of 16; \
                 lengthen the seed curves or deepen the run",
                rep.counts[n_max as usize]
            )));
        }
        let series: Vec<(usize, u64)> = rep
            .counts
            .iter()
            .enumerate()
            .map(|(n, &c)| (n, c as u64))
            .collect();
        per_seed.push(fit_growth_rate(&series, window)?);
        counts.push(rep.counts);
    }
    let h_hat = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    if !(h_hat > 0.0) {
        return Err(EntropyError::InsufficientGrowth(format!(
            "fitted rate {h_hat} is not positive"
        )));
    }
    let hi = per_seed.iter().fold(f64::MIN, |a, &b| a.max(b));
    let lo = per_seed.iter().fold(f64::MAX, |a, &b| a.min(b));
    Ok(EntropyEstimate {
        h_hat,
        window,
        per_seed,
        spread: (hi - lo) / h_hat,
        counts,
    })
}

/// Worst sliding-window recurrence fraction: the measured stand-in for
/// s_0. A sampled maximum is a lower bound of the true supremum; the
/// argmax window is kept for audit.
#[derive(Debug, Clone, Serialize)]
pub struct SparseRecurrenceEstimate {
    pub phi0: f64,
    pub n0: usize,
    pub s0_hat: f64,
    /// Number of windows examined.
    pub sample_size: usize,
    pub failed_orbits: usize,
    /// (point index, window start) attaining the maximum.
    pub argmax: Option<(usize, usize)>,
    pub margin_log2: Option<f64>,
    pub margin_log4: Option<f64>,
    pub margin_log8: Option<f64>,
}

impl SparseRecurrenceEstimate {
    /// Fills the tier margins h - s0 log(2^k) from a growth estimate
    /// obtained in the same run.
    pub fn attach_margins(&mut self, h_hat: f64) {
        let l2 = std::f64::consts::LN_2;
        self.margin_log2 = Some(h_hat - self.s0_hat * l2);
        self.margin_log4 = Some(h_hat - self.s0_hat * 2.0 * l2);
        self.margin_log8 = Some(h_hat - self.s0_hat * 3.0 * l2);
    }
}

/// Estimates s_0(phi0, n0): samples phase points from the smooth invariant
/// law, runs each `orbit_len` collisions, and records the worst fraction
/// of |phi| > phi0 collisions over every window of length `n0`.
pub fn estimate_s0(
    table: &Table,
    phi0: f64,
    n0: usize,
    n_points: usize,
    orbit_len: usize,
    seed: u64,
) -> Result<SparseRecurrenceEstimate, EntropyError> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if !(phi0 > 0.0 && phi0 < half_pi) {
        return Err(EntropyError::DegenerateInput(format!(
            "phi0 must lie in (0, pi/2), got {phi0}"
        )));
    }
    if n0 == 0 || n_points == 0 {
        return Err(EntropyError::DegenerateInput(
            "n0 and n_points must be positive".into(),
        ));
    }
    if orbit_len + 1 < n0 {
        return Err(EntropyError::DegenerateInput(format!(
            "orbit of {orbit_len} collisions cannot hold a window of {n0}"
        )));
    }
    struct PointOutcome {
        best: f64,
        best_window: usize,
        windows: usize,
        failed: bool,
    }
    let outcomes: Vec<PointOutcome> = exec::map_indexed(n_points, |i| {
        let mut rng = exec::chunk_rng(seed, i as u64);
        let x = map::sample_phase_point(table, &mut rng);
        let Ok(orbit) = map::orbit(table, x, orbit_len) else {
            return PointOutcome {
                best: 0.0,
                best_window: 0,
                windows: 0,
                failed: true,
            };
        };
        let hits: Vec<u32> = orbit
            .points
            .iter()
            .map(|p| u32::from(p.phi.abs() > phi0))
            .collect();
        let mut prefix = vec![0u32; hits.len() + 1];
        for (k, h) in hits.iter().enumerate() {
            prefix[k + 1] = prefix[k] + h;
        }
        let mut best = 0u32;
        let mut best_window = 0usize;
        for start in 0..=(hits.len() - n0) {
            let c = prefix[start + n0] - prefix[start];
            if c > best {
                best = c;
                best_window = start;
            }
        }
        PointOutcome {
            best: best as f64 / n0 as f64,
            best_window,
            windows: hits.len() - n0 + 1,
            failed: false,
        }
    });
    let mut est = SparseRecurrenceEstimate {
        phi0,
        n0,
        s0_hat: 0.0,
        sample_size: 0,
        failed_orbits: 0,
        argmax: None,
        margin_log2: None,
        margin_log4: None,
        margin_log8: None,
    };
    for (i, o) in outcomes.iter().enumerate() {
        if o.failed {
            est.failed_orbits += 1;
            continue;
        }
        est.sample_size += o.windows;
        if o.best > est.s0_hat {
            est.s0_hat = o.best;
            est.argmax = Some((i, o.best_window));
        }
    }
    if est.sample_size == 0 {
        return Err(EntropyError::InsufficientData(
            "every sampled orbit failed".into(),
        ));
    }
    Ok(est)
}

/// Walks the phi0 ladder of `params`, accepting the first rung whose
/// measured recurrence fraction drops below eps0.
pub fn verify_sparse_params(
    table: &Table,
    params: &SparseParams,
    n_points: usize,
    orbit_len: usize,
    seed: u64,
) -> Result<SparseRecurrenceEstimate, EntropyError> {
    let mut best: Option<SparseRecurrenceEstimate> = None;
    for &phi0 in &params.phi0_ladder {
        let est = estimate_s0(table, phi0, params.n0, n_points, orbit_len, seed)?;
        if est.s0_hat < params.eps0 {
            return Ok(est);
        }
        if best.as_ref().is_none_or(|b| est.s0_hat < b.s0_hat) {
            best = Some(est);
        }
    }
    let reached = best.map_or(f64::NAN, |b| b.s0_hat);
    Err(EntropyError::BudgetExhausted(format!(
        "phi0 ladder exhausted with s0_hat {reached} >= eps0 {}",
        params.eps0
    )))
}

/// Measured singularity-crossing multiplicity at one depth.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityEstimate {
    pub n: u32,
    pub k_n_hat: usize,
    /// Re-run at twice the trace density; disagreement means the
    /// clustering resolution is not yet trustworthy.
    pub doubled_k_n_hat: usize,
    pub curve_count: usize,
    pub clustering_radius: f64,
    pub traced_points: usize,
}

impl ComplexityEstimate {
    pub fn resolution_stable(&self) -> bool {
        self.k_n_hat == self.doubled_k_n_hat
    }
}

/// Traces the singularity families: grazing phase points (phi = +-pi/2 on
/// each scatterer) propagated up to n steps forward and backward. Points
/// are bucketed at the clustering radius (two half-offset grids to dodge
/// bucket-boundary splits); within a bucket, samples of one trace family
/// split into strands wherever the source parameter jumps, and the
/// multiplicity is the strand count. Forward and backward families are
/// bucketed separately, matching the one-sided definition of K_n.
pub fn estimate_kn(
    table: &Table,
    n: u32,
    samples_per_curve: usize,
    clustering_radius: f64,
) -> Result<ComplexityEstimate, EntropyError> {
    if n == 0 {
        return Err(EntropyError::DegenerateInput("depth must be >= 1".into()));
    }
    if samples_per_curve < 16 {
        return Err(EntropyError::DegenerateInput(
            "need at least 16 samples per curve".into(),
        ));
    }
    if !(clustering_radius > 0.0) {
        return Err(EntropyError::DegenerateInput(
            "clustering radius must be positive".into(),
        ));
    }
    let (k1, traced) = kn_at_resolution(table, n, samples_per_curve, clustering_radius);
    let (k2, _) = kn_at_resolution(table, n, samples_per_curve * 2, clustering_radius);
    Ok(ComplexityEstimate {
        n,
        k_n_hat: k1,
        doubled_k_n_hat: k2,
        curve_count: table.scatterers().len() * 2 * 2 * n as usize,
        clustering_radius,
        traced_points: traced,
    })
}

fn kn_at_resolution(
    table: &Table,
    n: u32,
    samples: usize,
    radius: f64,
) -> (usize, usize) {
    use std::collections::HashMap;
    let half_pi = std::f64::consts::FRAC_PI_2;
    // key: (direction, grid offset, scatterer, r cell, phi cell, family)
    // family: (source scatterer, sign, step count)
    type Family = (usize, i8, u32);
    let mut buckets: HashMap<(bool, u8, usize, i64, i64), HashMap<Family, Vec<usize>>> =
        HashMap::new();
    let mut traced = 0usize;
    for scat in 0..table.scatterers().len() {
        let perim = table.perimeter(scat);
        for sign in [1.0f64, -1.0] {
            for j in 0..samples {
                let r = perim * j as f64 / samples as f64;
                let start = PhasePoint::new(scat, r, sign * half_pi);
                for backward in [false, true] {
                    let mut y = start;
                    for k in 1..=n {
                        let stepped = if backward {
                            map::step_inverse(table, y)
                        } else {
                            map::step(table, y)
                        };
                        let Ok(c) = stepped else { break };
                        y = c.next;
                        traced += 1;
                        let family: Family = (scat, sign as i8, k);
                        for offset in [0.0f64, 0.5] {
                            let cell_r = ((y.r / radius) + offset).floor() as i64;
                            let cell_phi = (((y.phi + half_pi) / radius) + offset).floor() as i64;
                            buckets
                                .entry((backward, (offset * 2.0) as u8, y.scatterer, cell_r, cell_phi))
                                .or_default()
                                .entry(family)
                                .or_default()
                                .push(j);
                        }
                    }
                }
            }
        }
    }
    let strand_gap = samples.div_ceil(64).max(8);
    let mut k_max = 0usize;
    for families in buckets.values() {
        let mut mult = 0usize;
        for params in families.values() {
            let mut sorted = params.clone();
            sorted.sort_unstable();
            let mut strands = 1usize;
            for w in sorted.windows(2) {
                if w[1] - w[0] > strand_gap {
                    strands += 1;
                }
            }
            mult += strands;
        }
        k_max = k_max.max(mult);
    }
    (k_max, traced)
}

/// Lower-bound cross-check on the growth rate: the number of distinct
/// n-step itineraries (scatterer plus lattice translate per collision)
/// seen along sampled orbits.
#[derive(Debug, Clone, Serialize)]
pub struct ItineraryEstimate {
    pub rate: f64,
    /// (depth, distinct itineraries).
    pub distinct: Vec<(usize, usize)>,
    pub points: usize,
}

pub fn itinerary_rate(
    table: &Table,
    n_max: u32,
    n_points: usize,
    seed: u64,
) -> Result<ItineraryEstimate, EntropyError> {
    if n_max < 3 || n_points < 100 {
        return Err(EntropyError::InsufficientData(
            "need n_max >= 3 and at least 100 points".into(),
        ));
    }
    type Sym = (usize, (i64, i64));
    let itineraries: Vec<Vec<Sym>> = exec::map_indexed(n_points, |i| {
        let mut rng = exec::chunk_rng(seed, i as u64);
        let x = map::sample_phase_point(table, &mut rng);
        let mut current = x;
        let mut word = Vec::with_capacity(n_max as usize);
        for _ in 0..n_max {
            match map::step(table, current) {
                Ok(c) => {
                    word.push((c.next.scatterer, c.shift));
                    current = c.next;
                }
                Err(_) => break,
            }
        }
        word
    });
    let mut distinct = Vec::new();
    let mut usable_depths: Vec<(usize, u64)> = Vec::new();
    for depth in 1..=n_max as usize {
        let set: std::collections::HashSet<&[Sym]> = itineraries
            .iter()
            .filter(|w| w.len() >= depth)
            .map(|w| &w[..depth])
            .collect();
        distinct.push((depth, set.len()));
        // saturated depths (close to the sample count) only witness the
        // sample size, not the branching
        if set.len() * 4 <= n_points {
            usable_depths.push((depth, set.len() as u64));
        }
    }
    if usable_depths.len() < 3 {
        return Err(EntropyError::InsufficientData(format!(
            "only {} unsaturated depths; increase n_points",
            usable_depths.len()
        )));
    }
    let lo = usable_depths[0].0;
    let hi = usable_depths[usable_depths.len() - 1].0;
    let rate = fit_growth_rate(&usable_depths, (lo, hi))?;
    Ok(ItineraryEstimate {
        rate,
        distinct,
        points: n_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_tier_example_at_log8() {
        // h = s0 log 8: ratio = 3, decay bound 1, ASIP threshold 1/2.
        let s0 = 0.4;
        let h = s0 * 8.0f64.ln();
        let p = predict_rates(h, s0).unwrap();
        assert!((p.ratio - 3.0).abs() <= 1e-12);
        assert!(p.tier_sparse && p.tier_decay);
        assert!(!p.tier_asip && p.boundary_asip, "equality is a boundary");
        assert!((p.decay_exponent_bound.unwrap() - 1.0).abs() <= 1e-12);
        assert!((p.asip_p_threshold.unwrap() - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn comfortable_tier_example_at_twice_log8() {
        let s0 = 0.25;
        let h = 2.0 * s0 * 8.0f64.ln();
        let p = predict_rates(h, s0).unwrap();
        assert!(p.tier_sparse && p.tier_decay && p.tier_asip);
        assert!((p.decay_exponent_bound.unwrap() - 4.0).abs() <= 1e-12);
        assert!((p.asip_p_threshold.unwrap() - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn predictions_are_scale_invariant() {
        for c in [0.5, 2.0, 3.2] {
            let a = predict_rates(0.9, 0.3).unwrap();
            let b = predict_rates(c * 0.9, c * 0.3).unwrap();
            assert!((a.ratio - b.ratio).abs() <= 1e-12);
            assert_eq!(a.tier_asip, b.tier_asip);
            let (da, db) = (a.decay_exponent_bound, b.decay_exponent_bound);
            assert_eq!(da.is_some(), db.is_some());
            if let (Some(da), Some(db)) = (da, db) {
                assert!((da - db).abs() <= 1e-12);
            }
        }
        // scaling that pushes s0 past 1 is rejected outright
        assert!(predict_rates(7.3 * 0.9, 7.3 * 0.3).is_err());
    }

    #[test]
    fn alpha_envelope_matches_definition() {
        let a = alpha_envelope(1.0, 0.3, 0.5).unwrap();
        assert!((a - 0.7 / (0.5 * std::f64::consts::LN_2)).abs() <= 1e-12);
        assert!(alpha_envelope(1.0, 1.0, 0.5).is_err());
        assert!(alpha_envelope(1.0, 1.2, 0.5).is_err());
    }

    #[test]
    fn degenerate_rate_inputs_are_rejected() {
        assert!(predict_rates(0.0, 0.5).is_err());
        assert!(predict_rates(1.0, 0.0).is_err());
        assert!(predict_rates(1.0, 1.5).is_err());
        assert!(predict_rates(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn growth_fit_recovers_synthetic_exponential() {
        // counts 7 e^{0.7 n}: slope must come back as 0.7 almost exactly
        let counts: Vec<(usize, u64)> = (1..=12)
            .map(|n| (n, (7.0 * (0.7 * n as f64).exp()).round() as u64))
            .collect();
        let h = fit_growth_rate(&counts, (6, 12)).unwrap();
        assert!((h - 0.7).abs() <= 2e-3, "rounding noise only: {h}");
        let exact: Vec<(usize, u64)> = (1..=12).map(|n| (n, 1u64 << n)).collect();
        let h2 = fit_growth_rate(&exact, (6, 12)).unwrap();
        assert!((h2 - std::f64::consts::LN_2).abs() <= 1e-9);
    }

    #[test]
    fn growth_fit_rejects_bad_windows() {
        let counts = vec![(1usize, 2u64), (2, 4)];
        assert!(fit_growth_rate(&counts, (5, 9)).is_err());
        assert!(fit_growth_rate(&counts, (2, 2)).is_err());
        assert!(fit_growth_rate(&[(1, 0), (2, 4)], (1, 2)).is_err());
    }

    #[test]
    fn sparse_window_is_smallest_strict_quotient() {
        // 3/31 < 0.1 but 3/30 = 0.1 is not strict
        assert_eq!(suggest_sparse_params(3.0, 0.1, 4).unwrap().n0, 31);
        // large eps0 allows the trivial window
        assert_eq!(suggest_sparse_params(3.0, 4.0, 4).unwrap().n0, 1);
        let ladder = suggest_sparse_params(3.0, 0.1, 5).unwrap().phi0_ladder;
        assert_eq!(ladder.len(), 5);
        assert!(ladder.windows(2).all(|w| w[0] < w[1]));
        assert!(ladder.iter().all(|&p| p < std::f64::consts::FRAC_PI_2));
    }

    #[test]
    fn synthetic_exponential_counts_recover_the_rate_to_1e6() {
        // a large base makes integer rounding relatively negligible
        let series: Vec<(usize, u64)> = (0..=12)
            .map(|n| (n, (1e9 * (0.7 * n as f64).exp()).round() as u64))
            .collect();
        let h = fit_growth_rate(&series, (6, 12)).unwrap();
        assert!((h - 0.7).abs() <= 1e-6, "got {h}");
    }

    #[test]
    fn estimate_h_on_reference_seeds() {
        let table = Table::reference();
        let params = EvolveParams::for_table(table);
        let seeds = vec![
            UnstableCurve::seed(table, 0, 0.7, 0.1, 5e-3, 9).unwrap(),
            UnstableCurve::seed(table, 1, 0.4, -0.2, 5e-3, 9).unwrap(),
            UnstableCurve::seed(table, 0, 2.1, 0.25, 5e-3, 9).unwrap(),
        ];
        let est = estimate_h(table, &seeds, 8, &params).unwrap();
        assert!(
            est.h_hat > 0.5 && est.h_hat < 3.0,
            "implausible rate {}",
            est.h_hat
        );
        assert!(est.spread < 0.5, "spread {}", est.spread);
        assert_eq!(est.per_seed.len(), 3);
        assert_eq!(est.window, (4, 8));
        assert!(matches!(
            estimate_h(table, &seeds, 7, &params),
            Err(EntropyError::InsufficientData(_))
        ));
        assert!(matches!(
            estimate_h(table, &seeds[..2], 8, &params),
            Err(EntropyError::InsufficientData(_))
        ));
        let tiny = vec![UnstableCurve::seed(table, 0, 0.7, 0.1, 1e-5, 5).unwrap(); 3];
        assert!(matches!(
            estimate_h(table, &tiny, 8, &params),
            Err(EntropyError::DegenerateInput(_))
        ));
    }

    #[test]
    fn s0_estimate_behaves_on_reference() {
        let table = Table::reference();
        let e = estimate_s0(table, std::f64::consts::FRAC_PI_4, 20, 150, 120, 7).unwrap();
        assert!(e.s0_hat > 0.0 && e.s0_hat <= 1.0, "fraction {}", e.s0_hat);
        assert!(e.argmax.is_some());
        assert!(e.sample_size > 0);
        // larger cutoff on the same sampled data can only lower the count
        let tighter = estimate_s0(table, 1.2, 20, 150, 120, 7).unwrap();
        assert!(tighter.s0_hat <= e.s0_hat);
        // at the pi/2 limit only near-grazing collisions count
        let limit =
            estimate_s0(table, std::f64::consts::FRAC_PI_2 - 1e-9, 20, 150, 120, 7).unwrap();
        assert!(limit.s0_hat <= 0.1, "near-grazing fraction {}", limit.s0_hat);
        let mut m = e.clone();
        m.attach_margins(1.0);
        let expect = 1.0 - m.s0_hat * std::f64::consts::LN_2;
        assert!((m.margin_log2.unwrap() - expect).abs() <= 1e-15);
        assert!(estimate_s0(table, 2.0, 20, 10, 100, 7).is_err());
        assert!(estimate_s0(table, 0.5, 200, 10, 100, 7).is_err());
    }

    #[test]
    fn sparse_verification_loop_accepts_or_exhausts() {
        let table = Table::reference();
        let generous = suggest_sparse_params(3.0, 0.9, 4).unwrap();
        let ok = verify_sparse_params(table, &generous, 60, 60, 11).unwrap();
        assert!(ok.s0_hat < 0.9);
        // a target no finite sample can certify: any steep collision at all
        // in some window already pushes s0_hat past eps0
        let hopeless = SparseParams {
            n0: 10,
            eps0: 1e-9,
            phi0_ladder: vec![std::f64::consts::FRAC_PI_4, 1.2],
        };
        assert!(matches!(
            verify_sparse_params(table, &hopeless, 60, 60, 11),
            Err(EntropyError::BudgetExhausted(_))
        ));
    }

    #[test]
    fn complexity_estimate_reports_multiplicities() {
        let table = Table::reference();
        let e = estimate_kn(table, 1, 64, 1e-5).unwrap();
        assert!(e.k_n_hat >= 1, "singularity curves exist at depth 1");
        assert_eq!(e.curve_count, 8);
        assert!(e.traced_points > 0);
        // more trace samples can only reveal more strands
        let denser = estimate_kn(table, 1, 128, 1e-5).unwrap();
        assert!(denser.k_n_hat >= e.k_n_hat);
        assert!(estimate_kn(table, 0, 64, 1e-5).is_err());
        assert!(estimate_kn(table, 1, 4, 1e-5).is_err());
        assert!(estimate_kn(table, 1, 64, -1.0).is_err());
    }

    #[test]
    fn itinerary_rate_is_a_positive_lower_bound_proxy() {
        let table = Table::reference();
        let est = itinerary_rate(table, 5, 20_000, 3).unwrap();
        assert!(est.rate > 0.4, "rate {}", est.rate);
        assert_eq!(est.distinct.len(), 5);
        assert!(est.distinct.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(itinerary_rate(table, 2, 20_000, 3).is_err());
    }
}
