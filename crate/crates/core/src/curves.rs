//! Unstable-curve evolution: polyline curves in one (r, phi) chart are
//! pushed through the collision map, cut wherever the next-collision
//! branch changes, and adaptively refined so adjacent image samples stay
//! within a fixed arc-length gap. The leaf counts #G_n(W) produced here
//! drive the growth-rate estimator and the growth-fact checks.

use crate::entropy::fit_growth_rate;
use crate::exec;
use crate::map::{self, PhasePoint};
use crate::table::Table;
use serde::Serialize;
use thiserror::Error;

/// Leaves shorter than this are kept in counts but not evolved further.
pub const DEFAULT_MIN_LEAF_LENGTH: f64 = 1e-9;
/// Source-parameter width to which cut points are localized by bisection.
pub const DEFAULT_CUT_TOLERANCE: f64 = 1e-12;
/// Below this cos phi' the image-gap criterion tightens fourfold: expansion
/// scales like 1/cos phi' near a tangency, so uniform sampling misses leaves.
pub const DEFAULT_GRAZING_REFINE_COS: f64 = 1e-3;
/// Map evaluations allowed while refining a single curve.
pub const DEFAULT_MAX_EVALS: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error(
        "refinement budget exceeded after {evaluations} evaluations \
         inside parameter interval [{lo}, {hi}]"
    )]
    RefinementBudgetExceeded {
        lo: f64,
        hi: f64,
        evaluations: usize,
    },
    #[error("bad curve: {0}")]
    BadCurve(String),
    #[error("growth-fact check needs n_max >= 6, got {0}")]
    InsufficientData(u32),
}

/// Tunables for one evolution run.
#[derive(Debug, Clone, Serialize)]
pub struct EvolveParams {
    /// Largest allowed chart distance between adjacent image samples.
    pub max_image_gap: f64,
    pub grazing_refine_cos: f64,
    pub cut_tolerance: f64,
    pub min_leaf_length: f64,
    pub max_evals: usize,
}

impl EvolveParams {
    /// Defaults scaled to the table: the image-gap budget is 1e-3 of the
    /// total boundary length.
    pub fn for_table(table: &Table) -> Self {
        Self {
            max_image_gap: 1e-3 * table.total_boundary_length(),
            grazing_refine_cos: DEFAULT_GRAZING_REFINE_COS,
            cut_tolerance: DEFAULT_CUT_TOLERANCE,
            min_leaf_length: DEFAULT_MIN_LEAF_LENGTH,
            max_evals: DEFAULT_MAX_EVALS,
        }
    }
}

/// A polyline in a single scatterer chart with strictly increasing,
/// unwrapped arc coordinate and secant slopes inside the unstable cone.
#[derive(Debug, Clone, Serialize)]
pub struct UnstableCurve {
    pub scatterer: usize,
    /// (r, phi) samples; r is a chart coordinate and may leave
    /// [0, perimeter) when the curve crosses the seam.
    pub samples: Vec<(f64, f64)>,
    pub generation: u32,
    /// Index of the parent leaf within the previous generation.
    pub ancestry: usize,
}

impl UnstableCurve {
    /// Straight seed segment centered at (r_center, phi_center), sloped a
    /// quarter of the way into the unstable cone band (the exact lower
    /// edge would let float noise push secants outside the closed band).
    pub fn seed(
        table: &Table,
        scatterer: usize,
        r_center: f64,
        phi_center: f64,
        chart_length: f64,
        n_samples: usize,
    ) -> Result<Self, CurveError> {
        if scatterer >= table.scatterers().len() {
            return Err(CurveError::BadCurve(format!(
                "scatterer {scatterer} out of range"
            )));
        }
        if n_samples < 2 || !(chart_length > 0.0) {
            return Err(CurveError::BadCurve(
                "a seed needs at least two samples and positive length".into(),
            ));
        }
        let cone = map::unstable_cone(table);
        let slope = cone.lo + 0.25 * (cone.hi - cone.lo);
        let dr_total = chart_length / (1.0 + slope * slope).sqrt();
        let samples: Vec<(f64, f64)> = (0..n_samples)
            .map(|i| {
                let f = i as f64 / (n_samples - 1) as f64 - 0.5;
                (r_center + f * dr_total, phi_center + f * dr_total * slope)
            })
            .collect();
        let curve = Self {
            scatterer,
            samples,
            generation: 0,
            ancestry: 0,
        };
        curve.validate(table).map_err(CurveError::BadCurve)?;
        Ok(curve)
    }

    /// Chord-sum length in the chart metric.
    pub fn length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let dr = w[1].0 - w[0].0;
                let dphi = w[1].1 - w[0].1;
                (dr * dr + dphi * dphi).sqrt()
            })
            .sum()
    }

    pub fn chart_span(&self) -> (f64, f64) {
        (
            self.samples.first().map_or(0.0, |s| s.0),
            self.samples.last().map_or(0.0, |s| s.0),
        )
    }

    /// Checks the curve invariants: at least two finite samples, strictly
    /// increasing r, phi within range, secant slopes inside the cone.
    pub fn validate(&self, table: &Table) -> Result<(), String> {
        if self.scatterer >= table.scatterers().len() {
            return Err(format!("scatterer {} out of range", self.scatterer));
        }
        if self.samples.len() < 2 {
            return Err("fewer than two samples".into());
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        let cone = map::unstable_cone(table);
        for w in self.samples.windows(2) {
            let (r0, p0) = w[0];
            let (r1, p1) = w[1];
            if !(r0.is_finite() && p0.is_finite() && r1.is_finite() && p1.is_finite()) {
                return Err("non-finite sample".into());
            }
            if p0.abs() > half_pi || p1.abs() > half_pi {
                return Err("phi outside [-pi/2, pi/2]".into());
            }
            if r1 <= r0 {
                return Err(format!("r not strictly increasing at {r0}"));
            }
            let slope = (p1 - p0) / (r1 - r0);
            if !cone.contains(slope) {
                return Err(format!(
                    "secant slope {slope} outside cone [{}, {}]",
                    cone.lo, cone.hi
                ));
            }
        }
        Ok(())
    }

    /// Linear interpolation at chart coordinate t (clamped to the span).
    fn point_at(&self, t: f64) -> (f64, f64) {
        let i = self
            .samples
            .partition_point(|&(r, _)| r < t)
            .clamp(1, self.samples.len() - 1);
        let (r0, p0) = self.samples[i - 1];
        let (r1, p1) = self.samples[i];
        let f = ((t - r0) / (r1 - r0)).clamp(0.0, 1.0);
        (t, p0 + f * (p1 - p0))
    }
}

/// A generation of leaves with its length histogram (decade buckets:
/// each entry is a lower edge 10^k and the number of leaves with length
/// in [10^k, 10^(k+1))).
#[derive(Debug, Clone, Serialize)]
pub struct LeafSet {
    pub leaves: Vec<UnstableCurve>,
    pub n: u32,
    pub counts_by_length: Vec<(f64, usize)>,
}

impl LeafSet {
    fn from_leaves(leaves: Vec<UnstableCurve>, n: u32) -> Self {
        let mut buckets: std::collections::BTreeMap<i32, usize> = Default::default();
        for leaf in &leaves {
            let len = leaf.length();
            let decade = if len > 0.0 {
                (len.log10().floor() as i32).clamp(-15, 2)
            } else {
                -15
            };
            *buckets.entry(decade).or_default() += 1;
        }
        let counts_by_length = buckets
            .into_iter()
            .map(|(d, c)| (10f64.powi(d), c))
            .collect();
        Self {
            leaves,
            n,
            counts_by_length,
        }
    }

    pub fn count(&self) -> usize {
        self.leaves.len()
    }

    pub fn total_length(&self) -> f64 {
        self.leaves.iter().map(UnstableCurve::length).sum()
    }

    pub fn max_leaf_length(&self) -> f64 {
        self.leaves
            .iter()
            .map(UnstableCurve::length)
            .fold(0.0, f64::max)
    }
}

/// One map evaluation along the source curve: the branch address and the
/// image point, or None when the evaluation is singular (tangency, flight
/// budget, or a grazing-flagged image).
#[derive(Debug, Clone, Copy)]
struct Eval {
    t: f64,
    hit: Option<EvalHit>,
}

#[derive(Debug, Clone, Copy)]
struct EvalHit {
    address: (usize, (i64, i64)),
    r: f64,
    phi: f64,
    cos_next: f64,
}

struct Refiner<'a> {
    table: &'a Table,
    params: &'a EvolveParams,
    curve: &'a UnstableCurve,
    evals_used: usize,
    max_unresolved_gap: f64,
}

impl Refiner<'_> {
    fn eval(&mut self, t: f64) -> Eval {
        self.evals_used += 1;
        let (r, phi) = self.curve.point_at(t);
        let hit = match map::step(self.table, PhasePoint::new(self.curve.scatterer, r, phi)) {
            Ok(c) if !c.grazing => Some(EvalHit {
                address: (c.next.scatterer, c.shift),
                r: c.next.r,
                phi: c.next.phi,
                cos_next: c.next.phi.cos(),
            }),
            _ => None,
        };
        Eval { t, hit }
    }

    fn image_gap(&self, a: &EvalHit, b: &EvalHit) -> f64 {
        let perim = self.table.perimeter(a.address.0);
        let mut dr = (b.r - a.r).rem_euclid(perim);
        if dr > perim / 2.0 {
            dr -= perim;
        }
        let dphi = b.phi - a.phi;
        (dr * dr + dphi * dphi).sqrt()
    }

    fn gap_limit(&self, a: &EvalHit, b: &EvalHit) -> f64 {
        if a.cos_next.min(b.cos_next) < self.params.grazing_refine_cos {
            self.params.max_image_gap * 0.25
        } else {
            self.params.max_image_gap
        }
    }

    /// Appends to `out` all refined evaluations in (a, b], assuming `a` is
    /// already appended. Splits until adjacent images share an address and
    /// sit within the gap limit, or the source interval reaches the cut
    /// tolerance.
    fn refine(&mut self, a: Eval, b: Eval, out: &mut Vec<Eval>) -> Result<(), CurveError> {
        if b.t - a.t <= self.params.cut_tolerance {
            if let (Some(x), Some(y)) = (&a.hit, &b.hit) {
                if x.address == y.address {
                    let gap = self.image_gap(x, y);
                    if gap > self.gap_limit(x, y) {
                        self.max_unresolved_gap = self.max_unresolved_gap.max(gap);
                    }
                }
            }
            out.push(b);
            return Ok(());
        }
        let acceptable = match (&a.hit, &b.hit) {
            (Some(x), Some(y)) => {
                x.address == y.address && self.image_gap(x, y) <= self.gap_limit(x, y)
            }
            _ => false,
        };
        if acceptable {
            out.push(b);
            return Ok(());
        }
        if self.evals_used >= self.params.max_evals {
            return Err(CurveError::RefinementBudgetExceeded {
                lo: a.t,
                hi: b.t,
                evaluations: self.evals_used,
            });
        }
        let mid = self.eval(0.5 * (a.t + b.t));
        self.refine(a, mid, out)?;
        self.refine(mid, b, out)
    }

    fn refined_evals(&mut self) -> Result<Vec<Eval>, CurveError> {
        let base: Vec<Eval> = self
            .curve
            .samples
            .iter()
            .map(|&(r, _)| self.eval(r))
            .collect();
        let mut out = Vec::with_capacity(base.len() * 2);
        out.push(base[0]);
        for pair in base.windows(2) {
            self.refine(pair[0], pair[1], &mut out)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LeafStats {
    evals: usize,
    max_unresolved_gap: f64,
    /// Crossings of the level cos phi' = grazing_refine_cos along the
    /// parent: entries/exits of an epsilon-neighborhood of the singularity
    /// set, the transversality count of (F3).
    s1_crossings: usize,
}

/// Evolves one curve a single step, returning the child leaves in order
/// along the parent.
fn evolve_leaf(
    table: &Table,
    curve: &UnstableCurve,
    params: &EvolveParams,
    parent_idx: usize,
) -> Result<(Vec<UnstableCurve>, LeafStats), CurveError> {
    let mut rf = Refiner {
        table,
        params,
        curve,
        evals_used: 0,
        max_unresolved_gap: 0.0,
    };
    let evals = rf.refined_evals()?;
    let mut leaves = Vec::new();
    let mut run: Vec<&EvalHit> = Vec::new();
    let mut run_address = None;
    let mut crossings = 0usize;
    let mut inside_band = None::<bool>;
    let mut flush = |run: &mut Vec<&EvalHit>| {
        if !run.is_empty() {
            leaves.push(build_leaf(table, run, curve.generation + 1, parent_idx));
            run.clear();
        }
    };
    for e in &evals {
        let band_state = match &e.hit {
            Some(h) => h.cos_next < params.grazing_refine_cos,
            None => true,
        };
        if inside_band.is_some_and(|prev| prev != band_state) {
            crossings += 1;
        }
        inside_band = Some(band_state);
        match &e.hit {
            Some(h) => {
                if run_address != Some(h.address) {
                    flush(&mut run);
                    run_address = Some(h.address);
                }
                run.push(h);
            }
            None => {
                flush(&mut run);
                run_address = None;
            }
        }
    }
    flush(&mut run);
    Ok((
        leaves,
        LeafStats {
            evals: rf.evals_used,
            max_unresolved_gap: rf.max_unresolved_gap,
            s1_crossings: crossings,
        },
    ))
}

/// Assembles an image polyline from a same-address run: unwraps r along
/// the run, then reverses it, because DT carries positive-dr cone vectors
/// to negative dr (the map flips chart orientation).
fn build_leaf(
    table: &Table,
    run: &[&EvalHit],
    generation: u32,
    ancestry: usize,
) -> UnstableCurve {
    let scatterer = run[0].address.0;
    let perim = table.perimeter(scatterer);
    let mut samples = Vec::with_capacity(run.len());
    let mut acc = run[0].r;
    let mut prev_wrapped = run[0].r;
    samples.push((acc, run[0].phi));
    for h in &run[1..] {
        let mut d = (h.r - prev_wrapped).rem_euclid(perim);
        if d > perim / 2.0 {
            d -= perim;
        }
        acc += d;
        prev_wrapped = h.r;
        samples.push((acc, h.phi));
    }
    samples.reverse();
    // drop the rare duplicate produced when two evaluations straddling a
    // located cut collapse to the same image point
    samples.dedup_by(|next, prev| next.0 <= prev.0);
    UnstableCurve {
        scatterer,
        samples,
        generation,
        ancestry,
    }
}

/// One evolution step of a single curve.
pub fn evolve_once(
    table: &Table,
    w: &UnstableCurve,
    params: &EvolveParams,
) -> Result<LeafSet, CurveError> {
    w.validate(table).map_err(CurveError::BadCurve)?;
    let (children, _) = evolve_leaf(table, w, params, w.ancestry)?;
    Ok(LeafSet::from_leaves(children, w.generation + 1))
}

/// Source parameters of the cut points of T restricted to `w`: midpoints
/// of the bisection brackets wherever the branch address changes or an
/// evaluation is singular.
pub fn locate_cuts(
    table: &Table,
    w: &UnstableCurve,
    params: &EvolveParams,
) -> Result<Vec<f64>, CurveError> {
    w.validate(table).map_err(CurveError::BadCurve)?;
    let mut rf = Refiner {
        table,
        params,
        curve: w,
        evals_used: 0,
        max_unresolved_gap: 0.0,
    };
    let evals = rf.refined_evals()?;
    let mut cuts = Vec::new();
    for pair in evals.windows(2) {
        let same = match (&pair[0].hit, &pair[1].hit) {
            (Some(x), Some(y)) => x.address == y.address,
            (None, None) => true,
            _ => false,
        };
        if !same {
            cuts.push(0.5 * (pair[0].t + pair[1].t));
        }
    }
    Ok(cuts)
}

/// Full evolution record across generations.
#[derive(Debug, Clone, Serialize)]
pub struct EvolveReport {
    /// counts[k] = #G_k(W), counting every leaf including sub-cutoff ones.
    pub counts: Vec<usize>,
    pub total_lengths: Vec<f64>,
    pub max_leaf_lengths: Vec<f64>,
    /// Leaves under min_leaf_length excluded from each evolution step.
    pub dropped_short: Vec<usize>,
    pub max_unresolved_gap: f64,
    pub max_s1_crossings: usize,
    pub evaluations: usize,
    pub final_leaves: LeafSet,
}

/// Evolves a seed n steps, recording counts for every generation. Leaves
/// evolve independently (in parallel when enabled); children are folded in
/// parent order, so counts are identical for any thread count.
pub fn evolve(
    table: &Table,
    seed: UnstableCurve,
    n: u32,
    params: &EvolveParams,
) -> Result<EvolveReport, CurveError> {
    seed.validate(table).map_err(CurveError::BadCurve)?;
    let mut counts = vec![1usize];
    let mut total_lengths = vec![seed.length()];
    let mut max_leaf_lengths = vec![seed.length()];
    let mut dropped_short = Vec::new();
    let mut max_unresolved_gap: f64 = 0.0;
    let mut max_s1_crossings = 0usize;
    let mut evaluations = 0usize;
    let mut leaves = vec![seed];
    let mut generation = 0;
    for gen in 1..=n {
        let survivors: Vec<UnstableCurve> = leaves
            .drain(..)
            .filter(|l| l.samples.len() >= 2 && l.length() >= params.min_leaf_length)
            .collect();
        dropped_short.push(counts[gen as usize - 1] - survivors.len());
        let results = exec::map_indexed(survivors.len(), |i| {
            evolve_leaf(table, &survivors[i], params, i)
        });
        let mut next = Vec::new();
        for r in results {
            let (kids, stats) = r?;
            evaluations += stats.evals;
            max_unresolved_gap = max_unresolved_gap.max(stats.max_unresolved_gap);
            max_s1_crossings = max_s1_crossings.max(stats.s1_crossings);
            next.extend(kids);
        }
        counts.push(next.len());
        total_lengths.push(next.iter().map(UnstableCurve::length).sum());
        max_leaf_lengths.push(
            next.iter()
                .map(UnstableCurve::length)
                .fold(0.0, f64::max),
        );
        leaves = next;
        generation = gen;
    }
    Ok(EvolveReport {
        counts,
        total_lengths,
        max_leaf_lengths,
        dropped_short,
        max_unresolved_gap,
        max_s1_crossings,
        evaluations,
        final_leaves: LeafSet::from_leaves(leaves, generation),
    })
}

/// Empirical verdicts on the growth facts, with the fitted constants.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthFacts {
    pub h_fit: f64,
    pub per_seed_h: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
    /// sup over seeds and n of (ln #G_n - h_fit n); exp of this is the
    /// smallest upper-envelope constant.
    pub c2_log_envelope: f64,
    /// Range of the envelope residuals over the fit window; a bounded,
    /// non-trending residual is the checkable form of the upper bound.
    pub envelope_spread: f64,
    pub f2a_pass: bool,
    /// Growth rate while every leaf is still shorter than delta_prime;
    /// the short-regime fact says this stays well under h.
    pub f1_hprime_fit: f64,
    pub f1_pass: bool,
    /// Per short seed: smallest constant with |T^n W| <= c |W|^(2^(-s0 n))
    /// over the continuous regime (no cut yet).
    pub f2c_c2: Vec<f64>,
    pub f2c_pass: bool,
    /// Max crossings of the grazing band boundary per evolved leaf.
    pub n_s_measured: usize,
    pub f3_pass: bool,
}

/// Residual-range cap for the upper-envelope verdict, in nats.
pub const F2A_SPREAD_CAP: f64 = 1.0;
/// Leaf-length ceiling defining the short regime of the few-leaves fact.
pub const F1_DELTA_PRIME: f64 = 0.05;
/// Stability factor required of the super-growth constant across seeds.
pub const F2C_STABILITY: f64 = 10.0;
/// Transversality crossing cap per leaf.
pub const F3_CROSSING_CAP: usize = 64;

pub fn check_growth_facts(
    table: &Table,
    seeds: &[UnstableCurve],
    n_max: u32,
    params: &EvolveParams,
    s0_hat: f64,
) -> Result<GrowthFacts, CurveError> {
    if n_max < 6 {
        return Err(CurveError::InsufficientData(n_max));
    }
    let mut counts = Vec::new();
    let mut per_seed_h = Vec::new();
    let mut reports = Vec::new();
    for seed in seeds {
        let rep = evolve(table, seed.clone(), n_max, params)?;
        let series: Vec<(usize, u64)> = rep
            .counts
            .iter()
            .enumerate()
            .map(|(n, &c)| (n, c as u64))
            .collect();
        let h = fit_growth_rate(&series, (n_max as usize / 2, n_max as usize))
            .map_err(|e| CurveError::BadCurve(format!("count fit failed: {e}")))?;
        per_seed_h.push(h);
        counts.push(rep.counts.clone());
        reports.push(rep);
    }
    let h_fit = per_seed_h.iter().sum::<f64>() / per_seed_h.len() as f64;

    let mut envelope = f64::NEG_INFINITY;
    let mut window_lo = f64::INFINITY;
    let mut window_hi = f64::NEG_INFINITY;
    for series in &counts {
        for (n, &c) in series.iter().enumerate() {
            let resid = (c as f64).ln() - h_fit * n as f64;
            envelope = envelope.max(resid);
            if n >= n_max as usize / 2 {
                window_lo = window_lo.min(resid);
                window_hi = window_hi.max(resid);
            }
        }
    }
    let envelope_spread = window_hi - window_lo;
    let f2a_pass = envelope_spread <= F2A_SPREAD_CAP;

    // short regime: fit the count growth while every leaf length so far
    // stays under delta_prime; applies to the shortest seed
    let shortest = reports
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.total_lengths[0]
                .partial_cmp(&b.1.total_lengths[0])
                .expect("finite lengths")
        })
        .map(|(i, _)| i)
        .expect("at least one seed");
    let short_rep = &reports[shortest];
    let mut short_end = 0;
    let mut running_max: f64 = 0.0;
    for (n, &ml) in short_rep.max_leaf_lengths.iter().enumerate() {
        running_max = running_max.max(ml);
        if running_max <= F1_DELTA_PRIME {
            short_end = n;
        } else {
            break;
        }
    }
    let (f1_hprime_fit, f1_pass) = if short_end >= 2 {
        let series: Vec<(usize, u64)> = short_rep.counts[..=short_end]
            .iter()
            .enumerate()
            .map(|(n, &c)| (n, c as u64))
            .collect();
        let hp = fit_growth_rate(&series, (0, short_end))
            .map_err(|e| CurveError::BadCurve(format!("short-regime fit failed: {e}")))?;
        (hp, hp < 0.5 * h_fit)
    } else {
        (0.0, false)
    };

    // super-growth: while T^n is continuous on W (a single leaf), image
    // length obeys |T^n W| <= C2 |W|^(2^(-s0 n))
    let mut f2c_c2 = Vec::new();
    for rep in &reports {
        let w0 = rep.total_lengths[0];
        if w0 >= 1.0 {
            continue;
        }
        let mut c2: f64 = 1.0;
        for (n, &len) in rep.total_lengths.iter().enumerate() {
            if rep.counts[n] != 1 {
                break;
            }
            let schedule = w0.powf(2f64.powf(-s0_hat * n as f64));
            c2 = c2.max(len / schedule);
        }
        f2c_c2.push(c2);
    }
    let f2c_pass = !f2c_c2.is_empty() && {
        let top = f2c_c2.iter().fold(f64::MIN, |a, &b| a.max(b));
        let bot = f2c_c2.iter().fold(f64::MAX, |a, &b| a.min(b));
        top <= F2C_STABILITY * bot
    };

    let n_s_measured = reports
        .iter()
        .map(|r| r.max_s1_crossings)
        .max()
        .unwrap_or(0);
    let f3_pass = n_s_measured <= F3_CROSSING_CAP;

    Ok(GrowthFacts {
        h_fit,
        per_seed_h,
        counts,
        c2_log_envelope: envelope,
        envelope_spread,
        f2a_pass,
        f1_hprime_fit,
        f1_pass,
        f2c_c2,
        f2c_pass,
        n_s_measured,
        f3_pass,
    })
}
