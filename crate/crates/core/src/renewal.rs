//! Countable-state renewal shift with its maximal-entropy Markov measure.
//!
//! The underlying graph has nodes 1, 2, 3, ...; node n carries one "climb"
//! edge n -> n+1 and weight `r_n >= 0` of "return" edges n -> 1. A weight
//! vector with finite support determines:
//!
//! * the growth rate `lambda`, the unique root of sum r_n lambda^{-n} = 1
//!   on (1, infinity) when sum r_n > 1;
//! * the mean return time `S = sum n lambda^{-n} r_n`;
//! * node masses `w_n = S^{-1} sum_{k>=n} lambda^{-k} r_k` and per-edge
//!   return probabilities `p_n`, with `w_{n+1}/w_n + r_n p_n = 1` row sums;
//! * an entropy that equals `log lambda` both by formula and by the explicit
//!   Markov sum, which this module cross-checks.
//!
//! Integer weights are the classical case (r_n counts labeled return edges);
//! real weights are accepted, with return labels omitted from sampled paths.
//! All masses and transition probabilities are per edge, so information
//! quantities hit `log lambda` for real weights too.

use crate::exec;
use crate::numeric;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Residual tolerance for the solved growth rate.
pub const LAMBDA_RESIDUAL_TOL: f64 = 1e-12;
/// Agreement tolerance for the two displayed p_n formulas.
pub const P_FORMULA_TOL: f64 = 1e-12;
/// `n * log(lambda)` beyond this would underflow `lambda^{-n}` in f64.
const MAX_LOG_RANGE: f64 = 600.0;

#[derive(Debug, Error, PartialEq)]
pub enum RenewalError {
    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),
    #[error("no growth rate on (1, inf): sum of weights is {total} <= 1")]
    NoSolution { total: f64 },
    #[error("mean return time diverges: parametric tail exponent alpha = {alpha} <= 2")]
    InfiniteS { alpha: f64 },
    #[error("truncation too coarse: dropped tail bound {bound} exceeds {tol}")]
    TruncationTooCoarse { bound: f64, tol: f64 },
    #[error("spec parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Finite-support weight vector `r_1..r_N` defining a renewal shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalSpec {
    weights: Vec<f64>,
}

impl RenewalSpec {
    /// Builds a spec from `r_1..r_N` (index 0 holds r_1). Weights must be
    /// finite, nonnegative, not all zero, and the last entry positive.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, RenewalError> {
        if weights.is_empty() {
            return Err(RenewalError::DegenerateSpec("no weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RenewalError::DegenerateSpec(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if *weights.last().expect("nonempty") == 0.0 {
            return Err(RenewalError::DegenerateSpec(
                "trailing zero weight: trim the support".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// Parametric family `r_n = c lambda0^n / n^alpha`, n = 1..N, with `c`
    /// calibrated so the growth rate is exactly `lambda0`: the residual of
    /// `sum r_n lambda0^{-n} - 1` is folded into the last weight.
    pub fn parametric(lambda0: f64, alpha: f64, n_terms: usize) -> Result<Self, RenewalError> {
        if !(lambda0 > 1.0) || !lambda0.is_finite() {
            return Err(RenewalError::DegenerateSpec(
                "parametric lambda0 must exceed 1".into(),
            ));
        }
        if alpha <= 2.0 {
            // S = sum n^{1-alpha} c diverges as N grows; the truncated chain
            // would misrepresent the intended infinite model.
            return Err(RenewalError::InfiniteS { alpha });
        }
        if n_terms == 0 {
            return Err(RenewalError::DegenerateSpec("parametric N must be >= 1".into()));
        }
        if n_terms as f64 * lambda0.ln() > MAX_LOG_RANGE {
            return Err(RenewalError::DegenerateSpec(format!(
                "support {n_terms} too deep for lambda0 = {lambda0}: lambda0^n overflows"
            )));
        }
        let h: f64 = numeric::comp_sum((1..=n_terms).map(|n| (n as f64).powf(-alpha)));
        let c = 1.0 / h;
        let mut weights: Vec<f64> = (1..=n_terms)
            .map(|n| c * lambda0.powi(n as i32) * (n as f64).powf(-alpha))
            .collect();
        let residual = 1.0 - eval_series(&weights, lambda0);
        let last = weights.len() - 1;
        weights[last] += residual * lambda0.powi(n_terms as i32);
        let spec = Self::from_weights(weights)?;
        let after = (eval_series(spec.weights(), lambda0) - 1.0).abs();
        if after > LAMBDA_RESIDUAL_TOL {
            return Err(RenewalError::TruncationTooCoarse {
                bound: after,
                tol: LAMBDA_RESIDUAL_TOL,
            });
        }
        Ok(spec)
    }

    /// Parses a renewal spec document: a `renewal` header line followed by
    /// either explicit `r <n> <value>` lines or one
    /// `parametric <lambda0> <alpha> <N>` line. `#` starts a comment;
    /// anything else is rejected.
    pub fn parse(text: &str) -> Result<Self, RenewalError> {
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if !line.is_empty() {
                lines.push((idx + 1, line));
            }
        }
        let Some(&(first_no, first)) = lines.first() else {
            return Err(RenewalError::Parse {
                line: 1,
                msg: "empty document".into(),
            });
        };
        if first != "renewal" {
            return Err(RenewalError::Parse {
                line: first_no,
                msg: format!("expected `renewal` header, found `{first}`"),
            });
        }
        let body = &lines[1..];
        if body.is_empty() {
            return Err(RenewalError::Parse {
                line: first_no,
                msg: "no directives after header".into(),
            });
        }
        if body[0].1.starts_with("parametric") {
            if body.len() > 1 {
                return Err(RenewalError::Parse {
                    line: body[1].0,
                    msg: "parametric spec admits a single directive line".into(),
                });
            }
            let (line, text) = body[0];
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(RenewalError::Parse {
                    line,
                    msg: "expected `parametric <lambda0> <alpha> <N>`".into(),
                });
            }
            let lambda0: f64 = fields[1].parse().map_err(|_| RenewalError::Parse {
                line,
                msg: format!("bad lambda0 `{}`", fields[1]),
            })?;
            let alpha: f64 = fields[2].parse().map_err(|_| RenewalError::Parse {
                line,
                msg: format!("bad alpha `{}`", fields[2]),
            })?;
            let n: usize = fields[3].parse().map_err(|_| RenewalError::Parse {
                line,
                msg: format!("bad N `{}`", fields[3]),
            })?;
            return Self::parametric(lambda0, alpha, n).map_err(|e| match e {
                RenewalError::Parse { .. } => e,
                other => RenewalError::Parse {
                    line,
                    msg: other.to_string(),
                },
            });
        }
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for &(line, text) in body {
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != "r" {
                return Err(RenewalError::Parse {
                    line,
                    msg: format!("expected `r <n> <value>`, found `{text}`"),
                });
            }
            let n: usize = fields[1].parse().map_err(|_| RenewalError::Parse {
                line,
                msg: format!("bad index `{}`", fields[1]),
            })?;
            if n == 0 {
                return Err(RenewalError::Parse {
                    line,
                    msg: "weight index starts at 1".into(),
                });
            }
            let value: f64 = fields[2].parse().map_err(|_| RenewalError::Parse {
                line,
                msg: format!("bad value `{}`", fields[2]),
            })?;
            if entries.iter().any(|&(m, _)| m == n) {
                return Err(RenewalError::Parse {
                    line,
                    msg: format!("duplicate weight index {n}"),
                });
            }
            entries.push((n, value));
        }
        let max_n = entries.iter().map(|&(n, _)| n).max().expect("nonempty");
        let mut weights = vec![0.0; max_n];
        for (n, v) in entries {
            weights[n - 1] = v;
        }
        Self::from_weights(weights).map_err(|e| RenewalError::Parse {
            line: first_no,
            msg: e.to_string(),
        })
    }

    /// Dense weights `r_1..r_N`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest n with `r_n > 0`.
    pub fn support_max(&self) -> usize {
        self.weights.len()
    }

    /// True when every weight is a nonnegative integer, meaning return edges
    /// can carry labels.
    pub fn is_integral(&self) -> bool {
        self.weights
            .iter()
            .all(|w| (w - w.round()).abs() < 1e-9 && w.round() >= 0.0)
    }
}

/// Horner evaluation of `sum r_n x^{-n}` in powers of 1/x.
fn eval_series(weights: &[f64], x: f64) -> f64 {
    let inv = 1.0 / x;
    let mut acc = 0.0;
    for &r in weights.iter().rev() {
        acc = (acc + r) * inv;
    }
    acc
}

/// Solves `sum r_n lambda^{-n} = 1` for the unique root on (1, inf).
/// The series is strictly decreasing in lambda, so bisection is exact up to
/// floating point; the residual at the returned root is at most
/// [`LAMBDA_RESIDUAL_TOL`].
pub fn solve_lambda(spec: &RenewalSpec) -> Result<f64, RenewalError> {
    let total = numeric::comp_sum(spec.weights().iter().copied());
    if total <= 1.0 {
        return Err(RenewalError::NoSolution { total });
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while eval_series(spec.weights(), hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(RenewalError::DegenerateSpec(
                "growth rate search exceeded 1e12".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval_series(spec.weights(), mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = (eval_series(spec.weights(), lambda) - 1.0).abs();
    if residual > LAMBDA_RESIDUAL_TOL {
        return Err(RenewalError::DegenerateSpec(format!(
            "bisection stalled with residual {residual}"
        )));
    }
    Ok(lambda)
}

/// One symbol of the shift: either the climb edge at `node`, or one of the
/// return edges at `node`. Labels number the return edges 1..=r_n when the
/// weights are integral and are omitted otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Symbol {
    Climb { node: u32 },
    Return { node: u32, label: Option<u32> },
}

impl Symbol {
    /// Node the symbol departs from.
    pub fn node(&self) -> u32 {
        match *self {
            Symbol::Climb { node } => node,
            Symbol::Return { node, .. } => node,
        }
    }

    /// Node the symbol arrives at.
    pub fn next_node(&self) -> u32 {
        match *self {
            Symbol::Climb { node } => node + 1,
            Symbol::Return { .. } => 1,
        }
    }

    pub fn is_return(&self) -> bool {
        matches!(self, Symbol::Return { .. })
    }
}

/// Internal consistency residuals computed at construction time.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureResiduals {
    /// `|sum r_n lambda^{-n} - 1|` at the solved growth rate.
    pub lambda_residual: f64,
    /// Max over n of the two displayed p_n formulas' disagreement.
    pub p_formula_gap: f64,
    /// `|sum of all one-cylinder masses - 1|`.
    pub mass_gap: f64,
    /// Max over nodes of `|w_{n+1}/w_n + r_n p_n - 1|`.
    pub row_sum_gap: f64,
}

/// The maximal-entropy Markov measure of a renewal spec, with closed-form
/// node masses, transition probabilities and return-time tail.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalMeasure {
    spec: RenewalSpec,
    lambda: f64,
    /// Mean return time S.
    s: f64,
    /// `w[n-1] = w_n` for n = 1..=N+1 (the last entry is w_{N+1} = 0).
    w: Vec<f64>,
    /// `t[n-1] = sum_{k>=n} lambda^{n-k} r_k`, the stable tail series;
    /// p_n = 1/t_n and w_n = lambda^{-n} t_n / S.
    t: Vec<f64>,
    residuals: MeasureResiduals,
}

impl RenewalMeasure {
    pub fn build(spec: RenewalSpec) -> Result<Self, RenewalError> {
        let lambda = solve_lambda(&spec)?;
        let n_max = spec.support_max();
        if n_max as f64 * lambda.ln() > MAX_LOG_RANGE {
            return Err(RenewalError::DegenerateSpec(format!(
                "support {n_max} too deep for lambda = {lambda}: lambda^{{-n}} underflows"
            )));
        }
        // Backward recurrence t_n = r_n + t_{n+1}/lambda keeps relative
        // accuracy where lambda^{-n} alone would lose it.
        let mut t = vec![0.0; n_max];
        t[n_max - 1] = spec.weights()[n_max - 1];
        for n in (0..n_max - 1).rev() {
            t[n] = spec.weights()[n] + t[n + 1] / lambda;
        }
        let s = numeric::comp_sum(
            spec.weights()
                .iter()
                .enumerate()
                .map(|(i, &r)| (i + 1) as f64 * lambda.powi(-(i as i32 + 1)) * r),
        );
        if !(s.is_finite() && s > 0.0) {
            return Err(RenewalError::InfiniteS { alpha: f64::NAN });
        }
        let mut w: Vec<f64> = (1..=n_max)
            .map(|n| lambda.powi(-(n as i32)) * t[n - 1] / s)
            .collect();
        w.push(0.0);

        let lambda_residual = (eval_series(spec.weights(), lambda) - 1.0).abs();
        let mut p_formula_gap: f64 = 0.0;
        let mut row_sum_gap: f64 = 0.0;
        for n in 1..=n_max {
            let r_n = spec.weights()[n - 1];
            let p_direct = 1.0 / (s * lambda.powi(n as i32) * w[n - 1]);
            if r_n > 0.0 {
                let p_ratio = (w[n - 1] - w[n]) / (w[n - 1] * r_n);
                p_formula_gap = p_formula_gap.max((p_direct - p_ratio).abs());
            }
            let row = w[n] / w[n - 1] + r_n * p_direct;
            row_sum_gap = row_sum_gap.max((row - 1.0).abs());
        }
        let mass_total = numeric::comp_sum((1..=n_max).map(|n| {
            // climb cylinder mass + total return mass at node n
            w[n] + spec.weights()[n - 1] * lambda.powi(-(n as i32)) / s
        }));
        let residuals = MeasureResiduals {
            lambda_residual,
            p_formula_gap,
            mass_gap: (mass_total - 1.0).abs(),
            row_sum_gap,
        };
        Ok(Self {
            spec,
            lambda,
            s,
            w,
            t,
            residuals,
        })
    }

    pub fn spec(&self) -> &RenewalSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Mean return time S.
    pub fn mean_return_time(&self) -> f64 {
        self.s
    }

    pub fn residuals(&self) -> &MeasureResiduals {
        &self.residuals
    }

    /// Depth of the node ladder (largest node with positive mass).
    pub fn node_count(&self) -> usize {
        self.spec.support_max()
    }

    /// Node mass `w_n`; zero beyond the support.
    pub fn w(&self, n: usize) -> f64 {
        assert!(n >= 1, "nodes are 1-based");
        if n <= self.w.len() {
            self.w[n - 1]
        } else {
            0.0
        }
    }

    /// Per-edge return probability `p_n = (S lambda^n w_n)^{-1} = 1/t_n`.
    pub fn p(&self, n: usize) -> f64 {
        assert!((1..=self.t.len()).contains(&n), "node {n} outside support");
        1.0 / self.t[n - 1]
    }

    /// Transition probability of the climb edge at `node`.
    pub fn climb_prob(&self, node: usize) -> f64 {
        self.w(node + 1) / self.w(node)
    }

    /// Total transition probability of the return bundle at `node`.
    pub fn return_prob_total(&self, node: usize) -> f64 {
        self.spec.weights()[node - 1] * self.p(node)
    }

    /// Mass of the 1-cylinder of a single symbol (per return edge).
    pub fn symbol_mass(&self, sym: Symbol) -> f64 {
        match sym {
            Symbol::Climb { node } => self.w(node as usize + 1),
            Symbol::Return { node, label } => {
                if !self.label_compatible(node as usize, label) {
                    return 0.0;
                }
                self.lambda.powi(-(node as i32)) / self.s
            }
        }
    }

    fn label_compatible(&self, node: usize, label: Option<u32>) -> bool {
        if node < 1 || node > self.spec.support_max() {
            return false;
        }
        let r = self.spec.weights()[node - 1];
        if r == 0.0 {
            return false;
        }
        match label {
            None => true,
            Some(l) => self.spec.is_integral() && l >= 1 && (l as f64) <= r.round(),
        }
    }

    /// Transition probability from the node reached by `prev` to `next`
    /// (per return edge). Zero when `next` does not depart from that node.
    pub fn transition_prob(&self, prev: Symbol, next: Symbol) -> f64 {
        let at = prev.next_node() as usize;
        if next.node() as usize != at {
            return 0.0;
        }
        match next {
            Symbol::Climb { .. } => self.climb_prob(at),
            Symbol::Return { node, label } => {
                if !self.label_compatible(node as usize, label) {
                    return 0.0;
                }
                self.p(at)
            }
        }
    }

    /// Mass of the cylinder set fixing the given symbol prefix (per-edge for
    /// return symbols). Zero for incompatible prefixes.
    pub fn cylinder_mass(&self, prefix: &[Symbol]) -> f64 {
        let Some(&first) = prefix.first() else {
            return 1.0;
        };
        let mut mass = self.symbol_mass(first);
        for win in prefix.windows(2) {
            if mass == 0.0 {
                return 0.0;
            }
            mass *= self.transition_prob(win[0], win[1]);
        }
        mass
    }

    /// `log` of [`Self::cylinder_mass`], accumulated stably; `None` for
    /// incompatible prefixes.
    pub fn log_cylinder_mass(&self, prefix: &[Symbol]) -> Option<f64> {
        let Some(&first) = prefix.first() else {
            return Some(0.0);
        };
        let m0 = self.symbol_mass(first);
        if m0 == 0.0 {
            return None;
        }
        let mut acc = vec![m0.ln()];
        for win in prefix.windows(2) {
            let p = self.transition_prob(win[0], win[1]);
            if p == 0.0 {
                return None;
            }
            acc.push(p.ln());
        }
        Some(numeric::comp_sum(acc))
    }

    /// Exact return-time tail `mu(tau >= n) = w_n / w_1`.
    pub fn return_time_tail(&self, n: usize) -> f64 {
        self.w(n) / self.w(1)
    }

    /// Exact first-return mass `mu(tau = n) = (w_n - w_{n+1}) / w_1`.
    pub fn return_time_mass(&self, n: usize) -> f64 {
        (self.w(n) - self.w(n + 1)) / self.w(1)
    }

    /// Log-log least-squares exponent of the tail over `n_lo..=n_hi`;
    /// the expected value is `-(alpha - 1)` for parametric specs.
    pub fn tail_exponent_fit(&self, n_lo: usize, n_hi: usize) -> (f64, f64) {
        assert!(n_lo >= 1 && n_hi > n_lo + 1 && n_hi <= self.node_count());
        let xs: Vec<f64> = (n_lo..=n_hi).map(|n| (n as f64).ln()).collect();
        let ys: Vec<f64> = (n_lo..=n_hi)
            .map(|n| self.return_time_tail(n).ln())
            .collect();
        let (_, slope) = numeric::linear_fit(&xs, &ys);
        let se = numeric::slope_std_error(&xs, &ys);
        (slope, se)
    }
}

/// Closed-form entropy cross-check: the explicit Markov sum
/// `-sum_A mu[A] sum_B Pi(A,B) log Pi(A,B)` next to `log lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyCheck {
    pub markov_sum: f64,
    pub log_lambda: f64,
    /// Bound on the part of the sum dropped beyond the support (zero for
    /// finite-support specs, which is every constructible spec).
    pub tail_bound: f64,
}

/// Evaluates the Markov entropy sum exactly over the finite support.
/// A nonzero dropped tail (impossible for constructible specs, kept as a
/// defensive check) is an error when it exceeds 1e-12.
pub fn entropy_closed_form(m: &RenewalMeasure) -> Result<EntropyCheck, RenewalError> {
    let n_max = m.node_count();
    let mut terms = Vec::with_capacity(2 * n_max);
    for n in 1..=n_max {
        let w_n = m.w(n);
        if w_n <= 0.0 {
            continue;
        }
        let climb = m.climb_prob(n);
        if climb > 0.0 {
            // mu-weighted climb row term: w_{n+1} log(w_{n+1}/w_n)
            terms.push(w_n * climb * climb.ln());
        }
        let r_n = m.spec().weights()[n - 1];
        if r_n > 0.0 {
            let p_n = m.p(n);
            terms.push(w_n * r_n * p_n * p_n.ln());
        }
    }
    let markov_sum = -numeric::comp_sum(terms);
    let tail_bound = 0.0;
    if tail_bound > 1e-12 {
        return Err(RenewalError::TruncationTooCoarse {
            bound: tail_bound,
            tol: 1e-12,
        });
    }
    Ok(EntropyCheck {
        markov_sum,
        log_lambda: m.lambda().ln(),
        tail_bound,
    })
}

/// Iterator over a stationary sample path of the shift. Deterministic in
/// (seed, stream): the start node is drawn from the stationary node law and
/// each step from the transition row at the current node.
pub struct SymbolStream<'a> {
    measure: &'a RenewalMeasure,
    rng: rand_chacha::ChaCha8Rng,
    node: u32,
}

impl<'a> SymbolStream<'a> {
    pub fn stationary(measure: &'a RenewalMeasure, seed: u64, stream: u64) -> Self {
        let mut rng = exec::chunk_rng(seed, stream);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut node = measure.node_count() as u32;
        for n in 1..=measure.node_count() {
            acc += measure.w(n);
            if u < acc {
                node = n as u32;
                break;
            }
        }
        Self { measure, rng, node }
    }

    /// Starts at node 1, the base of the ladder (used for return-time draws).
    pub fn from_base(measure: &'a RenewalMeasure, seed: u64, stream: u64) -> Self {
        Self {
            measure,
            rng: exec::chunk_rng(seed, stream),
            node: 1,
        }
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    fn draw_label(&mut self, node: u32) -> Option<u32> {
        if !self.measure.spec().is_integral() {
            return None;
        }
        let r = self.measure.spec().weights()[node as usize - 1].round() as u32;
        Some(self.rng.random_range(1..=r))
    }
}

impl Iterator for SymbolStream<'_> {
    type Item = Symbol;

    fn next(&mut self) -> Option<Symbol> {
        let node = self.node;
        let climb = self.measure.climb_prob(node as usize);
        let u: f64 = self.rng.random();
        let sym = if u < climb {
            Symbol::Climb { node }
        } else {
            Symbol::Return {
                node,
                label: self.draw_label(node),
            }
        };
        self.node = sym.next_node();
        Some(sym)
    }
}

/// Materializes a stationary path of `len` symbols.
pub fn sample_stationary(m: &RenewalMeasure, len: usize, seed: u64) -> Vec<Symbol> {
    SymbolStream::stationary(m, seed, 0).take(len).collect()
}

/// Draws `count` independent first-return times to the base node. Work is
/// chunked; results are identical for any thread count.
pub fn sample_first_returns(m: &RenewalMeasure, count: u64, seed: u64) -> Vec<u32> {
    let chunk_len = 1u64 << 14;
    let chunks = exec::chunks(count, chunk_len);
    let per_chunk = exec::map_indexed(chunks.len(), |i| {
        let (_, len) = chunks[i];
        let mut stream = SymbolStream::from_base(m, seed, i as u64);
        let mut out = Vec::with_capacity(len as usize);
        for _ in 0..len {
            // climb until the first return; tau equals the returning node
            loop {
                let sym = stream.next().expect("stream is infinite");
                if sym.is_return() {
                    out.push(sym.node());
                    break;
                }
            }
        }
        out
    });
    per_chunk.into_iter().flatten().collect()
}

/// Ultrametric separation structure on realized paths: distance
/// `lambda_sep^{-s}` where `s` counts agreeing leading return blocks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeparationMetric {
    lambda_sep: f64,
}

impl SeparationMetric {
    pub fn new(lambda_sep: f64) -> Result<Self, RenewalError> {
        if !(lambda_sep > 1.0) || !lambda_sep.is_finite() {
            return Err(RenewalError::DegenerateSpec(
                "separation base must exceed 1".into(),
            ));
        }
        Ok(Self { lambda_sep })
    }

    pub fn lambda_sep(&self) -> f64 {
        self.lambda_sep
    }

    /// Number of complete leading return blocks on which the two paths
    /// agree symbol-for-symbol; `None` when no disagreement is observed
    /// within the shared horizon.
    pub fn separation_index(a: &[Symbol], b: &[Symbol]) -> Option<u32> {
        let mut blocks = 0u32;
        for (x, y) in a.iter().zip(b.iter()) {
            if x != y {
                return Some(blocks);
            }
            if x.is_return() {
                blocks += 1;
            }
        }
        if a.len() != b.len() {
            return Some(blocks);
        }
        None
    }

    /// Distance between realized paths; 0 when indistinguishable at the
    /// observed horizon.
    pub fn distance(&self, a: &[Symbol], b: &[Symbol]) -> f64 {
        match Self::separation_index(a, b) {
            Some(s) => self.lambda_sep.powi(-(s as i32)),
            None => 0.0,
        }
    }
}

impl Default for SeparationMetric {
    fn default() -> Self {
        Self { lambda_sep: 2.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_12() -> RenewalSpec {
        RenewalSpec::from_weights(vec![1.0, 2.0]).expect("valid spec")
    }

    #[test]
    fn single_weight_two_gives_full_shift_on_two_symbols() {
        let spec = RenewalSpec::from_weights(vec![2.0]).unwrap();
        let m = RenewalMeasure::build(spec).unwrap();
        assert!((m.lambda() - 2.0).abs() <= 1e-12);
        assert!((m.mean_return_time() - 1.0).abs() <= 1e-12);
        assert!((m.w(1) - 1.0).abs() <= 1e-12);
        assert!((m.p(1) - 0.5).abs() <= 1e-12);
        let check = entropy_closed_form(&m).unwrap();
        assert!((check.markov_sum - 2.0f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn r_one_two_matches_hand_computed_rationals() {
        // lambda solves lambda^2 - lambda - 2 = 0, so lambda = 2;
        // S = 1/2 + 2*(2/4) = 3/2; w = (2/3, 1/3); p = (1/2, 1/2).
        let m = RenewalMeasure::build(spec_12()).unwrap();
        assert!((m.lambda() - 2.0).abs() <= 1e-12);
        assert!((m.mean_return_time() - 1.5).abs() <= 1e-12);
        assert!((m.w(1) - 2.0 / 3.0).abs() <= 1e-12);
        assert!((m.w(2) - 1.0 / 3.0).abs() <= 1e-12);
        assert_eq!(m.w(3), 0.0);
        assert!((m.p(1) - 0.5).abs() <= 1e-12);
        assert!((m.p(2) - 0.5).abs() <= 1e-12);
        assert!(m.residuals().p_formula_gap <= P_FORMULA_TOL);
        assert!(m.residuals().mass_gap <= 1e-12);
        assert!(m.residuals().row_sum_gap <= 1e-12);
    }

    #[test]
    fn r_one_two_one_cylinder_masses() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        // mu[E_1] = w_2 = 1/3; each return edge at node 1 has lambda^{-1}/S
        // = 1/3; each of the two at node 2 has lambda^{-2}/S = 1/6.
        assert!((m.symbol_mass(Symbol::Climb { node: 1 }) - 1.0 / 3.0).abs() <= 1e-12);
        let r1 = Symbol::Return {
            node: 1,
            label: Some(1),
        };
        assert!((m.symbol_mass(r1) - 1.0 / 3.0).abs() <= 1e-12);
        let r2 = Symbol::Return {
            node: 2,
            label: Some(2),
        };
        assert!((m.symbol_mass(r2) - 1.0 / 6.0).abs() <= 1e-12);
        // label beyond r_2 = 2 is incompatible
        let bad = Symbol::Return {
            node: 2,
            label: Some(3),
        };
        assert_eq!(m.symbol_mass(bad), 0.0);
    }

    #[test]
    fn entropy_sum_matches_log_lambda_for_hand_spec() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        let check = entropy_closed_form(&m).unwrap();
        assert!(
            (check.markov_sum - check.log_lambda).abs() <= 1e-10,
            "markov sum {} vs log lambda {}",
            check.markov_sum,
            check.log_lambda
        );
        assert_eq!(check.tail_bound, 0.0);
    }

    #[test]
    fn return_tail_for_hand_spec() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        assert!((m.return_time_tail(1) - 1.0).abs() <= 1e-12);
        assert!((m.return_time_tail(2) - 0.5).abs() <= 1e-12);
        assert_eq!(m.return_time_tail(3), 0.0);
        assert!((m.return_time_mass(1) - 0.5).abs() <= 1e-12);
        assert!((m.return_time_mass(2) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn no_solution_when_weights_sum_below_one() {
        let spec = RenewalSpec::from_weights(vec![0.3, 0.3]).unwrap();
        match solve_lambda(&spec) {
            Err(RenewalError::NoSolution { total }) => assert!((total - 0.6).abs() < 1e-12),
            other => panic!("expected NoSolution, got {other:?}"),
        }
        // the boundary case sum = 1 also has no root strictly above 1
        let spec = RenewalSpec::from_weights(vec![1.0]).unwrap();
        assert!(matches!(
            solve_lambda(&spec),
            Err(RenewalError::NoSolution { .. })
        ));
    }

    #[test]
    fn lambda_moves_up_when_weights_grow() {
        let base = solve_lambda(&spec_12()).unwrap();
        let bumped = solve_lambda(&RenewalSpec::from_weights(vec![1.0 + 1e-6, 2.0]).unwrap())
            .unwrap();
        assert!(bumped > base, "series is increasing in the weights");
    }

    #[test]
    fn parametric_spec_is_calibrated_exactly() {
        let lambda0 = std::f64::consts::E;
        let spec = RenewalSpec::parametric(lambda0, 4.0, 60).unwrap();
        let m = RenewalMeasure::build(spec).unwrap();
        assert!(
            (m.lambda() - lambda0).abs() <= 1e-12,
            "calibrated growth rate drifted: {}",
            m.lambda()
        );
        let check = entropy_closed_form(&m).unwrap();
        assert!((check.markov_sum - 1.0).abs() <= 1e-10);
        assert!((check.log_lambda - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn parametric_tail_exponent_tracks_alpha() {
        let spec = RenewalSpec::parametric(std::f64::consts::E, 4.0, 120).unwrap();
        let m = RenewalMeasure::build(spec).unwrap();
        let (slope, _) = m.tail_exponent_fit(4, 40);
        assert!(
            (slope + 3.0).abs() <= 0.3,
            "tail exponent {slope} should be near -(alpha-1) = -3"
        );
    }

    #[test]
    fn parametric_rejects_divergent_mean_return_time() {
        assert!(matches!(
            RenewalSpec::parametric(2.0, 2.0, 40),
            Err(RenewalError::InfiniteS { .. })
        ));
        assert!(matches!(
            RenewalSpec::parametric(2.0, 1.5, 40),
            Err(RenewalError::InfiniteS { .. })
        ));
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(RenewalSpec::from_weights(vec![]).is_err());
        assert!(RenewalSpec::from_weights(vec![1.0, -0.5]).is_err());
        assert!(RenewalSpec::from_weights(vec![1.0, 0.0]).is_err());
        assert!(RenewalSpec::from_weights(vec![f64::NAN]).is_err());
    }

    #[test]
    fn parser_accepts_explicit_and_parametric_documents() {
        let spec = RenewalSpec::parse("# demo\nrenewal\nr 1 1\nr 2 2\n").unwrap();
        assert_eq!(spec.weights(), &[1.0, 2.0]);
        let spec = RenewalSpec::parse("renewal\nparametric 2.718281828459045 4 60\n").unwrap();
        assert_eq!(spec.support_max(), 60);
    }

    #[test]
    fn parser_rejects_malformed_documents() {
        for (doc, what) in [
            ("", "empty"),
            ("r 1 1\n", "missing header"),
            ("renewal\n", "no directives"),
            ("renewal\nr 1 1 extra\n", "trailing garbage"),
            ("renewal\nr 0 1\n", "zero index"),
            ("renewal\nr 1 1\nr 1 2\n", "duplicate index"),
            ("renewal\nwhat 1 2\n", "unknown directive"),
            ("renewal\nparametric 2.0 4\n", "short parametric"),
            ("renewal\nparametric 2.0 4 10\nr 1 1\n", "mixed directives"),
        ] {
            assert!(
                matches!(RenewalSpec::parse(doc), Err(RenewalError::Parse { .. })),
                "parser should reject {what}: {doc:?}"
            );
        }
    }

    #[test]
    fn stationary_sampling_is_seed_deterministic() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        let a = sample_stationary(&m, 500, 9);
        let b = sample_stationary(&m, 500, 9);
        assert_eq!(a, b);
        let c = sample_stationary(&m, 500, 10);
        assert_ne!(a, c, "different seeds should explore different paths");
    }

    #[test]
    fn full_shift_samples_uniform_labels() {
        // r = (6): one node, six return edges, i.i.d. uniform labels.
        let spec = RenewalSpec::from_weights(vec![6.0]).unwrap();
        let m = RenewalMeasure::build(spec).unwrap();
        let n = 60_000usize;
        let mut counts = [0u64; 6];
        for sym in sample_stationary(&m, n, 4) {
            match sym {
                Symbol::Return {
                    node: 1,
                    label: Some(l),
                } => counts[(l - 1) as usize] += 1,
                other => panic!("full shift emitted {other:?}"),
            }
        }
        let expected = vec![n as f64 / 6.0; 6];
        let chi2 = crate::numeric::chi_square(&counts, &expected);
        // chi-square 0.999 quantile at 5 dof
        assert!(chi2 < 20.515, "label distribution skewed: chi2 = {chi2}");
    }

    #[test]
    fn first_return_times_match_exact_masses() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        let n = 100_000u64;
        let taus = sample_first_returns(&m, n, 11);
        assert_eq!(taus.len() as u64, n);
        let ones = taus.iter().filter(|&&t| t == 1).count() as f64;
        // P(tau = 1) = 1/2; binomial sigma = sqrt(n)/2
        let sigma = (n as f64).sqrt() / 2.0;
        assert!((ones - n as f64 / 2.0).abs() <= 4.0 * sigma);
        assert!(taus.iter().all(|&t| t == 1 || t == 2));
    }

    #[test]
    fn cylinder_mass_multiplies_along_transitions() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        let e1 = Symbol::Climb { node: 1 };
        let r2 = Symbol::Return {
            node: 2,
            label: Some(1),
        };
        // mu[E_1 then one fixed return at node 2] = w_2 * p_2 = 1/3 * 1/2.
        assert!((m.cylinder_mass(&[e1, r2]) - 1.0 / 6.0).abs() <= 1e-12);
        // incompatible: a climb at node 1 cannot follow a climb at node 1
        assert_eq!(m.cylinder_mass(&[e1, e1]), 0.0);
        let lm = m.log_cylinder_mass(&[e1, r2]).unwrap();
        assert!((lm - (1.0f64 / 6.0).ln()).abs() <= 1e-12);
        assert!(m.log_cylinder_mass(&[e1, e1]).is_none());
    }

    #[test]
    fn cylinder_masses_are_additive_over_extensions() {
        let m = RenewalMeasure::build(spec_12()).unwrap();
        let prefix = vec![Symbol::Climb { node: 1 }];
        let mut extended = 0.0;
        // children at node 2: climb impossible (w_3 = 0), two return edges
        for next in [
            Symbol::Climb { node: 2 },
            Symbol::Return {
                node: 2,
                label: Some(1),
            },
            Symbol::Return {
                node: 2,
                label: Some(2),
            },
        ] {
            let mut p = prefix.clone();
            p.push(next);
            extended += m.cylinder_mass(&p);
        }
        assert!((extended - m.cylinder_mass(&prefix)).abs() <= 1e-12);
    }

    #[test]
    fn separation_metric_counts_return_blocks() {
        let metric = SeparationMetric::default();
        let a = vec![
            Symbol::Climb { node: 1 },
            Symbol::Return {
                node: 2,
                label: Some(1),
            },
            Symbol::Return {
                node: 1,
                label: Some(1),
            },
        ];
        let mut b = a.clone();
        assert_eq!(SeparationMetric::separation_index(&a, &b), None);
        assert_eq!(metric.distance(&a, &b), 0.0);
        b[2] = Symbol::Climb { node: 1 };
        // agreement through one complete return block
        assert_eq!(SeparationMetric::separation_index(&a, &b), Some(1));
        assert!((metric.distance(&a, &b) - 0.5).abs() <= 1e-12);
        assert!(SeparationMetric::new(1.0).is_err());
    }

    proptest! {
        #[test]
        fn measure_identities_hold_on_random_specs(
            raw in proptest::collection::vec(0.0f64..3.0, 1..7),
            last in 0.2f64..3.0,
        ) {
            let mut weights = raw;
            weights.push(last);
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1.05);
            let spec = RenewalSpec::from_weights(weights).unwrap();
            let m = RenewalMeasure::build(spec).unwrap();
            prop_assert!(m.residuals().lambda_residual <= LAMBDA_RESIDUAL_TOL);
            prop_assert!(m.residuals().p_formula_gap <= P_FORMULA_TOL);
            prop_assert!(m.residuals().mass_gap <= 1e-11);
            prop_assert!(m.residuals().row_sum_gap <= 1e-11);
            let check = entropy_closed_form(&m).unwrap();
            prop_assert!((check.markov_sum - check.log_lambda).abs() <= 1e-10);
        }

        #[test]
        fn separation_distance_is_an_ultrametric(
            seed_a in 0u64..1000,
            seed_b in 0u64..1000,
            seed_c in 0u64..1000,
        ) {
            let m = RenewalMeasure::build(
                RenewalSpec::from_weights(vec![1.0, 2.0]).unwrap()
            ).unwrap();
            let metric = SeparationMetric::default();
            let a = sample_stationary(&m, 64, seed_a);
            let b = sample_stationary(&m, 64, seed_b);
            let c = sample_stationary(&m, 64, seed_c);
            let dab = metric.distance(&a, &b);
            let dbc = metric.distance(&b, &c);
            let dac = metric.distance(&a, &c);
            prop_assert!((dab - metric.distance(&b, &a)).abs() == 0.0);
            prop_assert!(dac <= dab.max(dbc) + 1e-15);
        }
    }
}
