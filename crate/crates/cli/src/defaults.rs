//! Central registry of run defaults.
//!
//! Every numeric budget, cutoff or tolerance the front end uses starts
//! here and nowhere else; each budget has a matching flag override, while
//! the verification tolerances are deliberately pinned (a battery whose
//! bar can be moved from the command line certifies nothing).

/// Master seed when `--seed` is not given.
pub const SEED: u64 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MME_OUT_DIR";
/// Fallback output directory when neither `--out` nor the environment
/// variable is set.
pub const OUT_DIR: &str = "mme-out";

// map-test: collision-map correctness battery.

/// Random phase points per residual check.
pub const MAP_TEST_POINTS: usize = 10_000;
/// Orbit starts for the expansion-exponent check.
pub const MAP_TEST_EXPANSION_POINTS: usize = 100;
/// Orbit length for the expansion-exponent check.
pub const MAP_TEST_EXPANSION_STEPS: usize = 50;
/// Max |T^{-1}(T x) - x| in the chart metric.
pub const REVERSIBILITY_TOL: f64 = 1e-9;
/// Max ||det DT| cos(phi') / cos(phi) - 1|.
pub const JACOBIAN_TOL: f64 = 1e-6;
/// Points with cos(phi) below this are skipped in residual batteries;
/// the identity still holds there but loses float digits.
pub const GRAZING_GUARD_COS: f64 = 1e-3;
/// The accumulated expansion exponent may sit this far below
/// log(lambda_hyp) before the battery fails.
pub const EXPANSION_SLACK: f64 = 1e-2;

// leaves: single-curve evolution.

pub const LEAF_CENTER: f64 = 0.7;
pub const LEAF_PHI: f64 = 0.1;
/// Seed chart length; long enough to meet the first cuts within a few
/// generations.
pub const LEAF_LENGTH: f64 = 0.02;
pub const LEAF_SAMPLES: usize = 33;
pub const LEAF_GENERATIONS: u32 = 6;

// entropy: multi-seed growth-rate estimate.

pub const ENTROPY_N_MAX: u32 = 10;
pub const ENTROPY_SEEDS: usize = 5;
/// Long enough that randomly placed seeds meet their first cuts well
/// before the fit window opens at depth n_max/2; deep runs should shrink
/// this together with raising `--n-max` to stay inside the eval budget.
pub const ENTROPY_SEED_LENGTH: f64 = 5e-3;
pub const ENTROPY_SEED_SAMPLES: usize = 9;
/// Seed centers draw phi uniformly from +-this band.
pub const ENTROPY_PHI_SPREAD: f64 = 0.3;

// sparse: recurrence-fraction sampling.

pub const SPARSE_POINTS: usize = 4_000;
pub const SPARSE_ORBIT_LEN: usize = 400;
pub const SPARSE_K_BOUND: f64 = 3.0;
pub const SPARSE_EPS0: f64 = 0.72;
pub const SPARSE_LADDER: usize = 5;

// complexity: singularity multiplicity probe.

pub const COMPLEXITY_N_MAX: u32 = 6;
pub const COMPLEXITY_SAMPLES: usize = 2_000;
pub const COMPLEXITY_RADIUS: f64 = 1e-3;

// renewal / operator.

/// Truncation length for parametric (polynomial-tail) specs.
pub const PARAMETRIC_TERMS: usize = 120;
/// Leading w_n / p_n terms included in reports and CSV series.
pub const SERIES_TERMS: usize = 16;
pub const OPERATOR_N_MAX: usize = 30;
pub const OPERATOR_PROBE_STEPS: usize = 60;

// correlate / clt: Monte Carlo budgets.

pub const CORRELATE_STEPS: u64 = 10_000_000;
pub const CORRELATE_BATCHES: usize = 50;
pub const CORRELATE_MAX_LAG: usize = 60;
pub const CORRELATE_FIT_LO: usize = 4;
pub const CORRELATE_FIT_HI: usize = 40;
/// Cap for the node-depth observable rule.
pub const NODE_DEPTH_CAP: u32 = 8;
pub const CLT_N_BLOCK: usize = 1_000;
pub const CLT_REPLICATES: usize = 10_000;
/// Budget of the side correlation run that supplies sigma^2 when
/// `--sigma2` is not given.
pub const CLT_GK_STEPS: u64 = 2_000_000;
pub const CLT_GK_BATCHES: usize = 20;
pub const CLT_GK_CUTOFF: usize = 30;
