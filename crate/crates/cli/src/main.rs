//! `mme`: command-line front end for the billiard and renewal-shift
//! laboratory in `mme-core`.
//!
//! Each subcommand maps one-to-one onto a library operation, writes a
//! `report.json` (and, with `--format csv`, plot-ready series files)
//! under one output directory, and finishes with a `manifest.json`
//! listing every artifact with its SHA-256 digest. Runs are deterministic:
//! the same argument vector and `--seed` reproduce every artifact byte
//! for byte, whatever `--threads` says.
//!
//! Exit codes: 0 on success, 2 when arguments or input documents fail
//! validation, 3 when a computation exhausts its numerical budget or a
//! verification battery fails. The manifest is written only by runs that
//! exit 0; in-flight files carry a `.partial` suffix, so an interrupted
//! run never leaves an unflagged artifact.

mod defaults;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mme_core::curves::{self, CurveError, EvolveParams, UnstableCurve};
use mme_core::entropy::{self, EntropyError, SparseParams};
use mme_core::map::{self, MapError, OrbitError, PhasePoint, TangentVector};
use mme_core::operator::{self, OperatorError};
use mme_core::renewal::{self, RenewalError, RenewalMeasure, RenewalSpec};
use mme_core::stats::{self, CorrelationConfig, Observable, StatsError, SymbolRule};
use mme_core::table::{
    ScanParams, Table, TableConfig, TableError, DEFAULT_Q_MAX, DEFAULT_SWEEP_OFFSETS,
    DEFAULT_SWEEP_RESOLUTION,
};
use mme_core::exec;
use output::OutDir;
use serde::Serialize;
use std::fmt;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mme",
    version,
    about = "Verification laboratory for dispersing-billiard entropy and renewal shifts",
    subcommand_required = true
)]
struct Cli {
    /// Master RNG seed; every stochastic subcommand is a pure function
    /// of it.
    #[arg(long, global = true, default_value_t = defaults::SEED)]
    seed: u64,
    /// Output directory (default: $MME_OUT_DIR, then ./mme-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// json writes report.json only; csv additionally writes the series
    /// files described in schemas/v1/csv.md.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker-thread cap. Results never depend on it; only wall time does.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a table file and certify its finite horizon.
    TableCheck(TableCheckArgs),
    /// Run the collision-map correctness battery on random phase points.
    MapTest(MapTestArgs),
    /// Evolve one unstable seed curve and report leaf growth.
    Leaves(LeavesArgs),
    /// Multi-seed leaf-count growth rate: the entropy estimate.
    Entropy(EntropyArgs),
    /// Sparse-recurrence fraction at a steepness cutoff.
    Sparse(SparseArgs),
    /// Singularity-complexity probe K_n by depth.
    Complexity(ComplexityArgs),
    /// Closed-form maximal-entropy measure of a renewal shift.
    Renewal(RenewalArgs),
    /// Truncated-operator counting identities and the norm dichotomy.
    Operator(OperatorArgs),
    /// Autocorrelation decay along stationary symbol paths.
    Correlate(CorrelateArgs),
    /// Central-limit check for normalized block sums.
    Clt(CltArgs),
    /// Merge entropy and recurrence estimates into the decay-tier verdict.
    Tiers(TiersArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::TableCheck(_) => "table-check",
            Cmd::MapTest(_) => "map-test",
            Cmd::Leaves(_) => "leaves",
            Cmd::Entropy(_) => "entropy",
            Cmd::Sparse(_) => "sparse",
            Cmd::Complexity(_) => "complexity",
            Cmd::Renewal(_) => "renewal",
            Cmd::Operator(_) => "operator",
            Cmd::Correlate(_) => "correlate",
            Cmd::Clt(_) => "clt",
            Cmd::Tiers(_) => "tiers",
        }
    }
}

/// Run failure with its exit-code class: user-facing validation (2) or a
/// numerical budget/verification failure (3).
#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "{m}"),
            Failure::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(format!("io error: {e}"))
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        match e {
            MapError::InvalidPoint(_) => Failure::Validation(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<OrbitError> for Failure {
    fn from(e: OrbitError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<CurveError> for Failure {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::RefinementBudgetExceeded { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<EntropyError> for Failure {
    fn from(e: EntropyError) -> Self {
        match e {
            EntropyError::DegenerateInput(_) | EntropyError::InsufficientData(_) => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<RenewalError> for Failure {
    fn from(e: RenewalError) -> Self {
        match e {
            RenewalError::TruncationTooCoarse { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<OperatorError> for Failure {
    fn from(e: OperatorError) -> Self {
        match e {
            OperatorError::TruncationLeak { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ZeroVariance(_) => Failure::Numerical(e.to_string()),
            StatsError::Rates(inner) => inner.into(),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let started = Instant::now();
    let out_dir = cli.out.clone().unwrap_or_else(|| {
        std::env::var_os(defaults::OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(defaults::OUT_DIR))
    });
    let run = || -> Result<String, Failure> {
        let mut out = OutDir::create(out_dir.clone())?;
        let summary = with_threads(cli.threads, || dispatch(&cli, &mut out))?;
        out.finish(
            argv,
            cli.cmd.name(),
            cli.seed,
            cli.threads,
            cli.format.as_str(),
            started.elapsed().as_millis(),
        )?;
        Ok(format!("{summary}\nartifacts: {}", out_dir.display()))
    };
    match run() {
        Ok(summary) => println!("{summary}"),
        Err(failure) => {
            eprintln!("error: {failure}");
            std::process::exit(failure.exit_code());
        }
    }
}

/// Runs `f` inside a capped worker pool when the parallel feature is on;
/// the sequential build ignores the cap (it is already single-threaded).
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool construction");
        return pool.install(f);
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}

fn dispatch(cli: &Cli, out: &mut OutDir) -> Result<String, Failure> {
    match &cli.cmd {
        Cmd::TableCheck(a) => cmd_table_check(cli, a, out),
        Cmd::MapTest(a) => cmd_map_test(cli, a, out),
        Cmd::Leaves(a) => cmd_leaves(cli, a, out),
        Cmd::Entropy(a) => cmd_entropy(cli, a, out),
        Cmd::Sparse(a) => cmd_sparse(cli, a, out),
        Cmd::Complexity(a) => cmd_complexity(cli, a, out),
        Cmd::Renewal(a) => cmd_renewal(cli, a, out),
        Cmd::Operator(a) => cmd_operator(cli, a, out),
        Cmd::Correlate(a) => cmd_correlate(cli, a, out),
        Cmd::Clt(a) => cmd_clt(cli, a, out),
        Cmd::Tiers(a) => cmd_tiers(cli, a, out),
    }
}

/// Wraps the report in the versioned envelope described by
/// schemas/v1/envelope.schema.json and writes it as `report.json`.
fn write_report(
    out: &mut OutDir,
    subcommand: &str,
    seed: u64,
    data: serde_json::Value,
) -> Result<serde_json::Value, Failure> {
    let envelope = serde_json::json!({
        "tool": "mme",
        "schema": "v1",
        "subcommand": subcommand,
        "seed": seed,
        "versions": {
            "mme-core": mme_core::VERSION,
            "mme-cli": env!("CARGO_PKG_VERSION"),
        },
        "data": data,
    });
    let body = serde_json::to_vec_pretty(&envelope)
        .map_err(|e| Failure::Validation(format!("report serialization: {e}")))?;
    out.write("report.json", &body)?;
    Ok(envelope)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Validation(format!("serialization: {e}")))
}

// ---------------------------------------------------------------- tables

/// `--table` flag shared by the billiard subcommands.
#[derive(Args, Clone)]
struct TableFlag {
    /// Table file (`disk cx cy radius` lines, optional `horizon_budget`);
    /// defaults to the built-in two-disk reference layout.
    #[arg(long)]
    table: Option<PathBuf>,
}

enum TableArg {
    Reference(&'static Table),
    File(Box<Table>),
}

impl std::ops::Deref for TableArg {
    type Target = Table;
    fn deref(&self) -> &Table {
        match self {
            TableArg::Reference(t) => t,
            TableArg::File(t) => t,
        }
    }
}

fn load_table(flag: &TableFlag, out: &mut OutDir) -> Result<TableArg, Failure> {
    match &flag.table {
        None => Ok(TableArg::Reference(Table::reference())),
        Some(path) => {
            let text = fs::read_to_string(path)?;
            out.register_input("table", text.as_bytes());
            let config = TableConfig::parse(&text)?;
            Ok(TableArg::File(Box::new(Table::validate(config)?)))
        }
    }
}

#[derive(Args)]
struct TableCheckArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Override the horizon budget from the file (or the default 3.0).
    #[arg(long)]
    budget: Option<f64>,
    /// Largest rational-direction denominator in the corridor scan.
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    qmax: u32,
    /// Angular resolution of the free-flight sweep.
    #[arg(long, default_value_t = DEFAULT_SWEEP_RESOLUTION)]
    resolution: f64,
    /// Transverse offsets per sweep direction.
    #[arg(long, default_value_t = DEFAULT_SWEEP_OFFSETS)]
    offsets: u32,
}

fn cmd_table_check(cli: &Cli, a: &TableCheckArgs, out: &mut OutDir) -> Result<String, Failure> {
    let mut config = match &a.table.table {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            out.register_input("table", text.as_bytes());
            TableConfig::parse(&text)?
        }
        None => TableConfig::reference(),
    };
    if let Some(budget) = a.budget {
        config.horizon_budget = budget;
    }
    let params = ScanParams {
        q_max: a.qmax,
        sweep_resolution: a.resolution,
        sweep_offsets: a.offsets,
    };
    let table = Table::validate_with(config, params)?;
    let d = table.derived();
    let data = serde_json::json!({
        "config": to_value(table.config())?,
        "derived": to_value(d)?,
    });
    write_report(out, "table-check", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&["q", "p", "corridor_width_cells"]);
        for c in &d.scan.corridors {
            csv_row!(csv, c.q, c.p, c.width);
        }
        out.write("corridors.csv", &csv.into_bytes())?;
    }
    Ok(format!(
        "table certified: {} scatterers, tau in [{:.6}, {:.6}] (budget {}), lambda_hyp {:.6}, \
         {} directions checked, {} open corridors",
        table.scatterers().len(),
        d.tau_min,
        d.tau_max,
        table.horizon_budget(),
        d.lambda_hyp,
        d.scan.directions_checked,
        d.scan.corridors.len(),
    ))
}

// -------------------------------------------------------------- map-test

#[derive(Args)]
struct MapTestArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Random phase points for the residual checks.
    #[arg(long, default_value_t = defaults::MAP_TEST_POINTS)]
    points: usize,
    /// Orbit length of the expansion-exponent check.
    #[arg(long, default_value_t = defaults::MAP_TEST_EXPANSION_STEPS)]
    expansion_steps: usize,
}

#[derive(Serialize)]
struct MapBattery {
    points: usize,
    reversibility_checked: usize,
    reversibility_max: f64,
    jacobian_checked: usize,
    jacobian_max: f64,
    cone_checked: usize,
    cone_min_margin: f64,
    expansion_orbits: usize,
    expansion_min_rate: f64,
    log_lambda_hyp: f64,
    flights_checked: usize,
    flight_min: f64,
    flight_max: f64,
    tau_min: f64,
    tau_max_scanned: f64,
    failures: Vec<String>,
}

/// Chart-metric distance, wrap-aware in r; infinite across scatterers.
fn chart_distance(table: &Table, a: PhasePoint, b: PhasePoint) -> f64 {
    if a.scatterer != b.scatterer {
        return f64::INFINITY;
    }
    let perim = table.perimeter(a.scatterer);
    let mut dr = (a.r - b.r).abs() % perim;
    if dr > perim / 2.0 {
        dr = perim - dr;
    }
    (dr * dr + (a.phi - b.phi) * (a.phi - b.phi)).sqrt()
}

fn cmd_map_test(cli: &Cli, a: &MapTestArgs, out: &mut OutDir) -> Result<String, Failure> {
    let table = load_table(&a.table, out)?;
    let t: &Table = &table;
    let d = t.derived();
    let cone = map::unstable_cone(t);
    let log_lambda = d.lambda_hyp.ln();

    // residual pass: reversibility, measure identity, cone edges
    let residuals = exec::map_indexed(a.points, |i| {
        let mut rng = exec::chunk_rng(cli.seed, i as u64);
        let x = map::sample_phase_point(t, &mut rng);
        let mut rev = None;
        let mut jac = None;
        let mut cone_margin = None;
        if let Ok(forward) = map::step(t, x) {
            if let Ok(back) = map::step_inverse(t, forward.next) {
                rev = Some(chart_distance(t, back.next, x));
            }
        }
        if let Ok(rep) = map::derivative(t, x) {
            if !rep.collision.grazing && rep.cos_phi >= defaults::GRAZING_GUARD_COS {
                jac = Some((rep.matrix.det().abs() * rep.cos_phi_next / rep.cos_phi - 1.0).abs());
            }
            // the derivative acts on slopes monotonically, so the image of
            // the band is bracketed by the images of its edges
            let lo = rep.matrix.apply(TangentVector::new(1.0, cone.lo));
            let hi = rep.matrix.apply(TangentVector::new(1.0, cone.hi));
            let margin = cone.margin(lo.slope()).min(cone.margin(hi.slope()));
            cone_margin = Some(if lo.dr == 0.0 || hi.dr == 0.0 {
                f64::NEG_INFINITY
            } else {
                margin
            });
        }
        (rev, jac, cone_margin)
    });

    // orbit pass: expansion exponent and flight bounds, one stream per
    // start, stream indices disjoint from the residual pass
    let orbits = exec::map_indexed(defaults::MAP_TEST_EXPANSION_POINTS, |i| {
        let mut rng = exec::chunk_rng(cli.seed, (a.points + i) as u64);
        let x = map::sample_phase_point(t, &mut rng);
        let slope = cone.lo + 0.5 * (cone.hi - cone.lo);
        let mut v = TangentVector::new(1.0, slope);
        let mut log_growth = -v.norm().ln();
        let mut current = x;
        let mut flight_min = f64::INFINITY;
        let mut flight_max = f64::NEG_INFINITY;
        for _ in 0..a.expansion_steps {
            let Ok(rep) = map::derivative(t, current) else {
                return None;
            };
            v = rep.matrix.apply(v);
            let norm = v.norm();
            log_growth += norm.ln();
            v = TangentVector::new(v.dr / norm, v.dphi / norm);
            flight_min = flight_min.min(rep.collision.tau);
            flight_max = flight_max.max(rep.collision.tau);
            current = rep.collision.next;
        }
        Some((
            log_growth / a.expansion_steps as f64,
            flight_min,
            flight_max,
        ))
    });

    let mut battery = MapBattery {
        points: a.points,
        reversibility_checked: 0,
        reversibility_max: 0.0,
        jacobian_checked: 0,
        jacobian_max: 0.0,
        cone_checked: 0,
        cone_min_margin: f64::INFINITY,
        expansion_orbits: 0,
        expansion_min_rate: f64::INFINITY,
        log_lambda_hyp: log_lambda,
        flights_checked: 0,
        flight_min: f64::INFINITY,
        flight_max: f64::NEG_INFINITY,
        tau_min: d.tau_min,
        tau_max_scanned: d.tau_max,
        failures: Vec::new(),
    };
    for (rev, jac, margin) in residuals {
        if let Some(r) = rev {
            battery.reversibility_checked += 1;
            battery.reversibility_max = battery.reversibility_max.max(r);
        }
        if let Some(j) = jac {
            battery.jacobian_checked += 1;
            battery.jacobian_max = battery.jacobian_max.max(j);
        }
        if let Some(m) = margin {
            battery.cone_checked += 1;
            battery.cone_min_margin = battery.cone_min_margin.min(m);
        }
    }
    for completed in orbits.into_iter().flatten() {
        let (rate, fmin, fmax) = completed;
        battery.expansion_orbits += 1;
        battery.expansion_min_rate = battery.expansion_min_rate.min(rate);
        battery.flights_checked += a.expansion_steps;
        battery.flight_min = battery.flight_min.min(fmin);
        battery.flight_max = battery.flight_max.max(fmax);
    }

    if battery.reversibility_max > defaults::REVERSIBILITY_TOL {
        battery.failures.push(format!(
            "reversibility residual {} exceeds {}",
            battery.reversibility_max,
            defaults::REVERSIBILITY_TOL
        ));
    }
    if battery.jacobian_max > defaults::JACOBIAN_TOL {
        battery.failures.push(format!(
            "measure-identity residual {} exceeds {}",
            battery.jacobian_max,
            defaults::JACOBIAN_TOL
        ));
    }
    if !(battery.cone_min_margin > 0.0) {
        battery.failures.push(format!(
            "cone preservation violated: minimal margin {}",
            battery.cone_min_margin
        ));
    }
    if battery.expansion_orbits == 0 {
        battery
            .failures
            .push("no expansion orbit completed without grazing".into());
    } else if battery.expansion_min_rate < log_lambda - defaults::EXPANSION_SLACK {
        battery.failures.push(format!(
            "expansion exponent {} below log lambda_hyp {} - {}",
            battery.expansion_min_rate,
            log_lambda,
            defaults::EXPANSION_SLACK
        ));
    }
    if battery.flights_checked > 0
        && (battery.flight_min < d.tau_min - 1e-12
            || battery.flight_max > d.tau_max + map::TAU_SCAN_SLACK)
    {
        battery.failures.push(format!(
            "flight range [{}, {}] leaves the certified band [{}, {}]",
            battery.flight_min,
            battery.flight_max,
            d.tau_min,
            d.tau_max + map::TAU_SCAN_SLACK
        ));
    }

    let failed = !battery.failures.is_empty();
    let summary = format!(
        "map battery over {} points: reversibility max {:.2e}, jacobian max {:.2e}, \
         cone margin min {:.3e}, expansion min {:.4} (log lambda_hyp {:.4}), {} failures",
        a.points,
        battery.reversibility_max,
        battery.jacobian_max,
        battery.cone_min_margin,
        battery.expansion_min_rate,
        log_lambda,
        battery.failures.len(),
    );
    let failures = battery.failures.clone();
    write_report(out, "map-test", cli.seed, to_value(&battery)?)?;
    if failed {
        return Err(Failure::Numerical(failures.join("; ")));
    }
    Ok(summary)
}

// ---------------------------------------------------------------- leaves

#[derive(Args)]
struct LeavesArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Scatterer index of the seed chart.
    #[arg(long, default_value_t = 0)]
    scatterer: usize,
    /// Seed arc-coordinate center.
    #[arg(long, default_value_t = defaults::LEAF_CENTER)]
    center: f64,
    /// Seed collision angle.
    #[arg(long, default_value_t = defaults::LEAF_PHI)]
    phi: f64,
    /// Seed chart length.
    #[arg(long, default_value_t = defaults::LEAF_LENGTH)]
    length: f64,
    /// Seed polyline samples.
    #[arg(long, default_value_t = defaults::LEAF_SAMPLES)]
    samples: usize,
    /// Generations to evolve.
    #[arg(long, default_value_t = defaults::LEAF_GENERATIONS)]
    generations: u32,
    /// Override the per-leaf evaluation budget.
    #[arg(long)]
    max_evals: Option<usize>,
}

fn cmd_leaves(cli: &Cli, a: &LeavesArgs, out: &mut OutDir) -> Result<String, Failure> {
    let table = load_table(&a.table, out)?;
    let mut params = EvolveParams::for_table(&table);
    if let Some(budget) = a.max_evals {
        params.max_evals = budget;
    }
    let seed_curve =
        UnstableCurve::seed(&table, a.scatterer, a.center, a.phi, a.length, a.samples)?;
    let report = curves::evolve(&table, seed_curve, a.generations, &params)?;
    let data = serde_json::json!({
        "scatterer": a.scatterer,
        "center": a.center,
        "phi": a.phi,
        "length": a.length,
        "generations": a.generations,
        "counts": report.counts,
        "total_lengths": report.total_lengths,
        "max_leaf_lengths": report.max_leaf_lengths,
        "dropped_short": report.dropped_short,
        "evaluations": report.evaluations,
        "max_unresolved_gap": report.max_unresolved_gap,
        "max_s1_crossings": report.max_s1_crossings,
        "final_count": report.final_leaves.count(),
        "final_length_histogram": to_value(&report.final_leaves.counts_by_length)?,
    });
    write_report(out, "leaves", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut growth = output::Csv::new(&[
            "generation",
            "leaf_count",
            "total_length_chart",
            "max_leaf_length_chart",
        ]);
        for (g, &count) in report.counts.iter().enumerate() {
            csv_row!(
                growth,
                g,
                count,
                report.total_lengths[g],
                report.max_leaf_lengths[g]
            );
        }
        out.write("growth.csv", &growth.into_bytes())?;
        let mut atlas = output::Csv::new(&[
            "leaf_id",
            "generation",
            "parent_id",
            "r_start_chart",
            "phi_start_rad",
            "r_end_chart",
            "phi_end_rad",
            "length_chart",
        ]);
        for (id, leaf) in report.final_leaves.leaves.iter().enumerate() {
            let first = leaf.samples.first().expect("validated leaves are nonempty");
            let last = leaf.samples.last().expect("validated leaves are nonempty");
            csv_row!(
                atlas,
                id,
                leaf.generation,
                leaf.ancestry,
                first.0,
                first.1,
                last.0,
                last.1,
                leaf.length()
            );
        }
        out.write("atlas.csv", &atlas.into_bytes())?;
    }
    Ok(format!(
        "leaf counts {:?} ({} evaluations, worst unresolved gap {:.2e})",
        report.counts, report.evaluations, report.max_unresolved_gap,
    ))
}

// --------------------------------------------------------------- entropy

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Deepest generation of the growth window.
    #[arg(long, default_value_t = defaults::ENTROPY_N_MAX)]
    n_max: u32,
    /// Number of independent seed curves.
    #[arg(long, default_value_t = defaults::ENTROPY_SEEDS)]
    seeds: usize,
    /// Chart length of every seed curve.
    #[arg(long, default_value_t = defaults::ENTROPY_SEED_LENGTH)]
    seed_length: f64,
    /// Polyline samples per seed curve.
    #[arg(long, default_value_t = defaults::ENTROPY_SEED_SAMPLES)]
    samples: usize,
}

/// Low-discrepancy seed placement: deterministic in (--seed, index), no
/// two seeds near each other, every scatterer covered.
fn place_seeds(
    table: &Table,
    master_seed: u64,
    count: usize,
    length: f64,
    samples: usize,
) -> Result<Vec<UnstableCurve>, Failure> {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let scatterers = table.scatterers().len();
    let mut seeds = Vec::with_capacity(count);
    for j in 0..count {
        let scatterer = j % scatterers;
        let base = (master_seed as f64 * GOLDEN).fract();
        let u = (base + (j as f64 + 1.0) * GOLDEN).fract();
        let center = u * table.perimeter(scatterer);
        let phi = defaults::ENTROPY_PHI_SPREAD * (2.0 * (u * 7.0).fract() - 1.0);
        let curve = UnstableCurve::seed(table, scatterer, center, phi, length, samples)?;
        seeds.push(curve);
    }
    Ok(seeds)
}

fn cmd_entropy(cli: &Cli, a: &EntropyArgs, out: &mut OutDir) -> Result<String, Failure> {
    let table = load_table(&a.table, out)?;
    let params = EvolveParams::for_table(&table);
    let seeds = place_seeds(&table, cli.seed, a.seeds, a.seed_length, a.samples)?;
    let est = entropy::estimate_h(&table, &seeds, a.n_max, &params)?;
    let placements: Vec<serde_json::Value> = seeds
        .iter()
        .map(|c| {
            let mid = c.samples[c.samples.len() / 2];
            serde_json::json!({"scatterer": c.scatterer, "r": mid.0, "phi": mid.1})
        })
        .collect();
    let data = serde_json::json!({
        "estimate": to_value(&est)?,
        "seed_length": a.seed_length,
        "placements": placements,
    });
    write_report(out, "entropy", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&["seed_id", "generation", "leaf_count"]);
        for (sid, counts) in est.counts.iter().enumerate() {
            for (g, &count) in counts.iter().enumerate() {
                csv_row!(csv, sid, g, count);
            }
        }
        out.write("growth.csv", &csv.into_bytes())?;
    }
    Ok(format!(
        "h_hat {:.4} nats/collision over window {:?} ({} seeds, spread {:.1}%)",
        est.h_hat,
        est.window,
        est.per_seed.len(),
        100.0 * est.spread,
    ))
}

// ---------------------------------------------------------------- sparse

#[derive(Args)]
struct SparseArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Steepness cutoff in (0, pi/2); requires --n0.
    #[arg(long, requires = "n0", conflicts_with = "auto")]
    phi0: Option<f64>,
    /// Window length; requires --phi0.
    #[arg(long, requires = "phi0", conflicts_with = "auto")]
    n0: Option<usize>,
    /// Derive the (phi0 ladder, n0) from --k-bound and --eps0, then walk
    /// the ladder until the measured fraction drops below eps0.
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value_t = defaults::SPARSE_K_BOUND)]
    k_bound: f64,
    #[arg(long, default_value_t = defaults::SPARSE_EPS0)]
    eps0: f64,
    #[arg(long, default_value_t = defaults::SPARSE_LADDER)]
    ladder: usize,
    /// Sampled phase points.
    #[arg(long, default_value_t = defaults::SPARSE_POINTS)]
    points: usize,
    /// Collisions per sampled orbit.
    #[arg(long, default_value_t = defaults::SPARSE_ORBIT_LEN)]
    orbit_len: usize,
    /// Entropy estimate for the tier margins in the report.
    #[arg(long)]
    h_hat: Option<f64>,
}

fn cmd_sparse(cli: &Cli, a: &SparseArgs, out: &mut OutDir) -> Result<String, Failure> {
    let table = load_table(&a.table, out)?;
    let (mut est, params_used): (_, Option<SparseParams>) = if a.auto {
        let params = entropy::suggest_sparse_params(a.k_bound, a.eps0, a.ladder)?;
        let est =
            entropy::verify_sparse_params(&table, &params, a.points, a.orbit_len, cli.seed)?;
        (est, Some(params))
    } else {
        let (Some(phi0), Some(n0)) = (a.phi0, a.n0) else {
            return Err(Failure::Validation(
                "give --phi0 with --n0, or --auto (see --help for the grammar)".into(),
            ));
        };
        let est = entropy::estimate_s0(&table, phi0, n0, a.points, a.orbit_len, cli.seed)?;
        (est, None)
    };
    if let Some(h) = a.h_hat {
        est.attach_margins(h);
    }
    let data = serde_json::json!({
        "mode": if a.auto { "auto" } else { "direct" },
        "suggested": params_used.as_ref().map(to_value).transpose()?,
        "estimate": to_value(&est)?,
        "h_hat": a.h_hat,
    });
    write_report(out, "sparse", cli.seed, data)?;
    Ok(format!(
        "s0_hat {:.4} at phi0 {:.4}, n0 {} ({} orbits, {} failed)",
        est.s0_hat, est.phi0, est.n0, est.sample_size, est.failed_orbits,
    ))
}

// ------------------------------------------------------------ complexity

#[derive(Args)]
struct ComplexityArgs {
    #[command(flatten)]
    table: TableFlag,
    /// Deepest traced depth.
    #[arg(long, default_value_t = defaults::COMPLEXITY_N_MAX)]
    n_max: u32,
    /// Trace points per singularity curve.
    #[arg(long, default_value_t = defaults::COMPLEXITY_SAMPLES)]
    samples: usize,
    /// Clustering radius for strand counting.
    #[arg(long, default_value_t = defaults::COMPLEXITY_RADIUS)]
    radius: f64,
}

fn cmd_complexity(cli: &Cli, a: &ComplexityArgs, out: &mut OutDir) -> Result<String, Failure> {
    let table = load_table(&a.table, out)?;
    let mut rows = Vec::with_capacity(a.n_max as usize);
    for n in 1..=a.n_max {
        rows.push(entropy::estimate_kn(&table, n, a.samples, a.radius)?);
    }
    // least-squares slope through the origin: the Eq-style linear envelope
    let num: f64 = rows.iter().map(|e| e.n as f64 * e.k_n_hat as f64).sum();
    let den: f64 = rows.iter().map(|e| (e.n as f64) * (e.n as f64)).sum();
    let k_fit = num / den;
    let all_stable = rows.iter().all(|e| e.resolution_stable());
    let max_over_linear = rows
        .iter()
        .map(|e| e.k_n_hat as f64 / (k_fit * e.n as f64))
        .fold(0.0_f64, f64::max);
    let data = serde_json::json!({
        "rows": to_value(&rows)?,
        "k_fit_per_depth": k_fit,
        "max_over_linear": max_over_linear,
        "all_resolution_stable": all_stable,
    });
    write_report(out, "complexity", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&[
            "depth_n",
            "k_n_hat",
            "doubled_k_n_hat",
            "resolution_stable",
        ]);
        for e in &rows {
            csv_row!(csv, e.n, e.k_n_hat, e.doubled_k_n_hat, e.resolution_stable());
        }
        out.write("complexity.csv", &csv.into_bytes())?;
    }
    let ks: Vec<usize> = rows.iter().map(|e| e.k_n_hat).collect();
    Ok(format!(
        "K_n = {:?} (linear fit {:.2} per depth, resolution stable: {})",
        ks, k_fit, all_stable,
    ))
}

// --------------------------------------------------------------- renewal

/// Renewal-spec source, shared by the symbolic subcommands. Exactly one
/// of --r, --lambda0/--alpha, --spec must be given.
#[derive(Args, Clone)]
struct SpecArgs {
    /// Comma-separated return weights r_1,r_2,...
    #[arg(long, value_name = "W1,W2,...")]
    r: Option<String>,
    /// Parametric polynomial-tail spec: growth rate lambda0 (with --alpha).
    #[arg(long, requires = "alpha")]
    lambda0: Option<f64>,
    /// Parametric tail exponent (with --lambda0).
    #[arg(long, requires = "lambda0")]
    alpha: Option<f64>,
    /// Truncation length of a parametric spec.
    #[arg(long, default_value_t = defaults::PARAMETRIC_TERMS)]
    terms: usize,
    /// Renewal spec document (grammar: `renewal` header, then `r n v`
    /// lines or one `parametric lambda0 alpha N` line).
    #[arg(long = "spec")]
    file: Option<PathBuf>,
}

impl SpecArgs {
    fn resolve(&self, out: &mut OutDir) -> Result<(RenewalSpec, String), Failure> {
        let given =
            usize::from(self.r.is_some()) + usize::from(self.lambda0.is_some())
                + usize::from(self.file.is_some());
        if given != 1 {
            return Err(Failure::Validation(
                "give exactly one spec source: --r W1,W2,... | --lambda0 L --alpha A | --spec FILE"
                    .into(),
            ));
        }
        if let Some(list) = &self.r {
            let weights = list
                .split(',')
                .map(|tok| tok.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| Failure::Validation(format!("bad weight in --r {list}: {e}")))?;
            let desc = format!("r {list}");
            out.register_input("renewal-spec", desc.as_bytes());
            return Ok((RenewalSpec::from_weights(weights)?, desc));
        }
        if let (Some(lambda0), Some(alpha)) = (self.lambda0, self.alpha) {
            let desc = format!("parametric {lambda0} {alpha} {}", self.terms);
            out.register_input("renewal-spec", desc.as_bytes());
            return Ok((RenewalSpec::parametric(lambda0, alpha, self.terms)?, desc));
        }
        let path = self.file.as_ref().expect("counted above");
        let text = fs::read_to_string(path)?;
        out.register_input("renewal-spec", text.as_bytes());
        Ok((RenewalSpec::parse(&text)?, format!("file {}", path.display())))
    }
}

#[derive(Args)]
struct RenewalArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Also pretty-print the JSON report to stdout.
    #[arg(long)]
    report: bool,
}

fn cmd_renewal(cli: &Cli, a: &RenewalArgs, out: &mut OutDir) -> Result<String, Failure> {
    let (spec, desc) = a.spec.resolve(out)?;
    let support_max = spec.support_max();
    let integral = spec.is_integral();
    let measure = RenewalMeasure::build(spec)?;
    let check = renewal::entropy_closed_form(&measure)?;
    let terms = defaults::SERIES_TERMS.min(measure.node_count());
    let w: Vec<f64> = (1..=terms).map(|n| measure.w(n)).collect();
    let p: Vec<f64> = (1..=support_max.min(terms)).map(|n| measure.p(n)).collect();
    let data = serde_json::json!({
        "spec": desc,
        "support_max": support_max,
        "integral": integral,
        "lambda": measure.lambda(),
        "mean_return_time": measure.mean_return_time(),
        "entropy": to_value(&check)?,
        "residuals": to_value(measure.residuals())?,
        "node_count": measure.node_count(),
        "w": w,
        "p": p,
    });
    let envelope = write_report(out, "renewal", cli.seed, data)?;
    if a.report {
        println!(
            "{}",
            serde_json::to_string_pretty(&envelope).expect("envelope serializes")
        );
    }
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&["n", "w_n_mass", "p_n_transition"]);
        for (i, &wn) in w.iter().enumerate() {
            let n = i + 1;
            let p_str = if n <= support_max {
                format!("{}", measure.p(n))
            } else {
                String::new()
            };
            csv.row(&[format!("{n}"), format!("{wn}"), p_str]);
        }
        out.write("measure.csv", &csv.into_bytes())?;
    }
    Ok(format!(
        "lambda {:.6}, S {:.6}, entropy {:.6} (sum-vs-log defect {:.2e})",
        measure.lambda(),
        measure.mean_return_time(),
        check.log_lambda,
        (check.markov_sum - check.log_lambda).abs(),
    ))
}

// -------------------------------------------------------------- operator

#[derive(Args)]
struct OperatorArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Deepest counted index.
    #[arg(long, default_value_t = defaults::OPERATOR_N_MAX)]
    n_max: usize,
    /// Factor on the critical column; 1.0 probes criticality itself.
    #[arg(long, default_value_t = 1.0)]
    dichotomy_scale: f64,
    /// Iterations of the norm-trajectory probe.
    #[arg(long, default_value_t = defaults::OPERATOR_PROBE_STEPS)]
    probe_steps: usize,
}

fn cmd_operator(cli: &Cli, a: &OperatorArgs, out: &mut OutDir) -> Result<String, Failure> {
    let (spec, desc) = a.spec.resolve(out)?;
    let weights = spec.weights().to_vec();
    let lambda = renewal::solve_lambda(&spec)?;
    let (counts, matrix_agrees) = if spec.is_integral() {
        let conv = operator::count_sequence_exact(&weights, a.n_max)?;
        let mat = operator::matrix_power_counts(&weights, a.n_max)?;
        let agrees = conv == mat;
        let strings: Vec<String> = conv.iter().map(|c| c.to_string()).collect();
        (Some(strings), Some(agrees))
    } else {
        (None, None)
    };
    let limit = operator::renewal_limit(&weights, lambda, a.n_max)?;
    let probe = operator::verify_growth_rate(&weights, lambda.ln(), a.n_max)?;
    let column: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, &rk)| a.dichotomy_scale * rk * lambda.powi(-(i as i32 + 1)))
        .collect();
    let dichotomy = operator::dichotomy_probe(&column, &[1.0], a.probe_steps)?;
    let data = serde_json::json!({
        "spec": desc,
        "lambda": lambda,
        "n_max": a.n_max,
        "a_n": counts,
        "matrix_power_agrees": matrix_agrees,
        "renewal_limit": to_value(&limit)?,
        "rate_probe": to_value(&probe)?,
        "dichotomy_scale": a.dichotomy_scale,
        "dichotomy": to_value(&dichotomy)?,
    });
    write_report(out, "operator", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&["n", "a_n_exact", "a_n_rescaled"]);
        for (n, &u) in limit.rescaled.iter().enumerate() {
            let exact = counts
                .as_ref()
                .and_then(|c| c.get(n).cloned())
                .unwrap_or_default();
            csv.row(&[format!("{n}"), exact, format!("{u}")]);
        }
        out.write("counts.csv", &csv.into_bytes())?;
        let mut norms = output::Csv::new(&["step", "l1_norm"]);
        for (step, &norm) in dichotomy.norms.iter().enumerate() {
            csv_row!(norms, step, norm);
        }
        out.write("norms.csv", &norms.into_bytes())?;
    }
    Ok(format!(
        "lambda {:.6}; identities agree: {}; rescaled limit {:.6} (predicted {:.6}); \
         dichotomy at scale {}: {:?}",
        lambda,
        matrix_agrees.map_or("skipped (non-integral)".to_string(), |b| b.to_string()),
        limit.rescaled.last().copied().unwrap_or(f64::NAN),
        limit.limit,
        a.dichotomy_scale,
        dichotomy.verdict,
    ))
}

// ------------------------------------------------------------- correlate

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    ReturnIndicator,
    NodeDepth,
    LogNode,
    LabelParity,
}

impl RuleArg {
    fn to_rule(self, cap: u32) -> SymbolRule {
        match self {
            RuleArg::ReturnIndicator => SymbolRule::ReturnIndicator,
            RuleArg::NodeDepth => SymbolRule::NodeDepth { cap },
            RuleArg::LogNode => SymbolRule::LogNode,
            RuleArg::LabelParity => SymbolRule::LabelParity,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            RuleArg::ReturnIndicator => "return-indicator",
            RuleArg::NodeDepth => "node-depth",
            RuleArg::LogNode => "log-node",
            RuleArg::LabelParity => "label-parity",
        }
    }
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Observable rule on symbols.
    #[arg(long, value_enum, default_value_t = RuleArg::LogNode)]
    rule: RuleArg,
    /// Cap for the node-depth rule.
    #[arg(long, default_value_t = defaults::NODE_DEPTH_CAP)]
    cap: u32,
    /// Total sampled steps across all batches.
    #[arg(long, default_value_t = defaults::CORRELATE_STEPS)]
    steps: u64,
    /// Independent stationary batches (also the SE resolution).
    #[arg(long, default_value_t = defaults::CORRELATE_BATCHES)]
    batches: usize,
    /// Largest lag estimated.
    #[arg(long, default_value_t = defaults::CORRELATE_MAX_LAG)]
    max_lag: usize,
    /// Decay-fit window, low end.
    #[arg(long, default_value_t = defaults::CORRELATE_FIT_LO)]
    fit_lo: usize,
    /// Decay-fit window, high end.
    #[arg(long, default_value_t = defaults::CORRELATE_FIT_HI)]
    fit_hi: usize,
    /// Green-Kubo truncation lag (default max_lag / 2).
    #[arg(long)]
    gk_cutoff: Option<usize>,
}

fn cmd_correlate(cli: &Cli, a: &CorrelateArgs, out: &mut OutDir) -> Result<String, Failure> {
    let (spec, desc) = a.spec.resolve(out)?;
    let measure = RenewalMeasure::build(spec)?;
    let obs = Observable::depth1(&measure, a.rule.to_rule(a.cap))?;
    let cfg = CorrelationConfig {
        total_steps: a.steps,
        batches: a.batches,
        lags: (1..=a.max_lag).collect(),
        seed: cli.seed,
    };
    let est = stats::estimate_correlations(&measure, &obs, &obs, &cfg)?;
    // a null-consistent series (every lag within noise) makes the decay
    // fit and the tail bound meaningless, not wrong; report, don't fail
    let fit = match stats::fit_decay_slope(&est, a.fit_lo, a.fit_hi) {
        Ok(f) => to_value(&f)?,
        Err(e) => serde_json::json!({"unavailable": e.to_string()}),
    };
    let cutoff = a.gk_cutoff.unwrap_or(a.max_lag / 2).max(1);
    let green_kubo = match stats::green_kubo(&est, cutoff, a.spec.alpha) {
        Ok(g) => to_value(&g)?,
        Err(e) => serde_json::json!({"unavailable": e.to_string()}),
    };
    let max_abs_z = est
        .lags
        .iter()
        .enumerate()
        .map(|(j, _)| (est.c[j] / est.se[j]).abs())
        .fold(0.0_f64, f64::max);
    let data = serde_json::json!({
        "spec": desc,
        "rule": a.rule.as_str(),
        "estimate": to_value(&est)?,
        "fit": fit,
        "green_kubo": green_kubo,
        "max_abs_z": max_abs_z,
    });
    write_report(out, "correlate", cli.seed, data)?;
    if cli.format == Format::Csv {
        let mut csv = output::Csv::new(&["lag_steps", "correlation", "standard_error"]);
        for (j, &lag) in est.lags.iter().enumerate() {
            csv_row!(csv, lag, est.c[j], est.se[j]);
        }
        out.write("correlations.csv", &csv.into_bytes())?;
    }
    Ok(format!(
        "C(0) {:.4e} +- {:.1e}; max |C/SE| over lags {:.2}; {} steps in {} batches",
        est.c0, est.c0_se, max_abs_z, a.steps, a.batches,
    ))
}

// ------------------------------------------------------------------- clt

#[derive(Args)]
struct CltArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::LogNode)]
    rule: RuleArg,
    #[arg(long, default_value_t = defaults::NODE_DEPTH_CAP)]
    cap: u32,
    /// Length of each summed block.
    #[arg(long, default_value_t = defaults::CLT_N_BLOCK)]
    n_block: usize,
    /// Independent block replicates.
    #[arg(long, default_value_t = defaults::CLT_REPLICATES)]
    replicates: usize,
    /// Normalization variance; estimated by a Green-Kubo side run when
    /// omitted.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Step budget of the side run.
    #[arg(long, default_value_t = defaults::CLT_GK_STEPS)]
    gk_steps: u64,
}

fn cmd_clt(cli: &Cli, a: &CltArgs, out: &mut OutDir) -> Result<String, Failure> {
    let (spec, desc) = a.spec.resolve(out)?;
    let measure = RenewalMeasure::build(spec)?;
    let obs = Observable::depth1(&measure, a.rule.to_rule(a.cap))?;
    let (sigma2, sigma2_source) = match a.sigma2 {
        Some(s) => (s, "flag".to_string()),
        None => {
            let cfg = CorrelationConfig {
                total_steps: a.gk_steps,
                batches: defaults::CLT_GK_BATCHES,
                lags: (1..=defaults::CLT_GK_CUTOFF).collect(),
                // a separate stream space: the side run must not reuse the
                // replicate draws
                seed: cli.seed ^ 0x9e37_79b9_7f4a_7c15,
            };
            let est = stats::estimate_correlations(&measure, &obs, &obs, &cfg)?;
            let gk = stats::green_kubo(&est, defaults::CLT_GK_CUTOFF, a.spec.alpha)?;
            (gk.sigma2, format!("green-kubo over {} steps", a.gk_steps))
        }
    };
    let report = stats::clt_check(&measure, &obs, a.n_block, a.replicates, sigma2, cli.seed)?;
    let data = serde_json::json!({
        "spec": desc,
        "rule": a.rule.as_str(),
        "sigma2": sigma2,
        "sigma2_source": sigma2_source,
        "report": to_value(&report)?,
    });
    write_report(out, "clt", cli.seed, data)?;
    Ok(format!(
        "KS {:.4} over {} replicates of n_block {} (z mean {:+.3}, z std {:.3})",
        report.ks, report.replicates, report.n_block, report.z_mean, report.z_std,
    ))
}

// ----------------------------------------------------------------- tiers

#[derive(Args)]
struct TiersArgs {
    /// Entropy estimate in nats per collision.
    #[arg(long, conflicts_with = "from_entropy")]
    h_hat: Option<f64>,
    /// Sparse-recurrence fraction in (0, 1].
    #[arg(long, conflicts_with = "from_sparse")]
    s0_hat: Option<f64>,
    /// Read h_hat from an `entropy` report.json.
    #[arg(long)]
    from_entropy: Option<PathBuf>,
    /// Read s0_hat from a `sparse` report.json.
    #[arg(long)]
    from_sparse: Option<PathBuf>,
    /// Complexity-boundedness evidence for the super-polynomial route.
    #[arg(long)]
    kn_bounded: Option<bool>,
    /// Measured symbolic decay slope (with --decay-alpha).
    #[arg(long, requires = "decay_alpha")]
    measured_slope: Option<f64>,
    /// Tail exponent the slope was measured at (with --measured-slope).
    #[arg(long, requires = "measured_slope")]
    decay_alpha: Option<f64>,
}

/// Pulls one number out of a previously written report envelope.
fn read_report_number(
    path: &PathBuf,
    expect_subcommand: &str,
    pointer: &str,
) -> Result<f64, Failure> {
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    if v.get("subcommand").and_then(|s| s.as_str()) != Some(expect_subcommand) {
        return Err(Failure::Validation(format!(
            "{} is not a {expect_subcommand} report",
            path.display()
        )));
    }
    v.pointer(pointer).and_then(|x| x.as_f64()).ok_or_else(|| {
        Failure::Validation(format!("missing {pointer} in {}", path.display()))
    })
}

fn cmd_tiers(cli: &Cli, a: &TiersArgs, out: &mut OutDir) -> Result<String, Failure> {
    let (h_hat, h_source) = match (a.h_hat, &a.from_entropy) {
        (Some(h), _) => (h, "flag".to_string()),
        (None, Some(path)) => (
            read_report_number(path, "entropy", "/data/estimate/h_hat")?,
            format!("report {}", path.display()),
        ),
        (None, None) => {
            return Err(Failure::Validation(
                "give --h-hat or --from-entropy".into(),
            ))
        }
    };
    let (s0_hat, s0_source) = match (a.s0_hat, &a.from_sparse) {
        (Some(s), _) => (s, "flag".to_string()),
        (None, Some(path)) => (
            read_report_number(path, "sparse", "/data/estimate/s0_hat")?,
            format!("report {}", path.display()),
        ),
        (None, None) => {
            return Err(Failure::Validation(
                "give --s0-hat or --from-sparse".into(),
            ))
        }
    };
    let measured = match (a.measured_slope, a.decay_alpha) {
        (Some(slope), Some(alpha)) => Some((slope, alpha)),
        _ => None,
    };
    let report = stats::tier_report(h_hat, s0_hat, a.kn_bounded, measured)?;
    let data = serde_json::json!({
        "h_hat": h_hat,
        "h_source": h_source,
        "s0_hat": s0_hat,
        "s0_source": s0_source,
        "report": to_value(&report)?,
    });
    write_report(out, "tiers", cli.seed, data)?;
    let p = &report.prediction;
    Ok(format!(
        "h/(s0 log 2) = {:.3}; tiers: sparse {}, decay {}, asip {}; margins {:+.4}/{:+.4}/{:+.4}",
        p.ratio,
        p.tier_sparse,
        p.tier_decay,
        p.tier_asip,
        p.margin_sparse,
        p.margin_decay,
        p.margin_asip,
    ))
}
