//! Command-line interface: apply the CF tests to data, reproduce the
//! simulation studies, inspect null distributions, and generate patterns.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use cfspat::error::CfError;
use cfspat::inference::{
    cf_test, cf_test_mc, default_omnibus_rhos, default_rho_grid, envelope, omnibus_test,
    omnibus_test_mc, CfNull, NullMethod, Tail,
};
use cfspat::patterns::{load_pattern, rescale_to_unit, write_pattern, PointPattern, Window};
use cfspat::simulate::{sim_csr_with, stream_rng, SimSpec};
use cfspat::statistic::{PairCache, Resolution};
use cfspat::study::{calibrate_battery, power_alternatives, power_cell, POWER_TESTS};

#[derive(Parser)]
#[command(name = "cfspat", version, about = "Characteristic-function tests for spatial randomness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a point pattern for complete spatial randomness
    Test(TestArgs),
    /// Statistic-versus-resolution curve with null envelope bands
    Envelope(EnvelopeArgs),
    /// Type I error study on simulated CSR patterns
    Type1(Type1Args),
    /// Power study against the clustered, regular and heterogeneous alternatives
    Power(PowerArgs),
    /// Null-distribution quantiles, CDF values and spectrum export
    Nulldist(NulldistArgs),
    /// Generate a point pattern from one of the supported processes
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Two,
    Upper,
    Lower,
}

impl From<TailArg> for Tail {
    fn from(t: TailArg) -> Tail {
        match t {
            TailArg::Two => Tail::TwoSided,
            TailArg::Upper => Tail::Upper,
            TailArg::Lower => Tail::Lower,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with one point per row (optional single header line)
    #[arg(long)]
    input: PathBuf,
    /// Coordinate dimension of the input records
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Rectangular data window "lo1,lo2,hi1,hi2"; the unit cube when absent
    #[arg(long)]
    window: Option<String>,
    /// Resolution of the single test
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Run the Bonferroni omnibus test over the recommended resolutions
    #[arg(long)]
    omnibus: bool,
    #[arg(long, value_enum, default_value = "two")]
    tail: TailArg,
    /// Calibrate by Monte Carlo with this many CSR replicates instead of the
    /// analytic null
    #[arg(long)]
    mc_reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    window: Option<String>,
    /// Number of resolution grid points on [1, 2 pi sqrt(n)]
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Type1Args {
    /// Sample sizes, comma separated
    #[arg(long, default_value = "25,100")]
    n: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// CSR replicates per configuration
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Raise replication to the full-study scale (5e4)
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Sample sizes, comma separated
    #[arg(long, default_value = "25,75")]
    n: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Alternative-process replicates per cell
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    /// Null-calibration replicates (5e4 with --paper-scale)
    #[arg(long, default_value_t = 20000)]
    calibration_reps: usize,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct NulldistArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    rho: f64,
    /// Probabilities for quantile output, comma separated
    #[arg(long, default_value = "0.005,0.025,0.5,0.975,0.995")]
    quantiles: String,
    /// Also evaluate the CDF at these statistic values
    #[arg(long)]
    cdf_at: Option<String>,
    /// Write the truncated spectrum as JSON (large-sample method only)
    #[arg(long)]
    export_spectrum: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Csr,
    Matern,
    Ssi,
    Inhom,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Matern cluster radius
    #[arg(long)]
    r: Option<f64>,
    /// Matern mean points per cluster
    #[arg(long)]
    mu: Option<f64>,
    /// Matern mean cluster count
    #[arg(long)]
    kappa: Option<f64>,
    /// SSI inhibition distance
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Envelope(args) => cmd_envelope(args),
        Command::Type1(args) => cmd_type1(args),
        Command::Power(args) => cmd_power(args),
        Command::Nulldist(args) => cmd_nulldist(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &CfError) -> u8 {
    match err {
        CfError::QuadratureFailure { .. }
        | CfError::SeriesDivergence { .. }
        | CfError::TruncationUnreachable { .. } => 3,
        CfError::SimulationInfeasible(_) => 4,
        _ => 2,
    }
}

fn seed_or_env(seed: Option<u64>) -> u64 {
    seed.or_else(|| std::env::var("CFSPAT_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn parse_window(spec: &Option<String>, dim: usize) -> Result<Window, CfError> {
    match spec {
        None => Ok(Window::unit(dim)),
        Some(s) => {
            let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| {
                CfError::InvalidArgument(format!("window spec {s:?} must be numeric"))
            })?;
            if vals.len() != 2 * dim {
                return Err(CfError::InvalidArgument(format!(
                    "window needs {} numbers (lo.. then hi..), got {}",
                    2 * dim,
                    vals.len()
                )));
            }
            Window::new(vals[..dim].to_vec(), vals[dim..].to_vec())
        }
    }
}

fn load_input(path: &PathBuf, dim: usize, window: &Option<String>) -> Result<PointPattern, CfError> {
    let file = File::open(path)?;
    let raw = load_pattern(BufReader::new(file), dim)?;
    let pattern = rescale_to_unit(&raw, &parse_window(window, dim)?)?;
    if !pattern.duplicate_indices().is_empty() {
        eprintln!(
            "warning: {} duplicate point(s) in {}; the statistic remains defined",
            pattern.duplicate_indices().len(),
            path.display()
        );
    }
    Ok(pattern)
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CfError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_list(s: &str) -> Result<Vec<f64>, CfError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CfError::InvalidArgument(format!("bad number {t:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn cmd_test(args: TestArgs) -> Result<(), CfError> {
    let pattern = load_input(&args.input, args.dim, &args.window)?;
    let report = if args.omnibus {
        let rhos = default_omnibus_rhos(pattern.len()).to_vec();
        match args.mc_reps {
            Some(reps) => omnibus_test_mc(&pattern, &rhos, reps, seed_or_env(args.seed))?,
            None => omnibus_test(&pattern, &rhos)?,
        }
    } else {
        let rho = Resolution::new(args.rho)?;
        match args.mc_reps {
            Some(reps) => cf_test_mc(&pattern, rho, args.tail.into(), reps, seed_or_env(args.seed))?,
            None => cf_test(&pattern, rho, args.tail.into())?,
        }
    };
    let mut out = open_sink(&args.output)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(())
}

fn cmd_envelope(args: EnvelopeArgs) -> Result<(), CfError> {
    let pattern = load_input(&args.input, args.dim, &args.window)?;
    let grid = default_rho_grid(pattern.len(), args.grid.max(2));
    let curve = envelope(&pattern, &grid)?;
    let mut out = open_sink(&args.output)?;
    writeln!(out, "rho,delta,mean,lo95,hi95,lo99,hi99")?;
    for i in 0..curve.rho_grid.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            curve.rho_grid[i],
            curve.delta[i],
            curve.null_mean[i],
            curve.band_95[i].0,
            curve.band_95[i].1,
            curve.band_99[i].0,
            curve.band_99[i].1
        )?;
    }
    Ok(())
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, CfError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CfError::InvalidArgument(format!("bad sample size {t:?}")))
        })
        .collect()
}

fn cmd_type1(args: Type1Args) -> Result<(), CfError> {
    if !(args.alpha >= 0.0 && args.alpha < 1.0) {
        return Err(CfError::InvalidArgument("alpha must lie in [0,1)".into()));
    }
    let reps = if args.paper_scale { 50_000 } else { args.reps };
    let seed = seed_or_env(args.seed);
    let mut out = open_sink(&args.output)?;
    writeln!(out, "n,rho,tail,method,rejection_rate,mc_se")?;
    for n in parse_sizes(&args.n)? {
        let root_n = (n as f64).sqrt();
        let rhos = [
            1.0,
            0.5 * std::f64::consts::PI * root_n,
            std::f64::consts::PI * root_n,
            2.0 * std::f64::consts::PI * root_n,
        ];
        for rho in rhos {
            let null = CfNull::new(rho, n, 2)?;
            let (q_lo, q_hi) = if args.alpha > 0.0 {
                (null.quantile(args.alpha / 2.0)?, null.quantile(1.0 - args.alpha / 2.0)?)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            let resolution = Resolution::new(rho)?;
            let stats: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream_rng(seed, rep as u64 + 1);
                    let p = sim_csr_with(&mut rng, n, 2);
                    PairCache::new(&p).statistic(resolution)
                })
                .collect();
            for (tail, rate) in [
                ("two", stats.iter().filter(|&&d| d < q_lo || d > q_hi).count()),
                ("lower", stats.iter().filter(|&&d| d < q_lo).count()),
                ("upper", stats.iter().filter(|&&d| d > q_hi).count()),
            ] {
                let rate = rate as f64 / reps as f64;
                let se = (rate * (1.0 - rate) / reps as f64).sqrt();
                let method = match null.method {
                    NullMethod::Imhof => "imhof",
                    NullMethod::HighRho => "high_rho",
                    NullMethod::MonteCarlo => "monte_carlo",
                };
                writeln!(out, "{n},{rho},{tail},{method},{rate},{se}")?;
            }
        }
    }
    Ok(())
}

fn cmd_power(args: PowerArgs) -> Result<(), CfError> {
    let calibration = if args.paper_scale { 50_000 } else { args.calibration_reps };
    let seed = seed_or_env(args.seed);
    let mut out = open_sink(&args.output)?;
    writeln!(out, "alternative,n,test,power,mc_se,failed_draws")?;
    for n in parse_sizes(&args.n)? {
        let null_sorted = calibrate_battery(n, calibration, seed ^ 0xCA11_B7A7);
        for (label, spec) in power_alternatives(n) {
            let tally = power_cell(&spec, args.reps, args.alpha, &null_sorted, seed ^ 0xA17E);
            for (i, name) in POWER_TESTS.iter().enumerate() {
                writeln!(
                    out,
                    "{label},{n},{name},{},{},{}",
                    tally.power(i),
                    tally.se(i),
                    tally.failures
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_nulldist(args: NulldistArgs) -> Result<(), CfError> {
    let null = CfNull::new(args.rho, args.n, args.dim)?;
    if let Some(path) = &args.export_spectrum {
        let spectrum = cfspat::spectrum::build_spectrum_auto(args.rho, args.dim)?;
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "{}", spectrum.to_json())?;
    }
    let mut out = open_sink(&args.output)?;
    let method = match null.method {
        NullMethod::Imhof => "imhof",
        NullMethod::HighRho => "high_rho",
        NullMethod::MonteCarlo => "monte_carlo",
    };
    writeln!(out, "kind,argument,value,method")?;
    writeln!(out, "mean,,{},{method}", null.mean)?;
    writeln!(out, "variance,,{},{method}", null.exact_var)?;
    for p in parse_list(&args.quantiles)? {
        writeln!(out, "quantile,{p},{},{method}", null.quantile(p)?)?;
    }
    if let Some(xs) = &args.cdf_at {
        for x in parse_list(xs)? {
            writeln!(out, "cdf,{x},{},{method}", null.cdf(x)?)?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CfError> {
    let seed = seed_or_env(args.seed);
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| CfError::InvalidArgument(format!("--{name} is required for this process")))
    };
    let spec = match args.kind {
        KindArg::Csr => SimSpec::Csr { n: args.n, dim: args.dim, seed },
        KindArg::Matern => SimSpec::Matern {
            n: args.n,
            mu: need("mu", args.mu)?,
            kappa: need("kappa", args.kappa)?,
            r: need("r", args.r)?,
            seed,
        },
        KindArg::Ssi => SimSpec::Ssi { n: args.n, delta: need("delta", args.delta)?, seed },
        KindArg::Inhom => SimSpec::InhomPoisson {
            n: args.n,
            theta1: need("theta1", args.theta1)?,
            theta2: need("theta2", args.theta2)?,
            seed,
        },
    };
    let pattern = spec.generate()?;
    let mut out = open_sink(&args.output)?;
    write_pattern(&pattern, &mut out)?;
    Ok(())
}
