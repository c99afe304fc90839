//! `parsec`: screen, simulate, run experiments and fit structured precision
//! matrices from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use parsec_core::estimation::{self, EdgeStructure, DEFAULT_MAX_ITER};
use parsec_core::experiments::{self, CalibrationEntry, SampleDist, SweepSetting};
use parsec_core::inference::ErrorControlSpec;
use parsec_core::io;
use parsec_core::parallel;
use parsec_core::parsec::SymmetrizeMode;
use parsec_core::screen::{self, Method, ScreenConfig};
use parsec_core::simgen::{self, StructureSpec};

#[derive(Parser, Debug)]
#[command(name = "parsec", version, about = "Partial-correlation screening with multiple-testing error control")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PARSEC_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate partial correlations and screen them under an error criterion.
    Screen(ScreenArgs),
    /// Draw a data set from a covariance structure.
    Simulate(SimulateArgs),
    /// Run a seeded simulation experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Fit a precision matrix on a screened edge structure.
    Estimate(EstimateArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Delimited numeric table, samples in rows.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// The first row holds data rather than column names.
    #[arg(long)]
    no_header: bool,
}

impl InputArgs {
    fn load(&self) -> Result<io::DataMatrix> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be a single ASCII character");
        }
        let (data, report) = io::load_matrix(&self.input, self.delimiter as u8, !self.no_header)
            .with_context(|| format!("loading {}", self.input.display()))?;
        info!(
            "loaded {} x {} ({} rows read, {} dropped)",
            data.n(),
            data.p(),
            report.rows_read,
            report.rows_dropped
        );
        Ok(data)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    ParsecBase,
    ParsecScalable,
    PcsHub,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ParsecBase => Method::ParsecBase,
            MethodArg::ParsecScalable => Method::ParsecScalable,
            MethodArg::PcsHub => Method::PcsHub,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ControlArg {
    Fwer,
    Kfwer,
    FdrBh,
    FdrBy,
    Pfdr,
    Rho,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SymmetrizeArg {
    UpperTriangle,
    MinAbs,
    MaxAbs,
    Average,
}

impl From<SymmetrizeArg> for SymmetrizeMode {
    fn from(s: SymmetrizeArg) -> Self {
        match s {
            SymmetrizeArg::UpperTriangle => SymmetrizeMode::UpperTriangle,
            SymmetrizeArg::MinAbs => SymmetrizeMode::MinAbs,
            SymmetrizeArg::MaxAbs => SymmetrizeMode::MaxAbs,
            SymmetrizeArg::Average => SymmetrizeMode::Average,
        }
    }
}

#[derive(Args, Debug)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "parsec-scalable")]
    method: MethodArg,
    #[arg(long, value_enum)]
    control: ControlArg,
    /// Error level (ignored by `--control rho` except for the implied-k diagnostic).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Tolerated false discoveries for k-FWER.
    #[arg(long, conflicts_with = "k_fraction")]
    k: Option<u64>,
    /// k-FWER tolerance as a share of all p(p-1)/2 pairs (floored).
    #[arg(long)]
    k_fraction: Option<f64>,
    /// Screening level for `--control rho`.
    #[arg(long)]
    rho: Option<f64>,
    /// Edge list destination (CSV).
    #[arg(long)]
    output: PathBuf,
    /// Also write the level and diagnostics as JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Stream the upper triangle instead of forming p x p matrices.
    #[arg(long)]
    low_memory: bool,
    #[arg(long, value_enum, default_value = "upper-triangle")]
    symmetrize: SymmetrizeArg,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StructureArg {
    Diag,
    ArBlock,
    Block,
    StarConnected,
    StarDisconnected,
}

#[derive(Args, Debug, Clone)]
struct StructureArgs {
    #[arg(long, value_enum)]
    structure: StructureArg,
    #[arg(long)]
    p: usize,
    /// Block size (ar-block, block).
    #[arg(long, default_value_t = 50)]
    a: usize,
    /// AR order (ar-block).
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// First-lag AR coefficient (ar-block).
    #[arg(long, default_value_t = 0.7)]
    phi1: f64,
    /// Within-block correlation (block).
    #[arg(long = "block-rho", default_value_t = 0.7)]
    block_rho: f64,
    /// Number of stars.
    #[arg(long, default_value_t = 5)]
    k_stars: usize,
    /// Leaves per star.
    #[arg(long, default_value_t = 2)]
    e: usize,
    /// Precision entry on star edges.
    #[arg(long, default_value_t = -0.35, allow_hyphen_values = true)]
    c: f64,
}

impl StructureArgs {
    fn spec(&self) -> StructureSpec {
        let p = self.p;
        match self.structure {
            StructureArg::Diag => StructureSpec::Diagonal { p },
            StructureArg::ArBlock => StructureSpec::ArBlock { p, a: self.a, d: self.d, phi1: self.phi1 },
            StructureArg::Block => StructureSpec::Block { p, a: self.a, rho: self.block_rho },
            StructureArg::StarConnected => StructureSpec::StarConnected { p, k_stars: self.k_stars, e: self.e, c: self.c },
            StructureArg::StarDisconnected => {
                StructureSpec::StarDisconnected { p, k_stars: self.k_stars, e: self.e, c: self.c }
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Gaussian,
    T,
}

#[derive(Args, Debug, Clone)]
struct DistArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    dist: DistArg,
    /// Degrees of freedom for `--dist t`.
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
}

impl DistArgs {
    fn dist(&self) -> SampleDist {
        match self.dist {
            DistArg::Gaussian => SampleDist::Gaussian,
            DistArg::T => SampleDist::StudentT { nu: self.nu },
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    structure: StructureArgs,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long)]
    seed: u64,
    /// Data destination (CSV with header).
    #[arg(long)]
    output: PathBuf,
    /// Also write the true edges (CSV, statistic = population partial correlation).
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CommonExperimentArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Directory for the report files.
    #[arg(long)]
    out_dir: PathBuf,
    /// File name prefix (defaults to the experiment name).
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Error-control calibration under the identity covariance.
    NullCalibration {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// k-FWER tolerance as a share of p(p-1)/2 (floored).
        #[arg(long, default_value_t = 0.05)]
        k_fraction: f64,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
    /// Null per-feature false-discovery curve against its approximation.
    PhaseTransition {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// Grid `i / (points + 1)`, i = 1..points.
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
    /// Median AUC per method for one structure.
    AucSweep {
        #[command(flatten)]
        structure: StructureArgs,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "parsec-scalable,pcs-hub")]
        methods: Vec<MethodArg>,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
    /// Estimated coefficients split by true-edge status.
    CoefDist {
        #[command(flatten)]
        structure: StructureArgs,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "parsec-scalable,pcs-hub")]
        methods: Vec<MethodArg>,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Concord,
    Gaussian,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Edge list as written by `screen`.
    #[arg(long)]
    edges: PathBuf,
    #[arg(long, value_enum, default_value = "concord")]
    method: EstimatorArg,
    /// Also write minimum-variance portfolio weights.
    #[arg(long)]
    mvp: bool,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Directory for omega.csv, sigma.csv and (with --mvp) weights.csv.
    #[arg(long)]
    output: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.threads {
        Some(0) => bail!("--threads must be positive"),
        Some(t) => parallel::with_threads(t, || run(cli.command)),
        None => run(cli.command),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Screen(a) => run_screen(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Experiment(e) => run_experiment(e),
        Command::Estimate(a) => run_estimate(a),
    }
}

fn control_spec(a: &ScreenArgs, p: usize) -> Result<ErrorControlSpec> {
    let alpha = a.alpha;
    let spec = match a.control {
        ControlArg::Fwer => ErrorControlSpec::Fwer { alpha },
        ControlArg::Kfwer => {
            let k = match (a.k, a.k_fraction) {
                (Some(k), _) => k,
                (None, Some(f)) => experiments::kfwer_k(p, f),
                (None, None) => bail!("--control kfwer needs --k or --k-fraction"),
            };
            ErrorControlSpec::KFwer { alpha, k }
        }
        ControlArg::FdrBh => ErrorControlSpec::FdrBh { alpha },
        ControlArg::FdrBy => ErrorControlSpec::FdrBy { alpha },
        ControlArg::Pfdr => ErrorControlSpec::PFdr { alpha },
        ControlArg::Rho => ErrorControlSpec::RawLevel {
            rho: a.rho.context("--control rho needs --rho")?,
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn run_screen(a: ScreenArgs) -> Result<()> {
    let data = a.input.load()?;
    let control = control_spec(&a, data.p())?;
    let cfg = ScreenConfig {
        method: a.method.into(),
        control,
        symmetrize: a.symmetrize.into(),
        low_memory: a.low_memory,
        diagnostic_alpha: a.alpha,
    };
    let out = screen::screen_data(&data, &cfg)?;
    io::write_edges(&out.edges, &a.output)?;
    let summary = serde_json::json!({
        "method": out.method,
        "control": out.control,
        "n": out.n,
        "p": out.p,
        "level": out.level,
        "diagnostics": out.diagnostics,
        "edges_file": a.output,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &a.summary {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.structure.spec();
    let model = simgen::build_structure(&spec)?;
    let data = a.dist.dist().draw(&model, a.n, a.seed)?;
    io::write_matrix(&data, &a.output)?;
    if let Some(path) = &a.edges {
        let omega = model.omega_block();
        let edges = model
            .true_edges()
            .iter()
            .map(|&(j, k)| {
                let pcor = -omega[(j, k)] / (omega[(j, j)] * omega[(k, k)]).sqrt();
                io::Edge::new(j, k, pcor, 0.0)
            })
            .collect();
        io::write_edges(&io::EdgeSet::new(edges)?, path)?;
    }
    info!("simulated {} from {} with seed {}", a.n, spec.label(), a.seed);
    Ok(())
}

fn write_report(report: &experiments::ExperimentReport, common: &CommonExperimentArgs) -> Result<()> {
    let prefix = common.prefix.clone().unwrap_or_else(|| report.experiment.clone());
    let files = report.write(&common.out_dir, &prefix)?;
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    info!("wrote {}", files.summary.display());
    Ok(())
}

fn methods_of(args: &[MethodArg]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for &m in args {
        let m = Method::from(m);
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn run_experiment(e: ExperimentCommand) -> Result<()> {
    match e {
        ExperimentCommand::NullCalibration { n, p, alpha, k_fraction, common } => {
            let k = experiments::kfwer_k(p, k_fraction);
            let mut entries = Vec::new();
            for control in [
                ErrorControlSpec::Fwer { alpha },
                ErrorControlSpec::KFwer { alpha, k },
                ErrorControlSpec::FdrBh { alpha },
                ErrorControlSpec::FdrBy { alpha },
                ErrorControlSpec::PFdr { alpha },
            ] {
                entries.push(CalibrationEntry { method: Method::ParsecScalable, control });
            }
            for control in [ErrorControlSpec::Fwer { alpha }, ErrorControlSpec::KFwer { alpha, k }] {
                entries.push(CalibrationEntry { method: Method::PcsHub, control });
            }
            let report = experiments::null_calibration(n, p, common.reps, &entries, common.seed)?;
            write_report(&report, &common)
        }
        ExperimentCommand::PhaseTransition { n, p, grid_points, common } => {
            let grid = experiments::uniform_grid(grid_points);
            let report = experiments::phase_transition_curve(n, p, common.reps, &grid, common.seed)?;
            write_report(&report, &common)
        }
        ExperimentCommand::AucSweep { structure, n, dist, methods, common } => {
            let setting = SweepSetting { structure: structure.spec(), n, dist: dist.dist() };
            let report = experiments::auc_sweep(&[setting], common.reps, &methods_of(&methods), common.seed)?;
            write_report(&report, &common)
        }
        ExperimentCommand::CoefDist { structure, n, dist, methods, common } => {
            let report = experiments::coef_distribution(
                &structure.spec(),
                n,
                dist.dist(),
                common.reps,
                &methods_of(&methods),
                common.seed,
            )?;
            write_report(&report, &common)
        }
    }
}

fn header(data: &io::DataMatrix) -> Vec<String> {
    (0..data.p()).map(|j| data.column_name(j)).collect()
}

fn run_estimate(a: EstimateArgs) -> Result<()> {
    let data = a.input.load()?;
    let edges = io::read_edges(&a.edges).with_context(|| format!("reading {}", a.edges.display()))?;
    let structure = EdgeStructure::from_edges(data.p(), &edges)?;
    let s = data.sample_covariance();
    let fit = match a.method {
        EstimatorArg::Concord => estimation::concord_estimate(&s, &structure, a.eps, a.max_iter)?,
        EstimatorArg::Gaussian => estimation::gaussian_estimate(&s, &structure, a.eps, a.max_iter)?,
    };
    if !fit.converged {
        log::warn!("estimator stopped after {} iterations without converging", fit.iterations);
    }
    let dir: &Path = &a.output;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names = header(&data);
    io::write_dense(&fit.omega_hat, &names, dir.join("omega.csv"))?;
    io::write_dense(&fit.sigma_hat, &names, dir.join("sigma.csv"))?;
    if a.mvp {
        let w = estimation::mvp_weights(&fit.omega_hat)?;
        let col = nalgebra::DMatrix::from_column_slice(1, w.len(), &w);
        io::write_dense(&col, &names, dir.join("weights.csv"))?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "converged": fit.converged,
            "iterations": fit.iterations,
            "edges": edges.len(),
            "p": data.p(),
        }))?
    );
    Ok(())
}
