use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};

use soliton_lab::LabError;

use crate::config::{load_config, ConfigError, RunConfig};
use crate::pipeline::{self, Certificate, Verdict};
use crate::report::{emit, ReportBundle, ReportError, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CERTIFICATION: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

/// Numerical laboratory for the three-dimensional cubic NLS ground state.
#[derive(Debug, Parser)]
#[command(name = "soliton-lab", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Frequency α of the soliton
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Grid points of the radial box
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Radius of the box in absolute units
    #[arg(long, global = true)]
    pub rmax: Option<f64>,
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (.csv or .json) or directory; bundle goes to stdout if absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the random probes
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Highest angular sector in Birman–Schwinger and strip scans
    #[arg(long = "ell-max", global = true)]
    pub ell_max: Option<usize>,
    /// Perturbation amplitude(s) in units of ‖φ‖₂, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    /// Shooting horizon
    #[arg(long, global = true)]
    pub trun: Option<f64>,
    /// Record wall-clock per section in the bundle
    #[arg(long, global = true)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ground-state profile and its α-derivative
    Ground,
    /// Spectral certificate of the linearized operator
    Spectrum,
    /// Birman–Schwinger bound-state counts
    BsCount,
    /// Distance of the Birman–Schwinger spectrum from the threshold
    ThresholdCheck,
    /// Linear stability on the stable subspace and local decay
    EvolveLinear,
    /// Soliton fidelity of the nonlinear integrator
    EvolveNls,
    /// Locate the stable-manifold correction for one amplitude
    Shoot,
    /// Quadratic scaling of the correction over the amplitude list
    SweepQuadratic,
    /// Every experiment in one bundle
    CertifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ground => "ground",
            Command::Spectrum => "spectrum",
            Command::BsCount => "bs-count",
            Command::ThresholdCheck => "threshold-check",
            Command::EvolveLinear => "evolve-linear",
            Command::EvolveNls => "evolve-nls",
            Command::Shoot => "shoot",
            Command::SweepQuadratic => "sweep-quadratic",
            Command::CertifyAll => "certify-all",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lab(LabError),
    Report(ReportError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Lab(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Report(e)
    }
}

fn lab_exit_code(e: &LabError) -> i32 {
    match e {
        LabError::InvalidArgument(_) => EXIT_USAGE,
        LabError::CertificationFailure(_) | LabError::DegeneratePairing(_) => EXIT_CERTIFICATION,
        _ => EXIT_INCONCLUSIVE,
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Certified => EXIT_OK,
        Verdict::Violated => EXIT_CERTIFICATION,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

/// Configuration after applying command-line overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = common.alpha {
        cfg.alpha0 = a;
    }
    if let Some(n) = common.n {
        cfg.grid.n = n;
    }
    if let Some(r) = common.rmax {
        cfg.grid.r_max_over_inv_alpha = r * cfg.alpha0;
    }
    if let Some(s) = common.seed {
        cfg.experiment.seed = s;
    }
    if let Some(l) = common.ell_max {
        cfg.experiment.ell_max = l;
    }
    if let Some(t) = common.trun {
        cfg.experiment.t_run = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Run {
    bundle: ReportBundle,
    tables: Vec<Table>,
    clock: std::collections::BTreeMap<String, f64>,
}

impl Run {
    fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.clock.insert(name.to_string(), t0.elapsed().as_secs_f64());
        out
    }
}

fn ground_tables(run: &mut Run, cfg: &RunConfig) -> Result<(), Failure> {
    let n = cfg.grid.n;
    let (a, b) = run.timed("ground", || rayon::join(|| pipeline::ground_state(cfg, n), || pipeline::ground_state(cfg, 2 * n)));
    let (a, b) = (a?, b?);
    let mut t = Table::new("ground", &["r", "phi", "dphi_dr", "dphi_dalpha"]);
    for i in 0..a.grid.len() {
        t.push(vec![a.grid.nodes()[i], a.phi[i], a.dphi_dr[i], a.dphi_dalpha[i]]);
    }
    run.tables.push(t);
    let summary = [pipeline::GroundSummary::new(&a), pipeline::GroundSummary::new(&b)];
    run.bundle.add("ground", [n, 2 * n], &summary);
    Ok(())
}

fn spectral(run: &mut Run, cfg: &RunConfig, which: Command) -> Result<Certificate, Failure> {
    let s = run.timed("spectrum", || pipeline::spectral_section(cfg))?;
    run.bundle.add("spectrum", s.resolutions, &s);
    Ok(match which {
        Command::BsCount => pipeline::count_certificate(&s.bs),
        Command::ThresholdCheck => pipeline::threshold_certificate(&s.bs),
        _ => s.certificate,
    })
}

fn linear(run: &mut Run, cfg: &RunConfig) -> Result<(), Failure> {
    let s = run.timed("stability", || pipeline::stability_section(cfg))?;
    run.bundle.add("stability", s.resolutions, &s);
    let d = run.timed("decay", || pipeline::decay_section(cfg))?;
    run.bundle.add("decay", d.resolutions, &d);
    for (name, rep) in &d.series {
        let mut t = Table::new(&format!("decay_{name}"), &["t", "weighted_norm", "averaged_norm"]);
        for k in 0..rep.times.len() {
            t.push(vec![rep.times[k], rep.weighted_norms[k], rep.averaged_norms[k]]);
        }
        run.tables.push(t);
    }
    Ok(())
}

fn nls(run: &mut Run, cfg: &RunConfig) -> Result<(), Failure> {
    let s = run.timed("nls", || pipeline::nls_section(cfg, None))?;
    run.bundle.add("nls", s.resolutions, &s);
    let mut t = Table::new("nls", &["t", "deviation", "mass", "energy"]);
    s.runs[1].series.iter().for_each(|r| t.push(r.to_vec()));
    run.tables.push(t);
    Ok(())
}

fn shoot(run: &mut Run, cfg: &RunConfig, common: &CommonArgs) -> Result<(), Failure> {
    let eps = match common.epsilon.as_slice() {
        [] => *cfg.experiment.epsilon_list.last().expect("validated non-empty"),
        [e] if e.is_finite() && *e >= 0.0 => *e,
        _ => return Err(Failure::Usage("shoot takes a single non-negative --epsilon".into())),
    };
    let s = run.timed("shoot", || pipeline::shooting_section(cfg, eps, None))?;
    run.bundle.add("shoot", s.resolutions, &s);
    let mut t = Table::new("b_plus", &["t", "b_plus", "alpha", "residual"]);
    s.result.b_plus_series.iter().for_each(|p| t.push(vec![p.t, p.b_plus, p.alpha, p.residual]));
    run.tables.push(t);
    let mut d = Table::new("departure", &["offset", "exit_time"]);
    s.result.departure_times.iter().for_each(|&(o, e)| d.push(vec![o, e]));
    run.tables.push(d);
    Ok(())
}

fn sweep(run: &mut Run, cfg: &mut RunConfig, common: &CommonArgs) -> Result<(), Failure> {
    if !common.epsilon.is_empty() {
        cfg.experiment.epsilon_list = common.epsilon.clone();
        cfg.validate()?;
        run.bundle.config = cfg.clone();
    }
    let s = run.timed("sweep", || pipeline::sweep_section(cfg, None))?;
    run.bundle.add("sweep", s.resolutions, &s);
    let mut t = Table::new("h_star", &["epsilon_fraction", "epsilon", "h_star", "bracket_width", "h_star_over_eps2", "coarse_h_star"]);
    for (k, r) in s.sweep.results.iter().enumerate() {
        t.push(vec![s.epsilon_fractions[k], r.epsilon, r.h_star, r.bracket_width, s.sweep.ratios[k], s.coarse_h_star[k]]);
    }
    run.tables.push(t);
    Ok(())
}

fn execute(cmd: Command, common: &CommonArgs) -> Result<i32, Failure> {
    let mut cfg = resolve_config(common)?;
    let mut run = Run { bundle: ReportBundle::new(cmd.name(), cfg.clone()), tables: Vec::new(), clock: Default::default() };
    let mut certificate = None;
    match cmd {
        Command::Ground => ground_tables(&mut run, &cfg)?,
        Command::Spectrum | Command::BsCount | Command::ThresholdCheck => certificate = Some(spectral(&mut run, &cfg, cmd)?),
        Command::EvolveLinear => linear(&mut run, &cfg)?,
        Command::EvolveNls => nls(&mut run, &cfg)?,
        Command::Shoot => shoot(&mut run, &cfg, common)?,
        Command::SweepQuadratic => sweep(&mut run, &mut cfg, common)?,
        Command::CertifyAll => {
            ground_tables(&mut run, &cfg)?;
            certificate = Some(spectral(&mut run, &cfg, cmd)?);
            linear(&mut run, &cfg)?;
            nls(&mut run, &cfg)?;
            sweep(&mut run, &mut cfg, common)?;
        }
    }
    let code = certificate.as_ref().map_or(EXIT_OK, |c| verdict_code(c.verdict));
    if let Some(c) = &certificate {
        for f in &c.findings {
            eprintln!("{}: {f}", cmd.name());
        }
    }
    run.bundle.certificate = certificate;
    if common.timings {
        run.bundle.provenance.wall_clock = Some(run.clock);
    }
    emit(&mut run.bundle, &run.tables, common.out.as_deref())?;
    Ok(code)
}

fn configure_threads() {
    soliton_lab::sequential_kernels();
    if let Some(n) = std::env::var("SOLITON_LAB_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => {
                    eprintln!("\n{}", Cli::command().render_help());
                    EXIT_USAGE
                }
            };
        }
    };
    configure_threads();
    match execute(cli.command, &cli.common) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Lab(e)) => {
            eprintln!("error: {e}");
            lab_exit_code(&e)
        }
        Err(Failure::Report(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
