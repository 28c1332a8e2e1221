//! Experiment runners shared by the subcommands. Each section records the
//! pair of resolutions used to check its numbers.

use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use soliton_lab::ground::{solve_ground_state_with, GroundState, GroundStateOptions};
use soliton_lab::linear::{
    gaussian_probe, measure_growth_rate, measure_local_decay, measure_stability, smooth_probe, DecayOptions, DecayReport, EigenPropagator,
    StabilityOptions, StabilityReport,
};
use soliton_lab::nls::{run_nls, NlsOptions, Splitting};
use soliton_lab::ops::SectorHamiltonian;
use soliton_lab::projections::{build_projections, RootFamily};
use soliton_lab::radial::{RadialGrid, SectorIndex, Stencil};
use soliton_lab::shooting::{
    default_profile, shoot_manifold, sweep_quadratic, QuadraticSweep, ShootingOptions, ShootingResult, ShootingSetup,
};
use soliton_lab::spectral::{
    bs_spectra, conjugate_pair, count_from_spectra, eigenpair_banded, imaginary_pair, margin_from_spectra, spectral_report, BsWhich,
    SpectralConfig, SpectralReport,
};
use soliton_lab::{LabError, Result};

use crate::config::{GridConfig, RunConfig};

pub fn grid(cfg: &RunConfig, g: &GridConfig, n: usize) -> Result<RadialGrid<f64>> {
    RadialGrid::new(g.r_max(cfg.alpha0), n)
}

pub fn ground_state(cfg: &RunConfig, n: usize) -> Result<GroundState<f64>> {
    let opts = GroundStateOptions { newton_tol: cfg.tolerances.newton_tol, ..GroundStateOptions::default() };
    solve_ground_state_with(cfg.alpha0, &grid(cfg, &cfg.grid, n)?, opts)
}

fn spectral_config(cfg: &RunConfig) -> SpectralConfig {
    SpectralConfig { ell_max: cfg.experiment.ell_max, zero_threshold: cfg.tolerances.eig_tol, ..SpectralConfig::default() }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundSummary {
    pub alpha: f64,
    pub n: usize,
    pub r_max: f64,
    pub amplitude: f64,
    pub shooting_amplitude: f64,
    pub mass: f64,
    /// `α‖φ‖₂²`, independent of `α` by scaling
    pub scaled_mass: f64,
    pub residual: f64,
    pub newton_iterations: usize,
}

impl GroundSummary {
    pub fn new(gs: &GroundState<f64>) -> Self {
        Self {
            alpha: gs.alpha,
            n: gs.grid.len(),
            r_max: gs.grid.r_max(),
            amplitude: gs.amplitude,
            shooting_amplitude: gs.shooting_amplitude,
            mass: gs.mass,
            scaled_mass: gs.mass * gs.alpha,
            residual: gs.residual,
            newton_iterations: gs.newton_iterations,
        }
    }
}

/// Outcome of checking the spectral hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    /// a hypothesis fails consistently at both resolutions
    Violated,
    /// the resolutions disagree or a quantity sits on a decision boundary
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub findings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BsSection {
    pub resolutions: [usize; 2],
    pub bs_count_minus: [usize; 2],
    pub bs_count_plus: [usize; 2],
    /// eigenvalues of `K₋` (sector, value) above 1
    pub minus_above_1: Vec<(usize, f64)>,
    /// eigenvalues of `K₊` (sector, value) above 1
    pub plus_above_1: Vec<(usize, f64)>,
    pub ambiguous: Vec<(usize, f64)>,
    /// `min |μ - 1|` over the spectrum of `K₋`
    pub threshold_margin: [f64; 2],
    /// `|m(2n) - m(n)| / m(n)`
    pub margin_change: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSection {
    pub resolutions: [usize; 2],
    pub coarse: SpectralReport,
    pub fine: SpectralReport,
    /// `fine - coarse` of the scalar quantities
    pub deltas: SpectralDeltas,
    pub bs: BsSection,
    pub certificate: Certificate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralDeltas {
    #[serde(rename = "E0")]
    pub e0: f64,
    pub lambda1: f64,
    pub sigma: f64,
    pub threshold_margin: f64,
    pub zero_spread: f64,
}

impl SpectralDeltas {
    fn new(c: &SpectralReport, f: &SpectralReport) -> Self {
        Self {
            e0: f.e0 - c.e0,
            lambda1: f.lambda1 - c.lambda1,
            sigma: f.sigma - c.sigma,
            threshold_margin: f.threshold_margin - c.threshold_margin,
            zero_spread: f.strip.zero_spread - c.strip.zero_spread,
        }
    }
}

pub fn bs_section(cfg: &RunConfig) -> Result<BsSection> {
    let n = cfg.grid.n;
    let ell = cfg.experiment.ell_max;
    let tol = SpectralConfig::default().bs_tolerance;
    let spectra: Vec<Vec<Vec<f64>>> =
        [n, 2 * n].par_iter().map(|&m| ground_state(cfg, m).and_then(|gs| bs_spectra(&gs, ell, 1.0))).collect::<Result<_>>()?;
    let minus: Vec<_> = spectra.iter().map(|s| count_from_spectra(s, BsWhich::Minus, tol)).collect();
    let plus: Vec<_> = spectra.iter().map(|s| count_from_spectra(s, BsWhich::Plus, tol)).collect();
    let margin = [margin_from_spectra(&spectra[0]), margin_from_spectra(&spectra[1])];
    let mut ambiguous: Vec<(usize, f64)> = minus.iter().chain(&plus).flat_map(|c| c.ambiguous.clone()).collect();
    ambiguous.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(BsSection {
        resolutions: [n, 2 * n],
        bs_count_minus: [minus[0].count, minus[1].count],
        bs_count_plus: [plus[0].count, plus[1].count],
        minus_above_1: minus[1].eigenvalues_above_1.clone(),
        plus_above_1: plus[1].eigenvalues_above_1.clone(),
        ambiguous,
        threshold_margin: margin,
        margin_change: (margin[1] - margin[0]).abs() / margin[0],
    })
}

/// Verdict on the threshold margin alone.
pub fn threshold_certificate(bs: &BsSection) -> Certificate {
    let mut findings = Vec::new();
    let [m0, m1] = bs.threshold_margin;
    let mut verdict = Verdict::Certified;
    if m0 < 0.05 && m1 < 0.05 {
        verdict = Verdict::Violated;
        findings.push(format!("threshold margin {m1:.4} below 0.05"));
    } else if m0 < 0.05 || m1 < 0.05 || bs.margin_change > 0.2 {
        verdict = Verdict::Inconclusive;
        findings.push(format!("threshold margin {m0:.4} vs {m1:.4} under doubling"));
    }
    Certificate { verdict, findings }
}

/// Verdict on the bound-state counts alone.
pub fn count_certificate(bs: &BsSection) -> Certificate {
    let mut findings = Vec::new();
    let mut verdict = Verdict::Certified;
    if bs.bs_count_minus[0] != bs.bs_count_minus[1] || bs.bs_count_plus[0] != bs.bs_count_plus[1] || !bs.ambiguous.is_empty() {
        verdict = Verdict::Inconclusive;
        findings.push(format!(
            "counts differ under doubling or sit at 1: K₋ {:?}, K₊ {:?}, ambiguous {:?}",
            bs.bs_count_minus, bs.bs_count_plus, bs.ambiguous
        ));
    } else if bs.bs_count_minus[1] != 1 || bs.bs_count_plus[1] != 4 {
        verdict = Verdict::Violated;
        findings.push(format!("counts (K₋, K₊) = ({}, {}), expected (1, 4)", bs.bs_count_minus[1], bs.bs_count_plus[1]));
    }
    Certificate { verdict, findings }
}

fn merge(parts: &[Certificate]) -> Certificate {
    let verdict = if parts.iter().any(|c| c.verdict == Verdict::Violated) {
        Verdict::Violated
    } else if parts.iter().any(|c| c.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Certified
    };
    Certificate { verdict, findings: parts.iter().flat_map(|c| c.findings.clone()).collect() }
}

pub fn spectral_section(cfg: &RunConfig) -> Result<SpectralSection> {
    let n = cfg.grid.n;
    let sc = spectral_config(cfg);
    let (coarse, fine) = rayon::join(
        || ground_state(cfg, n).and_then(|gs| spectral_report(&gs, &sc)),
        || ground_state(cfg, 2 * n).and_then(|gs| spectral_report(&gs, &sc)),
    );
    let (coarse, fine) = (coarse?, fine?);
    let bs = bs_section(cfg)?;

    let mut findings = Vec::new();
    let mut verdict = Verdict::Certified;
    if fine.l_plus_negative != 1 {
        verdict = Verdict::Violated;
        findings.push(format!("L₊ has {} negative eigenvalues", fine.l_plus_negative));
    }
    if (fine.root_dim_geometric, fine.root_dim_algebraic) != (4, 8) {
        verdict = Verdict::Violated;
        findings.push(format!("root space ({}, {})", fine.root_dim_geometric, fine.root_dim_algebraic));
    } else if fine.root_dim_cubic != fine.root_dim_algebraic {
        verdict = Verdict::Violated;
        findings.push(format!("ker H³ has dimension {} ≠ {}", fine.root_dim_cubic, fine.root_dim_algebraic));
    }
    let strip = &fine.strip;
    if strip.near_zero != 8 || strip.imaginary.len() != 2 || !strip.unexpected.is_empty() {
        verdict = Verdict::Violated;
        findings.push(format!(
            "strip: {} near zero, {} imaginary, {} other",
            strip.near_zero,
            strip.imaginary.len(),
            strip.unexpected.len()
        ));
    }
    if !fine.interval_clear {
        verdict = Verdict::Violated;
        findings.push("L₋ or L₊ has eigenvalues in (0, α²)".into());
    }
    let own = Certificate { verdict, findings };
    let certificate = merge(&[own, count_certificate(&bs), threshold_certificate(&bs)]);
    Ok(SpectralSection { resolutions: [n, 2 * n], deltas: SpectralDeltas::new(&coarse, &fine), coarse, fine, bs, certificate })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilitySection {
    pub resolutions: [usize; 2],
    pub seed: u64,
    pub reports: [StabilityReport; 2],
    pub sigma: [f64; 2],
    /// growth rate of a generic probe's `f⁺` coefficient under Crank–Nicolson
    pub growth_rate: [f64; 2],
    pub growth_relative_error: [f64; 2],
}

fn stability_at(cfg: &RunConfig, n: usize) -> Result<(StabilityReport, f64, f64)> {
    let gs = ground_state(cfg, n)?;
    let alpha = gs.alpha;
    let (sol, plus, minus) = imaginary_pair(&gs)?;
    let set = build_projections(&gs, &RootFamily::radial(&gs), &plus, &minus)?;
    let ham = SectorHamiltonian::new(&gs, SectorIndex::S);
    let prop = EigenPropagator::new(&ham)?;
    let probes: Vec<Vec<c64>> =
        (0..cfg.experiment.probes).map(|k| smooth_probe(&gs.grid, alpha, cfg.experiment.seed.wrapping_add(k as u64))).collect();
    let rep = measure_stability(&prop, alpha, Some(&set), &gs.grid, &probes, StabilityOptions::for_alpha(alpha));
    let dt = cfg.tolerances.ode_dt / (alpha * alpha);
    let rate = measure_growth_rate(&ham, &gs.grid, &plus, &probes[0], 3.0 / sol.sigma, dt)?;
    Ok((rep, sol.sigma, rate))
}

pub fn stability_section(cfg: &RunConfig) -> Result<StabilitySection> {
    let n = cfg.grid.n;
    let pair = [n / 2, n];
    let runs: Vec<(StabilityReport, f64, f64)> = pair.par_iter().map(|&m| stability_at(cfg, m)).collect::<Result<_>>()?;
    let [a, b]: [(StabilityReport, f64, f64); 2] = runs.try_into().expect("two resolutions");
    Ok(StabilitySection {
        resolutions: pair,
        seed: cfg.experiment.seed,
        sigma: [a.1, b.1],
        growth_rate: [a.2, b.2],
        growth_relative_error: [(a.2 - a.1).abs() / a.1, (b.2 - b.1).abs() / b.1],
        reports: [a.0, b.0],
    })
}

/// Fit summary of one local-decay run; the series go to CSV.
#[derive(Clone, Debug, Serialize)]
pub struct DecaySummary {
    pub n: usize,
    pub r_max: f64,
    pub fitted_exponent: f64,
    pub r_squared: f64,
    pub raw_exponent: f64,
    pub fit_window: (f64, f64),
    pub window_limit: f64,
    pub reflection_time: Option<f64>,
}

impl DecaySummary {
    fn new(grid: &RadialGrid<f64>, r: &DecayReport) -> Self {
        Self {
            n: grid.len(),
            r_max: grid.r_max(),
            fitted_exponent: r.fitted_exponent,
            r_squared: r.r_squared,
            raw_exponent: r.raw_exponent,
            fit_window: r.fit_window,
            window_limit: r.window_limit,
            reflection_time: r.reflection_time,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySection {
    pub resolutions: [usize; 2],
    pub probe_width: f64,
    pub full: [DecaySummary; 2],
    pub free: [DecaySummary; 2],
    #[serde(skip)]
    pub series: Vec<(String, DecayReport)>,
}

fn decay_at(cfg: &RunConfig, n: usize) -> Result<(DecaySummary, DecaySummary, DecayReport, DecayReport)> {
    let alpha = cfg.alpha0;
    let g = grid(cfg, &cfg.decay_grid, n)?;
    let gs = solve_ground_state_with(alpha, &g, GroundStateOptions { newton_tol: cfg.tolerances.newton_tol, ..Default::default() })?;
    let w = cfg.experiment.decay_width / alpha;
    let sigma_guess = ground_state(cfg, cfg.grid.n).and_then(|s| imaginary_pair(&s)).map(|p| p.0.sigma)?;
    let plus = eigenpair_banded(&gs, sigma_guess)?;
    let minus = conjugate_pair(&plus);
    let set = build_projections(&gs, &RootFamily::radial(&gs), &plus, &minus)?;
    let probe = gaussian_probe(&g, w);
    let opts = DecayOptions::for_alpha(alpha, 1.0 + (3.0 / (w * alpha)).powi(2));
    let ham = SectorHamiltonian::new(&gs, SectorIndex::S);
    let free = SectorHamiltonian::free(&g, Stencil::default(), SectorIndex::S, alpha);
    let (a, b) =
        rayon::join(|| measure_local_decay(&ham, &g, Some(&set), &probe, &opts), || measure_local_decay(&free, &g, None, &probe, &opts));
    let (a, b) = (a?, b?);
    Ok((DecaySummary::new(&g, &a), DecaySummary::new(&g, &b), a, b))
}

pub fn decay_section(cfg: &RunConfig) -> Result<DecaySection> {
    let n = cfg.decay_grid.n;
    let pair = [n / 2, n];
    let runs: Vec<_> = pair.par_iter().map(|&m| decay_at(cfg, m)).collect::<Result<_>>()?;
    let [c, f]: [_; 2] = runs.try_into().map_err(|_| LabError::Inconclusive("decay runs".into()))?;
    Ok(DecaySection {
        resolutions: pair,
        probe_width: cfg.experiment.decay_width / cfg.alpha0,
        full: [c.0, f.0],
        free: [c.1, f.1],
        series: vec![("full".into(), f.2), ("free".into(), f.3)],
    })
}

/// Deviation of the computed soliton from `e^{itα²}φ`.
#[derive(Clone, Debug, Serialize)]
pub struct FidelityRun {
    pub n: usize,
    /// first sampled time with `‖ψ - e^{itα²}φ‖₂ > 1e-5·‖φ‖₂`
    pub fidelity_lost_at: Option<f64>,
    pub max_deviation: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub blow_up: Option<f64>,
    /// `(t, ‖ψ - e^{itα²}φ‖₂/‖φ‖₂, mass, energy)`
    #[serde(skip)]
    pub series: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NlsSection {
    pub resolutions: [usize; 2],
    pub horizon: f64,
    pub dt: f64,
    pub splitting: Splitting,
    pub runs: [FidelityRun; 2],
}

fn fidelity_at(cfg: &RunConfig, n: usize, horizon: f64, dt: f64) -> Result<FidelityRun> {
    let gs = ground_state(cfg, n)?;
    let alpha = gs.alpha;
    let psi0: Vec<c64> = gs.phi.iter().map(|&p| c64::new(p, 0.0)).collect();
    let mut opts = NlsOptions::for_alpha(alpha);
    opts.dt = dt;
    opts.sample_every = ((0.01 / (alpha * alpha)) / dt).round().max(1.0) as usize;
    let run = run_nls(&gs.grid, gs.stencil, &psi0, horizon, &opts)?;
    let w = gs.grid.line_weight(SectorIndex::S);
    let norm = gs.norm();
    let mut series = Vec::with_capacity(run.times.len());
    let mut lost = None;
    let mut max_dev: f64 = 0.0;
    for (k, (t, s)) in run.times.iter().zip(&run.states).enumerate() {
        let rot = c64::from_polar(1.0, t * alpha * alpha);
        let d2: f64 = s.iter().zip(&gs.phi).zip(gs.grid.nodes()).map(|((z, p), r)| (z - rot * p).norm_sqr() * r * r).sum();
        let dev = (w * d2).sqrt() / norm;
        if dev > 1e-5 && lost.is_none() {
            lost = Some(*t);
        }
        max_dev = max_dev.max(dev);
        series.push([*t, dev, run.mass[k], run.energy[k]]);
    }
    Ok(FidelityRun {
        n,
        fidelity_lost_at: lost,
        max_deviation: max_dev,
        mass_drift: run.mass_drift(),
        energy_drift: run.energy_drift(),
        blow_up: run.blow_up,
        series,
    })
}

pub fn nls_section(cfg: &RunConfig, horizon: Option<f64>) -> Result<NlsSection> {
    let a2 = cfg.alpha0 * cfg.alpha0;
    let horizon = horizon.unwrap_or(cfg.experiment.nls_horizon / a2);
    let dt = cfg.tolerances.nls_dt / a2;
    let n = cfg.grid.n;
    let pair = [n / 2, n];
    let runs: Vec<FidelityRun> = pair.par_iter().map(|&m| fidelity_at(cfg, m, horizon, dt)).collect::<Result<_>>()?;
    let runs: [FidelityRun; 2] = runs.try_into().map_err(|_| LabError::Inconclusive("fidelity runs".into()))?;
    Ok(NlsSection { resolutions: pair, horizon, dt, splitting: Splitting::Strang, runs })
}

pub fn shooting_options(cfg: &RunConfig, t_run: Option<f64>) -> ShootingOptions {
    ShootingOptions {
        dt: cfg.tolerances.ode_dt / (cfg.alpha0 * cfg.alpha0),
        t_run: t_run.or(cfg.experiment.t_run),
        exit_fraction: cfg.experiment.exit_threshold,
        ..ShootingOptions::default()
    }
}

fn setup_at(cfg: &RunConfig, n: usize) -> Result<ShootingSetup> {
    let gs = ground_state(cfg, n)?;
    let profile = default_profile(&gs);
    ShootingSetup::new(gs, &profile)
}

#[derive(Clone, Debug, Serialize)]
pub struct ShootingSection {
    pub resolutions: [usize; 2],
    pub sigma: f64,
    pub phi_norm: f64,
    /// amplitude in units of `‖φ‖₂`
    pub epsilon_fraction: f64,
    pub result: ShootingResult,
    /// `h*` located on the coarse grid (no departure runs)
    pub coarse_h_star: f64,
}

pub fn shooting_section(cfg: &RunConfig, epsilon_fraction: f64, t_run: Option<f64>) -> Result<ShootingSection> {
    let n = cfg.grid.n;
    let opts = shooting_options(cfg, t_run);
    let bare = ShootingOptions { departure_offsets: vec![], ..opts.clone() };
    let (fine, coarse) = rayon::join(
        || -> Result<(ShootingSetup, ShootingResult)> {
            let s = setup_at(cfg, n)?;
            let eps = epsilon_fraction * s.ground.norm();
            let r = shoot_manifold(&s, eps, &opts)?;
            Ok((s, r))
        },
        || -> Result<ShootingResult> {
            let s = setup_at(cfg, n / 2)?;
            shoot_manifold(&s, epsilon_fraction * s.ground.norm(), &bare)
        },
    );
    let (setup, result) = fine?;
    Ok(ShootingSection {
        resolutions: [n / 2, n],
        sigma: setup.sigma,
        phi_norm: setup.ground.norm(),
        epsilon_fraction,
        result,
        coarse_h_star: coarse?.h_star,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSection {
    pub resolutions: [usize; 2],
    pub sigma: f64,
    pub phi_norm: f64,
    pub epsilon_fractions: Vec<f64>,
    pub sweep: QuadraticSweep,
    /// `h*` per amplitude on the coarse grid
    pub coarse_h_star: Vec<f64>,
    pub coarse_exponent: f64,
}

pub fn sweep_section(cfg: &RunConfig, t_run: Option<f64>) -> Result<SweepSection> {
    let n = cfg.grid.n;
    let fr = cfg.experiment.epsilon_list.clone();
    let opts = shooting_options(cfg, t_run);
    let bare = ShootingOptions { departure_offsets: vec![], ..opts.clone() };
    let (fine, coarse) = rayon::join(
        || -> Result<(ShootingSetup, QuadraticSweep)> {
            let s = setup_at(cfg, n)?;
            let eps: Vec<f64> = fr.iter().map(|f| f * s.ground.norm()).collect();
            let sw = sweep_quadratic(&s, &eps, &opts)?;
            Ok((s, sw))
        },
        || -> Result<QuadraticSweep> {
            let s = setup_at(cfg, n / 2)?;
            let eps: Vec<f64> = fr.iter().map(|f| f * s.ground.norm()).collect();
            sweep_quadratic(&s, &eps, &bare)
        },
    );
    let (setup, sweep) = fine?;
    let coarse = coarse?;
    Ok(SweepSection {
        resolutions: [n / 2, n],
        sigma: setup.sigma,
        phi_norm: setup.ground.norm(),
        epsilon_fractions: fr,
        sweep,
        coarse_h_star: coarse.results.iter().map(|r| r.h_star).collect(),
        coarse_exponent: coarse.exponent,
    })
}
