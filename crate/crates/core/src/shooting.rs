//! Bisection shooting for the stabilizing unstable-mode coefficient `h*`
//! that keeps a perturbed soliton on the center-stable manifold.

use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::ground::GroundState;
use crate::modulation::{decompose_line, ProfileFamily, SolitonParams};
use crate::nls::{NlsPropagator, Splitting};
use crate::projections::{build_projections, MultiField, ProjectionKind, ProjectionSet, RootFamily};
use crate::radial::SectorIndex;
use crate::spectral::{imaginary_pair, line_norm, linear_fit, EigenPair};

#[derive(Clone, Debug, Serialize)]
pub struct ShootingOptions {
    pub dt: f64,
    pub splitting: Splitting,
    /// run length; `None` means `max(10/σ, 30/α²)`
    pub t_run: Option<f64>,
    /// exit when `|b⁺|` exceeds this fraction of `‖φ‖₂`
    pub exit_fraction: f64,
    /// decompose every this many steps
    pub decompose_every: usize,
    /// initial bracket `±bracket_fraction·ε`
    pub bracket_fraction: f64,
    /// stop when the bracket is narrower than `width_factor·ε²`
    pub width_factor: f64,
    /// offsets `h - h*` in units of `ε` for the departure-time law
    pub departure_offsets: Vec<f64>,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            splitting: Splitting::Yoshida,
            t_run: None,
            exit_fraction: 0.2,
            decompose_every: 10,
            bracket_fraction: 0.5,
            width_factor: 1e-3,
            departure_offsets: (0..8).map(|k| 0.1 * 10f64.powf(-0.5 * k as f64)).collect(),
        }
    }
}

/// Ground state, unstable pair and projections shared by every trial.
pub struct ShootingSetup {
    pub ground: GroundState<f64>,
    pub sigma: f64,
    pub f_plus: EigenPair,
    pub projections: ProjectionSet,
    /// unit-norm `R₀` direction with `(R̂, R̂̄)` in the range of `I - P_u⁺`
    pub direction: Vec<c64>,
}

/// Default perturbation profile `ψ = e^{-r²/2}(1 + r)`.
pub fn default_profile(gs: &GroundState<f64>) -> Vec<f64> {
    gs.grid.nodes().iter().map(|&r| (-0.5 * r * r).exp() * (1.0 + r)).collect()
}

impl ShootingSetup {
    /// `profile` holds real node samples of `R₀`'s shape.
    pub fn new(ground: GroundState<f64>, profile: &[f64]) -> Result<Self> {
        let grid = &ground.grid;
        let n = grid.len();
        if profile.len() != n {
            return Err(invalid(format!("profile has {} samples, grid has {}", profile.len(), n)));
        }
        let (sol, plus, minus) = imaginary_pair(&ground)?;
        let family = RootFamily::radial(&ground);
        let projections = build_projections(&ground, &family, &plus, &minus)?;
        let line: Vec<c64> = profile.iter().zip(grid.nodes()).map(|(p, r)| c64::new(p * r, 0.0)).collect();
        let z = MultiField::radial(line.iter().copied().chain(line.iter().map(|x| x.conj())).collect());
        let mut kept = z.clone();
        kept.axpy(c64::new(-1.0, 0.0), &projections.apply(ProjectionKind::UnstablePlus, &z));
        let mut direction: Vec<c64> = kept.channels[0][..n].to_vec();
        let nd = line_norm(grid, SectorIndex::S, &direction);
        if !(nd > 1e-12) {
            return Err(invalid("perturbation profile lies in the unstable subspace"));
        }
        direction.iter_mut().for_each(|x| *x /= nd);
        Ok(Self { sigma: sol.sigma, ground, f_plus: plus, projections, direction })
    }

    pub fn t_run(&self, opts: &ShootingOptions) -> f64 {
        let a2 = self.ground.alpha * self.ground.alpha;
        opts.t_run.unwrap_or((10.0 / self.sigma).max(30.0 / a2))
    }

    /// `⟨Z, f̃⁺⟩` for `Z = (R, R̄)`.
    pub fn b_plus(&self, r: &[c64]) -> f64 {
        let z: Vec<c64> = r.iter().copied().chain(r.iter().map(|x| x.conj())).collect();
        self.f_plus.coefficient(&self.ground.grid, &z).re
    }

    /// `u`-line initial data `φ + εR̂ + h f⁺₁`.
    pub fn initial_line(&self, epsilon: f64, h: f64) -> Vec<c64> {
        let n = self.ground.grid.len();
        self.ground.line().iter().zip(&self.direction).zip(&self.f_plus.right[..n]).map(|((&p, &d), &f)| p + epsilon * d + h * f).collect()
    }
}

/// One decomposed sample along a trial.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub b_plus: f64,
    pub alpha: f64,
    /// `‖R(t)‖₂`
    pub residual: f64,
}

/// Why a trial stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Threshold,
    DecompositionFailed,
    BlowUp,
    Survived,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialOutcome {
    pub h: f64,
    pub exit_time: f64,
    /// sign of `b⁺` at departure, or at the end of a surviving run
    pub sign: i8,
    pub reason: ExitReason,
    /// `sup ‖R(t)‖₂` over the decomposed samples
    pub sup_residual: f64,
    /// filled when recording
    pub series: Vec<TrackSample>,
}

/// Evolves one trial and classifies its departure.
pub fn run_trial(setup: &ShootingSetup, epsilon: f64, h: f64, opts: &ShootingOptions, record: bool) -> Result<TrialOutcome> {
    let gs = &setup.ground;
    let grid = &gs.grid;
    let prop = NlsPropagator::new(grid, gs.stencil, opts.dt, opts.splitting)?;
    let mut family = ProfileFamily::new(gs.clone());
    let t_run = setup.t_run(opts);
    let threshold = opts.exit_fraction * gs.norm();
    let steps = (t_run / opts.dt).round() as usize;
    let every = opts.decompose_every.max(1);
    let a2 = gs.alpha * gs.alpha;

    let mut u = setup.initial_line(epsilon, h);
    let mut params = SolitonParams::radial(0.0, gs.alpha);
    let mut out = TrialOutcome { h, exit_time: t_run, sign: 0, reason: ExitReason::Survived, sup_residual: 0.0, series: vec![] };
    let mut last_b = 0.0;
    let initial = decompose_line(&mut family, &u, &params);
    if let Ok(d) = &initial {
        out.sup_residual = line_norm(grid, SectorIndex::S, &d.residual);
        last_b = setup.b_plus(&d.residual);
        if record {
            out.series.push(TrackSample { t: 0.0, b_plus: last_b, alpha: d.params.alpha, residual: out.sup_residual });
        }
    }
    for k in 1..=steps {
        prop.step(&mut u);
        if k % every != 0 && k != steps {
            continue;
        }
        let t = k as f64 * opts.dt;
        if prop.sup_norm(&u) > 50.0 * gs.alpha || u.iter().any(|z| !z.re.is_finite()) {
            return Ok(TrialOutcome { exit_time: t, sign: sign_of(last_b), reason: ExitReason::BlowUp, ..out });
        }
        let guess = SolitonParams { gamma: params.gamma + a2 * every as f64 * opts.dt, ..params };
        match decompose_line(&mut family, &u, &guess) {
            Ok(d) => {
                params = d.params;
                let b = setup.b_plus(&d.residual);
                last_b = b;
                let nr = line_norm(grid, SectorIndex::S, &d.residual);
                out.sup_residual = out.sup_residual.max(nr);
                if record {
                    out.series.push(TrackSample { t, b_plus: b, alpha: params.alpha, residual: nr });
                }
                if b.abs() > threshold {
                    return Ok(TrialOutcome { exit_time: t, sign: sign_of(b), reason: ExitReason::Threshold, ..out });
                }
            }
            Err(LabError::NoConvergence(_)) => {
                return Ok(TrialOutcome { exit_time: t, sign: sign_of(last_b), reason: ExitReason::DecompositionFailed, ..out });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrialOutcome { sign: sign_of(last_b), ..out })
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ShootingResult {
    pub epsilon: f64,
    pub h_star: f64,
    pub bracket_width: f64,
    pub t_run: f64,
    /// the run at `h*` stayed below the exit threshold up to `t_run`
    pub survived: bool,
    pub survival_time: f64,
    pub sup_residual: f64,
    /// samples along the run at `h*`
    pub b_plus_series: Vec<TrackSample>,
    /// `(h, exit time)` for the off-manifold trials (`t_run` if still on the orbit)
    pub departure_times: Vec<(f64, f64)>,
    /// slope of exit time against `ln|h - h*|`
    pub departure_slope: f64,
    pub departure_r_squared: f64,
    /// every bisection trial `(h, sign)` in evaluation order
    pub trials: Vec<(f64, i8)>,
}

impl ShootingResult {
    /// `sup ‖R(t)‖₂` over samples with `t ≤ horizon` on the run at `h*`.
    pub fn sup_residual_until(&self, horizon: f64) -> f64 {
        self.b_plus_series.iter().filter(|s| s.t <= horizon + 1e-12).fold(0.0, |m, s| m.max(s.residual))
    }

    /// Whether the run at `h*` stayed on the orbit up to `horizon`.
    pub fn survives_until(&self, horizon: f64) -> bool {
        self.survived || self.survival_time >= horizon - 1e-12
    }
}

/// Finds `h*` for amplitude `epsilon` and measures the departure law.
pub fn shoot_manifold(setup: &ShootingSetup, epsilon: f64, opts: &ShootingOptions) -> Result<ShootingResult> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let t_run = setup.t_run(opts);
    if epsilon == 0.0 {
        let run = run_trial(setup, 0.0, 0.0, opts, true)?;
        return Ok(ShootingResult {
            epsilon,
            h_star: 0.0,
            bracket_width: 0.0,
            t_run,
            survived: run.reason == ExitReason::Survived,
            survival_time: run.exit_time,
            sup_residual: run.sup_residual,
            b_plus_series: run.series,
            departure_times: vec![],
            departure_slope: f64::NAN,
            departure_r_squared: f64::NAN,
            trials: vec![(0.0, run.sign)],
        });
    }

    let mut trials = Vec::new();
    let ends = |half: f64| -> Result<(TrialOutcome, TrialOutcome)> {
        let (lo, hi) = rayon::join(|| run_trial(setup, epsilon, -half, opts, false), || run_trial(setup, epsilon, half, opts, false));
        Ok((lo?, hi?))
    };
    let mut half = opts.bracket_fraction * epsilon;
    let (mut lo, mut hi) = ends(half)?;
    let exited = |t: &TrialOutcome| t.reason != ExitReason::Survived;
    if lo.sign == hi.sign || !exited(&lo) || !exited(&hi) {
        half *= 2.0;
        let retry = ends(half)?;
        lo = retry.0;
        hi = retry.1;
        if lo.sign == hi.sign || !exited(&lo) || !exited(&hi) {
            return Err(LabError::BracketFailure(format!(
                "ends ±{half:.3e} exit with signs {} and {} at ε = {epsilon:.3e}",
                lo.sign, hi.sign
            )));
        }
    }
    trials.push((lo.h, lo.sign));
    trials.push((hi.h, hi.sign));
    let (mut a, mut b) = (lo.h, hi.h);
    let sign_a = lo.sign;
    let width_goal = opts.width_factor * epsilon * epsilon;
    while b - a > width_goal {
        let m = 0.5 * (a + b);
        let t = run_trial(setup, epsilon, m, opts, false)?;
        trials.push((m, t.sign));
        if t.sign == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    check_monotone(&trials)?;
    let h_star = 0.5 * (a + b);
    let at_star = run_trial(setup, epsilon, h_star, opts, true)?;

    // departure law: both sides of h*, offsets well above the bracket width
    let offsets: Vec<f64> = opts.departure_offsets.iter().map(|k| k * epsilon).filter(|&d| d >= 20.0 * (b - a)).collect();
    let runs: Vec<TrialOutcome> = offsets.par_iter().map(|&d| run_trial(setup, epsilon, h_star + d, opts, false)).collect::<Result<_>>()?;
    let departures: Vec<(f64, f64)> = runs.iter().map(|t| (t.h, t.exit_time)).collect();
    // runs still on the orbit at t_run carry no departure time
    let pts: Vec<(f64, f64)> =
        runs.iter().filter(|t| t.reason != ExitReason::Survived).map(|t| ((t.h - h_star).abs().ln(), t.exit_time)).collect();
    let (slope, _, r2) = if pts.len() >= 3 { linear_fit(&pts) } else { (f64::NAN, f64::NAN, f64::NAN) };

    Ok(ShootingResult {
        epsilon,
        h_star,
        bracket_width: b - a,
        t_run,
        survived: at_star.reason == ExitReason::Survived,
        survival_time: at_star.exit_time,
        sup_residual: at_star.sup_residual,
        b_plus_series: at_star.series,
        departure_times: departures,
        departure_slope: slope,
        departure_r_squared: r2,
        trials,
    })
}

/// Exit sign must be monotone in `h` across all evaluated trials.
fn check_monotone(trials: &[(f64, i8)]) -> Result<()> {
    let mut sorted: Vec<(f64, i8)> = trials.iter().copied().filter(|t| t.1 != 0).collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let flips = sorted.windows(2).filter(|w| w[0].1 != w[1].1).count();
    if flips > 1 {
        return Err(LabError::BracketFailure(format!("exit sign is not monotone in h ({flips} sign changes)")));
    }
    Ok(())
}

/// `h*` over several amplitudes and the fitted power law.
#[derive(Clone, Debug, Serialize)]
pub struct QuadraticSweep {
    pub results: Vec<ShootingResult>,
    /// slope of `ln|h*|` against `ln ε`
    pub exponent: f64,
    pub r_squared: f64,
    /// `h*/ε²` per amplitude
    pub ratios: Vec<f64>,
}

pub fn sweep_quadratic(setup: &ShootingSetup, epsilons: &[f64], opts: &ShootingOptions) -> Result<QuadraticSweep> {
    if epsilons.len() < 2 || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(invalid("sweep needs at least two positive amplitudes"));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(f64::total_cmp);
    let results: Vec<ShootingResult> = eps.par_iter().map(|&e| shoot_manifold(setup, e, opts)).collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.epsilon.ln(), r.h_star.abs().ln())).collect();
    let (exponent, _, r_squared) = linear_fit(&pts);
    let ratios = results.iter().map(|r| r.h_star / (r.epsilon * r.epsilon)).collect();
    Ok(QuadraticSweep { results, exponent, r_squared, ratios })
}
