//! Radial cubic NLS `iψ_t + Δψ + |ψ|²ψ = 0` on the `u = rψ` line.
//!
//! Operator splitting: Crank–Nicolson half-steps for the linear part
//! `i u_t = -u''` and the exact pointwise rotation `u ↦ e^{i|u/r|²τ}u` for
//! the nonlinear part. Both substeps are unitary, so mass is conserved to
//! roundoff; energy drifts at the splitting order.

use num_complex::Complex64 as c64;
use serde::Serialize;

use crate::banded::{BandLu, Banded};
use crate::error::{invalid, LabError, Result};
use crate::radial::{radial_laplacian_with, RadialGrid, SectorIndex, Stencil};

/// Time-splitting scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
pub enum Splitting {
    /// second-order Strang (half linear, full nonlinear, half linear)
    #[default]
    Strang,
    /// fourth-order triple-jump composition of Strang steps
    Yoshida,
}

impl Splitting {
    /// Substep fractions of `dt`.
    fn fractions(self) -> Vec<f64> {
        match self {
            Splitting::Strang => vec![1.0],
            Splitting::Yoshida => {
                let c1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
                vec![c1, 1.0 - 2.0 * c1, c1]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct NlsOptions {
    pub dt: f64,
    pub splitting: Splitting,
    /// record a sample every this many steps
    pub sample_every: usize,
    /// keep the sampled states (not only diagnostics)
    pub keep_states: bool,
    /// `‖ψ‖∞` above this value stops the run
    pub blowup_level: f64,
}

impl NlsOptions {
    pub fn for_alpha(alpha: f64) -> Self {
        Self { dt: 1e-3 / (alpha * alpha), splitting: Splitting::Strang, sample_every: 100, keep_states: true, blowup_level: 50.0 * alpha }
    }
}

struct Substep {
    tau: f64,
    implicit: BandLu<c64>,
    explicit: Banded<c64>,
}

/// One-step map of the split radial flow.
pub struct NlsPropagator {
    grid: RadialGrid<f64>,
    lap: Banded<f64>,
    inv_r2: Vec<f64>,
    steps: Vec<Substep>,
    pub dt: f64,
    pub splitting: Splitting,
}

impl NlsPropagator {
    pub fn new(grid: &RadialGrid<f64>, stencil: Stencil, dt: f64, splitting: Splitting) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let lap = radial_laplacian_with(grid, SectorIndex::S, stencil);
        let mut steps: Vec<Substep> = Vec::new();
        for f in splitting.fractions() {
            // half-step of length τ/2: (I + iτL/4) u' = (I - iτL/4) u
            let q = c64::new(0.0, 0.25 * f * dt);
            let mut a = lap.map(|x| q * x);
            let mut b = lap.map(|x| -q * x);
            let ones = vec![c64::new(1.0, 0.0); grid.len()];
            a.add_diagonal(&ones);
            b.add_diagonal(&ones);
            steps.push(Substep { tau: f * dt, implicit: a.lu()?, explicit: b });
        }
        let inv_r2 = grid.nodes().iter().map(|r| 1.0 / (r * r)).collect();
        Ok(Self { grid: grid.clone(), lap, inv_r2, steps, dt, splitting })
    }

    pub fn grid(&self) -> &RadialGrid<f64> {
        &self.grid
    }

    fn half_linear(s: &Substep, u: &mut Vec<c64>) {
        *u = s.explicit.matvec(u);
        s.implicit.solve_in_place(u);
    }

    /// Advances the `u`-line state by one step `dt`.
    pub fn step(&self, u: &mut Vec<c64>) {
        for s in &self.steps {
            Self::half_linear(s, u);
            for (z, &w) in u.iter_mut().zip(&self.inv_r2) {
                *z *= c64::from_polar(1.0, z.norm_sqr() * w * s.tau);
            }
            Self::half_linear(s, u);
        }
    }

    /// `∫|ψ|²`.
    pub fn mass(&self, u: &[c64]) -> f64 {
        self.grid.line_weight(SectorIndex::S) * u.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `∫|∇ψ|² - ½|ψ|⁴` with the discrete Laplacian.
    pub fn energy(&self, u: &[c64]) -> f64 {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let im: Vec<f64> = u.iter().map(|z| z.im).collect();
        let kinetic: f64 = dot(&re, &self.lap.matvec(&re)) + dot(&im, &self.lap.matvec(&im));
        let quartic: f64 = u.iter().zip(&self.inv_r2).map(|(z, w)| z.norm_sqr() * z.norm_sqr() * w).sum();
        self.grid.line_weight(SectorIndex::S) * (kinetic - 0.5 * quartic)
    }

    /// `max |ψ|` over the nodes.
    pub fn sup_norm(&self, u: &[c64]) -> f64 {
        u.iter().zip(self.grid.nodes()).fold(0.0, |m, (z, r)| m.max(z.norm() / r))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples of one run; states are `ψ` at the nodes.
#[derive(Clone, Debug, Serialize)]
pub struct NlsRun {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Vec<c64>>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub sup_norm: Vec<f64>,
    /// time at which the blow-up proxy fired
    pub blow_up: Option<f64>,
}

impl NlsRun {
    pub fn mass_drift(&self) -> f64 {
        relative_drift(&self.mass)
    }

    pub fn energy_drift(&self) -> f64 {
        relative_drift(&self.energy)
    }
}

fn relative_drift(v: &[f64]) -> f64 {
    match v.first() {
        Some(&v0) => v.iter().fold(0.0f64, |m, x| m.max((x - v0).abs())) / v0.abs().max(f64::MIN_POSITIVE),
        None => 0.0,
    }
}

fn check_run(grid: &RadialGrid<f64>, psi0: &[c64], opts: &NlsOptions) -> Result<()> {
    if psi0.len() != grid.len() {
        return Err(invalid(format!("state has {} samples, grid has {}", psi0.len(), grid.len())));
    }
    if psi0.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(invalid("initial state is not finite"));
    }
    if opts.sample_every == 0 {
        return Err(invalid("sample interval must be at least one step"));
    }
    Ok(())
}

/// Runs to `t_end`, stopping early (with `blow_up` set) if the proxy fires.
pub fn run_nls(grid: &RadialGrid<f64>, stencil: Stencil, psi0: &[c64], t_end: f64, opts: &NlsOptions) -> Result<NlsRun> {
    check_run(grid, psi0, opts)?;
    let prop = NlsPropagator::new(grid, stencil, opts.dt, opts.splitting)?;
    let steps = (t_end / opts.dt).round() as usize;
    let mut u: Vec<c64> = psi0.iter().zip(grid.nodes()).map(|(z, r)| z * r).collect();
    let mut run = NlsRun { times: vec![], states: vec![], mass: vec![], energy: vec![], sup_norm: vec![], blow_up: None };
    let record = |run: &mut NlsRun, t: f64, u: &[c64]| {
        run.times.push(t);
        run.mass.push(prop.mass(u));
        run.energy.push(prop.energy(u));
        run.sup_norm.push(prop.sup_norm(u));
        if opts.keep_states {
            run.states.push(u.iter().zip(grid.nodes()).map(|(z, r)| z / r).collect());
        }
    };
    record(&mut run, 0.0, &u);
    for k in 1..=steps {
        prop.step(&mut u);
        let t = k as f64 * opts.dt;
        if prop.sup_norm(&u) > opts.blowup_level || u.iter().any(|z| !z.re.is_finite()) {
            run.blow_up = Some(t);
            break;
        }
        if k % opts.sample_every == 0 || k == steps {
            record(&mut run, t, &u);
        }
    }
    Ok(run)
}

/// As [`run_nls`], but a fired blow-up proxy is an error carrying the time.
pub fn evolve_nls(grid: &RadialGrid<f64>, stencil: Stencil, psi0: &[c64], t_end: f64, opts: &NlsOptions) -> Result<NlsRun> {
    let run = run_nls(grid, stencil, psi0, t_end, opts)?;
    match run.blow_up {
        Some(time) => Err(LabError::BlowUp { time }),
        None => Ok(run),
    }
}
