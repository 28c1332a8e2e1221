//! Positive radial ground state of `-Δφ + α²φ = φ³`.
//!
//! The initial amplitude is located by shooting on `u = rφ` (RK4, bisection
//! on the separatrix between zero-crossing and upward-diverging orbits); the
//! profile is then polished by damped Newton on the discrete system so that
//! the discrete residual sits at roundoff.

use crate::banded::Banded;
use crate::error::{LabError, Result};
use crate::radial::{even_extrapolate_origin, first_derivative, radial_laplacian_with, RadialGrid, SectorIndex, Stencil};
use crate::real::Real;

#[derive(Clone, Debug)]
pub struct GroundState<T> {
    pub alpha: T,
    pub grid: RadialGrid<T>,
    pub stencil: Stencil,
    /// φ(r_i)
    pub phi: Vec<T>,
    /// φ'(r_i)
    pub dphi_dr: Vec<T>,
    /// ∂_α φ(r_i) of the discrete family, `-2α L₊⁻¹ φ`
    pub dphi_dalpha: Vec<T>,
    /// ‖φ‖₂²
    pub mass: T,
    /// φ(0) extrapolated from the polished profile
    pub amplitude: T,
    /// φ(0) found by shooting before the Newton polish
    pub shooting_amplitude: T,
    /// ‖-Δφ + α²φ - φ³‖₂ / ‖φ‖₂ on the discrete problem
    pub residual: T,
    pub newton_iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct GroundStateOptions<T> {
    pub stencil: Stencil,
    /// Newton stops once the update is below `tol·max|u|`.
    pub newton_tol: T,
    pub max_newton: usize,
}

impl<T: Real> Default for GroundStateOptions<T> {
    fn default() -> Self {
        Self { stencil: Stencil::default(), newton_tol: T::epsilon() * T::lit(512.0), max_newton: 60 }
    }
}

impl<T: Real> GroundState<T> {
    /// Reduced profile `u = rφ`.
    pub fn line(&self) -> Vec<T> {
        self.grid.to_line(&self.phi)
    }

    /// `u`-line samples of `∂_α φ`.
    pub fn line_dalpha(&self) -> Vec<T> {
        self.grid.to_line(&self.dphi_dalpha)
    }

    pub fn norm(&self) -> T {
        self.mass.sqrt()
    }

    /// `φ²` at the nodes.
    pub fn potential(&self) -> Vec<T> {
        self.phi.iter().map(|&p| p * p).collect()
    }
}

pub fn solve_ground_state<T: Real>(alpha: T, grid: &RadialGrid<T>) -> Result<GroundState<T>> {
    solve_ground_state_with(alpha, grid, GroundStateOptions::default())
}

pub fn solve_ground_state_with<T: Real>(alpha: T, grid: &RadialGrid<T>, opts: GroundStateOptions<T>) -> Result<GroundState<T>> {
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(LabError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let a0 = shoot_amplitude(alpha, grid.r_max())?;
    let guess = shooting_profile(alpha, a0, grid);
    let peak = guess.iter().fold(T::zero(), |m, &x| m.max(x));
    let (u, iters) = newton_polish(alpha, grid, opts.stencil, guess, opts)?;
    let polished = u.iter().fold(T::zero(), |m, &x| m.max(x));
    // u = 0 also solves the discrete equation
    if !(polished > T::lit(0.5) * peak) {
        return Err(LabError::NoConvergence(format!("Newton collapsed the profile (peak {peak} -> {polished})")));
    }
    Ok(assemble(alpha, grid, opts.stencil, u, a0, iters))
}

/// Ground state at `alpha` polished from a nearby solution on the same grid.
/// Falls back to a cold solve if the warm Newton run fails.
pub fn ground_state_near<T: Real>(alpha: T, near: &GroundState<T>) -> Result<GroundState<T>> {
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(LabError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let opts = GroundStateOptions { stencil: near.stencil, ..GroundStateOptions::default() };
    let scale = alpha / near.alpha;
    let guess: Vec<T> = near.line().iter().map(|&x| x * scale).collect();
    match newton_polish(alpha, &near.grid, near.stencil, guess, opts) {
        Ok((u, iters)) => Ok(assemble(alpha, &near.grid, near.stencil, u, near.shooting_amplitude * scale, iters)),
        Err(_) => solve_ground_state_with(alpha, &near.grid, opts),
    }
}

/// Builds a ground state from a polished `u`-line profile.
pub(crate) fn assemble<T: Real>(
    alpha: T,
    grid: &RadialGrid<T>,
    stencil: Stencil,
    u: Vec<T>,
    shooting_amplitude: T,
    newton_iterations: usize,
) -> GroundState<T> {
    let phi = grid.from_line(&u);
    let amplitude = even_extrapolate_origin(&phi);
    let dphi_dr = first_derivative(grid, &phi, true, amplitude, stencil);
    let dphi_dalpha = discrete_d_alpha(alpha, grid, stencil, &u).unwrap_or_else(|_| scaling_d_alpha(alpha, grid, &phi, &dphi_dr));
    let mass = line_dot(grid, &u, &u);
    let residual = discrete_residual(alpha, grid, stencil, &u);
    GroundState {
        alpha,
        grid: grid.clone(),
        stencil,
        phi,
        dphi_dr,
        dphi_dalpha,
        mass,
        amplitude,
        shooting_amplitude,
        residual,
        newton_iterations,
    }
}

/// `∂_α φ` from `φ(r,α) = αφ(αr,1)`: `∂_α φ = (φ + rφ')/α`.
pub fn d_alpha_profile<T: Real>(gs: &GroundState<T>) -> Vec<T> {
    scaling_d_alpha(gs.alpha, &gs.grid, &gs.phi, &gs.dphi_dr)
}

fn scaling_d_alpha<T: Real>(alpha: T, grid: &RadialGrid<T>, phi: &[T], dphi: &[T]) -> Vec<T> {
    phi.iter().zip(dphi).zip(grid.nodes()).map(|((&p, &d), &r)| (p + r * d) / alpha).collect()
}

/// Differentiating the discrete equation in `α` gives `L₊ ∂_α u = -2α u`.
fn discrete_d_alpha<T: Real>(alpha: T, grid: &RadialGrid<T>, stencil: Stencil, u: &[T]) -> Result<Vec<T>> {
    let mut l = radial_laplacian_with(grid, SectorIndex::S, stencil);
    let diag: Vec<T> = u.iter().zip(grid.nodes()).map(|(&x, &r)| alpha * alpha - T::lit(3.0) * x * x / (r * r)).collect();
    l.add_diagonal(&diag);
    let rhs: Vec<T> = u.iter().map(|&x| -T::lit(2.0) * alpha * x).collect();
    Ok(grid.from_line(&l.lu()?.solve(&rhs)))
}

fn line_dot<T: Real>(grid: &RadialGrid<T>, a: &[T], b: &[T]) -> T {
    grid.line_weight(SectorIndex::S) * a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>()
}

fn nonlinear_map<T: Real>(alpha: T, grid: &RadialGrid<T>, lap: &Banded<T>, u: &[T]) -> Vec<T> {
    let mut f = lap.matvec(u);
    let a2 = alpha * alpha;
    for ((fi, &ui), &r) in f.iter_mut().zip(u).zip(grid.nodes()) {
        *fi += a2 * ui - ui * ui * ui / (r * r);
    }
    f
}

/// Relative residual of the discrete ground-state equation.
pub fn discrete_residual<T: Real>(alpha: T, grid: &RadialGrid<T>, stencil: Stencil, u: &[T]) -> T {
    let lap = radial_laplacian_with(grid, SectorIndex::S, stencil);
    let f = nonlinear_map(alpha, grid, &lap, u);
    let nf: T = f.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nu: T = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    nf / nu
}

/// Damped Newton for `L u + α²u - u³/r² = 0` from the given guess.
pub fn newton_polish<T: Real>(
    alpha: T,
    grid: &RadialGrid<T>,
    stencil: Stencil,
    mut u: Vec<T>,
    opts: GroundStateOptions<T>,
) -> Result<(Vec<T>, usize)> {
    let lap = radial_laplacian_with(grid, SectorIndex::S, stencil);
    let a2 = alpha * alpha;
    let norm2 = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let mut f = nonlinear_map(alpha, grid, &lap, &u);
    let mut fnorm = norm2(&f);
    for it in 1..=opts.max_newton {
        let mut jac = lap.clone();
        let diag: Vec<T> = u.iter().zip(grid.nodes()).map(|(&ui, &r)| a2 - T::lit(3.0) * ui * ui / (r * r)).collect();
        jac.add_diagonal(&diag);
        let mut du: Vec<T> = f.iter().map(|&x| -x).collect();
        jac.lu()?.solve_in_place(&mut du);
        let umax = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        let dmax = du.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<T> = u.iter().zip(&du).map(|(&a, &d)| a + lambda * d).collect();
            let ft = nonlinear_map(alpha, grid, &lap, &trial);
            let nt = norm2(&ft);
            if nt <= fnorm || dmax <= opts.newton_tol * umax {
                u = trial;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            lambda *= T::lit(0.5);
        }
        if dmax <= opts.newton_tol * umax {
            return Ok((u, it));
        }
        if !accepted {
            // no descent possible: accept only if already at roundoff
            let floor = T::epsilon() * T::lit(1e3) * norm2(&lap.matvec(&u)).max(T::one());
            if fnorm <= floor {
                return Ok((u, it));
            }
            return Err(LabError::NoConvergence(format!("Newton stagnated at residual {fnorm}")));
        }
    }
    Err(LabError::NoConvergence(format!("Newton did not converge in {} iterations", opts.max_newton)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Orbit {
    /// φ turns upward before crossing zero: amplitude too small
    Rises,
    /// φ crosses zero: amplitude too large
    Crosses,
    /// neither before the end of the interval
    Undecided,
}

#[inline]
fn rhs<T: Real>(alpha: T, r: T, u: T) -> T {
    if r == T::zero() {
        T::zero()
    } else {
        alpha * alpha * u - u * u * u / (r * r)
    }
}

/// One RK4 step for `u'' = α²u - u³/r²`.
#[inline]
fn rk4<T: Real>(alpha: T, r: T, u: T, v: T, ds: T) -> (T, T) {
    let half = T::lit(0.5) * ds;
    let k1u = v;
    let k1v = rhs(alpha, r, u);
    let k2u = v + half * k1v;
    let k2v = rhs(alpha, r + half, u + half * k1u);
    let k3u = v + half * k2v;
    let k3v = rhs(alpha, r + half, u + half * k2u);
    let k4u = v + ds * k3v;
    let k4v = rhs(alpha, r + ds, u + ds * k3u);
    let six = T::lit(6.0);
    (u + ds / six * (k1u + T::lit(2.0) * k2u + T::lit(2.0) * k3u + k4u), v + ds / six * (k1v + T::lit(2.0) * k2v + T::lit(2.0) * k3v + k4v))
}

fn shooting_step<T: Real>(alpha: T) -> T {
    T::lit(2e-3) / alpha
}

fn classify<T: Real>(alpha: T, amp: T, r_end: T) -> Orbit {
    let ds = shooting_step(alpha);
    let (mut r, mut u, mut v) = (T::zero(), T::zero(), amp);
    let settle = T::lit(10.0) * ds;
    while r < r_end {
        let (u1, v1) = rk4(alpha, r, u, v, ds);
        r += ds;
        u = u1;
        v = v1;
        if u < T::zero() {
            return Orbit::Crosses;
        }
        // φ' = (u' r - u)/r²
        if r > settle && v * r - u > T::zero() {
            return Orbit::Rises;
        }
        if !u.is_finite() {
            return Orbit::Rises;
        }
    }
    Orbit::Undecided
}

/// Separatrix amplitude `φ(0)` by bisection over `[0.1α, 100α]`.
pub fn shoot_amplitude<T: Real>(alpha: T, r_end: T) -> Result<T> {
    let mut lo = T::lit(0.1) * alpha;
    let mut hi = T::lit(100.0) * alpha;
    if classify(alpha, lo, r_end) != Orbit::Rises || classify(alpha, hi, r_end) != Orbit::Crosses {
        return Err(LabError::NoConvergence("shooting bracket not found in [0.1, 100]·alpha".into()));
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(alpha, mid, r_end) {
            Orbit::Rises => lo = mid,
            Orbit::Crosses => hi = mid,
            Orbit::Undecided => return Ok(mid),
        }
        if hi - lo <= T::lit(4.0) * T::epsilon() * hi {
            break;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

/// Samples the shooting orbit on the grid and replaces the unreliable
/// far part by the asymptotic tail `u ∝ e^{-αr}`.
fn shooting_profile<T: Real>(alpha: T, amp: T, grid: &RadialGrid<T>) -> Vec<T> {
    let h = grid.step();
    let ds0 = shooting_step(alpha);
    let sub = (h / ds0).ceil().to_usize().unwrap_or(1).max(1);
    let ds = h / T::from_count(sub);
    let n = grid.len();
    let mut out = vec![T::zero(); n];
    let (mut r, mut u, mut v) = (T::zero(), T::zero(), amp);
    let mut departed = n;
    for (i, slot) in out.iter_mut().enumerate() {
        for _ in 0..sub {
            let (u1, v1) = rk4(alpha, r, u, v, ds);
            r += ds;
            u = u1;
            v = v1;
        }
        if u <= T::zero() || (i > 10 && v * r - u > T::zero()) || !u.is_finite() {
            departed = i;
            break;
        }
        *slot = u;
    }
    if departed < n {
        // the deviation from the separatrix shrinks like e^{-2αΔr} going back
        let back = (T::lit(3.0) / (alpha * h)).to_usize().unwrap_or(0).min(departed / 2);
        let cut = departed.saturating_sub(back).max(1).min(departed - 1);
        let (rc, uc) = (grid.nodes()[cut], out[cut]);
        for i in cut + 1..n {
            out[i] = uc * (-alpha * (grid.nodes()[i] - rc)).exp();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_precision_smoke() {
        let grid = RadialGrid::<f32>::new(20.0, 300).unwrap();
        let gs = solve_ground_state(1.0f32, &grid).unwrap();
        assert!(gs.residual < 1e-4, "residual {}", gs.residual);
        assert!((gs.amplitude - 4.3373877).abs() < 2e-3, "amp {}", gs.amplitude);
        assert!(gs.phi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn shooting_amplitude_alpha_one() {
        let a = shoot_amplitude(1.0f64, 30.0).unwrap();
        assert!((a - 4.337387679).abs() < 1e-6, "{a}");
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let grid = RadialGrid::new(30.0, 100).unwrap();
        assert!(solve_ground_state(0.0, &grid).is_err());
        assert!(solve_ground_state(-1.0, &grid).is_err());
    }
}
