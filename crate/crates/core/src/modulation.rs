//! Modulation parameters and the orthogonality-enforcing decomposition
//! `ψ = e^{iθ}(φ_α + R)` in the radial class.
//!
//! Profiles at nearby frequencies are re-solved on the same grid so that
//! `φ_α` and `∂_α φ_α` are exact for the discrete equations; the
//! decomposition would otherwise leak interpolation error into `R`.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::ground::{ground_state_near, GroundState};
use crate::radial::SectorIndex;
use crate::spectral::line_inner;

/// Phase, velocity, translation and frequency of a moving soliton.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub gamma: f64,
    pub v: [f64; 3],
    pub d: [f64; 3],
    pub alpha: f64,
}

impl SolitonParams {
    /// Radial parameters (`v = D = 0`).
    pub fn radial(gamma: f64, alpha: f64) -> Self {
        Self { gamma, v: [0.0; 3], d: [0.0; 3], alpha }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.gamma.is_finite() && self.alpha.is_finite() && self.v.iter().chain(&self.d).all(|x| x.is_finite());
        if !finite {
            return Err(invalid("soliton parameters must be finite"));
        }
        if self.alpha <= 0.0 {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn is_radial(&self) -> bool {
        self.v == [0.0; 3] && self.d == [0.0; 3]
    }
}

/// Discrete ground states along the frequency family, cached per `α`.
#[derive(Clone, Debug)]
pub struct ProfileFamily {
    base: GroundState<f64>,
    cache: Vec<GroundState<f64>>,
}

const CACHE_LEN: usize = 8;

impl ProfileFamily {
    pub fn new(base: GroundState<f64>) -> Self {
        Self { cache: vec![base.clone()], base }
    }

    pub fn base(&self) -> &GroundState<f64> {
        &self.base
    }

    /// Ground state at `alpha` on the base grid.
    pub fn at(&mut self, alpha: f64) -> Result<&GroundState<f64>> {
        if let Some(i) = self.cache.iter().position(|g| g.alpha == alpha) {
            return Ok(&self.cache[i]);
        }
        let near = self.cache.iter().min_by(|a, b| (a.alpha - alpha).abs().total_cmp(&(b.alpha - alpha).abs())).unwrap_or(&self.base);
        let gs = ground_state_near(alpha, near)?;
        if self.cache.len() >= CACHE_LEN {
            self.cache.remove(1);
        }
        self.cache.push(gs);
        Ok(self.cache.last().unwrap())
    }
}

/// Output of [`modulation_decompose`].
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub params: SolitonParams,
    /// `R = e^{-iθ}ψ - φ_α` on the `u`-line
    pub residual: Vec<c64>,
    /// `⟨Z, ξ₁⟩`, `⟨Z, ξ₂⟩` at convergence
    pub pairings: [f64; 2],
    pub iterations: usize,
}

impl Decomposition {
    /// `Z = (R, R̄)` in block order.
    pub fn z(&self) -> Vec<c64> {
        self.residual.iter().copied().chain(self.residual.iter().map(|z| z.conj())).collect()
    }
}

const MAX_ITERATIONS: usize = 50;

fn pairings(gs: &GroundState<f64>, psi: &[c64], gamma: f64) -> ([f64; 2], Vec<c64>) {
    let rot = c64::from_polar(1.0, -gamma);
    let u = gs.line();
    let r: Vec<c64> = psi.iter().zip(&u).map(|(z, p)| z * rot - p).collect();
    let (f1, f2) = radial_pairings(gs, &r);
    ([f1, f2], r)
}

/// `(⟨Z, ξ₁⟩, ⟨Z, ξ₂⟩)` for `Z = (R, R̄)`.
fn radial_pairings(gs: &GroundState<f64>, r: &[c64]) -> (f64, f64) {
    let s = SectorIndex::S;
    let u: Vec<c64> = gs.line().iter().map(|&x| c64::new(x, 0.0)).collect();
    let ua: Vec<c64> = gs.line_dalpha().iter().map(|&x| c64::new(x, 0.0)).collect();
    (2.0 * line_inner(&gs.grid, s, r, &u).re, 2.0 * line_inner(&gs.grid, s, r, &ua).im)
}

/// Newton iteration on `(γ, α)` for `u`-line data `psi` (radial class).
pub fn decompose_line(family: &mut ProfileFamily, psi: &[c64], guess: &SolitonParams) -> Result<Decomposition> {
    guess.validate()?;
    let n = family.base().grid.len();
    if psi.len() != n {
        return Err(invalid(format!("state has {} samples, grid has {}", psi.len(), n)));
    }
    let alpha0 = family.base().alpha;
    let (mut gamma, mut alpha) = (guess.gamma, guess.alpha);
    for it in 0..=MAX_ITERATIONS {
        let gs = family.at(alpha)?;
        let tol = 1e-10 * gs.mass;
        let (f, r) = pairings(gs, psi, gamma);
        if f[0].abs() <= tol && f[1].abs() <= tol {
            return Ok(Decomposition { params: SolitonParams { alpha, gamma, ..*guess }, residual: r, pairings: f, iterations: it });
        }
        if it == MAX_ITERATIONS {
            break;
        }
        // θ column is exact; α column by a forward difference
        let s = SectorIndex::S;
        let rot = c64::from_polar(1.0, -gamma);
        let dr: Vec<c64> = psi.iter().map(|z| c64::new(0.0, -1.0) * z * rot).collect();
        let u: Vec<c64> = gs.line().iter().map(|&x| c64::new(x, 0.0)).collect();
        let ua: Vec<c64> = gs.line_dalpha().iter().map(|&x| c64::new(x, 0.0)).collect();
        let j_theta = [2.0 * line_inner(&gs.grid, s, &dr, &u).re, 2.0 * line_inner(&gs.grid, s, &dr, &ua).im];
        let h = 1e-6 * alpha;
        let (fa, _) = pairings(family.at(alpha + h)?, psi, gamma);
        let j_alpha = [(fa[0] - f[0]) / h, (fa[1] - f[1]) / h];
        let det = j_theta[0] * j_alpha[1] - j_alpha[0] * j_theta[1];
        if !det.is_finite() || det == 0.0 {
            break;
        }
        let dg = -(f[0] * j_alpha[1] - j_alpha[0] * f[1]) / det;
        let mut da = -(j_theta[0] * f[1] - f[0] * j_theta[1]) / det;
        da = da.clamp(-0.1 * alpha, 0.1 * alpha);
        gamma += dg;
        alpha += da;
        if !(gamma.is_finite() && alpha > 0.2 * alpha0 && alpha < 5.0 * alpha0) {
            break;
        }
    }
    Err(LabError::NoConvergence(format!("modulation decomposition did not converge in {MAX_ITERATIONS} iterations")))
}

/// Decomposition of node samples `ψ(r_i)`; the residual is returned as
/// node samples as well.
pub fn modulation_decompose(family: &mut ProfileFamily, psi: &[c64], guess: &SolitonParams) -> Result<Decomposition> {
    let grid = family.base().grid.clone();
    let line: Vec<c64> = psi.iter().zip(grid.nodes()).map(|(z, r)| z * r).collect();
    let mut d = decompose_line(family, &line, guess)?;
    d.residual.iter_mut().zip(grid.nodes()).for_each(|(z, r)| *z /= r);
    Ok(d)
}

/// Right-hand sides of the eight modulation equations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModulationRates {
    /// `α̇, γ̇, Ḋ₁..₃, v̇₁..₃`
    pub rows: [f64; 8],
    /// largest imaginary part discarded (zero up to roundoff for `J`-invariant `Z`)
    pub imag: f64,
}

/// Cubic remainder `N₁` of the radial equation for `R` about a real
/// profile `φ` (`u`-line data).
pub fn cubic_remainder(gs: &GroundState<f64>, r: &[c64]) -> Vec<c64> {
    let u = gs.line();
    r.iter().zip(&u).zip(gs.grid.nodes()).map(|((&z, &p), &x)| -(2.0 * p * z.norm_sqr() + p * z * z + z.norm_sqr() * z) / (x * x)).collect()
}

/// Modulation rates for a radial residual `R` (`u`-line) about the frozen
/// profile `gs` at `params.alpha`, with frame frequency `reference.alpha`.
/// Each row is `-⟨Z, ξ̇_j⟩ + i⟨Z, Eξ_j⟩ + i⟨N, ξ_j⟩` divided by its
/// normalization; the frame is frozen so `ξ̇_j = 0`. The translation and
/// boost rows pair radial data with dipole members and vanish.
pub fn modulation_rhs(gs: &GroundState<f64>, r: &[c64], params: &SolitonParams, reference: &SolitonParams) -> ModulationRates {
    let grid = &gs.grid;
    let n = grid.len();
    let s = SectorIndex::S;
    let block_inner = |a: &[c64], b: &[c64]| line_inner(grid, s, &a[..n], &b[..n]) + line_inner(grid, s, &a[n..], &b[n..]);
    let i = c64::new(0.0, 1.0);
    let e = reference.alpha * reference.alpha - params.alpha * params.alpha;

    let z: Vec<c64> = r.iter().copied().chain(r.iter().map(|x| x.conj())).collect();
    let n1 = cubic_remainder(gs, r);
    let nz: Vec<c64> = n1.iter().copied().chain(n1.iter().map(|x| -x.conj())).collect();
    let u = gs.line();
    let ua = gs.line_dalpha();
    let xi1: Vec<c64> = u.iter().chain(&u).map(|&x| c64::new(x, 0.0)).collect();
    let xi2: Vec<c64> = ua.iter().map(|&x| c64::new(0.0, x)).chain(ua.iter().map(|&x| c64::new(0.0, -x))).collect();
    let e_xi = |xi: &[c64]| -> Vec<c64> { xi.iter().enumerate().map(|(k, &x)| if k < n { e * x } else { -e * x }).collect() };

    let rate = |xi: &[c64]| i * block_inner(&z, &e_xi(xi)) + i * block_inner(&nz, xi);
    let scale = params.alpha / gs.mass;
    let w1 = rate(&xi1) * scale;
    let w2 = rate(&xi2) * scale;
    ModulationRates { rows: [w1.re, w2.re, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], imag: w1.im.abs().max(w2.im.abs()) }
}

/// `⟨Z, ξ₁⟩` for `Z = (R, R̄)` built from `u`-line `R`.
pub fn xi1_pairing(gs: &GroundState<f64>, r: &[c64]) -> f64 {
    radial_pairings(gs, r).0
}
