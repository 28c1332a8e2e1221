//! Discrete spectrum of the linearized Hamiltonian.
//!
//! Production counts use the exact block reduction: with `p = a + b`,
//! `q = a - b`, `H` is orthogonally similar to `[[0, L₋], [L₊, 0]]`, so
//! singular values of `H` are `|spec L₋| ∪ |spec L₊|`, those of `H²` are the
//! singular values of `L₋L₊` (twice), and `spec H = ±√spec(L₋L₊)`. Direct
//! dense factorizations of `H` serve as cross-checks.

use faer::{c64, Mat, Side};
use rayon::prelude::*;
use serde::Serialize;

use crate::banded::Banded;
use crate::error::{LabError, Result};
use crate::ground::GroundState;
use crate::ops::{banded_to_dense, j_map, l_minus_banded, l_plus_banded, SectorHamiltonian};
use crate::radial::{RadialGrid, SectorIndex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralConfig {
    pub ell_max: usize,
    /// kernel threshold in units of `α^{2k}` for `H^k`
    pub zero_threshold: f64,
    /// next singular value must exceed `gap_factor · threshold`
    pub gap_factor: f64,
    /// Birman–Schwinger eigenvalues within this distance of 1 are ambiguous
    pub bs_tolerance: f64,
    /// strip `|Re λ| < strip_fraction·α²`
    pub strip_fraction: f64,
    /// tolerance (units of `α²`) for classifying strip eigenvalues
    pub strip_tolerance: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { ell_max: 3, zero_threshold: 1e-4, gap_factor: 10.0, bs_tolerance: 1e-6, strip_fraction: 0.9, strip_tolerance: 1e-3 }
    }
}

/// Weighted `u`-line inner product (real data).
pub fn line_dot(grid: &RadialGrid<f64>, sector: SectorIndex, a: &[f64], b: &[f64]) -> f64 {
    grid.line_weight(sector) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Weighted `u`-line inner product `Σ w a b̄` (complex data).
pub fn line_inner(grid: &RadialGrid<f64>, sector: SectorIndex, a: &[c64], b: &[c64]) -> c64 {
    let s: c64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
    s * grid.line_weight(sector)
}

pub fn line_norm(grid: &RadialGrid<f64>, sector: SectorIndex, a: &[c64]) -> f64 {
    line_inner(grid, sector, a, a).re.max(0.0).sqrt()
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| LabError::NoConvergence(format!("symmetric eigensolver: {e:?}")))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = m.self_adjoint_eigen(Side::Lower).map_err(|e| LabError::NoConvergence(format!("symmetric eigensolver: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

pub fn singular_values(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.singular_values().map_err(|e| LabError::NoConvergence(format!("svd: {e:?}")))
}

pub fn eigenvalues(m: &Mat<f64>) -> Result<Vec<c64>> {
    m.eigenvalues().map_err(|e| LabError::NoConvergence(format!("eigensolver: {e:?}")))
}

/// Spectra of `L₋` and `L₊` in one sector.
#[derive(Clone, Debug, Serialize)]
pub struct ScalarSpectra {
    pub ell: usize,
    pub l_minus: Vec<f64>,
    pub l_plus: Vec<f64>,
}

pub fn scalar_spectra(gs: &GroundState<f64>, sector: SectorIndex) -> Result<ScalarSpectra> {
    let lm = symmetric_eigenvalues(&banded_to_dense(&l_minus_banded(gs, sector)))?;
    let lp = symmetric_eigenvalues(&banded_to_dense(&l_plus_banded(gs, sector)))?;
    Ok(ScalarSpectra { ell: sector.ell, l_minus: lm, l_plus: lp })
}

/// Lowest eigenvalue of the radial `L₊`.
pub fn lowest_l_plus(gs: &GroundState<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(&banded_to_dense(&l_plus_banded(gs, SectorIndex::S)))?[0])
}

/// `g(λ) = ⟨(L₊ - λ)⁻¹φ, φ⟩` on radial functions.
#[derive(Clone, Debug)]
pub struct GFunction {
    pub e0: f64,
    alpha: f64,
    grid: RadialGrid<f64>,
    l_plus: Banded<f64>,
    line_phi: Vec<f64>,
}

impl GFunction {
    pub fn new(gs: &GroundState<f64>) -> Result<Self> {
        Ok(Self {
            e0: lowest_l_plus(gs)?,
            alpha: gs.alpha,
            grid: gs.grid.clone(),
            l_plus: l_plus_banded(gs, SectorIndex::S),
            line_phi: gs.line(),
        })
    }

    /// Solves `(L₊ - λ)η = φ`.
    pub fn resolvent_phi(&self, lambda: f64) -> Result<Vec<f64>> {
        let a2 = self.alpha * self.alpha;
        if !(lambda > self.e0 && lambda < a2) {
            return Err(LabError::InvalidArgument(format!("lambda {lambda} outside ({}, {a2})", self.e0)));
        }
        let mut m = self.l_plus.clone();
        m.add_diagonal(&vec![-lambda; self.grid.len()]);
        Ok(m.lu()?.solve(&self.line_phi))
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        let eta = self.resolvent_phi(lambda)?;
        Ok(line_dot(&self.grid, SectorIndex::S, &eta, &self.line_phi))
    }
}

pub fn g_function(gs: &GroundState<f64>, lambda: f64) -> Result<f64> {
    GFunction::new(gs)?.eval(lambda)
}

#[derive(Clone, Debug, Serialize)]
pub struct Lambda1 {
    pub lambda1: f64,
    pub g_value: f64,
    /// ‖(L₊ - λ₁)η - φ‖ / ‖φ‖
    pub solve_residual: f64,
    /// |⟨η, φ⟩| / (‖η‖‖φ‖)
    pub orthogonality: f64,
}

/// Root of `g` in `(E₀, 0)` by bisection.
pub fn find_lambda1(gs: &GroundState<f64>) -> Result<Lambda1> {
    let g = GFunction::new(gs)?;
    let a2 = gs.alpha * gs.alpha;
    let delta = 1e-9 * a2;
    let (mut lo, mut hi) = (g.e0 + delta, -delta);
    let (glo, ghi) = (g.eval(lo)?, g.eval(hi)?);
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(LabError::CertificationFailure(format!("g has no sign change on (E0, 0): g(lo)={glo}, g(hi)={ghi}")));
    }
    let mut mid = 0.5 * (lo + hi);
    let mut gm = g.eval(mid)?;
    for _ in 0..200 {
        if gm.abs() <= 1e-10 {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == mid {
            break;
        }
        mid = next;
        gm = g.eval(mid)?;
    }
    let eta = g.resolvent_phi(mid)?;
    let mut res = g.l_plus.matvec(&eta);
    for ((r, e), p) in res.iter_mut().zip(&eta).zip(&g.line_phi) {
        *r -= mid * e + p;
    }
    let s = SectorIndex::S;
    let nphi = line_dot(&g.grid, s, &g.line_phi, &g.line_phi).sqrt();
    let neta = line_dot(&g.grid, s, &eta, &eta).sqrt();
    Ok(Lambda1 {
        lambda1: mid,
        g_value: gm,
        solve_residual: line_dot(&g.grid, s, &res, &res).sqrt() / nphi,
        orthogonality: line_dot(&g.grid, s, &eta, &g.line_phi).abs() / (neta * nphi),
    })
}

/// Output of the variational construction of the unstable pair.
#[derive(Clone, Debug)]
pub struct SigmaSolution {
    pub sigma: f64,
    /// `L₋L₊v = -σ²v`, unit line norm
    pub v: Vec<f64>,
    /// `L₋u = -σv`, `u = L₊v/σ`
    pub u: Vec<f64>,
    pub c0: f64,
    /// ‖L₋L₊v + σ²v‖ / ‖v‖
    pub residual: f64,
    /// ‖L₊v - σu‖ / ‖v‖
    pub pair_residual: f64,
    /// lowest eigenvalue of √L₋ L₊ √L₋
    pub variational_min: f64,
}

pub fn compute_sigma(gs: &GroundState<f64>) -> Result<SigmaSolution> {
    let s = SectorIndex::S;
    let lm_b = l_minus_banded(gs, s);
    let lp_b = l_plus_banded(gs, s);
    let (mu, q) = symmetric_eigen(&banded_to_dense(&lm_b))?;
    let n = mu.len();
    // √L₋ with the ground mode deflated
    let mut sq = Mat::<f64>::zeros(n, n);
    let mut pinv = Mat::<f64>::zeros(n, n);
    {
        let mut qs = q.clone();
        let mut qi = q.clone();
        for k in 0..n {
            let (a, b) = if k == 0 { (0.0, 0.0) } else { (mu[k].max(0.0).sqrt(), 1.0 / mu[k]) };
            for i in 0..n {
                qs[(i, k)] *= a;
                qi[(i, k)] *= b;
            }
        }
        faer::linalg::matmul::matmul(sq.as_mut(), faer::Accum::Replace, qs.as_ref(), q.transpose(), 1.0, faer::Par::Seq);
        faer::linalg::matmul::matmul(pinv.as_mut(), faer::Accum::Replace, qi.as_ref(), q.transpose(), 1.0, faer::Par::Seq);
    }
    let lp = banded_to_dense(&lp_b);
    let m = &sq * &lp * &sq;
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let (vals, vecs) = symmetric_eigen(&m)?;
    if vals[0] >= 0.0 {
        return Err(LabError::CertificationFailure(format!("variational minimum {} is not negative", vals[0])));
    }
    let sigma = (-vals[0]).sqrt();
    let f = vecs.col(0);
    let mut v: Vec<f64> = (0..n).map(|i| (0..n).map(|k| sq[(i, k)] * f[k]).sum()).collect();
    let nv = line_dot(&gs.grid, s, &v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    // u from L₋(u + c₀φ) = -σv on φ⊥, then c₀ fitted to L₊v = σu
    let rhs: Vec<f64> = v.iter().map(|x| -sigma * x).collect();
    let up: Vec<f64> = (0..n).map(|i| (0..n).map(|k| pinv[(i, k)] * rhs[k]).sum()).collect();
    let lpv = lp_b.matvec(&v);
    let phi = gs.line();
    let target: Vec<f64> = lpv.iter().zip(&up).map(|(a, b)| a / sigma - b).collect();
    let c0 = line_dot(&gs.grid, s, &target, &phi) / line_dot(&gs.grid, s, &phi, &phi);
    let u: Vec<f64> = up.iter().zip(&phi).map(|(a, p)| a + c0 * p).collect();
    let (v, u) = polish_pair(&gs.grid, &lm_b, &lp_b, sigma, v, u)?;
    let lpv = lp_b.matvec(&v);
    let lmlpv = lm_b.matvec(&lpv);
    let r1: Vec<f64> = lmlpv.iter().zip(&v).map(|(a, b)| a + sigma * sigma * b).collect();
    let r2: Vec<f64> = lpv.iter().zip(&u).map(|(a, b)| a - sigma * b).collect();
    let residual = line_dot(&gs.grid, s, &r1, &r1).sqrt();
    let pair_residual = line_dot(&gs.grid, s, &r2, &r2).sqrt();
    if residual > 1e-5 * gs.alpha.powi(4) {
        return Err(LabError::CertificationFailure(format!("‖L₋L₊v + σ²v‖/‖v‖ = {residual:.3e}")));
    }
    Ok(SigmaSolution { sigma, v, u, c0, residual, pair_residual, variational_min: vals[0] })
}

/// Inverse iteration on `[[L₊, -σ], [σ, L₋]]`, whose null vector is `(v, u)`.
///
/// The dense route leaves an eigenvector error of order `ε‖L‖²`, which
/// `L₋L₊` amplifies on fine grids; a few banded solves remove it.
fn polish_pair(
    grid: &RadialGrid<f64>,
    lm: &Banded<f64>,
    lp: &Banded<f64>,
    sigma: f64,
    v: Vec<f64>,
    u: Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = v.len();
    let p = lm.upper();
    let bw = 2 * p + 1;
    let mut m = Banded::<f64>::zeros(2 * n, bw, bw);
    for i in 0..n {
        for j in i.saturating_sub(p)..=(i + p).min(n - 1) {
            m.add(2 * i, 2 * j, lp.get(i, j));
            m.add(2 * i + 1, 2 * j + 1, lm.get(i, j));
        }
        m.add(2 * i, 2 * i + 1, -sigma);
        m.add(2 * i + 1, 2 * i, sigma);
    }
    let lu = m.lu()?;
    let mut w: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { v[k / 2] } else { u[k / 2] }).collect();
    let s = SectorIndex::S;
    let sign_ref = v.clone();
    for _ in 0..3 {
        lu.solve_in_place(&mut w);
        let vv: Vec<f64> = w.iter().step_by(2).copied().collect();
        let mut scale = line_dot(grid, s, &vv, &vv).sqrt();
        if line_dot(grid, s, &vv, &sign_ref) < 0.0 {
            scale = -scale;
        }
        w.iter_mut().for_each(|x| *x /= scale);
    }
    Ok((w.iter().step_by(2).copied().collect(), w.iter().skip(1).step_by(2).copied().collect()))
}

/// Right and left eigenvectors of an isolated eigenvalue, `⟨f, f̃⟩ = 1`.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub sector: SectorIndex,
    pub value: c64,
    /// block-ordered `(f₁, f₂)` on the `u`-line
    pub right: Vec<c64>,
    pub left: Vec<c64>,
    pub right_residual: f64,
    pub left_residual: f64,
    /// ‖f̃‖₂ (recorded, not enforced)
    pub left_norm: f64,
    /// distance of the inverse-iteration left vector from the closed form
    pub left_closed_form_gap: f64,
}

impl EigenPair {
    /// `⟨x, f̃⟩`: coefficient of this mode in `x`.
    pub fn coefficient(&self, grid: &RadialGrid<f64>, x: &[c64]) -> c64 {
        line_inner(grid, self.sector, x, &self.left)
    }
}

/// `f±` for `±iσ` with its adjoint partner.
pub fn eigenpair_imaginary(gs: &GroundState<f64>, sol: &SigmaSolution, sign: i32) -> Result<EigenPair> {
    let s = SectorIndex::S;
    let n = gs.grid.len();
    let half = c64::new(0.5, 0.0);
    // f⁺ = ((v - iu)/2, (v + iu)/2)
    let mut right: Vec<c64> = (0..2 * n)
        .map(|i| {
            let k = i % n;
            let (v, u) = (sol.v[k], sol.u[k]);
            if i < n {
                c64::new(v, -u) * half
            } else {
                c64::new(v, u) * half
            }
        })
        .collect();
    let nr = line_norm(&gs.grid, s, &right);
    right.iter_mut().for_each(|z| *z /= nr);
    fix_sign(&mut right);
    if sign < 0 {
        right.iter_mut().for_each(|z| *z = z.conj());
    }
    let value = c64::new(0.0, sign.signum() as f64 * sol.sigma);
    let h = SectorHamiltonian::new(gs, s);

    // adjoint eigenvector by inverse iteration on Hᵀ - conj(value)
    let shift = value.conj() * (1.0 + 1e-10);
    let m = h.interleaved(-shift, c64::new(1.0, 0.0), true, None);
    let lu = m.lu()?;
    let mut left: Vec<c64> = (0..2 * n).map(|i| c64::new(1.0 + 0.1 * ((i * 37 % 17) as f64), 0.3 * ((i * 11 % 7) as f64))).collect();
    for _ in 0..4 {
        let mut y = crate::ops::interleave(&left);
        lu.solve_in_place(&mut y);
        left = crate::ops::deinterleave(&y);
        let nl = line_norm(&gs.grid, s, &left);
        left.iter_mut().for_each(|z| *z /= nl);
    }
    let pairing = line_inner(&gs.grid, s, &right, &left);
    if pairing.norm() < 1e-8 {
        return Err(LabError::DegeneratePairing(format!("|⟨f, f̃⟩| = {:.3e}", pairing.norm())));
    }
    let scale = pairing.conj();
    left.iter_mut().for_each(|z| *z /= scale);

    // closed form: f̃ ∝ σ₃ f̄
    let mut closed: Vec<c64> = right.iter().enumerate().map(|(i, z)| if i < n { z.conj() } else { -z.conj() }).collect();
    let p = line_inner(&gs.grid, s, &right, &closed).conj();
    closed.iter_mut().for_each(|z| *z /= p);
    let diff: Vec<c64> = left.iter().zip(&closed).map(|(a, b)| a - b).collect();
    let left_norm = line_norm(&gs.grid, s, &left);
    let gap = line_norm(&gs.grid, s, &diff) / left_norm;

    let hr = h.apply(&right);
    let rr: Vec<c64> = hr.iter().zip(&right).map(|(a, b)| a - value * b).collect();
    let hl = h.apply_transpose(&left);
    let rl: Vec<c64> = hl.iter().zip(&left).map(|(a, b)| a - value.conj() * b).collect();
    Ok(EigenPair {
        sector: s,
        value,
        right_residual: line_norm(&gs.grid, s, &rr),
        left_residual: line_norm(&gs.grid, s, &rl) / left_norm,
        right,
        left,
        left_norm,
        left_closed_form_gap: gap,
    })
}

fn inverse_iterate(m: &Banded<c64>, start: Vec<c64>, grid: &RadialGrid<f64>, sweeps: usize) -> Result<Vec<c64>> {
    let lu = m.lu()?;
    let mut x = start;
    for _ in 0..sweeps {
        let mut y = crate::ops::interleave(&x);
        lu.solve_in_place(&mut y);
        x = crate::ops::deinterleave(&y);
        let nx = line_norm(grid, SectorIndex::S, &x);
        x.iter_mut().for_each(|z| *z /= nx);
    }
    Ok(x)
}

/// Flips `f` so that the first component's real part is positive where it
/// is largest in magnitude; keeps `f⁺` comparable across resolutions.
fn fix_sign(f: &mut [c64]) {
    let n = f.len() / 2;
    let k = (0..n).max_by(|&a, &b| f[a].re.abs().total_cmp(&f[b].re.abs())).unwrap_or(0);
    if f[k].re < 0.0 {
        f.iter_mut().for_each(|z| *z = -*z);
    }
}

/// Rotates an eigenvector of a `J`-symmetric eigenvalue onto `J f = f`.
fn make_j_invariant(grid: &RadialGrid<f64>, f: &mut [c64]) {
    let s = SectorIndex::S;
    let c = line_inner(grid, s, &j_map(f), f) / line_inner(grid, s, f, f);
    let rot = c64::from_polar(1.0, 0.5 * c.arg());
    f.iter_mut().for_each(|z| *z *= rot);
}

/// `f⁺` and `f̃⁺` by banded inverse iteration near `iσ_guess`; for grids
/// too large for the dense route. The eigenvalue is refined by the
/// two-sided Rayleigh quotient.
pub fn eigenpair_banded(gs: &GroundState<f64>, sigma_guess: f64) -> Result<EigenPair> {
    let s = SectorIndex::S;
    let grid = &gs.grid;
    let n = grid.len();
    let h = SectorHamiltonian::new(gs, s);
    let shift = c64::new(0.0, sigma_guess * (1.0 + 1e-9));
    let one = c64::new(1.0, 0.0);
    // smooth localized start
    let start: Vec<c64> = (0..2 * n)
        .map(|i| {
            let r = grid.nodes()[i % n] * gs.alpha;
            c64::new(r * (-r * r / 2.0).exp(), if i < n { 0.3 * r * (-r).exp() } else { -0.3 * r * (-r).exp() })
        })
        .collect();
    let mut right = inverse_iterate(&h.interleaved(-shift, one, false, None), start.clone(), grid, 6)?;
    make_j_invariant(grid, &mut right);
    fix_sign(&mut right);
    let mut left = inverse_iterate(&h.interleaved(-shift.conj(), one, true, None), start, grid, 6)?;
    make_j_invariant(grid, &mut left);
    let pairing = line_inner(grid, s, &right, &left);
    if pairing.norm() < 1e-8 {
        return Err(LabError::DegeneratePairing(format!("|⟨f, f̃⟩| = {:.3e}", pairing.norm())));
    }
    left.iter_mut().for_each(|z| *z /= pairing.conj());
    let hr = h.apply(&right);
    let value = c64::new(0.0, line_inner(grid, s, &hr, &left).im);
    let rr: Vec<c64> = hr.iter().zip(&right).map(|(a, b)| a - value * b).collect();
    let hl = h.apply_transpose(&left);
    let rl: Vec<c64> = hl.iter().zip(&left).map(|(a, b)| a - value.conj() * b).collect();
    let left_norm = line_norm(grid, s, &left);
    Ok(EigenPair {
        sector: s,
        value,
        right_residual: line_norm(grid, s, &rr),
        left_residual: line_norm(grid, s, &rl) / left_norm,
        right,
        left,
        left_norm,
        left_closed_form_gap: f64::NAN,
    })
}

/// Complex conjugate partner: `f⁻ = f̄⁺`, `f̃⁻ = conj f̃⁺`.
pub fn conjugate_pair(p: &EigenPair) -> EigenPair {
    EigenPair {
        sector: p.sector,
        value: p.value.conj(),
        right: p.right.iter().map(|z| z.conj()).collect(),
        left: p.left.iter().map(|z| z.conj()).collect(),
        ..p.clone()
    }
}

/// Both members of the imaginary pair.
pub fn imaginary_pair(gs: &GroundState<f64>) -> Result<(SigmaSolution, EigenPair, EigenPair)> {
    let sol = compute_sigma(gs)?;
    let plus = eigenpair_imaginary(gs, &sol, 1)?;
    let minus = eigenpair_imaginary(gs, &sol, -1)?;
    Ok((sol, plus, minus))
}

/// J-invariance defect `‖J f - f‖ / ‖f‖`.
pub fn j_defect(grid: &RadialGrid<f64>, sector: SectorIndex, f: &[c64]) -> f64 {
    let jf = j_map(f);
    let d: Vec<c64> = jf.iter().zip(f).map(|(a, b)| a - b).collect();
    line_norm(grid, sector, &d) / line_norm(grid, sector, f)
}

/// Least-squares slope of `log|f|` over `r ∈ [0.6, 0.9]·r_max`.
pub fn tail_slope(grid: &RadialGrid<f64>, magnitude: &[f64]) -> f64 {
    let (a, b) = (0.6 * grid.r_max(), 0.9 * grid.r_max());
    let pts: Vec<(f64, f64)> =
        grid.nodes().iter().zip(magnitude).filter(|(r, m)| **r >= a && **r <= b && **m > 0.0).map(|(r, m)| (*r, m.ln())).collect();
    linear_fit(&pts).0
}

/// Least squares `y = a x + b`; returns `(a, b, R²)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    (a, b, r2)
}

/// Kernel counts of one sector from the block reduction.
#[derive(Clone, Debug, Serialize)]
pub struct SectorRootCounts {
    pub ell: usize,
    pub multiplicity: usize,
    /// dim ker H
    pub kernel: usize,
    /// dim ker H²
    pub generalized: usize,
    /// dim ker H³
    pub cubic: usize,
    /// smallest singular values of H and H²
    pub smallest: [Vec<f64>; 2],
    /// first singular value above threshold divided by the threshold
    pub gap_ratio: [f64; 2],
    /// smallest singular value of the pairing between left and right null
    /// vectors of `L₋L₊`; nonzero exactly when no Jordan chain exceeds length 2
    pub chain_pairing: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RootSpaceReport {
    pub geometric: usize,
    pub algebraic: usize,
    pub cubic: usize,
    pub sectors: Vec<SectorRootCounts>,
    /// relative residuals of the explicit chain relations
    pub chain_residuals: Vec<(String, f64)>,
}

fn count_small(sv: &[f64], thr: f64, gap: f64) -> Result<(usize, f64, Vec<f64>)> {
    let mut s = sv.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.iter().take_while(|&&x| x < thr).count();
    let next = s.get(k).copied().unwrap_or(f64::INFINITY);
    let ratio = next / thr;
    if ratio < gap {
        return Err(LabError::Inconclusive(format!(
            "no spectral gap above the kernel threshold {thr:.1e}: next singular value {next:.3e}"
        )));
    }
    Ok((k, ratio, s.into_iter().take(k + 2).collect()))
}

/// Pairings below this (relative to unit null vectors) count as degenerate.
const CHAIN_PAIRING_FLOOR: f64 = 1e-3;

pub fn sector_root_counts(gs: &GroundState<f64>, sector: SectorIndex, cfg: &SpectralConfig) -> Result<SectorRootCounts> {
    let lm = banded_to_dense(&l_minus_banded(gs, sector));
    let lp = banded_to_dense(&l_plus_banded(gs, sector));
    let a2 = gs.alpha * gs.alpha;
    let thr = |k: i32| cfg.zero_threshold * a2.powi(k);
    let sv1: Vec<f64> = symmetric_eigenvalues(&lm)?.into_iter().chain(symmetric_eigenvalues(&lp)?).map(f64::abs).collect();
    let mp = &lm * &lp;
    let svd = mp.svd().map_err(|e| LabError::NoConvergence(format!("svd: {e:?}")))?;
    let s2: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    // H² ≅ diag(L₋L₊, L₊L₋) and the two blocks share singular values
    let sv2: Vec<f64> = s2.iter().chain(s2.iter()).copied().collect();
    let (k1, g1, m1) = count_small(&sv1, thr(1), cfg.gap_factor)?;
    let (k2, g2, m2) = count_small(&sv2, thr(2), cfg.gap_factor)?;
    // ker H³ ⊋ ker H² iff some null vector of L₋L₊ lies in its range, i.e.
    // the left/right null spaces pair degenerately
    let k = k2 / 2;
    let n = s2.len();
    let chain_pairing = if k == 0 {
        f64::INFINITY
    } else {
        let (u, v) = (svd.U(), svd.V());
        let p = Mat::from_fn(k, k, |i, j| (0..n).map(|r| u[(r, n - 1 - i)] * v[(r, n - 1 - j)]).sum::<f64>());
        singular_values(&p)?.last().copied().unwrap_or(0.0)
    };
    let cubic = if chain_pairing > CHAIN_PAIRING_FLOOR { k2 } else { k2 + 1 };
    Ok(SectorRootCounts {
        ell: sector.ell,
        multiplicity: sector.multiplicity(),
        kernel: k1,
        generalized: k2,
        cubic,
        smallest: [m1, m2],
        gap_ratio: [g1, g2],
        chain_pairing,
    })
}

/// Singular values of `H^k` (k = 1, 2, 3) by dense factorization of the
/// full `2n × 2n` matrices; an independent route to the kernel counts.
pub fn direct_kernel_counts(gs: &GroundState<f64>, sector: SectorIndex, cfg: &SpectralConfig) -> Result<[usize; 3]> {
    let h = SectorHamiltonian::new(gs, sector).to_dense();
    let h2 = &h * &h;
    let h3 = &h2 * &h;
    let a2 = gs.alpha * gs.alpha;
    let mut out = [0usize; 3];
    for (k, m) in [h, h2, h3].iter().enumerate() {
        let sv = singular_values(m)?;
        out[k] = count_small(&sv, cfg.zero_threshold * a2.powi(k as i32 + 1), cfg.gap_factor)?.0;
    }
    Ok(out)
}

fn chain_residuals(gs: &GroundState<f64>) -> Vec<(String, f64)> {
    let grid = &gs.grid;
    let line = |f: &[f64]| -> Vec<f64> { grid.to_line(f) };
    let cz = |x: f64| c64::new(x, 0.0);
    let mut out = Vec::new();
    // radial: (iφ, -iφ) ∈ ker H; H(∂αφ, ∂αφ) = 2α(-φ, φ)
    let u = line(&gs.phi);
    let ua = line(&gs.dphi_dalpha);
    let h0 = SectorHamiltonian::new(gs, SectorIndex::S);
    let s = SectorIndex::S;
    let k1: Vec<c64> = u.iter().map(|&x| c64::new(0.0, x)).chain(u.iter().map(|&x| c64::new(0.0, -x))).collect();
    out.push(("H(i phi, -i phi)".into(), line_norm(grid, s, &h0.apply(&k1)) / line_norm(grid, s, &k1)));
    let g1: Vec<c64> = ua.iter().chain(ua.iter()).map(|&x| cz(x)).collect();
    let target: Vec<c64> = u.iter().map(|&x| cz(-2.0 * gs.alpha * x)).chain(u.iter().map(|&x| cz(2.0 * gs.alpha * x))).collect();
    let d: Vec<c64> = h0.apply(&g1).iter().zip(&target).map(|(a, b)| a - b).collect();
    out.push(("H(dphi/dalpha, dphi/dalpha) - 2 alpha (-phi, phi)".into(), line_norm(grid, s, &d) / line_norm(grid, s, &target)));
    // dipole: (∂φ, ∂φ) ∈ ker H; H(xφ, -xφ) = -2(∂φ, ∂φ)
    let p = SectorIndex::P;
    let h1 = SectorHamiltonian::new(gs, p);
    let ud = line(&gs.dphi_dr);
    let ux: Vec<f64> = u.iter().zip(grid.nodes()).map(|(a, r)| a * r).collect();
    let k2: Vec<c64> = ud.iter().chain(ud.iter()).map(|&x| cz(x)).collect();
    out.push(("H(d_j phi, d_j phi)".into(), line_norm(grid, p, &h1.apply(&k2)) / line_norm(grid, p, &k2)));
    let g2: Vec<c64> = ux.iter().map(|&x| cz(x)).chain(ux.iter().map(|&x| cz(-x))).collect();
    let target2: Vec<c64> = k2.iter().map(|z| z * -2.0).collect();
    let d2: Vec<c64> = h1.apply(&g2).iter().zip(&target2).map(|(a, b)| a - b).collect();
    out.push(("H(x_j phi, -x_j phi) + 2(d_j phi, d_j phi)".into(), line_norm(grid, p, &d2) / line_norm(grid, p, &target2)));
    out
}

pub fn root_space_report(gs: &GroundState<f64>, cfg: &SpectralConfig) -> Result<RootSpaceReport> {
    let sectors: Vec<SectorRootCounts> =
        [SectorIndex::S, SectorIndex::P].par_iter().map(|&s| sector_root_counts(gs, s, cfg)).collect::<Result<_>>()?;
    let geometric = sectors.iter().map(|c| c.kernel * c.multiplicity).sum();
    let algebraic = sectors.iter().map(|c| c.generalized * c.multiplicity).sum();
    let cubic = sectors.iter().map(|c| c.cubic * c.multiplicity).sum();
    Ok(RootSpaceReport { geometric, algebraic, cubic, sectors, chain_residuals: chain_residuals(gs) })
}

/// Birman–Schwinger kernel of sector `ℓ` on the `u`-line with coupling `c`.
pub fn bs_kernel(gs: &GroundState<f64>, ell: usize, coupling: f64) -> Mat<f64> {
    let r = gs.grid.nodes();
    let h = gs.grid.step();
    let n = r.len();
    let l = ell as i32;
    let denom = (2 * ell + 1) as f64;
    Mat::from_fn(n, n, |i, j| {
        let (a, b) = if r[i] <= r[j] { (r[i], r[j]) } else { (r[j], r[i]) };
        coupling * gs.phi[i] * gs.phi[j] * r[i] * r[j] * a.powi(l) / b.powi(l + 1) / denom * h
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BsWhich {
    Minus,
    Plus,
}

impl BsWhich {
    pub fn coupling(self) -> f64 {
        match self {
            BsWhich::Minus => 1.0,
            BsWhich::Plus => 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BsSector {
    pub ell: usize,
    /// eigenvalues of `K₋` in this sector, descending, first few
    pub top_minus: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BsCount {
    pub which: BsWhich,
    pub count: usize,
    /// eigenvalues above 1 (with sector), angular multiplicity not expanded
    pub eigenvalues_above_1: Vec<(usize, f64)>,
    /// near-1 eigenvalues in sectors ℓ ≥ 2
    pub ambiguous: Vec<(usize, f64)>,
}

/// Spectra of `K₋` per sector, descending (`K₊ = 3K₋`).
pub fn bs_spectra(gs: &GroundState<f64>, ell_max: usize, scale: f64) -> Result<Vec<Vec<f64>>> {
    (0..=ell_max)
        .into_par_iter()
        .map(|ell| {
            let mut ev = symmetric_eigenvalues(&bs_kernel(gs, ell, scale))?;
            ev.reverse();
            Ok(ev)
        })
        .collect()
}

pub fn count_from_spectra(spectra: &[Vec<f64>], which: BsWhich, tol: f64) -> BsCount {
    let c = which.coupling();
    let mut count = 0;
    let mut above = Vec::new();
    let mut ambiguous = Vec::new();
    for (ell, ev) in spectra.iter().enumerate() {
        for mu in ev.iter().map(|m| m * c).take_while(|&m| m > 1.0 - tol) {
            if (mu - 1.0).abs() <= tol {
                if ell >= 2 {
                    ambiguous.push((ell, mu));
                }
                continue;
            }
            count += 2 * ell + 1;
            above.push((ell, mu));
        }
    }
    BsCount { which, count, eigenvalues_above_1: above, ambiguous }
}

pub fn birman_schwinger_count(gs: &GroundState<f64>, which: BsWhich, ell_max: usize) -> Result<BsCount> {
    if ell_max < 2 {
        return Err(LabError::InvalidArgument("ell_max must be at least 2".into()));
    }
    let sp = bs_spectra(gs, ell_max, 1.0)?;
    Ok(count_from_spectra(&sp, which, SpectralConfig::default().bs_tolerance))
}

/// `min |μ - 1|` over the spectrum of `K₋` in sectors `ℓ ≤ ell_max`.
pub fn margin_from_spectra(spectra: &[Vec<f64>]) -> f64 {
    spectra.iter().flatten().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min)
}

pub fn threshold_margin(gs: &GroundState<f64>, ell_max: usize) -> Result<f64> {
    Ok(margin_from_spectra(&bs_spectra(gs, ell_max, 1.0)?))
}

/// Eigenvalues of `H` in one sector inside the strip, from `±√spec(L₋L₊)`.
pub fn strip_spectrum(gs: &GroundState<f64>, sector: SectorIndex, fraction: f64) -> Result<Vec<c64>> {
    let lm = banded_to_dense(&l_minus_banded(gs, sector));
    let lp = banded_to_dense(&l_plus_banded(gs, sector));
    let mu = eigenvalues(&(&lm * &lp))?;
    let a2 = gs.alpha * gs.alpha;
    let mut out = Vec::new();
    for m in mu {
        let s = m.sqrt();
        for l in [s, -s] {
            if l.re.abs() < fraction * a2 {
                out.push(l);
            }
        }
    }
    Ok(out)
}

/// Same strip from a dense eigensolve of the `2n × 2n` matrix.
pub fn strip_spectrum_direct(gs: &GroundState<f64>, sector: SectorIndex, fraction: f64) -> Result<Vec<c64>> {
    let h = SectorHamiltonian::new(gs, sector).to_dense();
    let a2 = gs.alpha * gs.alpha;
    Ok(eigenvalues(&h)?.into_iter().filter(|l| l.re.abs() < fraction * a2).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct StripSummary {
    /// eigenvalues within tolerance of 0, with angular multiplicity
    pub near_zero: usize,
    /// purely imaginary eigenvalues away from 0, with multiplicity
    pub imaginary: Vec<[f64; 2]>,
    /// anything else in the strip
    pub unexpected: Vec<[f64; 2]>,
    /// largest |λ| among the eigenvalues counted as zero
    pub zero_spread: f64,
}

pub fn classify_strip(per_sector: &[(SectorIndex, Vec<c64>)], alpha: f64, tol: f64) -> StripSummary {
    let a2 = alpha * alpha;
    let mut s = StripSummary { near_zero: 0, imaginary: Vec::new(), unexpected: Vec::new(), zero_spread: 0.0 };
    for (sec, vals) in per_sector {
        for l in vals {
            if l.norm() < tol * a2 {
                s.near_zero += sec.multiplicity();
                s.zero_spread = s.zero_spread.max(l.norm());
            } else if l.re.abs() < tol * a2 {
                for _ in 0..sec.multiplicity() {
                    s.imaginary.push([l.re, l.im]);
                }
            } else {
                s.unexpected.push([l.re, l.im]);
            }
        }
    }
    s.imaginary.sort_by(|a, b| a[1].partial_cmp(&b[1]).unwrap());
    s
}

/// Certified quantities at one resolution.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub alpha: f64,
    pub n: usize,
    pub r_max: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub lambda1: f64,
    pub sigma: f64,
    pub root_dim_algebraic: usize,
    pub root_dim_geometric: usize,
    pub root_dim_cubic: usize,
    pub bs_count_minus: usize,
    pub bs_count_plus: usize,
    pub bs_ambiguous: Vec<(usize, f64)>,
    pub threshold_margin: f64,
    pub interval_clear: bool,
    pub l_plus_negative: usize,
    pub strip: StripSummary,
    pub lambda1_certificate: Lambda1,
    pub sigma_residual: f64,
    pub eigenvector_residual: f64,
    pub adjoint_residual: f64,
    pub adjoint_norm: f64,
    pub root_space: RootSpaceReport,
}

pub fn spectral_report(gs: &GroundState<f64>, cfg: &SpectralConfig) -> Result<SpectralReport> {
    let a2 = gs.alpha * gs.alpha;
    let (spec0, spec1) = rayon::join(|| scalar_spectra(gs, SectorIndex::S), || scalar_spectra(gs, SectorIndex::P));
    let (spec0, spec1) = (spec0?, spec1?);
    let e0 = spec0.l_plus[0];
    let l_plus_negative = spec0.l_plus.iter().filter(|&&x| x < -1e-6 * a2).count();
    let in_gap = |x: &f64| *x > 1e-4 * a2 && *x < a2 - 1e-4 * a2;
    let interval_clear = [&spec0.l_minus, &spec0.l_plus, &spec1.l_minus, &spec1.l_plus].iter().all(|v| !v.iter().any(in_gap));
    let l1 = find_lambda1(gs)?;
    let (sol, plus, _minus) = imaginary_pair(gs)?;
    let root_space = root_space_report(gs, cfg)?;
    let bs = bs_spectra(gs, cfg.ell_max, 1.0)?;
    let minus = count_from_spectra(&bs, BsWhich::Minus, cfg.bs_tolerance);
    let plus_c = count_from_spectra(&bs, BsWhich::Plus, cfg.bs_tolerance);
    let strip: Vec<(SectorIndex, Vec<c64>)> = (0..=cfg.ell_max)
        .into_par_iter()
        .map(|l| strip_spectrum(gs, SectorIndex::new(l), cfg.strip_fraction).map(|v| (SectorIndex::new(l), v)))
        .collect::<Result<_>>()?;
    Ok(SpectralReport {
        alpha: gs.alpha,
        n: gs.grid.len(),
        r_max: gs.grid.r_max(),
        e0,
        lambda1: l1.lambda1,
        sigma: sol.sigma,
        root_dim_algebraic: root_space.algebraic,
        root_dim_geometric: root_space.geometric,
        root_dim_cubic: root_space.cubic,
        bs_count_minus: minus.count,
        bs_count_plus: plus_c.count,
        bs_ambiguous: plus_c.ambiguous,
        threshold_margin: margin_from_spectra(&bs),
        interval_clear,
        l_plus_negative,
        strip: classify_strip(&strip, gs.alpha, cfg.strip_tolerance),
        lambda1_certificate: l1,
        sigma_residual: sol.residual,
        eigenvector_residual: plus.right_residual,
        adjoint_residual: plus.left_residual,
        adjoint_norm: plus.left_norm,
        root_space,
    })
}
