//! Root-space families, their pairing, and the spectral projections.
//!
//! Fields live on four channels: channel 0 is the radial sector and
//! channels 1..=3 carry the dipole sector with angular factors `x_j/r`.
//! Each channel stores a block-ordered `(f₁, f₂)` pair on the `u`-line.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::ground::GroundState;
use crate::ops::{j_map, l_minus_banded, l_plus_banded, SectorHamiltonian};
use crate::radial::{RadialGrid, SectorIndex};
use crate::spectral::{line_inner, EigenPair};

pub const CHANNELS: usize = 4;

pub fn channel_sector(c: usize) -> SectorIndex {
    if c == 0 {
        SectorIndex::S
    } else {
        SectorIndex::P
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiField {
    pub channels: [Vec<c64>; CHANNELS],
}

impl MultiField {
    pub fn zeros(n: usize) -> Self {
        Self { channels: std::array::from_fn(|_| vec![c64::new(0.0, 0.0); 2 * n]) }
    }

    /// Field supported in the radial channel.
    pub fn radial(block: Vec<c64>) -> Self {
        let n = block.len() / 2;
        let mut f = Self::zeros(n);
        f.channels[0] = block;
        f
    }

    pub fn half_dim(&self) -> usize {
        self.channels[0].len() / 2
    }

    pub fn inner(&self, grid: &RadialGrid<f64>, other: &Self) -> c64 {
        (0..CHANNELS).map(|c| line_inner(grid, channel_sector(c), &self.channels[c], &other.channels[c])).sum()
    }

    pub fn norm(&self, grid: &RadialGrid<f64>) -> f64 {
        self.inner(grid, self).re.max(0.0).sqrt()
    }

    pub fn axpy(&mut self, a: c64, x: &Self) {
        for (d, s) in self.channels.iter_mut().zip(&x.channels) {
            d.iter_mut().zip(s).for_each(|(y, x)| *y += a * x);
        }
    }

    pub fn scaled(&self, a: c64) -> Self {
        Self { channels: std::array::from_fn(|c| self.channels[c].iter().map(|x| a * x).collect()) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(c64::new(-1.0, 0.0), other);
        out
    }

    /// `J(f₁, f₂) = (f̄₂, f̄₁)` channelwise.
    pub fn j(&self) -> Self {
        Self { channels: std::array::from_fn(|c| j_map(&self.channels[c])) }
    }

    pub fn apply_h(&self, ham: &Hamiltonians) -> Self {
        Self {
            channels: std::array::from_fn(
                |c| if c == 0 { ham.radial.apply(&self.channels[c]) } else { ham.dipole.apply(&self.channels[c]) },
            ),
        }
    }

    /// Deterministic random J-invariant probe.
    pub fn random_j_invariant(n: usize, seed: u64, radial_only: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Self::zeros(n);
        let used = if radial_only { 1 } else { CHANNELS };
        for ch in f.channels.iter_mut().take(used) {
            for i in 0..n {
                let z = c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                ch[i] = z;
                ch[n + i] = z.conj();
            }
        }
        f
    }
}

/// Sector Hamiltonians for the radial and dipole channels.
#[derive(Clone, Debug)]
pub struct Hamiltonians {
    pub radial: SectorHamiltonian,
    pub dipole: SectorHamiltonian,
}

impl Hamiltonians {
    pub fn new(gs: &GroundState<f64>) -> Self {
        Self { radial: SectorHamiltonian::new(gs, SectorIndex::S), dipole: SectorHamiltonian::new(gs, SectorIndex::P) }
    }
}

/// The eight root-space duals `ξ_j` and partners `η_j = diag(-i, i)ξ_j`
/// at a frozen parameter point.
#[derive(Clone, Debug)]
pub struct RootFamily {
    pub alpha: f64,
    /// 1-based labels of the members present (all eight, or 1 and 2)
    pub labels: Vec<usize>,
    pub xi: Vec<MultiField>,
    pub eta: Vec<MultiField>,
    /// `G[k][j] = ⟨η_j, ξ_k⟩`
    pub pairing: Mat<f64>,
    /// largest imaginary part seen while forming `G`
    pub pairing_imag: f64,
}

fn pair_field(channel: usize, n: usize, top: &[f64], rotate: bool) -> MultiField {
    let mut f = MultiField::zeros(n);
    let (a, b) = if rotate { (c64::new(0.0, 1.0), c64::new(0.0, -1.0)) } else { (c64::new(1.0, 0.0), c64::new(1.0, 0.0)) };
    for (i, &x) in top.iter().enumerate() {
        f.channels[channel][i] = a * x;
        f.channels[channel][n + i] = b * x;
    }
    f
}

fn to_eta(xi: &MultiField) -> MultiField {
    let n = xi.half_dim();
    let mut e = xi.clone();
    for ch in e.channels.iter_mut() {
        for (i, z) in ch.iter_mut().enumerate() {
            *z *= if i < n { c64::new(0.0, -1.0) } else { c64::new(0.0, 1.0) };
        }
    }
    e
}

impl RootFamily {
    /// All eight members (radial and dipole channels).
    pub fn full(gs: &GroundState<f64>) -> Self {
        Self::build(gs, false)
    }

    /// `ξ₁, ξ₂` only, for radial runs.
    pub fn radial(gs: &GroundState<f64>) -> Self {
        Self::build(gs, true)
    }

    fn build(gs: &GroundState<f64>, radial_only: bool) -> Self {
        let grid = &gs.grid;
        let n = grid.len();
        let u = gs.line();
        let ua = gs.line_dalpha();
        let (ux, ud) = dipole_members(gs);
        let mut labels = vec![1, 2];
        let mut xi = vec![pair_field(0, n, &u, false), pair_field(0, n, &ua, true)];
        if !radial_only {
            labels.extend(3..=8);
            for c in 1..=3 {
                xi.push(pair_field(c, n, &ux, false));
            }
            for c in 1..=3 {
                xi.push(pair_field(c, n, &ud, true));
            }
        }
        let eta: Vec<MultiField> = xi.iter().map(to_eta).collect();
        let k = xi.len();
        let mut imag: f64 = 0.0;
        let pairing = Mat::from_fn(k, k, |r, c| {
            let z = eta[c].inner(grid, &xi[r]);
            imag = imag.max(z.im.abs());
            z.re
        });
        Self { alpha: gs.alpha, labels, xi, eta, pairing, pairing_imag: imag }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `⟨ξ_a, η_b⟩` for 1-based labels.
    pub fn xi_eta(&self, grid: &RadialGrid<f64>, a: usize, b: usize) -> c64 {
        let ia = self.labels.iter().position(|&l| l == a).expect("label present");
        let ib = self.labels.iter().position(|&l| l == b).expect("label present");
        self.xi[ia].inner(grid, &self.eta[ib])
    }

    pub fn pairing_condition(&self) -> f64 {
        let sv = self.pairing.singular_values().unwrap_or_default();
        match (sv.first(), sv.last()) {
            (Some(&a), Some(&b)) if b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }
}

/// `u`-line profiles of `x_j φ` and `∂_j φ` consistent with the discrete
/// operators: `∂_j φ` is polished into the discrete null vector of the dipole
/// `L₊` and `x_j φ` is then fixed by `L₋(x_j φ) = -2∂_j φ`. Falls back to
/// the sampled profiles if a solve fails.
pub fn dipole_members(gs: &GroundState<f64>) -> (Vec<f64>, Vec<f64>) {
    let grid = &gs.grid;
    let ux: Vec<f64> = gs.line().iter().zip(grid.nodes()).map(|(a, r)| a * r).collect();
    let ud = grid.to_line(&gs.dphi_dr);
    let polish = || -> Result<(Vec<f64>, Vec<f64>)> {
        let p = SectorIndex::P;
        let lp = l_plus_banded(gs, p).lu()?;
        let mut y = ud.clone();
        for _ in 0..2 {
            y = lp.solve(&y);
            let scale = dot(&y, &ud) / dot(&ud, &ud);
            y.iter_mut().for_each(|x| *x /= scale);
        }
        let rhs: Vec<f64> = y.iter().map(|x| -2.0 * x).collect();
        let x = l_minus_banded(gs, p).lu()?.solve(&rhs);
        Ok((x, y))
    };
    polish().unwrap_or((ux, ud))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `P x = Σ_j range_j Σ_k C_jk ⟨x, corange_k⟩`.
#[derive(Clone, Debug)]
pub struct RankProjection {
    pub range: Vec<MultiField>,
    pub corange: Vec<MultiField>,
    pub coeff: Mat<c64>,
}

impl RankProjection {
    pub fn apply(&self, grid: &RadialGrid<f64>, x: &MultiField) -> MultiField {
        let w: Vec<c64> = self.corange.iter().map(|k| x.inner(grid, k)).collect();
        let mut out = MultiField::zeros(x.half_dim());
        for (j, r) in self.range.iter().enumerate() {
            let c: c64 = (0..w.len()).map(|k| self.coeff[(j, k)] * w[k]).sum();
            out.axpy(c, r);
        }
        out
    }

    /// Coefficients `C ⟨·, corange⟩` without forming the field.
    pub fn coefficients(&self, grid: &RadialGrid<f64>, x: &MultiField) -> Vec<c64> {
        let w: Vec<c64> = self.corange.iter().map(|k| x.inner(grid, k)).collect();
        (0..self.range.len()).map(|j| (0..w.len()).map(|k| self.coeff[(j, k)] * w[k]).sum()).collect()
    }

    /// Numerical rank of `P` on its range.
    pub fn rank(&self, grid: &RadialGrid<f64>) -> usize {
        let k = self.range.len();
        let a = Mat::from_fn(k, k, |kk, i| self.range[i].inner(grid, &self.corange[kk]));
        let ca = &self.coeff * &a;
        let sv = ca.singular_values().unwrap_or_default();
        sv.iter().filter(|&&s| s > 1e-8).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Root,
    ImPlus,
    ImMinus,
    Stable,
    UnstablePlus,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 5] = [Self::Root, Self::ImPlus, Self::ImMinus, Self::Stable, Self::UnstablePlus];
}

/// Riesz projections realized through biorthogonal bases.
#[derive(Clone, Debug)]
pub struct ProjectionSet {
    pub grid: RadialGrid<f64>,
    pub root: RankProjection,
    pub im_plus: RankProjection,
    pub im_minus: RankProjection,
    pub sigma: f64,
}

pub fn invert(m: &Mat<f64>) -> Result<Mat<f64>> {
    let k = m.nrows();
    let sv = m.singular_values().map_err(|e| LabError::NoConvergence(format!("{e:?}")))?;
    let (hi, lo) = (sv[0], *sv.last().unwrap_or(&0.0));
    if !(lo > 1e-12 * hi) {
        return Err(LabError::DegeneratePairing(format!("pairing matrix singular (σ_min/σ_max = {:.3e})", lo / hi)));
    }
    Ok(m.partial_piv_lu().solve(Mat::<f64>::identity(k, k)))
}

fn to_complex(m: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

fn single(pair: &EigenPair) -> RankProjection {
    RankProjection {
        range: vec![MultiField::radial(pair.right.clone())],
        corange: vec![MultiField::radial(pair.left.clone())],
        coeff: Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0)),
    }
}

pub fn build_projections(gs: &GroundState<f64>, family: &RootFamily, plus: &EigenPair, minus: &EigenPair) -> Result<ProjectionSet> {
    let ginv = invert(&family.pairing)?;
    Ok(ProjectionSet {
        grid: gs.grid.clone(),
        root: RankProjection { range: family.eta.clone(), corange: family.xi.clone(), coeff: to_complex(&ginv) },
        im_plus: single(plus),
        im_minus: single(minus),
        sigma: plus.value.im,
    })
}

impl ProjectionSet {
    pub fn apply(&self, kind: ProjectionKind, x: &MultiField) -> MultiField {
        let g = &self.grid;
        match kind {
            ProjectionKind::Root => self.root.apply(g, x),
            ProjectionKind::ImPlus => self.im_plus.apply(g, x),
            ProjectionKind::ImMinus => self.im_minus.apply(g, x),
            ProjectionKind::Stable => {
                let mut out = x.clone();
                let one = c64::new(-1.0, 0.0);
                out.axpy(one, &self.root.apply(g, x));
                out.axpy(one, &self.im_plus.apply(g, x));
                out.axpy(one, &self.im_minus.apply(g, x));
                out
            }
            ProjectionKind::UnstablePlus => {
                let mut out = self.root.apply(g, x);
                out.axpy(c64::new(1.0, 0.0), &self.im_plus.apply(g, x));
                out
            }
        }
    }

    /// Coefficient `⟨x, f̃⁺⟩`.
    pub fn unstable_coefficient(&self, x: &MultiField) -> c64 {
        x.inner(&self.grid, &self.im_plus.corange[0])
    }

    /// Matrix of `H P_u⁺` on its range in the basis `{η_j, f⁺}`.
    pub fn restricted_unstable_matrix(&self, ham: &Hamiltonians) -> Mat<c64> {
        let g = &self.grid;
        let mut basis: Vec<&MultiField> = self.root.range.iter().collect();
        basis.push(&self.im_plus.range[0]);
        let k = basis.len();
        let mut m = Mat::<c64>::zeros(k, k);
        for (b, v) in basis.iter().enumerate() {
            let hv = v.apply_h(ham);
            let c = self.root.coefficients(g, &hv);
            for (a, z) in c.into_iter().enumerate() {
                m[(a, b)] = z;
            }
            m[(k - 1, b)] = self.im_plus.coefficients(g, &hv)[0];
        }
        m
    }
}

/// Diagnostics of the projection invariants on random probes.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectionChecks {
    /// `‖P²x - Px‖/‖x‖`, per kind in [`ProjectionKind::ALL`] order
    pub idempotency: Vec<f64>,
    /// `‖P_root P_im± x‖/‖x‖`
    pub annihilation: f64,
    /// `‖PHx - HPx‖/‖Hx‖` for root and imaginary projections
    pub commutation: f64,
    /// `‖JPx - PJx‖/‖x‖` on J-invariant probes
    pub j_preservation: f64,
    pub rank_root: usize,
    pub rank_plus: usize,
    pub rank_minus: usize,
    /// eigenvalues of `H P_u⁺` on its range
    pub unstable_spectrum: Vec<[f64; 2]>,
}

pub fn check_projections(set: &ProjectionSet, ham: &Hamiltonians, probes: usize, seed: u64) -> ProjectionChecks {
    let g = &set.grid;
    let n = set.root.range[0].half_dim();
    let radial_only = set.root.range.len() < 8;
    let mut idem = vec![0.0f64; ProjectionKind::ALL.len()];
    let (mut ann, mut comm, mut jp) = (0.0f64, 0.0f64, 0.0f64);
    for p in 0..probes {
        let x = MultiField::random_j_invariant(n, seed.wrapping_add(p as u64), radial_only);
        let nx = x.norm(g);
        for (slot, kind) in idem.iter_mut().zip(ProjectionKind::ALL) {
            let px = set.apply(kind, &x);
            let ppx = set.apply(kind, &px);
            *slot = slot.max(ppx.sub(&px).norm(g) / nx);
            jp = jp.max(px.j().sub(&px).norm(g) / nx);
        }
        for k in [ProjectionKind::ImPlus, ProjectionKind::ImMinus] {
            ann = ann.max(set.apply(ProjectionKind::Root, &set.apply(k, &x)).norm(g) / nx);
            ann = ann.max(set.apply(k, &set.apply(ProjectionKind::Root, &x)).norm(g) / nx);
        }
        let hx = x.apply_h(ham);
        let nhx = hx.norm(g);
        for k in [ProjectionKind::Root, ProjectionKind::ImPlus, ProjectionKind::ImMinus] {
            let a = set.apply(k, &hx);
            let b = set.apply(k, &x).apply_h(ham);
            comm = comm.max(a.sub(&b).norm(g) / nhx);
        }
    }
    let spec = set.restricted_unstable_matrix(ham).eigenvalues().map(|v| v.into_iter().map(|z| [z.re, z.im]).collect()).unwrap_or_default();
    ProjectionChecks {
        idempotency: idem,
        annihilation: ann,
        commutation: comm,
        j_preservation: jp,
        rank_root: set.root.rank(g),
        rank_plus: set.im_plus.rank(g),
        rank_minus: set.im_minus.rank(g),
        unstable_spectrum: spec,
    }
}

/// Solves `0 = h⟨f⁺, ξ_ℓ^ref⟩ + Σ_j a_j ⟨η_j, ξ_ℓ^ref⟩` for the eight `a_j`.
pub fn solve_aj_system(grid: &RadialGrid<f64>, family: &RootFamily, f_plus: &EigenPair, h: f64, xi_ref: &RootFamily) -> Result<Vec<f64>> {
    let k = family.len();
    if xi_ref.len() != k {
        return Err(LabError::InvalidArgument("families of different size".into()));
    }
    let m = Mat::from_fn(k, k, |l, j| family.eta[j].inner(grid, &xi_ref.xi[l]).re);
    let fp = MultiField::radial(f_plus.right.clone());
    let rhs = Mat::from_fn(k, 1, |l, _| -h * fp.inner(grid, &xi_ref.xi[l]).re);
    let _ = invert(&m)?;
    let a = m.partial_piv_lu().solve(&rhs);
    Ok((0..k).map(|j| a[(j, 0)]).collect())
}

/// Largest `|h⟨f⁺, ξ_ℓ⟩ + Σ a_j⟨η_j, ξ_ℓ⟩|` after substitution.
pub fn aj_residual(grid: &RadialGrid<f64>, family: &RootFamily, f_plus: &EigenPair, h: f64, xi_ref: &RootFamily, a: &[f64]) -> f64 {
    let fp = MultiField::radial(f_plus.right.clone());
    (0..xi_ref.len())
        .map(|l| {
            let mut s = fp.inner(grid, &xi_ref.xi[l]) * h;
            for (j, aj) in a.iter().enumerate() {
                s += family.eta[j].inner(grid, &xi_ref.xi[l]) * *aj;
            }
            s.norm()
        })
        .fold(0.0, f64::max)
}

/// Random uniform samples in `[-1, 1)` (deterministic).
pub fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}
