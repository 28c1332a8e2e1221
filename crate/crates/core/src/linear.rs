//! Linear propagation `i∂ₜU = HU + F` in one angular sector and the
//! stability and local-decay measurements built on it.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use serde::Serialize;

use crate::banded::{BandLu, Banded};
use crate::error::{LabError, Result};
use crate::ops::{deinterleave, interleave, j_map, SectorHamiltonian};
use crate::projections::{MultiField, ProjectionKind, ProjectionSet};
use crate::radial::{RadialGrid, SectorIndex};
use crate::real::Real;
use crate::spectral::{line_inner, line_norm, linear_fit, EigenPair};

/// Largest half-dimension for dense eigen-propagation.
pub const DENSE_LIMIT: usize = 800;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub time: f64,
    pub sector: SectorIndex,
    /// block-ordered `(U₁, U₂)`
    pub data: Vec<c64>,
}

impl FieldState {
    pub fn new(sector: SectorIndex, data: Vec<c64>) -> Self {
        Self { time: 0.0, sector, data }
    }

    pub fn norm(&self, grid: &RadialGrid<f64>) -> f64 {
        line_norm(grid, self.sector, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `‖JU - U‖∞ ≤ tol`
    pub fn is_j_invariant(&self, tol: f64) -> bool {
        j_map(&self.data).iter().zip(&self.data).all(|(a, b)| (a - b).norm() <= tol)
    }
}

/// `φ₁(x) = (eˣ-1)/x`, `φ₂(x) = (eˣ-1-x)/x²`.
pub fn phi_functions(x: c64) -> (c64, c64) {
    if x.norm() < 0.5 {
        let (mut p1, mut p2) = (c64::new(0.0, 0.0), c64::new(0.0, 0.0));
        let mut term = c64::new(1.0, 0.0);
        for k in 0..24 {
            // term = x^k / k!
            p1 += term / (k as f64 + 1.0);
            p2 += term / ((k as f64 + 1.0) * (k as f64 + 2.0));
            term *= x / (k as f64 + 1.0);
        }
        (p1, p2)
    } else {
        let e = x.exp();
        ((e - 1.0) / x, (e - 1.0 - x) / (x * x))
    }
}

fn phi_functions_real<T: Real>(x: T) -> (T, T) {
    if x.abs() < T::lit(0.5) {
        let (mut p1, mut p2, mut term) = (T::zero(), T::zero(), T::one());
        for k in 0..24 {
            let kf = T::from_count(k);
            p1 += term / (kf + T::one());
            p2 += term / ((kf + T::one()) * (kf + T::lit(2.0)));
            term *= x / (kf + T::one());
        }
        (p1, p2)
    } else {
        let e = x.exp();
        ((e - T::one()) / x, (e - T::one() - x) / (x * x))
    }
}

/// Time-sampled forcing, linearly interpolated between samples.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<c64>>,
}

impl Forcing {
    pub fn at(&self, t: f64) -> Vec<c64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.samples[0].clone();
        }
        if k >= self.times.len() {
            return self.samples[self.times.len() - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.samples[k - 1].iter().zip(&self.samples[k]).map(|(a, b)| a * (1.0 - w) + b * w).collect()
    }
}

/// `H = V Λ V⁻¹` for one sector.
///
/// Eigenvalues within `10⁻³α²` of zero belong to a Jordan block whose
/// computed eigenvectors are nearly parallel; their span is replaced by an
/// orthonormal basis of the generalized kernel and evolved as a small dense
/// block `B = Qᵀ H Q`.
#[derive(Clone, Debug)]
pub struct EigenPropagator {
    pub values: Vec<c64>,
    vecs: Mat<c64>,
    inv: Mat<c64>,
    /// `‖V‖_F ‖V⁻¹‖_F`
    pub condition: f64,
    /// first index of the zero block and its row-major matrix
    block: Option<(usize, Vec<c64>)>,
}

fn frobenius(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Orthonormal basis of the `k`-dimensional generalized kernel by inverse
/// iteration on `H²` from fixed seeds.
fn generalized_kernel(h: &Mat<f64>, k: usize) -> Mat<f64> {
    let dim = h.nrows();
    let lu = h.partial_piv_lu();
    let mut x = Mat::<f64>::from_fn(dim, k, |i, j| (0.37 * ((i + 1) * (j + 2)) as f64).sin());
    let normalize = |x: &mut Mat<f64>| {
        for j in 0..k {
            let nrm = x.col(j).norm_l2();
            for i in 0..dim {
                x[(i, j)] /= nrm;
            }
        }
    };
    for _ in 0..6 {
        x = lu.solve(&x);
        normalize(&mut x);
    }
    x.qr().compute_thin_Q()
}

/// `exp(A)` of a small row-major complex matrix, by scaling and squaring.
fn expm(a: &[c64], m: usize) -> Vec<c64> {
    let norm = (0..m).map(|i| (0..m).map(|j| a[i * m + j].norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    let mul = |x: &[c64], y: &[c64]| -> Vec<c64> {
        let mut z = vec![c64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for l in 0..m {
                let xil = x[i * m + l];
                for j in 0..m {
                    z[i * m + j] += xil * y[l * m + j];
                }
            }
        }
        z
    };
    let scaled: Vec<c64> = a.iter().map(|v| v * scale).collect();
    let mut out: Vec<c64> = (0..m * m).map(|i| if i % (m + 1) == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }).collect();
    let mut term = out.clone();
    for k in 1..=18 {
        term = mul(&term, &scaled).into_iter().map(|v| v / k as f64).collect();
        out.iter_mut().zip(&term).for_each(|(o, t)| *o += t);
    }
    for _ in 0..squarings {
        out = mul(&out, &out);
    }
    out
}

impl EigenPropagator {
    pub fn new(ham: &SectorHamiltonian) -> Result<Self> {
        let n = ham.half_dim();
        if n > DENSE_LIMIT {
            return Err(LabError::InvalidArgument(format!("dense propagation limited to n ≤ {DENSE_LIMIT}, got {n}")));
        }
        let h = ham.to_dense();
        let eig = h.eigen().map_err(|e| LabError::NoConvergence(format!("eigensolver: {e:?}")))?;
        let raw: Vec<c64> = eig.S().column_vector().iter().copied().collect();
        let u = eig.U();
        let dim = u.nrows();
        let zero = 1e-3 * ham.alpha * ham.alpha;
        let (cluster, regular): (Vec<usize>, Vec<usize>) = (0..dim).partition(|&k| raw[k].norm() < zero);
        let mut values: Vec<c64> = regular.iter().map(|&k| raw[k]).collect();
        let mut vecs = Mat::<c64>::zeros(dim, dim);
        for (col, &k) in regular.iter().enumerate() {
            for i in 0..dim {
                vecs[(i, col)] = u[(i, k)];
            }
        }
        let block = if cluster.len() >= 2 {
            let m = cluster.len();
            let q = generalized_kernel(&h, m);
            let hq = &h * &q;
            let b = q.transpose() * &hq;
            let start = regular.len();
            for j in 0..m {
                for i in 0..dim {
                    vecs[(i, start + j)] = c64::new(q[(i, j)], 0.0);
                }
            }
            values.extend(cluster.iter().map(|&k| raw[k]));
            Some((start, (0..m * m).map(|idx| c64::new(b[(idx / m, idx % m)], 0.0)).collect()))
        } else {
            for &k in &cluster {
                let col = values.len();
                for i in 0..dim {
                    vecs[(i, col)] = u[(i, k)];
                }
                values.push(raw[k]);
            }
            None
        };
        let inv = vecs.partial_piv_lu().solve(Mat::<c64>::identity(dim, dim));
        let condition = frobenius(&vecs) * frobenius(&inv);
        if !(condition <= 1e10) {
            return Err(LabError::IllConditionedBasis(condition));
        }
        Ok(Self { values, vecs, inv, condition, block })
    }

    /// Dimension of the Jordan block kept at zero.
    pub fn zero_block_dim(&self) -> usize {
        self.block.as_ref().map_or(0, |(s, _)| self.values.len() - s)
    }

    pub fn coefficients(&self, x: &[c64]) -> Vec<c64> {
        matvec(&self.inv, x)
    }

    pub fn synthesize(&self, c: &[c64]) -> Vec<c64> {
        matvec(&self.vecs, c)
    }

    /// Advances coefficients by `tau`, with the forcing coefficients at
    /// both ends interpolated linearly in between.
    pub fn advance(&self, c: &[c64], tau: f64, forcing: Option<(&[c64], &[c64])>) -> Vec<c64> {
        let mi = c64::new(0.0, -1.0);
        let end = self.block.as_ref().map_or(c.len(), |(s, _)| *s);
        let mut out: Vec<c64> = c.to_vec();
        for k in 0..end {
            let z = mi * tau * self.values[k];
            out[k] = c[k] * z.exp();
            if let Some((f0, f1)) = forcing {
                let (p1, p2) = phi_functions(z);
                out[k] += mi * tau * ((p1 - p2) * f0[k] + p2 * f1[k]);
            }
        }
        if let Some((s, b)) = &self.block {
            // augmented system d/ds (c, 1, s/τ) carries the linear forcing
            let m = c.len() - s;
            let w = m + 2;
            let mut a = vec![c64::new(0.0, 0.0); w * w];
            for i in 0..m {
                for j in 0..m {
                    a[i * w + j] = mi * tau * b[i * m + j];
                }
                if let Some((f0, f1)) = forcing {
                    a[i * w + m] = mi * tau * f0[s + i];
                    a[i * w + m + 1] = mi * tau * (f1[s + i] - f0[s + i]);
                }
            }
            a[(m + 1) * w + m] = c64::new(1.0, 0.0);
            let e = expm(&a, w);
            for i in 0..m {
                let mut acc = e[i * w + m];
                for j in 0..m {
                    acc += e[i * w + j] * c[s + j];
                }
                out[s + i] = acc;
            }
        }
        out
    }

    pub fn evolve_coefficients(&self, c: &[c64], t: f64) -> Vec<c64> {
        self.advance(c, t, None)
    }

    /// `e^{-itH} x`
    pub fn evolve(&self, x: &[c64], t: f64) -> Vec<c64> {
        self.synthesize(&self.evolve_coefficients(&self.coefficients(x), t))
    }

    /// Zeroes the coefficients of eigenvalues with `|Re λ| < bound`; returns
    /// the largest removed magnitude.
    pub fn filter_strip(&self, c: &mut [c64], bound: f64) -> f64 {
        let mut removed: f64 = 0.0;
        for (ck, l) in c.iter_mut().zip(&self.values) {
            if l.re.abs() < bound {
                removed = removed.max(ck.norm());
                *ck = c64::new(0.0, 0.0);
            }
        }
        removed
    }
}

fn matvec(m: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut y = vec![c64::new(0.0, 0.0); r];
    for j in 0..c {
        let xj = x[j];
        if xj == c64::new(0.0, 0.0) {
            continue;
        }
        let col = m.col(j);
        for i in 0..r {
            y[i] += col[i] * xj;
        }
    }
    y
}

/// Cubic ramp `s(r)` on the outer `fraction` of the grid, peak `strength`.
pub fn sponge_profile(grid: &RadialGrid<f64>, fraction: f64, strength: f64) -> Vec<f64> {
    let start = (1.0 - fraction) * grid.r_max();
    grid.nodes().iter().map(|&r| if r <= start { 0.0 } else { strength * ((r - start) / (fraction * grid.r_max())).powi(3) }).collect()
}

/// Crank–Nicolson for `i u' = (H - i s) u + F` in interleaved ordering.
#[derive(Clone, Debug)]
pub struct CrankNicolson {
    pub dt: f64,
    lhs: BandLu<c64>,
    rhs: Banded<c64>,
}

impl CrankNicolson {
    pub fn new(ham: &SectorHamiltonian, dt: f64, sponge: Option<&[f64]>) -> Result<Self> {
        let half = c64::new(0.0, 0.5 * dt);
        let d_l: Option<Vec<c64>> = sponge.map(|s| s.iter().map(|&x| c64::new(0.5 * dt * x, 0.0)).collect());
        let d_r: Option<Vec<c64>> = sponge.map(|s| s.iter().map(|&x| c64::new(-0.5 * dt * x, 0.0)).collect());
        let one = c64::new(1.0, 0.0);
        let lhs = ham.interleaved(one, half, false, d_l.as_deref()).lu()?;
        let rhs = ham.interleaved(one, -half, false, d_r.as_deref());
        Ok(Self { dt, lhs, rhs })
    }

    /// One step on interleaved data; `forcing` holds `(F(t) + F(t+dt))/2`.
    pub fn step(&self, y: &mut Vec<c64>, forcing: Option<&[c64]>) {
        let mut next = self.rhs.matvec(y);
        if let Some(f) = forcing {
            let w = c64::new(0.0, -self.dt);
            next.iter_mut().zip(f).for_each(|(a, b)| *a += w * b);
        }
        self.lhs.solve_in_place(&mut next);
        *y = next;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMethod {
    Eigen,
    CrankNicolson,
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub method: PropagationMethod,
    pub states: Vec<FieldState>,
    pub condition: Option<f64>,
}

/// Solves `i u' = H u + F` at the requested times (ascending, ≥ 0).
///
/// Uses the dense eigenbasis when the sector is small and the basis is
/// well conditioned, Crank–Nicolson at `Δt = cn_dt` otherwise.
pub fn propagate_linear(
    ham: &SectorHamiltonian,
    u0: &FieldState,
    times: &[f64],
    forcing: Option<&Forcing>,
    cn_dt: f64,
) -> Result<Propagation> {
    if u0.data.len() != 2 * ham.half_dim() || u0.sector != ham.sector {
        return Err(LabError::InvalidArgument("initial state does not match the operator".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(LabError::InvalidArgument("times must be ascending and non-negative".into()));
    }
    match EigenPropagator::new(ham) {
        Ok(p) => Ok(Propagation {
            method: PropagationMethod::Eigen,
            states: propagate_eigen(&p, u0, times, forcing),
            condition: Some(p.condition),
        }),
        Err(LabError::IllConditionedBasis(_)) | Err(LabError::InvalidArgument(_)) => Ok(Propagation {
            method: PropagationMethod::CrankNicolson,
            states: propagate_cn(ham, u0, times, forcing, cn_dt)?,
            condition: None,
        }),
        Err(e) => Err(e),
    }
}

pub fn propagate_eigen(p: &EigenPropagator, u0: &FieldState, times: &[f64], forcing: Option<&Forcing>) -> Vec<FieldState> {
    let mut c = p.coefficients(&u0.data);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let knots: Vec<f64> = forcing.map(|f| f.times.clone()).unwrap_or_default();
    let mut fc_prev = forcing.map(|f| p.coefficients(&f.at(0.0)));
    for &target in times {
        // advance through forcing knots up to `target`
        let mut stops: Vec<f64> = knots.iter().copied().filter(|&s| s > t && s < target).collect();
        stops.push(target);
        for s in stops {
            let tau = s - t;
            if tau > 0.0 {
                match (forcing, fc_prev.as_ref()) {
                    (Some(f), Some(prev)) => {
                        let next = p.coefficients(&f.at(s));
                        c = p.advance(&c, tau, Some((prev, &next)));
                        fc_prev = Some(next);
                    }
                    _ => c = p.evolve_coefficients(&c, tau),
                }
                t = s;
            }
        }
        out.push(FieldState { time: target, sector: u0.sector, data: p.synthesize(&c) });
    }
    out
}

pub fn propagate_cn(
    ham: &SectorHamiltonian,
    u0: &FieldState,
    times: &[f64],
    forcing: Option<&Forcing>,
    dt: f64,
) -> Result<Vec<FieldState>> {
    let mut y = interleave(&u0.data);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut cache: Option<(f64, CrankNicolson)> = None;
    for &target in times {
        while target - t > 1e-12 * dt.max(target) {
            let step = dt.min(target - t);
            let cn = match &cache {
                Some((d, cn)) if (*d - step).abs() <= 1e-15 * dt => cn.clone(),
                _ => {
                    let cn = CrankNicolson::new(ham, step, None)?;
                    cache = Some((step, cn.clone()));
                    cn
                }
            };
            let f = forcing.map(|f| {
                let (a, b) = (f.at(t), f.at(t + step));
                interleave(&a.iter().zip(&b).map(|(x, y)| (x + y) * 0.5).collect::<Vec<_>>())
            });
            cn.step(&mut y, f.as_deref());
            t += step;
        }
        out.push(FieldState { time: target, sector: u0.sector, data: deinterleave(&y) });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    /// `max ‖e^{-itH}P_s u‖ / ‖P_s u‖`
    pub max_ratio: f64,
    /// largest fitted slope of `log ‖·‖` against `t`
    pub max_log_slope: f64,
    pub probes_used: usize,
    /// probes with `‖P_s u‖ ≤ 1e-6‖u‖`
    pub probes_skipped: usize,
    /// largest strip coefficient removed after projection, relative to `‖P_s u‖`
    pub strip_leak: f64,
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct StabilityOptions {
    pub horizon: f64,
    pub samples: usize,
    /// remove eigen-coefficients with `|Re λ| < strip·α²` after projecting
    pub strip: Option<f64>,
    pub project: bool,
}

impl StabilityOptions {
    pub fn for_alpha(alpha: f64) -> Self {
        Self { horizon: 50.0 / (alpha * alpha), samples: 201, strip: Some(0.9), project: true }
    }
}

/// Norm ratios of radial probes under `e^{-itH}` after projecting onto the
/// stable subspace.
///
/// Roundoff leaves `O(ε)` components along `±iσ` in `P_s u`, which `e^{σt}`
/// would amplify beyond any horizon of interest; with `strip` set these
/// coefficients are removed in the eigenbasis and their size reported.
pub fn measure_stability(
    prop: &EigenPropagator,
    alpha: f64,
    proj: Option<&ProjectionSet>,
    grid: &RadialGrid<f64>,
    probes: &[Vec<c64>],
    opts: StabilityOptions,
) -> StabilityReport {
    let s = SectorIndex::S;
    let mut rep = StabilityReport {
        max_ratio: 0.0,
        max_log_slope: f64::NEG_INFINITY,
        probes_used: 0,
        probes_skipped: 0,
        strip_leak: 0.0,
        horizon: opts.horizon,
    };
    for probe in probes {
        let x = match (opts.project, proj) {
            (true, Some(p)) => p.apply(ProjectionKind::Stable, &MultiField::radial(probe.clone())).channels[0].clone(),
            _ => probe.clone(),
        };
        let n0 = line_norm(grid, s, &x);
        if n0 <= 1e-6 * line_norm(grid, s, probe) {
            rep.probes_skipped += 1;
            continue;
        }
        rep.probes_used += 1;
        let mut c = prop.coefficients(&x);
        if let Some(strip) = opts.strip {
            let removed = prop.filter_strip(&mut c, strip * alpha * alpha);
            rep.strip_leak = rep.strip_leak.max(removed / n0);
        }
        let n_start = line_norm(grid, s, &prop.synthesize(&c));
        let mut pts = Vec::with_capacity(opts.samples);
        for k in 0..opts.samples {
            let t = opts.horizon * k as f64 / (opts.samples - 1) as f64;
            let nt = line_norm(grid, s, &prop.synthesize(&prop.evolve_coefficients(&c, t)));
            rep.max_ratio = rep.max_ratio.max(nt / n_start);
            pts.push((t, nt.ln()));
        }
        rep.max_log_slope = rep.max_log_slope.max(linear_fit(&pts).0);
    }
    rep
}

/// Options of the local-decay experiment; times in units of `1/α²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayOptions {
    pub t_end: f64,
    pub dt: f64,
    pub fit_start: f64,
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
    /// exponent of the weight `⟨αr⟩^{-s}`
    pub weight_power: i32,
    /// outer-shell norm fraction that flags a reflection
    pub reflection_threshold: f64,
    /// re-apply `P_s` after every step
    pub reproject: bool,
    /// width of the moving average in units of `π/α²`
    pub beat_window: f64,
    /// energy cap of the probe, in units of `α²`
    pub lambda_cap: f64,
}

impl DecayOptions {
    pub fn for_alpha(alpha: f64, lambda_cap: f64) -> Self {
        let a2 = alpha * alpha;
        Self {
            t_end: 9.5 / a2,
            dt: 4e-3 / a2,
            fit_start: 1.0 / a2,
            sponge_fraction: 0.15,
            sponge_strength: 5.0 * a2,
            weight_power: 2,
            reflection_threshold: 1e-3,
            reproject: true,
            beat_window: 1.0,
            lambda_cap,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    /// `‖⟨αr⟩^{-s} U(t)‖₂`
    pub weighted_norms: Vec<f64>,
    /// weighted norm averaged over one beat period
    pub averaged_norms: Vec<f64>,
    /// log–log slope of the averaged norm
    pub fitted_exponent: f64,
    pub r_squared: f64,
    /// log–log slope of the raw weighted norm over the same window
    pub raw_exponent: f64,
    pub fit_window: (f64, f64),
    /// largest time allowed by the probe's energy cap
    pub window_limit: f64,
    pub reflection_time: Option<f64>,
    pub growth_rate: Option<f64>,
}

/// Gaussian `u`-line probe `(g, g)` with `g = r e^{-r²/(2w²)}`, unit norm.
pub fn gaussian_probe(grid: &RadialGrid<f64>, width: f64) -> Vec<c64> {
    let g: Vec<f64> = grid.nodes().iter().map(|&r| r * (-(r * r) / (2.0 * width * width)).exp()).collect();
    let mut v: Vec<c64> = g.iter().chain(g.iter()).map(|&x| c64::new(x, 0.0)).collect();
    let nv = line_norm(grid, SectorIndex::S, &v);
    v.iter_mut().for_each(|z| *z /= nv);
    v
}

/// Weighted local-decay measurement of a radial probe.
pub fn measure_local_decay(
    ham: &SectorHamiltonian,
    grid: &RadialGrid<f64>,
    proj: Option<&ProjectionSet>,
    probe: &[c64],
    opts: &DecayOptions,
) -> Result<DecayReport> {
    let alpha = ham.alpha;
    let a2 = alpha * alpha;
    let s = SectorIndex::S;
    let window_limit = grid.r_max() / (4.0 * (opts.lambda_cap * a2).sqrt());
    let t_end = opts.t_end.min(window_limit);
    let sponge = sponge_profile(grid, opts.sponge_fraction, opts.sponge_strength);
    let cn = CrankNicolson::new(ham, opts.dt, Some(&sponge))?;
    let weight: Vec<f64> = grid.nodes().iter().map(|&r| (1.0 + a2 * r * r).powf(-0.5 * opts.weight_power as f64)).collect();
    let outer = grid.nodes().iter().position(|&r| r > 0.9 * grid.r_max()).unwrap_or(grid.len());
    let project = |x: Vec<c64>| -> Vec<c64> {
        match (opts.reproject, proj) {
            (true, Some(p)) => p.apply(ProjectionKind::Stable, &MultiField::radial(x)).channels[0].clone(),
            _ => x,
        }
    };
    let n = grid.len();
    let mut x = project(probe.to_vec());
    let steps = (t_end / opts.dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    let mut reflection_time = None;
    let measure = |x: &[c64]| -> (f64, f64) {
        let wx: Vec<c64> = x.iter().enumerate().map(|(i, z)| z * weight[i % n]).collect();
        let total = line_norm(grid, s, x);
        let shell: f64 = (outer..n).map(|i| x[i].norm_sqr() + x[n + i].norm_sqr()).sum::<f64>() * grid.line_weight(s);
        (line_norm(grid, s, &wx), shell.sqrt() / total.max(f64::MIN_POSITIVE))
    };
    let mut y = interleave(&x);
    for k in 0..=steps {
        if k > 0 {
            cn.step(&mut y, None);
            if opts.reproject && proj.is_some() {
                x = project(deinterleave(&y));
                y = interleave(&x);
            }
        }
        let xd = deinterleave(&y);
        let (wn, frac) = measure(&xd);
        let t = k as f64 * opts.dt;
        if reflection_time.is_none() && frac > opts.reflection_threshold {
            reflection_time = Some(t);
        }
        times.push(t);
        norms.push(wn);
    }
    let averaged = beat_average(&times, &norms, opts.beat_window * std::f64::consts::PI / a2);
    let half = 0.5 * opts.beat_window * std::f64::consts::PI / a2;
    let clean_end = reflection_time.unwrap_or(f64::INFINITY).min(t_end);
    let (t0, t1) = (opts.fit_start + half, clean_end - half);
    let (t0r, t1r) = (opts.fit_start, clean_end);
    let pick = |v: &[f64], a: f64, b: f64| -> Vec<(f64, f64)> {
        times.iter().zip(v).filter(|(t, y)| **t >= a && **t <= b && **y > 0.0).map(|(t, y)| (t.ln(), y.ln())).collect()
    };
    let fit = pick(&averaged, t0, t1);
    let raw = pick(&norms, t0r, t1r);
    if fit.len() < 3 || raw.len() < 3 {
        return Err(LabError::InvalidArgument("decay window too short".into()));
    }
    let (slope, _, r2) = linear_fit(&fit);
    Ok(DecayReport {
        times,
        weighted_norms: norms,
        averaged_norms: averaged,
        fitted_exponent: slope,
        r_squared: r2,
        raw_exponent: linear_fit(&raw).0,
        fit_window: (t0, t1),
        window_limit,
        reflection_time,
        growth_rate: None,
    })
}

/// Geometric mean of `y` over a centred window of the given width.
///
/// A beat `y = e(t)(1 + c·cos ωt)` with a slowly varying envelope `e` has
/// `log y = log e + log(1 + c·cos ωt)`; averaging the logarithm over one
/// period removes the oscillation up to a constant offset.
pub fn beat_average(times: &[f64], y: &[f64], width: f64) -> Vec<f64> {
    let mut prefix = vec![0.0; y.len() + 1];
    for (i, v) in y.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v.max(f64::MIN_POSITIVE).ln();
    }
    times
        .iter()
        .map(|&t| {
            let a = times.partition_point(|&s| s < t - 0.5 * width);
            let b = times.partition_point(|&s| s <= t + 0.5 * width);
            ((prefix[b] - prefix[a]) / (b - a) as f64).exp()
        })
        .collect()
}

/// Exponential rate of `|⟨U, f̃⁺⟩|` for an unprojected probe over `[0, span]`.
pub fn measure_growth_rate(
    ham: &SectorHamiltonian,
    grid: &RadialGrid<f64>,
    pair: &EigenPair,
    probe: &[c64],
    span: f64,
    dt: f64,
) -> Result<f64> {
    let cn = CrankNicolson::new(ham, dt, None)?;
    let mut y = interleave(probe);
    let steps = (span / dt).round() as usize;
    let mut pts = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            cn.step(&mut y, None);
        }
        let c = line_inner(grid, pair.sector, &deinterleave(&y), &pair.left).norm();
        if c > 0.0 {
            pts.push((k as f64 * dt, c.ln()));
        }
    }
    // skip the transient of the first tenth
    let cut = pts.len() / 10;
    Ok(linear_fit(&pts[cut..]).0)
}

/// Solution of `ẋ - diag(σ, -σ)x = f` on a sampled time grid.
#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicSolution<T> {
    pub times: Vec<T>,
    /// `x₁` from the bounded representation `-∫ₜ^∞ e^{-(s-t)σ} f₁(s) ds`
    pub x1_bounded: Vec<T>,
    /// `x₁` integrated forward from the supplied `x₁(0)`
    pub x1_forward: Vec<T>,
    pub x2: Vec<T>,
    /// `|x₁(0) + ∫₀^∞ e^{-σt} f₁(t) dt|`
    pub stability_defect: T,
}

/// Exponentially weighted quadrature, exact for piecewise-linear forcing.
/// The forcing is taken to vanish beyond the last sample.
pub fn solve_hyperbolic_ode<T: Real>(sigma: T, x0: [T; 2], times: &[T], f: &[[T; 2]]) -> Result<HyperbolicSolution<T>> {
    if !(sigma > T::zero()) {
        return Err(LabError::InvalidArgument("sigma must be positive".into()));
    }
    if times.len() != f.len() || times.len() < 2 {
        return Err(LabError::InvalidArgument("times and forcing must match and hold at least two samples".into()));
    }
    let m = times.len();
    // ∫_{t_k}^{t_{k+1}} e^{a(t_{k+1}-s)} f ds = τ[(φ₁-φ₂)f_k + φ₂ f_{k+1}]
    let weights = |a: T, tau: T| -> (T, T) {
        let (p1, p2) = phi_functions_real(a * tau);
        ((p1 - p2) * tau, p2 * tau)
    };
    let mut x1f = vec![x0[0]; m];
    let mut x2 = vec![x0[1]; m];
    let mut x1b = vec![T::zero(); m];
    for k in 0..m - 1 {
        let tau = times[k + 1] - times[k];
        let (w0, w1) = weights(sigma, tau);
        x1f[k + 1] = (sigma * tau).exp() * x1f[k] + w0 * f[k][0] + w1 * f[k + 1][0];
        let (v0, v1) = weights(-sigma, tau);
        x2[k + 1] = (-sigma * tau).exp() * x2[k] + v0 * f[k][1] + v1 * f[k + 1][1];
    }
    for k in (0..m - 1).rev() {
        let tau = times[k + 1] - times[k];
        // e^{-σ(s-t_k)} = e^{-στ} e^{σ(t_{k+1}-s)}
        let (w0, w1) = weights(sigma, tau);
        let e = (-sigma * tau).exp();
        x1b[k] = e * x1b[k + 1] - e * (w0 * f[k][0] + w1 * f[k + 1][0]);
    }
    // x₁(0) + ∫₀^∞ e^{-σt} f₁ = x₁(0) - x1_bounded(0)
    let defect = (x0[0] - x1b[0]).abs();
    Ok(HyperbolicSolution { times: times.to_vec(), x1_bounded: x1b, x1_forward: x1f, x2, stability_defect: defect })
}

/// Seeded smooth block probe: each component is `r` times a random complex
/// combination of four Gaussian shells inside `r < 8/α`.
pub fn smooth_probe(grid: &RadialGrid<f64>, alpha: f64, seed: u64) -> Vec<c64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * grid.len());
    for _ in 0..2 {
        let shells: Vec<(f64, f64, c64)> = (0..4)
            .map(|_| {
                let center = rng.random_range(0.0..6.0) / alpha;
                let width = rng.random_range(0.5..2.0) / alpha;
                let c = c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (center, width, c)
            })
            .collect();
        out.extend(grid.nodes().iter().map(|&r| {
            let s: c64 = shells.iter().map(|&(m, w, c)| c * (-(r - m) * (r - m) / (2.0 * w * w)).exp()).sum();
            s * r
        }));
    }
    out
}
