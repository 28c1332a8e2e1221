//! Uniform radial meshes and finite-difference radial Laplacians.
//!
//! Every sector operator acts on the reduced profile `u = r·f`, for which
//! `-Δ` restricted to angular momentum `ℓ` becomes `-u'' + ℓ(ℓ+1)u/r²`
//! with `u(0) = 0` and a Dirichlet wall at `r_max`. On the `u`-line the
//! volume inner product reduces to `4π h Σ u_i v_i` (divided by `2ℓ+1`
//! for the Cartesian `x_j/r` angular factors used in the dipole sector).

use serde::{Deserialize, Serialize};

use crate::banded::Banded;
use crate::error::{invalid, Result};
use crate::real::Real;

/// Nodes `r_i = i·h`, `i = 1..=n`, `h = r_max/(n+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid<T> {
    r_max: T,
    h: T,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    pub fn new(r_max: T, n: usize) -> Result<Self> {
        if !r_max.is_finite() || r_max <= T::zero() {
            return Err(invalid(format!("r_max must be positive and finite, got {r_max}")));
        }
        if n < 16 {
            return Err(invalid(format!("need at least 16 nodes, got {n}")));
        }
        let h = r_max / T::from_count(n + 1);
        let four_pi = T::lit(4.0) * T::PI();
        let nodes: Vec<T> = (1..=n).map(|i| T::from_count(i) * h).collect();
        let weights = nodes.iter().map(|&r| four_pi * r * r * h).collect();
        Ok(Self { r_max, h, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Volume weights `4π r_i² h`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weight of the `u`-line inner product in sector `ℓ`.
    pub fn line_weight(&self, sector: SectorIndex) -> T {
        T::lit(4.0) * T::PI() * self.h / T::from_count(sector.multiplicity())
    }

    /// `∫ f dx` for a radial function sampled on the nodes.
    pub fn integrate(&self, f: &[T]) -> T {
        f.iter().zip(&self.weights).map(|(&a, &w)| a * w).sum()
    }

    /// `u = r·f`
    pub fn to_line(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.nodes).map(|(&a, &r)| a * r).collect()
    }

    /// `f = u/r`
    pub fn from_line(&self, u: &[T]) -> Vec<T> {
        u.iter().zip(&self.nodes).map(|(&a, &r)| a / r).collect()
    }

    /// Same node count on a rescaled radius (used by the scaling symmetry).
    pub fn rescaled(&self, factor: T) -> Result<Self> {
        Self::new(self.r_max * factor, self.len())
    }

    /// Grid with the node count doubled (`n → 2n`) over the same radius.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.r_max, 2 * self.len())
    }

    pub fn cast<U: Real>(&self) -> RadialGrid<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        RadialGrid {
            r_max: c(self.r_max),
            h: c(self.h),
            nodes: self.nodes.iter().map(|&x| c(x)).collect(),
            weights: self.weights.iter().map(|&x| c(x)).collect(),
        }
    }
}

/// Angular-momentum sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorIndex {
    pub ell: usize,
}

impl SectorIndex {
    pub const S: SectorIndex = SectorIndex { ell: 0 };
    pub const P: SectorIndex = SectorIndex { ell: 1 };

    pub fn new(ell: usize) -> Self {
        Self { ell }
    }

    pub fn multiplicity(self) -> usize {
        2 * self.ell + 1
    }

    /// Parity of `u = r·f` under `r ↦ -r`.
    pub(crate) fn line_parity(self) -> i32 {
        if self.ell.is_multiple_of(2) {
            -1
        } else {
            1
        }
    }
}

/// Central-difference order for `-d²/dr²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    SecondOrder,
    FourthOrder,
    #[default]
    SixthOrder,
}

impl Stencil {
    /// Coefficients of `-u''·h²`: centre first, then offsets `1, 2, ...`.
    pub fn second_derivative(self) -> &'static [f64] {
        match self {
            Stencil::SecondOrder => &[2.0, -1.0],
            Stencil::FourthOrder => &[5.0 / 2.0, -4.0 / 3.0, 1.0 / 12.0],
            Stencil::SixthOrder => &[49.0 / 18.0, -3.0 / 2.0, 3.0 / 20.0, -1.0 / 90.0],
        }
    }

    /// Antisymmetric coefficients of `u'·h` for offsets `1, 2, ...`.
    pub fn first_derivative(self) -> &'static [f64] {
        match self {
            Stencil::SecondOrder => &[1.0 / 2.0],
            Stencil::FourthOrder => &[2.0 / 3.0, -1.0 / 12.0],
            Stencil::SixthOrder => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        }
    }

    pub fn half_width(self) -> usize {
        self.second_derivative().len() - 1
    }

    pub fn order(self) -> usize {
        2 * self.half_width()
    }
}

/// Maps a signed node offset to a stored index and parity sign.
///
/// Node `j` (0-based) sits at `r = (j+1)h`; a ghost at `r = -m·h` is the
/// mirror of node `m-1`; `r = 0` and `r ≥ r_max` carry zero.
#[inline]
fn resolve(j: isize, n: usize, parity: i32) -> Option<(usize, i32)> {
    if j >= 0 {
        ((j as usize) < n).then_some((j as usize, 1))
    } else if j == -1 {
        None
    } else {
        Some(((-j - 2) as usize, parity))
    }
}

/// Banded matrix of `-d²/dr² + ℓ(ℓ+1)/r²` acting on `u = r·f`.
///
/// Symmetric: the ghost reflections pair up across the diagonal.
pub fn radial_laplacian_with<T: Real>(grid: &RadialGrid<T>, sector: SectorIndex, stencil: Stencil) -> Banded<T> {
    let n = grid.len();
    let c = stencil.second_derivative();
    let p = stencil.half_width();
    let h2 = grid.step() * grid.step();
    let parity = sector.line_parity();
    let mut a = Banded::zeros(n, p, p);
    for i in 0..n {
        a.add(i, i, T::lit(c[0]) / h2);
        for (k, &ck) in c.iter().enumerate().skip(1) {
            for j in [i as isize - k as isize, i as isize + k as isize] {
                if let Some((jj, s)) = resolve(j, n, parity) {
                    a.add(i, jj, T::lit(ck * s as f64) / h2);
                }
            }
        }
        let r = grid.nodes()[i];
        let l = T::from_count(sector.ell * (sector.ell + 1));
        a.add(i, i, l / (r * r));
    }
    a
}

/// Radial Laplacian with the default (sixth-order) stencil.
pub fn radial_laplacian<T: Real>(grid: &RadialGrid<T>, sector: SectorIndex) -> Banded<T> {
    radial_laplacian_with(grid, sector, Stencil::default())
}

/// Central first derivative of samples with a prescribed parity about `r = 0`.
///
/// `value_at_origin` supplies the sample at `r = 0` (zero for odd data).
/// Near `r_max` the data are taken to vanish outside the grid.
pub fn first_derivative<T: Real>(grid: &RadialGrid<T>, f: &[T], even: bool, value_at_origin: T, stencil: Stencil) -> Vec<T> {
    let n = grid.len();
    let c = stencil.first_derivative();
    let par = if even { 1 } else { -1 };
    let at = |j: isize| -> T {
        if j == -1 {
            value_at_origin
        } else {
            match resolve(j, n, par) {
                Some((jj, s)) => f[jj] * T::lit(s as f64),
                None => T::zero(),
            }
        }
    };
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (k, &ck) in c.iter().enumerate() {
                let off = (k + 1) as isize;
                acc += T::lit(ck) * (at(i as isize + off) - at(i as isize - off));
            }
            acc / grid.step()
        })
        .collect()
}

/// Value at `r = 0` of an even function from its first four samples,
/// by fitting `a + b r² + c r⁴ + d r⁶`.
pub fn even_extrapolate_origin<T: Real>(f: &[T]) -> T {
    // Lagrange weights in the variable s = r², nodes s = 1, 4, 9, 16 (in units of h²), evaluated at s = 0.
    let s = [1.0, 4.0, 9.0, 16.0];
    let mut out = T::zero();
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (0.0 - s[j]) / (s[i] - s[j]);
            }
        }
        out += T::lit(w) * f[i];
    }
    out
}
