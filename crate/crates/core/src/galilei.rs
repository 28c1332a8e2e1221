//! Galilei symmetry on sampled fields and the `Z ↔ U` change of frame.
//!
//! `(g(t)f)(x) = e^{i(γ + v·x - t|v|²)} f(x - 2tv - D)`. Fields live on
//! uniform boxes; shifts are applied spectrally, which is an exact isometry
//! on the periodic box. Padded boxes additionally require the shift to stay
//! inside the zero padding.

use num_complex::Complex64 as c64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Asymptotic frame: phase, velocity, translation and frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalileiFrame {
    pub gamma: f64,
    pub v: [f64; 3],
    pub d: [f64; 3],
    pub alpha: f64,
}

impl GalileiFrame {
    pub fn new(gamma: f64, v: [f64; 3], d: [f64; 3], alpha: f64) -> Self {
        Self { gamma, v, d, alpha }
    }

    /// Frame with only a phase and a frequency.
    pub fn frozen(gamma: f64, alpha: f64) -> Self {
        Self::new(gamma, [0.0; 3], [0.0; 3], alpha)
    }

    /// `ω(t) = -tα²`.
    pub fn omega(&self, t: f64) -> f64 {
        -t * self.alpha * self.alpha
    }

    /// Total displacement `2tv + D` at time `t`.
    pub fn shift(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|k| 2.0 * t * self.v[k] + self.d[k])
    }

    pub fn is_translation_free(&self) -> bool {
        self.v == [0.0; 3] && self.d == [0.0; 3]
    }
}

/// Boundary treatment of a sampled box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    /// zero padding of this many cells at each end of every non-trivial axis
    Padded(usize),
}

/// Complex samples on a uniform product grid, x-fastest ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxField {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub lower: [f64; 3],
    pub boundary: Boundary,
    pub data: Vec<c64>,
}

impl BoxField {
    pub fn zeros(shape: [usize; 3], spacing: [f64; 3], lower: [f64; 3], boundary: Boundary) -> Self {
        Self { shape, spacing, lower, boundary, data: vec![c64::new(0.0, 0.0); shape.iter().product()] }
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(shape: [usize; 3], spacing: [f64; 3], lower: [f64; 3], boundary: Boundary, f: impl Fn([f64; 3]) -> c64) -> Self {
        let mut out = Self::zeros(shape, spacing, lower, boundary);
        for idx in 0..out.data.len() {
            out.data[idx] = f(out.node(idx));
        }
        out
    }

    /// One-dimensional line along `x`.
    pub fn line(n: usize, spacing: f64, lower: f64, boundary: Boundary, f: impl Fn(f64) -> c64) -> Self {
        Self::from_fn([n, 1, 1], [spacing, 1.0, 1.0], [lower, 0.0, 0.0], boundary, |x| f(x[0]))
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.shape[0];
        let j = (idx / self.shape[0]) % self.shape[1];
        let k = idx / (self.shape[0] * self.shape[1]);
        [self.lower[0] + i as f64 * self.spacing[0], self.lower[1] + j as f64 * self.spacing[1], self.lower[2] + k as f64 * self.spacing[2]]
    }

    pub fn norm(&self) -> f64 {
        let cell: f64 = (0..3).filter(|&k| self.shape[k] > 1).map(|k| self.spacing[k]).product();
        (cell * self.data.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn conj(&self) -> Self {
        Self { data: self.data.iter().map(|z| z.conj()).collect(), ..self.clone() }
    }

    fn check_shift(&self, s: [f64; 3]) -> Result<()> {
        for k in 0..3 {
            if !s[k].is_finite() {
                return Err(invalid("shift must be finite"));
            }
            if self.shape[k] <= 1 {
                if s[k] != 0.0 {
                    return Err(invalid(format!("shift {} along a collapsed axis {k}", s[k])));
                }
                continue;
            }
            if let Boundary::Padded(pad) = self.boundary {
                let room = pad as f64 * self.spacing[k];
                if s[k].abs() > room {
                    return Err(invalid(format!("shift {:.3e} along axis {k} exceeds padding {:.3e}", s[k], room)));
                }
            }
        }
        Ok(())
    }

    /// `f(x - s)` by spectral interpolation along each axis.
    pub fn translated(&self, s: [f64; 3]) -> Result<Self> {
        self.check_shift(s)?;
        let mut out = self.clone();
        let mut planner = FftPlanner::<f64>::new();
        for axis in 0..3 {
            let n = self.shape[axis];
            if n <= 1 || s[axis] == 0.0 {
                continue;
            }
            let fwd = planner.plan_fft_forward(n);
            let inv = planner.plan_fft_inverse(n);
            let period = n as f64 * self.spacing[axis];
            // pure phases keep the shift unitary, so opposite shifts cancel exactly
            let phase: Vec<c64> = (0..n)
                .map(|m| {
                    let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                    c64::from_polar(1.0 / n as f64, -2.0 * std::f64::consts::PI * k * s[axis] / period)
                })
                .collect();
            let stride: usize = self.shape[..axis].iter().product();
            let lines = self.data.len() / n;
            let mut buf = vec![c64::new(0.0, 0.0); n];
            for line in 0..lines {
                let base = (line / stride) * stride * n + line % stride;
                for (m, b) in buf.iter_mut().enumerate() {
                    *b = out.data[base + m * stride];
                }
                fwd.process(&mut buf);
                buf.iter_mut().zip(&phase).for_each(|(b, p)| *b *= p);
                inv.process(&mut buf);
                for (m, b) in buf.iter().enumerate() {
                    out.data[base + m * stride] = *b;
                }
            }
        }
        Ok(out)
    }

    fn modulate(&mut self, phase: impl Fn([f64; 3]) -> f64) {
        for idx in 0..self.data.len() {
            let x = self.node(idx);
            self.data[idx] *= c64::from_polar(1.0, phase(x));
        }
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `g(t) f`.
pub fn apply_galilei(frame: &GalileiFrame, t: f64, f: &BoxField) -> Result<BoxField> {
    let mut out = f.translated(frame.shift(t))?;
    let v = frame.v;
    let c = frame.gamma - t * dot3(v, v);
    out.modulate(|x| c + dot3(v, x));
    Ok(out)
}

/// `g(t)⁻¹ f = e^{-i(γ + v·x + t|v|² + v·D)} f(x + 2tv + D)`, applied as the
/// reverse composition of [`apply_galilei`] so that it inverts it exactly.
pub fn apply_galilei_inverse(frame: &GalileiFrame, t: f64, f: &BoxField) -> Result<BoxField> {
    let s = frame.shift(t);
    f.check_shift(s)?;
    let v = frame.v;
    let c = frame.gamma - t * dot3(v, v);
    let mut out = f.clone();
    out.modulate(|x| -(c + dot3(v, x)));
    out.translated([-s[0], -s[1], -s[2]])
}

/// Pair `(Z₁, Z₂)` of sampled components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub first: BoxField,
    pub second: BoxField,
}

impl VectorField {
    /// `(f, f̄)`.
    pub fn j_invariant(f: BoxField) -> Self {
        Self { second: f.conj(), first: f }
    }

    pub fn norm(&self) -> f64 {
        self.first.norm().hypot(self.second.norm())
    }

    /// `‖Z₂ - Z̄₁‖ / ‖Z‖`.
    pub fn j_defect(&self) -> f64 {
        let d: f64 = self.second.data.iter().zip(&self.first.data).map(|(a, b)| (a - b.conj()).norm_sqr()).sum();
        let cell: f64 = (0..3).filter(|&k| self.first.shape[k] > 1).map(|k| self.first.spacing[k]).product();
        (cell * d).sqrt() / self.norm().max(f64::MIN_POSITIVE)
    }
}

/// `U = M(t) G(t) Z` with `G = diag(g, ḡ)` and `M = diag(e^{iω}, e^{-iω})`.
pub fn frame_change_z_to_u(z: &VectorField, frame: &GalileiFrame, t: f64) -> Result<VectorField> {
    let w = c64::from_polar(1.0, frame.omega(t));
    let mut first = apply_galilei(frame, t, &z.first)?;
    let mut second = apply_galilei(frame, t, &z.second.conj())?.conj();
    first.data.iter_mut().for_each(|x| *x *= w);
    second.data.iter_mut().for_each(|x| *x *= w.conj());
    Ok(VectorField { first, second })
}

/// Inverse of [`frame_change_z_to_u`].
pub fn frame_change_u_to_z(u: &VectorField, frame: &GalileiFrame, t: f64) -> Result<VectorField> {
    let w = c64::from_polar(1.0, -frame.omega(t));
    let mut a = u.first.clone();
    let mut b = u.second.clone();
    a.data.iter_mut().for_each(|x| *x *= w);
    b.data.iter_mut().for_each(|x| *x *= w.conj());
    let first = apply_galilei_inverse(frame, t, &a)?;
    let second = apply_galilei_inverse(frame, t, &b.conj())?.conj();
    Ok(VectorField { first, second })
}

/// Radial frame change for block-ordered `u`-line data `(Z₁, Z₂)`: only
/// translation-free frames act on radial fields, as the phase
/// `diag(e^{i(ω+γ)}, e^{-i(ω+γ)})`.
pub fn frame_change_radial(z: &[c64], frame: &GalileiFrame, t: f64, inverse: bool) -> Result<Vec<c64>> {
    if !frame.is_translation_free() {
        return Err(invalid("radial data admit only translation-free frames"));
    }
    if !z.len().is_multiple_of(2) {
        return Err(invalid("block vector must have even length"));
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    let w = c64::from_polar(1.0, sign * (frame.omega(t) + frame.gamma));
    let n = z.len() / 2;
    Ok(z.iter().enumerate().map(|(i, x)| if i < n { x * w } else { x * w.conj() }).collect())
}
