//! Scalar linearizations `L∓` and the matrix Hamiltonian per angular sector.
//!
//! With `A = -Δ + α² - 2φ²` and `B = φ²` the Hamiltonian acting on `(R, R̄)`
//! is `H = [[A, -B], [B, -A]]`. In `(v, u)` coordinates `R = v + iu` it is
//! `[[0, iL₋], [-iL₊, 0]]` with `L₋ = A + B` and `L₊ = A - B`.

use faer::{c64, Mat};
use serde::Serialize;

use crate::banded::Banded;
use crate::ground::GroundState;
use crate::radial::{radial_laplacian_with, RadialGrid, SectorIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    LMinus,
    LPlus,
    HMatrix,
    HUv,
}

#[derive(Clone, Debug)]
pub enum DenseMatrix {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl DenseMatrix {
    pub fn dim(&self) -> usize {
        match self {
            DenseMatrix::Real(m) => m.nrows(),
            DenseMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn as_real(&self) -> Option<&Mat<f64>> {
        match self {
            DenseMatrix::Real(m) => Some(m),
            DenseMatrix::Complex(_) => None,
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match self {
            DenseMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0)),
            DenseMatrix::Complex(m) => m.clone(),
        }
    }
}

/// Dense realization of a sector operator on the `u`-line.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    pub sector: SectorIndex,
    pub kind: OperatorKind,
    pub grid: RadialGrid<f64>,
    pub matrix: DenseMatrix,
}

impl SectorOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

pub fn banded_to_dense(b: &Banded<f64>) -> Mat<f64> {
    let n = b.dim();
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i.saturating_sub(b.lower())..=(i + b.upper()).min(n - 1) {
            m[(i, j)] = b.get(i, j);
        }
    }
    m
}

fn shifted_laplacian(gs: &GroundState<f64>, sector: SectorIndex, coupling: f64) -> Banded<f64> {
    let mut a = radial_laplacian_with(&gs.grid, sector, gs.stencil);
    let a2 = gs.alpha * gs.alpha;
    let d: Vec<f64> = gs.phi.iter().map(|&p| a2 - coupling * p * p).collect();
    a.add_diagonal(&d);
    a
}

/// `L₋ = -Δ + α² - φ²` in band form.
pub fn l_minus_banded(gs: &GroundState<f64>, sector: SectorIndex) -> Banded<f64> {
    shifted_laplacian(gs, sector, 1.0)
}

/// `L₊ = -Δ + α² - 3φ²` in band form.
pub fn l_plus_banded(gs: &GroundState<f64>, sector: SectorIndex) -> Banded<f64> {
    shifted_laplacian(gs, sector, 3.0)
}

pub fn assemble_l_minus(gs: &GroundState<f64>, sector: SectorIndex) -> SectorOperator {
    SectorOperator {
        sector,
        kind: OperatorKind::LMinus,
        grid: gs.grid.clone(),
        matrix: DenseMatrix::Real(banded_to_dense(&l_minus_banded(gs, sector))),
    }
}

pub fn assemble_l_plus(gs: &GroundState<f64>, sector: SectorIndex) -> SectorOperator {
    SectorOperator {
        sector,
        kind: OperatorKind::LPlus,
        grid: gs.grid.clone(),
        matrix: DenseMatrix::Real(banded_to_dense(&l_plus_banded(gs, sector))),
    }
}

/// `H` as a dense real `2n × 2n` matrix in block ordering `(R, R̄)`.
pub fn assemble_h(gs: &GroundState<f64>, sector: SectorIndex) -> SectorOperator {
    let h = SectorHamiltonian::new(gs, sector);
    SectorOperator { sector, kind: OperatorKind::HMatrix, grid: gs.grid.clone(), matrix: DenseMatrix::Real(h.to_dense()) }
}

/// `H` in `(v, u)` coordinates: `[[0, iL₋], [-iL₊, 0]]`.
pub fn assemble_h_uv(gs: &GroundState<f64>, sector: SectorIndex) -> SectorOperator {
    let n = gs.grid.len();
    let lm = l_minus_banded(gs, sector);
    let lp = l_plus_banded(gs, sector);
    let m = Mat::<c64>::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, false) => c64::new(0.0, lm.get(i, j - n)),
        (false, true) => c64::new(0.0, -lp.get(i - n, j)),
        _ => c64::new(0.0, 0.0),
    });
    SectorOperator { sector, kind: OperatorKind::HUv, grid: gs.grid.clone(), matrix: DenseMatrix::Complex(m) }
}

/// Matrix-free Hamiltonian of one sector in block ordering.
#[derive(Clone, Debug)]
pub struct SectorHamiltonian {
    pub sector: SectorIndex,
    pub alpha: f64,
    /// `-Δ + α² - 2φ²`
    pub a: Banded<f64>,
    /// `φ²`
    pub b: Vec<f64>,
    ac: Banded<c64>,
}

impl SectorHamiltonian {
    pub fn new(gs: &GroundState<f64>, sector: SectorIndex) -> Self {
        Self::from_parts(sector, gs.alpha, shifted_laplacian(gs, sector, 2.0), gs.potential())
    }

    /// Free matrix flow `diag(-Δ + α², Δ - α²)` (no potential).
    pub fn free(grid: &RadialGrid<f64>, stencil: crate::radial::Stencil, sector: SectorIndex, alpha: f64) -> Self {
        let mut a = radial_laplacian_with(grid, sector, stencil);
        a.add_diagonal(&vec![alpha * alpha; grid.len()]);
        Self::from_parts(sector, alpha, a, vec![0.0; grid.len()])
    }

    pub fn from_parts(sector: SectorIndex, alpha: f64, a: Banded<f64>, b: Vec<f64>) -> Self {
        let ac = a.map(|v| c64::new(v, 0.0));
        Self { sector, alpha, a, b, ac }
    }

    pub fn half_dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        self.apply_impl(x, false)
    }

    /// `Hᵀ x`; with the constant `u`-line weight this is also the adjoint.
    pub fn apply_transpose(&self, x: &[c64]) -> Vec<c64> {
        self.apply_impl(x, true)
    }

    fn apply_impl(&self, x: &[c64], transpose: bool) -> Vec<c64> {
        let n = self.half_dim();
        assert_eq!(x.len(), 2 * n);
        let ax1 = self.ac.matvec(&x[..n]);
        let ax2 = self.ac.matvec(&x[n..]);
        let s = if transpose { -1.0 } else { 1.0 };
        let mut y = vec![c64::new(0.0, 0.0); 2 * n];
        for i in 0..n {
            let b = self.b[i];
            y[i] = ax1[i] - s * b * x[n + i];
            y[n + i] = s * b * x[i] - ax2[i];
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.half_dim();
        let a = banded_to_dense(&self.a);
        Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => a[(i, j)],
            (false, false) => -a[(i - n, j - n)],
            (true, false) => {
                if i == j - n {
                    -self.b[i]
                } else {
                    0.0
                }
            }
            (false, true) => {
                if i - n == j {
                    self.b[j]
                } else {
                    0.0
                }
            }
        })
    }

    /// `c₀·I + c₁·H` (or with `Hᵀ`) plus an optional diagonal `d` on both
    /// components, in interleaved ordering `(R₀, R̄₀, R₁, R̄₁, …)`.
    pub fn interleaved(&self, c0: c64, c1: c64, transpose: bool, extra_diag: Option<&[c64]>) -> Banded<c64> {
        let n = self.half_dim();
        let p = self.a.upper();
        let bw = 2 * p + 1;
        let mut m = Banded::<c64>::zeros(2 * n, bw, bw);
        let s = if transpose { -1.0 } else { 1.0 };
        for i in 0..n {
            for j in i.saturating_sub(p)..=(i + p).min(n - 1) {
                let v = self.a.get(i, j);
                if v != 0.0 {
                    m.add(2 * i, 2 * j, c1 * v);
                    m.add(2 * i + 1, 2 * j + 1, -c1 * v);
                }
            }
            m.add(2 * i, 2 * i + 1, -c1 * (s * self.b[i]));
            m.add(2 * i + 1, 2 * i, c1 * (s * self.b[i]));
            m.add(2 * i, 2 * i, c0);
            m.add(2 * i + 1, 2 * i + 1, c0);
            if let Some(d) = extra_diag {
                m.add(2 * i, 2 * i, d[i]);
                m.add(2 * i + 1, 2 * i + 1, d[i]);
            }
        }
        m
    }
}

/// Block `(x₁, x₂)` → interleaved.
pub fn interleave(x: &[c64]) -> Vec<c64> {
    let n = x.len() / 2;
    let mut y = Vec::with_capacity(2 * n);
    for i in 0..n {
        y.push(x[i]);
        y.push(x[n + i]);
    }
    y
}

/// Interleaved → block.
pub fn deinterleave(y: &[c64]) -> Vec<c64> {
    let n = y.len() / 2;
    let mut x = vec![c64::new(0.0, 0.0); 2 * n];
    for i in 0..n {
        x[i] = y[2 * i];
        x[n + i] = y[2 * i + 1];
    }
    x
}

/// The conjugation map `(f₁, f₂) ↦ (f̄₂, f̄₁)`.
pub fn j_map(x: &[c64]) -> Vec<c64> {
    let n = x.len() / 2;
    (0..2 * n).map(|i| if i < n { x[n + i].conj() } else { x[i - n].conj() }).collect()
}

/// Pair `(f, f̄)` for a scalar field.
pub fn j_pair(f: &[c64]) -> Vec<c64> {
    f.iter().copied().chain(f.iter().map(|z| z.conj())).collect()
}
