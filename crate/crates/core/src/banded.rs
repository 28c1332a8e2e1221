//! Band matrices and a partially pivoted band LU.
//!
//! Storage is row-wise: row `i` keeps columns `i - kl ..= i + ku`.

use std::fmt::Debug;
use std::ops::Neg;

use num_complex::Complex;
use num_traits::NumAssign;

use crate::error::{LabError, Result};
use crate::real::Real;

/// Entry type of a band matrix: a real scalar or a complex number over one.
pub trait BandScalar: Copy + NumAssign + Neg<Output = Self> + Debug + Send + Sync + 'static {
    /// Magnitude used for pivot selection.
    fn modulus(self) -> f64;
}

impl<T: Real> BandScalar for T {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs().to_f64_lossy()
    }
}

impl<T: Real> BandScalar for Complex<T> {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm().to_f64_lossy()
    }
}

#[derive(Clone, Debug)]
pub struct Banded<E> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<E>,
}

impl<E: BandScalar> Banded<E> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![E::zero(); n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> E {
        self.slot(i, j).map_or(E::zero(), |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)`; panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: E) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i},{j}) outside band"));
        self.data[s] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: E) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i},{j}) outside band"));
        self.data[s] = v;
    }

    pub fn add_diagonal(&mut self, d: &[E]) {
        assert_eq!(d.len(), self.n);
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, v);
        }
    }

    /// Applies `f` to every stored entry.
    pub fn map<F: BandScalar>(&self, f: impl Fn(E) -> F) -> Banded<F> {
        Banded { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[E]) -> Vec<E> {
        let mut y = vec![E::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[E], y: &mut [E]) {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        for (i, yi) in y.iter_mut().enumerate() {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = E::zero();
            for j in j0..=j1 {
                acc += row[j + self.kl - i] * x[j];
            }
            *yi = acc;
        }
    }

    /// `y = A^T x`
    pub fn matvec_transpose(&self, x: &[E]) -> Vec<E> {
        let mut y = vec![E::zero(); self.n];
        let w = self.kl + self.ku + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            for j in j0..=j1 {
                y[j] += row[j + self.kl - i] * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Banded<E> {
        let mut t = Banded::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            for j in j0..=j1 {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<E>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn lu(&self) -> Result<BandLu<E>> {
        BandLu::factor(self)
    }
}

/// LU factors with row interchanges, LAPACK `gbtrf` style.
#[derive(Clone, Debug)]
pub struct BandLu<E> {
    n: usize,
    kl: usize,
    /// width of the upper factor rows: ku + kl + 1
    wu: usize,
    upper: Vec<E>,
    lower: Vec<E>,
    pivots: Vec<usize>,
}

impl<E: BandScalar> BandLu<E> {
    pub fn factor(a: &Banded<E>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let wu = a.ku + kl + 1;
        // working rows hold columns i - kl ..= i + ku + kl
        let ww = 2 * kl + a.ku + 1;
        let mut w = vec![E::zero(); n * ww];
        for i in 0..n {
            let j0 = i.saturating_sub(kl);
            let j1 = (i + a.ku).min(n - 1);
            for j in j0..=j1 {
                w[i * ww + (j + kl - i)] = a.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * ww + (j + kl - i);
        let mut lower = vec![E::zero(); n * kl.max(1)];
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = w[at(k, k)].modulus();
            for i in k + 1..=last {
                let m = w[at(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LabError::Singular(k));
            }
            pivots[k] = p;
            let jmax = (k + kl + a.ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    w.swap(at(k, j), at(p, j));
                }
            }
            let piv = w[at(k, k)];
            for i in k + 1..=last {
                let m = w[at(i, k)] / piv;
                lower[k * kl.max(1) + (i - k - 1)] = m;
                if m.modulus() != 0.0 {
                    for j in k + 1..=jmax {
                        let ukj = w[at(k, j)];
                        w[at(i, j)] -= m * ukj;
                    }
                }
            }
        }
        let mut upper = vec![E::zero(); n * wu];
        for i in 0..n {
            let jmax = (i + wu - 1).min(n - 1);
            for j in i..=jmax {
                upper[i * wu + (j - i)] = w[at(i, j)];
            }
        }
        Ok(Self { n, kl, wu, upper, lower, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [E]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let ls = kl.max(1);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                b[i] -= self.lower[k * ls + (i - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let row = &self.upper[i * self.wu..(i + 1) * self.wu];
            let jmax = (i + self.wu - 1).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=jmax {
                acc -= row[j - i] * b[j];
            }
            b[i] = acc / row[0];
        }
    }

    pub fn solve(&self, b: &[E]) -> Vec<E> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Product of pivots with the interchange sign.
    pub fn determinant(&self) -> E {
        let mut d = E::one();
        for i in 0..self.n {
            d *= self.upper[i * self.wu];
            if self.pivots[i] != i {
                d = -d;
            }
        }
        d
    }
}

impl<E: BandScalar> Banded<E> {
    /// Largest stored entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }
}
