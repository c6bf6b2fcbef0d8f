//! Dense complex kernels and the `(frequency, transmitter)` container.
//!
//! Matrices are nalgebra column-major; the products below walk contiguous
//! columns, which is what keeps the inner loops vectorizable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `y = A x`.
pub fn matvec(a: &CMatrix, x: &[Complex64]) -> CVector {
    assert_eq!(a.ncols(), x.len(), "matvec dimension mismatch");
    let mut y = vec![ZERO; a.nrows()];
    for (col, xj) in a.column_iter().zip(x) {
        if *xj == ZERO {
            continue;
        }
        for (yi, aij) in y.iter_mut().zip(col.iter()) {
            *yi += aij * xj;
        }
    }
    CVector::from_vec(y)
}

/// `y = A^H x`.
pub fn matvec_adjoint(a: &CMatrix, x: &[Complex64]) -> CVector {
    assert_eq!(a.nrows(), x.len(), "adjoint matvec dimension mismatch");
    CVector::from_iterator(a.ncols(), a.column_iter().map(|col| dotc(col.as_slice(), x)))
}

/// `y = A x` restricted to the rows and columns listed in `active`.
/// `x` and the result are indexed in the compressed (active) numbering.
pub fn matvec_sub(a: &CMatrix, active: &[usize], x: &[Complex64]) -> Vec<Complex64> {
    let mut y = vec![ZERO; active.len()];
    for (&j, xj) in active.iter().zip(x) {
        if *xj == ZERO {
            continue;
        }
        let col = a.column(j);
        let col = col.as_slice();
        for (yi, &i) in y.iter_mut().zip(active) {
            *yi += col[i] * xj;
        }
    }
    y
}

/// `y = A^H x` restricted to the active rows and columns.
pub fn matvec_adjoint_sub(a: &CMatrix, active: &[usize], x: &[Complex64]) -> Vec<Complex64> {
    active
        .iter()
        .map(|&j| {
            let col = a.column(j);
            let col = col.as_slice();
            active
                .iter()
                .zip(x)
                .fold(ZERO, |acc, (&i, xi)| acc + col[i].conj() * xi)
        })
        .collect()
}

/// Conjugated inner product `x^H y`.
pub fn dotc(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

pub fn norm_sq(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    norm_sq(x).sqrt()
}

/// `y += a x`.
pub fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Relative distance `‖a − b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let scale = norm_sq(b);
    if scale == 0.0 {
        diff.sqrt()
    } else {
        (diff / scale).sqrt()
    }
}

/// Values indexed by `(frequency k, transmitter p)`, stored frequency-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpMap<T> {
    n_freq: usize,
    n_tx: usize,
    data: Vec<T>,
}

impl<T> KpMap<T> {
    pub fn from_fn(n_freq: usize, n_tx: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n_freq * n_tx);
        for k in 0..n_freq {
            for p in 0..n_tx {
                data.push(f(k, p));
            }
        }
        Self { n_freq, n_tx, data }
    }

    /// Builds a map from frequency-major data; `data.len()` must equal `n_freq * n_tx`.
    pub fn from_vec(n_freq: usize, n_tx: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n_freq * n_tx, "KpMap size mismatch");
        Self { n_freq, n_tx, data }
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, k: usize, p: usize) -> &T {
        &self.data[k * self.n_tx + p]
    }

    pub fn get_mut(&mut self, k: usize, p: usize) -> &mut T {
        &mut self.data[k * self.n_tx + p]
    }

    /// Iterates `((k, p), value)` in frequency-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let n_tx = self.n_tx;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i / n_tx, i % n_tx), v))
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, mut f: impl FnMut((usize, usize), &T) -> U) -> KpMap<U> {
        KpMap {
            n_freq: self.n_freq,
            n_tx: self.n_tx,
            data: self.iter().map(|(kp, v)| f(kp, v)).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &KpMap<U>) -> bool {
        self.n_freq == other.n_freq && self.n_tx == other.n_tx
    }
}

impl<T: Send + Sync> KpMap<T> {
    /// Parallel version of [`KpMap::map`]; output order is deterministic.
    pub fn par_map<U: Send>(&self, f: impl Fn((usize, usize), &T) -> U + Sync) -> KpMap<U> {
        use rayon::prelude::*;
        let n_tx = self.n_tx;
        let data = self
            .data
            .par_iter()
            .enumerate()
            .map(|(i, v)| f((i / n_tx, i % n_tx), v))
            .collect();
        KpMap {
            n_freq: self.n_freq,
            n_tx: self.n_tx,
            data,
        }
    }
}

impl<T: Send> KpMap<T> {
    /// Fallible parallel construction, frequency-major.
    pub fn try_par_from_fn<E: Send>(
        n_freq: usize,
        n_tx: usize,
        f: impl Fn(usize, usize) -> Result<T, E> + Sync,
    ) -> Result<Self, E> {
        use rayon::prelude::*;
        let data = (0..n_freq * n_tx)
            .into_par_iter()
            .map(|i| f(i / n_tx, i % n_tx))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self { n_freq, n_tx, data })
    }
}
