//! Singular value decomposition of the receiver operator and the dominant
//! (signal-subspace) current.
//!
//! With `G_S = U Σ V*`, the dominant current for measured data `E_s` is
//! `W⁺ = V⁺ w⁺` with `w⁺_i = u_i* E_s / σ_i` over the retained singular
//! triplets. It is the minimum-norm current whose radiated field equals the
//! projection `U⁺U⁺* E_s`.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forward::GreensOperators;
use crate::linalg::{dotc, CMatrix, CVector, KpMap};
use crate::{Error, Result};

/// How many singular values are kept in the signal subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffRule {
    /// Keep every `σ_L` with `σ_L / σ_1 ≥ ratio`.
    Relative { ratio: f64 },
    /// Keep exactly `count` values (clamped to the rank of the operator).
    Fixed { count: usize },
}

impl Default for CutoffRule {
    fn default() -> Self {
        CutoffRule::Relative { ratio: 1e-3 }
    }
}

impl CutoffRule {
    fn select(&self, sigma: &[f64]) -> usize {
        match *self {
            CutoffRule::Relative { ratio } => {
                let top = sigma.first().copied().unwrap_or(0.0);
                if top <= 0.0 {
                    0
                } else {
                    sigma.iter().take_while(|&&s| s / top >= ratio).count()
                }
            }
            CutoffRule::Fixed { count } => count.min(sigma.iter().filter(|&&s| s > 0.0).count()),
        }
    }
}

/// Thin SVD `G = U Σ V*` of one receiver operator.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, `Q × r`.
    pub u: CMatrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors (not conjugated), `N × r`.
    pub v: CMatrix,
    /// Number of retained singular values `L⁺`.
    pub retained: usize,
}

impl Svd {
    /// Computes the thin SVD with singular values sorted in descending order.
    pub fn compute(g: &CMatrix, rule: CutoffRule) -> Result<Self> {
        let svd = g.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
        };
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = CMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v = CMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)].conj());
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite singular value".into()));
        }
        let retained = rule.select(&sigma);
        if retained == 0 {
            return Err(Error::Numerical(
                "cutoff rule retained no singular values (rank-deficient receiver operator)".into(),
            ));
        }
        Ok(Self {
            u,
            sigma,
            v,
            retained,
        })
    }

    /// `‖U Σ V* − G‖_F / ‖G‖_F`.
    pub fn reconstruction_error(&self, g: &CMatrix) -> f64 {
        let sigma = CMatrix::from_diagonal(&DVector::from_iterator(
            self.sigma.len(),
            self.sigma.iter().map(|&s| Complex64::new(s, 0.0)),
        ));
        let rebuilt = &self.u * sigma * self.v.adjoint();
        (rebuilt - g).norm() / g.norm()
    }

    /// Dominant current for the measured receiver field `e_s`.
    pub fn dominant_current(&self, e_s: &[Complex64]) -> Result<DominantCurrent> {
        if e_s.len() != self.u.nrows() {
            return Err(Error::Data(format!(
                "measured field has {} samples, operator has {} receivers",
                e_s.len(),
                self.u.nrows()
            )));
        }
        let mut coefficients = Vec::with_capacity(self.retained);
        for i in 0..self.retained {
            let s = self.sigma[i];
            if s == 0.0 {
                return Err(Error::Numerical(format!(
                    "retained singular value {i} is zero"
                )));
            }
            coefficients.push(dotc(self.u.column(i).as_slice(), e_s) / s);
        }
        let mut current = CVector::zeros(self.v.nrows());
        for (i, w) in coefficients.iter().enumerate() {
            current.axpy(*w, &self.v.column(i), Complex64::new(1.0, 0.0));
        }
        Ok(DominantCurrent {
            coefficients: CVector::from_vec(coefficients),
            current,
        })
    }
}

/// SVDs of `G_S` for every frequency and receiver group.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    svds: Vec<Vec<Svd>>,
    group_of_tx: Vec<usize>,
}

impl SubspaceDecomposition {
    /// SVD used by transmitter `p` at frequency `k`.
    pub fn svd(&self, k: usize, p: usize) -> &Svd {
        &self.svds[k][self.group_of_tx[p]]
    }

    pub fn n_freq(&self) -> usize {
        self.svds.len()
    }

    pub fn n_tx(&self) -> usize {
        self.group_of_tx.len()
    }
}

/// Decomposes every receiver operator in `greens`.
pub fn decompose(greens: &GreensOperators, rule: CutoffRule) -> Result<SubspaceDecomposition> {
    let jobs: Vec<(usize, usize)> = (0..greens.n_freq())
        .flat_map(|k| (0..greens.n_groups()).map(move |g| (k, g)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, g)| Svd::compute(greens.group_operator(k, g), rule))
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    let svds = (0..greens.n_freq())
        .map(|_| it.by_ref().take(greens.n_groups()).collect())
        .collect();
    Ok(SubspaceDecomposition {
        svds,
        group_of_tx: (0..greens.n_tx()).map(|p| greens.group_of(p)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct DominantCurrent {
    /// `w⁺`, length `L⁺`.
    pub coefficients: CVector,
    /// `W⁺ = V⁺ w⁺`, length `N`.
    pub current: CVector,
}

/// Dominant currents for every measured `(k, p)` field.
pub fn dominant_currents(
    decomp: &SubspaceDecomposition,
    measured: &KpMap<CVector>,
) -> Result<KpMap<DominantCurrent>> {
    KpMap::try_par_from_fn(measured.n_freq(), measured.n_tx(), |k, p| {
        decomp.svd(k, p).dominant_current(measured.get(k, p).as_slice())
    })
}
