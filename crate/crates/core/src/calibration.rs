//! Estimation of the complex calibration factors `λ` by conjugate gradients.
//!
//! # The λ-dependent cost
//!
//! For one `(k, p)` pair, with `W`, `χ` and the simulated receiver field
//! `s = E_s^sim` held fixed, only the state, calibration and regulariser terms
//! of the augmented cost depend on `λ`. Writing
//!
//! - `a = χ ⊙ E_inc` and `R = W − χ ⊙ (G_D W)`,
//! - `m = E_s^meas`, `η = ‖W⁺‖²`, `μ = ‖m‖²`,
//!
//! the λ-part is
//!
//! ```text
//! J(λ) = ½ ( ‖R − λa‖²/η + ‖λs − m‖²/μ + β|λ|² )
//!      = ½ ( H|λ|² − 2 Re(λ̄ b) + c )
//! H = ‖a‖²/η + ‖s‖²/μ + β
//! b = ⟨a, R⟩/η + ⟨s, m⟩/μ
//! c = ‖R‖²/η + 1
//! ```
//!
//! with `⟨x, y⟩ = x^H y`. The curvature `H` collects both the state term and
//! the calibration term because `λ` scales the incident field in the former and
//! the simulated field in the latter.
//!
//! The gradient used throughout is `g = ∂J/∂Re λ + j ∂J/∂Im λ = 2 ∂J/∂λ̄`:
//!
//! ```text
//! g = Hλ − b = −⟨a, R − λa⟩/η + ⟨s, λs − m⟩/μ + βλ
//! ```
//!
//! Along a direction `d`, `J(λ + αd) = J(λ) + Re(ᾱ d̄ g) + ½ H |α|² |d|²`, so
//! the exact complex step is `α = −d̄ g / (H |d|²)`. Because `α` is complex the
//! line `λ + αd` spans the whole plane and one step reaches the minimiser;
//! the Polak–Ribière memory matters when the cost changes between passes.
//!
//! In joint mode a single `λ_k` is shared by all transmitters at frequency
//! `k`; the per-transmitter quadratics are summed before the step.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{dotc, norm_sq, KpMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `λ ≡ 1` throughout.
    #[default]
    None,
    /// One factor per frequency shared by all transmitters.
    Joint,
    /// One factor per `(k, p)`.
    PerTx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaDomain {
    Real,
    #[default]
    Complex,
}

/// `J(λ) = ½ (H|λ|² − 2 Re(λ̄ b) + c)` for one `(k, p)` pair, or a sum of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaQuadratic {
    pub curvature: f64,
    pub linear: Complex64,
    pub constant: f64,
}

/// Inputs defining the λ-part of the cost for one `(k, p)` pair.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationFields<'a> {
    pub chi: &'a [Complex64],
    pub currents: &'a [Complex64],
    /// `G_D W`.
    pub domain_scattered: &'a [Complex64],
    pub incident: &'a [Complex64],
    pub simulated: &'a [Complex64],
    pub measured: &'a [Complex64],
    /// `‖W⁺‖²`.
    pub dominant_norm_sq: f64,
}

impl LambdaQuadratic {
    pub fn from_fields(f: &CalibrationFields<'_>, beta: f64) -> Self {
        let eta = f.dominant_norm_sq;
        let mu = norm_sq(f.measured);
        let a: Vec<Complex64> = f.chi.iter().zip(f.incident).map(|(x, e)| x * e).collect();
        let r: Vec<Complex64> = f
            .currents
            .iter()
            .zip(f.chi)
            .zip(f.domain_scattered)
            .map(|((w, x), ed)| w - x * ed)
            .collect();
        Self {
            curvature: norm_sq(&a) / eta + norm_sq(f.simulated) / mu + beta,
            linear: dotc(&a, &r) / eta + dotc(f.simulated, f.measured) / mu,
            constant: norm_sq(&r) / eta + 1.0,
        }
    }

    pub fn value(&self, lambda: Complex64) -> f64 {
        0.5 * (self.curvature * lambda.norm_sqr() - 2.0 * (lambda.conj() * self.linear).re
            + self.constant)
    }

    pub fn gradient(&self, lambda: Complex64) -> Complex64 {
        self.curvature * lambda - self.linear
    }

    /// Unconstrained minimiser `b / H` (zero when the curvature vanishes).
    pub fn minimizer(&self) -> Complex64 {
        if self.curvature > 0.0 {
            self.linear / self.curvature
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    fn add(self, other: Self) -> Self {
        Self {
            curvature: self.curvature + other.curvature,
            linear: self.linear + other.linear,
            constant: self.constant + other.constant,
        }
    }
}

/// Gradient `g = 2 ∂J/∂λ̄` for one pair, from the fields directly.
pub fn gradient(lambda: Complex64, fields: &CalibrationFields<'_>, beta: f64) -> Complex64 {
    LambdaQuadratic::from_fields(fields, beta).gradient(lambda)
}

/// Polak–Ribière (PR+) direction for a scalar complex unknown.
///
/// Falls back to steepest descent on the first pass, when the PR coefficient
/// is negative, or when the result is not a descent direction.
pub fn direction(g: Complex64, memory: Option<(Complex64, Complex64)>) -> Complex64 {
    let steepest = -g;
    let Some((g_prev, d_prev)) = memory else {
        return steepest;
    };
    let denom = g_prev.norm_sqr();
    if denom == 0.0 {
        return steepest;
    }
    let pr = ((g.conj() * (g - g_prev)).re / denom).max(0.0);
    let d = steepest + pr * d_prev;
    if (d.conj() * g).re >= 0.0 {
        steepest
    } else {
        d
    }
}

/// Exact step `α = −d̄ g / (H|d|²)` along `d` for curvature `h`.
pub fn step_size(d: Complex64, g: Complex64, curvature: f64) -> Complex64 {
    let denom = curvature * d.norm_sqr();
    if denom <= 0.0 {
        warn!("zero curvature in calibration line search; step set to 0");
        return Complex64::new(0.0, 0.0);
    }
    -(d.conj() * g) / denom
}

/// Calibration factors plus the conjugate-gradient memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub lambda: KpMap<Complex64>,
    pub prev_gradient: Option<KpMap<Complex64>>,
    pub prev_direction: Option<KpMap<Complex64>>,
    pub mode: CalibrationMode,
    pub domain: LambdaDomain,
}

/// Outcome of one [`CalibrationState::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub cost_before: f64,
    pub cost_after: f64,
    /// Number of `(k)` or `(k, p)` units whose step was rejected.
    pub rejected: usize,
}

impl CalibrationState {
    /// All factors set to one.
    pub fn new(n_freq: usize, n_tx: usize, mode: CalibrationMode, domain: LambdaDomain) -> Self {
        Self {
            lambda: KpMap::from_fn(n_freq, n_tx, |_, _| Complex64::new(1.0, 0.0)),
            prev_gradient: None,
            prev_direction: None,
            mode,
            domain,
        }
    }

    pub fn reset_memory(&mut self) {
        self.prev_gradient = None;
        self.prev_direction = None;
    }

    /// Runs `passes` conjugate-gradient passes on the λ-part of the cost
    /// described by `quadratics` (one per `(k, p)`).
    ///
    /// A step that would increase the cost of its unit is rejected and that
    /// unit's memory is reset.
    pub fn update(&mut self, quadratics: &KpMap<LambdaQuadratic>, passes: usize) -> UpdateReport {
        let cost = |lambda: &KpMap<Complex64>| -> f64 {
            quadratics
                .iter()
                .map(|(kp, q)| q.value(*lambda.get(kp.0, kp.1)))
                .sum()
        };
        let cost_before = cost(&self.lambda);
        let mut rejected = 0;
        if self.mode == CalibrationMode::None {
            return UpdateReport {
                cost_before,
                cost_after: cost_before,
                rejected,
            };
        }
        let (n_freq, n_tx) = (self.lambda.n_freq(), self.lambda.n_tx());
        for _ in 0..passes {
            let mut grads = KpMap::from_fn(n_freq, n_tx, |_, _| Complex64::new(0.0, 0.0));
            let mut dirs = grads.clone();
            // A unit is either one (k, p) pair or, in joint mode, all p at one k.
            let units: Vec<(usize, Vec<usize>)> = match self.mode {
                CalibrationMode::Joint => (0..n_freq).map(|k| (k, (0..n_tx).collect())).collect(),
                _ => (0..n_freq)
                    .flat_map(|k| (0..n_tx).map(move |p| (k, vec![p])))
                    .collect(),
            };
            for (k, members) in units {
                let lead = members[0];
                let q = members
                    .iter()
                    .map(|&p| *quadratics.get(k, p))
                    .reduce(LambdaQuadratic::add)
                    .expect("unit has members");
                let lambda = *self.lambda.get(k, lead);
                let g = q.gradient(lambda);
                let memory = match (&self.prev_gradient, &self.prev_direction) {
                    (Some(pg), Some(pd)) => Some((*pg.get(k, lead), *pd.get(k, lead))),
                    _ => None,
                };
                let d = direction(g, memory);
                let mut next = if d.norm_sqr() > 0.0 {
                    lambda + step_size(d, g, q.curvature) * d
                } else {
                    lambda
                };
                if self.domain == LambdaDomain::Real {
                    next.im = 0.0;
                }
                let accept = q.value(next) <= q.value(lambda) + 1e-12 * q.value(lambda).abs().max(1.0);
                let (value, d_store) = if accept {
                    (next, d)
                } else {
                    rejected += 1;
                    (lambda, Complex64::new(0.0, 0.0))
                };
                for &p in &members {
                    *self.lambda.get_mut(k, p) = value;
                    *grads.get_mut(k, p) = if accept { g } else { Complex64::new(0.0, 0.0) };
                    *dirs.get_mut(k, p) = d_store;
                }
            }
            self.prev_gradient = Some(grads);
            self.prev_direction = Some(dirs);
        }
        UpdateReport {
            cost_before,
            cost_after: cost(&self.lambda),
            rejected,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    /// Terms 2–4 evaluated straight from the vectors.
    fn direct_cost(lambda: Complex64, f: &CalibrationFields<'_>, beta: f64) -> f64 {
        let state: f64 = (0..f.chi.len())
            .map(|i| (f.currents[i] - f.chi[i] * (lambda * f.incident[i] + f.domain_scattered[i])).norm_sqr())
            .sum();
        let calib: f64 = f.simulated.iter().zip(f.measured).map(|(s, m)| (lambda * s - m).norm_sqr()).sum();
        0.5 * (state / f.dominant_norm_sq + calib / norm_sq(f.measured) + beta * lambda.norm_sqr())
    }

    struct Owned {
        chi: Vec<Complex64>,
        w: Vec<Complex64>,
        ed: Vec<Complex64>,
        inc: Vec<Complex64>,
        sim: Vec<Complex64>,
        meas: Vec<Complex64>,
        eta: f64,
    }

    impl Owned {
        fn random(rng: &mut ChaCha8Rng) -> Self {
            Self {
                chi: random_vec(rng, 7),
                w: random_vec(rng, 7),
                ed: random_vec(rng, 7),
                inc: random_vec(rng, 7),
                sim: random_vec(rng, 5),
                meas: random_vec(rng, 5),
                eta: rng.random_range(0.5..3.0),
            }
        }

        fn fields(&self) -> CalibrationFields<'_> {
            CalibrationFields {
                chi: &self.chi,
                currents: &self.w,
                domain_scattered: &self.ed,
                incident: &self.inc,
                simulated: &self.sim,
                measured: &self.meas,
                dominant_norm_sq: self.eta,
            }
        }
    }

    #[test]
    fn quadratic_model_matches_direct_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = Owned::random(&mut rng);
        let q = LambdaQuadratic::from_fields(&o.fields(), 0.3);
        for _ in 0..20 {
            let l = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (a, b) = (q.value(l), direct_cost(l, &o.fields(), 0.3));
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let o = Owned::random(&mut rng);
            let beta = rng.random_range(0.0..2.0);
            let l = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let h = 1e-5;
            let f = |x: Complex64| direct_cost(x, &o.fields(), beta);
            let fd = c(
                (f(l + c(h, 0.0)) - f(l - c(h, 0.0))) / (2.0 * h),
                (f(l + c(0.0, h)) - f(l - c(0.0, h))) / (2.0 * h),
            );
            let g = gradient(l, &o.fields(), beta);
            assert!((g - fd).norm() <= 1e-6 * g.norm().max(1e-3), "{g} vs {fd}");
        }
    }

    #[test]
    fn gradient_vanishes_at_analytic_minimizer_without_contrast() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut o = Owned::random(&mut rng);
        o.chi = vec![c(0.0, 0.0); 7];
        let beta = 0.2;
        let f = o.fields();
        let star = dotc(&o.sim, &o.meas) / (norm_sq(&o.sim) + beta * norm_sq(&o.meas));
        assert!(gradient(star, &f, beta).norm() < 1e-12);
    }

    #[test]
    fn beta_only_gradient() {
        let zeros = vec![c(0.0, 0.0); 3];
        let meas = vec![c(1.0, 0.0); 3];
        let f = CalibrationFields {
            chi: &zeros,
            currents: &zeros,
            domain_scattered: &zeros,
            incident: &zeros,
            simulated: &zeros,
            measured: &meas,
            dominant_norm_sq: 1.0,
        };
        let l = c(0.4, -1.5);
        assert!((gradient(l, &f, 0.7) - 0.7 * l).norm() < 1e-15);
        // Pure quadratic: λ = 1, d = −1 lands on 0.
        let q = LambdaQuadratic::from_fields(&f, 0.7);
        let g = q.gradient(c(1.0, 0.0));
        let alpha = step_size(c(-1.0, 0.0), g, q.curvature);
        assert!((alpha - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn direction_rules() {
        let g = c(1.0, 2.0);
        assert_eq!(direction(g, None), -g);
        assert_eq!(direction(g, Some((g, c(5.0, 5.0)))), -g);
        assert_eq!(direction(g, Some((c(0.0, 0.0), c(1.0, 0.0)))), -g);
    }

    #[test]
    fn exact_step_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let o = Owned::random(&mut rng);
        let q = LambdaQuadratic::from_fields(&o.fields(), 0.05);
        let l = c(0.3, 0.9);
        let g = q.gradient(l);
        let d = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let alpha = step_size(d, g, q.curvature);
        let best = q.value(l + alpha * d);
        for _ in 0..100 {
            let probe = c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            assert!(best <= q.value(l + probe * d) + 1e-14);
        }
    }

    #[test]
    fn one_complex_variable_converges_immediately() {
        let q = LambdaQuadratic { curvature: 2.5, linear: c(-1.0, 4.0), constant: 9.0 };
        let mut state = CalibrationState::new(1, 1, CalibrationMode::PerTx, LambdaDomain::Complex);
        let qs = KpMap::from_vec(1, 1, vec![q]);
        state.update(&qs, 2);
        assert!((*state.lambda.get(0, 0) - q.minimizer()).norm() < 1e-15);
        assert!(q.gradient(*state.lambda.get(0, 0)).norm() < 1e-14);
    }

    #[test]
    fn joint_equals_per_tx_for_identical_data() {
        let q = LambdaQuadratic { curvature: 1.5, linear: c(0.7, -0.2), constant: 1.0 };
        let qs = KpMap::from_fn(2, 4, |k, _| LambdaQuadratic { linear: q.linear * (k + 1) as f64, ..q });
        let mut joint = CalibrationState::new(2, 4, CalibrationMode::Joint, LambdaDomain::Complex);
        let mut per = CalibrationState::new(2, 4, CalibrationMode::PerTx, LambdaDomain::Complex);
        joint.update(&qs, 1);
        per.update(&qs, 1);
        for (a, b) in joint.lambda.values().iter().zip(per.lambda.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn real_domain_projects_imaginary_part() {
        let q = LambdaQuadratic { curvature: 2.0, linear: c(3.0, 1.0), constant: 5.0 };
        let mut state = CalibrationState::new(1, 1, CalibrationMode::PerTx, LambdaDomain::Real);
        let report = state.update(&KpMap::from_vec(1, 1, vec![q]), 1);
        let l = *state.lambda.get(0, 0);
        assert_eq!(l.im, 0.0);
        assert!((l.re - 1.5).abs() < 1e-15);
        assert!(report.cost_after <= report.cost_before);
    }

    #[test]
    fn disabled_mode_keeps_unit_factors() {
        let q = LambdaQuadratic { curvature: 2.0, linear: c(3.0, 1.0), constant: 5.0 };
        let mut state = CalibrationState::new(1, 2, CalibrationMode::None, LambdaDomain::Complex);
        state.update(&KpMap::from_vec(1, 2, vec![q, q]), 3);
        assert!(state.lambda.values().iter().all(|l| *l == c(1.0, 0.0)));
    }
}
