//! Contrast-source inversion with data-driven calibration.
//!
//! The augmented cost, summed over frequencies `k` and transmitters `p`, is
//!
//! ```text
//! J = ½ Σ ‖m − G_S W‖²/‖m‖²                     data
//!   + ½ Σ ‖W − χ(λ E_inc + G_D W)‖²/‖W⁺‖²       state
//!   + ½ Σ ‖λ E_sim − m‖²/‖m‖²                   calibration
//!   + ½ Σ β|λ|²                                 regulariser
//! ```
//!
//! where `m` is the measured scattered field, `W⁺` the dominant current and
//! `E_sim` the unit-λ simulated field for the current contrast. One contrast
//! map is shared by all frequencies.
//!
//! [`run`] alternates a conjugate-gradient W-step, a per-cell closed-form
//! χ-step, a refresh of `E_sim` and a calibration step until the cost change
//! drops below the termination threshold.

use std::sync::Mutex;
use std::time::Instant;

use log::{debug, info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    CalibrationFields, CalibrationMode, CalibrationState, LambdaDomain, LambdaQuadratic,
};
use crate::domain::ContrastMap;
use crate::forward::{forward_solve_from, GreensOperators, SolverSettings};
use crate::linalg::{dotc, matvec, matvec_adjoint, norm_sq, CMatrix, CVector, KpMap};
use crate::subspace::SubspaceDecomposition;
use crate::{Error, Result};

/// Source of the simulated field `E_sim` inside the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMode {
    #[default]
    ExactForward,
    Neural,
}

/// How the contrast is updated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChiStep {
    /// Per-cell minimiser of the state term.
    #[default]
    ClosedForm,
    /// Conjugate gradients on the same quadratic.
    Cgd { iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub beta: f64,
    pub termination_tol: f64,
    pub max_outer_iters: usize,
    /// Conjugate-gradient iterations of each W-step.
    pub w_iterations: usize,
    pub chi_step: ChiStep,
    /// Calibration passes per outer iteration.
    pub lambda_passes: usize,
    pub calibration_mode: CalibrationMode,
    pub lambda_domain: LambdaDomain,
    pub surrogate_mode: SurrogateMode,
    /// Abort when the cost exceeds this multiple of its running minimum.
    pub divergence_factor: f64,
    pub solver: SolverSettings,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            beta: 1e-3,
            termination_tol: 5e-4,
            max_outer_iters: 200,
            w_iterations: 20,
            chi_step: ChiStep::ClosedForm,
            lambda_passes: 1,
            calibration_mode: CalibrationMode::Joint,
            lambda_domain: LambdaDomain::Complex,
            surrogate_mode: SurrogateMode::ExactForward,
            divergence_factor: 10.0,
            solver: SolverSettings::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.termination_tol > 0.0) {
            return Err(Error::Config(format!(
                "termination tolerance must be positive, got {}",
                self.termination_tol
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence factor must exceed 1".into()));
        }
        if let ChiStep::Cgd { iterations: 0 } = self.chi_step {
            return Err(Error::Config("chi CGD needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// The four cost terms, each summed over `(k, p)` and halved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub data_term: f64,
    pub state_term: f64,
    pub calib_term: f64,
    pub reg_term: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn from_sums(t: [f64; 4]) -> Self {
        let [d, s, c, r] = t.map(|v| 0.5 * v);
        Self {
            data_term: d,
            state_term: s,
            calib_term: c,
            reg_term: r,
            total: d + s + c + r,
        }
    }
}

/// Everything that stays fixed during an inversion.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub greens: &'a GreensOperators,
    pub decomposition: &'a SubspaceDecomposition,
    pub incident: &'a KpMap<CVector>,
    pub measured: &'a KpMap<CVector>,
}

impl Problem<'_> {
    pub fn validate(&self) -> Result<()> {
        let (nk, np) = (self.greens.n_freq(), self.greens.n_tx());
        if self.measured.n_freq() != nk
            || self.measured.n_tx() != np
            || !self.incident.same_shape(self.measured)
            || self.decomposition.n_freq() != nk
            || self.decomposition.n_tx() != np
        {
            return Err(Error::Data(format!(
                "dataset shape does not match the operators ({nk} frequencies, {np} transmitters)"
            )));
        }
        for ((k, p), m) in self.measured.iter() {
            if m.len() != self.greens.rx_count(p) {
                return Err(Error::Data(format!(
                    "measured field ({k}, {p}) has {} samples, expected {}",
                    m.len(),
                    self.greens.rx_count(p)
                )));
            }
            if !(norm_sq(m.as_slice()) > 0.0) {
                return Err(Error::Data(format!("measured field ({k}, {p}) has zero norm")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("measured field ({k}, {p}) is not finite")));
            }
            if self.incident.get(k, p).len() != self.greens.n_cells() {
                return Err(Error::Data(format!("incident field ({k}, {p}) has wrong length")));
            }
        }
        Ok(())
    }
}

/// Provides the unit-λ simulated receiver field for a contrast.
pub trait FieldSimulator: Sync {
    fn mode(&self) -> SurrogateMode;
    fn simulate(&self, chi: &ContrastMap) -> Result<KpMap<CVector>>;
}

/// Exact MoM forward solves, warm-started from the previous currents.
pub struct ExactForward<'a> {
    greens: &'a GreensOperators,
    incident: &'a KpMap<CVector>,
    settings: SolverSettings,
    warm_start: bool,
    previous: Mutex<Option<KpMap<CVector>>>,
}

impl<'a> ExactForward<'a> {
    pub fn new(
        greens: &'a GreensOperators,
        incident: &'a KpMap<CVector>,
        settings: SolverSettings,
    ) -> Self {
        Self {
            greens,
            incident,
            settings,
            warm_start: true,
            previous: Mutex::new(None),
        }
    }

    pub fn without_warm_start(mut self) -> Self {
        self.warm_start = false;
        self
    }
}

impl FieldSimulator for ExactForward<'_> {
    fn mode(&self) -> SurrogateMode {
        SurrogateMode::ExactForward
    }

    fn simulate(&self, chi: &ContrastMap) -> Result<KpMap<CVector>> {
        let mut previous = self.previous.lock().expect("warm-start cache poisoned");
        let guesses = if self.warm_start { previous.take() } else { None };
        let unit = Complex64::new(1.0, 0.0);
        let solutions = KpMap::try_par_from_fn(self.incident.n_freq(), self.incident.n_tx(), |k, p| {
            let guess = guesses.as_ref().map(|g| g.get(k, p));
            forward_solve_from(
                chi,
                unit,
                self.greens,
                self.incident.get(k, p),
                k,
                p,
                &self.settings,
                guess,
            )
        })?;
        if let Some(((k, p), r)) = solutions.iter().find(|(_, s)| !s.report.converged).map(|(kp, s)| (kp, s.report)) {
            warn!(
                "forward solve ({k}, {p}) stopped at residual {:.2e} after {} iterations",
                r.relative_residual, r.iterations
            );
        }
        if self.warm_start {
            *previous = Some(solutions.map(|_, s| s.currents.clone()));
        }
        Ok(solutions.map(|_, s| s.scattered.clone()))
    }
}

/// Iterates of the outer loop plus their histories.
#[derive(Debug, Clone)]
pub struct InversionState {
    pub chi: ContrastMap,
    /// Contrast sources `W` per `(k, p)`.
    pub currents: KpMap<CVector>,
    pub calibration: CalibrationState,
    /// Unit-λ simulated receiver fields.
    pub simulated: KpMap<CVector>,
    /// `‖W⁺‖²` per `(k, p)`.
    pub dominant_norm_sq: KpMap<f64>,
    /// Completed outer iterations.
    pub iteration: usize,
    /// Cost after initialisation and after every outer iteration.
    pub history: Vec<CostBreakdown>,
    /// `λ` after initialisation and after every outer iteration.
    pub lambda_history: Vec<KpMap<Complex64>>,
    /// NSE against the ground truth, when one was supplied.
    pub nse_history: Vec<f64>,
    /// Wall-clock seconds per outer iteration.
    pub iteration_seconds: Vec<f64>,
    /// The same time split by sub-step.
    pub stage_seconds: Vec<StageSeconds>,
    pub converged: bool,
    domain_scattered: KpMap<CVector>,
    receiver_scattered: KpMap<CVector>,
}

impl InversionState {
    pub fn lambda(&self) -> &KpMap<Complex64> {
        &self.calibration.lambda
    }

    /// Replaces the currents and refreshes the cached radiated fields.
    pub fn set_currents(&mut self, problem: &Problem<'_>, currents: KpMap<CVector>) {
        self.domain_scattered = currents.par_map(|(k, _), w| matvec(problem.greens.domain(k), w.as_slice()));
        self.receiver_scattered =
            currents.par_map(|(k, p), w| matvec(problem.greens.receivers(k, p), w.as_slice()));
        self.currents = currents;
    }
}

/// Wall-clock seconds spent in each sub-step of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageSeconds {
    pub w_step: f64,
    pub chi_step: f64,
    pub simulate: f64,
    pub lambda_step: f64,
}

/// Builds `W₀ = W⁺`, `χ₀` from one closed-form χ-step, `λ₀ = 1`, and the
/// matching simulated fields. `shape` is the `nx × ny` layout of the contrast.
pub fn initialize(
    problem: &Problem<'_>,
    config: &InversionConfig,
    simulator: &dyn FieldSimulator,
    shape: (usize, usize),
) -> Result<InversionState> {
    problem.validate()?;
    config.validate()?;
    let n = problem.greens.n_cells();
    if shape.0 * shape.1 != n {
        return Err(Error::Data(format!(
            "contrast shape {}x{} does not match {n} cells",
            shape.0, shape.1
        )));
    }
    let dominant = crate::subspace::dominant_currents(problem.decomposition, problem.measured)?;
    let dominant_norm_sq = dominant.map(|_, d| norm_sq(d.current.as_slice()));
    if let Some(((k, p), _)) = dominant_norm_sq.iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Data(format!("dominant current ({k}, {p}) vanishes")));
    }
    let (nk, np) = (problem.measured.n_freq(), problem.measured.n_tx());
    let empty = || KpMap::from_fn(nk, np, |_, _| CVector::zeros(0));
    let mut state = InversionState {
        chi: ContrastMap::from_shape(shape.0, shape.1, vec![Complex64::new(0.0, 0.0); n])?,
        currents: empty(),
        calibration: CalibrationState::new(nk, np, config.calibration_mode, config.lambda_domain),
        simulated: empty(),
        dominant_norm_sq,
        iteration: 0,
        history: Vec::new(),
        lambda_history: Vec::new(),
        nse_history: Vec::new(),
        iteration_seconds: Vec::new(),
        stage_seconds: Vec::new(),
        converged: false,
        domain_scattered: empty(),
        receiver_scattered: empty(),
    };
    state.set_currents(problem, dominant.map(|_, d| d.current.clone()));
    update_chi(&mut state, problem, ChiStep::ClosedForm)?;
    state.simulated = simulator.simulate(&state.chi)?;
    Ok(state)
}

fn pair_terms(
    state: &InversionState,
    problem: &Problem<'_>,
    beta: f64,
    k: usize,
    p: usize,
) -> [f64; 4] {
    let chi = state.chi.values();
    let lambda = *state.calibration.lambda.get(k, p);
    let w = state.currents.get(k, p);
    let gd_w = state.domain_scattered.get(k, p);
    let gs_w = state.receiver_scattered.get(k, p);
    let inc = problem.incident.get(k, p);
    let m = problem.measured.get(k, p);
    let sim = state.simulated.get(k, p);
    let mu = norm_sq(m.as_slice());
    let eta = *state.dominant_norm_sq.get(k, p);
    let data: f64 = m.iter().zip(gs_w.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let st: f64 = (0..chi.len())
        .map(|i| (w[i] - chi[i] * (lambda * inc[i] + gd_w[i])).norm_sqr())
        .sum();
    let calib: f64 = sim.iter().zip(m.iter()).map(|(s, mi)| (lambda * s - mi).norm_sqr()).sum();
    [data / mu, st / eta, calib / mu, beta * lambda.norm_sqr()]
}

fn cached_cost(state: &InversionState, problem: &Problem<'_>, beta: f64) -> CostBreakdown {
    let mut sums = [0.0; 4];
    for ((k, p), _) in problem.measured.iter() {
        for (s, t) in sums.iter_mut().zip(pair_terms(state, problem, beta, k, p)) {
            *s += t;
        }
    }
    CostBreakdown::from_sums(sums)
}

/// Evaluates the augmented cost from scratch.
pub fn cost(state: &InversionState, problem: &Problem<'_>, beta: f64) -> Result<CostBreakdown> {
    problem.validate()?;
    if state.simulated.values().iter().zip(problem.measured.values()).any(|(s, m)| s.len() != m.len()) {
        return Err(Error::Data("simulated fields do not match the measured layout".into()));
    }
    if let Some(((k, p), _)) = state.dominant_norm_sq.iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Data(format!("dominant current ({k}, {p}) vanishes")));
    }
    let mut fresh = state.clone();
    fresh.set_currents(problem, state.currents.clone());
    Ok(cached_cost(&fresh, problem, beta))
}

/// Per-pair outcome of a W-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WStepReport {
    pub iterations: usize,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
}

struct WPair<'a> {
    gd: &'a CMatrix,
    gs: &'a CMatrix,
    chi: &'a [Complex64],
    b: Vec<Complex64>,
    m: &'a [Complex64],
    mu: f64,
    eta: f64,
}

impl WPair<'_> {
    /// `A x = x − χ ⊙ (G_D x)` given `G_D x`.
    fn state_apply(&self, x: &[Complex64], gd_x: &[Complex64]) -> Vec<Complex64> {
        x.iter()
            .zip(gd_x)
            .zip(self.chi)
            .map(|((xi, gi), ci)| xi - ci * gi)
            .collect()
    }

    fn gradient(&self, r_s: &[Complex64], r_a: &[Complex64]) -> Vec<Complex64> {
        let scaled: Vec<Complex64> = r_a.iter().zip(self.chi).map(|(r, c)| c.conj() * r).collect();
        let gd_h = matvec_adjoint(self.gd, &scaled);
        let gs_h = matvec_adjoint(self.gs, r_s);
        (0..r_a.len())
            .map(|i| gs_h[i] / self.mu + (r_a[i] - gd_h[i]) / self.eta)
            .collect()
    }
}

/// Conjugate gradients (PR+, exact line search) on the W-dependent part
/// `½(‖G_S W − m‖²/‖m‖² + ‖W − χ(λE_inc + G_D W)‖²/‖W⁺‖²)`.
///
/// Returns the new `W`, `G_D W` and `G_S W`.
fn minimize_w(
    pair: &WPair<'_>,
    w0: &[Complex64],
    gd_w0: &[Complex64],
    gs_w0: &[Complex64],
    iterations: usize,
) -> Result<(CVector, CVector, CVector, WStepReport)> {
    let mut w = w0.to_vec();
    let mut gd_w = gd_w0.to_vec();
    let mut gs_w = gs_w0.to_vec();
    let mut r_s: Vec<Complex64> = gs_w.iter().zip(pair.m).map(|(a, b)| a - b).collect();
    let mut r_a: Vec<Complex64> = pair
        .state_apply(&w, &gd_w)
        .iter()
        .zip(&pair.b)
        .map(|(a, b)| a - b)
        .collect();
    let mut g = pair.gradient(&r_s, &r_a);
    let initial = norm_sq(&g).sqrt();
    let mut g_prev: Option<Vec<Complex64>> = None;
    let mut d: Vec<Complex64> = Vec::new();
    let mut done = 0;
    for _ in 0..iterations {
        let g_sq = norm_sq(&g);
        if !g_sq.is_finite() {
            return Err(Error::Numerical("non-finite gradient in W-step".into()));
        }
        if g_sq == 0.0 {
            break;
        }
        d = match &g_prev {
            None => g.iter().map(|v| -v).collect(),
            Some(gp) => {
                let diff: Vec<Complex64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                let pr = (dotc(&g, &diff).re / norm_sq(gp)).max(0.0);
                let cand: Vec<Complex64> = g.iter().zip(&d).map(|(gi, di)| -gi + pr * di).collect();
                if dotc(&cand, &g).re < 0.0 {
                    cand
                } else {
                    g.iter().map(|v| -v).collect()
                }
            }
        };
        let gd_d = matvec(pair.gd, &d);
        let gs_d = matvec(pair.gs, &d);
        let a_d = pair.state_apply(&d, gd_d.as_slice());
        let num = dotc(gs_d.as_slice(), &r_s) / pair.mu + dotc(&a_d, &r_a) / pair.eta;
        let den = norm_sq(gs_d.as_slice()) / pair.mu + norm_sq(&a_d) / pair.eta;
        if !(den > 0.0) {
            break;
        }
        let alpha = -num / den;
        for i in 0..w.len() {
            w[i] += alpha * d[i];
            gd_w[i] += alpha * gd_d[i];
            r_a[i] += alpha * a_d[i];
        }
        for q in 0..gs_w.len() {
            gs_w[q] += alpha * gs_d[q];
            r_s[q] += alpha * gs_d[q];
        }
        g_prev = Some(std::mem::replace(&mut g, pair.gradient(&r_s, &r_a)));
        done += 1;
    }
    let report = WStepReport {
        iterations: done,
        initial_gradient_norm: initial,
        final_gradient_norm: norm_sq(&g).sqrt(),
    };
    Ok((CVector::from_vec(w), CVector::from_vec(gd_w), CVector::from_vec(gs_w), report))
}

/// Minimises the data and state terms over `W` with `χ` and `λ` fixed.
pub fn update_w(
    state: &mut InversionState,
    problem: &Problem<'_>,
    iterations: usize,
) -> Result<KpMap<WStepReport>> {
    let chi = state.chi.values();
    let results = KpMap::try_par_from_fn(state.currents.n_freq(), state.currents.n_tx(), |k, p| {
        let lambda = *state.calibration.lambda.get(k, p);
        let m = problem.measured.get(k, p).as_slice();
        let pair = WPair {
            gd: problem.greens.domain(k),
            gs: problem.greens.receivers(k, p),
            chi,
            b: chi
                .iter()
                .zip(problem.incident.get(k, p).iter())
                .map(|(c, e)| lambda * c * e)
                .collect(),
            m,
            mu: norm_sq(m),
            eta: *state.dominant_norm_sq.get(k, p),
        };
        minimize_w(
            &pair,
            state.currents.get(k, p).as_slice(),
            state.domain_scattered.get(k, p).as_slice(),
            state.receiver_scattered.get(k, p).as_slice(),
            iterations,
        )
    })?;
    state.currents = results.map(|_, r| r.0.clone());
    state.domain_scattered = results.map(|_, r| r.1.clone());
    state.receiver_scattered = results.map(|_, r| r.2.clone());
    Ok(results.map(|_, r| r.3))
}

/// Per-cell normal equations of the state term in `χ`: numerator
/// `Σ Ē W/η` and denominator `Σ |E|²/η` with `E = λE_inc + G_D W`.
fn chi_normal_equations(state: &InversionState, problem: &Problem<'_>) -> (Vec<Complex64>, Vec<f64>) {
    let n = state.chi.len();
    let mut num = vec![Complex64::new(0.0, 0.0); n];
    let mut den = vec![0.0; n];
    for ((k, p), w) in state.currents.iter() {
        let lambda = *state.calibration.lambda.get(k, p);
        let inc = problem.incident.get(k, p);
        let gd_w = state.domain_scattered.get(k, p);
        let eta = *state.dominant_norm_sq.get(k, p);
        for l in 0..n {
            let e = lambda * inc[l] + gd_w[l];
            num[l] += e.conj() * w[l] / eta;
            den[l] += e.norm_sqr() / eta;
        }
    }
    (num, den)
}

/// Projects onto passive media: `Re χ ≥ 0` and `Im χ ≤ 0`.
pub fn project_passive(chi: Complex64) -> Complex64 {
    Complex64::new(chi.re.max(0.0), chi.im.min(0.0))
}

/// Minimises the state term over `χ` with `W` and `λ` fixed, then projects
/// onto passive media. Cells with zero total field keep their value.
pub fn update_chi(state: &mut InversionState, problem: &Problem<'_>, method: ChiStep) -> Result<()> {
    let (num, den) = chi_normal_equations(state, problem);
    let raw: Vec<Complex64> = match method {
        ChiStep::ClosedForm => num
            .iter()
            .zip(&den)
            .zip(state.chi.values())
            .map(|((n, d), old)| if *d > 0.0 { n / d } else { *old })
            .collect(),
        ChiStep::Cgd { iterations } => chi_cgd(&num, &den, state.chi.values(), iterations),
    };
    if raw.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite contrast in chi-step".into()));
    }
    for ((c, r), d) in state.chi.values_mut().iter_mut().zip(raw).zip(&den) {
        if *d > 0.0 {
            *c = project_passive(r);
        }
    }
    Ok(())
}

/// Conjugate gradients on `½ Σ_l (D_l|χ_l|² − 2 Re(χ̄_l N_l))`.
fn chi_cgd(num: &[Complex64], den: &[f64], start: &[Complex64], iterations: usize) -> Vec<Complex64> {
    let mut chi: Vec<Complex64> = start
        .iter()
        .zip(den)
        .map(|(c, d)| if *d > 0.0 { *c } else { Complex64::new(0.0, 0.0) })
        .collect();
    let grad = |x: &[Complex64]| -> Vec<Complex64> {
        x.iter().zip(num).zip(den).map(|((xi, n), d)| d * xi - n).collect()
    };
    let scale = norm_sq(num).sqrt();
    let mut g = grad(&chi);
    let mut d: Vec<Complex64> = g.iter().map(|v| -v).collect();
    for _ in 0..iterations {
        let g_sq = norm_sq(&g);
        if g_sq.sqrt() <= 1e-15 * scale || g_sq == 0.0 {
            break;
        }
        let curv: f64 = d.iter().zip(den).map(|(di, dl)| dl * di.norm_sqr()).sum();
        if !(curv > 0.0) {
            break;
        }
        let alpha = -dotc(&d, &g) / curv;
        for (c, di) in chi.iter_mut().zip(&d) {
            *c += alpha * di;
        }
        let g_new = grad(&chi);
        let diff: Vec<Complex64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let pr = (dotc(&g_new, &diff).re / g_sq).max(0.0);
        d = g_new.iter().zip(&d).map(|(gi, di)| -gi + pr * di).collect();
        if dotc(&d, &g_new).re >= 0.0 {
            d = g_new.iter().map(|v| -v).collect();
        }
        g = g_new;
    }
    chi.iter()
        .zip(start)
        .zip(den)
        .map(|((c, old), dl)| if *dl > 0.0 { *c } else { *old })
        .collect()
}

/// λ-quadratics of the current state, one per `(k, p)`.
pub fn lambda_quadratics(
    state: &InversionState,
    problem: &Problem<'_>,
    beta: f64,
) -> KpMap<LambdaQuadratic> {
    state.currents.map(|(k, p), w| {
        LambdaQuadratic::from_fields(
            &CalibrationFields {
                chi: state.chi.values(),
                currents: w.as_slice(),
                domain_scattered: state.domain_scattered.get(k, p).as_slice(),
                incident: problem.incident.get(k, p).as_slice(),
                simulated: state.simulated.get(k, p).as_slice(),
                measured: problem.measured.get(k, p).as_slice(),
                dominant_norm_sq: *state.dominant_norm_sq.get(k, p),
            },
            beta,
        )
    })
}

/// Runs the calibration step on the current state.
pub fn update_lambda(
    state: &mut InversionState,
    problem: &Problem<'_>,
    beta: f64,
    passes: usize,
) -> crate::calibration::UpdateReport {
    let quadratics = lambda_quadratics(state, problem, beta);
    state.calibration.update(&quadratics, passes)
}

/// Runs the outer loop to convergence.
///
/// `nx × ny` is the layout of the contrast map; `truth`, when given, is used
/// only to record the NSE after every iteration.
pub fn run(
    problem: &Problem<'_>,
    config: &InversionConfig,
    simulator: &dyn FieldSimulator,
    shape: (usize, usize),
    truth: Option<&ContrastMap>,
) -> Result<InversionState> {
    if simulator.mode() != config.surrogate_mode {
        return Err(Error::Config(format!(
            "configured field source {:?} but a {:?} simulator was supplied",
            config.surrogate_mode,
            simulator.mode()
        )));
    }
    let mut state = initialize(problem, config, simulator, shape)?;
    let record_nse = |state: &mut InversionState| -> Result<()> {
        if let Some(t) = truth {
            state.nse_history.push(nse(&state.chi, t)?.nse);
        }
        Ok(())
    };
    let initial = cached_cost(&state, problem, config.beta);
    info!("initial cost {:.6e}", initial.total);
    state.history.push(initial);
    state.lambda_history.push(state.calibration.lambda.clone());
    record_nse(&mut state)?;
    let mut minimum = initial.total;
    for n in 1..=config.max_outer_iters {
        let start = Instant::now();
        update_w(&mut state, problem, config.w_iterations)?;
        let t_w = start.elapsed().as_secs_f64();
        update_chi(&mut state, problem, config.chi_step)?;
        let t_chi = start.elapsed().as_secs_f64();
        state.simulated = simulator.simulate(&state.chi)?;
        let t_sim = start.elapsed().as_secs_f64();
        update_lambda(&mut state, problem, config.beta, config.lambda_passes);
        let total = start.elapsed().as_secs_f64();
        state.iteration_seconds.push(total);
        state.stage_seconds.push(StageSeconds {
            w_step: t_w,
            chi_step: t_chi - t_w,
            simulate: t_sim - t_chi,
            lambda_step: total - t_sim,
        });
        let current = cached_cost(&state, problem, config.beta);
        if !current.total.is_finite() {
            return Err(Error::Numerical(format!("cost is not finite at iteration {n}")));
        }
        let previous = state.history.last().map_or(current.total, |c| c.total);
        state.iteration = n;
        state.history.push(current);
        state.lambda_history.push(state.calibration.lambda.clone());
        record_nse(&mut state)?;
        debug!(
            "iteration {n}: cost {:.6e} (data {:.3e}, state {:.3e}, calib {:.3e}, reg {:.3e})",
            current.total, current.data_term, current.state_term, current.calib_term, current.reg_term
        );
        minimum = minimum.min(current.total);
        if current.total > config.divergence_factor * minimum {
            return Err(Error::Divergence {
                iteration: n,
                cost: current.total,
                minimum,
                factor: config.divergence_factor,
            });
        }
        if (current.total - previous).abs() <= config.termination_tol {
            state.converged = true;
            info!("converged after {n} iterations, cost {:.6e}", current.total);
            break;
        }
    }
    Ok(state)
}

/// Normalised squared error between two permittivity maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NseReport {
    /// `Σ_l |ε̂_l − ε_l|² / |ε_l|²`.
    pub nse: f64,
    pub per_pixel: Vec<f64>,
}

impl NseReport {
    /// `nse` divided by the number of pixels.
    pub fn mean(&self) -> f64 {
        self.nse / self.per_pixel.len() as f64
    }
}

/// NSE over the complex permittivity `ε = 1 + χ`.
pub fn nse(estimate: &ContrastMap, truth: &ContrastMap) -> Result<NseReport> {
    if estimate.nx() != truth.nx() || estimate.ny() != truth.ny() {
        return Err(Error::Data(format!(
            "estimate is {}x{} but truth is {}x{}",
            estimate.nx(),
            estimate.ny(),
            truth.nx(),
            truth.ny()
        )));
    }
    let one = Complex64::new(1.0, 0.0);
    let per_pixel = estimate
        .values()
        .iter()
        .zip(truth.values())
        .enumerate()
        .map(|(l, (e, t))| {
            let eps = one + t;
            if eps.norm_sqr() == 0.0 {
                return Err(Error::Domain(format!("true permittivity vanishes at pixel {l}")));
            }
            Ok(((one + e) - eps).norm_sqr() / eps.norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NseReport {
        nse: per_pixel.iter().sum(),
        per_pixel,
    })
}
