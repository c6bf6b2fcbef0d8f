//! Method-of-Moments forward model for 2D TM scattering.
//!
//! Pulse basis functions on square cells with point collocation at the cell
//! centres. The free-space Green's function under `exp(+jωt)` is
//! `g(r, r′) = H₀⁽²⁾(k₀|r − r′|) / (4j)`.
//!
//! Currents are carried as equivalent contrast sources `W = χ E` (V/m); a
//! physical current density is `J = jωε₀ W`. In these units the `jωμ` of the
//! volume integral and the `1/(jωε₀)` of the constitutive relation combine into
//! `k₀²`, so both operators below map `W` straight to a field:
//!
//! - `G_D[m, n] = k₀² ∫_cell_n g(r_m, r′) dr′` (domain to domain),
//! - `G_S[q, n] = k₀² ∫_cell_n g(r_q, r′) dr′` (domain to receivers).
//!
//! Off-diagonal entries use the midpoint rule (`k₀² Δ² g`). The singular
//! self-cell integral is done analytically over the disk of equal area
//! (radius `a = Δ/√π`):
//! `G_D[n, n] = (π k₀ a / (2j)) H₁⁽²⁾(k₀ a) − 1`.
//!
//! The state equation is `M[W] = W/χ − G_D W = λ E_inc` on the cells with
//! nonzero contrast. It is the classical `W/(jωε₀χ) − jωμ∫gJ` operator written
//! for `W = J/(jωε₀)`.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ContrastMap, FrequencySet, ImagingGrid, SensorArray};
use crate::linalg::{
    axpy, matvec, matvec_adjoint, matvec_adjoint_sub, matvec_sub, norm, norm_sq, CMatrix, CVector,
    KpMap,
};
use crate::special::hankel2;
use crate::{Error, Result};

/// Cells with `|χ|` at or below this value are treated as background.
pub const ACTIVE_THRESHOLD: f64 = 1e-12;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Green's function `g(ρ) = H₀⁽²⁾(k₀ρ)/(4j)`.
pub fn greens_function(k0: f64, rho: f64) -> Complex64 {
    hankel2(0, k0 * rho) / (4.0 * J)
}

/// `k₀² ∫_disk(a) g(|r − r′|) dr′` evaluated at the disk centre.
pub fn self_cell_integral(k0: f64, a: f64) -> Complex64 {
    let x = k0 * a;
    PI * x / (2.0 * J) * hankel2(1, x) - 1.0
}

/// Discretised radiation operators per frequency.
#[derive(Debug, Clone)]
pub struct GreensOperators {
    wavenumbers: Vec<f64>,
    cell_area: f64,
    domain: Vec<CMatrix>,
    receivers: Vec<Vec<CMatrix>>,
    group_of_tx: Vec<usize>,
    rx_indices: Vec<Vec<usize>>,
}

impl GreensOperators {
    pub fn n_freq(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn n_tx(&self) -> usize {
        self.group_of_tx.len()
    }

    pub fn n_cells(&self) -> usize {
        self.domain[0].nrows()
    }

    pub fn wavenumber(&self, k: usize) -> f64 {
        self.wavenumbers[k]
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    /// `G_D` at frequency `k` (symmetric, `N × N`).
    pub fn domain(&self, k: usize) -> &CMatrix {
        &self.domain[k]
    }

    /// `G_S` restricted to the receivers that observe transmitter `p`.
    pub fn receivers(&self, k: usize, p: usize) -> &CMatrix {
        &self.receivers[k][self.group_of_tx[p]]
    }

    /// Receiver-set group of transmitter `p`. Transmitters in the same group
    /// share `G_S` and its SVD.
    pub fn group_of(&self, p: usize) -> usize {
        self.group_of_tx[p]
    }

    pub fn n_groups(&self) -> usize {
        self.rx_indices.len()
    }

    pub fn group_receivers(&self, group: usize) -> &[usize] {
        &self.rx_indices[group]
    }

    pub fn group_operator(&self, k: usize, group: usize) -> &CMatrix {
        &self.receivers[k][group]
    }

    pub fn rx_count(&self, p: usize) -> usize {
        self.receivers(0, p).nrows()
    }
}

/// Assembles `G_D` and `G_S` for every frequency.
pub fn build_greens(
    grid: &ImagingGrid,
    sensors: &SensorArray,
    freqs: &FrequencySet,
) -> Result<GreensOperators> {
    sensors.validate_against(grid)?;
    let (groups, group_of_tx) = sensors.receiver_groups();
    let n = grid.n_cells();
    let area = grid.cell_area();
    let centers = grid.cell_centers();
    let (nx, ny) = (grid.nx(), grid.ny());
    let d = grid.cell_size();

    let per_freq: Vec<(CMatrix, Vec<CMatrix>)> = (0..freqs.len())
        .into_par_iter()
        .map(|k| {
            let k0 = freqs.wavenumber(k);
            let scale = k0 * k0 * area;
            // The domain operator only depends on the cell offset.
            let mut table = vec![Complex64::new(0.0, 0.0); nx * ny];
            for oy in 0..ny {
                for ox in 0..nx {
                    table[oy * nx + ox] = if ox == 0 && oy == 0 {
                        self_cell_integral(k0, grid.equivalent_radius())
                    } else {
                        let rho = d * (ox as f64).hypot(oy as f64);
                        scale * greens_function(k0, rho)
                    };
                }
            }
            let domain = CMatrix::from_fn(n, n, |m, l| {
                let (mx, my) = (m % nx, m / nx);
                let (lx, ly) = (l % nx, l / nx);
                table[mx.abs_diff(lx) + nx * my.abs_diff(ly)]
            });
            let rx = sensors.rx_positions();
            let full = CMatrix::from_fn(rx.len(), n, |q, l| {
                scale * greens_function(k0, rx[q].distance(&centers[l]))
            });
            let receivers = groups
                .iter()
                .map(|set| CMatrix::from_fn(set.len(), n, |i, l| full[(set[i], l)]))
                .collect();
            (domain, receivers)
        })
        .collect();

    let (domain, receivers) = per_freq.into_iter().unzip();
    Ok(GreensOperators {
        wavenumbers: (0..freqs.len()).map(|k| freqs.wavenumber(k)).collect(),
        cell_area: area,
        domain,
        receivers,
        group_of_tx,
        rx_indices: groups,
    })
}

/// Line-source incident field `E_inc(r) = H₀⁽²⁾(k₀|r − r_tx|)/(4j)` at every
/// cell centre, per `(k, p)`.
pub fn incident_field(
    sensors: &SensorArray,
    grid: &ImagingGrid,
    freqs: &FrequencySet,
) -> KpMap<CVector> {
    let centers = grid.cell_centers();
    KpMap::from_fn(freqs.len(), sensors.n_tx(), |k, p| {
        let k0 = freqs.wavenumber(k);
        let tx = sensors.tx_positions()[p];
        CVector::from_iterator(
            centers.len(),
            centers.iter().map(|c| greens_function(k0, c.distance(&tx))),
        )
    })
}

/// Incident field at the receivers observing each transmitter.
pub fn incident_at_receivers(
    sensors: &SensorArray,
    freqs: &FrequencySet,
) -> Result<KpMap<CVector>> {
    let mut out = Vec::with_capacity(freqs.len() * sensors.n_tx());
    for k in 0..freqs.len() {
        let k0 = freqs.wavenumber(k);
        for p in 0..sensors.n_tx() {
            let tx = sensors.tx_positions()[p];
            let mut values = Vec::new();
            for q in sensors.receivers_of(p) {
                let rho = sensors.rx_positions()[q].distance(&tx);
                if rho < 1e-9 {
                    return Err(Error::Geometry(format!(
                        "receiver {q} coincides with transmitter {p}"
                    )));
                }
                values.push(greens_function(k0, rho));
            }
            out.push(CVector::from_vec(values));
        }
    }
    Ok(KpMap::from_vec(freqs.len(), sensors.n_tx(), out))
}

/// Indices of cells with nonzero contrast.
pub fn active_set(chi: &ContrastMap) -> Vec<usize> {
    chi.values()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > ACTIVE_THRESHOLD)
        .map(|(i, _)| i)
        .collect()
}

/// Applies `M[W] = W/χ − G_D W` at frequency `k`.
///
/// Background cells are outside the operator's domain: `W` must vanish there
/// and the output is zero on them.
pub fn apply_state_operator(
    w: &[Complex64],
    chi: &ContrastMap,
    greens: &GreensOperators,
    k: usize,
) -> Result<CVector> {
    let n = greens.n_cells();
    if w.len() != n || chi.len() != n {
        return Err(Error::Data(format!(
            "state operator expects {n} cells, got W={} chi={}",
            w.len(),
            chi.len()
        )));
    }
    let active = active_set(chi);
    let mut is_active = vec![false; n];
    for &i in &active {
        is_active[i] = true;
    }
    if let Some(i) = (0..n).find(|&i| !is_active[i] && w[i].norm() > 0.0) {
        return Err(Error::Domain(format!(
            "current is nonzero on background cell {i} where the contrast vanishes"
        )));
    }
    let w_active: Vec<Complex64> = active.iter().map(|&i| w[i]).collect();
    let gw = matvec_sub(greens.domain(k), &active, &w_active);
    let mut out = CVector::zeros(n);
    for ((&i, wi), gwi) in active.iter().zip(&w_active).zip(&gw) {
        out[i] = wi / chi.values()[i] - gwi;
    }
    Ok(out)
}

/// `G_D W` (domain) or `G_S W` (receivers of transmitter `p`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiationTarget {
    Domain,
    Receivers { p: usize },
}

pub fn radiate(
    w: &[Complex64],
    greens: &GreensOperators,
    k: usize,
    target: RadiationTarget,
) -> CVector {
    match target {
        RadiationTarget::Domain => matvec(greens.domain(k), w),
        RadiationTarget::Receivers { p } => matvec(greens.receivers(k, p), w),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// `‖b − A W‖ / ‖b‖` for the contrast-scaled system `(I − χ G_D) W = χ E_inc`.
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// Contrast source on the full grid (zero on background cells).
    pub currents: CVector,
    /// `G_S W` at the receivers of the transmitter.
    pub scattered: CVector,
    pub report: SolverReport,
}

/// Solves the state equation for transmitter `p` at frequency `k` and
/// radiates the result to the receivers.
///
/// The system is solved for a unit calibration factor and scaled by `lambda`
/// afterwards, so the solution is exactly linear in `lambda`.
pub fn forward_solve(
    chi: &ContrastMap,
    lambda: Complex64,
    greens: &GreensOperators,
    incident: &CVector,
    k: usize,
    p: usize,
    settings: &SolverSettings,
) -> Result<ForwardSolution> {
    forward_solve_from(chi, lambda, greens, incident, k, p, settings, None)
}

/// [`forward_solve`] with an optional initial guess for the unit-λ current.
#[allow(clippy::too_many_arguments)]
pub fn forward_solve_from(
    chi: &ContrastMap,
    lambda: Complex64,
    greens: &GreensOperators,
    incident: &CVector,
    k: usize,
    p: usize,
    settings: &SolverSettings,
    guess: Option<&CVector>,
) -> Result<ForwardSolution> {
    let n = greens.n_cells();
    if chi.len() != n || incident.len() != n {
        return Err(Error::Data(format!(
            "forward solve expects {n} cells, got chi={} incident={}",
            chi.len(),
            incident.len()
        )));
    }
    if chi.values().iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("contrast contains non-finite values".into()));
    }
    if chi.values().iter().any(|c| c.re < -ACTIVE_THRESHOLD) {
        warn!("contrast has cells with relative permittivity below 1; solving anyway");
    }
    let active = active_set(chi);
    let mut currents = CVector::zeros(n);
    if active.is_empty() {
        return Ok(ForwardSolution {
            currents,
            scattered: CVector::zeros(greens.rx_count(p)),
            report: SolverReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        });
    }
    let op = ScaledStateOperator::new(greens.domain(k), chi, &active);
    let rhs: Vec<Complex64> = active
        .iter()
        .map(|&i| chi.values()[i] * incident[i])
        .collect();
    let x0 = guess.map(|g| active.iter().map(|&i| g[i]).collect::<Vec<_>>());
    let (x, report) = cgnr(&op, &rhs, x0, settings);
    for (&i, xi) in active.iter().zip(&x) {
        currents[i] = lambda * xi;
    }
    let scattered = radiate(currents.as_slice(), greens, k, RadiationTarget::Receivers { p });
    Ok(ForwardSolution {
        currents,
        scattered,
        report,
    })
}

/// `A = I − diag(χ) G_D` on the active cells, i.e. `diag(χ) M`.
struct ScaledStateOperator<'a> {
    g: &'a CMatrix,
    chi: Vec<Complex64>,
    active: &'a [usize],
    full: bool,
}

impl<'a> ScaledStateOperator<'a> {
    fn new(g: &'a CMatrix, chi: &ContrastMap, active: &'a [usize]) -> Self {
        Self {
            g,
            chi: active.iter().map(|&i| chi.values()[i]).collect(),
            active,
            full: active.len() == g.nrows(),
        }
    }

    fn g_apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        if self.full {
            matvec(self.g, x).data.into()
        } else {
            matvec_sub(self.g, self.active, x)
        }
    }

    fn g_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        if self.full {
            matvec_adjoint(self.g, x).data.into()
        } else {
            matvec_adjoint_sub(self.g, self.active, x)
        }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let gx = self.g_apply(x);
        x.iter()
            .zip(&gx)
            .zip(&self.chi)
            .map(|((xi, gi), ci)| xi - ci * gi)
            .collect()
    }

    fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64> {
        let scaled: Vec<Complex64> = r.iter().zip(&self.chi).map(|(ri, ci)| ci.conj() * ri).collect();
        let g = self.g_adjoint(&scaled);
        r.iter().zip(&g).map(|(ri, gi)| ri - gi).collect()
    }
}

/// Conjugate gradients on the normal equations `A^H A x = A^H b`.
fn cgnr(
    op: &ScaledStateOperator<'_>,
    b: &[Complex64],
    x0: Option<Vec<Complex64>>,
    settings: &SolverSettings,
) -> (Vec<Complex64>, SolverReport) {
    let b_norm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); b.len()]);
    if b_norm == 0.0 {
        let zero = vec![Complex64::new(0.0, 0.0); b.len()];
        return (
            zero,
            SolverReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let ax = op.apply(&x);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = op.adjoint(&r);
    let mut dir = z.clone();
    let mut z_sq = norm_sq(&z);
    let mut rel = norm(&r) / b_norm;
    let mut iterations = 0;
    while rel > settings.tolerance && iterations < settings.max_iterations && z_sq > 0.0 {
        let w = op.apply(&dir);
        let w_sq = norm_sq(&w);
        if w_sq == 0.0 {
            break;
        }
        let alpha = Complex64::new(z_sq / w_sq, 0.0);
        axpy(&mut x, alpha, &dir);
        axpy(&mut r, -alpha, &w);
        z = op.adjoint(&r);
        let z_sq_new = norm_sq(&z);
        let beta = z_sq_new / z_sq;
        for (di, zi) in dir.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
        z_sq = z_sq_new;
        rel = norm(&r) / b_norm;
        iterations += 1;
    }
    (
        x,
        SolverReport {
            iterations,
            relative_residual: rel,
            converged: rel <= settings.tolerance,
        },
    )
}

/// Full forward simulation of every `(k, p)` pair.
#[derive(Debug, Clone)]
pub struct FieldSet {
    /// Contrast sources `W` per `(k, p)`.
    pub currents: KpMap<CVector>,
    /// Scattered field at the receivers, `G_S W`.
    pub scattered: KpMap<CVector>,
    /// Scattered field inside the domain, `G_D W`.
    pub domain_scattered: KpMap<CVector>,
    pub reports: KpMap<SolverReport>,
}

impl FieldSet {
    pub fn all_converged(&self) -> bool {
        self.reports.values().iter().all(|r| r.converged)
    }
}

/// Runs [`forward_solve`] for every `(k, p)`; pairs are independent and solved
/// in parallel.
pub fn simulate(
    chi: &ContrastMap,
    lambdas: &KpMap<Complex64>,
    greens: &GreensOperators,
    incident: &KpMap<CVector>,
    settings: &SolverSettings,
) -> Result<FieldSet> {
    let solutions = KpMap::try_par_from_fn(incident.n_freq(), incident.n_tx(), |k, p| {
        forward_solve(chi, *lambdas.get(k, p), greens, incident.get(k, p), k, p, settings)
    })?;
    let domain_scattered = solutions.par_map(|(k, _), s| {
        radiate(s.currents.as_slice(), greens, k, RadiationTarget::Domain)
    });
    Ok(FieldSet {
        currents: solutions.map(|_, s| s.currents.clone()),
        scattered: solutions.map(|_, s| s.scattered.clone()),
        domain_scattered,
        reports: solutions.map(|_, s| s.report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Point2, SceneSpec};
    use crate::linalg::relative_error;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup(n: usize) -> (ImagingGrid, SensorArray, FrequencySet, GreensOperators) {
        let grid = ImagingGrid::square(n, 0.08).unwrap();
        let sensors = SensorArray::ring(0.8, 4, 24).unwrap();
        let freqs = FrequencySet::new(vec![3e9]).unwrap();
        let greens = build_greens(&grid, &sensors, &freqs).unwrap();
        (grid, sensors, freqs, greens)
    }

    #[test]
    fn self_term_small_cell_limit() {
        // Small-argument expansion: −(x²/2)(ln(x/2) + γ − ½) − jπx²/4.
        let x = 1e-3;
        let s = self_cell_integral(1.0, x);
        let gamma = 0.577_215_664_901_532_9;
        let expect = c(-0.5 * x * x * ((x / 2.0).ln() + gamma - 0.5), -PI * x * x / 4.0);
        assert!((s - expect).norm() < 1e-5 * expect.norm());
    }

    #[test]
    fn self_term_matches_radial_quadrature() {
        // k₀² ∫₀^a 2πρ g(ρ) dρ by composite Gauss–Legendre on a graded mesh.
        let (k0, a) = (60.0, 0.004);
        let nodes = [
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ];
        let mut sum = c(0.0, 0.0);
        let panels = 400;
        for i in 0..panels {
            let (lo, hi) = (a * (i as f64 / panels as f64).powi(3), a * ((i + 1) as f64 / panels as f64).powi(3));
            for (t, w) in nodes {
                let rho = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
                sum += 0.5 * (hi - lo) * w * 2.0 * PI * rho * greens_function(k0, rho);
            }
        }
        let quad = k0 * k0 * sum;
        let exact = self_cell_integral(k0, a);
        assert!((quad - exact).norm() < 1e-8 * exact.norm(), "{quad} vs {exact}");
    }

    #[test]
    fn domain_operator_is_symmetric_and_finite() {
        let (_, _, _, g) = setup(6);
        let d = g.domain(0);
        let scale = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                assert!(d[(i, j)].is_finite());
                assert!((d[(i, j)] - d[(j, i)]).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn sensor_inside_domain_fails() {
        let grid = ImagingGrid::square(4, 0.2).unwrap();
        let s = SensorArray::new(vec![Point2::new(0.0, 0.0)], vec![Point2::new(1.0, 0.0)]).unwrap();
        let f = FrequencySet::new(vec![1e9]).unwrap();
        assert!(matches!(build_greens(&grid, &s, &f), Err(Error::Geometry(_))));
    }

    #[test]
    fn receiver_operator_decays_like_inverse_sqrt_distance() {
        let grid = ImagingGrid::square(2, 0.02).unwrap();
        let dists: Vec<f64> = (0..12).map(|i| 2.0 * 1.3f64.powi(i)).collect();
        let rx = dists.iter().map(|&d| Point2::new(d, 0.0)).collect();
        let s = SensorArray::new(vec![Point2::new(-1.0, 0.0)], rx).unwrap();
        let f = FrequencySet::new(vec![3e9]).unwrap();
        let g = build_greens(&grid, &s, &f).unwrap();
        let gs = g.receivers(0, 0);
        let xs: Vec<f64> = dists.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = (0..dists.len()).map(|q| gs[(q, 0)].norm().ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 12.0, ys.iter().sum::<f64>() / 12.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn incident_field_symmetry_and_decay() {
        let grid = ImagingGrid::square(3, 0.03).unwrap();
        let s = SensorArray::new(
            vec![Point2::new(1.0, 0.0), Point2::new(-1.0, 0.0)],
            vec![Point2::new(0.0, 1.0)],
        )
        .unwrap();
        let f = FrequencySet::new(vec![2e9]).unwrap();
        let inc = incident_field(&s, &grid, &f);
        // The centre cell is equidistant from both sources.
        let mid = grid.index(1, 1);
        assert!((inc.get(0, 0)[mid] - inc.get(0, 1)[mid]).norm() < 1e-15);

        let k0 = f.wavenumber(0);
        let mags: Vec<f64> = (1..50).map(|i| greens_function(k0, 0.05 * i as f64).norm()).collect();
        assert!(mags.windows(2).all(|w| w[1] < w[0]));

        // Far-field phase advance along a ray ≈ k₀Δr.
        let (r1, r2) = (3.0, 3.013);
        let ph = (greens_function(k0, r1) / greens_function(k0, r2)).arg();
        let expect = k0 * (r2 - r1);
        assert!((ph - expect).abs() < 0.01 * expect);
    }

    #[test]
    fn state_operator_linearity_and_dense_oracle() {
        let (grid, _, freqs, g) = setup(2);
        let chi = ContrastMap::new(&grid, vec![c(0.5, 0.0), c(2.0, -0.1), c(1.0, 0.0), c(0.3, 0.2)]).unwrap();
        let zero = apply_state_operator(&[c(0.0, 0.0); 4], &chi, &g, 0).unwrap();
        assert!(zero.iter().all(|v| v.norm() == 0.0));

        let w1 = [c(1.0, 2.0), c(-0.5, 0.1), c(0.0, 1.0), c(2.0, -1.0)];
        let w2 = [c(0.3, 0.0), c(1.0, 1.0), c(-1.0, 0.5), c(0.0, 0.0)];
        let (a, b) = (c(0.7, -1.3), c(-2.0, 0.4));
        let combo: Vec<_> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply_state_operator(&combo, &chi, &g, 0).unwrap();
        let m1 = apply_state_operator(&w1, &chi, &g, 0).unwrap();
        let m2 = apply_state_operator(&w2, &chi, &g, 0).unwrap();
        let rhs = m1.clone() * a + m2 * b;
        assert!(relative_error(lhs.as_slice(), rhs.as_slice()) < 1e-12);

        // Dense assembly in the physical current-density form:
        // M_J = diag(1/(jωε₀χ)) − G_J with G_J = G_D/(jωε₀), and J = jωε₀ W.
        let jwe = J * freqs.angular(0) * crate::domain::PhysicalConstants::VACUUM.eps0;
        let dense = CMatrix::from_fn(4, 4, |i, j| {
            let diag = if i == j { 1.0 / (jwe * chi.values()[i]) } else { c(0.0, 0.0) };
            diag - g.domain(0)[(i, j)] / jwe
        });
        let current = CVector::from_iterator(4, w1.iter().map(|w| jwe * w));
        let expect = &dense * current;
        assert!(relative_error(m1.as_slice(), expect.as_slice()) < 1e-12);
    }

    #[test]
    fn state_operator_rejects_current_on_background() {
        let (grid, _, _, g) = setup(2);
        let chi = ContrastMap::new(&grid, vec![c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.3, 0.0)]).unwrap();
        let w = [c(1.0, 0.0), c(1e-3, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(apply_state_operator(&w, &chi, &g, 0), Err(Error::Domain(_))));
        let w_ok = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = apply_state_operator(&w_ok, &chi, &g, 0).unwrap();
        assert_eq!(out[1], c(0.0, 0.0));
    }

    #[test]
    fn empty_scene_has_no_scattering() {
        let (grid, sensors, freqs, g) = setup(4);
        let inc = incident_field(&sensors, &grid, &freqs);
        let chi = ContrastMap::zeros(&grid);
        let sol = forward_solve(&chi, c(1.0, 0.0), &g, inc.get(0, 0), 0, 0, &SolverSettings::default()).unwrap();
        assert!(sol.currents.iter().all(|v| v.norm() == 0.0));
        assert!(sol.scattered.iter().all(|v| v.norm() == 0.0));
        assert!(sol.report.converged);
    }

    #[test]
    fn forward_solution_is_linear_in_lambda() {
        let (grid, sensors, freqs, g) = setup(8);
        let inc = incident_field(&sensors, &grid, &freqs);
        let scene = SceneSpec {
            primitives: vec![crate::domain::Primitive::Circle { center: [0.0, 0.0], radius: 0.03, eps_r: 2.5 }],
        };
        let chi = crate::domain::rasterize(&scene, &grid).unwrap();
        let s = SolverSettings::default();
        let base = c(0.8, -0.3);
        let one = forward_solve(&chi, base, &g, inc.get(0, 1), 0, 1, &s).unwrap();
        let two = forward_solve(&chi, 2.0 * base, &g, inc.get(0, 1), 0, 1, &s).unwrap();
        let scaled = one.scattered.map(|v| 2.0 * v);
        assert!(relative_error(two.scattered.as_slice(), scaled.as_slice()) < 1e-12);
        let factor = c(-1.7, 3.1);
        let other = forward_solve(&chi, factor * base, &g, inc.get(0, 1), 0, 1, &s).unwrap();
        let scaled = one.scattered.map(|v| factor * v);
        assert!(relative_error(other.scattered.as_slice(), scaled.as_slice()) < 1e-12);
        assert!(one.report.converged && one.report.relative_residual <= s.tolerance);
    }

    #[test]
    fn radiate_matches_direct_summation() {
        let grid = ImagingGrid::new(3, 1, 0.03, 0.01).unwrap();
        let s = SensorArray::new(vec![Point2::new(1.0, 0.0)], vec![Point2::new(0.0, 0.7), Point2::new(-0.5, -0.5)]).unwrap();
        let f = FrequencySet::new(vec![5e9]).unwrap();
        let g = build_greens(&grid, &s, &f).unwrap();
        let w = [c(1.0, 0.5), c(-0.2, 2.0), c(0.7, -0.7)];
        let out = radiate(&w, &g, 0, RadiationTarget::Receivers { p: 0 });
        // jωμ Σ g(r_q, r_n) J_n Δ² with J = jωε₀ W.
        let consts = crate::domain::PhysicalConstants::VACUUM;
        let omega = f.angular(0);
        let k0 = f.wavenumber(0);
        for (q, rq) in s.rx_positions().iter().enumerate() {
            let mut sum = c(0.0, 0.0);
            for (n, rn) in grid.cell_centers().iter().enumerate() {
                let current = J * omega * consts.eps0 * w[n];
                sum += -J * omega * consts.mu0 * greens_function(k0, rq.distance(rn)) * current * grid.cell_area();
            }
            assert!((out[q] - sum).norm() < 1e-12 * sum.norm(), "{} vs {}", out[q], sum);
        }
        let zero = radiate(&[c(0.0, 0.0); 3], &g, 0, RadiationTarget::Domain);
        assert!(zero.iter().all(|v| v.norm() == 0.0));
    }
}
