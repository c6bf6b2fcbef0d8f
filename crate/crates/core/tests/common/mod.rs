//! Shared helpers for the integration and acceptance tests.
#![allow(dead_code)]

use num_complex::Complex64;

/// Scattered field of a homogeneous dielectric cylinder centred at the
/// origin, illuminated by a line source with `E_inc = H₀⁽²⁾(k₀|r − r_s|)/(4j)`
/// (time factor `exp(+jωt)`), by the cylindrical-harmonic series.
///
/// Written against libm directly so it shares no code with the solver.
pub struct CylinderSeries {
    pub k0: f64,
    pub eps_r: f64,
    pub radius: f64,
    pub orders: i32,
}

fn h2(n: i32, x: f64) -> Complex64 {
    Complex64::new(libm::jn(n, x), -libm::yn(n, x))
}

fn h2p(n: i32, x: f64) -> Complex64 {
    0.5 * (h2(n - 1, x) - h2(n + 1, x))
}

fn jp(n: i32, x: f64) -> f64 {
    0.5 * (libm::jn(n - 1, x) - libm::jn(n + 1, x))
}

impl CylinderSeries {
    pub fn new(k0: f64, eps_r: f64, radius: f64) -> Self {
        let x = k0 * eps_r.sqrt() * radius;
        Self {
            k0,
            eps_r,
            radius,
            orders: (x + 4.0 * x.cbrt() + 12.0).ceil() as i32,
        }
    }

    /// Exterior coefficient `c_n` from continuity of `E` and `∂E/∂ρ`.
    pub fn coefficient(&self, n: i32) -> Complex64 {
        let k1 = self.k0 * self.eps_r.sqrt();
        let (x0, x1) = (self.k0 * self.radius, k1 * self.radius);
        let num = k1 * jp(n, x1) * libm::jn(n, x0) - self.k0 * libm::jn(n, x1) * jp(n, x0);
        let den = self.k0 * libm::jn(n, x1) * h2p(n, x0) - k1 * jp(n, x1) * h2(n, x0);
        num / den
    }

    /// Scattered field at polar position `(rho, phi)` for a source at
    /// `(rho_s, phi_s)`; both outside the cylinder.
    pub fn scattered(&self, rho: f64, phi: f64, rho_s: f64, phi_s: f64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for n in -self.orders..=self.orders {
            let phase = Complex64::from_polar(1.0, n as f64 * (phi - phi_s));
            sum += self.coefficient(n) * h2(n, self.k0 * rho) * h2(n, self.k0 * rho_s) * phase;
        }
        sum / Complex64::new(0.0, 4.0)
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
