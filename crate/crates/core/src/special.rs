//! Integer-order Bessel and Hankel functions of real argument.

use num_complex::Complex64;

/// Bessel function of the first kind, `J_n(x)`, any integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

/// Bessel function of the second kind, `Y_n(x)`, any integer order, `x > 0`.
pub fn bessel_y(n: i32, x: f64) -> f64 {
    libm::yn(n, x)
}

/// Hankel function of the second kind, `H_n^(2)(x) = J_n(x) − j Y_n(x)`.
///
/// With the `exp(+jωt)` convention this is the outgoing cylindrical wave.
pub fn hankel2(n: i32, x: f64) -> Complex64 {
    Complex64::new(bessel_j(n, x), -bessel_y(n, x))
}

/// Derivative `J_n'(x)` via `(J_{n−1} − J_{n+1}) / 2`.
pub fn bessel_j_prime(n: i32, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

/// Derivative `H_n^(2)'(x)`.
pub fn hankel2_prime(n: i32, x: f64) -> Complex64 {
    0.5 * (hankel2(n - 1, x) - hankel2(n + 1, x))
}
