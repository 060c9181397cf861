//! Principal-branch complex square root and the fixed complex constants of
//! the charge equation.
//!
//! Every square root in the crate goes through [`sqrt_branch`]: cut along the
//! negative real axis, `√(ρ e^{iθ}) = √ρ e^{iθ/2}` with `θ ∈ (−π, π]`, so the
//! cut itself belongs to the upper side (`√(−1) = i`).

use num_complex::Complex64;
use std::f64::consts::PI;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Square root with cut on the negative real axis and `θ = π` on the cut.
///
/// A negative-zero imaginary part is normalized to `+0` first; without this,
/// `atan2` would put points of the cut on the lower sheet.
pub fn sqrt_branch(z: Complex64) -> Complex64 {
    let z = if z.im == 0.0 {
        Complex64::new(z.re, 0.0)
    } else {
        z
    };
    z.sqrt()
}

/// `z^{-3/2}` on the same branch, via `1 / (z · √z)`.
pub fn inv_pow_3_2(z: Complex64) -> Complex64 {
    (z * sqrt_branch(z)).finv()
}

/// `√i = e^{iπ/4}`.
pub fn sqrt_i() -> Complex64 {
    Complex64::from_polar(1.0, PI / 4.0)
}

/// `√(-i) = e^{-iπ/4}`.
pub fn sqrt_neg_i() -> Complex64 {
    Complex64::from_polar(1.0, -PI / 4.0)
}

/// The coupling constant `4√(πi) = 4√π e^{iπ/4}` multiplying the Abel
/// convolution in the charge equation.
pub fn four_sqrt_pi_i() -> Complex64 {
    4.0 * PI.sqrt() * sqrt_i()
}

/// `√(ωn − ip)`, the row denominator building block of the mode system.
///
/// For `Re p > 0` the argument lies strictly below the real axis, so the
/// principal branch agrees with the boundary values of the Laplace transform
/// taken from the right half plane.
pub fn sqrt_omega_n_minus_ip(omega: f64, n: i64, p: Complex64) -> Complex64 {
    sqrt_branch(Complex64::new(omega * n as f64 + p.im, -p.re))
}
