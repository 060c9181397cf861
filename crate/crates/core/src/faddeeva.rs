//! Scaled complementary error function `w(z) = e^{-z^2} erfc(-iz)` on the
//! complex plane, plus the Dawson integral and the Fresnel primitive built
//! from it.
//!
//! For `Im z` bounded away from the real axis the evaluation uses the
//! pole-corrected trapezoidal sum
//!
//! ```text
//! w(z) ≈ (ih/π) Σ_n e^{-(nh)^2}/(z - nh)  +  2 e^{-z^2}/(1 - e^{-2πiz/h})
//! ```
//!
//! whose error is O(e^{-(π/h)^2}); with `h = 0.4` that is far below f64
//! resolution. Near the real axis the sum develops a cancellation between
//! the closest lattice term and the correction, so a short Taylor expansion
//! off the exact real-axis value is used instead. The lower half plane is
//! reached through `w(z) = 2 e^{-z^2} - w(-z)`.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

const H: f64 = 0.4;
const NTERMS: i64 = 17;
const Y_TAYLOR: f64 = 1e-3;

fn lattice_weights() -> &'static [f64; 2 * NTERMS as usize + 1] {
    static W: OnceLock<[f64; 2 * NTERMS as usize + 1]> = OnceLock::new();
    W.get_or_init(|| {
        let mut t = [0.0; 2 * NTERMS as usize + 1];
        for (i, v) in t.iter_mut().enumerate() {
            let n = i as i64 - NTERMS;
            *v = (-(n as f64 * H) * (n as f64 * H)).exp();
        }
        t
    })
}

// Rybicki's exponentially convergent lattice sum over odd integers.
fn dawson_rybicki(x: f64) -> f64 {
    let hd = 0.25;
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    let n0 = (x / hd).round() as i64;
    let n0 = if n0 % 2 == 0 { n0 + 1 } else { n0 };
    let mut sum = 0.0;
    let mut k = n0 - 27;
    if k % 2 == 0 {
        k += 1;
    }
    while k <= n0 + 27 {
        let d = x - k as f64 * hd;
        sum += (-d * d).exp() / k as f64;
        k += 2;
    }
    inv_sqrt_pi * sum
}

// 1/(2x) * (1 + 1/(2x^2) + 3/(2x^2)^2 * ...), usable from |x| ~ 5.5 up
fn dawson_asymptotic(x: f64) -> f64 {
    let ix2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..25 {
        term *= (2 * m - 1) as f64 * ix2;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * x)
}

/// Dawson integral `D(x) = e^{-x^2} ∫_0^x e^{u^2} du` for real `x`.
pub fn dawson(x: f64) -> f64 {
    if x.abs() < 6.2 {
        dawson_rybicki(x)
    } else {
        dawson_asymptotic(x)
    }
}

/// `w(x)` for real `x`: `e^{-x^2} + (2i/√π) D(x)`.
pub fn w_real(x: f64) -> Complex64 {
    Complex64::new((-x * x).exp(), 2.0 / PI.sqrt() * dawson(x))
}

// Taylor step off the real axis; derivatives from
// w' = -2 z w + 2i/sqrt(pi), w^{(k+1)} = -2 (z w^{(k)} + k w^{(k-1)}).
fn w_taylor(z: Complex64) -> Complex64 {
    let x = z.re;
    let zx = Complex64::new(x, 0.0);
    let mut dk_m1 = w_real(x);
    let mut dk = -2.0 * zx * dk_m1 + Complex64::new(0.0, 2.0 / PI.sqrt());
    let iy = Complex64::new(0.0, z.im);
    let mut pow = iy;
    let mut fact = 1.0;
    let mut sum = dk_m1 + pow * dk;
    for k in 1..16 {
        let dk_p1 = -2.0 * (zx * dk + k as f64 * dk_m1);
        fact *= (k + 1) as f64;
        pow *= iy;
        let term = pow * dk_p1 / fact;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
        dk_m1 = dk;
        dk = dk_p1;
    }
    sum
}

// Pole-corrected trapezoidal lattice sum, valid for Im z > 0.
fn w_lattice(z: Complex64) -> Complex64 {
    let weights = lattice_weights();
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, &e) in weights.iter().enumerate() {
        let n = i as i64 - NTERMS;
        sum += e / (z - n as f64 * H);
    }
    let mut w = Complex64::new(0.0, H / PI) * sum;
    if z.im < PI / H {
        w += 2.0 * (-z * z).exp() / (1.0 - (-Complex64::new(0.0, 2.0 * PI / H) * z).exp());
    }
    w
}

fn w_upper(z: Complex64) -> Complex64 {
    if z.im < Y_TAYLOR {
        w_taylor(z)
    } else {
        w_lattice(z)
    }
}

/// Faddeeva function `w(z)`.
///
/// Accurate to ~1e-13 relative for `Im z ≥ 0`. The lower half plane goes
/// through the reflection formula, which inherits the growth of `e^{-z^2}`.
pub fn faddeeva_w(z: Complex64) -> Complex64 {
    if z.im >= 0.0 {
        w_upper(z)
    } else {
        2.0 * (-z * z).exp() - w_upper(-z)
    }
}

/// Fresnel-type primitive `E(v) = ∫_0^v e^{iu^2} du` for real `v ≥ 0`.
pub fn fresnel_e(v: f64) -> Complex64 {
    if v < 0.5 {
        // term_m = i^m v^{2m+1} / (m! (2m+1))
        let iv2 = Complex64::new(0.0, v * v);
        let mut g = Complex64::new(v, 0.0);
        let mut sum = g;
        for m in 1..24 {
            g *= iv2 / m as f64;
            let term = g / (2 * m + 1) as f64;
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        let root = Complex64::from_polar(1.0, PI / 4.0);
        let phase = Complex64::new(0.0, v * v).exp();
        PI.sqrt() / 2.0 * root * (Complex64::new(1.0, 0.0) - phase * faddeeva_w(root * v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent Maclaurin Dawson for small arguments
    fn dawson_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..60 {
            term *= -2.0 * x * x / (2 * k + 1) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn dawson_matches_series_and_known_values() {
        for &x in &[0.05, 0.3, 0.5, 0.9, 1.3] {
            assert!((dawson(x) - dawson_series(x)).abs() < 1e-15);
        }
        // Abramowitz & Stegun 7.1.17-era reference value
        assert!((dawson(1.0) - 0.5380795069127684).abs() < 1e-14);
        assert!((dawson(2.0) - 0.3013403889237920).abs() < 1e-14);
        // odd function, and the two branches agree across the switch region
        assert!((dawson(-1.0) + dawson(1.0)).abs() < 1e-15);
        for &x in &[5.8, 6.0, 6.2, 6.5, 7.0] {
            assert!(
                (dawson_rybicki(x) - dawson_asymptotic(x)).abs() < 1e-14,
                "branch mismatch at x={x}"
            );
        }
    }

    #[test]
    fn anchors() {
        let w0 = faddeeva_w(Complex64::new(0.0, 0.0));
        assert!((w0 - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        // w(i) = erfcx(1) = e * erfc(1)
        let wi = faddeeva_w(Complex64::new(0.0, 1.0));
        assert!((wi.re - 0.42758357615580700442).abs() < 1e-13);
        assert!(wi.im.abs() < 1e-14);
        // w(1) = e^{-1} + 2i D(1)/sqrt(pi)
        let w1 = faddeeva_w(Complex64::new(1.0, 0.0));
        assert!((w1.re - (-1.0f64).exp()).abs() < 1e-14);
        assert!((w1.im - 0.60715770584139372911).abs() < 1e-13);
    }

    #[test]
    fn symmetry_in_upper_half_plane() {
        // w(-conj(z)) = conj(w(z))
        for &(x, y) in &[
            (0.7, 0.2),
            (3.3, 0.01),
            (1.1, 4.0),
            (6.8, 0.0005),
            (0.2, 12.0),
        ] {
            let z = Complex64::new(x, y);
            let a = faddeeva_w(Complex64::new(-x, y));
            let b = faddeeva_w(z).conj();
            assert!(
                (a - b).norm() < 1e-13 * (1.0 + b.norm()),
                "symmetry failed at {z}"
            );
        }
    }

    #[test]
    fn taylor_band_consistent_with_lattice_sum() {
        // both branches evaluated at the same points; the lattice sum loses
        // ~h/(pi*y)*eps to cancellation this close to the axis, nothing more
        for &x in &[0.3, 1.7, 4.4, 9.9, -2.2] {
            for &y in &[5e-4, 1e-3, 2e-3] {
                let z = Complex64::new(x, y);
                let a = w_taylor(z);
                let b = w_lattice(z);
                assert!(
                    (a - b).norm() < 1e-11 * (1.0 + a.norm()),
                    "branch mismatch at {z}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn asymptotic_regime() {
        // w(z) ~ i/(sqrt(pi) z) (1 + 1/(2 z^2) + 3/(4 z^4))
        for &(x, y) in &[(80.0, 80.0), (-200.0, 200.0), (0.0, 150.0)] {
            let z = Complex64::new(x, y);
            let z2 = z * z;
            let expect =
                Complex64::new(0.0, 1.0) / (PI.sqrt() * z) * (1.0 + 0.5 / z2 + 0.75 / (z2 * z2));
            let got = faddeeva_w(z);
            assert!((got - expect).norm() < 1e-12 * expect.norm());
        }
    }

    #[test]
    fn lower_half_plane_reflection() {
        let z = Complex64::new(1.3, -0.4);
        let direct = faddeeva_w(z);
        let reflected = 2.0 * (-z * z).exp() - faddeeva_w(-z);
        assert!((direct - reflected).norm() < 1e-13);
    }

    #[test]
    fn fresnel_small_and_large() {
        // E(v) ~ v for small v
        let e = fresnel_e(1e-4);
        assert!((e.re - 1e-4).abs() < 1e-16);
        // E(inf) = sqrt(pi)/2 * e^{i pi/4}
        let e_lim = PI.sqrt() / 2.0 * Complex64::from_polar(1.0, PI / 4.0);
        assert!((fresnel_e(60.0) - e_lim).norm() < 0.01);
        // series/w-form seam: difference is the true increment plus roundoff
        let a = fresnel_e(0.4999);
        let b = fresnel_e(0.5001);
        let increment = 2e-4 * Complex64::new(0.0, 0.25).exp();
        assert!((b - a - increment).norm() < 1e-12);
    }

    #[test]
    fn fresnel_derivative_property() {
        // numerical derivative of E at v equals e^{i v^2}
        for &v in &[0.3, 0.8, 2.0, 5.0] {
            let dv = 1e-5;
            let num = (fresnel_e(v + dv) - fresnel_e(v - dv)) / (2.0 * dv);
            let expect = Complex64::new(0.0, v * v).exp();
            assert!((num - expect).norm() < 1e-7, "at v={v}");
        }
    }
}
