//! Everything built from the free propagator and the initial state: the
//! bound state itself, the forcing amplitude `(U_0(t) psi)(0)` driving the
//! charge equation, the free-evolution autocorrelation `Z_1(t)`, the free
//! kernel, pointwise free evolution at a radius, and the Laplace-domain data
//! `f~(p)`, `Z~_2(p)`.
//!
//! Units are natural: `hbar = 1`, `2m = 1`, so the free Hamiltonian is
//! `-Laplacian` and the coupling `alpha` carries 1/length. For a bound state
//! of strength `alpha < 0` write `beta = 4 pi |alpha|`; the recurring complex
//! argument is `z_c(t) = i beta sqrt(i t)`, which lives on the ray
//! `arg z = 3 pi/4` where the Faddeeva function is well behaved.

use crate::branch::{inv_pow_3_2, sqrt_branch, sqrt_i};
use crate::charge_solver::TimeGrid;
use crate::faddeeva::faddeeva_w;
use crate::quadrature::{self, QuadError};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeDynError {
    #[error("bound state needs alpha < 0, got {0}")]
    NotBound(f64),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("time must be positive, got {0}")]
    BadTime(f64),
    #[error("p = 0 is a branch point of f~")]
    BranchPointAtZero,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Bound state of the static interaction of strength `alpha < 0`:
/// `phi(r) = sqrt(2|alpha|) e^{4 pi alpha r} / r`, energy `-(4 pi alpha)^2`.
#[derive(Debug, Clone, Copy)]
pub struct BoundState {
    alpha: f64,
}

impl BoundState {
    pub fn new(alpha: f64) -> Result<Self, FreeDynError> {
        if alpha < 0.0 {
            Ok(BoundState { alpha })
        } else {
            Err(FreeDynError::NotBound(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `beta = 4 pi |alpha|`, the inverse decay length.
    pub fn beta(&self) -> f64 {
        -4.0 * PI * self.alpha
    }

    pub fn energy(&self) -> f64 {
        -(4.0 * PI * self.alpha) * (4.0 * PI * self.alpha)
    }

    pub fn eval(&self, r: f64) -> Result<f64, FreeDynError> {
        if r <= 0.0 {
            return Err(FreeDynError::BadRadius(r));
        }
        Ok((2.0 * self.alpha.abs()).sqrt() * (4.0 * PI * self.alpha * r).exp() / r)
    }

    /// Coefficient `q` of the singular part: `phi(r) - q/(4 pi r)` is
    /// regular at the origin; equals `4 pi sqrt(2|alpha|)`.
    pub fn charge(&self) -> f64 {
        4.0 * PI * (2.0 * self.alpha.abs()).sqrt()
    }

    fn sqrt_two_alpha(&self) -> f64 {
        (2.0 * self.alpha.abs()).sqrt()
    }

    /// `z_c(t) = i beta sqrt(i t)`.
    fn z_c(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.beta() * t.sqrt(), 3.0 * PI / 4.0)
    }
}

/// Normalized radial Gaussian `A e^{-r^2/(2 sigma^2)}`, a smooth initial
/// state for runs without a bound state to start from.
#[derive(Debug, Clone, Copy)]
pub struct GaussianState {
    pub sigma: f64,
}

impl GaussianState {
    pub fn amplitude(&self) -> f64 {
        (self.sigma * PI.sqrt()).powf(-1.5)
    }

    /// Amplitude of the momentum profile `psi_hat(k) = A (2 pi sigma^2)^{3/2}
    /// e^{-sigma^2 k^2 / 2}`.
    pub fn momentum_amplitude(&self) -> f64 {
        self.amplitude() * (2.0 * PI * self.sigma * self.sigma).powf(1.5)
    }
}

/// Initial condition for a run: either the bound state of `alpha(0)` or a
/// smooth normalized Gaussian.
#[derive(Debug, Clone, Copy)]
pub enum InitialState {
    Bound(BoundState),
    Gaussian(GaussianState),
}

/// Tag describing what a sampled complex time series holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Forcing,
    OverlapZ1,
    Survival,
}

/// Complex samples on a uniform grid together with the singular part that
/// was split off analytically: the full signal is
/// `sing_inv_sqrt * t^{-1/2} + sing_sqrt * t^{1/2} + values[j]`.
#[derive(Debug, Clone)]
pub struct ComplexAmplitudeSeries {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
    pub sing_inv_sqrt: Complex64,
    pub sing_sqrt: Complex64,
    pub kind: SeriesKind,
}

// asymptotic difference sum_{m>=1} c_m z^{-(2m+1)}, c_m = (2m-1)!!/2^m
fn asym_tail(z: Complex64) -> Complex64 {
    let iz2 = (z * z).finv();
    let mut c = 0.5;
    let mut pow = iz2 / z;
    let mut sum = c * pow;
    for m in 1..24 {
        c *= (2 * m + 1) as f64 / 2.0;
        pow *= iz2;
        let term = c * pow;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

// sum_{m>=1} (-2m c_m) z^{-(2m+1)} for the autocorrelation tail
fn asym_tail_z1(z: Complex64) -> Complex64 {
    let iz2 = (z * z).finv();
    let mut c = 0.5;
    let mut pow = iz2 / z;
    let mut sum = -2.0 * c * pow;
    for m in 1..24 {
        c *= (2 * m + 1) as f64 / 2.0;
        pow *= iz2;
        let term = -2.0 * (m + 1) as f64 * c * pow;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

impl InitialState {
    pub fn bound(alpha: f64) -> Result<Self, FreeDynError> {
        Ok(InitialState::Bound(BoundState::new(alpha)?))
    }

    pub fn gaussian(sigma: f64) -> Self {
        InitialState::Gaussian(GaussianState { sigma })
    }

    /// The charge the trajectory must start from: `q(0+)` equals the
    /// coefficient of the `1/(4 pi r)` singularity of the initial state.
    pub fn initial_charge(&self) -> Complex64 {
        match self {
            InitialState::Bound(b) => Complex64::new(b.charge(), 0.0),
            InitialState::Gaussian(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Coefficient of the `t^{-1/2}` part of the forcing amplitude.
    pub fn forcing_sing_inv_sqrt(&self) -> Complex64 {
        match self {
            InitialState::Bound(b) => {
                // sqrt(2|alpha|) / sqrt(pi i)
                b.sqrt_two_alpha() / (PI.sqrt() * sqrt_i())
            }
            InitialState::Gaussian(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Coefficient of the `t^{1/2}` part of the forcing expansion at zero.
    pub fn forcing_sing_sqrt(&self) -> Complex64 {
        match self {
            InitialState::Bound(b) => {
                let beta = b.beta();
                b.sqrt_two_alpha() * beta * beta * 2.0 / PI.sqrt() * sqrt_i()
            }
            InitialState::Gaussian(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Forcing amplitude `(U_0(t) psi_0)(0)` for `t > 0`.
    ///
    /// Bound state: `sqrt(2|alpha|) [ (pi i t)^{-1/2} - beta w(z_c) ]`; the
    /// two terms cancel to `O(t^{-3/2})` at large `t`, so past `|z_c| = 8`
    /// the difference is summed directly from the asymptotic series.
    pub fn forcing(&self, t: f64) -> Result<Complex64, FreeDynError> {
        if t <= 0.0 {
            return Err(FreeDynError::BadTime(t));
        }
        Ok(match self {
            InitialState::Bound(b) => {
                let z = b.z_c(t);
                let beta = b.beta();
                if z.norm() < 8.0 {
                    let inv = sqrt_branch(Complex64::new(0.0, PI * t)).finv();
                    b.sqrt_two_alpha() * (inv - beta * faddeeva_w(z))
                } else {
                    b.sqrt_two_alpha() * Complex64::new(0.0, -beta / PI.sqrt()) * asym_tail(z)
                }
            }
            InitialState::Gaussian(g) => {
                let s2 = g.sigma * g.sigma;
                g.amplitude() * inv_pow_3_2(Complex64::new(1.0, 2.0 * t / s2))
            }
        })
    }

    /// `forcing(t) - sing_inv_sqrt * t^{-1/2}`: continuous at zero, decays
    /// like `t^{-1/2}`. This is the kernel the survival convolution samples.
    pub fn forcing_minus_singular(&self, t: f64) -> Complex64 {
        match self {
            InitialState::Bound(b) => -b.sqrt_two_alpha() * b.beta() * faddeeva_w(b.z_c(t)),
            InitialState::Gaussian(g) => {
                let s2 = g.sigma * g.sigma;
                g.amplitude() * inv_pow_3_2(Complex64::new(1.0, 2.0 * t / s2))
            }
        }
    }

    /// Samples of the doubly-reduced forcing (both `t^{-1/2}` and `t^{1/2}`
    /// parts removed), packaged for the product-integration solver.
    pub fn forcing_series(&self, grid: &TimeGrid) -> ComplexAmplitudeSeries {
        let c_half = self.forcing_sing_sqrt();
        let values: Vec<Complex64> = grid
            .times()
            .map(|t| self.forcing_minus_singular(t) - c_half * t.sqrt())
            .collect();
        ComplexAmplitudeSeries {
            grid: grid.clone(),
            values,
            sing_inv_sqrt: self.forcing_sing_inv_sqrt(),
            sing_sqrt: c_half,
            kind: SeriesKind::Forcing,
        }
    }

    /// Free-evolution autocorrelation `Z_1(t) = (psi_0, U_0(t) psi_0)`.
    ///
    /// Bound state: one-dimensional radial momentum quadrature on the
    /// contour-rotated ray (the integrand is then a decaying Gaussian with
    /// no oscillation). Gaussian state: closed form.
    pub fn overlap_z1(&self, t: f64) -> Result<Complex64, FreeDynError> {
        if t < 0.0 {
            return Err(FreeDynError::BadTime(t));
        }
        match self {
            InitialState::Bound(b) => {
                // 16|alpha| e^{-3 pi i/4} int_0^inf u^2 e^{-u^2 t} / (beta^2 - i u^2)^2 du,
                // with the algebraic tail folded to [0, 1/u0] by u -> 1/v
                let beta2 = b.beta() * b.beta();
                let u0 = 4.0 * (b.beta() + 1.0);
                let rot = Complex64::from_polar(1.0, -3.0 * PI / 4.0);
                let head = quadrature::integrate(
                    |u| {
                        let den = Complex64::new(beta2, -u * u);
                        u * u * (-u * u * t).exp() / (den * den)
                    },
                    0.0,
                    u0,
                    1e-13,
                )?;
                let tail = quadrature::integrate(
                    |v| {
                        let den = Complex64::new(beta2 * v * v, -1.0);
                        let decay = if t > 0.0 { (-t / (v * v)).exp() } else { 1.0 };
                        decay / (den * den)
                    },
                    0.0,
                    1.0 / u0,
                    1e-13,
                )?;
                Ok(16.0 * b.alpha.abs() * rot * (head + tail))
            }
            InitialState::Gaussian(g) => {
                let s2 = g.sigma * g.sigma;
                Ok(g.sigma.powi(3) * inv_pow_3_2(Complex64::new(s2, t)))
            }
        }
    }

    /// Closed-form route to `Z_1`: `(1 - 2 z^2) w(z) + 2 i z / sqrt(pi)` at
    /// `z = z_c(t)` for the bound state (asymptotic difference series past
    /// `|z| = 8`), `sigma^3 (sigma^2 + i t)^{-3/2}` for the Gaussian.
    pub fn z1_closed(&self, t: f64) -> Option<Complex64> {
        match self {
            InitialState::Bound(b) => {
                let z = b.z_c(t);
                Some(if z.norm() < 8.0 {
                    let one = Complex64::new(1.0, 0.0);
                    (one - 2.0 * z * z) * faddeeva_w(z) + Complex64::new(0.0, 2.0 / PI.sqrt()) * z
                } else {
                    Complex64::new(0.0, 1.0 / PI.sqrt()) * asym_tail_z1(z)
                })
            }
            InitialState::Gaussian(g) => {
                let s2 = g.sigma * g.sigma;
                Some(g.sigma.powi(3) * inv_pow_3_2(Complex64::new(s2, t)))
            }
        }
    }

    /// Pointwise free evolution `(U_0(t) psi_0)(r)` for `r > 0`, `t > 0`.
    pub fn free_evolution_at(&self, r: f64, t: f64) -> Result<Complex64, FreeDynError> {
        if r <= 0.0 {
            return Err(FreeDynError::BadRadius(r));
        }
        if t <= 0.0 {
            return Err(FreeDynError::BadTime(t));
        }
        Ok(match self {
            InitialState::Bound(b) => {
                let z_c = b.z_c(t);
                let z_r = Complex64::from_polar(r / (2.0 * t.sqrt()), PI / 4.0);
                let phase = Complex64::new(0.0, r * r / (4.0 * t)).exp();
                b.sqrt_two_alpha() * phase / (2.0 * r)
                    * (faddeeva_w(z_c - z_r) - faddeeva_w(z_c + z_r))
            }
            InitialState::Gaussian(g) => {
                let s2 = g.sigma * g.sigma;
                let denom = Complex64::new(1.0, 2.0 * t / s2);
                g.amplitude() * inv_pow_3_2(denom) * (-r * r / (2.0 * s2) / denom).exp()
            }
        })
    }

    /// Value of the initial state at radius `r > 0`.
    pub fn value_at(&self, r: f64) -> Result<f64, FreeDynError> {
        match self {
            InitialState::Bound(b) => b.eval(r),
            InitialState::Gaussian(g) => {
                Ok(g.amplitude() * (-r * r / (2.0 * g.sigma * g.sigma)).exp())
            }
        }
    }

    /// Laplace-domain forcing numerator `4 pi L[forcing](P)`, the row
    /// amplitude of the mode system before division by the row denominator.
    pub fn mode_rhs_amplitude(&self, p: Complex64) -> Complex64 {
        match self {
            InitialState::Bound(b) => {
                let beta = b.beta();
                let root = sqrt_branch(Complex64::new(0.0, -1.0) * p);
                Complex64::new(0.0, -4.0 * PI) * b.sqrt_two_alpha() / (beta + root)
            }
            InitialState::Gaussian(g) => {
                // 4 pi L[forcing](p) = (2/pi) int k^2 psi_hat(k)/(p + i k^2) dk
                let a = g.sigma * g.sigma / 2.0;
                let root_b = sqrt_branch(Complex64::new(0.0, -1.0) * p);
                let bracket = 0.5 * (PI / a).sqrt()
                    - PI / 2.0 * root_b * faddeeva_w(Complex64::new(0.0, 1.0) * a.sqrt() * root_b);
                2.0 / PI * g.momentum_amplitude() * Complex64::new(0.0, -1.0) * bracket
            }
        }
    }
}

/// Free propagator kernel `U_0(t; r) = (4 pi i t)^{-3/2} e^{i r^2/(4t)}`.
pub fn free_kernel(t: f64, r: f64) -> Result<Complex64, FreeDynError> {
    if t <= 0.0 {
        return Err(FreeDynError::BadTime(t));
    }
    Ok(inv_pow_3_2(Complex64::new(0.0, 4.0 * PI * t))
        * Complex64::new(0.0, r * r / (4.0 * t)).exp())
}

/// Laplace transform of the charge-equation right-hand side for a bound
/// initial state of strength `alpha0_init < 0`:
/// `4 pi i sqrt(2|alpha|/(-ip)) (4 pi alpha + sqrt(-ip)) / ((4 pi alpha)^2 + ip)`,
/// evaluated in the equivalent pole-free form
/// `-4 pi i sqrt(2|alpha|) / ( sqrt(-ip) (beta + sqrt(-ip)) )`.
pub fn f_tilde(p: Complex64, alpha0_init: f64) -> Result<Complex64, FreeDynError> {
    if alpha0_init >= 0.0 {
        return Err(FreeDynError::NotBound(alpha0_init));
    }
    if p.norm() == 0.0 {
        return Err(FreeDynError::BranchPointAtZero);
    }
    let beta = -4.0 * PI * alpha0_init;
    let root = sqrt_branch(Complex64::new(0.0, -1.0) * p);
    let s2a = (2.0 * alpha0_init.abs()).sqrt();
    Ok(Complex64::new(0.0, -4.0 * PI) * s2a / (root * (beta + root)))
}

/// Transfer factor from the charge to the survival amplitude:
/// `L[theta - Z_1](p) = Z~_2(p) L[q](p)` with
/// `Z~_2(p) = -sqrt(2 |alpha(0)|) / (4 pi alpha(0) - sqrt(-ip))`.
///
/// Equal to `i L[forcing](p)`, and pinned absolutely by the stationary case
/// where `theta(t) = e^{it}` exactly. Nonvanishing for `alpha(0) < 0`.
pub fn z2_tilde(p: Complex64, alpha0_init: f64) -> Result<Complex64, FreeDynError> {
    if alpha0_init >= 0.0 {
        return Err(FreeDynError::NotBound(alpha0_init));
    }
    let root = sqrt_branch(Complex64::new(0.0, -1.0) * p);
    let denom = Complex64::new(4.0 * PI * alpha0_init, 0.0) - root;
    Ok(-(2.0 * alpha0_init.abs()).sqrt() / denom)
}

/// Radial momentum profile that can be continued analytically a short way
/// below the real axis, so the forcing integral can run on a rotated ray.
pub trait MomentumProfile {
    /// `psi_hat(k)` at complex `k`.
    fn eval(&self, k: Complex64) -> Complex64;
    /// Coefficient `a` in the dominating envelope `|psi_hat| <~ e^{-a k^2}`.
    fn decay_rate(&self) -> f64;
}

/// Momentum profile of [`GaussianState`].
pub struct GaussianProfile {
    pub sigma: f64,
}

impl MomentumProfile for GaussianProfile {
    fn eval(&self, k: Complex64) -> Complex64 {
        let g = GaussianState { sigma: self.sigma };
        g.momentum_amplitude() * (-self.sigma * self.sigma / 2.0 * k * k).exp()
    }
    fn decay_rate(&self) -> f64 {
        self.sigma * self.sigma / 2.0
    }
}

/// `(U_0(t) Psi)(0)` for a general radial profile, by quadrature on the ray
/// `k = e^{-i pi/8} u` where both the profile envelope and the evolution
/// factor decay for every `t >= 0`.
pub fn forcing_general(profile: &impl MomentumProfile, t: f64) -> Result<Complex64, FreeDynError> {
    if t < 0.0 {
        return Err(FreeDynError::BadTime(t));
    }
    let theta = PI / 8.0;
    let rot = Complex64::from_polar(1.0, -theta);
    let rot3 = Complex64::from_polar(1.0, -3.0 * theta);
    // width of the integrand in u^2
    let w2 = profile.decay_rate() * (2.0 * theta).cos() + t * (2.0 * theta).sin();
    let upper = 8.0 / w2.sqrt();
    let phase_t = Complex64::from_polar(t, -2.0 * theta) * Complex64::new(0.0, 1.0);
    let v = quadrature::integrate(
        |u| {
            let u2 = u * u;
            u2 * profile.eval(rot * u) * (-phase_t * u2).exp()
        },
        0.0,
        upper,
        1e-13,
    )?;
    Ok(rot3 / (2.0 * PI * PI) * v)
}
