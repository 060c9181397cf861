//! The periodic coupling strength as a finite Fourier series, its
//! admissibility conditions, resonance classification, and the numerical
//! genericity test on the positive-index tail.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlphaError {
    #[error("omega must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("coefficient reality violated at n={n}: alpha_n != conj(alpha_-n) by {defect:.3e}")]
    RealityViolation { n: i64, defect: f64 },
    #[error("duplicate coefficient index {0}")]
    DuplicateIndex(i64),
    #[error(
        "alpha(0) = {0:.6e} is non-negative; the initial state has no bound state to start from"
    )]
    NonNegativeAlphaZeroAtStart(f64),
}

/// Periodic coupling `alpha(t) = sum_n alpha_n e^{-i n omega t}` with a
/// finite set of Fourier coefficients obeying `alpha_n = conj(alpha_{-n})`.
#[derive(Debug, Clone)]
pub struct FourierAlpha {
    omega: f64,
    /// sorted by index
    coeffs: Vec<(i64, Complex64)>,
    support_radius: i64,
    ell1_norm: f64,
}

impl FourierAlpha {
    pub fn new(omega: f64, coeffs: &[(i64, Complex64)]) -> Result<Self, AlphaError> {
        if !(omega > 0.0) {
            return Err(AlphaError::NonPositiveOmega(omega));
        }
        let mut sorted: Vec<(i64, Complex64)> = coeffs
            .iter()
            .copied()
            .filter(|(_, c)| c.norm() > 0.0)
            .collect();
        sorted.sort_by_key(|&(n, _)| n);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(AlphaError::DuplicateIndex(w[0].0));
            }
        }
        let scale: f64 = sorted
            .iter()
            .map(|(_, c)| c.norm())
            .sum::<f64>()
            .max(1e-300);
        for &(n, c) in &sorted {
            let mirror = sorted
                .iter()
                .find(|&&(m, _)| m == -n)
                .map(|&(_, c)| c)
                .unwrap_or(Complex64::new(0.0, 0.0));
            let defect = (c - mirror.conj()).norm();
            if defect > 1e-12 * scale {
                return Err(AlphaError::RealityViolation { n, defect });
            }
        }
        let support_radius = sorted.iter().map(|&(n, _)| n.abs()).max().unwrap_or(0);
        let ell1_norm = sorted.iter().map(|(_, c)| c.norm()).sum();
        Ok(FourierAlpha {
            omega,
            coeffs: sorted,
            support_radius,
            ell1_norm,
        })
    }

    /// Constant coupling (a single `n = 0` coefficient).
    pub fn constant(omega: f64, alpha0: f64) -> Self {
        Self::new(omega, &[(0, Complex64::new(alpha0, 0.0))]).expect("constant drive is admissible")
    }

    /// Truncated two-sided geometric family `alpha_n = amp * lambda^{|n|}`,
    /// `|n| <= n_cut`. Returns the model and the discarded ell-1 tail
    /// `2 amp lambda^{n_cut+1} / (1 - lambda)`.
    pub fn geometric(omega: f64, amp: f64, lambda: f64, n_cut: i64) -> (Self, f64) {
        assert!(lambda.abs() < 1.0 && n_cut >= 0);
        let coeffs: Vec<(i64, Complex64)> = (-n_cut..=n_cut)
            .map(|n| {
                (
                    n,
                    Complex64::new(amp * lambda.powi(n.unsigned_abs() as i32), 0.0),
                )
            })
            .collect();
        let tail = 2.0 * amp.abs() * lambda.abs().powi(n_cut as i32 + 1) / (1.0 - lambda.abs());
        (
            Self::new(omega, &coeffs).expect("real symmetric family is admissible"),
            tail,
        )
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn coeffs(&self) -> &[(i64, Complex64)] {
        &self.coeffs
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        self.coeffs
            .iter()
            .find(|&&(m, _)| m == n)
            .map(|&(_, c)| c)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn support_radius(&self) -> i64 {
        self.support_radius
    }

    pub fn ell1_norm(&self) -> f64 {
        self.ell1_norm
    }

    /// The mean coefficient `alpha_0` (real by the reality condition).
    pub fn mean(&self) -> f64 {
        self.coeff(0).re
    }

    /// `alpha(0) = sum_n alpha_n` (real by the reality condition).
    pub fn at_zero(&self) -> f64 {
        self.coeffs.iter().map(|(_, c)| c.re).sum()
    }

    /// Positive-index tail `(alpha_1, alpha_2, ..)` used by the genericity test.
    pub fn positive_tail(&self) -> Vec<Complex64> {
        if self.support_radius == 0 {
            return Vec::new();
        }
        (1..=self.support_radius).map(|n| self.coeff(n)).collect()
    }

    /// Evaluate `alpha(t)`. The imaginary parts cancel in conjugate pairs, so
    /// the result is assembled from the real parts only.
    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.mean();
        for &(n, c) in &self.coeffs {
            if n > 0 {
                // alpha_n e^{-in w t} + conj pair = 2 Re(alpha_n e^{-in w t})
                let phase = -(n as f64) * self.omega * t;
                acc += 2.0 * (c * Complex64::from_polar(1.0, phase)).re;
            }
        }
        acc
    }

    /// Supremum of `|alpha(t)|` over one period, by dense sampling.
    pub fn sup_abs(&self) -> f64 {
        let n = 4096;
        (0..=n)
            .map(|k| self.eval(self.period() * k as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Minimum of `alpha(t)` over one period, by dense sampling.
    pub fn min_over_period(&self) -> f64 {
        let n = 4096;
        (0..=n)
            .map(|k| self.eval(self.period() * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Rescale so that `alpha(0) = -1/(4 pi)`, adjusting `omega` with the
    /// induced change of time unit. Lengths scale by `s`, the coupling by
    /// `1/s`, frequencies by `1/s^2`. Returns the new model and `s`.
    pub fn normalize(&self) -> Result<(Self, f64), AlphaError> {
        let a0 = self.at_zero();
        if a0 >= 0.0 {
            return Err(AlphaError::NonNegativeAlphaZeroAtStart(a0));
        }
        let s = -4.0 * PI * a0;
        let coeffs: Vec<(i64, Complex64)> = self.coeffs.iter().map(|&(n, c)| (n, c / s)).collect();
        let scaled = Self::new(self.omega / (s * s), &coeffs)?;
        Ok((scaled, s))
    }
}

/// Position of the mode-system singularity implied by the sign of the mean
/// coefficient and the drive frequency.
#[derive(Debug, Clone, PartialEq)]
pub enum ResonanceClass {
    /// `alpha_0 < 0`, `(4 pi alpha_0)^2` not a multiple of omega: the
    /// candidate singular row is `n_bar` at `p_bar` on the imaginary axis.
    NegativeMean {
        n_bar: i64,
        p_bar: Complex64,
    },
    /// `alpha_0 < 0` with `(4 pi alpha_0)^2 = N omega`: the candidate
    /// singularity sits at the origin in the row `N`.
    NegativeMeanResonant {
        n: i64,
    },
    ZeroMean,
    PositiveMean,
}

/// Classify the drive. `tol` is relative: resonant when
/// `|(4 pi alpha_0)^2 - N omega| <= tol * omega`; `|alpha_0| <= tol * ell1`
/// counts as zero mean.
pub fn classify_resonance(model: &FourierAlpha, tol: f64) -> ResonanceClass {
    let a0 = model.mean();
    let omega = model.omega();
    if a0.abs() <= tol * model.ell1_norm() {
        return ResonanceClass::ZeroMean;
    }
    if a0 > 0.0 {
        return ResonanceClass::PositiveMean;
    }
    let x = (4.0 * PI * a0) * (4.0 * PI * a0);
    let ratio = x / omega;
    let n_near = ratio.round();
    if n_near >= 1.0 && (x - n_near * omega).abs() <= tol * omega {
        return ResonanceClass::NegativeMeanResonant { n: n_near as i64 };
    }
    // unique integer in (x/omega - 1, x/omega]
    let n_bar = ratio.floor() as i64;
    let p_bar = Complex64::new(0.0, x - omega * n_bar as f64);
    ResonanceClass::NegativeMean { n_bar, p_bar }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenericityVerdict {
    Generic,
    NonGeneric,
    Inconclusive,
}

/// Least-squares distances from `e_1` to the span of the shifted tails, for
/// growing numbers of shifts.
#[derive(Debug, Clone)]
pub struct GenericityReport {
    pub residuals: Vec<f64>,
    pub verdict: GenericityVerdict,
    pub threshold: f64,
    /// plateau value when the verdict is NonGeneric
    pub plateau: Option<f64>,
    /// set when near-dependent shift vectors had to be dropped
    pub ill_conditioned: bool,
}

pub const GENERICITY_THRESHOLD: f64 = 1e-8;
const PLATEAU_DECREMENT: f64 = 1e-10;
const PLATEAU_RUN: usize = 20;

/// Genericity residuals for the positive-index tail of `model`.
pub fn genericity_residuals(model: &FourierAlpha, n_max: usize) -> GenericityReport {
    genericity_residuals_of_tail(&model.positive_tail(), n_max)
}

/// Same computation on a raw tail `(alpha_1, alpha_2, ...)`.
///
/// The shifts `T^n a` (with `(T a)_k = a_{k+1}`) of a finitely supported
/// tail are embedded in a window long enough that truncation is exact; the
/// distance from `e_1` to their span is tracked through an incremental
/// orthonormal basis, so the residual sequence is non-increasing by
/// construction.
pub fn genericity_residuals_of_tail(tail: &[Complex64], n_max: usize) -> GenericityReport {
    let support = tail
        .iter()
        .rposition(|c| c.norm() > 0.0)
        .map(|i| i + 1)
        .unwrap_or(0);
    if support == 0 {
        return GenericityReport {
            residuals: vec![1.0; n_max + 1],
            verdict: GenericityVerdict::NonGeneric,
            threshold: GENERICITY_THRESHOLD,
            plateau: Some(1.0),
            ill_conditioned: false,
        };
    }
    let window = support + n_max + 1;
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    // orthogonal remainder of e1 with respect to the growing span; keeping
    // the vector itself avoids the sqrt(1 - captured) cancellation floor
    let mut e1_rem = vec![Complex64::new(0.0, 0.0); window];
    e1_rem[0] = Complex64::new(1.0, 0.0);
    let mut residuals = Vec::with_capacity(n_max + 1);
    let mut ill_conditioned = false;

    for shift in 0..=n_max {
        // v = T^shift a, embedded in C^window
        let mut v = vec![Complex64::new(0.0, 0.0); window];
        for (k, slot) in v.iter_mut().enumerate() {
            let idx = k + shift;
            if idx < support {
                *slot = tail[idx];
            }
        }
        let vnorm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            // modified Gram-Schmidt, twice for orthogonality
            for _ in 0..2 {
                for b in &basis {
                    let proj: Complex64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= proj * bi;
                    }
                }
            }
            let rnorm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if rnorm > 1e-13 * vnorm {
                for vi in v.iter_mut() {
                    *vi /= rnorm;
                }
                let proj: Complex64 = v.iter().zip(&e1_rem).map(|(bi, ri)| bi.conj() * ri).sum();
                for (ri, bi) in e1_rem.iter_mut().zip(&v) {
                    *ri -= proj * bi;
                }
                basis.push(v);
            } else {
                ill_conditioned = true;
            }
        }
        let r: f64 = e1_rem.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        residuals.push(r.min(residuals.last().copied().unwrap_or(1.0)));
    }

    // verdict: generic as soon as the residual crosses the threshold while
    // scanning; non-generic on a long flat stretch above it
    let mut verdict = GenericityVerdict::Inconclusive;
    let mut plateau = None;
    let mut flat_run = 0usize;
    for i in 0..residuals.len() {
        if residuals[i] < GENERICITY_THRESHOLD {
            verdict = GenericityVerdict::Generic;
            break;
        }
        if i > 0 && residuals[i - 1] - residuals[i] < PLATEAU_DECREMENT {
            flat_run += 1;
            if flat_run >= PLATEAU_RUN {
                verdict = GenericityVerdict::NonGeneric;
                plateau = Some(residuals[i]);
                break;
            }
        } else {
            flat_run = 0;
        }
    }
    GenericityReport {
        residuals,
        verdict,
        threshold: GENERICITY_THRESHOLD,
        plateau,
        ill_conditioned,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const A14: f64 = 1.0 / (4.0 * PI);

    #[test]
    fn eval_constant_series() {
        let m = FourierAlpha::constant(1.0, -A14);
        assert!((m.eval(0.37) + A14).abs() < 1e-16);
        assert!((m.eval(12.0) + 0.0795775).abs() < 1e-6);
    }

    #[test]
    fn eval_driven_series() {
        let m = FourierAlpha::new(
            2.0,
            &[
                (0, c(-A14 - 0.1, 0.0)),
                (1, c(0.05, 0.0)),
                (-1, c(0.05, 0.0)),
            ],
        )
        .unwrap();
        assert!((m.eval(0.0) + A14).abs() < 1e-15);
        // 0.1 cos(2t) at t = pi/2 gives -0.1 on the oscillating part
        let m2 = FourierAlpha::new(2.0, &[(1, c(0.05, 0.0)), (-1, c(0.05, 0.0))]).unwrap();
        assert!((m2.eval(PI / 2.0) + 0.1).abs() < 1e-14);
    }

    #[test]
    fn eval_is_real_and_periodic() {
        let m = FourierAlpha::new(
            1.3,
            &[
                (0, c(-0.1, 0.0)),
                (1, c(0.03, 0.04)),
                (-1, c(0.03, -0.04)),
                (3, c(-0.01, 0.002)),
                (-3, c(-0.01, -0.002)),
            ],
        )
        .unwrap();
        let period = m.period();
        for k in 0..40 {
            let t = 0.17 * k as f64;
            let d = (m.eval(t) - m.eval(t + period)).abs();
            assert!(d <= 1e-12 * (1.0 + m.ell1_norm()));
        }
    }

    #[test]
    fn reality_violation_rejected() {
        let r = FourierAlpha::new(1.0, &[(1, c(0.1, 0.0))]);
        assert!(matches!(r, Err(AlphaError::RealityViolation { .. })));
        let r2 = FourierAlpha::new(1.0, &[(1, c(0.1, 0.02)), (-1, c(0.1, 0.02))]);
        assert!(matches!(r2, Err(AlphaError::RealityViolation { .. })));
    }

    #[test]
    fn normalize_examples() {
        // alpha_0 = -1/(2 pi): lengths scale by 2, omega by 1/4
        let m = FourierAlpha::constant(1.0, -1.0 / (2.0 * PI));
        let (n, s) = m.normalize().unwrap();
        assert!((s - 2.0).abs() < 1e-14);
        assert!((n.at_zero() + A14).abs() < 1e-16);
        assert!((n.omega() - 0.25).abs() < 1e-15);

        let already = FourierAlpha::constant(3.0, -A14);
        let (n2, s2) = already.normalize().unwrap();
        assert!((s2 - 1.0).abs() < 1e-14);
        assert!((n2.omega() - 3.0).abs() < 1e-14);

        let bad = FourierAlpha::constant(1.0, 0.1);
        assert!(matches!(
            bad.normalize(),
            Err(AlphaError::NonNegativeAlphaZeroAtStart(_))
        ));
    }

    #[test]
    fn classify_cases() {
        // omega > (4 pi a0)^2 = 1: n_bar = 0, p_bar = i
        let m = FourierAlpha::constant(3.0, -A14);
        match classify_resonance(&m, 1e-9) {
            ResonanceClass::NegativeMean { n_bar, p_bar } => {
                assert_eq!(n_bar, 0);
                assert!((p_bar - c(0.0, 1.0)).norm() < 1e-12);
            }
            other => panic!("expected NegativeMean, got {other:?}"),
        }
        // (4 pi a0)^2 = 1 = 1 * omega
        let m2 = FourierAlpha::constant(1.0, -A14);
        assert_eq!(
            classify_resonance(&m2, 1e-9),
            ResonanceClass::NegativeMeanResonant { n: 1 }
        );
        let m3 = FourierAlpha::constant(1.0, 0.02);
        assert_eq!(classify_resonance(&m3, 1e-9), ResonanceClass::PositiveMean);
        let m4 = FourierAlpha::new(1.0, &[(1, c(0.0, 0.05)), (-1, c(0.0, -0.05))]).unwrap();
        assert_eq!(classify_resonance(&m4, 1e-9), ResonanceClass::ZeroMean);
    }

    #[test]
    fn n_bar_satisfies_bracketing() {
        for &(a0, omega) in &[(-A14, 3.0), (-0.2, 1.0), (-0.5, 0.7), (-0.07, 2.3)] {
            let m = FourierAlpha::constant(omega, a0);
            if let ResonanceClass::NegativeMean { n_bar, p_bar } = classify_resonance(&m, 1e-12) {
                let x = (4.0 * PI * a0) * (4.0 * PI * a0);
                let y = x / omega;
                assert!(y - 1.0 < n_bar as f64 && n_bar as f64 <= y);
                assert!(p_bar.im >= 0.0 && p_bar.im < omega);
            } else {
                panic!("unexpected class for a0={a0}, omega={omega}");
            }
        }
    }

    #[test]
    fn genericity_single_spike() {
        let rep = genericity_residuals_of_tail(&[c(1.0, 0.0)], 10);
        assert!(rep.residuals[0] < 1e-14);
        assert_eq!(rep.verdict, GenericityVerdict::Generic);
    }

    #[test]
    fn genericity_two_taps_exact_at_one_shift() {
        // (0.3, 0.1): T^1 a = 0.1 e1 exactly
        let rep = genericity_residuals_of_tail(&[c(0.3, 0.0), c(0.1, 0.0)], 5);
        assert!(rep.residuals[0] > 0.1);
        assert!(rep.residuals[1] < 1e-12);
        assert_eq!(rep.verdict, GenericityVerdict::Generic);
    }

    #[test]
    fn genericity_geometric_plateau() {
        // untruncated geometric tail would plateau at exactly lambda; the
        // truncation at 40 leaves that plateau intact until shifts reach the
        // cut, which the plateau detector fires long before
        let lambda: f64 = 0.5;
        let tail: Vec<Complex64> = (1..=40).map(|n| c(lambda.powi(n), 0.0)).collect();
        let rep = genericity_residuals_of_tail(&tail, 200);
        assert_eq!(rep.verdict, GenericityVerdict::NonGeneric);
        let plateau = rep.plateau.unwrap();
        assert!(
            (plateau - lambda).abs() < 0.02,
            "plateau {plateau} should sit near lambda"
        );
    }

    #[test]
    fn genericity_scale_invariant() {
        let tail: Vec<Complex64> = vec![c(0.2, 0.1), c(-0.05, 0.3), c(0.01, 0.0), c(0.0, -0.02)];
        let scaled: Vec<Complex64> = tail.iter().map(|v| v * c(-1.7, 2.3)).collect();
        let a = genericity_residuals_of_tail(&tail, 30);
        let b = genericity_residuals_of_tail(&scaled, 30);
        for (x, y) in a.residuals.iter().zip(&b.residuals) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn genericity_residuals_monotone() {
        let tail: Vec<Complex64> = (1..=25)
            .map(|n| c(0.6f64.powi(n) * ((n * n) as f64).sin(), 0.4f64.powi(n)))
            .collect();
        let rep = genericity_residuals_of_tail(&tail, 120);
        for w in rep.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
            assert!(w[0] <= 1.0 + 1e-12 && w[1] >= 0.0);
        }
    }

    #[test]
    fn genericity_empty_tail_nongeneric() {
        let rep = genericity_residuals_of_tail(&[], 8);
        assert_eq!(rep.verdict, GenericityVerdict::NonGeneric);
        assert!(rep.residuals.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn sup_and_min_track_known_drive() {
        // 0.1 + 0.05 cos(w t): sup 0.15, min 0.05
        let m = FourierAlpha::new(
            2.0,
            &[(0, c(0.1, 0.0)), (1, c(0.025, 0.0)), (-1, c(0.025, 0.0))],
        )
        .unwrap();
        assert!((m.sup_abs() - 0.15).abs() < 1e-6);
        assert!((m.min_over_period() - 0.05).abs() < 1e-6);
    }
}
