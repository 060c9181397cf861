//! Observables built on top of a computed charge trajectory: the survival
//! amplitude, the wavefunction at a radius, ball-localized probability with
//! its running time average, and power-law decay fits.
//!
//! The survival amplitude reuses the forcing amplitude as its convolution
//! kernel (the overlap of the initial state with the free kernel *is* the
//! forcing), so the `t^{-1/2}` part rides on the same Abel product weights
//! as the solver. The wavefunction convolution integrates the free kernel's
//! `s^{-3/2} e^{i r^2/(4s)}` endpoint in closed form per cell, Fresnel
//! style, and switches to a strided trapezoid once the phase is slow.

use crate::alpha_model::FourierAlpha;
use crate::branch::inv_pow_3_2;
use crate::charge_solver::{abel_weights, ChargeTrajectory};
use crate::faddeeva::fresnel_e;
use crate::free_dynamics::{FreeDynError, InitialState};
use crate::parallel::par_map;
use crate::quadrature;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObsError {
    #[error("time index {0} outside the trajectory")]
    BadIndex(usize),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("decay window [{lo}, {hi}] leaves {points} usable points (need >= 30)")]
    WindowTooNarrow { lo: f64, hi: f64, points: usize },
    #[error("decay fit too noisy: r^2 = {r_squared:.4} < 0.9")]
    WindowTooNoisy { r_squared: f64 },
    #[error(transparent)]
    FreeDyn(#[from] FreeDynError),
}

/// Survival amplitude samples `theta(t) = Z_1(t) + i (q * forcing)(t)`.
#[derive(Debug, Clone)]
pub struct SurvivalSeries {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub theta: Vec<Complex64>,
    pub z1_part: Vec<Complex64>,
    pub conv_part: Vec<Complex64>,
    /// set when some `|theta|` exceeds `1 + 10 * tol`
    pub unitarity_flag: bool,
}

pub const SURVIVAL_TOL: f64 = 1e-3;

/// Survival amplitude at every grid point. Cost is O(N^2); prefer
/// [`survival_sampled`] on long grids.
pub fn survival(traj: &ChargeTrajectory, state: &InitialState) -> Result<SurvivalSeries, ObsError> {
    let all: Vec<usize> = (0..traj.grid.count()).collect();
    survival_sampled(traj, state, &all)
}

/// Survival amplitude at the given grid indices.
pub fn survival_sampled(
    traj: &ChargeTrajectory,
    state: &InitialState,
    indices: &[usize],
) -> Result<SurvivalSeries, ObsError> {
    let n = traj.grid.count();
    if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
        return Err(ObsError::BadIndex(bad));
    }
    let h = traj.grid.h();
    let weights = abel_weights(&traj.grid);
    let c_minus = state.forcing_sing_inv_sqrt();
    // smooth kernel at every lag, shared across samples
    let smooth: Vec<Complex64> = par_map(n, |m| state.forcing_minus_singular(traj.grid.t(m)));

    let theta_parts: Vec<Result<(Complex64, Complex64), FreeDynError>> =
        par_map(indices.len(), |si| {
            let j = indices[si];
            let z1 = state.overlap_z1(traj.grid.t(j))?;
            if j == 0 {
                return Ok((z1, Complex64::new(0.0, 0.0)));
            }
            // Abel part against the singular kernel coefficient
            let abel = c_minus * weights.integrate_history(&traj.q, j);
            // trapezoid against the smooth kernel
            let mut acc = 0.5 * (traj.q[0] * smooth[j] + traj.q[j] * smooth[0]);
            for k in 1..j {
                acc += traj.q[k] * smooth[j - k];
            }
            let conv = Complex64::new(0.0, 1.0) * (abel + h * acc);
            Ok((z1, conv))
        });
    let theta_parts: Vec<(Complex64, Complex64)> = theta_parts
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(ObsError::from)?;

    let times: Vec<f64> = indices.iter().map(|&j| traj.grid.t(j)).collect();
    let z1_part: Vec<Complex64> = theta_parts.iter().map(|p| p.0).collect();
    let conv_part: Vec<Complex64> = theta_parts.iter().map(|p| p.1).collect();
    let theta: Vec<Complex64> = theta_parts.iter().map(|p| p.0 + p.1).collect();
    let unitarity_flag = theta.iter().any(|v| v.norm() > 1.0 + 10.0 * SURVIVAL_TOL);
    Ok(SurvivalSeries {
        indices: indices.to_vec(),
        times,
        theta,
        z1_part,
        conv_part,
        unitarity_flag,
    })
}

// closed-form integrals of the kernel tail over one cell [s_a, s_b]:
//   i0 = int s^{-3/2} e^{i rho/s} ds,  i1 = int s^{-1/2} e^{i rho/s} ds
// via v = r/(2 sqrt(s)); s_a = 0 maps to v = infinity.
fn kernel_cell_moments(r: f64, s_a: f64, s_b: f64) -> (Complex64, Complex64) {
    let sqrt_pi_quarter = PI.sqrt() / 2.0 * Complex64::from_polar(1.0, PI / 4.0);
    let v_b = r / (2.0 * s_b.sqrt());
    let (e_a, edge_a) = if s_a > 0.0 {
        let v_a = r / (2.0 * s_a.sqrt());
        (fresnel_e(v_a), Complex64::new(0.0, v_a * v_a).exp() / v_a)
    } else {
        (sqrt_pi_quarter, Complex64::new(0.0, 0.0))
    };
    let e_b = fresnel_e(v_b);
    let de = e_a - e_b;
    let i0 = 4.0 / r * de;
    let i1 = r
        * (Complex64::new(0.0, v_b * v_b).exp() / v_b - edge_a
            + 2.0 * Complex64::new(0.0, 1.0) * de);
    (i0, i1)
}

/// `Psi_t(r)` reconstructed from the trajectory:
/// `U_0(t) psi_0 (r) + i int_0^t q(tau) U_0(t - tau; r) dtau`,
/// at the grid time `t_j`.
pub fn wavefunction_at(
    traj: &ChargeTrajectory,
    state: &InitialState,
    r: f64,
    j: usize,
) -> Result<Complex64, ObsError> {
    if r <= 0.0 {
        return Err(ObsError::BadRadius(r));
    }
    if j >= traj.grid.count() {
        return Err(ObsError::BadIndex(j));
    }
    if j == 0 {
        return Ok(Complex64::new(state.value_at(r)?, 0.0));
    }
    let h = traj.grid.h();
    let t = traj.grid.t(j);
    let kernel_const = inv_pow_3_2(Complex64::new(0.0, 4.0 * PI));
    let rho = r * r / 4.0;

    // fine region: exact product integration against the oscillatory kernel
    let stride = ((0.01 / h).round() as usize).clamp(1, j);
    let mut fine_cells = ((0.2 * r) / h).ceil() as usize + 2;
    fine_cells = fine_cells.min(j);
    // align the region boundary with the coarse stride where possible
    if fine_cells < j {
        fine_cells = fine_cells.div_ceil(stride) * stride;
        fine_cells = fine_cells.min(j);
    }

    let mut conv = Complex64::new(0.0, 0.0);
    for cell in 0..fine_cells {
        let s_a = cell as f64 * h;
        let s_b = (cell + 1) as f64 * h;
        // q(t - s) linear on the cell: q1 at s_a, q0 at s_b
        let q1 = traj.q[j - cell];
        let q0 = traj.q[j - cell - 1];
        let (i0, i1) = kernel_cell_moments(r, s_a, s_b);
        let slope = (q0 - q1) / h;
        conv += (q1 - slope * s_a) * i0 + slope * i1;
    }
    conv *= kernel_const;

    // coarse region: trapezoid on the now slowly varying integrand
    if fine_cells < j {
        let f = |k: usize| -> Complex64 {
            let s = k as f64 * h;
            let inv32 = 1.0 / (s * s.sqrt());
            traj.q[j - k] * kernel_const * inv32 * Complex64::from_polar(1.0, rho / s)
        };
        let mut k = fine_cells;
        let mut acc = Complex64::new(0.0, 0.0);
        while k < j {
            let next = (k + stride).min(j);
            let ds = (next - k) as f64 * h;
            acc += 0.5 * ds * (f(k) + f(next));
            k = next;
        }
        conv += acc;
    }

    let free = state.free_evolution_at(r, t)?;
    Ok(free + Complex64::new(0.0, 1.0) * conv)
}

/// Probability inside the ball of radius `big_r` at grid time `t_j`:
/// `4 pi int_0^R r^2 |Psi_t(r)|^2 dr`. The `1/r` charge singularity is
/// integrated in closed form on an inner shell using
/// `Psi ~ q/(4 pi r) + alpha(t) q(t)`.
pub fn ball_probability(
    traj: &ChargeTrajectory,
    alpha: &FourierAlpha,
    state: &InitialState,
    big_r: f64,
    j: usize,
) -> Result<f64, ObsError> {
    if big_r <= 0.0 {
        return Err(ObsError::BadRadius(big_r));
    }
    if j >= traj.grid.count() {
        return Err(ObsError::BadIndex(j));
    }
    if j == 0 {
        // the initial state is given in closed form
        let inner = quadrature::integrate_real(
            |r| {
                let v = state.value_at(r.max(1e-300)).unwrap_or(0.0);
                4.0 * PI * r * r * v * v
            },
            0.0,
            big_r,
            1e-10,
        )
        .map_err(FreeDynError::from)?;
        return Ok(inner);
    }

    let delta = (big_r / 20.0).min(0.01);
    let t = traj.grid.t(j);
    let q = traj.q[j];
    let phi0 = alpha.eval(t) * q;
    let inner = q.norm_sqr() * delta / (4.0 * PI)
        + (q.conj() * phi0).re * delta * delta
        + phi0.norm_sqr() * 4.0 * PI * delta.powi(3) / 3.0;

    // panels of 16-point Gauss-Legendre on [delta, R]; the wavefunction is
    // smooth there and the fixed rule avoids adaptive re-evaluation
    let panels = (((big_r - delta) / 0.25).ceil() as usize).max(4);
    let (xs, ws) = quadrature::gauss16();
    let values: Vec<f64> = par_map(panels, |pi| {
        let lo = delta + (big_r - delta) * pi as f64 / panels as f64;
        let hi = delta + (big_r - delta) * (pi + 1) as f64 / panels as f64;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (x, w) in xs.iter().zip(ws) {
            let r = mid + half * x;
            let psi = wavefunction_at(traj, state, r, j).expect("radius and index validated");
            acc += w * 4.0 * PI * r * r * psi.norm_sqr();
        }
        acc * half
    });
    Ok(inner + values.iter().sum::<f64>())
}

/// Ball probability over a set of times, with the running Cesàro mean.
#[derive(Debug, Clone)]
pub struct BallSeries {
    pub radius: f64,
    pub times: Vec<f64>,
    pub prob: Vec<f64>,
    /// running mean `(1/t) int_0^t prob` at the sample times (skipping t=0)
    pub cesaro: Vec<f64>,
}

pub fn ball_series(
    traj: &ChargeTrajectory,
    alpha: &FourierAlpha,
    state: &InitialState,
    big_r: f64,
    indices: &[usize],
) -> Result<BallSeries, ObsError> {
    let probs: Vec<f64> = indices
        .iter()
        .map(|&j| ball_probability(traj, alpha, state, big_r, j))
        .collect::<Result<_, _>>()?;
    let times: Vec<f64> = indices.iter().map(|&j| traj.grid.t(j)).collect();
    let mut cesaro = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            integral += 0.5 * (probs[k] + probs[k - 1]) * (times[k] - times[k - 1]);
        }
        cesaro.push(if times[k] > 0.0 {
            integral / times[k]
        } else {
            probs[k]
        });
    }
    Ok(BallSeries {
        radius: big_r,
        times,
        prob: probs,
        cesaro,
    })
}

/// Power-law fit `value ~ amplitude * t^exponent` over a window, on log-log
/// samples, with an exponential remainder rate estimated from what the
/// power law leaves behind.
#[derive(Debug, Clone)]
pub struct DecayFitReport {
    pub window: (f64, f64),
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub points: usize,
    /// RMS residual of the upper half of the window over the lower half;
    /// below one means the tail is cleaner than the head
    pub residual_trend: f64,
    /// decay rate of an exponential fitted to the leftover residual, when
    /// that fit is meaningful
    pub remainder_rate: Option<f64>,
}

pub fn decay_fit(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<DecayFitReport, ObsError> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= lo && **t <= hi && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 30 {
        return Err(ObsError::WindowTooNarrow {
            lo,
            hi,
            points: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in &pts {
        let fy = intercept + slope * x;
        ss_res += (y - fy) * (y - fy);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    // residual trend: RMS of the two half-windows
    let mid = pts.len() / 2;
    let rms = |s: &[(f64, f64)]| -> f64 {
        (s.iter()
            .map(|&(x, y)| {
                let d = y - (intercept + slope * x);
                d * d
            })
            .sum::<f64>()
            / s.len().max(1) as f64)
            .sqrt()
    };
    let lower = rms(&pts[..mid]).max(1e-300);
    let residual_trend = rms(&pts[mid..]) / lower;

    // exponential remainder: fit ln|value - A t^b| ~ ln C - B t where the
    // residual is at least a few percent of the value
    let amplitude = intercept.exp();
    let mut rr: Vec<(f64, f64)> = Vec::new();
    for (t, v) in times.iter().zip(values) {
        if *t >= lo && *t <= hi && *v > 0.0 {
            let model = amplitude * t.powf(slope);
            let resid = (v - model).abs();
            if resid > 0.02 * v {
                rr.push((*t, resid.ln()));
            }
        }
    }
    let remainder_rate = if rr.len() >= 10 {
        let n = rr.len() as f64;
        let sx: f64 = rr.iter().map(|p| p.0).sum();
        let sy: f64 = rr.iter().map(|p| p.1).sum();
        let sxx: f64 = rr.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = rr.iter().map(|p| p.0 * p.1).sum();
        let b = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
        if b.is_finite() && b > 0.0 {
            Some(b)
        } else {
            None
        }
    } else {
        None
    };

    if r_squared < 0.9 {
        return Err(ObsError::WindowTooNoisy { r_squared });
    }
    Ok(DecayFitReport {
        window,
        exponent: slope,
        amplitude,
        r_squared,
        points: pts.len(),
        residual_trend,
        remainder_rate,
    })
}

/// Default fit window `[T/4, 0.9 T]`.
pub fn default_decay_window(t_end: f64) -> (f64, f64) {
    (t_end / 4.0, 0.9 * t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge_solver::{solve_charge, TimeGrid};

    const A14: f64 = 1.0 / (4.0 * PI);

    fn stationary_run(t_end: f64, h: f64) -> (ChargeTrajectory, InitialState, FourierAlpha) {
        let alpha = FourierAlpha::constant(1.0, -A14);
        let state = InitialState::bound(-A14).unwrap();
        let grid = TimeGrid::from_step_and_end(h, t_end).unwrap();
        let traj = solve_charge(&alpha, &state.forcing_series(&grid), &grid).unwrap();
        (traj, state, alpha)
    }

    #[test]
    fn survival_starts_at_one() {
        let (traj, state, _) = stationary_run(2.0, 1e-3);
        let s = survival_sampled(&traj, &state, &[0, 500, 1000]).unwrap();
        assert!((s.theta[0] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn survival_stationary_modulus_one() {
        let (traj, state, _) = stationary_run(5.0, 1e-3);
        let idx: Vec<usize> = (0..=50).map(|k| k * 100).collect();
        let s = survival_sampled(&traj, &state, &idx).unwrap();
        for (t, th) in s.times.iter().zip(&s.theta) {
            assert!(
                (th.norm() - 1.0).abs() < 1e-3,
                "t={t}: |theta| = {}",
                th.norm()
            );
        }
        assert!(!s.unitarity_flag);
        // theta should in fact track e^{it}
        let j = idx.len() - 1;
        let expect = Complex64::new(0.0, s.times[j]).exp();
        assert!((s.theta[j] - expect).norm() < 2e-3);
    }

    #[test]
    fn wavefunction_small_r_recovers_charge() {
        let (traj, state, _) = stationary_run(1.0, 1e-3);
        let j = traj.grid.count() - 1;
        let q = traj.q[j];
        for &r in &[1e-2, 1e-3] {
            let psi = wavefunction_at(&traj, &state, r, j).unwrap();
            let extracted = 4.0 * PI * r * psi;
            assert!(
                (extracted - q).norm() < 0.05 * q.norm(),
                "r={r}: {extracted} vs {q}"
            );
        }
        // the deviation shrinks linearly in r
        let d1 = (4.0 * PI * 1e-2 * wavefunction_at(&traj, &state, 1e-2, j).unwrap() - q).norm();
        let d2 = (4.0 * PI * 1e-3 * wavefunction_at(&traj, &state, 1e-3, j).unwrap() - q).norm();
        assert!(d2 < 0.3 * d1, "d(1e-2)={d1}, d(1e-3)={d2}");
    }

    #[test]
    fn wavefunction_stationary_modulus_matches_bound_state() {
        let (traj, state, _) = stationary_run(3.0, 1e-3);
        let j = traj.grid.count() - 1;
        for &r in &[0.3, 1.0, 2.5] {
            let psi = wavefunction_at(&traj, &state, r, j).unwrap();
            let phi = state.value_at(r).unwrap();
            assert!(
                (psi.norm() - phi).abs() < 3e-3 * phi,
                "r={r}: |psi| = {} vs {phi}",
                psi.norm()
            );
        }
    }

    #[test]
    fn wavefunction_at_t0_is_initial_state() {
        let (traj, state, _) = stationary_run(1.0, 1e-2);
        let psi = wavefunction_at(&traj, &state, 0.7, 0).unwrap();
        assert!((psi.re - state.value_at(0.7).unwrap()).abs() < 1e-14);
        assert!(psi.im == 0.0);
    }

    #[test]
    fn ball_probability_initial_state_closed_form() {
        let (traj, _, alpha) = stationary_run(0.5, 1e-2);
        let state = InitialState::bound(-A14).unwrap();
        // int_0^R 4 pi r^2 phi^2 dr = 1 - e^{-2 beta R} (1 + 2 beta R ... ):
        // for phi = sqrt(2|a|) e^{-beta r}/r the integral is
        // 8 pi |a| int_0^R e^{-2 beta r} dr = (4 pi |a| / beta)(1 - e^{-2 beta R})
        let beta = 4.0 * PI * A14;
        for &big_r in &[0.5, 1.0, 3.0] {
            let p = ball_probability(&traj, &alpha, &state, big_r, 0).unwrap();
            let exact = 4.0 * PI * A14 / beta * (1.0 - (-2.0 * beta * big_r).exp());
            assert!((p - exact).abs() < 1e-8, "R={big_r}: {p} vs {exact}");
        }
    }

    #[test]
    fn ball_probability_stationary_is_conserved() {
        let (traj, state, alpha) = stationary_run(2.0, 1e-3);
        let j = traj.grid.count() - 1;
        let p0 = ball_probability(&traj, &alpha, &state, 2.0, 0).unwrap();
        let pt = ball_probability(&traj, &alpha, &state, 2.0, j).unwrap();
        assert!(
            (pt - p0).abs() < 3e-3,
            "ball probability drifted: {p0} -> {pt}"
        );
    }

    #[test]
    fn norm_captured_at_large_radius() {
        let (traj, state, alpha) = stationary_run(1.0, 1e-3);
        let j = traj.grid.count() - 1;
        let p = ball_probability(&traj, &alpha, &state, 12.0, j).unwrap();
        assert!((p - 1.0).abs() < 5e-3, "norm in ball of 12: {p}");
        assert!(p < 1.0 + 5e-3);
    }

    #[test]
    fn decay_fit_exact_power_law() {
        let times: Vec<f64> = (1..400).map(|k| 0.5 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.7 * t.powf(-1.5)).collect();
        let fit = decay_fit(&times, &values, (10.0, 150.0)).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-6);
        assert!((fit.amplitude - 3.7).abs() < 1e-6);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn decay_fit_power_plus_exponential() {
        let times: Vec<f64> = (1..2000).map(|k| 0.1 * k as f64).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|t| 2.0 * t.powf(-1.5) + 5.0 * (-0.8 * t).exp())
            .collect();
        // early window is contaminated, late window clean
        let late = decay_fit(&times, &values, (60.0, 190.0)).unwrap();
        assert!((late.exponent + 1.5).abs() < 0.02, "late {}", late.exponent);
        let early = decay_fit(&times, &values, (2.0, 60.0)).unwrap();
        assert!(
            (early.exponent + 1.5).abs() > (late.exponent + 1.5).abs(),
            "window motion should improve the exponent"
        );
    }

    #[test]
    fn decay_fit_window_too_narrow() {
        let times: Vec<f64> = (1..10).map(|k| k as f64).collect();
        let values = vec![1.0; times.len()];
        assert!(matches!(
            decay_fit(&times, &values, (2.0, 5.0)),
            Err(ObsError::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn decay_fit_noise_rejected() {
        let mut s = 1234567u64;
        let mut r = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let times: Vec<f64> = (1..200).map(|k| k as f64).collect();
        let values: Vec<f64> = times.iter().map(|_| 0.5 + r()).collect();
        assert!(matches!(
            decay_fit(&times, &values, (5.0, 190.0)),
            Err(ObsError::WindowTooNoisy { .. })
        ));
    }
}
