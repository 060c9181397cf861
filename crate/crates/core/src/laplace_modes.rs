//! Truncated Laplace-domain mode system.
//!
//! Sampling the Laplace transform of the charge on the strip
//! `Im p ∈ [0, omega)` through `q_n(p) = q~(p + i omega n)` turns the charge
//! equation into the linear system `(I - L(p)) q = g(p)` with
//!
//! ```text
//! (L q)_n = -4 pi / (4 pi alpha_0 + sqrt(omega n - i p)) * sum_{k != 0} alpha_k q_{n+k}
//! ```
//!
//! truncated here to `n in [-M, M]`. The same assembly covers a zero mean
//! (`alpha_0 = 0` just removes the constant in the row denominators) and a
//! positive mean. On top of the direct solver this module provides the
//! imaginary-axis scans used to probe for poles, the reduced systems that
//! split off a singular row, the `c + d sqrt(p)` branch fit at the origin,
//! and the closed-form value of the fitted slope.

use crate::alpha_model::FourierAlpha;
use crate::branch::{sqrt_neg_i, sqrt_omega_n_minus_ip};
use crate::free_dynamics::InitialState;
use crate::linalg::{solve_with_diagnostics, CMatrix, LinalgError};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("truncation half-width {m} is below the drive support radius {support}")]
    TruncationTooSmall { m: i64, support: i64 },
    #[error("row n={n} has a vanishing denominator at this p")]
    SingularRow { n: i64 },
    #[error("mode system numerically singular (condition ~ {condition:.3e})")]
    NumericallySingular { condition: f64 },
    #[error("branch fit residual {residual:.3e} exceeds 1e-4 * (|c|+|d|) = {scale:.3e}")]
    PoorFit { residual: f64, scale: f64 },
    #[error("branch-fit window must satisfy 0 < lo < hi")]
    BadWindow,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Mean-sign case of the mode system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeCase {
    NegativeMean,
    ZeroMean,
    PositiveMean,
}

/// Index window `n in [-m, m]` plus the case tag.
#[derive(Debug, Clone, Copy)]
pub struct ModeTruncation {
    pub m: i64,
    pub case: ModeCase,
}

impl ModeTruncation {
    pub fn new(m: i64, alpha: &FourierAlpha) -> Result<Self, ModeError> {
        if m < alpha.support_radius() {
            return Err(ModeError::TruncationTooSmall {
                m,
                support: alpha.support_radius(),
            });
        }
        let mean = alpha.mean();
        let case = if mean.abs() <= 1e-12 * alpha.ell1_norm().max(1e-300) {
            ModeCase::ZeroMean
        } else if mean < 0.0 {
            ModeCase::NegativeMean
        } else {
            ModeCase::PositiveMean
        };
        Ok(ModeTruncation { m, case })
    }

    pub fn dim(&self) -> usize {
        (2 * self.m + 1) as usize
    }

    pub fn index_of(&self, n: i64) -> usize {
        (n + self.m) as usize
    }

    pub fn n_of(&self, i: usize) -> i64 {
        i as i64 - self.m
    }
}

fn row_denominator(alpha: &FourierAlpha, n: i64, p: Complex64) -> Complex64 {
    4.0 * PI * alpha.mean() + sqrt_omega_n_minus_ip(alpha.omega(), n, p)
}

/// Assemble `A = I - L(p)` and the right-hand side for the initial state.
pub fn assemble_system(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
) -> Result<(CMatrix, Vec<Complex64>), ModeError> {
    let dim = trunc.dim();
    let mut a = CMatrix::identity(dim);
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
    let omega = alpha.omega();
    for i in 0..dim {
        let n = trunc.n_of(i);
        let denom = row_denominator(alpha, n, p);
        if denom.norm() < 1e-12 {
            return Err(ModeError::SingularRow { n });
        }
        let scale = 4.0 * PI / denom;
        for &(k, ck) in alpha.coeffs() {
            if k == 0 {
                continue;
            }
            let target = n + k;
            if target.abs() <= trunc.m {
                a[(i, trunc.index_of(target))] += scale * ck;
            }
        }
        let shifted = p + Complex64::new(0.0, omega * n as f64);
        rhs[i] = state.mode_rhs_amplitude(shifted) / denom;
    }
    Ok((a, rhs))
}

/// Truncated mode vector at one `p`, with solve diagnostics.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub p: Complex64,
    pub m: i64,
    pub q_modes: Vec<Complex64>,
    pub residual: f64,
    pub condition: f64,
    /// crude magnitude of what the truncation can feed back into the window
    pub tail_bound: f64,
}

impl ModeSolution {
    pub fn q(&self, n: i64) -> Complex64 {
        self.q_modes[(n + self.m) as usize]
    }

    pub fn inf_norm(&self) -> f64 {
        self.q_modes.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn solve_modes(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
) -> Result<ModeSolution, ModeError> {
    let (a, rhs) = assemble_system(alpha, trunc, p, state)?;
    let rep = solve_with_diagnostics(&a, &rhs)?;
    if rep.condition > 1e14 {
        return Err(ModeError::NumericallySingular {
            condition: rep.condition,
        });
    }
    let sol_norm = rep.x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let boundary = row_denominator(alpha, trunc.m, p).norm().max(1e-300);
    let tail_bound = 4.0 * PI * alpha.ell1_norm() / boundary * sol_norm;
    Ok(ModeSolution {
        p,
        m: trunc.m,
        q_modes: rep.x,
        residual: rep.residual,
        condition: rep.condition,
        tail_bound,
    })
}

/// One sampled point of an imaginary-axis scan.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub s: f64,
    pub eps: f64,
    pub inf_norm: f64,
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    /// `s` values where the solution grew by more than 10x from the largest
    /// to the smallest offset
    pub growth_flags: Vec<f64>,
    pub max_condition: f64,
}

/// Probe the strip boundary: solve at `p = eps + i s` for every `s` in the
/// grid and every offset in the ladder, recording norms and condition
/// numbers. Report-only; singular rows at a probe point are recorded as
/// growth rather than bubbled up as errors.
pub fn scan_imaginary_axis(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    state: &InitialState,
    s_grid: &[f64],
    eps_ladder: &[f64],
) -> ScanReport {
    let mut points = Vec::new();
    let mut growth_flags = Vec::new();
    let mut max_condition = 0.0f64;
    for &s in s_grid {
        let mut first: Option<f64> = None;
        let mut last: Option<f64> = None;
        for &eps in eps_ladder {
            let p = Complex64::new(eps, s);
            match solve_modes(alpha, trunc, p, state) {
                Ok(sol) => {
                    max_condition = max_condition.max(sol.condition);
                    if first.is_none() {
                        first = Some(sol.inf_norm());
                    }
                    last = Some(sol.inf_norm());
                    points.push(ScanPoint {
                        s,
                        eps,
                        inf_norm: sol.inf_norm(),
                        condition: sol.condition,
                    });
                }
                Err(_) => {
                    points.push(ScanPoint {
                        s,
                        eps,
                        inf_norm: f64::INFINITY,
                        condition: f64::INFINITY,
                    });
                    last = Some(f64::INFINITY);
                }
            }
        }
        if let (Some(a), Some(b)) = (first, last) {
            if b > 10.0 * a {
                growth_flags.push(s);
            }
        }
    }
    ScanReport {
        points,
        growth_flags,
        max_condition,
    }
}

/// Solution of the reduced systems that exclude one singular row: the full
/// solution decomposes as `q_n = r_n + t_n q_{n_sing}` for `n != n_sing`.
#[derive(Debug, Clone)]
pub struct AuxiliarySolution {
    pub singular_index: i64,
    pub p: Complex64,
    m: i64,
    /// homogeneous transfer vector, full window with a hole at the singular row
    pub t_vec: Vec<Complex64>,
    /// forced vector, same layout
    pub r_vec: Vec<Complex64>,
    /// `F = 4 pi sum_{k != n_sing} alpha_{k - n_sing} t_k`
    pub f_value: Complex64,
    /// `G = -4 pi sum_{k != n_sing} alpha_{k - n_sing} r_k`
    pub g_value: Complex64,
    /// the singular-row amplitude recovered from the scalar equation
    pub q_singular: Complex64,
}

impl AuxiliarySolution {
    pub fn t(&self, n: i64) -> Complex64 {
        self.t_vec[(n + self.m) as usize]
    }

    pub fn r(&self, n: i64) -> Complex64 {
        self.r_vec[(n + self.m) as usize]
    }

    /// `q_n` reconstructed from the decomposition.
    pub fn reconstruct(&self, n: i64) -> Complex64 {
        if n == self.singular_index {
            self.q_singular
        } else {
            self.r(n) + self.t(n) * self.q_singular
        }
    }
}

/// Solve the reduced `t`/`r` systems with the row `n_sing` removed, and
/// recover the singular amplitude from its scalar equation.
pub fn solve_auxiliary(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
    n_sing: i64,
) -> Result<AuxiliarySolution, ModeError> {
    solve_auxiliary_excluding(alpha, trunc, p, state, &[n_sing])
}

fn solve_auxiliary_excluding(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
    excluded: &[i64],
) -> Result<AuxiliarySolution, ModeError> {
    let n_sing = *excluded.last().expect("at least one excluded index");
    let (a_full, rhs_full) = assemble_full_excluding(alpha, trunc, p, state, excluded)?;
    let dim = trunc.dim();
    let keep: Vec<usize> = (0..dim)
        .filter(|&i| !excluded.contains(&trunc.n_of(i)))
        .collect();
    let red_dim = keep.len();
    let mut a_red = CMatrix::zeros(red_dim);
    let mut g_red = vec![Complex64::new(0.0, 0.0); red_dim];
    let mut t_rhs = vec![Complex64::new(0.0, 0.0); red_dim];
    let sing_col = trunc.index_of(n_sing);
    for (ri, &i) in keep.iter().enumerate() {
        for (rj, &j) in keep.iter().enumerate() {
            a_red[(ri, rj)] = a_full[(i, j)];
        }
        g_red[ri] = rhs_full[i];
        // moving the singular column to the right-hand side
        t_rhs[ri] = -a_full[(i, sing_col)];
    }
    let t_sol = solve_with_diagnostics(&a_red, &t_rhs)?;
    let r_sol = solve_with_diagnostics(&a_red, &g_red)?;
    if t_sol.condition > 1e14 {
        return Err(ModeError::NumericallySingular {
            condition: t_sol.condition,
        });
    }

    let mut t_vec = vec![Complex64::new(0.0, 0.0); dim];
    let mut r_vec = vec![Complex64::new(0.0, 0.0); dim];
    for (ri, &i) in keep.iter().enumerate() {
        t_vec[i] = t_sol.x[ri];
        r_vec[i] = r_sol.x[ri];
    }

    // F and G couple the reduced vectors back into the singular row
    let mut f_value = Complex64::new(0.0, 0.0);
    let mut g_value = Complex64::new(0.0, 0.0);
    for &i in &keep {
        let k = trunc.n_of(i);
        let ck = alpha.coeff(k - n_sing);
        f_value += 4.0 * PI * ck * t_vec[i];
        g_value -= 4.0 * PI * ck * r_vec[i];
    }

    // scalar equation for the singular amplitude:
    // (denom + F) q_sing = g_amp - 4 pi sum alpha_{k-n_sing} r_k = g_amp + G
    let denom = row_denominator(alpha, n_sing, p);
    let shifted = p + Complex64::new(0.0, alpha.omega() * n_sing as f64);
    let g_amp = state.mode_rhs_amplitude(shifted);
    let q_singular = (g_amp + g_value) / (denom + f_value);

    Ok(AuxiliarySolution {
        singular_index: n_sing,
        p,
        m: trunc.m,
        t_vec,
        r_vec,
        f_value,
        g_value,
        q_singular,
    })
}

// assemble in the multiplied-through form (row n times its denominator is
// not needed; we keep the normalized rows but zero the excluded columns'
// couplings inside the kept block)
fn assemble_full_excluding(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
    excluded: &[i64],
) -> Result<(CMatrix, Vec<Complex64>), ModeError> {
    let dim = trunc.dim();
    let mut a = CMatrix::identity(dim);
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
    let omega = alpha.omega();
    for i in 0..dim {
        let n = trunc.n_of(i);
        if excluded.contains(&n) {
            continue;
        }
        let denom = row_denominator(alpha, n, p);
        if denom.norm() < 1e-12 {
            return Err(ModeError::SingularRow { n });
        }
        let scale = 4.0 * PI / denom;
        for &(k, ck) in alpha.coeffs() {
            if k == 0 {
                continue;
            }
            let target = n + k;
            if target.abs() <= trunc.m {
                a[(i, trunc.index_of(target))] += scale * ck;
            }
        }
        let shifted = p + Complex64::new(0.0, omega * n as f64);
        rhs[i] = state.mode_rhs_amplitude(shifted) / denom;
    }
    Ok((a, rhs))
}

/// Resonant variant: inside the reduced system that already excludes the row
/// `0`, split off the additional singular row `n_res`, i.e. solve the
/// doubly-reduced systems for `u` (forced) and `v` (transfer), so that
/// `r_n = u_n + v_n r_{n_res}`.
///
/// Everything returned lives in that once-reduced layer: `t`/`r` hold the
/// `v`/`u` vectors, and `q_singular` is `r_{n_res}`, not the full mode
/// amplitude (composing with the outer `q_n = r_n + t_n q_0` decomposition
/// reaches the full solution).
pub fn solve_auxiliary_resonant(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    p: Complex64,
    state: &InitialState,
    n_res: i64,
) -> Result<AuxiliarySolution, ModeError> {
    solve_auxiliary_excluding(alpha, trunc, p, state, &[0, n_res])
}

/// Least-squares fit of `q_n(p)` against `c + d sqrt(p)` (with analytic
/// correction terms up to `p^{5/2}`) on a window of real positive `p`.
#[derive(Debug, Clone)]
pub struct BranchFit {
    pub n: i64,
    pub c: Complex64,
    pub d: Complex64,
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

pub fn branch_fit(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    state: &InitialState,
    n: i64,
    window: (f64, f64),
    points: usize,
) -> Result<BranchFit, ModeError> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) || points < 8 {
        return Err(ModeError::BadWindow);
    }
    let mut ps = Vec::with_capacity(points);
    let ratio = (hi / lo).ln();
    for i in 0..points {
        ps.push(lo * (ratio * i as f64 / (points - 1) as f64).exp());
    }
    let values: Vec<Complex64> = ps
        .iter()
        .map(|&p| solve_modes(alpha, trunc, Complex64::new(p, 0.0), state).map(|s| s.q(n)))
        .collect::<Result<_, _>>()?;

    // polynomial fit in x = sqrt(p) up to degree 7, by modified
    // Gram-Schmidt QR with reorthogonalization
    let ncols = 8;
    let rows = ps.len();
    let xs: Vec<f64> = ps.iter().map(|&p| p.sqrt()).collect();
    let mut q_cols: Vec<Vec<f64>> = Vec::with_capacity(ncols);
    let mut r_mat = vec![vec![0.0f64; ncols]; ncols];
    for j in 0..ncols {
        let mut v: Vec<f64> = xs.iter().map(|&x| x.powi(j as i32)).collect();
        for _pass in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let proj: f64 = qi.iter().zip(&v).map(|(a, b)| a * b).sum();
                r_mat[i][j] += proj;
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= proj * qk;
                }
            }
        }
        let nrm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        r_mat[j][j] = nrm;
        for vk in v.iter_mut() {
            *vk /= nrm;
        }
        q_cols.push(v);
    }
    // coefficients from R a = Q^T values (two real back-substitutions)
    let qtv: Vec<Complex64> = q_cols
        .iter()
        .map(|q| q.iter().zip(&values).map(|(a, v)| a * v).sum())
        .collect();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); ncols];
    for i in (0..ncols).rev() {
        let mut acc = qtv[i];
        for j in i + 1..ncols {
            acc -= r_mat[i][j] * coeffs[j];
        }
        coeffs[i] = acc / r_mat[i][i];
    }

    let mut residual = 0.0f64;
    for idx in 0..rows {
        let mut model = Complex64::new(0.0, 0.0);
        for (j, cj) in coeffs.iter().enumerate() {
            model += cj * xs[idx].powi(j as i32);
        }
        residual = residual.max((model - values[idx]).norm());
    }
    let c = coeffs[0];
    let d = coeffs[1];
    let scale = 1e-4 * (c.norm() + d.norm());
    if residual > scale {
        return Err(ModeError::PoorFit { residual, scale });
    }
    Ok(BranchFit {
        n,
        c,
        d,
        residual,
        window,
        points,
    })
}

/// Closed-form branch data at the origin obtained from the reduced systems:
/// the slope of the `sqrt(p)` part of `q_0` and the constants entering it.
#[derive(Debug, Clone)]
pub struct BranchSlopeClosedForm {
    /// `A = 4 pi alpha_0 + F(0)`
    pub a_value: Complex64,
    pub f_value: Complex64,
    pub g_value: Complex64,
    /// analytic part `q_0(0)`
    pub c0: Complex64,
    /// slope of the `sqrt(p)` part of `q_0` at `p = 0`
    pub d0: Complex64,
}

/// Evaluate the closed form at `p ~ 0` (a tiny positive offset keeps every
/// row denominator on its right-half-plane branch).
pub fn branch_slope_closed_form(
    alpha: &FourierAlpha,
    trunc: &ModeTruncation,
    state: &InitialState,
) -> Result<BranchSlopeClosedForm, ModeError> {
    let p0 = Complex64::new(1e-9, 0.0);
    let aux = solve_auxiliary(alpha, trunc, p0, state, 0)?;
    let a_value = 4.0 * PI * alpha.mean() + aux.f_value;
    let (n0_g, n1_g) = mode_rhs_sqrtp_expansion(state);
    let n0 = aux.g_value + n0_g;
    let n1 = n1_g;
    let c = sqrt_neg_i();
    let d0 = (n1 * a_value - c * n0) / (a_value * a_value);
    let c0 = n0 / a_value;
    Ok(BranchSlopeClosedForm {
        a_value,
        f_value: aux.f_value,
        g_value: aux.g_value,
        c0,
        d0,
    })
}

/// Expansion `g_amp(p) = N0 + N1 sqrt(p) + O(p)` along the positive real ray.
fn mode_rhs_sqrtp_expansion(state: &InitialState) -> (Complex64, Complex64) {
    match state {
        InitialState::Bound(b) => {
            let beta = b.beta();
            let s2a = (2.0 * b.alpha().abs()).sqrt();
            let n0 = Complex64::new(0.0, -4.0 * PI) * s2a / beta;
            let n1 = Complex64::new(0.0, 4.0 * PI) * s2a * sqrt_neg_i() / (beta * beta);
            (n0, n1)
        }
        InitialState::Gaussian(g) => {
            let a = g.sigma * g.sigma / 2.0;
            let k = 2.0 / PI * g.momentum_amplitude();
            let n0 = k * Complex64::new(0.0, -1.0) * 0.5 * (PI / a).sqrt();
            let n1 = k * Complex64::new(0.0, 1.0) * (PI / 2.0) * sqrt_neg_i();
            (n0, n1)
        }
    }
}

/// Time-averaged quadratic form of the drive on vectors supported on
/// positive indices, plus a witness search when the drive takes negative
/// values.
#[derive(Debug, Clone)]
pub struct PositivityReport {
    /// minimum of the normalized form over the random trials
    pub min_form: f64,
    /// true when the drive is nonnegative over the sampled period
    pub drive_nonnegative: bool,
    /// packet vector witnessing indefiniteness, if one was found
    pub witness: Option<Vec<Complex64>>,
    pub witness_form: Option<f64>,
}

/// Evaluate `(T, alpha T)` over one period for random `T` supported on
/// `n = 1..k_max`; the form is `sum_{n,m} conj(T_n) alpha_{n-m} T_m`.
pub fn positivity_check(
    alpha: &FourierAlpha,
    k_max: usize,
    trials: usize,
    seed: u64,
) -> PositivityReport {
    let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let form = |t: &[Complex64]| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, ti) in t.iter().enumerate() {
            for (j, tj) in t.iter().enumerate() {
                acc += ti.conj() * alpha.coeff(i as i64 - j as i64) * tj;
            }
        }
        let norm: f64 = t.iter().map(|v| v.norm_sqr()).sum();
        acc.re / norm.max(1e-300)
    };
    let mut min_form = f64::INFINITY;
    for _ in 0..trials {
        let t: Vec<Complex64> = (0..k_max).map(|_| Complex64::new(next(), next())).collect();
        min_form = min_form.min(form(&t));
    }
    let drive_nonnegative = alpha.min_over_period() >= -1e-12 * alpha.ell1_norm().max(1e-300);

    // witness search: wave packets concentrated where the drive is lowest
    let mut witness = None;
    let mut witness_form = None;
    if !drive_nonnegative {
        let period = alpha.period();
        let samples = 512;
        let (mut t_min, mut v_min) = (0.0, f64::INFINITY);
        for k in 0..samples {
            let t = period * k as f64 / samples as f64;
            let v = alpha.eval(t);
            if v < v_min {
                v_min = v;
                t_min = t;
            }
        }
        for width in [4usize, 8, 16, 32, 64] {
            let packet: Vec<Complex64> = (1..=width)
                .map(|n| Complex64::from_polar(1.0, alpha.omega() * n as f64 * t_min))
                .collect();
            let v = form(&packet);
            if v < 0.0 {
                witness_form = Some(v);
                witness = Some(packet);
                break;
            }
        }
    }
    PositivityReport {
        min_form,
        drive_nonnegative,
        witness,
        witness_form,
    }
}
