//! Product-integration solver for the charge equation
//!
//! ```text
//! q(t) + 4 sqrt(pi i) int_0^t alpha(tau) q(tau) / sqrt(t - tau) dtau = RHS(t)
//! ```
//!
//! on a uniform grid. The Abel kernel is integrated exactly against a
//! piecewise-linear interpolant (product trapezoidal rule), which makes the
//! weights a convolution in `j - k` apart from the first column, and the
//! march a sequence of scalar complex solves.
//!
//! The right-hand side for an initial state `psi_0` is the Abel transform of
//! the forcing amplitude. Its `t^{-1/2}` and `t^{1/2}` parts are integrated
//! against the kernel in closed form (`pi` and `pi t / 2` respectively); only
//! the twice-reduced smooth remainder is sampled.

use crate::alpha_model::FourierAlpha;
use crate::branch::four_sqrt_pi_i;
use crate::free_dynamics::ComplexAmplitudeSeries;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("time grid needs h > 0 and at least two points")]
    BadGrid,
    #[error("forcing series grid does not match the solver grid")]
    GridMismatch,
    #[error("marching step {j} is ill-conditioned: |1 + gamma w alpha| = {magnitude:.3e}")]
    StepIllConditioned { j: usize, magnitude: f64 },
    #[error("Laplace transform needs Re p > 0, got {0}")]
    NonDecayingTransform(f64),
    #[error("Laplace truncation tail {tail:.3e} exceeds 10% of |value| {value:.3e}")]
    TailDominates { tail: f64, value: f64 },
}

/// Uniform grid `t_j = j h`, `j = 0..count-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    h: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(h: f64, count: usize) -> Result<Self, SolverError> {
        if h > 0.0 && count >= 2 {
            Ok(TimeGrid { h, count })
        } else {
            Err(SolverError::BadGrid)
        }
    }

    /// Grid reaching (at least) `t_end` with step `h`.
    pub fn from_step_and_end(h: f64, t_end: f64) -> Result<Self, SolverError> {
        if !(h > 0.0 && t_end > 0.0) {
            return Err(SolverError::BadGrid);
        }
        // ceil with a guard so that t_end/h landing a rounding error above
        // an integer does not add a spurious step
        let steps = (t_end / h - 1e-9).ceil().max(1.0) as usize;
        Self::new(h, steps + 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn t(&self, j: usize) -> f64 {
        self.h * j as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.count - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|j| self.t(j))
    }

    /// Index of the grid point nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.h).round() as usize).min(self.count - 1)
    }
}

/// Product-trapezoidal weights for `int_0^{t_j} phi(tau)/sqrt(t_j - tau) dtau`.
///
/// The rule is `sqrt(h) * (a_j phi_0 + sum_m c_m phi_{j-m} + (4/3) phi_j)`
/// with `m = 1 .. j-1`, exact for piecewise-linear `phi`. `a` and `c` use
/// cancellation-free rearrangements of the cell moments, so the weights stay
/// accurate at large lags.
#[derive(Debug, Clone)]
pub struct AbelWeights {
    sqrt_h: f64,
    /// first-column weight, index j
    a: Vec<f64>,
    /// interior convolution weight, index m = j - k
    c: Vec<f64>,
    /// `c` reversed for ascending-slice dot products
    c_rev: Vec<f64>,
}

pub const ABEL_DIAG: f64 = 4.0 / 3.0;

// cell moments against (m - sigma)^{-1/2} on sigma in [0,1]
fn moment_a(m: f64) -> f64 {
    let u = m.sqrt();
    let v = (m - 1.0).sqrt();
    2.0 / 3.0 * (2.0 - u / (u + v)) / (u + v)
}

fn moment_b(m: f64) -> f64 {
    let u = m.sqrt();
    let v = (m - 1.0).sqrt();
    2.0 / 3.0 * (1.0 + u / (u + v)) / (u + v)
}

pub fn abel_weights(grid: &TimeGrid) -> AbelWeights {
    let n = grid.count();
    let mut a = vec![0.0; n];
    let mut c = vec![0.0; n];
    for m in 1..n {
        a[m] = moment_a(m as f64);
        if m + 1 <= n {
            c[m] = moment_b((m + 1) as f64) + moment_a(m as f64);
        }
    }
    // c reversed, so the marching dot product runs over two ascending
    // slices and vectorizes: c_rev[n - 1 - m] = c[m]
    let c_rev: Vec<f64> = c.iter().rev().copied().collect();
    AbelWeights {
        sqrt_h: grid.h().sqrt(),
        a,
        c,
        c_rev,
    }
}

impl AbelWeights {
    /// Apply the rule to the history `phi[0..=j]`.
    pub fn integrate_history(&self, phi: &[Complex64], j: usize) -> Complex64 {
        if j == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = self.a[j] * phi[0];
        for (cm, pk) in self.c[1..j].iter().zip(phi[1..j].iter().rev()) {
            acc += cm * pk;
        }
        acc += ABEL_DIAG * phi[j];
        self.sqrt_h * acc
    }

    /// Interior convolution `sum_{m=1}^{j-1} c[m] s[j - m]` with split
    /// real/imaginary storage, as ascending-slice dot products. Partial sums
    /// are split four ways to break the reduction dependency chain.
    fn interior_dot(&self, sre: &[f64], sim: &[f64], j: usize) -> (f64, f64) {
        let n = self.c_rev.len();
        // sum_{k=1}^{j-1} s[k] c[j-k]: c[j-k] = c_rev[n - 1 - (j - k)]
        let cs = &self.c_rev[n - j..n - 1];
        let xr = &sre[1..j];
        let xi = &sim[1..j];
        let len = cs.len();
        let mut r = [0.0f64; 4];
        let mut i4 = [0.0f64; 4];
        let chunks = len / 4;
        for kc in 0..chunks {
            let b = kc * 4;
            for l in 0..4 {
                r[l] += cs[b + l] * xr[b + l];
                i4[l] += cs[b + l] * xi[b + l];
            }
        }
        let (mut ar, mut ai) = (r[0] + r[1] + r[2] + r[3], i4[0] + i4[1] + i4[2] + i4[3]);
        for k in chunks * 4..len {
            ar += cs[k] * xr[k];
            ai += cs[k] * xi[k];
        }
        (ar, ai)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeTag {
    ProductTrapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKind {
    InitialStateSeries,
    DirectRhs,
    Homogeneous,
}

/// Solution of the discretized charge equation.
#[derive(Debug, Clone)]
pub struct ChargeTrajectory {
    pub grid: TimeGrid,
    pub q: Vec<Complex64>,
    pub scheme: SchemeTag,
    pub forcing_kind: ForcingKind,
    /// max defect of the discretized equation over a row subsample,
    /// normalized by `1 + max |q|`
    pub residual_norm: f64,
}

struct March {
    weights: AbelWeights,
    gamma: Complex64,
    alpha_at: Vec<f64>,
}

impl March {
    fn new(alpha: &FourierAlpha, grid: &TimeGrid) -> Self {
        March {
            weights: abel_weights(grid),
            gamma: four_sqrt_pi_i(),
            alpha_at: grid.times().map(|t| alpha.eval(t)).collect(),
        }
    }

    fn diag_factor(&self, j: usize) -> Complex64 {
        1.0 + self.gamma * self.weights.sqrt_h * ABEL_DIAG * self.alpha_at[j]
    }
}

/// Solve the charge equation driven by an initial-state forcing series.
pub fn solve_charge(
    alpha: &FourierAlpha,
    forcing: &ComplexAmplitudeSeries,
    grid: &TimeGrid,
) -> Result<ChargeTrajectory, SolverError> {
    if forcing.grid != *grid || forcing.values.len() != grid.count() {
        return Err(SolverError::GridMismatch);
    }
    let m = March::new(alpha, grid);
    let n = grid.count();
    let gamma = m.gamma;
    let sqrt_h = m.weights.sqrt_h;
    let fs = &forcing.values;
    let c_inv_sqrt = forcing.sing_inv_sqrt;
    let c_sqrt = forcing.sing_sqrt;

    let mut q = vec![Complex64::new(0.0, 0.0); n];
    // v_k = fs_k - alpha_k q_k, stored split for the hot loop
    let mut vre = vec![0.0f64; n];
    let mut vim = vec![0.0f64; n];

    q[0] = gamma * PI * c_inv_sqrt;
    vre[0] = fs[0].re - m.alpha_at[0] * q[0].re;
    vim[0] = fs[0].im - m.alpha_at[0] * q[0].im;

    let aw = &m.weights;
    for j in 1..n {
        let denom = m.diag_factor(j);
        if denom.norm() < 1e-12 {
            return Err(SolverError::StepIllConditioned {
                j,
                magnitude: denom.norm(),
            });
        }
        let (dr, di) = aw.interior_dot(&vre, &vim, j);
        let (ar, ai) = (aw.a[j] * vre[0] + dr, aw.a[j] * vim[0] + di);
        let analytic = PI * c_inv_sqrt + 0.5 * PI * c_sqrt * grid.t(j);
        let rhs = gamma * (analytic + sqrt_h * (Complex64::new(ar, ai) + ABEL_DIAG * fs[j]));
        let qj = rhs / denom;
        q[j] = qj;
        vre[j] = fs[j].re - m.alpha_at[j] * qj.re;
        vim[j] = fs[j].im - m.alpha_at[j] * qj.im;
    }

    let residual_norm = defect_norm(&m, &q, |j| {
        gamma
            * (PI * c_inv_sqrt + 0.5 * PI * c_sqrt * grid.t(j) + m.weights.integrate_history(fs, j))
    });
    Ok(ChargeTrajectory {
        grid: grid.clone(),
        q,
        scheme: SchemeTag::ProductTrapezoid,
        forcing_kind: if c_inv_sqrt.norm() == 0.0
            && c_sqrt.norm() == 0.0
            && fs.iter().all(|v| v.norm() == 0.0)
        {
            ForcingKind::Homogeneous
        } else {
            ForcingKind::InitialStateSeries
        },
        residual_norm,
    })
}

/// Solve with the right-hand side given directly at the grid points
/// (manufactured solutions, homogeneous tests).
pub fn solve_charge_direct(
    alpha: &FourierAlpha,
    rhs: &[Complex64],
    grid: &TimeGrid,
) -> Result<ChargeTrajectory, SolverError> {
    if rhs.len() != grid.count() {
        return Err(SolverError::GridMismatch);
    }
    let m = March::new(alpha, grid);
    let n = grid.count();
    let gamma = m.gamma;
    let sqrt_h = m.weights.sqrt_h;

    let mut q = vec![Complex64::new(0.0, 0.0); n];
    let mut sre = vec![0.0f64; n];
    let mut sim = vec![0.0f64; n];
    q[0] = rhs[0];
    sre[0] = m.alpha_at[0] * q[0].re;
    sim[0] = m.alpha_at[0] * q[0].im;
    let aw = &m.weights;
    for j in 1..n {
        let denom = m.diag_factor(j);
        if denom.norm() < 1e-12 {
            return Err(SolverError::StepIllConditioned {
                j,
                magnitude: denom.norm(),
            });
        }
        let (dr, di) = aw.interior_dot(&sre, &sim, j);
        let (ar, ai) = (aw.a[j] * sre[0] + dr, aw.a[j] * sim[0] + di);
        let qj = (rhs[j] - gamma * sqrt_h * Complex64::new(ar, ai)) / denom;
        q[j] = qj;
        sre[j] = m.alpha_at[j] * qj.re;
        sim[j] = m.alpha_at[j] * qj.im;
    }

    let residual_norm = defect_norm(&m, &q, |j| rhs[j]);
    let hom = rhs.iter().all(|v| v.norm() == 0.0);
    Ok(ChargeTrajectory {
        grid: grid.clone(),
        q,
        scheme: SchemeTag::ProductTrapezoid,
        forcing_kind: if hom {
            ForcingKind::Homogeneous
        } else {
            ForcingKind::DirectRhs
        },
        residual_norm,
    })
}

// independent re-evaluation of the discrete equation on a row subsample
fn defect_norm(m: &March, q: &[Complex64], rhs_at: impl Fn(usize) -> Complex64) -> f64 {
    let n = q.len();
    let qmax = q.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let alpha_q: Vec<Complex64> = q.iter().zip(&m.alpha_at).map(|(qk, ak)| ak * qk).collect();
    let step = (n / 64).max(1);
    let mut worst = 0.0f64;
    for j in (0..n).step_by(step).chain([n - 1]) {
        if j == 0 {
            continue;
        }
        let lhs = q[j] + m.gamma * m.weights.integrate_history(&alpha_q, j);
        worst = worst.max((lhs - rhs_at(j)).norm());
    }
    worst / (1.0 + qmax)
}

/// The discretized right-hand side `4 sqrt(pi i) int_0^{t_j} forcing/sqrt(t_j - tau)`
/// as the solver sees it: closed forms for the split-off singular parts plus
/// product integration of the smooth remainder.
pub fn rhs_from_series(series: &ComplexAmplitudeSeries) -> Vec<Complex64> {
    let grid = &series.grid;
    let weights = abel_weights(grid);
    let gamma = four_sqrt_pi_i();
    (0..grid.count())
        .map(|j| {
            gamma
                * (PI * series.sing_inv_sqrt
                    + 0.5 * PI * series.sing_sqrt * grid.t(j)
                    + weights.integrate_history(&series.values, j))
        })
        .collect()
}

/// Trapezoidal Laplace transform of a uniformly sampled series.
pub fn laplace_of_samples(grid: &TimeGrid, values: &[Complex64], p: Complex64) -> Complex64 {
    let n = grid.count();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, v) in values.iter().enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        acc += w * (-p * grid.t(j)).exp() * v;
    }
    grid.h() * acc
}

/// Trapezoidal Laplace transform of a trajectory with a crude exponential
/// tail bound.
pub struct LaplaceValue {
    pub value: Complex64,
    pub tail_bound: f64,
}

pub fn laplace_of_trajectory(
    traj: &ChargeTrajectory,
    p: Complex64,
) -> Result<LaplaceValue, SolverError> {
    if p.re <= 0.0 {
        return Err(SolverError::NonDecayingTransform(p.re));
    }
    let h = traj.grid.h();
    let n = traj.grid.count();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, qj) in traj.q.iter().enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        acc += w * (-p * traj.grid.t(j)).exp() * qj;
    }
    let value = h * acc;
    let tail_bound = traj.q[n - 1].norm() * (-p.re * traj.grid.t_end()).exp() / p.re;
    if tail_bound > 0.1 * value.norm() {
        return Err(SolverError::TailDominates {
            tail: tail_bound,
            value: value.norm(),
        });
    }
    Ok(LaplaceValue { value, tail_bound })
}

/// Richardson-style convergence report from endpoint values on a sequence of
/// refining grids.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// per-grid endpoint error (against the oracle, or against the next
    /// refinement when no oracle is given)
    pub errors: Vec<f64>,
    /// observed orders from consecutive error ratios
    pub orders: Vec<f64>,
    pub non_monotone: bool,
}

pub fn convergence_study<S>(
    solve: S,
    grids: &[TimeGrid],
    oracle_endpoint: Option<Complex64>,
) -> Result<ConvergenceReport, SolverError>
where
    S: Fn(&TimeGrid) -> Result<ChargeTrajectory, SolverError>,
{
    assert!(grids.len() >= 2, "need at least two grids");
    let endpoints: Vec<Complex64> = grids
        .iter()
        .map(|g| solve(g).map(|t| *t.q.last().unwrap()))
        .collect::<Result<_, _>>()?;
    let errors: Vec<f64> = match oracle_endpoint {
        Some(exact) => endpoints.iter().map(|v| (v - exact).norm()).collect(),
        None => endpoints.windows(2).map(|w| (w[0] - w[1]).norm()).collect(),
    };
    let hs: Vec<f64> = grids.iter().map(|g| g.h()).collect();
    let orders: Vec<f64> = errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let non_monotone = errors.windows(2).any(|w| w[1] > w[0]);
    Ok(ConvergenceReport {
        errors,
        orders,
        non_monotone,
    })
}

/// A-priori growth envelope `|q(t)| <= C e^{16 pi^2 sup|alpha|^2 t}`,
/// checked in log space so large rates cannot overflow.
#[derive(Debug, Clone)]
pub struct AprioriBound {
    pub rate: f64,
    pub constant: f64,
    /// max over the grid of `log|q| - log C - rate t`; nonpositive when the
    /// bound holds
    pub margin: f64,
    pub satisfied: bool,
}

pub fn apriori_bound_check(traj: &ChargeTrajectory, alpha: &FourierAlpha) -> AprioriBound {
    let sup = alpha.sup_abs();
    let rate = 16.0 * PI * PI * sup * sup;
    let q0 = traj.q[0].norm();
    let constant = if q0 > 0.0 {
        q0
    } else {
        // no initial charge to pin the constant: fit the smallest valid one
        traj.q
            .iter()
            .enumerate()
            .map(|(j, q)| q.norm().ln() - rate * traj.grid.t(j))
            .fold(f64::NEG_INFINITY, f64::max)
            .exp()
    };
    let log_c = constant.ln();
    let mut margin = f64::NEG_INFINITY;
    for (j, q) in traj.q.iter().enumerate() {
        if q.norm() > 0.0 {
            margin = margin.max(q.norm().ln() - log_c - rate * traj.grid.t(j));
        }
    }
    AprioriBound {
        rate,
        constant,
        margin,
        satisfied: margin <= 1e-9,
    }
}
