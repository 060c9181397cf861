//! Dense complex LU factorization with partial pivoting, plus a one-norm
//! condition estimator in the Hager style. Sized for the truncated mode
//! systems (a few hundred rows), where a hand-rolled solver is simpler than
//! carrying a BLAS dependency.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular at elimination step {step} (pivot {pivot:.3e})")]
    Singular { step: usize, pivot: f64 },
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// Maximum column sum of absolute values.
    pub fn norm_one(&self) -> f64 {
        let n = self.n;
        let mut best = 0.0f64;
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self[(i, j)].norm();
            }
            best = best.max(s);
        }
        best
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// LU factors of a row-permuted matrix: `P A = L U`.
pub struct CluFactors {
    n: usize,
    lu: Vec<Complex64>,
    piv: Vec<usize>,
}

pub fn lu_factor(a: &CMatrix) -> Result<CluFactors, LinalgError> {
    let n = a.n;
    let mut lu = a.data.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut imax = k;
        let mut vmax = lu[k * n + k].norm();
        for i in k + 1..n {
            let v = lu[i * n + k].norm();
            if v > vmax {
                vmax = v;
                imax = i;
            }
        }
        if vmax < 1e-300 {
            return Err(LinalgError::Singular {
                step: k,
                pivot: vmax,
            });
        }
        if imax != k {
            piv.swap(k, imax);
            for j in 0..n {
                lu.swap(k * n + j, imax * n + j);
            }
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let m = lu[i * n + k] / pivot;
            lu[i * n + k] = m;
            if m.norm_sqr() > 0.0 {
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= m * u;
                }
            }
        }
    }
    Ok(CluFactors { n, lu, piv })
}

impl CluFactors {
    /// Solve `A x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Solve `A^H x = b` using the stored factors.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        // A^H = U^H L^H P, so solve U^H y = b, then L^H g = y, then x = P^T g.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc / self.lu[i * n + i].conj();
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (k, &p) in self.piv.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Hager-style estimate of `‖A⁻¹‖₁`.
    pub fn inv_norm_one_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let ynorm: f64 = y.iter().map(|v| v.norm()).sum();
            // sign vector xi_j = y_j / |y_j|
            let xi: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    if v.norm() > 0.0 {
                        v / v.norm()
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect();
            let z = self.solve_adjoint(&xi);
            let (mut jmax, mut zmax) = (0usize, 0.0f64);
            for (j, v) in z.iter().enumerate() {
                if v.norm() > zmax {
                    zmax = v.norm();
                    jmax = j;
                }
            }
            if ynorm <= est {
                break;
            }
            est = ynorm;
            let dot: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= dot {
                break;
            }
            x = vec![Complex64::new(0.0, 0.0); n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        est
    }
}

/// Solve with iterative refinement skipped: factor, solve, and report the
/// true residual and a one-norm condition estimate.
pub struct SolveReport {
    pub x: Vec<Complex64>,
    pub residual: f64,
    pub condition: f64,
}

pub fn solve_with_diagnostics(a: &CMatrix, b: &[Complex64]) -> Result<SolveReport, LinalgError> {
    let f = lu_factor(a)?;
    let x = f.solve(b);
    let ax = a.matvec(&x);
    let residual = ax
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).norm())
        .fold(0.0f64, f64::max);
    let condition = a.norm_one() * f.inv_norm_one_estimate();
    Ok(SolveReport {
        x,
        residual,
        condition,
    })
}
