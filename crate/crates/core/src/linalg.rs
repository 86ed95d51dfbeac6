//! Small dense linear-algebra helpers shared by the state-space code.
//!
//! Every matrix in this crate is tiny (state dimension three for the
//! Matérn-1/2 latent force model), so the helpers favour clarity over
//! blocking or in-place tricks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A P + P Aᵀ + G = 0` for `P` by vectorisation.
///
/// Uses `vec(A P + P Aᵀ) = (I ⊗ A + A ⊗ I) vec(P)`; fine for n ≤ 8.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov: A is {}x{}, G is {}x{}",
            a.nrows(),
            a.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, g.iter().map(|v| -v));
    let lu = op.lu();
    let sol = lu.solve(&rhs).ok_or(Error::Singular("lyapunov operator"))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrized(p))
}

/// Symmetrizes `q` and clips slightly negative eigenvalues to zero.
///
/// Eigenvalues below `-tol` are reported as an error instead of being repaired.
pub fn repair_psd(q: DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let q = symmetrized(q);
    let eig = q.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    if min >= 0.0 {
        return Ok(q);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(symmetrized(rebuilt))
}

/// Log density of a zero-mean Gaussian evaluated at `residual`.
pub fn gaussian_log_density(residual: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let n = residual.len();
    if n == 1 {
        let s = cov[(0, 0)];
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NonFiniteInnovation);
        }
        let r = residual[0];
        return Ok(-0.5 * (LN_2PI + s.ln() + r * r / s));
    }
    let chol = robust_cholesky(cov).ok_or(Error::NonFiniteInnovation)?;
    let l = chol.l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(residual)
        .ok_or(Error::NonFiniteInnovation)?;
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + z.norm_squared()))
}

/// Cholesky factorisation with a small diagonal jitter fallback.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let scale = m.diagonal().iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = 1e-14 * scale;
    for _ in 0..8 {
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = mj.cholesky() {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// Solves `X M = B` for `X` (i.e. `X = B M⁻¹`) with `M` symmetric positive definite.
pub fn right_solve_spd(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = robust_cholesky(m) {
        let xt = chol.solve(&b.transpose());
        return Ok(xt.transpose());
    }
    let lu = m.transpose().lu();
    lu.solve(&b.transpose())
        .map(|xt| xt.transpose())
        .ok_or(Error::Singular("right_solve_spd"))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrized(m.clone())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.into_iter().collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
