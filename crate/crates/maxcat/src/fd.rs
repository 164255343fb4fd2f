//! Finite-difference derivatives of black-box maps, shared by the flux
//! Jacobians, the symmetrizer diagnostics and the convexity suite.
//!
//! Steps are relative with an absolute floor, `h_i = rel (1 + |u_i|)`.
//! Jacobians use central differences at the caller's `rel` (default
//! `1e-6` across the crate). Hessians use the central second-difference
//! stencil at `rel = 1e-4` plus one step of Richardson extrapolation,
//! `(4 H(h/2) - H(h)) / 3`, which cancels the leading O(h^2) error.
//!
//! Evaluation failures (a perturbed point leaving the admissible set)
//! surface as [`FdError::StepTooLarge`] with the offending component.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdError {
    #[error(
        "finite-difference step on component {index} left the function's domain: {detail}"
    )]
    StepTooLarge { index: usize, detail: String },
}

fn step(rel: f64, x: f64) -> f64 {
    rel * (1.0 + x.abs())
}

/// Central-difference Jacobian of `f` at `u`; column `i` holds
/// `d f / d u_i`. The output dimension is taken from an evaluation at `u`
/// itself.
pub fn jacobian<F>(mut f: F, u: &[f64], rel: f64) -> Result<DMatrix<f64>, FdError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, String>,
{
    let base = f(u).map_err(|detail| FdError::StepTooLarge { index: usize::MAX, detail })?;
    let m = base.len();
    let n = u.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut x = u.to_vec();
    for i in 0..n {
        let h = step(rel, u[i]);
        x[i] = u[i] + h;
        let fp = f(&x).map_err(|detail| FdError::StepTooLarge { index: i, detail })?;
        x[i] = u[i] - h;
        let fm = f(&x).map_err(|detail| FdError::StepTooLarge { index: i, detail })?;
        x[i] = u[i];
        let inv = 1.0 / (2.0 * h);
        for r in 0..m {
            jac[(r, i)] = (fp[r] - fm[r]) * inv;
        }
    }
    Ok(jac)
}

/// Plain central-difference Hessian of a scalar function at step scale
/// `rel` (no extrapolation).
pub fn hessian_single<F>(mut g: F, u: &[f64], rel: f64) -> Result<DMatrix<f64>, FdError>
where
    F: FnMut(&[f64]) -> Result<f64, String>,
{
    let n = u.len();
    let mut x = u.to_vec();
    let mut eval = |x: &[f64], index: usize| -> Result<f64, FdError> {
        g(x).map_err(|detail| FdError::StepTooLarge { index, detail })
    };
    let g0 = eval(&x.clone(), usize::MAX)?;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = step(rel, u[i]);
        x[i] = u[i] + hi;
        let gp = eval(&x.clone(), i)?;
        x[i] = u[i] - hi;
        let gm = eval(&x.clone(), i)?;
        x[i] = u[i];
        h[(i, i)] = (gp - 2.0 * g0 + gm) / (hi * hi);
        for j in (i + 1)..n {
            let hj = step(rel, u[j]);
            x[i] = u[i] + hi;
            x[j] = u[j] + hj;
            let gpp = eval(&x.clone(), j)?;
            x[j] = u[j] - hj;
            let gpm = eval(&x.clone(), j)?;
            x[i] = u[i] - hi;
            let gmm = eval(&x.clone(), j)?;
            x[j] = u[j] + hj;
            let gmp = eval(&x.clone(), j)?;
            x[i] = u[i];
            x[j] = u[j];
            let val = (gpp - gpm - gmp + gmm) / (4.0 * hi * hj);
            h[(i, j)] = val;
            h[(j, i)] = val;
        }
    }
    Ok(h)
}

/// Richardson-refined Hessian: `(4 H(rel/2) - H(rel)) / 3`.
pub fn hessian<F>(mut g: F, u: &[f64], rel: f64) -> Result<DMatrix<f64>, FdError>
where
    F: FnMut(&[f64]) -> Result<f64, String>,
{
    let coarse = hessian_single(&mut g, u, rel)?;
    let fine = hessian_single(&mut g, u, rel / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// g(x) = exp(a.x) + quadratic form; both derivatives are closed-form.
    #[test]
    fn hessian_of_smooth_function_is_accurate_to_richardson_order() {
        let a = [0.3, -0.7, 0.5];
        let g = |x: &[f64]| -> Result<f64, String> {
            let dot = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>();
            Ok(dot.exp() + 0.5 * x[0] * x[0] + x[0] * x[2])
        };
        let u = [0.2, -0.1, 0.4];
        let h = hessian(g, &u, 1e-4).unwrap();
        let dot = a.iter().zip(&u).map(|(ai, xi)| ai * xi).sum::<f64>();
        let e = dot.exp();
        for i in 0..3 {
            for j in 0..3 {
                let mut want = a[i] * a[j] * e;
                if i == 0 && j == 0 {
                    want += 1.0;
                }
                if (i, j) == (0, 2) || (i, j) == (2, 0) {
                    want += 1.0;
                }
                // Accuracy here is roundoff-limited, not truncation-limited:
                // each second difference carries ~eps/h^2 ~ 1e-8 noise and the
                // extrapolation amplifies it about 6x.
                assert!(
                    (h[(i, j)] - want).abs() < 5e-7,
                    "H[{i}{j}] = {} vs {want}",
                    h[(i, j)]
                );
            }
        }
    }

    #[test]
    fn jacobian_of_polynomial_map_is_exact_to_truncation() {
        let f = |x: &[f64]| -> Result<Vec<f64>, String> {
            Ok(vec![x[0] * x[1], x[1] * x[1] - x[0], 3.0 * x[0]])
        };
        let u = [1.5, -2.0];
        let j = jacobian(f, &u, 1e-6).unwrap();
        let want = [[-2.0, 1.5], [-1.0, -4.0], [3.0, 0.0]];
        for r in 0..3 {
            for c in 0..2 {
                assert!((j[(r, c)] - want[r][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn domain_failures_surface_as_step_too_large() {
        let g = |x: &[f64]| -> Result<f64, String> {
            if x[0] < 1.0 {
                Ok(x[0].ln())
            } else {
                Err("left domain".into())
            }
        };
        let res = hessian(g, &[1.0 - 1e-9], 1e-4);
        assert!(matches!(res, Err(FdError::StepTooLarge { .. })));
    }
}
