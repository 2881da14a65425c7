//! Restarted Arnoldi approximation of exp(z A) v for sparse A, with the
//! classical extended-Hessenberg local error estimate and adaptive substep
//! control. Works for non-Hermitian A (needed once decay is absorbed into
//! the Hamiltonian), so full Arnoldi orthogonalisation is used rather than
//! a short recurrence.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::smallmat;

#[derive(Debug, Clone)]
pub struct KrylovOptions {
    /// Maximum Krylov subspace dimension per restart.
    pub max_dim: usize,
    /// Local error budget per unit time, relative to the input norm.
    pub rtol: f64,
    /// Estimate of the spectral spread of A, used only to seed the first
    /// substep; the controller adapts from there.
    pub norm_hint: f64,
    pub max_restarts: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            max_dim: 36,
            rtol: 1e-12,
            norm_hint: 1.0,
            max_restarts: 10_000_000,
        }
    }
}

/// Computes exp(t A) v where `apply` writes A x into its output slice.
pub fn expm_multiply<F>(
    mut apply: F,
    dim: usize,
    v: &[Complex64],
    t: f64,
    opts: &KrylovOptions,
) -> Result<Vec<Complex64>>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    if v.len() != dim {
        return Err(SimError::InvalidInput(
            "krylov input vector length mismatch".into(),
        ));
    }
    let m = opts.max_dim.max(2).min(dim.max(2));
    let mut w = v.to_vec();
    if t == 0.0 {
        return Ok(w);
    }
    let total = t;
    let mut t_done = 0.0f64;
    let mut tau = if opts.norm_hint > 0.0 {
        (m as f64 / (2.0 * opts.norm_hint)).min(total)
    } else {
        total
    };

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut h = Array2::<Complex64>::zeros((m + 2, m + 1));
    let mut scratch = vec![Complex64::default(); dim];

    let mut restarts = 0usize;
    while t_done < total {
        restarts += 1;
        if restarts > opts.max_restarts {
            return Err(SimError::Tolerance(
                "krylov restart limit exceeded".into(),
            ));
        }
        let beta = norm(&w);
        if beta == 0.0 {
            return Ok(w);
        }

        basis.clear();
        h.fill(Complex64::default());
        basis.push(w.iter().map(|z| z / beta).collect());

        let mut k_used = 0usize;
        let mut breakdown = false;
        for j in 0..m {
            apply(&basis[j], &mut scratch);
            // Modified Gram-Schmidt with one reorthogonalisation pass.
            for _pass in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, &scratch);
                    h[[i, j]] += c;
                    axpy(-c, q, &mut scratch);
                }
            }
            let nrm = norm(&scratch);
            h[[j + 1, j]] = Complex64::new(nrm, 0.0);
            k_used = j + 1;
            if nrm < 1e-12 * opts.norm_hint.max(1.0) {
                breakdown = true;
                break;
            }
            basis.push(scratch.iter().map(|z| z / nrm).collect());
        }

        // Adapt the substep on the fixed subspace until the error estimate
        // fits the budget, then advance.
        loop {
            let step = tau.min(total - t_done);
            let (coeffs, err) = subspace_exp(&h, k_used, step, breakdown)?;
            let budget = opts.rtol.max(1e-15) * beta * (step / total).max(1e-3);
            if breakdown || err <= budget || step <= 1e-15 * total {
                for x in w.iter_mut() {
                    *x = Complex64::default();
                }
                for (j, q) in basis.iter().take(k_used).enumerate() {
                    axpy(coeffs[j] * beta, q, &mut w);
                }
                t_done += step;
                // Grow cautiously on easy steps, shrink hard on failures.
                if err > 0.0 && err < 0.1 * budget {
                    tau = (step * 1.6).min(total);
                } else {
                    tau = step;
                }
                break;
            }
            tau = step * 0.5 * (budget / err).powf(1.0 / k_used as f64).clamp(0.1, 0.9);
        }
    }
    Ok(w)
}

/// Exponential of the (k+1)x(k+1) extended Hessenberg block. The final row
/// feeds the standard a-posteriori estimate of the projection error.
fn subspace_exp(
    h: &Array2<Complex64>,
    k: usize,
    step: f64,
    breakdown: bool,
) -> Result<(Vec<Complex64>, f64)> {
    let ext = if breakdown { k } else { k + 1 };
    let mut block = Array2::<Complex64>::zeros((ext, ext));
    for c in 0..k {
        for r in 0..k.min(ext) {
            block[[r, c]] = h[[r, c]] * step;
        }
        if !breakdown && c == k - 1 {
            block[[k, c]] = h[[k, c]] * step;
        }
    }
    let f = smallmat::expm(&block)?;
    let coeffs: Vec<Complex64> = (0..k).map(|r| f[[r, 0]]).collect();
    let err = if breakdown { 0.0 } else { f[[k, 0]].norm() };
    Ok((coeffs, err))
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(c: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * *xi;
    }
}
