//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) for
//! complex-valued ODE systems, plus a Schroedinger front-end used to
//! integrate explicitly time-dependent Hamiltonians without any frame
//! reduction.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::hamiltonian::HamiltonianSpec;
use crate::hilbert::StateVector;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size; oscillatory problems set this to a fraction
    /// of the fastest period so no cycle is stepped over.
    pub max_step: Option<f64>,
    /// Safety limit on accepted + rejected steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: None,
            max_steps: 200_000_000,
        }
    }
}

const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th-order weights and the embedded 4th-order ones.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates y' = rhs(t, y) from t0 to t1. The right-hand side writes its
/// result into the provided scratch slice.
pub fn dopri5<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: Vec<Complex64>,
    opts: &OdeOptions,
) -> Result<Vec<Complex64>>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(SimError::InvalidInput(
            "integration tolerances must be positive".into(),
        ));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    if span < 0.0 {
        return Err(SimError::InvalidInput(
            "integration interval must run forward".into(),
        ));
    }
    let dim = y0.len();
    let mut y = y0;
    let mut t = t0;

    let mut k: Vec<Vec<Complex64>> = (0..7).map(|_| vec![Complex64::default(); dim]).collect();
    let mut y_stage = vec![Complex64::default(); dim];
    let mut y_new = vec![Complex64::default(); dim];

    let cap = opts.max_step.unwrap_or(f64::INFINITY);
    // First-step heuristic: scale from the initial derivative magnitude.
    // The floor keeps a zero initial state (d0 ~ atol) from starting below
    // the underflow guard; the controller grows the step from there.
    rhs(t, &y, &mut k[0]);
    let d0 = inf_norm(&y).max(opts.atol);
    let d1 = inf_norm(&k[0]);
    let mut h = if d1 > 0.0 {
        0.01 * d0 / d1
    } else {
        span / 100.0
    };
    h = h.max(1e-12 * span).min(span).min(cap);

    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(SimError::Tolerance(format!(
                "step limit exceeded at t={t:.6e} with h={h:.6e}"
            )));
        }
        let remaining = t1 - t;
        if remaining <= 1e-15 * span {
            break;
        }
        let mut h_step = h.min(remaining);
        if h_step < 1e-15 * span {
            return Err(SimError::Tolerance(format!(
                "step size underflow at t={t:.6e}; tolerance unreachable"
            )));
        }
        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = y[i];
                for (s, &a) in A[stage][..=stage].iter().enumerate() {
                    if a != 0.0 {
                        acc += k[s][i] * (a * h_step);
                    }
                }
                y_stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            rhs(t + C[stage] * h_step, &y_stage, &mut tail[0]);
        }
        // 5th-order solution is the last stage construction (FSAL).
        for i in 0..dim {
            let mut acc = y[i];
            for (s, &a) in A[5].iter().enumerate() {
                if a != 0.0 {
                    acc += k[s][i] * (a * h_step);
                }
            }
            y_new[i] = acc;
        }
        // The 7th slope belongs to the new point.
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            rhs(t + h_step, &y_new, &mut tail[0]);
        }
        let mut err_ratio: f64 = 0.0;
        for i in 0..dim {
            let mut e = Complex64::default();
            for (s, &w) in E.iter().enumerate() {
                if w != 0.0 {
                    e += k[s][i] * w;
                }
            }
            let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err_ratio = err_ratio.max((e.norm() * h_step) / scale);
        }
        if err_ratio <= 1.0 {
            t += h_step;
            std::mem::swap(&mut y, &mut y_new);
            // FSAL: the 7th slope is the first slope of the next step. On a
            // rejection k[0] still holds the slope at the unchanged (t, y).
            k.swap(0, 6);
        }
        let factor = if err_ratio == 0.0 {
            5.0
        } else {
            (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h_step *= factor;
        h = h_step.min(cap);
    }
    Ok(y)
}

fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Integrates the Schroedinger equation i psi' = H(t) psi by brute force,
/// resolving every explicit oscillation. Slow but assumption-free; this is
/// the reference the frame-reduced fast paths are validated against.
pub fn integrate_schroedinger(
    spec: &HamiltonianSpec,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    rtol: f64,
) -> Result<StateVector> {
    spec.space().check_same(psi0.space())?;
    let max_freq = spec.max_frequency();
    let opts = OdeOptions {
        rtol,
        atol: rtol * 1e-2,
        max_step: if max_freq > 0.0 {
            Some(0.5 / max_freq)
        } else {
            None
        },
        ..OdeOptions::default()
    };
    let dim = psi0.space().total_dim();
    let mut scratch = vec![Complex64::default(); dim];
    let rhs = move |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        spec.apply(t, y, &mut scratch);
        for i in 0..dim {
            dy[i] = Complex64::new(scratch[i].im, -scratch[i].re);
        }
    };
    let out = dopri5(rhs, t0, t1, psi0.amplitudes().to_vec(), &opts)?;
    StateVector::from_amplitudes(psi0.space(), out)
}
