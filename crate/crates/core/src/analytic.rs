//! Closed-form effective dynamics and the exact ideal state ladder.
//!
//! The two-photon exchange |f,n,n> <-> |g,n+1,n+1> is governed, after
//! adiabatic elimination of the qutrit |e> level, by a 2x2 problem with
//! coupling (n+1)*lambda. In the matched case (equal Stark shifts, equal
//! detunings) the propagator has the closed form
//!
//!   U = e^{i(n+1)lambda t} [ cos th   i sin th ]        th = (n+1) lambda t
//!                          [ i sin th   cos th ],
//!
//! and the idle |e,0,0> state only acquires e^{-i lambda t}. With unequal
//! Stark shifts (varphi) or detunings the off-diagonal coupling oscillates at
//! w = (delta1-delta2) + varphi(n+1) and the propagator is obtained by direct
//! integration of the 2x2 system. These maps are the oracle the full solvers
//! are checked against, and the fast path for ideal-protocol predictions.

use num_complex::Complex64;

use crate::device::{lambda_eff, DeviceParams};
use crate::error::{Result, SimError};
use crate::hilbert::{HilbertSpace, Label, Level, StateVector};

/// Reduced parameters of the two-photon effective model.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveParams {
    /// Effective two-photon coupling lambda (rad/s).
    pub lambda: f64,
    /// Stark-shift mismatch g1^2/delta1 - g2^2/delta2 (rad/s).
    pub varphi: f64,
    /// Detuning mismatch delta1 - delta2 (rad/s).
    pub detuning_mismatch: f64,
}

impl EffectiveParams {
    pub fn from_device(params: &DeviceParams) -> Result<EffectiveParams> {
        let lambda = lambda_eff(params)?;
        let (s1, s2) = stark_shifts(params);
        Ok(EffectiveParams {
            lambda,
            varphi: s1 - s2,
            detuning_mismatch: params.delta1 - params.delta2,
        })
    }

    /// True when both mismatch channels vanish and the closed form applies.
    pub fn is_matched(&self) -> bool {
        let tol = 1e-9 * self.lambda.abs();
        self.varphi.abs() <= tol && self.detuning_mismatch.abs() <= tol
    }
}

/// Per-level Stark shifts (g1^2/delta1, g2^2/delta2).
pub fn stark_shifts(params: &DeviceParams) -> (f64, f64) {
    (
        params.g1 * params.g1 / params.delta1,
        params.g2 * params.g2 / params.delta2,
    )
}

/// 2x2 propagator on span{|f,n,n>, |g,n+1,n+1>}, row-major.
pub type Block2 = [[Complex64; 2]; 2];

fn block_mul(a: &Block2, b: &Block2) -> Block2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// Closed-form propagator of the oscillating two-level problem
/// H(t) = [[0, -L e^{+iwt}], [-L e^{-iwt}, 0]] (a detuned Rabi block).
pub(crate) fn detuned_rabi(coupling: f64, w: f64, t: f64) -> Block2 {
    let half = 0.5 * w;
    let rabi = (half * half + coupling * coupling).sqrt();
    let (sin_t, cos_t) = if rabi == 0.0 {
        (0.0, 1.0)
    } else {
        ((rabi * t).sin(), (rabi * t).cos())
    };
    let ratio = if rabi == 0.0 { 0.0 } else { sin_t / rabi };
    // exp(-i t [[w/2, -L], [-L, -w/2]])
    let exp_rot = [
        [
            Complex64::new(cos_t, -half * ratio),
            Complex64::new(0.0, coupling * ratio),
        ],
        [
            Complex64::new(0.0, coupling * ratio),
            Complex64::new(cos_t, half * ratio),
        ],
    ];
    let v_t = [
        [Complex64::from_polar(1.0, half * t), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, -half * t)],
    ];
    block_mul(&v_t, &exp_rot)
}

/// Right-hand side of dU/dt = -i H(t) U for the oscillating block.
fn block_deriv(coupling: f64, w: f64, t: f64, u: &Block2) -> Block2 {
    let off = Complex64::from_polar(-coupling, w * t);
    let h = [
        [Complex64::new(0.0, 0.0), off],
        [off.conj(), Complex64::new(0.0, 0.0)],
    ];
    let hu = block_mul(&h, u);
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = Complex64::new(hu[r][c].im, -hu[r][c].re);
        }
    }
    out
}

/// Adaptive Runge-Kutta (Dormand-Prince 5(4)) integration of the 2x2
/// propagator over [0, t].
fn integrate_block(coupling: f64, w: f64, t_final: f64, tol: f64) -> Block2 {
    let mut u = [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ];
    if t_final == 0.0 {
        return u;
    }
    let scale = coupling.abs().max(w.abs()).max(1e-300);
    let mut h = (0.1 / scale).min(t_final);
    let mut t = 0.0;

    // Dormand-Prince coefficients.
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
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    let add = |u: &Block2, k: &[Block2], coeffs: &[f64], h: f64| -> Block2 {
        let mut out = *u;
        for (ki, &ci) in k.iter().zip(coeffs.iter()) {
            if ci == 0.0 {
                continue;
            }
            for r in 0..2 {
                for c in 0..2 {
                    out[r][c] += ki[r][c] * (ci * h);
                }
            }
        }
        out
    };

    let mut k1 = block_deriv(coupling, w, t, &u);
    while t < t_final {
        if t + h > t_final {
            h = t_final - t;
        }
        let mut k = vec![k1];
        for stage in 0..6 {
            let u_stage = add(&u, &k, &A[stage][..=stage], h);
            k.push(block_deriv(coupling, w, t + C[stage] * h, &u_stage));
        }
        let u_new = add(&u, &k[..6], &A[5], h);
        // Error estimate from the embedded 4th-order solution.
        let mut err: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let mut e = Complex64::new(0.0, 0.0);
                for (ki, &ei) in k.iter().zip(E.iter()) {
                    e += ki[r][c] * ei;
                }
                err = err.max((e * h).norm());
            }
        }
        if err <= tol {
            t += h;
            u = u_new;
            k1 = k[6];
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    u
}

/// Propagator on span{|f,n,n>, |g,n+1,n+1>} for duration t, in the
/// interaction picture (diagonal Stark phases folded back in; with unequal
/// Stark shifts the common phase uses their lambda-symmetric mean).
pub fn effective_evolution(n: usize, t: f64, p: &EffectiveParams) -> Result<Block2> {
    if t < 0.0 {
        return Err(SimError::InvalidInput(
            "evolution time must be nonnegative".into(),
        ));
    }
    if p.lambda <= 0.0 {
        return Err(SimError::InvalidInput(
            "effective coupling lambda must be positive".into(),
        ));
    }
    let coupling = (n as f64 + 1.0) * p.lambda;
    let theta = coupling * t;
    let prefactor = Complex64::from_polar(1.0, theta);
    if p.is_matched() {
        let c = Complex64::new(theta.cos(), 0.0);
        let s = Complex64::new(0.0, theta.sin());
        return Ok([[prefactor * c, prefactor * s], [prefactor * s, prefactor * c]]);
    }
    let w = p.detuning_mismatch + p.varphi * (n as f64 + 1.0);
    let u = integrate_block(coupling, w, t, 1e-15);
    Ok([
        [prefactor * u[0][0], prefactor * u[0][1]],
        [prefactor * u[1][0], prefactor * u[1][1]],
    ])
}

/// Phase acquired by the idle |e,0,0> state over duration t.
pub fn e_idle_phase(t: f64, p: &EffectiveParams) -> Complex64 {
    Complex64::from_polar(1.0, -p.lambda * t)
}

/// One basis ket |q_L>|q_R>|n1 n2 n3 n4>.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderKet {
    pub qutrit_l: Level,
    pub qutrit_r: Level,
    pub photons: [usize; 4],
}

impl LadderKet {
    fn occupations(&self) -> [usize; 6] {
        [
            self.qutrit_l.index(),
            self.qutrit_r.index(),
            self.photons[0],
            self.photons[1],
            self.photons[2],
            self.photons[3],
        ]
    }
}

/// A protocol snapshot: sparse superposition plus the cumulative global phase
/// the bookkeeping has dropped to keep amplitudes plain.
#[derive(Debug, Clone)]
pub struct LadderState {
    pub label: String,
    pub terms: Vec<(LadderKet, Complex64)>,
    pub dropped_phase: Complex64,
}

impl LadderState {
    pub fn norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Materializes the state on a concrete simulation space. The space must
    /// contain the two qutrits and four side cavities with enough levels.
    pub fn on_space(&self, space: &HilbertSpace) -> Result<StateVector> {
        for label in [
            Label::QutritL,
            Label::QutritR,
            Label::Cav1,
            Label::Cav2,
            Label::Cav3,
            Label::Cav4,
        ] {
            if !space.has(label) {
                return Err(SimError::Space(format!(
                    "ladder state needs subsystem {}",
                    label.as_str()
                )));
            }
        }
        let mut psi = StateVector::zero(space);
        for (ket, amp) in &self.terms {
            let occ = ket.occupations();
            let labels = [
                Label::QutritL,
                Label::QutritR,
                Label::Cav1,
                Label::Cav2,
                Label::Cav3,
                Label::Cav4,
            ];
            let mut full = vec![0usize; space.subsystems().len()];
            for (label, &o) in labels.iter().zip(occ.iter()) {
                let pos = space.position(*label)?;
                if o >= space.dim_of(*label)? {
                    return Err(SimError::Space(format!(
                        "ladder occupation {o} exceeds dimension of {}",
                        label.as_str()
                    )));
                }
                full[pos] = o;
            }
            let idx = space.index_of(&full);
            psi.amplitudes_mut()[idx] = *amp;
        }
        Ok(psi)
    }
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn two_branch(
    label: impl Into<String>,
    left: (Level, Level, [usize; 4]),
    right: (Level, Level, [usize; 4]),
    dropped_phase: Complex64,
) -> LadderState {
    let amp = Complex64::new(INV_SQRT2, 0.0);
    LadderState {
        label: label.into(),
        terms: vec![
            (
                LadderKet {
                    qutrit_l: left.0,
                    qutrit_r: left.1,
                    photons: left.2,
                },
                amp,
            ),
            (
                LadderKet {
                    qutrit_l: right.0,
                    qutrit_r: right.1,
                    photons: right.2,
                },
                amp,
            ),
        ],
        dropped_phase,
    }
}

/// The exact protocol ladder: every intermediate state from the Bell pair in
/// vacuum through the final double NOON state, with dropped global phases
/// tracked. The sequence for photon number N is
/// initial -> gf pulse -> (interact t_j -> gf pulse) for j = 1..N-1 ->
/// [after the N-th gf pulse] -> ge pulse -> interact t_N -> final.
pub fn ideal_ladder(n: usize, p: &EffectiveParams) -> Result<Vec<LadderState>> {
    if n < 1 {
        return Err(SimError::InvalidInput(
            "photon number must be at least 1".into(),
        ));
    }
    if p.lambda <= 0.0 {
        return Err(SimError::InvalidInput(
            "effective coupling lambda must be positive".into(),
        ));
    }
    let mut states = Vec::with_capacity(2 * n + 3);
    let mut phase = Complex64::new(1.0, 0.0);

    // Bell pair and vacuum: (|g e> + |e g>)|0000>/sqrt(2).
    states.push(two_branch(
        "initial",
        (Level::G, Level::E, [0; 4]),
        (Level::E, Level::G, [0; 4]),
        phase,
    ));

    // First gf pulse: g -> f on both qutrits.
    states.push(two_branch(
        "after-gf-1",
        (Level::F, Level::E, [0; 4]),
        (Level::E, Level::F, [0; 4]),
        phase,
    ));

    // Steps 1..N-1: interaction t_j moves |f,j-1,j-1> to |g,j,j> while the
    // spectator |e> side idles; the following gf pulse re-arms the f level.
    for j in 1..n {
        let t_j = std::f64::consts::PI / (2.0 * j as f64 * p.lambda);
        // Interaction phase: i e^{i j lambda t_j} from the active side times
        // e^{-i lambda t_j} from the idle side, common to both branches.
        let step = Complex64::new(0.0, 1.0)
            * Complex64::from_polar(1.0, (j as f64) * p.lambda * t_j)
            * e_idle_phase(t_j, p);
        phase *= step;
        states.push(two_branch(
            format!("after-interact-{j}"),
            (Level::G, Level::E, [j, j, 0, 0]),
            (Level::E, Level::G, [0, 0, j, j]),
            phase,
        ));
        states.push(two_branch(
            format!("after-gf-{}", j + 1),
            (Level::F, Level::E, [j, j, 0, 0]),
            (Level::E, Level::F, [0, 0, j, j]),
            phase,
        ));
    }

    // ge pulse: e -> g on both qutrits.
    states.push(two_branch(
        "after-ge",
        (Level::F, Level::G, [n - 1, n - 1, 0, 0]),
        (Level::G, Level::F, [0, 0, n - 1, n - 1]),
        phase,
    ));

    // Final interaction t_N: |f,N-1,N-1> -> |g,N,N>; the |g,0,0> side is
    // stationary. Dropped phase i e^{i N lambda t_N} = -1.
    let t_n = std::f64::consts::PI / (2.0 * n as f64 * p.lambda);
    phase *= Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, n as f64 * p.lambda * t_n);
    states.push(two_branch(
        "final",
        (Level::G, Level::G, [n, n, 0, 0]),
        (Level::G, Level::G, [0, 0, n, n]),
        phase,
    ));

    Ok(states)
}

/// The target (|N,N,0,0> + |0,0,N,N>)|g>|g>/sqrt(2) on a simulation space.
pub fn double_noon_target(space: &HilbertSpace, n: usize) -> Result<StateVector> {
    let final_state = two_branch(
        "target",
        (Level::G, Level::G, [n, n, 0, 0]),
        (Level::G, Level::G, [0, 0, n, n]),
        Complex64::new(1.0, 0.0),
    );
    final_state.on_space(space)
}

/// Durations of every protocol segment kind.
#[derive(Debug, Clone)]
pub struct StepDurations {
    /// Bell preparation pi/(2 sqrt(2) mu).
    pub bell: f64,
    /// One gf pulse pi/(2 Omega_gf); the protocol uses N of them.
    pub gf_pulse: f64,
    /// Interaction times t_j = pi/(2 j lambda), j = 1..N.
    pub interactions: Vec<f64>,
    /// The single ge pulse pi/(2 Omega_ge).
    pub ge_pulse: f64,
    /// One level-adjustment gap; the protocol counts 4 of them.
    pub gap: f64,
}

impl StepDurations {
    /// Total operation time: bell + sum t_j + N gf + ge + 4 gaps.
    pub fn total(&self) -> f64 {
        self.bell
            + self.interactions.iter().sum::<f64>()
            + self.gf_pulse * self.interactions.len() as f64
            + self.ge_pulse
            + 4.0 * self.gap
    }
}

pub fn step_durations(
    n: usize,
    p: &EffectiveParams,
    params: &DeviceParams,
) -> Result<StepDurations> {
    if n < 1 {
        return Err(SimError::InvalidInput(
            "photon number must be at least 1".into(),
        ));
    }
    if p.lambda <= 0.0 {
        return Err(SimError::InvalidInput(
            "effective coupling lambda must be positive".into(),
        ));
    }
    let mu = params.mu_required()?;
    let pi = std::f64::consts::PI;
    Ok(StepDurations {
        bell: pi / (2.0 * std::f64::consts::SQRT_2 * mu),
        gf_pulse: pi / (2.0 * params.omega_gf_rabi),
        interactions: (1..=n)
            .map(|j| pi / (2.0 * j as f64 * p.lambda))
            .collect(),
        ge_pulse: pi / (2.0 * params.omega_ge_rabi),
        gap: params.t_d,
    })
}

/// Total operation time computed directly from device parameters.
pub fn operation_time(n: usize, params: &DeviceParams) -> Result<f64> {
    let p = EffectiveParams::from_device(params)?;
    Ok(step_durations(n, &p, params)?.total())
}

/// NOON state family used for phase-error comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoonKind {
    Double,
    Plain,
}

/// Shot-noise-limited phase error: 1/(2N) for a double NOON state of N
/// photons per occupied pair, 1/N for a plain NOON state of N photons.
pub fn phase_error(n: usize, kind: NoonKind) -> Result<f64> {
    if n < 1 {
        return Err(SimError::InvalidInput(
            "photon number must be at least 1".into(),
        ));
    }
    Ok(match kind {
        NoonKind::Double => 1.0 / (2.0 * n as f64),
        NoonKind::Plain => 1.0 / n as f64,
    })
}
