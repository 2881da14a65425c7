//! Dense master-equation integration.
//!
//! The density matrix is flattened row-major and stepped with the adaptive
//! Runge-Kutta core; the Liouvillian is applied through sparse triplet
//! sweeps, so cost scales with nnz(H) * dim rather than dim^3. This engine
//! is the physics oracle for the trajectory sampler and is capped at
//! `dense_cap` dimensions: protocol-sized spaces belong to the state-vector
//! engines.

use ndarray::Array2;
use num_complex::Complex64;

use crate::device::{NoiseChannel, NoiseSet};
use crate::error::{Result, SimError};
use crate::hamiltonian::{self, HamiltonianSpec, Side};
use crate::hilbert::{DensityMatrix, StateVector};
use crate::schedule::Schedule;
use crate::smallmat;

use super::ode::{dopri5, OdeOptions};
use super::{
    density_fidelity, guard_mask, prepare_timeline, Engine, PropagatorConfig, SimResult,
};

type Trip = (usize, usize, Complex64);

struct DenseChannel {
    rate: f64,
    c: Vec<Trip>,
    cc: Vec<Trip>,
}

/// One segment's Liouvillian in triplet form.
struct DenseSystem {
    dim: usize,
    static_trips: Vec<Trip>,
    oscillatory: Vec<(f64, Vec<Trip>, Vec<Trip>)>,
    channels: Vec<DenseChannel>,
}

impl DenseSystem {
    fn build(spec: &HamiltonianSpec, noise: &[&NoiseChannel]) -> Result<DenseSystem> {
        let dim = spec.space().total_dim();
        let static_trips: Vec<Trip> = spec.static_part.triplets().collect();
        let oscillatory = spec
            .oscillatory_parts
            .iter()
            .map(|part| {
                (
                    part.omega,
                    part.op.triplets().collect::<Vec<Trip>>(),
                    part.adjoint_op().triplets().collect::<Vec<Trip>>(),
                )
            })
            .collect();
        let mut channels = Vec::new();
        for ch in noise {
            if ch.rate == 0.0 {
                continue;
            }
            let cc = ch.op.adjoint().matmul(&ch.op)?;
            channels.push(DenseChannel {
                rate: ch.rate,
                c: ch.op.triplets().collect(),
                cc: cc.triplets().collect(),
            });
        }
        Ok(DenseSystem {
            dim,
            static_trips,
            oscillatory,
            channels,
        })
    }

    fn max_frequency(&self) -> f64 {
        self.oscillatory
            .iter()
            .map(|(w, _, _)| w.abs())
            .fold(0.0, f64::max)
    }

    /// out += coeff * (commutator and dissipator applied to rho).
    fn apply(&self, t: f64, rho: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim;
        let minus_i = Complex64::new(0.0, -1.0);
        let plus_i = Complex64::new(0.0, 1.0);
        sparse_left(&self.static_trips, minus_i, rho, out, d);
        sparse_right(&self.static_trips, plus_i, rho, out, d);
        for (omega, op, adj) in &self.oscillatory {
            let ph = Complex64::from_polar(1.0, omega * t);
            sparse_left(op, minus_i * ph, rho, out, d);
            sparse_right(op, plus_i * ph, rho, out, d);
            let phc = ph.conj();
            sparse_left(adj, minus_i * phc, rho, out, d);
            sparse_right(adj, plus_i * phc, rho, out, d);
        }
        for ch in &self.channels {
            let g = Complex64::new(ch.rate, 0.0);
            let half = Complex64::new(-0.5 * ch.rate, 0.0);
            // c rho c': scratch = c rho, then out += g * scratch c'.
            scratch.fill(Complex64::default());
            sparse_left(&ch.c, Complex64::new(1.0, 0.0), rho, scratch, d);
            sparse_right_adjoint(&ch.c, g, scratch, out, d);
            sparse_left(&ch.cc, half, rho, out, d);
            sparse_right(&ch.cc, half, rho, out, d);
        }
    }
}

/// out[r, :] += coeff * v * rho[c, :] for every triplet (r, c, v).
fn sparse_left(trips: &[Trip], coeff: Complex64, rho: &[Complex64], out: &mut [Complex64], d: usize) {
    for &(r, c, v) in trips {
        let w = coeff * v;
        let src = &rho[c * d..(c + 1) * d];
        let dst = &mut out[r * d..(r + 1) * d];
        for (o, s) in dst.iter_mut().zip(src) {
            *o += w * s;
        }
    }
}

/// out[:, c] += coeff * rho[:, r] * v for every triplet (r, c, v).
fn sparse_right(trips: &[Trip], coeff: Complex64, rho: &[Complex64], out: &mut [Complex64], d: usize) {
    for &(r, c, v) in trips {
        let w = coeff * v;
        for i in 0..d {
            out[i * d + c] += rho[i * d + r] * w;
        }
    }
}

/// out[:, j] += coeff * rho[:, l] * conj(v) for every triplet (j, l, v),
/// i.e. right-multiplication by the adjoint of the triplet operator.
fn sparse_right_adjoint(
    trips: &[Trip],
    coeff: Complex64,
    rho: &[Complex64],
    out: &mut [Complex64],
    d: usize,
) {
    for &(j, l, v) in trips {
        let w = coeff * v.conj();
        for i in 0..d {
            out[i * d + j] += rho[i * d + l] * w;
        }
    }
}

fn flatten(mat: &Array2<Complex64>) -> Vec<Complex64> {
    mat.iter().cloned().collect()
}

fn unflatten(dim: usize, flat: &[Complex64]) -> Array2<Complex64> {
    Array2::from_shape_vec((dim, dim), flat.to_vec()).expect("square buffer")
}

fn trace_of(flat: &[Complex64], d: usize) -> Complex64 {
    (0..d).map(|i| flat[i * d + i]).sum()
}

fn hermiticity_of(flat: &[Complex64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let dev = (flat[i * d + j] - flat[j * d + i].conj()).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

/// Trace, hermiticity, and positivity checks applied at every checkpoint.
fn check_invariants(flat: &[Complex64], d: usize, t: f64) -> Result<()> {
    let tr = trace_of(flat, d);
    if (tr.re - 1.0).abs() > 1e-6 || tr.im.abs() > 1e-6 {
        return Err(SimError::Tolerance(format!(
            "density trace drifted to {tr} at t={t:.3e}"
        )));
    }
    let herm = hermiticity_of(flat, d);
    if herm > 1e-8 {
        return Err(SimError::Tolerance(format!(
            "density hermiticity deviation {herm:.3e} at t={t:.3e}"
        )));
    }
    let mut sym = Array2::from_elem((d, d), Complex64::default());
    for i in 0..d {
        for j in 0..d {
            sym[[i, j]] = 0.5 * (flat[i * d + j] + flat[j * d + i].conj());
        }
        sym[[i, i]] += Complex64::new(1e-6, 0.0);
    }
    if !smallmat::cholesky_is_pd(&sym) {
        return Err(SimError::Tolerance(format!(
            "density lost positivity beyond 1e-6 at t={t:.3e}"
        )));
    }
    Ok(())
}

/// Timestamped flattened-density snapshots.
type FlatMarks = Vec<(f64, Vec<Complex64>)>;

struct SegmentRun<'a> {
    sys: DenseSystem,
    cfg: &'a PropagatorConfig,
}

impl SegmentRun<'_> {
    fn integrate(
        &mut self,
        mut flat: Vec<Complex64>,
        ta: f64,
        tb: f64,
        checkpoints: usize,
    ) -> Result<(Vec<Complex64>, FlatMarks)> {
        let d = self.sys.dim;
        let mut scratch = vec![Complex64::default(); d * d];
        let max_freq = self.sys.max_frequency();
        let mut max_step = self.cfg.max_step;
        if max_freq > 0.0 {
            let cap = self.cfg.max_phase_advance / max_freq;
            max_step = Some(max_step.map_or(cap, |s| s.min(cap)));
        }
        let opts = OdeOptions {
            rtol: self.cfg.rtol,
            atol: self.cfg.atol,
            max_step,
            ..OdeOptions::default()
        };
        let n = checkpoints.max(1);
        let mut marks = Vec::with_capacity(n);
        for k in 0..n {
            let t0 = ta + (tb - ta) * k as f64 / n as f64;
            let t1 = if k + 1 == n {
                tb
            } else {
                ta + (tb - ta) * (k + 1) as f64 / n as f64
            };
            let sys = &self.sys;
            flat = dopri5(
                |t, y, dy| {
                    dy.fill(Complex64::default());
                    sys.apply(t, y, dy, &mut scratch);
                },
                t0,
                t1,
                flat,
                &opts,
            )?;
            check_invariants(&flat, d, t1)?;
            marks.push((t1, flat.clone()));
        }
        Ok((flat, marks))
    }
}

fn guard_of(flat: &[Complex64], mask: &[bool], d: usize) -> f64 {
    (0..d)
        .filter(|&i| mask[i])
        .map(|i| flat[i * d + i].re)
        .sum()
}

/// Evolves a density matrix under one Hamiltonian with the given collapse
/// channels for `t_final` seconds. Reports survival fidelity against the
/// initial density matrix, sqrt(tr(rho0 rho_final)); invariant violations
/// and dimension overruns are hard errors. Guard populations are recorded
/// but not enforced, since bare solves often run on clipped model spaces.
pub fn lindblad_solve(
    spec: &HamiltonianSpec,
    noise: &NoiseSet,
    rho0: &DensityMatrix,
    t_final: f64,
    cfg: &PropagatorConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    spec.space().check_same(rho0.space())?;
    if t_final < 0.0 {
        return Err(SimError::InvalidInput(
            "propagation time must be non-negative".into(),
        ));
    }
    let d = spec.space().total_dim();
    if d > cfg.dense_cap {
        return Err(SimError::DimensionCap(format!(
            "dense evolution needs dim {d} > cap {}",
            cfg.dense_cap
        )));
    }
    let tr0 = rho0.trace();
    if (tr0.re - 1.0).abs() > 1e-6 || tr0.im.abs() > 1e-9 {
        return Err(SimError::InvalidInput(format!(
            "initial density trace is {tr0}, expected 1"
        )));
    }
    for ch in &noise.channels {
        ch.op.space().check_same(spec.space())?;
    }
    let refs: Vec<&NoiseChannel> = noise.channels.iter().collect();
    let sys = DenseSystem::build(spec, &refs)?;
    let mut run = SegmentRun { sys, cfg };
    let rho0_flat = flatten(rho0.matrix());
    let mask = guard_mask(spec.space());

    let mut result = SimResult::new(Engine::Lindblad);
    result.trace_history.push((0.0, tr0.re));
    let g0 = guard_of(&rho0_flat, &mask, d);
    result.guard_history.push((0.0, g0));
    result.leak_max = g0;

    let (final_flat, marks) = run.integrate(rho0_flat.clone(), 0.0, t_final, 20)?;
    for (t, snap) in &marks {
        let tr = trace_of(snap, d).re;
        let g = guard_of(snap, &mask, d);
        result.trace_history.push((*t, tr));
        result.guard_history.push((*t, g));
        result.leak_max = result.leak_max.max(g);
    }

    // tr(rho0 rho_final) = sum_ij rho0[i,j] rho_final[j,i].
    let mut tr_prod = Complex64::default();
    for i in 0..d {
        for j in 0..d {
            tr_prod += rho0_flat[i * d + j] * final_flat[j * d + i];
        }
    }
    result.fidelity = tr_prod.re.max(0.0).sqrt();
    result.final_density = Some(DensityMatrix::from_matrix(
        spec.space(),
        unflatten(d, &final_flat),
    )?);
    Ok(result)
}

/// Dense run of a compiled schedule; used as an oracle when the protocol
/// space fits under the dimension cap.
pub(crate) fn run_timeline(
    schedule: &Schedule,
    initial: &StateVector,
    noise: &NoiseSet,
    cfg: &PropagatorConfig,
    target: Option<&StateVector>,
) -> Result<SimResult> {
    let space = initial.space();
    let d = space.total_dim();
    if d > cfg.dense_cap {
        return Err(SimError::DimensionCap(format!(
            "dense protocol evolution needs dim {d} > cap {}; use the mcwf engine",
            cfg.dense_cap
        )));
    }
    let timeline = prepare_timeline(schedule, space, noise, false)?;
    let mask = guard_mask(space);
    let channel_refs: Vec<&NoiseChannel> = noise.channels.iter().collect();

    let mut flat = flatten(DensityMatrix::from_pure(initial).matrix());
    let mut result = SimResult::new(Engine::Lindblad);
    result.trace_history.push((0.0, trace_of(&flat, d).re));
    result.guard_history.push((0.0, guard_of(&flat, &mask, d)));

    for seg in &timeline.segments {
        let refs: Vec<&NoiseChannel> = if seg.noise_active {
            channel_refs.clone()
        } else {
            Vec::new()
        };
        let sys = DenseSystem::build(&seg.spec, &refs)?;
        let mut run = SegmentRun { sys, cfg };
        let share = if timeline.total > 0.0 {
            (20.0 * seg.duration() / timeline.total).ceil() as usize
        } else {
            1
        };
        let (next, marks) = run.integrate(flat, seg.t0, seg.t1, share.max(1))?;
        flat = next;
        for (t, snap) in &marks {
            let tr = trace_of(snap, d).re;
            let g = guard_of(snap, &mask, d);
            result.trace_history.push((*t, tr));
            result.guard_history.push((*t, g));
            result.leak_max = result.leak_max.max(g);
            if g > cfg.leak_threshold {
                return Err(SimError::Leak(format!(
                    "guard-level population {g:.3e} exceeds threshold {:.3e} at t={t:.3e}",
                    cfg.leak_threshold
                )));
            }
        }
    }

    // Map the builder frame back to the interaction picture: conjugation by
    // the diagonal frame rotation is an elementwise phase on the matrix.
    let k = hamiltonian::frame_generator(&schedule.params, space, Side::Both)?;
    let kd: Vec<f64> = k.diagonal().iter().map(|z| z.re).collect();
    let t_end = timeline.total;
    let mut rotated = unflatten(d, &flat);
    for i in 0..d {
        for j in 0..d {
            let ph = Complex64::from_polar(1.0, -(kd[i] - kd[j]) * t_end);
            rotated[[i, j]] *= ph;
        }
    }
    let rho = DensityMatrix::from_matrix(space, rotated)?;
    result.fidelity = match target {
        Some(t) => density_fidelity(&rho, t)?,
        None => density_fidelity(&rho, initial)?,
    };
    result.final_density = Some(rho);
    Ok(result)
}
