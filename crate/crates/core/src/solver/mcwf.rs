//! Quantum-trajectory sampling.
//!
//! Between jumps a trajectory follows the non-Hermitian generator
//! H - i/2 sum_k gamma_k c_k' c_k; the squared norm then decreases
//! monotonically (the decay diagonal is nonnegative), so the standard
//! threshold rule applies: draw r uniform, jump when the squared norm
//! reaches r. Monotonicity also lets every trajectory share one cached
//! no-jump sweep: a trajectory whose threshold lies below the final
//! survival probability reuses the cached endpoint outright, and the rest
//! resume integration from the cached boundary state of the segment where
//! their threshold is crossed. All randomness is consumed from a
//! per-trajectory stream seeded by index, so results are independent of
//! thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::device::NoiseSet;
use crate::error::{Result, SimError};
use crate::hamiltonian::{self, HamiltonianSpec, Side};
use crate::hilbert::{Operator, StateVector};
use crate::schedule::Schedule;

use super::{
    guard_mask, guard_population_masked, prepare_single_segment, prepare_timeline,
    trajectory_seed, Engine, PropagatorConfig, SimResult, Timeline,
};

fn norm2(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn overlap2(reference: &[Complex64], amps: &[Complex64]) -> f64 {
    let mut acc = Complex64::default();
    for (r, a) in reference.iter().zip(amps) {
        acc += r.conj() * a;
    }
    acc.norm_sqr()
}

/// One cached no-jump sweep: states and squared norms at segment nodes,
/// including the initial node and the final state.
struct NoJumpCache {
    /// (time, unnormalized state, squared norm) at node i; node 0 is the
    /// initial condition, node i >= 1 sits after segment i - 1.
    nodes: Vec<(f64, Vec<Complex64>, f64)>,
}

fn build_no_jump_cache(
    timeline: &Timeline,
    cfg: &PropagatorConfig,
    initial: &[Complex64],
) -> Result<NoJumpCache> {
    let decay = timeline.decay.as_deref();
    let mut nodes = Vec::with_capacity(timeline.segments.len() + 1);
    let mut amps = initial.to_vec();
    nodes.push((0.0, amps.clone(), norm2(&amps)));
    for seg in &timeline.segments {
        seg.advance_nh(&mut amps, seg.t0, seg.t1, decay, cfg)?;
        nodes.push((seg.t1, amps.clone(), norm2(&amps)));
    }
    Ok(NoJumpCache { nodes })
}

struct TrajOutcome {
    p: f64,
    jumps: usize,
    max_guard: f64,
}

/// Locates the threshold crossing inside (ta, tb] by bisection, keeping the
/// left bracket state so each iteration advances only the shrinking gap.
/// Returns the time and state just before the crossing.
fn find_crossing(
    seg: &super::PreparedSegment,
    left0: &[Complex64],
    mut ta: f64,
    mut tb: f64,
    r: f64,
    decay: Option<&[f64]>,
    cfg: &PropagatorConfig,
) -> Result<(f64, Vec<Complex64>)> {
    let tol = cfg.jump_rtol * seg.duration().max(f64::MIN_POSITIVE);
    let mut left = left0.to_vec();
    while tb - ta > tol {
        let tm = 0.5 * (ta + tb);
        if tm <= ta || tm >= tb {
            break;
        }
        let mut mid = left.clone();
        seg.advance_nh(&mut mid, ta, tm, decay, cfg)?;
        if norm2(&mid) > r {
            left = mid;
            ta = tm;
        } else {
            tb = tm;
        }
    }
    Ok((ta, left))
}

/// Picks a collapse channel with probability proportional to
/// gamma_k |c_k psi|^2, applies it, and normalizes. Channel operators act
/// unchanged here even though the state lives in the builder frame: the
/// frame rotation is diagonal and every channel either commutes with it or
/// picks up only a global phase.
fn apply_jump(
    channels: &[(f64, &Operator)],
    amps: &mut [Complex64],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let dim = amps.len();
    let mut scratch = vec![Complex64::default(); dim];
    let mut weights = Vec::with_capacity(channels.len());
    let mut total = 0.0f64;
    for &(rate, op) in channels {
        op.apply(amps, &mut scratch);
        let w = rate * norm2(&scratch);
        weights.push(w);
        total += w;
    }
    if !(total > 0.0) {
        return Err(SimError::Numerics(
            "jump triggered but every collapse channel has zero weight".into(),
        ));
    }
    let u = rng.gen::<f64>() * total;
    let mut pick = channels.len() - 1;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            pick = k;
            break;
        }
    }
    channels[pick].1.apply(amps, &mut scratch);
    let n = norm2(&scratch).sqrt();
    if n == 0.0 {
        return Err(SimError::Numerics(
            "selected collapse channel annihilated the state".into(),
        ));
    }
    for (a, s) in amps.iter_mut().zip(&scratch) {
        *a = s / n;
    }
    Ok(())
}

const MAX_JUMPS_PER_SEGMENT: usize = 10_000;

/// Evolves one trajectory from (start_seg, start_t) to the end of the
/// timeline, detecting and applying every remaining jump. The squared norm
/// decreases monotonically between jumps, so one whole-segment advance
/// either proves the threshold is not crossed inside it or brackets the
/// crossing for bisection; no fixed-step scan is needed.
#[allow(clippy::too_many_arguments)]
fn evolve_with_jumps(
    timeline: &Timeline,
    channels: &[(f64, &Operator)],
    mask: &[bool],
    cfg: &PropagatorConfig,
    mut amps: Vec<Complex64>,
    start_seg: usize,
    start_t: f64,
    r: &mut f64,
    rng: &mut ChaCha8Rng,
    jumps: &mut usize,
    max_guard: &mut f64,
) -> Result<Vec<Complex64>> {
    let decay = timeline.decay.as_deref();
    for (idx, seg) in timeline.segments.iter().enumerate().skip(start_seg) {
        let mut t = if idx == start_seg { start_t } else { seg.t0 };
        if !seg.noise_active || decay.is_none() {
            seg.advance_unitary(&mut amps, t, seg.t1, cfg)?;
        } else {
            let mut seg_jumps = 0usize;
            while t < seg.t1 {
                let mut tried = amps.clone();
                seg.advance_nh(&mut tried, t, seg.t1, decay, cfg)?;
                if norm2(&tried) > *r {
                    amps = tried;
                    break;
                }
                let (tstar, mut at_star) =
                    find_crossing(seg, &amps, t, seg.t1, *r, decay, cfg)?;
                apply_jump(channels, &mut at_star, rng)?;
                *jumps += 1;
                seg_jumps += 1;
                if seg_jumps > MAX_JUMPS_PER_SEGMENT {
                    return Err(SimError::Numerics(
                        "trajectory exceeded the per-segment jump budget".into(),
                    ));
                }
                *r = rng.gen();
                amps = at_star;
                t = tstar;
            }
        }
        let n2 = norm2(&amps);
        let g = guard_population_masked(&amps, mask) / n2.max(1e-300);
        *max_guard = max_guard.max(g);
        if g > cfg.leak_threshold {
            return Err(SimError::Leak(format!(
                "guard-level population {g:.3e} exceeds threshold {:.3e} at t={:.3e}",
                cfg.leak_threshold, seg.t1
            )));
        }
    }
    Ok(amps)
}

/// Shared driver: builds the no-jump cache, samples `cfg.trajectories`
/// trajectories, and reduces them in index order. `reference` must be a
/// unit-norm state expressed in the same frame the timeline evolves in,
/// already advanced to the final time.
fn run_trajectories(
    timeline: &Timeline,
    noise: &NoiseSet,
    cfg: &PropagatorConfig,
    initial: &[Complex64],
    reference: &[Complex64],
    mask: &[bool],
) -> Result<SimResult> {
    let cache = build_no_jump_cache(timeline, cfg, initial)?;
    let mut result = SimResult::new(Engine::Mcwf);
    for (t, amps, n2) in &cache.nodes {
        let g = guard_population_masked(amps, mask) / n2.max(1e-300);
        result.trace_history.push((*t, *n2));
        result.guard_history.push((*t, g));
        result.leak_max = result.leak_max.max(g);
        if g > cfg.leak_threshold {
            return Err(SimError::Leak(format!(
                "guard-level population {g:.3e} exceeds threshold {:.3e} at t={t:.3e} on the no-jump path",
                cfg.leak_threshold
            )));
        }
    }
    let final_norm2 = cache.nodes.last().map(|n| n.2).unwrap_or(1.0);

    let channels: Vec<(f64, &Operator)> = noise
        .channels
        .iter()
        .filter(|ch| ch.rate > 0.0)
        .map(|ch| (ch.rate, &ch.op))
        .collect();
    let n_traj = cfg.trajectories;
    let seeds: Vec<u64> = (0..n_traj).map(|i| trajectory_seed(cfg.seed, i)).collect();

    let outcomes: Vec<Result<TrajOutcome>> = seeds
        .par_iter()
        .map(|&seed| -> Result<TrajOutcome> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = rng.gen::<f64>();
            let mut jumps = 0usize;
            let mut max_guard = 0.0f64;
            let final_amps = if final_norm2 > r {
                cache.nodes.last().unwrap().1.clone()
            } else {
                let mut k = 0usize;
                while k + 1 < cache.nodes.len() && cache.nodes[k + 1].2 > r {
                    k += 1;
                }
                evolve_with_jumps(
                    timeline,
                    &channels,
                    mask,
                    cfg,
                    cache.nodes[k].1.clone(),
                    k,
                    cache.nodes[k].0,
                    &mut r,
                    &mut rng,
                    &mut jumps,
                    &mut max_guard,
                )?
            };
            let n2 = norm2(&final_amps);
            if n2 <= 0.0 {
                return Err(SimError::Numerics("trajectory norm underflowed".into()));
            }
            Ok(TrajOutcome {
                p: overlap2(reference, &final_amps) / n2,
                jumps,
                max_guard,
            })
        })
        .collect();

    let mut ps = Vec::with_capacity(n_traj);
    for (i, out) in outcomes.into_iter().enumerate() {
        let out = out?;
        ps.push(out.p);
        result.jump_counts.push(out.jumps);
        result.trajectory_seeds.push(seeds[i]);
        result.leak_max = result.leak_max.max(out.max_guard);
    }
    let n = ps.len() as f64;
    let mean = ps.iter().sum::<f64>() / n;
    result.fidelity = mean.max(0.0).sqrt();
    result.trajectories = ps.len();
    if ps.len() > 1 {
        let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se_p = (var / n).sqrt();
        // Delta method for F = sqrt(mean p).
        result.std_error = Some(se_p / (2.0 * result.fidelity.max(1e-9)));
    }
    Ok(result)
}

/// Trajectory average under one Hamiltonian with the given collapse
/// channels; reports survival fidelity sqrt(mean |<psi0|psi_i(T)>|^2), the
/// square root of the ensemble-averaged return probability, which matches
/// the dense engine's sqrt(tr(rho0 rho(T))) for a pure start.
pub fn mcwf_solve(
    spec: &HamiltonianSpec,
    noise: &NoiseSet,
    psi0: &StateVector,
    t_final: f64,
    cfg: &PropagatorConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    spec.space().check_same(psi0.space())?;
    if t_final < 0.0 {
        return Err(SimError::InvalidInput(
            "propagation time must be non-negative".into(),
        ));
    }
    let norm0 = psi0.norm();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(SimError::InvalidInput(format!(
            "initial state norm {norm0} is not 1"
        )));
    }
    let timeline = prepare_single_segment(spec, noise, t_final)?;
    let mask = vec![false; spec.space().total_dim()];
    run_trajectories(
        &timeline,
        noise,
        cfg,
        psi0.amplitudes(),
        psi0.amplitudes(),
        &mask,
    )
}

/// Trajectory run of a compiled schedule, scored against `target` (or the
/// initial state when absent) in the interaction picture.
pub(crate) fn run_timeline(
    schedule: &Schedule,
    initial: &StateVector,
    noise: &NoiseSet,
    cfg: &PropagatorConfig,
    target: Option<&StateVector>,
) -> Result<SimResult> {
    let space = initial.space();
    let timeline = prepare_timeline(schedule, space, noise, true)?;
    let mask = guard_mask(space);
    let k = hamiltonian::frame_generator(&schedule.params, space, Side::Both)?;
    let reference = match target {
        Some(t) => hamiltonian::rotate_frame(&k, timeline.total, 1.0, t)?,
        None => hamiltonian::rotate_frame(&k, timeline.total, 1.0, initial)?,
    };
    run_trajectories(
        &timeline,
        noise,
        cfg,
        initial.amplitudes(),
        reference.amplitudes(),
        &mask,
    )
}
