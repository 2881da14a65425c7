//! Time-evolution engines over compiled protocol timelines: folded-frame
//! unitary propagation, a dense master-equation integrator, a quantum-
//! trajectory engine, and a closed-form block-map engine.
//!
//! States cross segment boundaries in the builder frame (the frame in which
//! the dispersive interaction is static) at absolute time, and are mapped
//! back to the interaction picture once at the end of a run, where fidelity
//! against the ideal target is evaluated. Phase conventions cancel in the
//! modulus, so reported fidelities are insensitive to the global phases the
//! bookkeeping drops.

pub mod fold;
pub mod krylov;
pub mod lindblad;
pub mod mcwf;
pub mod ode;

mod effective;

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use crate::analytic;
use crate::device::NoiseSet;
use crate::error::{Result, SimError};
use crate::hamiltonian::{self, HamiltonianSpec, PulseTransition, Side};
use crate::hilbert::{HilbertSpace, Label, Operator, StateVector};
use crate::schedule::{HamiltonianRef, Schedule};

use self::fold::Fold;
use self::krylov::KrylovOptions;
use self::ode::OdeOptions;

/// Which evolution model a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Exact state-vector propagation; rejects collapse channels.
    Unitary,
    /// Dense density-matrix integration; capped by `dense_cap`.
    Lindblad,
    /// Quantum trajectories with norm-threshold jump sampling.
    Mcwf,
    /// Closed-form two-level block maps; coherent ideal-pulse runs only.
    Effective,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Unitary => "unitary",
            Engine::Lindblad => "lindblad",
            Engine::Mcwf => "mcwf",
            Engine::Effective => "effective",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Engine> {
        match s {
            "unitary" => Ok(Engine::Unitary),
            "lindblad" => Ok(Engine::Lindblad),
            "mcwf" => Ok(Engine::Mcwf),
            "effective" => Ok(Engine::Effective),
            other => Err(SimError::InvalidInput(format!(
                "unknown engine '{other}' (expected unitary, lindblad, mcwf, or effective)"
            ))),
        }
    }
}

/// Step control and run-level knobs shared by all engines.
#[derive(Debug, Clone)]
pub struct PropagatorConfig {
    /// Relative tolerance of the adaptive integrators.
    pub rtol: f64,
    pub atol: f64,
    /// Krylov subspace size used by folded propagation.
    pub krylov_dim: usize,
    /// Local error budget of the Krylov propagator, relative to state norm.
    pub krylov_tol: f64,
    /// Optional hard cap on integrator step size (seconds).
    pub max_step: Option<f64>,
    /// Largest phase a resolved oscillation may advance per step (radians).
    pub max_phase_advance: f64,
    pub trajectories: usize,
    /// Master seed; per-trajectory seeds derive from it by index.
    pub seed: u64,
    /// Population allowed in any cavity guard level before a run aborts.
    pub leak_threshold: f64,
    /// Largest Hilbert dimension the dense master-equation path accepts.
    pub dense_cap: usize,
    /// Jump-time tolerance, relative to the enclosing segment duration.
    pub jump_rtol: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            rtol: 1e-10,
            atol: 1e-13,
            krylov_dim: 36,
            krylov_tol: 1e-11,
            max_step: None,
            max_phase_advance: 0.5,
            trajectories: 1,
            seed: 7,
            leak_threshold: 1e-3,
            dense_cap: 400,
            jump_rtol: 1e-6,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.krylov_tol > 0.0) {
            return Err(SimError::InvalidInput(
                "tolerances must be positive".into(),
            ));
        }
        if self.krylov_dim < 4 {
            return Err(SimError::InvalidInput(
                "krylov dimension must be at least 4".into(),
            ));
        }
        if self.trajectories == 0 {
            return Err(SimError::InvalidInput(
                "trajectory count must be at least 1".into(),
            ));
        }
        if !(self.max_phase_advance > 0.0) {
            return Err(SimError::InvalidInput(
                "max phase advance must be positive".into(),
            ));
        }
        if !(self.leak_threshold > 0.0) {
            return Err(SimError::InvalidInput(
                "leak threshold must be positive".into(),
            ));
        }
        if !(self.jump_rtol > 0.0 && self.jump_rtol < 1.0) {
            return Err(SimError::InvalidInput(
                "jump tolerance must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a run, engine-agnostic. `fidelity` is measured against the
/// protocol target for `run_protocol` and against the initial state for the
/// bare solver entry points.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub engine: Engine,
    pub fidelity: f64,
    /// Standard error of the fidelity; present for trajectory averages.
    pub std_error: Option<f64>,
    pub trajectories: usize,
    pub trajectory_seeds: Vec<u64>,
    /// Jumps per trajectory, index-aligned with `trajectory_seeds`.
    pub jump_counts: Vec<usize>,
    /// (time, trace) checkpoints; norm squared for pure-state engines.
    pub trace_history: Vec<(f64, f64)>,
    /// (time, guard-level population) checkpoints.
    pub guard_history: Vec<(f64, f64)>,
    /// Largest guard-level population seen anywhere in the run.
    pub leak_max: f64,
    pub wall_seconds: f64,
    /// Final state in the interaction picture (pure-state engines).
    pub final_state: Option<StateVector>,
    /// Final density matrix in the interaction picture (dense engine).
    pub final_density: Option<crate::hilbert::DensityMatrix>,
}

impl SimResult {
    pub(crate) fn new(engine: Engine) -> SimResult {
        SimResult {
            engine,
            fidelity: 0.0,
            std_error: None,
            trajectories: 1,
            trajectory_seeds: Vec::new(),
            jump_counts: Vec::new(),
            trace_history: Vec::new(),
            guard_history: Vec::new(),
            leak_max: 0.0,
            wall_seconds: 0.0,
            final_state: None,
            final_density: None,
        }
    }

    /// Human-readable run summary.
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("engine: {}\n", self.engine));
        match self.std_error {
            Some(se) => out.push_str(&format!(
                "fidelity: {:.6} +/- {:.6}\n",
                self.fidelity, se
            )),
            None => out.push_str(&format!("fidelity: {:.12}\n", self.fidelity)),
        }
        out.push_str(&format!("trajectories: {}\n", self.trajectories));
        if let Some(first) = self.trajectory_seeds.first() {
            out.push_str(&format!(
                "trajectory seeds: {} values derived from the master seed by index (first: {first:#018x})\n",
                self.trajectory_seeds.len()
            ));
        }
        if !self.jump_counts.is_empty() {
            let total: usize = self.jump_counts.iter().sum();
            let max = self.jump_counts.iter().copied().max().unwrap_or(0);
            out.push_str(&format!(
                "jumps: mean {:.3} per trajectory, max {max}\n",
                total as f64 / self.jump_counts.len() as f64
            ));
        }
        let trace_drift = self
            .trace_history
            .iter()
            .map(|&(_, tr)| (tr - 1.0).abs())
            .fold(0.0, f64::max);
        out.push_str(&format!("trace drift: {trace_drift:.3e}\n"));
        out.push_str(&format!("guard population: max {:.3e}\n", self.leak_max));
        out.push_str(&format!("wall time: {:.3} s\n", self.wall_seconds));
        out
    }
}

/// |<a|b>|, so global phases cancel.
pub fn state_fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    a.overlap(b)
}

/// sqrt(<psi|rho|psi>) for a pure reference.
pub fn density_fidelity(
    rho: &crate::hilbert::DensityMatrix,
    psi: &StateVector,
) -> Result<f64> {
    let v = rho.expectation_state(psi)?;
    Ok(v.re.max(0.0).sqrt())
}

/// The protocol's starting state (|g e> + |e g>)/sqrt(2), all cavities empty.
pub fn bell_plus_vacuum(space: &HilbertSpace) -> Result<StateVector> {
    let subsystems = space.subsystems().to_vec();
    let mut occ_ge = vec![0usize; subsystems.len()];
    let mut occ_eg = vec![0usize; subsystems.len()];
    occ_ge[space.position(Label::QutritL)?] = crate::hilbert::Level::G.index();
    occ_ge[space.position(Label::QutritR)?] = crate::hilbert::Level::E.index();
    occ_eg[space.position(Label::QutritL)?] = crate::hilbert::Level::E.index();
    occ_eg[space.position(Label::QutritR)?] = crate::hilbert::Level::G.index();
    let mut psi = StateVector::zero(space);
    let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi.amplitudes_mut()[space.index_of(&occ_ge)] = amp;
    psi.amplitudes_mut()[space.index_of(&occ_eg)] = amp;
    Ok(psi)
}

/// Both qutrits in |g> with one photon in the central cavity; the lab
/// starting point when the Bell stage is simulated explicitly.
pub fn ground_with_central_photon(space: &HilbertSpace) -> Result<StateVector> {
    let mut occ = vec![0usize; space.subsystems().len()];
    occ[space.position(Label::CavCentral)?] = 1;
    StateVector::basis(space, &occ)
}

/// Marks the composite basis states where any side cavity sits in its top
/// (guard) level. The central cavity is excluded: its excitation number is
/// bounded by construction, so its top level is an operating level.
pub(crate) fn guard_mask(space: &HilbertSpace) -> Vec<bool> {
    let cavities: Vec<(usize, usize)> = [Label::Cav1, Label::Cav2, Label::Cav3, Label::Cav4]
        .iter()
        .filter_map(|&label| {
            let pos = space.position(label).ok()?;
            let dim = space.dim_of(label).ok()?;
            Some((pos, dim - 1))
        })
        .collect();
    let dim = space.total_dim();
    let mut mask = vec![false; dim];
    if cavities.is_empty() {
        return mask;
    }
    for (idx, m) in mask.iter_mut().enumerate() {
        for &(pos, top) in &cavities {
            if space.occupation_at(idx, pos) == top {
                *m = true;
                break;
            }
        }
    }
    mask
}

pub(crate) fn guard_population_masked(amps: &[Complex64], mask: &[bool]) -> f64 {
    amps.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(a, _)| a.norm_sqr())
        .sum()
}

/// Population in cavity guard levels, normalized by the state's norm.
pub fn guard_population(psi: &StateVector) -> f64 {
    let mask = guard_mask(psi.space());
    let n2: f64 = psi.amplitudes().iter().map(|a| a.norm_sqr()).sum();
    if n2 == 0.0 {
        return 0.0;
    }
    guard_population_masked(psi.amplitudes(), &mask) / n2
}

// ---------------------------------------------------------------------------
// Prepared timelines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum SpecKey {
    Phase(u8),
    IdealGf,
    IdealGe,
    Bell,
    Gap,
}

/// One schedule segment with everything its propagation needs prebuilt.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSegment {
    pub t0: f64,
    pub t1: f64,
    pub noise_active: bool,
    pub spec: Arc<HamiltonianSpec>,
    pub fold: Option<Arc<Fold>>,
    /// Folded Hamiltonian with -i/2 of the total decay absorbed; present
    /// when decay was requested, this segment is noisy, and the fold exists.
    pub nh_op: Option<Arc<Operator>>,
    pub norm_hint: f64,
}

impl PreparedSegment {
    pub(crate) fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Advances amplitudes (builder frame, absolute time) from ta to tb
    /// under the coherent segment Hamiltonian.
    pub(crate) fn advance_unitary(
        &self,
        amps: &mut Vec<Complex64>,
        ta: f64,
        tb: f64,
        cfg: &PropagatorConfig,
    ) -> Result<()> {
        match &self.fold {
            Some(f) => krylov_advance(&f.folded, &f.potentials, self.norm_hint, amps, ta, tb, cfg),
            None => ode_advance(&self.spec, None, amps, ta, tb, cfg),
        }
    }

    /// Same, but under the no-jump generator H - i/2 sum gamma c'c.
    pub(crate) fn advance_nh(
        &self,
        amps: &mut Vec<Complex64>,
        ta: f64,
        tb: f64,
        decay: Option<&[f64]>,
        cfg: &PropagatorConfig,
    ) -> Result<()> {
        if !self.noise_active || decay.is_none() {
            return self.advance_unitary(amps, ta, tb, cfg);
        }
        match (&self.nh_op, &self.fold) {
            (Some(op), Some(f)) => {
                krylov_advance(op, &f.potentials, self.norm_hint, amps, ta, tb, cfg)
            }
            _ => ode_advance(&self.spec, decay, amps, ta, tb, cfg),
        }
    }
}

fn krylov_advance(
    op: &Operator,
    potentials: &[f64],
    norm_hint: f64,
    amps: &mut Vec<Complex64>,
    ta: f64,
    tb: f64,
    cfg: &PropagatorConfig,
) -> Result<()> {
    if tb == ta {
        return Ok(());
    }
    for (a, &p) in amps.iter_mut().zip(potentials) {
        *a *= Complex64::from_polar(1.0, p * ta);
    }
    let out = krylov::expm_multiply(
        |x, y| {
            op.apply(x, y);
            for z in y.iter_mut() {
                *z = Complex64::new(z.im, -z.re);
            }
        },
        amps.len(),
        amps,
        tb - ta,
        &KrylovOptions {
            max_dim: cfg.krylov_dim,
            rtol: cfg.krylov_tol,
            norm_hint,
            ..KrylovOptions::default()
        },
    )?;
    *amps = out;
    for (a, &p) in amps.iter_mut().zip(potentials) {
        *a *= Complex64::from_polar(1.0, -p * tb);
    }
    Ok(())
}

fn ode_advance(
    spec: &HamiltonianSpec,
    decay: Option<&[f64]>,
    amps: &mut Vec<Complex64>,
    ta: f64,
    tb: f64,
    cfg: &PropagatorConfig,
) -> Result<()> {
    if tb == ta {
        return Ok(());
    }
    let dim = amps.len();
    let mut scratch = vec![Complex64::default(); dim];
    let max_freq = spec.max_frequency();
    let mut max_step = cfg.max_step;
    if max_freq > 0.0 {
        let cap = cfg.max_phase_advance / max_freq;
        max_step = Some(max_step.map_or(cap, |s| s.min(cap)));
    }
    let opts = OdeOptions {
        rtol: cfg.rtol,
        atol: cfg.atol,
        max_step,
        ..OdeOptions::default()
    };
    let decay = decay.map(|d| d.to_vec());
    let rhs = move |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        spec.apply(t, y, &mut scratch);
        for i in 0..dim {
            dy[i] = Complex64::new(scratch[i].im, -scratch[i].re);
        }
        if let Some(d) = &decay {
            for i in 0..dim {
                dy[i] -= y[i] * (0.5 * d[i]);
            }
        }
    };
    let out = ode::dopri5(rhs, ta, tb, std::mem::take(amps), &opts)?;
    *amps = out;
    Ok(())
}

/// A schedule lowered onto a concrete space: per-segment Hamiltonians built
/// and folded once, decay diagonal assembled, absolute times assigned.
pub(crate) struct Timeline {
    pub segments: Vec<PreparedSegment>,
    /// sum_k gamma_k (c_k' c_k)_ii, when decay was requested.
    pub decay: Option<Vec<f64>>,
    pub total: f64,
}

/// Total decay diagonal sum_k gamma_k (c_k' c_k)_ii. The trajectory engine
/// leans on this being diagonal (norm decay is then channel-independent
/// between jumps), so non-diagonal c'c is rejected here.
pub(crate) fn decay_diagonal(noise: &NoiseSet, space: &HilbertSpace) -> Result<Option<Vec<f64>>> {
    if noise.is_empty() {
        return Ok(None);
    }
    let mut d = vec![0.0f64; space.total_dim()];
    for ch in &noise.channels {
        ch.op.space().check_same(space)?;
        let cc = ch.op.adjoint().matmul(&ch.op)?;
        if !cc.is_diagonal() {
            return Err(SimError::InvalidInput(format!(
                "collapse channel '{}' has non-diagonal c'c; the trajectory engine requires number-like loss operators",
                ch.label
            )));
        }
        for (v, cci) in d.iter_mut().zip(cc.diagonal()) {
            *v += ch.rate * cci.re;
        }
    }
    Ok(Some(d))
}

fn nh_shift(space: &HilbertSpace, folded: &Fold, decay: &[f64]) -> Result<Operator> {
    let triplets: Vec<(usize, usize, Complex64)> = decay
        .iter()
        .enumerate()
        .map(|(i, &g)| (i, i, Complex64::new(0.0, -0.5 * g)))
        .collect();
    let shift = Operator::from_triplets(space, triplets);
    folded.folded.add(&shift)
}

/// Wraps one Hamiltonian as a single always-noisy segment starting at t = 0.
pub(crate) fn prepare_single_segment(
    spec: &HamiltonianSpec,
    noise: &NoiseSet,
    duration: f64,
) -> Result<Timeline> {
    let space = spec.space();
    let decay = decay_diagonal(noise, space)?;
    let folded = fold::fold(spec)?.map(Arc::new);
    let nh_op = match (&decay, &folded) {
        (Some(d), Some(f)) => Some(Arc::new(nh_shift(space, f, d)?)),
        _ => None,
    };
    let norm_hint = match (&nh_op, &folded) {
        (Some(op), _) => op.norm_inf(),
        (None, Some(f)) => f.folded.norm_inf(),
        _ => spec.norm_bound(),
    };
    Ok(Timeline {
        segments: vec![PreparedSegment {
            t0: 0.0,
            t1: duration,
            noise_active: true,
            spec: Arc::new(spec.clone()),
            fold: folded,
            nh_op,
            norm_hint,
        }],
        decay,
        total: duration,
    })
}

pub(crate) fn prepare_timeline(
    schedule: &Schedule,
    space: &HilbertSpace,
    noise: &NoiseSet,
    include_decay: bool,
) -> Result<Timeline> {
    let params = &schedule.params;
    let decay = if include_decay {
        decay_diagonal(noise, space)?
    } else {
        None
    };

    let mut spec_cache: HashMap<SpecKey, Arc<HamiltonianSpec>> = HashMap::new();
    let mut fold_cache: HashMap<SpecKey, Option<Arc<Fold>>> = HashMap::new();
    let mut nh_cache: HashMap<SpecKey, Option<Arc<Operator>>> = HashMap::new();

    let gap_spec = || -> Result<HamiltonianSpec> {
        let k = hamiltonian::frame_generator(params, space, Side::Both)?;
        HamiltonianSpec::new(k.scale(Complex64::new(-1.0, 0.0)))
    };

    let mut segments = Vec::with_capacity(schedule.segments.len());
    let mut cursor = 0.0f64;
    for seg in &schedule.segments {
        let key = match seg.hamiltonian {
            HamiltonianRef::Phase(p) => {
                if schedule.options.ideal_pulses && p == 2 {
                    SpecKey::IdealGf
                } else if schedule.options.ideal_pulses && p == 3 {
                    SpecKey::IdealGe
                } else {
                    SpecKey::Phase(p)
                }
            }
            HamiltonianRef::Bell => SpecKey::Bell,
            HamiltonianRef::None => SpecKey::Gap,
        };
        if let Entry::Vacant(slot) = spec_cache.entry(key) {
            let built = match key {
                SpecKey::Phase(p) => hamiltonian::modified_hamiltonian(params, space, p)?,
                SpecKey::IdealGf => hamiltonian::drive_pulse(
                    params,
                    space,
                    PulseTransition::Gf,
                    PulseTransition::Gf.default_phase(),
                )?
                .add(&gap_spec()?)?,
                SpecKey::IdealGe => hamiltonian::drive_pulse(
                    params,
                    space,
                    PulseTransition::Ge,
                    PulseTransition::Ge.default_phase(),
                )?
                .add(&gap_spec()?)?,
                SpecKey::Bell => {
                    hamiltonian::bell_prep_interaction(params, space)?.add(&gap_spec()?)?
                }
                SpecKey::Gap => gap_spec()?,
            };
            let folded = fold::fold(&built)?.map(Arc::new);
            slot.insert(Arc::new(built));
            fold_cache.insert(key, folded);
            nh_cache.insert(key, None);
        }
        let spec = spec_cache[&key].clone();
        let folded = fold_cache[&key].clone();
        let nh_op = match (seg.noise_active, &decay, &folded) {
            (true, Some(d), Some(f)) => {
                if nh_cache[&key].is_none() {
                    nh_cache.insert(key, Some(Arc::new(nh_shift(space, f, d)?)));
                }
                nh_cache[&key].clone()
            }
            _ => None,
        };
        let norm_hint = match (&nh_op, &folded) {
            (Some(op), _) => op.norm_inf(),
            (None, Some(f)) => f.folded.norm_inf(),
            _ => spec.norm_bound(),
        };
        segments.push(PreparedSegment {
            t0: cursor,
            t1: cursor + seg.duration,
            noise_active: seg.noise_active,
            spec,
            fold: folded,
            nh_op,
            norm_hint,
        });
        cursor += seg.duration;
    }
    Ok(Timeline {
        segments,
        decay,
        total: cursor,
    })
}

// ---------------------------------------------------------------------------
// Unitary operations
// ---------------------------------------------------------------------------

/// Evolves a pure state under one Hamiltonian for `t_final` seconds starting
/// at time zero. Folds the oscillations into a static frame when possible,
/// otherwise integrates them directly with phase-resolved steps. Errors if
/// the norm drifts beyond 1e-8 or guard-level population exceeds the
/// configured threshold.
pub fn propagate_unitary(
    spec: &HamiltonianSpec,
    psi0: &StateVector,
    t_final: f64,
    cfg: &PropagatorConfig,
) -> Result<StateVector> {
    cfg.validate()?;
    spec.space().check_same(psi0.space())?;
    if t_final < 0.0 {
        return Err(SimError::InvalidInput(
            "propagation time must be non-negative".into(),
        ));
    }
    let folded = fold::fold(spec)?;
    let mut amps = psi0.amplitudes().to_vec();
    let norm0 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    match &folded {
        Some(f) => {
            let hint = f.folded.norm_inf();
            krylov_advance(&f.folded, &f.potentials, hint, &mut amps, 0.0, t_final, cfg)?
        }
        None => ode_advance(spec, None, &mut amps, 0.0, t_final, cfg)?,
    }
    let norm1 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (norm1 - norm0).abs() > 1e-8 * norm0.max(1.0) {
        return Err(SimError::Numerics(format!(
            "unitary propagation drifted the norm by {:.3e}",
            (norm1 - norm0).abs()
        )));
    }
    let out = StateVector::from_amplitudes(psi0.space(), amps)?;
    let guard = guard_population(&out);
    if guard > cfg.leak_threshold {
        return Err(SimError::Leak(format!(
            "guard-level population {guard:.3e} exceeds threshold {:.3e}",
            cfg.leak_threshold
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Protocol runner
// ---------------------------------------------------------------------------

/// Runs a compiled schedule end to end and scores the final state against
/// the ideal double-excitation target. The initial state is interpreted in
/// the interaction picture at t = 0 (where all frames coincide).
pub fn run_protocol(
    schedule: &Schedule,
    initial: &StateVector,
    noise: &NoiseSet,
    cfg: &PropagatorConfig,
    engine: Engine,
) -> Result<SimResult> {
    cfg.validate()?;
    let started = Instant::now();
    let space = initial.space();
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
                "protocol runs need subsystem {}",
                label.as_str()
            )));
        }
    }
    if schedule.options.include_bell && !space.has(Label::CavCentral) {
        return Err(SimError::Space(
            "schedule includes Bell preparation but the space lacks the central cavity".into(),
        ));
    }
    let norm0 = initial.norm();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(SimError::InvalidInput(format!(
            "initial state norm {norm0} is not 1"
        )));
    }
    for ch in &noise.channels {
        ch.op.space().check_same(space)?;
    }
    let target = analytic::double_noon_target(space, schedule.n)?;

    let mut result = match engine {
        Engine::Unitary => {
            if !noise.is_empty() {
                return Err(SimError::InvalidInput(
                    "unitary engine cannot apply collapse channels; drop the noise set or use lindblad/mcwf".into(),
                ));
            }
            run_unitary_timeline(schedule, initial, cfg, &target)?
        }
        Engine::Effective => {
            if !noise.is_empty() {
                return Err(SimError::InvalidInput(
                    "effective engine is coherent-only; drop the noise set".into(),
                ));
            }
            effective::run(schedule, initial, cfg, &target)?
        }
        Engine::Mcwf => mcwf::run_timeline(schedule, initial, noise, cfg, Some(&target))?,
        Engine::Lindblad => lindblad::run_timeline(schedule, initial, noise, cfg, Some(&target))?,
    };
    result.wall_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}

fn run_unitary_timeline(
    schedule: &Schedule,
    initial: &StateVector,
    cfg: &PropagatorConfig,
    target: &StateVector,
) -> Result<SimResult> {
    let space = initial.space();
    let timeline = prepare_timeline(schedule, space, &NoiseSet::empty(), false)?;
    let mask = guard_mask(space);
    let mut amps = initial.amplitudes().to_vec();
    let mut result = SimResult::new(Engine::Unitary);
    let record = |t: f64, amps: &[Complex64], result: &mut SimResult| -> Result<()> {
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let guard = guard_population_masked(amps, &mask) / n2.max(1e-300);
        result.trace_history.push((t, n2));
        result.guard_history.push((t, guard));
        result.leak_max = result.leak_max.max(guard);
        if guard > cfg.leak_threshold {
            return Err(SimError::Leak(format!(
                "guard-level population {guard:.3e} exceeds threshold {:.3e} at t={t:.3e}",
                cfg.leak_threshold
            )));
        }
        Ok(())
    };
    record(0.0, &amps, &mut result)?;
    for seg in &timeline.segments {
        seg.advance_unitary(&mut amps, seg.t0, seg.t1, cfg)?;
        record(seg.t1, &amps, &mut result)?;
    }
    let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if (n2.sqrt() - 1.0).abs() > 1e-8 {
        return Err(SimError::Numerics(format!(
            "protocol propagation drifted the norm by {:.3e}",
            (n2.sqrt() - 1.0).abs()
        )));
    }
    let frame_state = StateVector::from_amplitudes(space, amps)?;
    let k = hamiltonian::frame_generator(&schedule.params, space, Side::Both)?;
    let psi_ip = hamiltonian::rotate_frame(&k, timeline.total, -1.0, &frame_state)?;
    result.fidelity = state_fidelity(target, &psi_ip)?;
    result.final_state = Some(psi_ip);
    Ok(result)
}

/// Derives the per-trajectory seed stream from a master seed.
pub(crate) fn trajectory_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceParams;
    use crate::hilbert::{build_space, Level};
    use crate::schedule::{compile, CompileOptions};

    fn qutrit_cavity_space(cav_dim: usize) -> HilbertSpace {
        build_space(&[
            (Label::QutritL, 3),
            (Label::Cav1, cav_dim),
            (Label::Cav2, cav_dim),
        ])
        .unwrap()
    }

    fn protocol_space(n: usize) -> HilbertSpace {
        let d = n + 2;
        build_space(&[
            (Label::QutritL, 3),
            (Label::QutritR, 3),
            (Label::Cav1, d),
            (Label::Cav2, d),
            (Label::Cav3, d),
            (Label::Cav4, d),
        ])
        .unwrap()
    }

    #[test]
    fn two_photon_transfer_reaches_partner_state() {
        let params = DeviceParams::baseline_coherent();
        let space = qutrit_cavity_space(3);
        let spec =
            hamiltonian::dispersive_interaction(&params, &space, Side::Left).unwrap();
        let lam = crate::device::lambda_eff(&params).unwrap();
        let t = std::f64::consts::FRAC_PI_2 / lam;
        let psi0 = StateVector::basis(&space, &[Level::F.index(), 0, 0]).unwrap();
        let out = propagate_unitary(&spec, &psi0, t, &PropagatorConfig::default()).unwrap();
        let partner = StateVector::basis(&space, &[Level::G.index(), 1, 1]).unwrap();
        let p = partner.overlap(&out).unwrap().powi(2);
        assert!(p >= 0.95, "transfer population {p}");
    }

    #[test]
    fn zero_time_is_identity() {
        let params = DeviceParams::baseline_coherent();
        let space = qutrit_cavity_space(3);
        let spec =
            hamiltonian::dispersive_interaction(&params, &space, Side::Left).unwrap();
        let psi0 = StateVector::basis(&space, &[Level::F.index(), 0, 0]).unwrap();
        let out = propagate_unitary(&spec, &psi0, 0.0, &PropagatorConfig::default()).unwrap();
        assert!(psi0.overlap(&out).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn propagation_composes_over_subintervals() {
        let params = DeviceParams::baseline_coherent();
        let space = qutrit_cavity_space(3);
        let spec =
            hamiltonian::dispersive_interaction(&params, &space, Side::Left).unwrap();
        let psi0 = StateVector::basis(&space, &[Level::F.index(), 0, 0]).unwrap();
        let cfg = PropagatorConfig::default();
        let t_total = 0.31e-6;
        let one = propagate_unitary(&spec, &psi0, t_total, &cfg).unwrap();
        let first = propagate_unitary(&spec, &psi0, 0.4 * t_total, &cfg).unwrap();
        let second = propagate_unitary(&spec, &first, 0.6 * t_total, &cfg).unwrap();
        // The spec is static, so segments compose without absolute anchors.
        let err: f64 = one
            .amplitudes()
            .iter()
            .zip(second.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8, "semigroup defect {err:.3e}");
    }

    #[test]
    fn truncation_leak_is_detected() {
        let params = DeviceParams::baseline_coherent();
        let space = qutrit_cavity_space(2);
        let spec =
            hamiltonian::dispersive_interaction(&params, &space, Side::Left).unwrap();
        let lam = crate::device::lambda_eff(&params).unwrap();
        let t = std::f64::consts::FRAC_PI_2 / lam;
        let psi0 = StateVector::basis(&space, &[Level::F.index(), 0, 0]).unwrap();
        let err = propagate_unitary(&spec, &psi0, t, &PropagatorConfig::default());
        match err {
            Err(SimError::Leak(_)) => {}
            other => panic!("expected truncation-leak error, got {other:?}"),
        }
    }

    #[test]
    fn commuting_sides_factorize() {
        let params = DeviceParams::baseline_coherent();
        // |e,1,0> virtually dresses into |g,2,0>, so keep n = 2 below the
        // guard level.
        let cav = 4usize;
        let left_space = build_space(&[
            (Label::QutritL, 3),
            (Label::Cav1, cav),
            (Label::Cav2, cav),
        ])
        .unwrap();
        let right_space = build_space(&[
            (Label::QutritR, 3),
            (Label::Cav3, cav),
            (Label::Cav4, cav),
        ])
        .unwrap();
        let joint_space = build_space(&[
            (Label::QutritL, 3),
            (Label::QutritR, 3),
            (Label::Cav1, cav),
            (Label::Cav2, cav),
            (Label::Cav3, cav),
            (Label::Cav4, cav),
        ])
        .unwrap();
        let cfg = PropagatorConfig::default();
        let t = 0.2e-6;

        let left_spec =
            hamiltonian::dispersive_interaction(&params, &left_space, Side::Left).unwrap();
        let right_spec =
            hamiltonian::dispersive_interaction(&params, &right_space, Side::Right).unwrap();
        let joint_spec =
            hamiltonian::dispersive_interaction(&params, &joint_space, Side::Both).unwrap();

        let left0 = StateVector::basis(&left_space, &[Level::F.index(), 0, 0]).unwrap();
        let right0 = StateVector::basis(&right_space, &[Level::E.index(), 1, 0]).unwrap();
        let left1 = propagate_unitary(&left_spec, &left0, t, &cfg).unwrap();
        let right1 = propagate_unitary(&right_spec, &right0, t, &cfg).unwrap();

        let mut joint0 = StateVector::zero(&joint_space);
        for (il, al) in left0.amplitudes().iter().enumerate() {
            if al.norm() == 0.0 {
                continue;
            }
            for (ir, ar) in right0.amplitudes().iter().enumerate() {
                if ar.norm() == 0.0 {
                    continue;
                }
                let occ_l = left_space.occupations_of(il);
                let occ_r = right_space.occupations_of(ir);
                let occ = [occ_l[0], occ_r[0], occ_l[1], occ_l[2], occ_r[1], occ_r[2]];
                joint0.amplitudes_mut()[joint_space.index_of(&occ)] = al * ar;
            }
        }
        let joint1 = propagate_unitary(&joint_spec, &joint0, t, &cfg).unwrap();

        let mut err2 = 0.0f64;
        for (idx, amp) in joint1.amplitudes().iter().enumerate() {
            let occ = joint_space.occupations_of(idx);
            let il = left_space.index_of(&[occ[0], occ[2], occ[3]]);
            let ir = right_space.index_of(&[occ[1], occ[4], occ[5]]);
            let expect = left1.amplitudes()[il] * right1.amplitudes()[ir];
            err2 += (amp - expect).norm_sqr();
        }
        assert!(err2.sqrt() <= 1e-6, "factorization defect {:.3e}", err2.sqrt());
    }

    #[test]
    fn protocol_unitary_agrees_with_effective_when_ideal() {
        let params = DeviceParams::baseline_coherent();
        let n = 1usize;
        let schedule = compile(
            n,
            &params,
            CompileOptions {
                include_bell: false,
                include_gaps: true,
                ideal_pulses: true,
            },
        )
        .unwrap();
        let space = protocol_space(n);
        let initial = bell_plus_vacuum(&space).unwrap();
        let cfg = PropagatorConfig::default();
        let uni = run_protocol(&schedule, &initial, &NoiseSet::empty(), &cfg, Engine::Unitary)
            .unwrap();
        let eff = run_protocol(
            &schedule,
            &initial,
            &NoiseSet::empty(),
            &cfg,
            Engine::Effective,
        )
        .unwrap();
        // The unitary run keeps the full dispersive ladder, so it deviates
        // from the two-photon model only at order (g/delta)^2 coherences.
        assert!(eff.fidelity > 1.0 - 1e-10, "effective {}", eff.fidelity);
        assert!(
            (uni.fidelity - eff.fidelity).abs() < 0.05,
            "unitary {} vs effective {}",
            uni.fidelity,
            eff.fidelity
        );
        let overlap = uni
            .final_state
            .as_ref()
            .unwrap()
            .overlap(eff.final_state.as_ref().unwrap())
            .unwrap();
        assert!(overlap > 0.9, "cross-engine overlap {overlap}");
    }

    #[test]
    fn unitary_engine_rejects_noise() {
        let params = DeviceParams::baseline();
        let schedule = compile(1, &params, CompileOptions::default()).unwrap();
        let space = protocol_space(1);
        let initial = bell_plus_vacuum(&space).unwrap();
        let noise = crate::device::build_noise(&params, &space).unwrap();
        let err = run_protocol(
            &schedule,
            &initial,
            &noise,
            &PropagatorConfig::default(),
            Engine::Unitary,
        );
        assert!(err.is_err());
    }

    #[test]
    fn seed_stream_is_deterministic_and_spread() {
        let a = trajectory_seed(7, 0);
        let b = trajectory_seed(7, 1);
        let c = trajectory_seed(7, 0);
        assert_eq!(a, c);
        assert_ne!(a, b);
        let d = trajectory_seed(8, 0);
        assert_ne!(a, d);
    }

    #[test]
    fn engine_parsing_round_trips() {
        for e in [Engine::Unitary, Engine::Lindblad, Engine::Mcwf, Engine::Effective] {
            assert_eq!(e.as_str().parse::<Engine>().unwrap(), e);
        }
        assert!("euler".parse::<Engine>().is_err());
    }
}
