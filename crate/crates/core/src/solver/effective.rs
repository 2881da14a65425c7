//! Closed-form protocol evolution in the reduced two-photon model.
//!
//! Interaction segments act per side through exact 2x2 propagators on the
//! pair span {|f,n1,n2>, |g,n1+1,n2+1>}: the detuned-Rabi block sandwiched
//! between its oscillation anchor V(t0) and the dispersive eigenphases, so
//! segments compose correctly at absolute times even off resonance. States
//! outside any pair (the e ladder, bare g states, truncation-clipped f
//! states) advance by their eigenphase alone. Pulses are exact qutrit
//! rotations; gaps are the identity (the model lives in the interaction
//! picture). This engine is the independent route the full integrators are
//! checked against, so it shares no propagation machinery with them.

use ndarray::Array2;
use num_complex::Complex64;

use crate::analytic::{self, Block2};
use crate::device::{lambda_eff, DeviceParams};
use crate::error::{Result, SimError};
use crate::hamiltonian::PulseTransition;
use crate::hilbert::{HilbertSpace, Label, Level, Operator, StateVector};
use crate::schedule::{Schedule, SegmentKind};
use crate::smallmat;

use super::{
    guard_mask, guard_population_masked, state_fidelity, Engine, PropagatorConfig, SimResult,
};

struct SideLayout {
    qutrit: usize,
    cav_lo: usize,
    cav_hi: usize,
    dim_lo: usize,
    dim_hi: usize,
}

struct BlockModel {
    lambda: f64,
    s1: f64,
    s2: f64,
    mismatch: f64,
}

impl BlockModel {
    fn from_device(params: &DeviceParams) -> Result<BlockModel> {
        let (s1, s2) = analytic::stark_shifts(params);
        Ok(BlockModel {
            lambda: lambda_eff(params)?,
            s1,
            s2,
            mismatch: params.delta1 - params.delta2,
        })
    }

    fn energy(&self, level: Level, n1: usize, n2: usize) -> f64 {
        match level {
            Level::G => -self.s1 * n1 as f64,
            Level::E => self.s1 * (n1 as f64 + 1.0) + self.s2 * n2 as f64,
            Level::F => -self.s2 * (n2 as f64 + 1.0),
        }
    }

    /// Pair propagator over [t0, t0 + tau] on {|f,n1,n2>, |g,n1+1,n2+1>}.
    fn pair_block(&self, n1: usize, n2: usize, t0: f64, tau: f64) -> Block2 {
        let coupling = self.lambda * (((n1 + 1) * (n2 + 1)) as f64).sqrt();
        let w = self.mismatch + self.s1 * (n1 as f64 + 1.0) - self.s2 * (n2 as f64 + 1.0);
        let r = analytic::detuned_rabi(coupling, w, tau);
        let v = [
            Complex64::from_polar(1.0, 0.5 * w * t0),
            Complex64::from_polar(1.0, -0.5 * w * t0),
        ];
        let e = [
            self.energy(Level::F, n1, n2),
            self.energy(Level::G, n1 + 1, n2 + 1),
        ];
        let t1 = t0 + tau;
        let mut out = [[Complex64::default(); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let anchored = v[a] * r[a][b] * v[b].conj();
                out[a][b] = Complex64::from_polar(1.0, -e[a] * t1)
                    * anchored
                    * Complex64::from_polar(1.0, e[b] * t0);
            }
        }
        out
    }
}

fn side_layouts(space: &HilbertSpace) -> Result<Vec<SideLayout>> {
    let mut out = Vec::with_capacity(2);
    for (qutrit, lo, hi) in [
        (Label::QutritL, Label::Cav1, Label::Cav2),
        (Label::QutritR, Label::Cav3, Label::Cav4),
    ] {
        out.push(SideLayout {
            qutrit: space.position(qutrit)?,
            cav_lo: space.position(lo)?,
            cav_hi: space.position(hi)?,
            dim_lo: space.dim_of(lo)?,
            dim_hi: space.dim_of(hi)?,
        });
    }
    Ok(out)
}

/// Full-space sparse propagator of one interaction segment for one side.
fn interact_map(
    space: &HilbertSpace,
    layout: &SideLayout,
    model: &BlockModel,
    t0: f64,
    tau: f64,
) -> Operator {
    let dim = space.total_dim();
    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::with_capacity(2 * dim);
    for col in 0..dim {
        let mut occ = space.occupations_of(col);
        let ql = occ[layout.qutrit];
        let n1 = occ[layout.cav_lo];
        let n2 = occ[layout.cav_hi];
        if ql == Level::F.index() && n1 + 1 < layout.dim_lo && n2 + 1 < layout.dim_hi {
            let b = model.pair_block(n1, n2, t0, tau);
            triplets.push((col, col, b[0][0]));
            occ[layout.qutrit] = Level::G.index();
            occ[layout.cav_lo] = n1 + 1;
            occ[layout.cav_hi] = n2 + 1;
            triplets.push((space.index_of(&occ), col, b[1][0]));
        } else if ql == Level::G.index() && n1 >= 1 && n2 >= 1 {
            let b = model.pair_block(n1 - 1, n2 - 1, t0, tau);
            triplets.push((col, col, b[1][1]));
            occ[layout.qutrit] = Level::F.index();
            occ[layout.cav_lo] = n1 - 1;
            occ[layout.cav_hi] = n2 - 1;
            triplets.push((space.index_of(&occ), col, b[0][1]));
        } else {
            let level = match ql {
                0 => Level::G,
                1 => Level::E,
                _ => Level::F,
            };
            let phase = Complex64::from_polar(1.0, -model.energy(level, n1, n2) * tau);
            triplets.push((col, col, phase));
        }
    }
    Operator::from_triplets(space, triplets)
}

/// Exact one-qutrit pulse unitary exp(-i tau H_drive) embedded on both
/// qutrits, matching the resonant drive convention of the full model.
fn pulse_map(
    space: &HilbertSpace,
    params: &DeviceParams,
    transition: PulseTransition,
    tau: f64,
) -> Result<Vec<Operator>> {
    let (omega, hi, lo) = match transition {
        PulseTransition::Gf => (params.omega_gf_rabi, Level::F, Level::G),
        PulseTransition::Ge => (params.omega_ge_rabi, Level::E, Level::G),
    };
    let phi = transition.default_phase();
    let mut h = Array2::<Complex64>::zeros((3, 3));
    h[[hi.index(), lo.index()]] = Complex64::from_polar(omega, -phi);
    h[[lo.index(), hi.index()]] = Complex64::from_polar(omega, phi);
    let u = smallmat::expm_scaled(&h, Complex64::new(0.0, -tau))?;
    let mut local = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            if u[[r, c]].norm() > 0.0 {
                local.push((r, c, u[[r, c]]));
            }
        }
    }
    let mut maps = Vec::with_capacity(2);
    for label in [Label::QutritL, Label::QutritR] {
        maps.push(Operator::embed_local(space, label, &local)?);
    }
    Ok(maps)
}

pub(crate) fn run(
    schedule: &Schedule,
    initial: &StateVector,
    cfg: &PropagatorConfig,
    target: &StateVector,
) -> Result<SimResult> {
    let params = &schedule.params;
    if !schedule.options.ideal_pulses {
        return Err(SimError::InvalidInput(
            "effective engine models pulses as exact rotations; compile the schedule with ideal pulses".into(),
        ));
    }
    if schedule.options.include_bell {
        return Err(SimError::InvalidInput(
            "effective engine starts after Bell preparation; compile without the Bell stage".into(),
        ));
    }
    if params.g12 != 0.0 || params.g34 != 0.0 {
        return Err(SimError::InvalidInput(
            "effective engine has no closed form for cavity crosstalk; set g12 = g34 = 0 or use the unitary engine".into(),
        ));
    }
    let space = initial.space();
    let model = BlockModel::from_device(params)?;
    let layouts = side_layouts(space)?;
    let mask = guard_mask(space);

    let mut amps = initial.amplitudes().to_vec();
    let mut result = SimResult::new(Engine::Effective);
    let mut scratch = vec![Complex64::default(); amps.len()];
    let mut cursor = 0.0f64;
    let record = |t: f64, amps: &[Complex64], result: &mut SimResult| -> Result<()> {
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let g = guard_population_masked(amps, &mask) / n2.max(1e-300);
        result.trace_history.push((t, n2));
        result.guard_history.push((t, g));
        result.leak_max = result.leak_max.max(g);
        if g > cfg.leak_threshold {
            return Err(SimError::Leak(format!(
                "guard-level population {g:.3e} exceeds threshold {:.3e} at t={t:.3e}",
                cfg.leak_threshold
            )));
        }
        Ok(())
    };
    record(0.0, &amps, &mut result)?;

    for seg in &schedule.segments {
        let maps: Vec<Operator> = match seg.kind {
            SegmentKind::Gap => Vec::new(),
            SegmentKind::PulseGf => pulse_map(space, params, PulseTransition::Gf, seg.duration)?,
            SegmentKind::PulseGe => pulse_map(space, params, PulseTransition::Ge, seg.duration)?,
            SegmentKind::Interact => layouts
                .iter()
                .map(|l| interact_map(space, l, &model, cursor, seg.duration))
                .collect(),
            SegmentKind::BellPrep => {
                return Err(SimError::InvalidInput(
                    "effective engine cannot evolve the Bell-preparation segment".into(),
                ));
            }
        };
        for m in &maps {
            m.apply(&amps, &mut scratch);
            std::mem::swap(&mut amps, &mut scratch);
        }
        cursor += seg.duration;
        record(cursor, &amps, &mut result)?;
    }

    let out = StateVector::from_amplitudes(space, amps)?;
    result.fidelity = state_fidelity(target, &out)?;
    result.final_state = Some(out);
    Ok(result)
}
