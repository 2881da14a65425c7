//! Hamiltonian builders for every stage of the protocol.
//!
//! All Hamiltonians live in the interaction picture and, for the dispersive
//! qutrit-cavity couplings, in an additional rotating frame generated by
//! K = delta1*n1 - delta2*n2 (mirrored on the right half). In that frame the
//! dominant couplings are time independent:
//!
//!   H = -delta1 a1'a1 + delta2 a2'a2 + g1(a1 s+_ge + h.c.) + g2(a2 s+_ef + h.c.)
//!
//! plus the mirrored right-hand terms. Only the inter-cavity crosstalk keeps
//! an explicit oscillation, at the residual frequency Delta - (delta1 + delta2).
//! The frame map itself is diagonal, so states move between pictures by a
//! phase rotation (`rotate_frame`).

use num_complex::Complex64;

use crate::device::DeviceParams;
use crate::error::{Result, SimError};
use crate::hilbert::{
    mode_annihilation, mode_number, qutrit_transition, weighted_sum, HilbertSpace, Label, Level,
    Operator, StateVector,
};

/// Relative tolerance for the Hermiticity guard on assembled operators.
const HERMITICITY_RTOL: f64 = 1e-12;

/// Initial pulse phase that sends |g> to |f> after a quarter period.
pub const GF_PULSE_PHASE: f64 = -std::f64::consts::FRAC_PI_2;
/// Initial pulse phase that sends |e> to |g> after a quarter period.
pub const GE_PULSE_PHASE: f64 = std::f64::consts::FRAC_PI_2;

/// Which half of the device a builder should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Both,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Side> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "both" => Ok(Side::Both),
            other => Err(SimError::InvalidInput(format!(
                "unknown side '{other}' (expected left, right, or both)"
            ))),
        }
    }
}

/// Qutrit transition addressed by a classical drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseTransition {
    Gf,
    Ge,
}

impl PulseTransition {
    pub fn as_str(self) -> &'static str {
        match self {
            PulseTransition::Gf => "gf",
            PulseTransition::Ge => "ge",
        }
    }

    pub fn parse(s: &str) -> Result<PulseTransition> {
        match s {
            "gf" => Ok(PulseTransition::Gf),
            "ge" => Ok(PulseTransition::Ge),
            other => Err(SimError::InvalidInput(format!(
                "unknown pulse transition '{other}' (expected gf or ge)"
            ))),
        }
    }

    /// The phase convention used throughout the protocol.
    pub fn default_phase(self) -> f64 {
        match self {
            PulseTransition::Gf => GF_PULSE_PHASE,
            PulseTransition::Ge => GE_PULSE_PHASE,
        }
    }
}

/// One oscillatory term O e^{i omega t} + O' e^{-i omega t}.
#[derive(Debug, Clone)]
pub struct OscillatoryPart {
    pub op: Operator,
    /// Angular frequency in rad/s.
    pub omega: f64,
    adjoint: Operator,
}

impl OscillatoryPart {
    pub fn adjoint_op(&self) -> &Operator {
        &self.adjoint
    }
}

/// A possibly time-dependent Hamiltonian
/// H(t) = static + sum_k (O_k e^{i omega_k t} + h.c.).
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub static_part: Operator,
    pub oscillatory_parts: Vec<OscillatoryPart>,
}

impl HamiltonianSpec {
    /// Wraps a static operator, enforcing Hermiticity.
    pub fn new(static_part: Operator) -> Result<HamiltonianSpec> {
        let scale = static_part.norm_inf().max(1.0);
        let dev = static_part.hermiticity_deviation();
        if dev > HERMITICITY_RTOL * scale {
            return Err(SimError::Numerics(format!(
                "static Hamiltonian part is not Hermitian (deviation {dev:.3e})"
            )));
        }
        Ok(HamiltonianSpec {
            static_part,
            oscillatory_parts: Vec::new(),
        })
    }

    pub fn zero(space: &HilbertSpace) -> HamiltonianSpec {
        HamiltonianSpec {
            static_part: Operator::zero(space),
            oscillatory_parts: Vec::new(),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        self.static_part.space()
    }

    /// Adds a term O e^{i omega t} + h.c.; the adjoint is cached.
    pub fn push_oscillatory(&mut self, op: Operator, omega: f64) -> Result<()> {
        op.space().check_same(self.space())?;
        let adjoint = op.adjoint();
        self.oscillatory_parts.push(OscillatoryPart {
            op,
            omega,
            adjoint,
        });
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.oscillatory_parts.is_empty()
    }

    /// Largest |omega| among oscillatory terms; zero for static specs.
    pub fn max_frequency(&self) -> f64 {
        self.oscillatory_parts
            .iter()
            .map(|p| p.omega.abs())
            .fold(0.0, f64::max)
    }

    /// Assembles the full operator at time t.
    pub fn at_time(&self, t: f64) -> Result<Operator> {
        let mut out = self.static_part.clone();
        for part in &self.oscillatory_parts {
            let phase = Complex64::from_polar(1.0, part.omega * t);
            out = out.add_scaled(phase, &part.op)?;
            out = out.add_scaled(phase.conj(), &part.adjoint)?;
        }
        Ok(out)
    }

    /// y = H(t) x without assembling the sum.
    pub fn apply(&self, t: f64, x: &[Complex64], y: &mut [Complex64]) {
        self.static_part.apply(x, y);
        for part in &self.oscillatory_parts {
            let phase = Complex64::from_polar(1.0, part.omega * t);
            part.op.apply_add(phase, x, y);
            part.adjoint.apply_add(phase.conj(), x, y);
        }
    }

    /// Static part plus the oscillatory envelope: sum of |coefficient| bounds,
    /// used to budget step sizes.
    pub fn norm_bound(&self) -> f64 {
        let mut bound = self.static_part.norm_inf();
        for part in &self.oscillatory_parts {
            bound += part.op.norm_inf() + part.adjoint.norm_inf();
        }
        bound
    }

    /// Sum of two specs on the same space.
    pub fn add(&self, other: &HamiltonianSpec) -> Result<HamiltonianSpec> {
        other.space().check_same(self.space())?;
        let mut out = HamiltonianSpec {
            static_part: self.static_part.add(&other.static_part)?,
            oscillatory_parts: self.oscillatory_parts.clone(),
        };
        out.oscillatory_parts
            .extend(other.oscillatory_parts.iter().cloned());
        Ok(out)
    }
}

fn require(space: &HilbertSpace, labels: &[Label], what: &str) -> Result<()> {
    for &label in labels {
        if !space.has(label) {
            return Err(SimError::Space(format!(
                "{what} needs subsystem {} which is absent from the space",
                label.as_str()
            )));
        }
    }
    Ok(())
}

/// Product of two single-subsystem operators acting on disjoint subsystems.
fn two_site(a: &Operator, b: &Operator) -> Result<Operator> {
    a.matmul(b)
}

struct SideLabels {
    qutrit: Label,
    cav_lo: Label,
    cav_hi: Label,
}

fn side_labels(side: Side) -> Vec<SideLabels> {
    match side {
        Side::Left => vec![SideLabels {
            qutrit: Label::QutritL,
            cav_lo: Label::Cav1,
            cav_hi: Label::Cav2,
        }],
        Side::Right => vec![SideLabels {
            qutrit: Label::QutritR,
            cav_lo: Label::Cav3,
            cav_hi: Label::Cav4,
        }],
        Side::Both => {
            let mut v = side_labels(Side::Left);
            v.extend(side_labels(Side::Right));
            v
        }
    }
}

/// Dispersive qutrit-cavity interaction in the rotating frame where it is
/// static: -delta1 n_lo + delta2 n_hi + g1(a_lo s+_ge + h.c.) + g2(a_hi s+_ef + h.c.)
/// per side. The two half-device terms commute, so `both` is their plain sum.
pub fn dispersive_interaction(
    params: &DeviceParams,
    space: &HilbertSpace,
    side: Side,
) -> Result<HamiltonianSpec> {
    let mut total = Operator::zero(space);
    for labels in side_labels(side) {
        require(
            space,
            &[labels.qutrit, labels.cav_lo, labels.cav_hi],
            "dispersive interaction",
        )?;
        let n_lo = mode_number(space, labels.cav_lo)?;
        let n_hi = mode_number(space, labels.cav_hi)?;
        let a_lo = mode_annihilation(space, labels.cav_lo)?;
        let a_hi = mode_annihilation(space, labels.cav_hi)?;
        let sp_ge = qutrit_transition(space, labels.qutrit, Level::G, Level::E)?;
        let sp_ef = qutrit_transition(space, labels.qutrit, Level::E, Level::F)?;

        let c1 = two_site(&a_lo, &sp_ge)?;
        let c2 = two_site(&a_hi, &sp_ef)?;
        let side_sum = weighted_sum(&[
            (Complex64::new(-params.delta1, 0.0), &n_lo),
            (Complex64::new(params.delta2, 0.0), &n_hi),
            (Complex64::new(params.g1, 0.0), &c1),
            (Complex64::new(params.g1, 0.0), &c1.adjoint()),
            (Complex64::new(params.g2, 0.0), &c2),
            (Complex64::new(params.g2, 0.0), &c2.adjoint()),
        ])?;
        total = total.add(&side_sum)?;
    }
    HamiltonianSpec::new(total)
}

/// The same interaction kept in its original interaction-picture form with
/// explicit e^{+i delta1 t} and e^{-i delta2 t} factors. Slow to integrate;
/// exists so the rotating-frame reduction can be checked against direct
/// integration.
pub fn dispersive_interaction_explicit(
    params: &DeviceParams,
    space: &HilbertSpace,
    side: Side,
) -> Result<HamiltonianSpec> {
    let mut ge_sum = Operator::zero(space);
    let mut ef_sum = Operator::zero(space);
    for labels in side_labels(side) {
        require(
            space,
            &[labels.qutrit, labels.cav_lo, labels.cav_hi],
            "dispersive interaction",
        )?;
        let a_lo = mode_annihilation(space, labels.cav_lo)?;
        let a_hi = mode_annihilation(space, labels.cav_hi)?;
        let sp_ge = qutrit_transition(space, labels.qutrit, Level::G, Level::E)?;
        let sp_ef = qutrit_transition(space, labels.qutrit, Level::E, Level::F)?;
        ge_sum = ge_sum.add_scaled(
            Complex64::new(params.g1, 0.0),
            &two_site(&a_lo, &sp_ge)?,
        )?;
        ef_sum = ef_sum.add_scaled(
            Complex64::new(params.g2, 0.0),
            &two_site(&a_hi, &sp_ef)?,
        )?;
    }
    let mut spec = HamiltonianSpec::zero(space);
    spec.push_oscillatory(ge_sum, params.delta1)?;
    spec.push_oscillatory(ef_sum, -params.delta2)?;
    Ok(spec)
}

/// Diagonal generator K of the rotating frame: delta1 n_lo - delta2 n_hi per
/// side. A state in the rotating frame relates to the interaction-picture
/// state by psi_frame(t) = e^{+iKt} psi_ip(t).
pub fn frame_generator(
    params: &DeviceParams,
    space: &HilbertSpace,
    side: Side,
) -> Result<Operator> {
    let mut total = Operator::zero(space);
    for labels in side_labels(side) {
        require(space, &[labels.cav_lo, labels.cav_hi], "frame generator")?;
        let n_lo = mode_number(space, labels.cav_lo)?;
        let n_hi = mode_number(space, labels.cav_hi)?;
        let term = weighted_sum(&[
            (Complex64::new(params.delta1, 0.0), &n_lo),
            (Complex64::new(-params.delta2, 0.0), &n_hi),
        ])?;
        total = total.add(&term)?;
    }
    Ok(total)
}

/// Applies e^{i sign K t} to a state for diagonal K.
pub fn rotate_frame(
    k: &Operator,
    t: f64,
    sign: f64,
    psi: &StateVector,
) -> Result<StateVector> {
    k.space().check_same(psi.space())?;
    if !k.is_diagonal() {
        return Err(SimError::InvalidInput(
            "frame rotation requires a diagonal generator".into(),
        ));
    }
    let diag = k.diagonal();
    let mut out = psi.clone();
    for (amp, d) in out.amplitudes_mut().iter_mut().zip(diag.iter()) {
        *amp *= Complex64::from_polar(1.0, sign * d.re * t);
    }
    Ok(out)
}

/// Classical drive on both qutrits:
/// H = sum_{j=L,R} Omega (e^{-i phi} s+ + e^{+i phi} s-).
/// With the default phases a quarter period realizes |g> -> |f> (gf pulse)
/// and |e> -> |g> (ge pulse).
pub fn drive_pulse(
    params: &DeviceParams,
    space: &HilbertSpace,
    transition: PulseTransition,
    initial_phase: f64,
) -> Result<HamiltonianSpec> {
    require(
        space,
        &[Label::QutritL, Label::QutritR],
        "drive pulse",
    )?;
    let (omega, hi, lo) = match transition {
        PulseTransition::Gf => (params.omega_gf_rabi, Level::F, Level::G),
        PulseTransition::Ge => (params.omega_ge_rabi, Level::E, Level::G),
    };
    let coeff = Complex64::from_polar(omega, -initial_phase);
    let mut total = Operator::zero(space);
    for qutrit in [Label::QutritL, Label::QutritR] {
        let raise = qutrit_transition(space, qutrit, lo, hi)?;
        total = total.add_scaled(coeff, &raise)?;
        total = total.add_scaled(coeff.conj(), &raise.adjoint())?;
    }
    HamiltonianSpec::new(total)
}

/// Resonant coupling of both qutrits' g-e transition to the central cavity:
/// h = mu sum_j (a_c' s-_ge,j + h.c.). Prepares the qutrit Bell state from
/// |g>|g>|1> in a quarter period of the sqrt(2)-enhanced Rabi frequency.
pub fn bell_prep_interaction(
    params: &DeviceParams,
    space: &HilbertSpace,
) -> Result<HamiltonianSpec> {
    require(
        space,
        &[Label::QutritL, Label::QutritR, Label::CavCentral],
        "Bell preparation",
    )?;
    let mu = params.mu_required()?;
    let a = mode_annihilation(space, Label::CavCentral)?;
    let a_dag = a.adjoint();
    let mut total = Operator::zero(space);
    for qutrit in [Label::QutritL, Label::QutritR] {
        let lower = qutrit_transition(space, qutrit, Level::E, Level::G)?;
        let term = two_site(&a_dag, &lower)?;
        total = total.add_scaled(Complex64::new(mu, 0.0), &term)?;
        total = total.add_scaled(Complex64::new(mu, 0.0), &term.adjoint())?;
    }
    HamiltonianSpec::new(total)
}

/// Inter-cavity crosstalk within each half. In the lab-adjacent picture this
/// is g12(e^{i Delta t} a1 a2' + h.c.) + g34(e^{i Delta t} a3 a4' + h.c.);
/// after the rotating-frame transform the oscillation survives at the
/// residual frequency Delta - (delta1 + delta2).
pub fn crosstalk(params: &DeviceParams, space: &HilbertSpace) -> Result<HamiltonianSpec> {
    require(
        space,
        &[Label::Cav1, Label::Cav2, Label::Cav3, Label::Cav4],
        "crosstalk",
    )?;
    let mut spec = HamiltonianSpec::zero(space);
    if params.g12 == 0.0 && params.g34 == 0.0 {
        return Ok(spec);
    }
    let residual = params.delta_cavity - (params.delta1 + params.delta2);
    let mut op = Operator::zero(space);
    if params.g12 != 0.0 {
        let a1 = mode_annihilation(space, Label::Cav1)?;
        let a2_dag = mode_annihilation(space, Label::Cav2)?.adjoint();
        op = op.add_scaled(
            Complex64::new(params.g12, 0.0),
            &two_site(&a1, &a2_dag)?,
        )?;
    }
    if params.g34 != 0.0 {
        let a3 = mode_annihilation(space, Label::Cav3)?;
        let a4_dag = mode_annihilation(space, Label::Cav4)?.adjoint();
        op = op.add_scaled(
            Complex64::new(params.g34, 0.0),
            &two_site(&a3, &a4_dag)?,
        )?;
    }
    spec.push_oscillatory(op, residual)?;
    Ok(spec)
}

/// The three composite Hamiltonians the noisy simulation alternates between:
/// 1 = two-sided interaction + crosstalk; 2 = gf pulse on top of 1;
/// 3 = ge pulse on top of 1.
pub fn modified_hamiltonian(
    params: &DeviceParams,
    space: &HilbertSpace,
    phase_index: u8,
) -> Result<HamiltonianSpec> {
    let base = dispersive_interaction(params, space, Side::Both)?
        .add(&crosstalk(params, space)?)?;
    match phase_index {
        1 => Ok(base),
        2 => drive_pulse(params, space, PulseTransition::Gf, GF_PULSE_PHASE)?.add(&base),
        3 => drive_pulse(params, space, PulseTransition::Ge, GE_PULSE_PHASE)?.add(&base),
        other => Err(SimError::InvalidInput(format!(
            "phase index {other} out of range (expected 1, 2, or 3)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::TWO_PI;
    use crate::hilbert::build_space;
    use crate::smallmat;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn left_space(cav_dim: usize) -> HilbertSpace {
        build_space(&[
            (Label::QutritL, 3),
            (Label::Cav1, cav_dim),
            (Label::Cav2, cav_dim),
        ])
        .unwrap()
    }

    fn full_space(cav_dim: usize) -> HilbertSpace {
        build_space(&[
            (Label::QutritL, 3),
            (Label::QutritR, 3),
            (Label::Cav1, cav_dim),
            (Label::Cav2, cav_dim),
            (Label::Cav3, cav_dim),
            (Label::Cav4, cav_dim),
        ])
        .unwrap()
    }

    fn dense_unitary_evolve(h: &Operator, t: f64, psi: &StateVector) -> StateVector {
        let d = h.dim();
        let mut m = Array2::<Complex64>::zeros((d, d));
        for (r, c, v) in h.triplets() {
            m[(r, c)] = v;
        }
        let u = smallmat::expm_scaled(&m, Complex64::new(0.0, -t)).unwrap();
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for r in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..d {
                acc += u[(r, c)] * psi.amplitudes()[c];
            }
            out[r] = acc;
        }
        StateVector::from_amplitudes(psi.space(), out).unwrap()
    }

    #[test]
    fn left_coupling_matrix_element() {
        let params = DeviceParams::baseline();
        let space = left_space(2);
        let h = dispersive_interaction(&params, &space, Side::Left).unwrap();
        let row = space.index_of(&[1, 0, 0]);
        let col = space.index_of(&[0, 1, 0]);
        let elem = h.static_part.get(row, col);
        assert_abs_diff_eq!(elem.re, params.g1, epsilon = 1e-6);
        assert_abs_diff_eq!(elem.im, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn halves_commute_and_sum() {
        let params = DeviceParams::baseline();
        let space = full_space(2);
        let hl = dispersive_interaction(&params, &space, Side::Left).unwrap();
        let hr = dispersive_interaction(&params, &space, Side::Right).unwrap();
        let hb = dispersive_interaction(&params, &space, Side::Both).unwrap();
        let comm = hl.static_part.commutator(&hr.static_part).unwrap();
        assert!(comm.norm_fro() <= 1e-6 * hl.static_part.norm_fro());
        let diff = hb
            .static_part
            .add_scaled(Complex64::new(-1.0, 0.0), &hl.static_part.add(&hr.static_part).unwrap())
            .unwrap();
        assert!(diff.norm_fro() <= 1e-9 * hb.static_part.norm_fro());
    }

    #[test]
    fn missing_subsystem_rejected() {
        let params = DeviceParams::baseline();
        let space = left_space(2);
        let err = dispersive_interaction(&params, &space, Side::Right).unwrap_err();
        assert_eq!(err.category(), "space-mismatch");
        let err = bell_prep_interaction(&params, &space).unwrap_err();
        assert_eq!(err.category(), "space-mismatch");
    }

    #[test]
    fn assembled_hamiltonians_are_hermitian() {
        let params = DeviceParams::baseline()
            .with_config_edit(|cfg| {
                cfg.couplings.g12 = 1.0;
                cfg.couplings.g34 = 1.0;
            })
            .unwrap();
        let space = full_space(2);
        let delta = params.delta_cavity;
        for index in 1..=3 {
            let h = modified_hamiltonian(&params, &space, index).unwrap();
            for t in [0.0, 0.1 / delta, std::f64::consts::PI / delta] {
                let op = h.at_time(t).unwrap();
                assert!(
                    op.hermiticity_deviation() <= 1e-9 * op.norm_inf().max(1.0),
                    "phase {index} not Hermitian at t={t}"
                );
            }
        }
    }

    #[test]
    fn modified_phases_differ_by_pulses() {
        let params = DeviceParams::baseline()
            .with_config_edit(|cfg| {
                cfg.couplings.g12 = 0.5;
                cfg.couplings.g34 = 0.5;
            })
            .unwrap();
        let space = full_space(2);
        let t = 0.37e-9;
        let h1 = modified_hamiltonian(&params, &space, 1).unwrap().at_time(t).unwrap();
        let h2 = modified_hamiltonian(&params, &space, 2).unwrap().at_time(t).unwrap();
        let h3 = modified_hamiltonian(&params, &space, 3).unwrap().at_time(t).unwrap();
        let gf = drive_pulse(&params, &space, PulseTransition::Gf, GF_PULSE_PHASE)
            .unwrap()
            .static_part;
        let ge = drive_pulse(&params, &space, PulseTransition::Ge, GE_PULSE_PHASE)
            .unwrap()
            .static_part;
        let d2 = h2.add_scaled(Complex64::new(-1.0, 0.0), &h1).unwrap();
        let d3 = h3.add_scaled(Complex64::new(-1.0, 0.0), &h1).unwrap();
        assert!(d2.add_scaled(Complex64::new(-1.0, 0.0), &gf).unwrap().norm_fro() <= 1e-9 * gf.norm_fro());
        assert!(d3.add_scaled(Complex64::new(-1.0, 0.0), &ge).unwrap().norm_fro() <= 1e-9 * ge.norm_fro());
        let zero_ct = DeviceParams::baseline();
        let h1_clean = modified_hamiltonian(&zero_ct, &space, 1).unwrap();
        assert!(h1_clean.is_static());
        let base = dispersive_interaction(&zero_ct, &space, Side::Both).unwrap();
        let dd = h1_clean
            .static_part
            .add_scaled(Complex64::new(-1.0, 0.0), &base.static_part)
            .unwrap();
        assert_eq!(dd.nnz(), 0);
    }

    #[test]
    fn gf_pulse_quarter_and_half_period() {
        let params = DeviceParams::baseline();
        let space = build_space(&[(Label::QutritL, 3), (Label::QutritR, 3)]).unwrap();
        let h = drive_pulse(&params, &space, PulseTransition::Gf, GF_PULSE_PHASE).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2 / params.omega_gf_rabi;

        let gg = StateVector::basis(&space, &[0, 0]).unwrap();
        let ff = StateVector::basis(&space, &[2, 2]).unwrap();
        let out = dense_unitary_evolve(&h.static_part, quarter, &gg);
        let ov = out.inner(&ff).unwrap();
        assert_abs_diff_eq!(ov.re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ov.im, 0.0, epsilon = 1e-9);

        let ge_state = StateVector::basis(&space, &[0, 1]).unwrap();
        let twice = dense_unitary_evolve(&h.static_part, 2.0 * quarter, &ge_state);
        let ov = twice.inner(&ge_state).unwrap();
        assert_abs_diff_eq!(ov.re, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn ge_pulse_mappings() {
        let params = DeviceParams::baseline();
        let space = build_space(&[(Label::QutritL, 3), (Label::QutritR, 3)]).unwrap();
        let h = drive_pulse(&params, &space, PulseTransition::Ge, GE_PULSE_PHASE).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2 / params.omega_ge_rabi;

        let ee = StateVector::basis(&space, &[1, 1]).unwrap();
        let gg = StateVector::basis(&space, &[0, 0]).unwrap();
        let out = dense_unitary_evolve(&h.static_part, quarter, &ee);
        let ov = out.inner(&gg).unwrap();
        assert_abs_diff_eq!(ov.re, 1.0, epsilon = 1e-9);

        let ff = StateVector::basis(&space, &[2, 2]).unwrap();
        let out = dense_unitary_evolve(&h.static_part, quarter, &ff);
        assert_abs_diff_eq!(out.inner(&ff).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bell_preparation_from_single_photon() {
        let params = DeviceParams::baseline();
        let space = build_space(&[
            (Label::QutritL, 3),
            (Label::QutritR, 3),
            (Label::CavCentral, 2),
        ])
        .unwrap();
        let h = bell_prep_interaction(&params, &space).unwrap();
        let mu = params.mu.unwrap();
        let tau = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2 * mu);

        let init = StateVector::basis(&space, &[0, 0, 1]).unwrap();
        let out = dense_unitary_evolve(&h.static_part, tau, &init);
        let mut bell = StateVector::zero(&space);
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        bell.amplitudes_mut()[space.index_of(&[0, 1, 0])] = inv;
        bell.amplitudes_mut()[space.index_of(&[1, 0, 0])] = inv;
        let ov = bell.inner(&out).unwrap();
        assert_abs_diff_eq!(ov.im, -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ov.re, 0.0, epsilon = 1e-9);

        let vacuum = StateVector::basis(&space, &[0, 0, 0]).unwrap();
        let still = dense_unitary_evolve(&h.static_part, tau, &vacuum);
        assert_abs_diff_eq!(still.inner(&vacuum).unwrap().re, 1.0, epsilon = 1e-12);

        let n_exc = {
            let number = mode_number(&space, Label::CavCentral).unwrap();
            let pe_l = crate::hilbert::qutrit_projector(&space, Label::QutritL, Level::E).unwrap();
            let pe_r = crate::hilbert::qutrit_projector(&space, Label::QutritR, Level::E).unwrap();
            number.add(&pe_l).unwrap().add(&pe_r).unwrap()
        };
        let comm = h.static_part.commutator(&n_exc).unwrap();
        assert!(comm.norm_fro() <= 1e-9 * h.static_part.norm_fro());
    }

    #[test]
    fn crosstalk_structure() {
        let space = full_space(2);
        let clean = DeviceParams::baseline();
        assert!(crosstalk(&clean, &space).unwrap().oscillatory_parts.is_empty());

        let params = clean
            .with_config_edit(|cfg| {
                cfg.couplings.g12 = 1.9;
                cfg.couplings.g34 = 1.9;
            })
            .unwrap();
        let ct = crosstalk(&params, &space).unwrap();
        assert_eq!(ct.oscillatory_parts.len(), 1);
        let residual = ct.oscillatory_parts[0].omega;
        assert_abs_diff_eq!(residual / TWO_PI, 2.5e9, epsilon = 1.0);
        let h = ct.at_time(1.3e-9).unwrap();
        assert!(h.hermiticity_deviation() <= 1e-9 * h.norm_inf());
    }

    #[test]
    fn frame_equivalence_against_direct_integration() {
        let params = DeviceParams::baseline();
        let space = left_space(3);
        let h_static = dispersive_interaction(&params, &space, Side::Left).unwrap();
        let h_explicit = dispersive_interaction_explicit(&params, &space, Side::Left).unwrap();
        let k = frame_generator(&params, &space, Side::Left).unwrap();

        let t_final = 30e-9;
        let psi0 = StateVector::basis(&space, &[2, 0, 0]).unwrap();

        let direct = crate::solver::ode::integrate_schroedinger(
            &h_explicit,
            &psi0,
            0.0,
            t_final,
            1e-12,
        )
        .unwrap();

        let framed = dense_unitary_evolve(&h_static.static_part, t_final, &psi0);
        let mapped = rotate_frame(&k, t_final, -1.0, &framed).unwrap();

        let mut diff = mapped.clone();
        diff.add_scaled(Complex64::new(-1.0, 0.0), &direct).unwrap();
        assert!(diff.norm() <= 1e-8, "frame mismatch {}", diff.norm());
    }

    #[test]
    fn combined_frame_equivalence() {
        let params = DeviceParams::baseline();
        let space = full_space(2);
        let h_static = dispersive_interaction(&params, &space, Side::Both).unwrap();
        let h_explicit = dispersive_interaction_explicit(&params, &space, Side::Both).unwrap();
        let k = frame_generator(&params, &space, Side::Both).unwrap();

        let t_final = 12e-9;
        let mut psi0 = StateVector::basis(&space, &[2, 1, 0, 0, 0, 0]).unwrap();
        psi0.amplitudes_mut()[space.index_of(&[0, 0, 1, 1, 0, 0])] =
            Complex64::new(0.0, 0.6);
        psi0.normalize().unwrap();

        let direct = crate::solver::ode::integrate_schroedinger(
            &h_explicit,
            &psi0,
            0.0,
            t_final,
            1e-12,
        )
        .unwrap();
        let framed = dense_unitary_evolve(&h_static.static_part, t_final, &psi0);
        let mapped = rotate_frame(&k, t_final, -1.0, &framed).unwrap();
        let mut diff = mapped;
        diff.add_scaled(Complex64::new(-1.0, 0.0), &direct).unwrap();
        assert!(diff.norm() <= 1e-8, "frame mismatch {}", diff.norm());
    }

    #[test]
    fn large_detuning_population_transfer() {
        let base = DeviceParams::baseline();
        let params = base
            .with_config_edit(|cfg| {
                cfg.couplings.g1 = 20.0;
                cfg.couplings.g2 = 20.0;
            })
            .unwrap();
        assert!(params.large_detuning(50.0));
        let space = left_space(3);
        let h = dispersive_interaction(&params, &space, Side::Left).unwrap();
        let lambda = crate::device::lambda_eff(&params).unwrap();
        let t = std::f64::consts::PI / (2.0 * lambda);

        let psi0 = StateVector::basis(&space, &[2, 0, 0]).unwrap();
        let out = dense_unitary_evolve(&h.static_part, t, &psi0);
        let target = StateVector::basis(&space, &[0, 1, 1]).unwrap();
        let p = out.inner(&target).unwrap().norm_sqr();
        assert!(p >= 0.95, "transfer probability {p}");
    }

    #[test]
    fn hermiticity_guard_rejects_non_hermitian() {
        let space = left_space(2);
        let a = mode_annihilation(&space, Label::Cav1).unwrap();
        assert!(HamiltonianSpec::new(a).is_err());
    }

    #[test]
    fn dense_helper_matches_identity() {
        let space = build_space(&[(Label::QutritL, 3)]).unwrap();
        let h = Operator::zero(&space);
        let psi = StateVector::basis(&space, &[1]).unwrap();
        let out = dense_unitary_evolve(&h, 1.0, &psi);
        assert_abs_diff_eq!(out.inner(&psi).unwrap().re, 1.0, epsilon = 1e-14);
    }
}
