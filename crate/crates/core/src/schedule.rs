//! Compiles the protocol into an executable timeline of segments.
//!
//! The generation sequence for photon number N is
//!
//!   [bell-prep] -> gf pulse -> (interact t_j -> gf pulse) for j = 1..N-1
//!   -> ge pulse -> interact t_N
//!
//! plus four level-adjustment gaps when enabled. The total-time accounting
//! counts exactly four gaps without fixing their positions; they are placed
//! post-Bell, pre-first-pulse, pre-final-step, and post-final, which only
//! matters when gap noise is enabled.

use crate::analytic::{step_durations, EffectiveParams};
use crate::device::DeviceParams;
use crate::error::{Result, SimError};

/// What a segment does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    BellPrep,
    PulseGf,
    PulseGe,
    Interact,
    Gap,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::BellPrep => "bell-prep",
            SegmentKind::PulseGf => "pulse-gf",
            SegmentKind::PulseGe => "pulse-ge",
            SegmentKind::Interact => "interact",
            SegmentKind::Gap => "gap",
        }
    }
}

/// Which Hamiltonian drives a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianRef {
    /// Composite phase 1..3: interaction, gf pulse, ge pulse (each with
    /// concurrent interaction and crosstalk).
    Phase(u8),
    /// Resonant Bell-preparation coupling via the central cavity.
    Bell,
    /// Free segment.
    None,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Duration in seconds.
    pub duration: f64,
    pub hamiltonian: HamiltonianRef,
    pub noise_active: bool,
    /// For interaction segments, the 1-based step index j; 0 otherwise.
    pub step_index: usize,
}

/// Compilation switches. Defaults give the bare generation sequence: no
/// Bell preparation (it is fast and resonant) and no gaps.
#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub include_bell: bool,
    pub include_gaps: bool,
    /// Disables the concurrent interaction and crosstalk during pulses,
    /// reducing them to bare rotations; used for oracle comparisons.
    pub ideal_pulses: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            include_bell: false,
            include_gaps: false,
            ideal_pulses: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    pub params: DeviceParams,
    pub n: usize,
    pub options: CompileOptions,
}

impl Schedule {
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn count(&self, kind: SegmentKind) -> usize {
        self.segments.iter().filter(|s| s.kind == kind).count()
    }
}

pub fn compile(n: usize, params: &DeviceParams, options: CompileOptions) -> Result<Schedule> {
    if n < 1 {
        return Err(SimError::InvalidInput(
            "photon number must be at least 1".into(),
        ));
    }
    let p = EffectiveParams::from_device(params)?;
    let d = if options.include_bell {
        step_durations(n, &p, params)?
    } else {
        // Bell duration needs mu, which is not required when the Bell stage
        // is excluded; splice in a placeholder the timeline never uses.
        let mut without_mu = params.clone();
        without_mu.mu = Some(1.0);
        let mut d = step_durations(n, &p, &without_mu)?;
        d.bell = 0.0;
        d
    };
    let gap_noise = params.noise_during_gaps;

    let mut segments = Vec::with_capacity(2 * n + 6);
    let gap = |segments: &mut Vec<Segment>| {
        if options.include_gaps {
            segments.push(Segment {
                kind: SegmentKind::Gap,
                duration: d.gap,
                hamiltonian: HamiltonianRef::None,
                noise_active: gap_noise,
                step_index: 0,
            });
        }
    };

    if options.include_bell {
        segments.push(Segment {
            kind: SegmentKind::BellPrep,
            duration: d.bell,
            hamiltonian: HamiltonianRef::Bell,
            noise_active: true,
            step_index: 0,
        });
    }
    gap(&mut segments);
    gap(&mut segments);
    let gf = Segment {
        kind: SegmentKind::PulseGf,
        duration: d.gf_pulse,
        hamiltonian: HamiltonianRef::Phase(2),
        noise_active: true,
        step_index: 0,
    };
    segments.push(gf.clone());
    for j in 1..n {
        segments.push(Segment {
            kind: SegmentKind::Interact,
            duration: d.interactions[j - 1],
            hamiltonian: HamiltonianRef::Phase(1),
            noise_active: true,
            step_index: j,
        });
        segments.push(gf.clone());
    }
    gap(&mut segments);
    segments.push(Segment {
        kind: SegmentKind::PulseGe,
        duration: d.ge_pulse,
        hamiltonian: HamiltonianRef::Phase(3),
        noise_active: true,
        step_index: 0,
    });
    segments.push(Segment {
        kind: SegmentKind::Interact,
        duration: d.interactions[n - 1],
        hamiltonian: HamiltonianRef::Phase(1),
        noise_active: true,
        step_index: n,
    });
    gap(&mut segments);

    Ok(Schedule {
        segments,
        params: params.clone(),
        n,
        options,
    })
}
