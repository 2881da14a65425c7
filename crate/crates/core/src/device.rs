//! Physical device parameters: couplings, detunings, drive strengths, decay
//! and dephasing rates, plus the derived quantities (effective two-photon
//! coupling, cavity detuning, quality factors, lifetimes) and the collapse
//! channels of the master equation.
//!
//! All frequencies and rates are stored as angular quantities (rad/s).
//! Configuration files quote nu = omega/2pi in MHz or GHz and lifetimes in
//! microseconds, matching the units the device literature uses; conversion
//! happens once at the parse boundary. The raw config is kept alongside the
//! converted values so emitted snapshots re-parse bit-identically.

use crate::error::{Result, SimError};
use crate::hilbert::{
    mode_annihilation, qutrit_projector, qutrit_transition, HilbertSpace, Label, Level, Operator,
};
use serde::{Deserialize, Serialize};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// nu in MHz -> angular rad/s
pub fn mhz(nu: f64) -> f64 {
    TWO_PI * 1e6 * nu
}

/// nu in GHz -> angular rad/s
pub fn ghz(nu: f64) -> f64 {
    TWO_PI * 1e9 * nu
}

/// lifetime in microseconds -> rate in 1/s (zero lifetime is rejected upstream)
fn rate_from_us(lifetime_us: f64) -> f64 {
    if lifetime_us.is_infinite() {
        0.0
    } else {
        1.0 / (lifetime_us * 1e-6)
    }
}

/// Relaxation and pure-dephasing rates of one qutrit (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QutritRates {
    pub gamma_ef: f64,
    pub gamma_gf: f64,
    pub gamma_ge: f64,
    pub gamma_fphi: f64,
    pub gamma_ephi: f64,
}

impl QutritRates {
    pub fn is_zero(&self) -> bool {
        self.gamma_ef == 0.0
            && self.gamma_gf == 0.0
            && self.gamma_ge == 0.0
            && self.gamma_fphi == 0.0
            && self.gamma_ephi == 0.0
    }
}

/// Raw configuration file schema. Frequencies are nu = omega/2pi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub couplings: CouplingsConfig,
    pub frequencies: FrequenciesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
}

/// `[couplings]`: MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsConfig {
    pub g1: f64,
    pub g2: f64,
    /// Bell-preparation coupling; there is no canonical value for it, so it
    /// must be supplied explicitly when the Bell segment is simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub omega_gf: f64,
    pub omega_ge: f64,
    #[serde(default)]
    pub g12: f64,
    #[serde(default)]
    pub g34: f64,
}

/// `[frequencies]`: GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequenciesConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub qutrit_ge: f64,
    pub qutrit_ef: f64,
    /// Cavity detuning Delta = omega_c2 - omega_c1; derived from the other
    /// frequencies when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_cavity: Option<f64>,
}

/// `[noise]`: lifetimes in microseconds (rate = 1/lifetime, `inf` disables).
/// Omitting the section entirely gives a closed system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kappa: [f64; 4],
    pub gamma_ef: f64,
    pub gamma_gf: f64,
    pub gamma_ge: f64,
    pub gamma_fphi: f64,
    pub gamma_ephi: f64,
    /// Per-qutrit overrides; both qutrits share the rates above by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<QutritNoiseOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<QutritNoiseOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QutritNoiseOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_gf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_fphi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ephi: Option<f64>,
}

/// `[schedule]`: gap handling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Level-spacing adjustment gap, microseconds.
    #[serde(default)]
    pub t_d: f64,
    /// Whether collapse channels stay active during gaps.
    #[serde(default = "default_true")]
    pub noise_during_gaps: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            t_d: 0.0,
            noise_during_gaps: true,
        }
    }
}

/// All physical constants in angular units, with the raw config retained.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub g1: f64,
    pub g2: f64,
    pub mu: Option<f64>,
    pub omega_gf_rabi: f64,
    pub omega_ge_rabi: f64,
    pub g12: f64,
    pub g34: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Cavity detuning Delta = omega_c2 - omega_c1 = omega_c4 - omega_c3.
    pub delta_cavity: f64,
    pub omega_ge: f64,
    pub omega_ef: f64,
    pub kappa: [f64; 4],
    pub rates_l: QutritRates,
    pub rates_r: QutritRates,
    pub t_d: f64,
    pub noise_during_gaps: bool,
    raw: DeviceConfig,
}

impl DeviceParams {
    pub fn from_config(cfg: DeviceConfig) -> Result<DeviceParams> {
        let c = &cfg.couplings;
        let f = &cfg.frequencies;
        for (name, v) in [
            ("couplings.g1", c.g1),
            ("couplings.g2", c.g2),
            ("couplings.omega_gf", c.omega_gf),
            ("couplings.omega_ge", c.omega_ge),
            ("couplings.g12", c.g12),
            ("couplings.g34", c.g34),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(SimError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(mu) = c.mu {
            if mu <= 0.0 || !mu.is_finite() {
                return Err(SimError::Config(format!(
                    "couplings.mu must be > 0 when given, got {mu}"
                )));
            }
        }
        if f.delta1 <= 0.0 || f.delta2 <= 0.0 {
            return Err(SimError::Config(
                "frequencies.delta1 and delta2 must be > 0".into(),
            ));
        }
        let delta1 = ghz(f.delta1);
        let delta2 = ghz(f.delta2);
        let omega_ge = ghz(f.qutrit_ge);
        let omega_ef = ghz(f.qutrit_ef);
        let delta_cavity = match f.delta_cavity {
            Some(d) => ghz(d),
            // omega_c1 = omega_ge - delta1, omega_c2 = omega_ef + delta2
            None => omega_ef + delta2 - (omega_ge - delta1),
        };
        let (kappa, shared, left_ov, right_ov) = match &cfg.noise {
            Some(n) => {
                for (name, v) in [
                    ("gamma_ef", n.gamma_ef),
                    ("gamma_gf", n.gamma_gf),
                    ("gamma_ge", n.gamma_ge),
                    ("gamma_fphi", n.gamma_fphi),
                    ("gamma_ephi", n.gamma_ephi),
                    ("kappa[0]", n.kappa[0]),
                    ("kappa[1]", n.kappa[1]),
                    ("kappa[2]", n.kappa[2]),
                    ("kappa[3]", n.kappa[3]),
                ] {
                    if v <= 0.0 {
                        return Err(SimError::Config(format!(
                            "noise.{name} lifetime must be > 0 microseconds (use `inf` to disable), got {v}"
                        )));
                    }
                }
                let shared = QutritRates {
                    gamma_ef: rate_from_us(n.gamma_ef),
                    gamma_gf: rate_from_us(n.gamma_gf),
                    gamma_ge: rate_from_us(n.gamma_ge),
                    gamma_fphi: rate_from_us(n.gamma_fphi),
                    gamma_ephi: rate_from_us(n.gamma_ephi),
                };
                (
                    [
                        rate_from_us(n.kappa[0]),
                        rate_from_us(n.kappa[1]),
                        rate_from_us(n.kappa[2]),
                        rate_from_us(n.kappa[3]),
                    ],
                    shared,
                    n.left.clone(),
                    n.right.clone(),
                )
            }
            None => ([0.0; 4], QutritRates::default(), None, None),
        };
        let apply_override = |base: QutritRates, ov: &Option<QutritNoiseOverride>| {
            let Some(ov) = ov else { return base };
            QutritRates {
                gamma_ef: ov.gamma_ef.map(rate_from_us).unwrap_or(base.gamma_ef),
                gamma_gf: ov.gamma_gf.map(rate_from_us).unwrap_or(base.gamma_gf),
                gamma_ge: ov.gamma_ge.map(rate_from_us).unwrap_or(base.gamma_ge),
                gamma_fphi: ov.gamma_fphi.map(rate_from_us).unwrap_or(base.gamma_fphi),
                gamma_ephi: ov.gamma_ephi.map(rate_from_us).unwrap_or(base.gamma_ephi),
            }
        };
        if cfg.schedule.t_d < 0.0 {
            return Err(SimError::Config("schedule.t_d must be >= 0".into()));
        }
        Ok(DeviceParams {
            g1: mhz(c.g1),
            g2: mhz(c.g2),
            mu: c.mu.map(mhz),
            omega_gf_rabi: mhz(c.omega_gf),
            omega_ge_rabi: mhz(c.omega_ge),
            g12: mhz(c.g12),
            g34: mhz(c.g34),
            delta1,
            delta2,
            delta_cavity,
            omega_ge,
            omega_ef,
            kappa,
            rates_l: apply_override(shared, &left_ov),
            rates_r: apply_override(shared, &right_ov),
            t_d: cfg.schedule.t_d * 1e-6,
            noise_during_gaps: cfg.schedule.noise_during_gaps,
            raw: cfg,
        })
    }

    pub fn from_toml(text: &str) -> Result<DeviceParams> {
        let cfg: DeviceConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        DeviceParams::from_config(cfg)
    }

    /// The raw configuration this instance was built from.
    pub fn config(&self) -> &DeviceConfig {
        &self.raw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).expect("config serializes")
    }

    /// Rebuilds with an edited raw config (used by parameter sweeps).
    pub fn with_config_edit(
        &self,
        edit: impl FnOnce(&mut DeviceConfig),
    ) -> Result<DeviceParams> {
        let mut cfg = self.raw.clone();
        edit(&mut cfg);
        DeviceParams::from_config(cfg)
    }

    /// Baseline parameter set: g/2pi = 19 MHz, delta/2pi = 1 GHz,
    /// Omega/2pi = 150 MHz, no crosstalk, full noise table.
    pub fn baseline() -> DeviceParams {
        let cfg = DeviceConfig {
            couplings: CouplingsConfig {
                g1: 19.0,
                g2: 19.0,
                mu: Some(20.0),
                omega_gf: 150.0,
                omega_ge: 150.0,
                g12: 0.0,
                g34: 0.0,
            },
            frequencies: FrequenciesConfig {
                delta1: 1.0,
                delta2: 1.0,
                qutrit_ge: 5.0,
                qutrit_ef: 7.5,
                delta_cavity: None,
            },
            noise: Some(NoiseConfig {
                kappa: [20.0, 20.0, 20.0, 20.0],
                gamma_ef: 5.0,
                gamma_gf: 20.0,
                gamma_ge: 10.0,
                gamma_fphi: 5.0,
                gamma_ephi: 5.0,
                left: None,
                right: None,
            }),
            schedule: ScheduleConfig::default(),
        };
        DeviceParams::from_config(cfg).expect("baseline config is valid")
    }

    /// Baseline with every decay and dephasing channel removed.
    pub fn baseline_coherent() -> DeviceParams {
        let mut cfg = DeviceParams::baseline().raw;
        cfg.noise = None;
        DeviceParams::from_config(cfg).expect("coherent config is valid")
    }

    /// True when both detunings dominate their couplings by `factor`.
    pub fn large_detuning(&self, factor: f64) -> bool {
        (self.g1 == 0.0 || self.delta1 / self.g1 >= factor)
            && (self.g2 == 0.0 || self.delta2 / self.g2 >= factor)
    }

    /// Cavity frequencies [omega_c1..omega_c4]; the two halves mirror.
    pub fn cavity_frequencies(&self) -> [f64; 4] {
        let c1 = self.omega_ge - self.delta1;
        let c2 = self.omega_ef + self.delta2;
        [c1, c2, c1, c2]
    }

    pub fn mu_required(&self) -> Result<f64> {
        self.mu.ok_or_else(|| {
            SimError::Config(
                "couplings.mu is not set; the Bell-preparation coupling has no canonical value and must be supplied".into(),
            )
        })
    }
}

/// Effective two-photon coupling lambda = (g1 g2 / 2)(1/delta1 + 1/delta2).
/// Reduces to g^2/delta in the matched case.
pub fn lambda_eff(params: &DeviceParams) -> Result<f64> {
    if params.delta1 <= 0.0 || params.delta2 <= 0.0 {
        return Err(SimError::InvalidInput("detunings must be positive".into()));
    }
    Ok(0.5 * params.g1 * params.g2 * (1.0 / params.delta1 + 1.0 / params.delta2))
}

/// One collapse channel of the master equation.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub op: Operator,
    /// Angular rate multiplying the dissipator (1/s).
    pub rate: f64,
    pub label: String,
}

/// The full set of collapse channels on a given space.
#[derive(Debug, Clone, Default)]
pub struct NoiseSet {
    pub channels: Vec<NoiseChannel>,
}

impl NoiseSet {
    pub fn empty() -> NoiseSet {
        NoiseSet::default()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// Builds the collapse channels for every subsystem present in `space`:
/// cavity decay a_l (rate kappa_l), qutrit relaxation |e><f|, |g><f|, |g><e|
/// (rates gamma_ef, gamma_gf, gamma_ge) and pure dephasing with projectors
/// sigma_ff, sigma_ee (rates gamma_fphi, gamma_ephi). Channels with zero
/// rate or absent subsystems are skipped, so reduced test spaces (one qutrit
/// plus one cavity) get exactly their own channels.
pub fn build_noise(params: &DeviceParams, space: &HilbertSpace) -> Result<NoiseSet> {
    let mut channels = Vec::new();
    let cavities = [
        (Label::Cav1, params.kappa[0], "kappa1"),
        (Label::Cav2, params.kappa[1], "kappa2"),
        (Label::Cav3, params.kappa[2], "kappa3"),
        (Label::Cav4, params.kappa[3], "kappa4"),
    ];
    for (label, rate, name) in cavities {
        if rate > 0.0 && space.has(label) {
            channels.push(NoiseChannel {
                op: mode_annihilation(space, label)?,
                rate,
                label: name.into(),
            });
        }
    }
    let qutrits = [
        (Label::QutritL, params.rates_l, "L"),
        (Label::QutritR, params.rates_r, "R"),
    ];
    for (label, rates, side) in qutrits {
        if !space.has(label) {
            continue;
        }
        let relaxations = [
            (rates.gamma_ef, Level::F, Level::E, "gamma_ef"),
            (rates.gamma_gf, Level::F, Level::G, "gamma_gf"),
            (rates.gamma_ge, Level::E, Level::G, "gamma_ge"),
        ];
        for (rate, from, to, name) in relaxations {
            if rate > 0.0 {
                channels.push(NoiseChannel {
                    op: qutrit_transition(space, label, from, to)?,
                    rate,
                    label: format!("{name}_{side}"),
                });
            }
        }
        let dephasings = [
            (rates.gamma_fphi, Level::F, "gamma_fphi"),
            (rates.gamma_ephi, Level::E, "gamma_ephi"),
        ];
        for (rate, level, name) in dephasings {
            if rate > 0.0 {
                channels.push(NoiseChannel {
                    op: qutrit_projector(space, label, level)?,
                    rate,
                    label: format!("{name}_{side}"),
                });
            }
        }
    }
    Ok(NoiseSet { channels })
}

/// Cavity quality factors and entanglement lifetime budget.
#[derive(Debug, Clone, Copy)]
pub struct CavityLifetimes {
    pub q_factors: [f64; 4],
    /// Per-cavity lifetime T^k = (Q_k/omega_k)/nbar_k = 1/(kappa_k nbar_k).
    pub per_cavity: [f64; 4],
    /// Joint lifetime min{T^1..T^4}/4.
    pub joint: f64,
}

/// Computes per-cavity and joint lifetimes for mean photon number `nbar`
/// in each cavity. `omega_c` defaults to the device's derived frequencies.
pub fn cavity_lifetimes(
    params: &DeviceParams,
    nbar: [f64; 4],
    omega_c: Option<[f64; 4]>,
) -> Result<CavityLifetimes> {
    let omega_c = omega_c.unwrap_or_else(|| params.cavity_frequencies());
    if nbar.iter().any(|&n| n <= 0.0) || omega_c.iter().any(|&w| w <= 0.0) {
        return Err(SimError::InvalidInput(
            "nbar and cavity frequencies must be positive".into(),
        ));
    }
    let mut q = [0.0; 4];
    let mut t = [0.0; 4];
    for k in 0..4 {
        q[k] = if params.kappa[k] > 0.0 {
            omega_c[k] / params.kappa[k]
        } else {
            f64::INFINITY
        };
        t[k] = (q[k] / omega_c[k]) / nbar[k];
    }
    let joint = t.iter().cloned().fold(f64::INFINITY, f64::min) / 4.0;
    Ok(CavityLifetimes {
        q_factors: q,
        per_cavity: t,
        joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_space;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lambda_matches_quoted_value() {
        let p = DeviceParams::baseline();
        let lam = lambda_eff(&p).unwrap();
        // g^2/delta with g/2pi = 19 MHz, delta/2pi = 1 GHz is 2pi * 0.361 MHz
        assert_abs_diff_eq!(lam / (TWO_PI * 1e6), 0.361, epsilon = 1e-12);
    }

    #[test]
    fn lambda_symmetric_and_matched_reduction() {
        let p = DeviceParams::baseline();
        let swapped = p
            .with_config_edit(|c| {
                std::mem::swap(&mut c.couplings.g1, &mut c.couplings.g2);
                std::mem::swap(&mut c.frequencies.delta1, &mut c.frequencies.delta2);
            })
            .unwrap();
        assert_abs_diff_eq!(
            lambda_eff(&p).unwrap(),
            lambda_eff(&swapped).unwrap(),
            epsilon = 1e-6
        );
        // matched case equals g^2/delta exactly
        assert_abs_diff_eq!(
            lambda_eff(&p).unwrap(),
            p.g1 * p.g1 / p.delta1,
            epsilon = 1e-6
        );
        let off = p
            .with_config_edit(|c| c.couplings.g1 = 0.0)
            .unwrap();
        assert_eq!(lambda_eff(&off).unwrap(), 0.0);
    }

    #[test]
    fn derived_cavity_frequencies() {
        let p = DeviceParams::baseline();
        let wc = p.cavity_frequencies();
        assert_abs_diff_eq!(wc[0] / (TWO_PI * 1e9), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wc[1] / (TWO_PI * 1e9), 8.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.delta_cavity / (TWO_PI * 1e9), 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(wc[1] - wc[0], p.delta_cavity, epsilon = 1e-3);
        assert_abs_diff_eq!(wc[3] - wc[2], p.delta_cavity, epsilon = 1e-3);
    }

    #[test]
    fn quality_factors_match_quoted_orders() {
        let p = DeviceParams::baseline();
        let lt = cavity_lifetimes(&p, [4.0; 4], None).unwrap();
        // kappa^-1 = 20 us at omega_c1/2pi = 4.0 GHz and omega_c2/2pi = 8.5 GHz
        assert!((lt.q_factors[0] / 5.0e5 - 1.0).abs() < 0.01);
        assert!((lt.q_factors[1] / 1.07e6 - 1.0).abs() < 0.01);
        // per-cavity lifetime = kappa^-1 / nbar = 5 us; joint = min/4
        assert_abs_diff_eq!(lt.per_cavity[0], 5e-6, epsilon = 1e-12);
        assert_abs_diff_eq!(lt.joint, 1.25e-6, epsilon = 1e-12);
    }

    #[test]
    fn equal_lifetimes_joint_quarter() {
        let p = DeviceParams::baseline();
        let lt = cavity_lifetimes(&p, [1.0; 4], None).unwrap();
        let t = lt.per_cavity[0];
        assert!(lt.per_cavity.iter().all(|&x| (x - t).abs() < 1e-18));
        assert_abs_diff_eq!(lt.joint, t / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn noise_channel_census() {
        let p = DeviceParams::baseline();
        let full = build_space(&[
            (Label::QutritL, 3),
            (Label::QutritR, 3),
            (Label::Cav1, 4),
            (Label::Cav2, 4),
            (Label::Cav3, 4),
            (Label::Cav4, 4),
        ])
        .unwrap();
        let ns = build_noise(&p, &full).unwrap();
        assert_eq!(ns.len(), 14); // 4 cavity + 2*(3 relaxation + 2 dephasing)

        let coherent = DeviceParams::baseline_coherent();
        assert!(build_noise(&coherent, &full).unwrap().is_empty());

        // single-kappa isolation
        let only_k1 = coherent
            .with_config_edit(|c| {
                c.noise = Some(NoiseConfig {
                    kappa: [20.0, f64::INFINITY, f64::INFINITY, f64::INFINITY],
                    gamma_ef: f64::INFINITY,
                    gamma_gf: f64::INFINITY,
                    gamma_ge: f64::INFINITY,
                    gamma_fphi: f64::INFINITY,
                    gamma_ephi: f64::INFINITY,
                    left: None,
                    right: None,
                });
            })
            .unwrap();
        let ns = build_noise(&only_k1, &full).unwrap();
        assert_eq!(ns.len(), 1);
        assert_eq!(ns.channels[0].label, "kappa1");

        // reduced space gets only its own channels: 1 qutrit (5) + 1 cavity (1)
        let small = build_space(&[(Label::QutritL, 3), (Label::Cav1, 4)]).unwrap();
        let ns = build_noise(&p, &small).unwrap();
        assert_eq!(ns.len(), 6);
    }

    #[test]
    fn config_round_trip_is_bit_identical() {
        let p = DeviceParams::baseline();
        let text = p.to_toml();
        let back = DeviceParams::from_toml(&text).unwrap();
        assert_eq!(back.config(), p.config());
        assert_eq!(back, p);
    }

    #[test]
    fn config_rejects_bad_values() {
        let p = DeviceParams::baseline();
        assert!(p
            .with_config_edit(|c| c.frequencies.delta1 = -1.0)
            .is_err());
        assert!(p.with_config_edit(|c| c.couplings.g1 = -5.0).is_err());
        assert!(p
            .with_config_edit(|c| {
                if let Some(n) = c.noise.as_mut() {
                    n.kappa[2] = 0.0;
                }
            })
            .is_err());
        assert!(toml::from_str::<DeviceConfig>("nonsense = 1").is_err());
    }

    #[test]
    fn per_qutrit_override() {
        let p = DeviceParams::baseline();
        let tweaked = p
            .with_config_edit(|c| {
                if let Some(n) = c.noise.as_mut() {
                    n.right = Some(QutritNoiseOverride {
                        gamma_ge: Some(2.0),
                        ..Default::default()
                    });
                }
            })
            .unwrap();
        assert_abs_diff_eq!(tweaked.rates_l.gamma_ge, 1.0 / 10e-6, epsilon = 1e-6);
        assert_abs_diff_eq!(tweaked.rates_r.gamma_ge, 1.0 / 2e-6, epsilon = 1e-6);
        assert_abs_diff_eq!(
            tweaked.rates_r.gamma_ef,
            tweaked.rates_l.gamma_ef,
            epsilon = 0.0
        );
    }

    #[test]
    fn large_detuning_flag() {
        let p = DeviceParams::baseline();
        assert!(p.large_detuning(10.0));
        let tight = p
            .with_config_edit(|c| c.couplings.g1 = 200.0)
            .unwrap();
        assert!(!tight.large_detuning(10.0));
    }
}
