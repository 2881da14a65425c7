//! Parameter sweeps over the protocol fidelity, with deterministic CSV and
//! structured-report emission.
//!
//! A sweep fixes the photon number and engine, varies one physical knob
//! across a strictly increasing grid, and runs the full protocol at every
//! point. Grid edits are applied to the raw configuration (MHz / GHz
//! units) and re-validated through the normal parse path, so every row
//! corresponds to a parameter set the schema accepts. Rows are produced in
//! grid order and all stochastic engines derive their streams from the
//! single master seed, which makes the CSV byte-reproducible; wall-clock
//! timings are therefore reported only in the structured report, never in
//! the CSV.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::device::{build_noise, DeviceConfig, DeviceParams, NoiseSet};
use crate::error::{Result, SimError};
use crate::hilbert::{build_space, HilbertSpace, Label};
use crate::schedule::{compile, CompileOptions};
use crate::solver::{bell_plus_vacuum, run_protocol, Engine, PropagatorConfig};

/// Physical knob a sweep varies. Grid values use the configuration units
/// of the knob: MHz for couplings, drives, crosstalk, and the detuning
/// mismatch; a pure number for the coupling ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    /// Both qutrit-cavity couplings together: g1 = g2 = value.
    Coupling,
    /// Both pulse drive amplitudes together: omega_gf = omega_ge = value.
    Drive,
    /// Both same-side cavity hopping strengths: g12 = g34 = value.
    Crosstalk,
    /// Coupling imbalance g1/g2: g1 = value * g2 with g2 fixed.
    CouplingRatio,
    /// Detuning mismatch delta1 - delta2 = value, moving delta2 only.
    Mismatch,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Coupling => "g",
            SweepParameter::Drive => "omega",
            SweepParameter::Crosstalk => "crosstalk",
            SweepParameter::CouplingRatio => "ratio",
            SweepParameter::Mismatch => "mismatch",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepParameter::CouplingRatio => "g1/g2",
            _ => "MHz",
        }
    }

    fn requires_positive(self) -> bool {
        matches!(
            self,
            SweepParameter::Coupling | SweepParameter::Drive | SweepParameter::CouplingRatio
        )
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParameter {
    type Err = SimError;

    fn from_str(s: &str) -> Result<SweepParameter> {
        match s {
            "g" => Ok(SweepParameter::Coupling),
            "omega" => Ok(SweepParameter::Drive),
            "crosstalk" => Ok(SweepParameter::Crosstalk),
            "ratio" => Ok(SweepParameter::CouplingRatio),
            "mismatch" => Ok(SweepParameter::Mismatch),
            other => Err(SimError::InvalidInput(format!(
                "unknown sweep parameter '{other}' (expected g, omega, crosstalk, ratio, or mismatch)"
            ))),
        }
    }
}

/// One sweep: the knob, its grid, and the run configuration.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub n: usize,
    pub engine: Engine,
    pub trajectories: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(SimError::InvalidInput("sweep grid is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidInput(
                "sweep grid contains a non-finite value".into(),
            ));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::InvalidInput(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        if self.parameter.requires_positive() && self.values[0] <= 0.0 {
            return Err(SimError::InvalidInput(format!(
                "sweep parameter '{}' requires positive values",
                self.parameter
            )));
        }
        if self.parameter == SweepParameter::Crosstalk && self.values[0] < 0.0 {
            return Err(SimError::InvalidInput(
                "crosstalk values must be >= 0".into(),
            ));
        }
        if self.n < 1 {
            return Err(SimError::InvalidInput(
                "photon number must be at least 1".into(),
            ));
        }
        if self.engine == Engine::Mcwf && self.trajectories < 1 {
            return Err(SimError::InvalidInput(
                "mcwf sweeps need at least one trajectory".into(),
            ));
        }
        Ok(())
    }
}

/// One grid point's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub fidelity: f64,
    pub std_error: Option<f64>,
    /// Wall-clock seconds; report-only, excluded from the CSV.
    pub wall_seconds: f64,
    pub leak_max: f64,
    pub jumps_total: usize,
    pub trajectory_seeds: Vec<u64>,
}

/// Completed sweep, rows in grid order.
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

/// Applies one grid value to the raw configuration and re-validates it.
pub fn apply_parameter(
    params: &DeviceParams,
    parameter: SweepParameter,
    value: f64,
) -> Result<DeviceParams> {
    params.with_config_edit(|cfg| match parameter {
        SweepParameter::Coupling => {
            cfg.couplings.g1 = value;
            cfg.couplings.g2 = value;
        }
        SweepParameter::Drive => {
            cfg.couplings.omega_gf = value;
            cfg.couplings.omega_ge = value;
        }
        SweepParameter::Crosstalk => {
            cfg.couplings.g12 = value;
            cfg.couplings.g34 = value;
        }
        SweepParameter::CouplingRatio => {
            cfg.couplings.g1 = value * cfg.couplings.g2;
        }
        SweepParameter::Mismatch => {
            // grid value is in MHz, the frequencies section in GHz
            cfg.frequencies.delta2 = cfg.frequencies.delta1 - value * 1e-3;
        }
    })
}

/// The standard simulation space for photon number n: two qutrits plus the
/// four side cavities, each with one guard level above |n+1>.
pub fn protocol_space(n: usize) -> Result<HilbertSpace> {
    let cavity_dim = n + 2;
    build_space(&[
        (Label::QutritL, 3),
        (Label::QutritR, 3),
        (Label::Cav1, cavity_dim),
        (Label::Cav2, cavity_dim),
        (Label::Cav3, cavity_dim),
        (Label::Cav4, cavity_dim),
    ])
}

fn at_point<T>(result: Result<T>, index: usize, spec: &SweepSpec) -> Result<T> {
    result.map_err(|err| {
        let value = spec.values[index];
        let parameter = spec.parameter;
        let rewrap = |msg: String| format!("sweep point {index} ({parameter} = {value}): {msg}");
        match err {
            SimError::Config(m) => SimError::Config(rewrap(m)),
            SimError::InvalidInput(m) => SimError::InvalidInput(rewrap(m)),
            SimError::Space(m) => SimError::Space(rewrap(m)),
            SimError::DimensionCap(m) => SimError::DimensionCap(rewrap(m)),
            SimError::Tolerance(m) => SimError::Tolerance(rewrap(m)),
            SimError::Leak(m) => SimError::Leak(rewrap(m)),
            SimError::Numerics(m) => SimError::Numerics(rewrap(m)),
            SimError::Io(e) => {
                SimError::Io(std::io::Error::new(e.kind(), rewrap(e.to_string())))
            }
        }
    })
}

/// Runs the protocol at every grid point, in grid order. The same master
/// seed is used at each point; trajectory streams inside a point are split
/// from it, so the whole table is a pure function of spec and parameters.
pub fn run_sweep(spec: &SweepSpec, params: &DeviceParams) -> Result<SweepTable> {
    spec.validate()?;
    let options = CompileOptions {
        include_bell: false,
        include_gaps: true,
        ideal_pulses: spec.engine == Engine::Effective,
    };
    let cfg = PropagatorConfig {
        trajectories: spec.trajectories.max(1),
        seed: spec.seed,
        ..PropagatorConfig::default()
    };
    let space = protocol_space(spec.n)?;
    let initial = bell_plus_vacuum(&space)?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for (index, &value) in spec.values.iter().enumerate() {
        let point = at_point(apply_parameter(params, spec.parameter, value), index, spec)?;
        let schedule = at_point(compile(spec.n, &point, options), index, spec)?;
        let noise = match spec.engine {
            Engine::Unitary | Engine::Effective => NoiseSet::empty(),
            Engine::Lindblad | Engine::Mcwf => {
                at_point(build_noise(&point, &space), index, spec)?
            }
        };
        let result = at_point(
            run_protocol(&schedule, &initial, &noise, &cfg, spec.engine),
            index,
            spec,
        )?;
        rows.push(SweepRow {
            value,
            fidelity: result.fidelity,
            std_error: result.std_error,
            wall_seconds: result.wall_seconds,
            leak_max: result.leak_max,
            jumps_total: result.jump_counts.iter().sum(),
            trajectory_seeds: result.trajectory_seeds,
        });
    }
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
    })
}

pub const CSV_HEADER: &str =
    "parameter,value,n,engine,trajectories,seed,fidelity,std_error,leak_max";

/// Renders the table as CSV. Columns are fixed; floats use the shortest
/// round-trip form, so equal tables give byte-equal output.
pub fn csv_string(table: &SweepTable) -> String {
    let spec = &table.spec;
    let mut out = String::with_capacity(64 * (table.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        let std_error = row
            .std_error
            .map(|s| s.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            spec.parameter,
            row.value,
            spec.n,
            spec.engine,
            spec.trajectories,
            spec.seed,
            row.fidelity,
            std_error,
            row.leak_max,
        ));
    }
    out
}

#[derive(Serialize)]
struct Report<'a> {
    parameter: &'a str,
    unit: &'a str,
    n: usize,
    engine: &'a str,
    trajectories: usize,
    seed: u64,
    grid: &'a [f64],
    base_config: &'a DeviceConfig,
    rows: &'a [SweepRow],
}

/// Structured JSON report: the full base configuration, the grid, the
/// master seed, and every row including per-trajectory seeds and timings.
pub fn report_json(table: &SweepTable, params: &DeviceParams) -> Result<String> {
    let spec = &table.spec;
    let report = Report {
        parameter: spec.parameter.as_str(),
        unit: spec.parameter.unit(),
        n: spec.n,
        engine: spec.engine.as_str(),
        trajectories: spec.trajectories,
        seed: spec.seed,
        grid: &spec.values,
        base_config: params.config(),
        rows: &table.rows,
    };
    serde_json::to_string_pretty(&report)
        .map_err(|e| SimError::Config(format!("report serialization failed: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Report,
}

/// Writes the table to `path` in the chosen format.
pub fn emit(
    table: &SweepTable,
    params: &DeviceParams,
    format: EmitFormat,
    path: &Path,
) -> Result<()> {
    if table.rows.is_empty() {
        return Err(SimError::InvalidInput(
            "refusing to emit an empty sweep table".into(),
        ));
    }
    let content = match format {
        EmitFormat::Csv => csv_string(table),
        EmitFormat::Report => report_json(table, params)?,
    };
    std::fs::write(path, content).map_err(|e| {
        SimError::Io(std::io::Error::new(
            e.kind(),
            format!("cannot write {}: {e}", path.display()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            parameter: SweepParameter::CouplingRatio,
            values: vec![1.0],
            n: 1,
            engine: Engine::Effective,
            trajectories: 1,
            seed: 5,
        }
    }

    #[test]
    fn grid_validation_rejects_bad_shapes() {
        let mut spec = tiny_spec();
        spec.values = vec![];
        assert!(spec.validate().is_err());
        spec.values = vec![1.0, 1.0];
        assert!(spec.validate().is_err());
        spec.values = vec![2.0, 1.0];
        assert!(spec.validate().is_err());
        spec.values = vec![f64::NAN];
        assert!(spec.validate().is_err());
        spec.values = vec![-1.0, 1.0];
        assert!(spec.validate().is_err(), "ratio must be positive");
        spec.values = vec![0.5, 1.0];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn parameter_edits_land_on_the_right_fields() {
        let base = DeviceParams::baseline_coherent();
        let g = apply_parameter(&base, SweepParameter::Coupling, 21.0).unwrap();
        assert_eq!(g.config().couplings.g1, 21.0);
        assert_eq!(g.config().couplings.g2, 21.0);
        let omega = apply_parameter(&base, SweepParameter::Drive, 120.0).unwrap();
        assert_eq!(omega.config().couplings.omega_gf, 120.0);
        assert_eq!(omega.config().couplings.omega_ge, 120.0);
        let xt = apply_parameter(&base, SweepParameter::Crosstalk, 1.9).unwrap();
        assert_eq!(xt.config().couplings.g12, 1.9);
        assert_eq!(xt.config().couplings.g34, 1.9);
        let ratio = apply_parameter(&base, SweepParameter::CouplingRatio, 1.1).unwrap();
        assert!((ratio.config().couplings.g1 - 1.1 * 19.0).abs() < 1e-12);
        assert_eq!(ratio.config().couplings.g2, 19.0);
        let mm = apply_parameter(&base, SweepParameter::Mismatch, 2.0).unwrap();
        assert!((mm.delta1 - mm.delta2 - crate::device::mhz(2.0)).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_point_is_identified() {
        let base = DeviceParams::baseline_coherent();
        let mut spec = tiny_spec();
        spec.parameter = SweepParameter::Mismatch;
        // 2000 MHz pushes delta2 negative, which the config rejects
        spec.values = vec![0.0, 2000.0];
        let err = run_sweep(&spec, &base).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sweep point 1"), "got: {msg}");
        assert!(msg.contains("2000"), "got: {msg}");
    }

    #[test]
    fn single_point_table_and_byte_identical_csv() {
        let base = DeviceParams::baseline_coherent();
        let spec = tiny_spec();
        let table = run_sweep(&spec, &base).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].fidelity > 1.0 - 1e-10);
        let a = csv_string(&table);
        let b = csv_string(&run_sweep(&spec, &base).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 2);
        assert!(a.starts_with(CSV_HEADER));
    }

    #[test]
    fn report_config_reparses_to_identical_params() {
        let base = DeviceParams::baseline_coherent();
        let table = run_sweep(&tiny_spec(), &base).unwrap();
        let report = report_json(&table, &base).unwrap();
        let value: serde_json::Value = serde_json::from_str(&report).unwrap();
        let cfg: DeviceConfig = serde_json::from_value(value["base_config"].clone()).unwrap();
        let back = DeviceParams::from_config(cfg).unwrap();
        assert_eq!(&back, &base);
        assert_eq!(value["seed"], 5);
        // Deterministic engines carry no per-trajectory seeds; the field
        // must still be present so the report schema is stable.
        assert!(value["rows"][0]["trajectory_seeds"].is_array());
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in [
            SweepParameter::Coupling,
            SweepParameter::Drive,
            SweepParameter::Crosstalk,
            SweepParameter::CouplingRatio,
            SweepParameter::Mismatch,
        ] {
            assert_eq!(p.as_str().parse::<SweepParameter>().unwrap(), p);
        }
        assert!("bogus".parse::<SweepParameter>().is_err());
    }

    #[test]
    fn emit_writes_both_formats() {
        let base = DeviceParams::baseline_coherent();
        let table = run_sweep(&tiny_spec(), &base).unwrap();
        let dir = std::env::temp_dir().join(format!("sweep-emit-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("out.csv");
        let json = dir.join("out.json");
        emit(&table, &base, EmitFormat::Csv, &csv).unwrap();
        emit(&table, &base, EmitFormat::Report, &json).unwrap();
        assert_eq!(std::fs::read_to_string(&csv).unwrap(), csv_string(&table));
        assert!(std::fs::read_to_string(&json).unwrap().contains("base_config"));
        std::fs::remove_dir_all(&dir).ok();
        let empty = SweepTable {
            spec: tiny_spec(),
            rows: vec![],
        };
        assert!(matches!(
            emit(&empty, &base, EmitFormat::Csv, &csv),
            Err(SimError::InvalidInput(_))
        ));
    }
}
