//! Run configuration: JSON in device units (GHz, MHz, mW, dB), checked against
//! the bundled schema before it is deserialized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use crate::calibration::HashMapOptions;
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::{DissipationModel, FieldState, PhysicalParams};
use crate::units;

/// The JSON schema every config is checked against.
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissipation {
    DeltaGDependent,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalBlock {
    /// ω_c/2π, GHz.
    pub omega_c_ghz: f64,
    pub kappa_int_mhz: [f64; 2],
    pub kappa_in_mhz: f64,
    pub kappa_out_mhz: f64,
    pub kappa_c_mhz: f64,
    pub j_c_mhz: f64,
    pub g0_db: f64,
    pub b_g_mw: f64,
    pub p_sat_mw: f64,
    pub dissipation: Dissipation,
}

impl Default for PhysicalBlock {
    fn default() -> Self {
        PhysicalBlock {
            omega_c_ghz: 6.027,
            kappa_int_mhz: [4.1, 4.0],
            kappa_in_mhz: 2.5,
            kappa_out_mhz: 2.3,
            kappa_c_mhz: 8.7,
            j_c_mhz: 11.5,
            g0_db: 20.3,
            b_g_mw: 8.6,
            p_sat_mw: 0.9981,
            dissipation: Dissipation::DeltaGDependent,
        }
    }
}

impl PhysicalBlock {
    pub fn to_params(&self) -> PhysicalParams {
        PhysicalParams {
            omega_c: units::ghz(self.omega_c_ghz),
            kappa_int: self.kappa_int_mhz.map(units::mhz),
            kappa_in: units::mhz(self.kappa_in_mhz),
            kappa_out: units::mhz(self.kappa_out_mhz),
            kappa_c: units::mhz(self.kappa_c_mhz),
            j_c: units::mhz(self.j_c_mhz),
            g0_db: self.g0_db,
            b_g: self.b_g_mw / 1e3,
            p_sat: self.p_sat_mw / 1e3,
            dissipation: match self.dissipation {
                Dissipation::DeltaGDependent => DissipationModel::DeltaGDependent,
                Dissipation::Constant => DissipationModel::Constant,
            },
            ..PhysicalParams::default()
        }
    }

    pub fn from_params(p: &PhysicalParams) -> Self {
        PhysicalBlock {
            omega_c_ghz: units::to_ghz(p.omega_c),
            kappa_int_mhz: p.kappa_int.map(units::to_mhz),
            kappa_in_mhz: units::to_mhz(p.kappa_in),
            kappa_out_mhz: units::to_mhz(p.kappa_out),
            kappa_c_mhz: units::to_mhz(p.kappa_c),
            j_c_mhz: units::to_mhz(p.j_c),
            g0_db: p.g0_db,
            b_g_mw: p.b_g * 1e3,
            p_sat_mw: p.p_sat * 1e3,
            dissipation: match p.dissipation {
                DissipationModel::DeltaGDependent => Dissipation::DeltaGDependent,
                DissipationModel::Constant => Dissipation::Constant,
            },
        }
    }
}

/// Evenly spaced values on [start, stop], or [start, stop) without the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "yes")]
    pub endpoint: bool,
}

fn yes() -> bool {
    true
}

impl LinearGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.endpoint || self.points == 0 {
            crate::experiments::linspace(self.start, self.stop, self.points)
        } else {
            let span = self.stop - self.start;
            (0..self.points)
                .map(|i| self.start + span * i as f64 / self.points as f64)
                .collect()
        }
    }
}

/// Single operating point used by `simulate`, `analytics` and `sync`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointBlock {
    pub phi_rad: f64,
    pub delta_g_db: f64,
    /// Drive power, dBm; `null` for the undriven system.
    pub p_d_dbm: Option<f64>,
    /// Drive frequency ω_d/2π, GHz; `null` means ω_c.
    pub drive_freq_ghz: Option<f64>,
}

impl Default for PointBlock {
    fn default() -> Self {
        PointBlock {
            phi_rad: PI,
            delta_g_db: 8.4,
            p_d_dbm: None,
            drive_freq_ghz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub point: PointBlock,
    pub phi_rad: LinearGrid,
    pub delta_g_db: LinearGrid,
    pub drive_freq_ghz: LinearGrid,
    /// Gains of the individual transmission traces.
    pub transmission_delta_g_db: Vec<f64>,
    /// Probe power of transmission sweeps.
    pub transmission_p_d_dbm: f64,
    /// Drive powers of the synchronization runs.
    pub sync_p_d_dbm: Vec<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            point: PointBlock::default(),
            phi_rad: LinearGrid {
                start: 0.0,
                stop: TAU,
                points: 60,
                endpoint: false,
            },
            delta_g_db: LinearGrid {
                start: 4.0,
                stop: 8.4,
                points: 23,
                endpoint: true,
            },
            drive_freq_ghz: LinearGrid {
                start: 5.98,
                stop: 6.09,
                points: 56,
                endpoint: true,
            },
            transmission_delta_g_db: vec![0.0, 2.0, 4.0, 6.0, 8.4],
            transmission_p_d_dbm: -30.0,
            sync_p_d_dbm: vec![0.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step-size cap, s; `null` means span / 1000.
    pub max_step_s: Option<f64>,
    /// Initial (re, im) of α₁ and α₂, √photons.
    pub initial_a1: [f64; 2],
    pub initial_a2: [f64; 2],
    pub n_samples: usize,
    /// Span in units of 1/κ_c.
    pub span_kappa_c: f64,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        IntegratorBlock::from_config(&IntegratorConfig::default())
    }
}

impl IntegratorBlock {
    pub fn to_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step_s,
            initial_state: FieldState::new(
                Complex64::new(self.initial_a1[0], self.initial_a1[1]),
                Complex64::new(self.initial_a2[0], self.initial_a2[1]),
            ),
            n_samples: self.n_samples,
            span_kappa_c: self.span_kappa_c,
        }
    }

    pub fn from_config(c: &IntegratorConfig) -> Self {
        let [a1, a2] = c.initial_state.as_array();
        IntegratorBlock {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            max_step_s: c.max_step,
            initial_a1: [a1.re, a1.im],
            initial_a2: [a2.re, a2.im],
            n_samples: c.n_samples,
            span_kappa_c: c.span_kappa_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: "out".into(),
            formats: vec![OutputFormat::Csv, OutputFormat::Svg],
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationBlock {
    pub l_fwd_db: f64,
    pub phase_offset_rad: f64,
    pub outlier_threshold_db: f64,
    pub delta_g_targets_db: Vec<f64>,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        let o = HashMapOptions::default();
        CalibrationBlock {
            l_fwd_db: o.l_fwd_db,
            phase_offset_rad: o.phase_offset_rad,
            outlier_threshold_db: o.outlier_threshold_db,
            delta_g_targets_db: crate::experiments::linspace(4.0, 8.4, 23),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Transmission,
    PhaseDiagram,
    Sync,
    Analytics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub physical: PhysicalBlock,
    pub grid: GridBlock,
    pub integrator: IntegratorBlock,
    pub output: OutputBlock,
    pub calibration: CalibrationBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::PhaseDiagram,
            workers: 0,
            physical: PhysicalBlock::default(),
            grid: GridBlock::default(),
            integrator: IntegratorBlock::default(),
            output: OutputBlock::default(),
            calibration: CalibrationBlock::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        check_schema(&value)?;
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config") + "\n"
    }

    pub fn params(&self) -> PhysicalParams {
        self.physical.to_params()
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        self.integrator.to_config()
    }

    pub fn hashmap_options(&self) -> HashMapOptions {
        HashMapOptions {
            g0_db: self.physical.g0_db,
            l_fwd_db: self.calibration.l_fwd_db,
            phase_offset_rad: self.calibration.phase_offset_rad,
            outlier_threshold_db: self.calibration.outlier_threshold_db,
        }
    }

    /// Checks that go beyond the schema: physical consistency and grid sizes.
    pub fn validate(&self) -> Result<()> {
        self.params()
            .validate()
            .map_err(|e| Error::Config(format!("physical: {e}")))?;
        self.integrator_config()
            .validate()
            .map_err(|e| Error::Config(format!("integrator: {e}")))?;
        for (name, g) in [
            ("grid.phi_rad", &self.grid.phi_rad),
            ("grid.delta_g_db", &self.grid.delta_g_db),
            ("grid.drive_freq_ghz", &self.grid.drive_freq_ghz),
        ] {
            if g.points == 0 || !(g.start.is_finite() && g.stop.is_finite()) {
                return Err(Error::Config(format!("{name}: need finite bounds and at least one point")));
            }
        }
        if self.output.directory.is_empty() {
            return Err(Error::Config("output.directory: must not be empty".into()));
        }
        Ok(())
    }
}

// A JSON-schema checker covering the keywords the bundled schema uses:
// type, properties, required, additionalProperties (false), items, minItems,
// maxItems, enum, minimum, exclusiveMinimum, maximum, and local $ref.

fn check_schema(value: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(SCHEMA).expect("bundled schema is valid JSON");
    check_node(value, &schema, &schema, "$")
}

fn type_matches(v: &Value, ty: &str) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        _ => false,
    }
}

fn check_node(v: &Value, schema: &Value, root: &Value, path: &str) -> Result<()> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let target = r
            .strip_prefix('#')
            .and_then(|ptr| root.pointer(ptr))
            .unwrap_or_else(|| panic!("unresolvable schema reference {r}"));
        return check_node(v, target, root, path);
    }
    let fail = |msg: String| Err(Error::Config(format!("{path}: {msg}")));
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(v, t),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(v, t)),
            _ => true,
        };
        if !ok {
            return fail(format!("expected {ty}, found {v}"));
        }
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        if !allowed.contains(v) {
            return fail(format!("{v} is not one of {}", Value::Array(allowed.clone())));
        }
    }
    if let Some(x) = v.as_f64() {
        if let Some(m) = schema.get("minimum").and_then(Value::as_f64) {
            if x < m {
                return fail(format!("{x} is below the minimum {m}"));
            }
        }
        if let Some(m) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= m {
                return fail(format!("{x} must exceed {m}"));
            }
        }
        if let Some(m) = schema.get("maximum").and_then(Value::as_f64) {
            if x > m {
                return fail(format!("{x} is above the maximum {m}"));
            }
        }
    }
    if let Value::Array(items) = v {
        if let Some(n) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < n {
                return fail(format!("needs at least {n} items"));
            }
        }
        if let Some(n) = schema.get("maxItems").and_then(Value::as_u64) {
            if items.len() as u64 > n {
                return fail(format!("allows at most {n} items"));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check_node(item, item_schema, root, &format!("{path}[{i}]"))?;
            }
        }
    }
    if let Value::Object(map) = v {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(Value::Array(req)) = schema.get("required") {
            for r in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(r) {
                    return fail(format!("missing required key {r:?}"));
                }
            }
        }
        for (k, child) in map {
            match props.and_then(|p| p.get(k)) {
                Some(s) => check_node(child, s, root, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return fail(format!("unknown key {k:?}"));
                }
                None => {}
            }
        }
    }
    Ok(())
}
