//! Loading, validation and serialization of simulation parameters, gains and
//! scenario definitions.
//!
//! The on-disk format is a single JSON document with top-level objects
//! `motor`, `gains`, `timing` and `scenario`; every number is SI (H not mH,
//! rad/s not rpm). Datasheets frequently quote inductance in mH and speeds
//! in rpm — convert before writing a config (0.275 mH → 2.75e-4 H,
//! 500 rpm → 52.36 rad/s).

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::plant::MotorState;
use crate::signals::{InverterErrorModel, LoadProfile, ReferenceProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("unsupported unit system `{0}`; all config values are SI")]
    UnitError(String),
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Self::InvalidValue { field: field.into(), reason: reason.into() }
    }
}

/// Physical constants of the SPMSM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotorParams {
    /// Phase winding resistance (Ω).
    #[serde(rename = "R")]
    pub r: f64,
    /// Phase winding inductance (H).
    #[serde(rename = "L")]
    pub l: f64,
    /// Rotor magnetic flux (Wb).
    #[serde(rename = "Phi")]
    pub phi: f64,
    /// Number of pole pairs.
    #[serde(rename = "P")]
    pub pole_pairs: u32,
    /// Rotor inertia (kg·m²).
    #[serde(rename = "J")]
    pub j: f64,
    /// Viscous friction coefficient (N·m·s/rad).
    #[serde(rename = "B")]
    pub b: f64,
}

impl MotorParams {
    /// Torque constant k_m = (3/2)·P·Φ (N·m/A).
    pub fn torque_constant(&self) -> f64 {
        1.5 * f64::from(self.pole_pairs) * self.phi
    }

    /// Constants of the 100 W bench motor (LS Mecapion APM-SB03ADK-9).
    pub fn apm_sb03adk9() -> Self {
        Self { r: 0.875, l: 2.75e-4, phi: 1.58e-2, pole_pairs: 4, j: 4.46e-4, b: 7e-4 }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("R", self.r), ("L", self.l), ("Phi", self.phi), ("J", self.j), ("B", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        if self.pole_pairs == 0 {
            return Err(ConfigError::invalid("P", "must be a positive integer"));
        }
        Ok(())
    }
}

/// Controller and observer gains plus μ saturation widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainSet {
    /// Position gain of the torque modulation (N·m/rad).
    pub k_theta: f64,
    /// Velocity gain of the torque modulation (N·m·s/rad).
    pub k_omega: f64,
    /// Outer DOB nonlinear proportional gain.
    pub l_p_tau: f64,
    /// Outer DOB integral gain.
    pub l_i_tau: f64,
    /// Saturation width of the outer μ (rad/s).
    pub omega_tilde_max: f64,
    /// Inner DOB nonlinear proportional gain.
    pub l_p_e: f64,
    /// Inner DOB integral gain.
    pub l_i_e: f64,
    /// Saturation width of the inner μ (A).
    pub e_tilde_max: f64,
    /// Current controller numerator gain.
    pub eta1: f64,
    /// Current controller denominator offset.
    pub eta2: f64,
}

impl GainSet {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("k_theta", self.k_theta),
            ("k_omega", self.k_omega),
            ("l_i_tau", self.l_i_tau),
            ("l_i_e", self.l_i_e),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("omega_tilde_max", self.omega_tilde_max),
            ("e_tilde_max", self.e_tilde_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        for (name, v) in [("l_p_tau", self.l_p_tau), ("l_p_e", self.l_p_e)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(name, "must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Control and integration timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingConfig {
    /// Controller sample period (s).
    pub dt_ctrl: f64,
    /// Plant integration sub-step (s); must divide `dt_ctrl` exactly.
    pub dt_plant: f64,
    /// Total simulated time (s).
    pub duration: f64,
}

impl TimingConfig {
    /// Plant sub-steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_plant).round() as usize
    }

    /// Number of control ticks covering `[0, duration)`.
    pub fn ticks(&self) -> usize {
        (self.duration / self.dt_ctrl).round().max(0.0) as usize
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt_ctrl.is_finite() && self.dt_ctrl > 0.0) {
            return Err(ConfigError::invalid("dt_ctrl", "must be positive"));
        }
        if !(self.dt_plant.is_finite() && self.dt_plant > 0.0) {
            return Err(ConfigError::invalid("dt_plant", "must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ConfigError::invalid("duration", "must be positive"));
        }
        let ratio = self.dt_ctrl / self.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio < 1.0 - 1e-12 {
            return Err(ConfigError::invalid(
                "dt_plant",
                format!("must divide dt_ctrl exactly (ratio {ratio})"),
            ));
        }
        Ok(())
    }
}

/// Which parts of the cascade are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerVariant {
    /// Outer and inner disturbance observers both active.
    Full,
    /// Outer DOB active, inner disturbance estimates forced to zero.
    OuterOnly,
    /// Both disturbance estimates forced to zero.
    NoDob,
}

impl ControllerVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::OuterOnly => "outer-only",
            Self::NoDob => "no-dob",
        }
    }
}

impl std::str::FromStr for ControllerVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "outer-only" => Ok(Self::OuterOnly),
            "no-dob" => Ok(Self::NoDob),
            other => Err(format!("unknown variant `{other}` (full | outer-only | no-dob)")),
        }
    }
}

impl std::fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A complete simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub reference: ReferenceProfile,
    pub load: LoadProfile,
    pub inverter_error: InverterErrorModel,
    pub variant: ControllerVariant,
    pub timing: TimingConfig,
    pub initial_state: MotorState,
}

const DEFAULT_DT_CTRL: f64 = 1e-4;
const DEFAULT_DT_PLANT: f64 = 1e-5;

/// Parse and validate a config document.
pub fn load_config(document: &str) -> Result<(MotorParams, GainSet, Scenario), ConfigError> {
    let root: Value = serde_json::from_str(document)?;
    let root = root
        .as_object()
        .ok_or_else(|| ConfigError::invalid("<root>", "must be a JSON object"))?;

    if let Some(units) = root.get("units") {
        let u = units.as_str().unwrap_or("<non-string>");
        if u != "si" {
            return Err(ConfigError::UnitError(u.to_string()));
        }
    }

    let motor = req_obj(root, "motor")?;
    let p_raw = req_f64(motor, "P")?;
    if !(p_raw.is_finite() && p_raw > 0.0 && p_raw.fract() == 0.0) {
        return Err(ConfigError::invalid("P", "must be a positive integer"));
    }
    let params = MotorParams {
        r: req_f64(motor, "R")?,
        l: req_f64(motor, "L")?,
        phi: req_f64(motor, "Phi")?,
        pole_pairs: p_raw as u32,
        j: req_f64(motor, "J")?,
        b: req_f64(motor, "B")?,
    };
    params.validate()?;

    let gm = req_obj(root, "gains")?;
    let gains = GainSet {
        k_theta: req_f64(gm, "k_theta")?,
        k_omega: req_f64(gm, "k_omega")?,
        l_p_tau: req_f64(gm, "l_p_tau")?,
        l_i_tau: req_f64(gm, "l_i_tau")?,
        omega_tilde_max: req_f64(gm, "omega_tilde_max")?,
        l_p_e: req_f64(gm, "l_p_e")?,
        l_i_e: req_f64(gm, "l_i_e")?,
        e_tilde_max: req_f64(gm, "e_tilde_max")?,
        eta1: req_f64(gm, "eta1")?,
        eta2: req_f64(gm, "eta2")?,
    };
    gains.validate()?;

    let tm = req_obj(root, "timing")?;
    let timing = TimingConfig {
        dt_ctrl: opt_f64(tm, "dt_ctrl")?.unwrap_or(DEFAULT_DT_CTRL),
        dt_plant: opt_f64(tm, "dt_plant")?.unwrap_or(DEFAULT_DT_PLANT),
        duration: req_f64(tm, "duration")?,
    };
    timing.validate()?;

    let sc = req_obj(root, "scenario")?;
    let reference = parse_reference(req_obj(sc, "reference")?, timing.duration)?;
    let load = parse_load(req_obj(sc, "load")?, timing.duration)?;
    let inverter_error = match sc.get("inverter_error") {
        None | Some(Value::Null) => InverterErrorModel::None,
        Some(v) => parse_inverter(v)?,
    };
    let variant = match sc.get("variant") {
        None | Some(Value::Null) => ControllerVariant::Full,
        Some(v) => v
            .as_str()
            .ok_or_else(|| ConfigError::invalid("variant", "must be a string"))?
            .parse()
            .map_err(|e: String| ConfigError::invalid("variant", e))?,
    };
    let ism = req_obj(sc, "initial_state")?;
    let initial_state = MotorState {
        theta: req_f64(ism, "theta")?,
        omega: req_f64(ism, "omega")?,
        i_alpha: req_f64(ism, "i_alpha")?,
        i_beta: req_f64(ism, "i_beta")?,
    };
    if !initial_state.is_finite() {
        return Err(ConfigError::invalid("initial_state", "must be finite"));
    }

    let scenario = Scenario { reference, load, inverter_error, variant, timing, initial_state };
    Ok((params, gains, scenario))
}

/// Serialize a validated triple back into the config document format.
pub fn to_document(params: &MotorParams, gains: &GainSet, scenario: &Scenario) -> Value {
    json!({
        "units": "si",
        "motor": params,
        "gains": gains,
        "timing": scenario.timing,
        "scenario": {
            "reference": scenario.reference,
            "load": scenario.load,
            "inverter_error": scenario.inverter_error,
            "variant": scenario.variant,
            "initial_state": scenario.initial_state,
        },
    })
}

fn parse_reference(m: &Map<String, Value>, duration: f64) -> Result<ReferenceProfile, ConfigError> {
    let segs = m
        .get("segments")
        .ok_or_else(|| ConfigError::MissingField("segments".into()))?
        .as_array()
        .ok_or_else(|| ConfigError::invalid("segments", "must be an array of [t, omega] pairs"))?;
    if segs.is_empty() {
        return Err(ConfigError::invalid("segments", "must not be empty"));
    }
    let mut segments = Vec::with_capacity(segs.len());
    for s in segs {
        let pair = s
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| ConfigError::invalid("segments", "each entry must be [t, omega]"))?;
        let t = pair[0].as_f64().ok_or_else(|| ConfigError::invalid("segments", "t must be a number"))?;
        let w = pair[1].as_f64().ok_or_else(|| ConfigError::invalid("segments", "omega must be a number"))?;
        segments.push((t, w));
    }
    for w in segments.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(ConfigError::invalid("segments", "times must be strictly increasing"));
        }
    }
    if segments[0].0 < 0.0 || segments.last().unwrap().0 > duration {
        return Err(ConfigError::invalid("segments", "times must lie within [0, duration]"));
    }
    let slew = req_f64(m, "slew")?;
    if !(slew.is_finite() && slew > 0.0) {
        return Err(ConfigError::invalid("slew", "must be positive"));
    }
    Ok(ReferenceProfile { segments, slew })
}

fn parse_load(m: &Map<String, Value>, duration: f64) -> Result<LoadProfile, ConfigError> {
    let raw = m
        .get("steps")
        .ok_or_else(|| ConfigError::MissingField("steps".into()))?
        .as_array()
        .ok_or_else(|| ConfigError::invalid("steps", "must be an array of [t, torque] pairs"))?;
    let mut steps = Vec::with_capacity(raw.len());
    for s in raw {
        let pair = s
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| ConfigError::invalid("steps", "each entry must be [t, torque]"))?;
        let t = pair[0].as_f64().ok_or_else(|| ConfigError::invalid("steps", "t must be a number"))?;
        let v = pair[1].as_f64().ok_or_else(|| ConfigError::invalid("steps", "torque must be a number"))?;
        steps.push((t, v));
    }
    for w in steps.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(ConfigError::invalid("steps", "times must be strictly increasing"));
        }
    }
    if let (Some(first), Some(last)) = (steps.first(), steps.last()) {
        if first.0 < 0.0 || last.0 > duration {
            return Err(ConfigError::invalid("steps", "times must lie within [0, duration]"));
        }
    }
    let smoothing_tau = opt_f64(m, "smoothing_tau")?.unwrap_or(0.0);
    if !(smoothing_tau.is_finite() && smoothing_tau >= 0.0) {
        return Err(ConfigError::invalid("smoothing_tau", "must be nonnegative"));
    }
    Ok(LoadProfile { steps, smoothing_tau })
}

fn parse_inverter(v: &Value) -> Result<InverterErrorModel, ConfigError> {
    let m = v
        .as_object()
        .ok_or_else(|| ConfigError::invalid("inverter_error", "must be an object"))?;
    let kind = m
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| ConfigError::MissingField("kind".into()))?;
    match kind {
        "none" => Ok(InverterErrorModel::None),
        "harmonic" => {
            let model = InverterErrorModel::Harmonic {
                amplitude_1: req_f64(m, "amplitude_1")?,
                amplitude_2: req_f64(m, "amplitude_2")?,
                phase_1: opt_f64(m, "phase_1")?.unwrap_or(0.0),
                phase_2: opt_f64(m, "phase_2")?.unwrap_or(0.0),
            };
            if let InverterErrorModel::Harmonic { amplitude_1, amplitude_2, .. } = model {
                if amplitude_1 < 0.0 {
                    return Err(ConfigError::invalid("amplitude_1", "must be nonnegative"));
                }
                if amplitude_2 < 0.0 {
                    return Err(ConfigError::invalid("amplitude_2", "must be nonnegative"));
                }
            }
            Ok(model)
        }
        "dead-time-sign" => {
            let v_dead = req_f64(m, "v_dead")?;
            if v_dead < 0.0 {
                return Err(ConfigError::invalid("v_dead", "must be nonnegative"));
            }
            Ok(InverterErrorModel::DeadTimeSign { v_dead })
        }
        other => Err(ConfigError::invalid(
            "kind",
            format!("unknown inverter error kind `{other}` (none | harmonic | dead-time-sign)"),
        )),
    }
}

fn req_obj<'a>(m: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    m.get(key)
        .ok_or_else(|| ConfigError::MissingField(key.into()))?
        .as_object()
        .ok_or_else(|| ConfigError::invalid(key, "must be an object"))
}

fn req_f64(m: &Map<String, Value>, key: &str) -> Result<f64, ConfigError> {
    m.get(key)
        .ok_or_else(|| ConfigError::MissingField(key.into()))?
        .as_f64()
        .ok_or_else(|| ConfigError::invalid(key, "must be a number"))
}

fn opt_f64(m: &Map<String, Value>, key: &str) -> Result<Option<f64>, ConfigError> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| ConfigError::invalid(key, "must be a number")),
    }
}
