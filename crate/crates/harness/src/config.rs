//! Scenario files: one TOML document per experiment.

use std::fmt;
use std::path::Path;

use flexbeam::modal::{BeamProperties, DEFAULT_DAMPING_RATIO, DEFAULT_MODE_COUNT};
use flexbeam::narx::{DEFAULT_HIDDEN_WIDTH, DEFAULT_TAPS};
use flexbeam::nmpc::{
    DEFAULT_CONTROL_HORIZON, DEFAULT_CONTROL_WEIGHT, DEFAULT_PREDICTION_HORIZON,
    DEFAULT_STATE_WEIGHT_DISPLACEMENT, DEFAULT_STATE_WEIGHT_VELOCITY,
};
use flexbeam::pd::{DEFAULT_DERIVATIVE_CUTOFF, REFERENCE_KD, REFERENCE_KP};
use flexbeam::plant::{DisturbanceKind, DisturbanceScenario, EpisodeSpec, MassChange};
use flexbeam::pzt::{PztPatch, DEFAULT_VOLTAGE_LIMIT};
use serde::{Deserialize, Serialize};

/// Satellite hub inertia (kg·m²). Carried for completeness; the dynamics
/// treat the appendage as clamped to a fixed root.
pub const REFERENCE_INERTIA: [[f64; 3]; 3] = [
    [1.2, -0.05, -0.03],
    [-0.05, 3.02, -0.02],
    [-0.03, -0.02, 8.02],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub beam: BeamSection,
    #[serde(default = "default_patches")]
    pub patches: Vec<PatchSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_change: Option<MassChangeSection>,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSection>,
    #[serde(default)]
    pub satellite: SatelliteSection,
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_patches() -> Vec<PatchSection> {
    [0.1, 0.5, 0.9].into_iter().map(PatchSection::at).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub width: f64,
    pub length: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    pub mode_count: usize,
    /// One per mode.
    pub damping_ratios: Vec<f64>,
}

impl Default for BeamSection {
    fn default() -> Self {
        let b = BeamProperties::<f64>::reference(DEFAULT_MODE_COUNT);
        Self {
            width: b.width,
            length: b.length,
            thickness: b.thickness,
            youngs_modulus: b.youngs_modulus,
            poisson_ratio: b.poisson_ratio,
            density: b.density,
            mode_count: DEFAULT_MODE_COUNT,
            damping_ratios: vec![DEFAULT_DAMPING_RATIO; DEFAULT_MODE_COUNT],
        }
    }
}

impl BeamSection {
    pub fn properties(&self) -> BeamProperties<f64> {
        BeamProperties {
            width: self.width,
            length: self.length,
            thickness: self.thickness,
            youngs_modulus: self.youngs_modulus,
            poisson_ratio: self.poisson_ratio,
            density: self.density,
            damping_ratios: self.damping_ratios.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    pub width: f64,
    pub span: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub d31: f64,
    pub x: f64,
    pub y: f64,
    pub voltage_limit: f64,
}

impl Default for PatchSection {
    fn default() -> Self {
        Self::at(0.5)
    }
}

impl PatchSection {
    pub fn at(y: f64) -> Self {
        let p = PztPatch::<f64>::reference(y);
        Self {
            width: p.width,
            span: p.span,
            thickness: p.thickness,
            youngs_modulus: p.youngs_modulus,
            d31: p.d31,
            x: p.x,
            y: p.y,
            voltage_limit: DEFAULT_VOLTAGE_LIMIT,
        }
    }

    pub fn patch(&self) -> PztPatch<f64> {
        PztPatch {
            width: self.width,
            span: self.span,
            thickness: self.thickness,
            youngs_modulus: self.youngs_modulus,
            d31: self.d31,
            x: self.x,
            y: self.y,
            voltage_limit: self.voltage_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// Sampling and control interval (s).
    pub dt: f64,
    pub duration: f64,
    /// Strain sensor noise standard deviation.
    pub sensor_noise_std: f64,
    pub sensor_seed: u64,
    /// Metrics window start (s). Defaults to the impulse time, else 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics_start: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            duration: 10.0,
            sensor_noise_std: 0.05,
            sensor_seed: 7,
            metrics_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceType {
    None,
    Impulse,
    Sinusoid,
    RandomVibration,
}

/// Flat table; which amplitude fields apply depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: DisturbanceType,
    /// Span-wise application point (m).
    #[serde(default = "one")]
    pub application_point: f64,
    #[serde(default)]
    pub seed: u64,
    /// Impulse (N·s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    /// Impulse time (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    /// Sinusoid amplitude (N).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    /// Random vibration force std (N).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            kind: DisturbanceType::Impulse,
            application_point: 1.0,
            seed: 1,
            magnitude: Some(10.0),
            time: Some(1.0),
            amplitude: None,
            frequency: None,
            std: None,
            bandwidth: None,
        }
    }
}

impl DisturbanceSection {
    pub fn none() -> Self {
        Self {
            kind: DisturbanceType::None,
            magnitude: None,
            time: None,
            seed: 0,
            ..Self::default()
        }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64) -> Self {
        Self {
            kind: DisturbanceType::Sinusoid,
            magnitude: None,
            time: None,
            amplitude: Some(amplitude),
            frequency: Some(frequency),
            ..Self::default()
        }
    }

    /// Requires a validated section.
    pub fn scenario(&self) -> DisturbanceScenario<f64> {
        let kind = match self.kind {
            DisturbanceType::None => DisturbanceKind::None,
            DisturbanceType::Impulse => DisturbanceKind::Impulse {
                magnitude: self.magnitude.unwrap_or(0.0),
                time: self.time.unwrap_or(0.0),
            },
            DisturbanceType::Sinusoid => DisturbanceKind::Sinusoid {
                amplitude: self.amplitude.unwrap_or(0.0),
                frequency: self.frequency.unwrap_or(0.0),
            },
            DisturbanceType::RandomVibration => DisturbanceKind::RandomVibration {
                std: self.std.unwrap_or(0.0),
                bandwidth: self.bandwidth.unwrap_or(0.0),
            },
        };
        DisturbanceScenario {
            kind,
            application_point: self.application_point,
            seed: self.seed,
        }
    }

    fn fields(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("magnitude", self.magnitude),
            ("time", self.time),
            ("amplitude", self.amplitude),
            ("frequency", self.frequency),
            ("std", self.std),
            ("bandwidth", self.bandwidth),
        ]
    }

    fn required(&self) -> &'static [&'static str] {
        match self.kind {
            DisturbanceType::None => &[],
            DisturbanceType::Impulse => &["magnitude", "time"],
            DisturbanceType::Sinusoid => &["amplitude", "frequency"],
            DisturbanceType::RandomVibration => &["std", "bandwidth"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassChangeSection {
    pub time: f64,
    /// Multiplies the mass matrix from `time` on.
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerType {
    OpenLoop,
    Pd,
    Nmpc,
    Narx,
}

impl ControllerType {
    pub fn label(self) -> &'static str {
        match self {
            Self::OpenLoop => "open-loop",
            Self::Pd => "pd",
            Self::Nmpc => "nmpc",
            Self::Narx => "narx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerType,
    #[serde(default)]
    pub pd: PdSection,
    #[serde(default)]
    pub nmpc: NmpcSection,
    #[serde(default)]
    pub narx: NarxSection,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: ControllerType::OpenLoop,
            pd: PdSection::default(),
            nmpc: NmpcSection::default(),
            narx: NarxSection::default(),
        }
    }
}

/// Collocated diagonal gains, `V = −k_p z − k_d ż̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdSection {
    pub proportional: f64,
    pub derivative: f64,
    /// Derivative low-pass cutoff (Hz).
    pub derivative_cutoff: f64,
}

impl Default for PdSection {
    fn default() -> Self {
        Self {
            proportional: REFERENCE_KP,
            derivative: REFERENCE_KD,
            derivative_cutoff: DEFAULT_DERIVATIVE_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcSection {
    pub prediction_horizon: usize,
    pub control_horizon: usize,
    pub displacement_weight: f64,
    pub velocity_weight: f64,
    pub control_weight: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
}

impl Default for NmpcSection {
    fn default() -> Self {
        Self {
            prediction_horizon: DEFAULT_PREDICTION_HORIZON,
            control_horizon: DEFAULT_CONTROL_HORIZON,
            displacement_weight: DEFAULT_STATE_WEIGHT_DISPLACEMENT,
            velocity_weight: DEFAULT_STATE_WEIGHT_VELOCITY,
            control_weight: DEFAULT_CONTROL_WEIGHT,
            tolerance: flexbeam::qp::DEFAULT_TOLERANCE,
            max_sweeps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesiredType {
    Zero,
    ScaledPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NarxSection {
    /// Directory holding `forward.narx` and `inverse.narx`, relative to the
    /// config file.
    pub model_dir: String,
    pub desired: DesiredType,
    pub prediction_factor: f64,
    /// Reading low-pass cutoff (Hz); 0 disables it.
    pub filter_cutoff: f64,
    pub adaptation: AdaptationSection,
}

impl Default for NarxSection {
    fn default() -> Self {
        Self {
            model_dir: "models".into(),
            desired: DesiredType::ScaledPrediction,
            prediction_factor: 0.9,
            filter_cutoff: 5.0,
            adaptation: AdaptationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationSection {
    pub forward: bool,
    pub inverse: bool,
    pub error_threshold: f64,
    pub rate: f64,
    pub window: usize,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        Self {
            forward: false,
            inverse: false,
            error_threshold: 0.1,
            rate: 0.1,
            window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingPlant {
    Beam,
    /// `y(t+1) = 0.5 y(t) + u(t)` driven by unit Gaussian input.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub plant: TrainingPlant,
    /// NMPC-controlled impulse episodes.
    pub nmpc_episodes: usize,
    pub impulse_min: f64,
    pub impulse_max: f64,
    /// Open-loop random voltage episodes.
    pub excitation_episodes: usize,
    pub excitation_std: f64,
    pub excitation_bandwidth: f64,
    /// Force std of the background vibration during excitation episodes.
    pub background_std: f64,
    pub episode_duration: f64,
    pub scalar_samples: usize,
    pub hidden_width: usize,
    pub feedback_taps: usize,
    pub input_taps: usize,
    pub split: [f64; 3],
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            plant: TrainingPlant::Beam,
            nmpc_episodes: 16,
            impulse_min: 5.0,
            impulse_max: 20.0,
            excitation_episodes: 4,
            excitation_std: 60.0,
            excitation_bandwidth: 5.0,
            background_std: 0.1,
            episode_duration: 10.0,
            scalar_samples: 2000,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            feedback_taps: DEFAULT_TAPS,
            input_taps: DEFAULT_TAPS,
            split: [0.70, 0.15, 0.15],
            max_epochs: 100,
            patience: 6,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SatelliteSection {
    pub inertia: [[f64; 3]; 3],
}

impl Default for SatelliteSection {
    fn default() -> Self {
        Self {
            inertia: REFERENCE_INERTIA,
        }
    }
}

/// One offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            output_dir: default_output_dir(),
            beam: BeamSection::default(),
            patches: default_patches(),
            simulation: SimulationSection::default(),
            disturbance: DisturbanceSection::default(),
            mass_change: None,
            controller: ControllerSection::default(),
            training: None,
            satellite: SatelliteSection::default(),
        }
    }
}

impl ScenarioConfig {
    /// Reference impulse case with the given controller.
    pub fn reference(kind: ControllerType) -> Self {
        let mut c = Self::default();
        c.controller.kind = kind;
        c
    }

    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: String, message: String| errs.push(FieldError { field, message });
        let positive = |field: &str, v: f64, bad: &mut dyn FnMut(String, String)| {
            if !(v > 0.0 && v.is_finite()) {
                bad(field.into(), format!("must be positive and finite (got {v})"));
            }
        };

        let b = &self.beam;
        for (name, v) in [
            ("width", b.width),
            ("length", b.length),
            ("thickness", b.thickness),
            ("youngs_modulus", b.youngs_modulus),
            ("density", b.density),
        ] {
            positive(&format!("beam.{name}"), v, &mut bad);
        }
        if !(b.poisson_ratio > -1.0 && b.poisson_ratio < 0.5) {
            bad(
                "beam.poisson_ratio".into(),
                format!("must lie in (-1, 0.5) (got {})", b.poisson_ratio),
            );
        }
        if b.mode_count == 0 {
            bad("beam.mode_count".into(), "must be at least 1".into());
        }
        if b.damping_ratios.len() != b.mode_count {
            bad(
                "beam.damping_ratios".into(),
                format!(
                    "needs one entry per mode ({} given, mode_count = {})",
                    b.damping_ratios.len(),
                    b.mode_count
                ),
            );
        }
        for (i, z) in b.damping_ratios.iter().enumerate() {
            if !(*z >= 0.0 && *z < 1.0) {
                bad(format!("beam.damping_ratios[{i}]"), format!("must lie in [0, 1) (got {z})"));
            }
        }

        if self.patches.is_empty() {
            bad("patches".into(), "at least one patch is required".into());
        }
        for (i, p) in self.patches.iter().enumerate() {
            for (name, v) in [
                ("width", p.width),
                ("span", p.span),
                ("thickness", p.thickness),
                ("youngs_modulus", p.youngs_modulus),
                ("voltage_limit", p.voltage_limit),
            ] {
                positive(&format!("patches[{i}].{name}"), v, &mut bad);
            }
            if !p.d31.is_finite() || p.d31 == 0.0 {
                bad(format!("patches[{i}].d31"), format!("must be finite and non-zero (got {})", p.d31));
            }
            if b.length > 0.0 && (p.y - p.span / 2.0 < -1e-12 || p.y + p.span / 2.0 > b.length + 1e-12) {
                bad(
                    format!("patches[{i}].y"),
                    format!("patch [{}, {}] leaves the beam [0, {}]", p.y - p.span / 2.0, p.y + p.span / 2.0, b.length),
                );
            }
            if b.width > 0.0 && (p.x - p.width / 2.0 < -1e-12 || p.x + p.width / 2.0 > b.width + 1e-12) {
                bad(format!("patches[{i}].x"), format!("patch leaves the beam width {}", b.width));
            }
        }

        let s = &self.simulation;
        positive("simulation.dt", s.dt, &mut bad);
        positive("simulation.duration", s.duration, &mut bad);
        if s.dt > 0.0 && s.duration > 0.0 && s.duration < s.dt {
            bad("simulation.duration".into(), "must cover at least one step".into());
        }
        if !(s.sensor_noise_std >= 0.0 && s.sensor_noise_std.is_finite()) {
            bad("simulation.sensor_noise_std".into(), format!("must be non-negative (got {})", s.sensor_noise_std));
        }
        if let Some(t) = s.metrics_start {
            if !(t >= 0.0 && t < s.duration) {
                bad("simulation.metrics_start".into(), format!("must lie in [0, duration) (got {t})"));
            }
        }

        let d = &self.disturbance;
        let required = d.required();
        for (name, v) in d.fields() {
            let field = format!("disturbance.{name}");
            match (required.contains(&name), v) {
                (true, None) => bad(field, format!("required for kind = {}", kind_name(d.kind))),
                (false, Some(_)) => bad(field, format!("not used by kind = {}", kind_name(d.kind))),
                _ => {}
            }
        }
        if required.iter().all(|r| d.fields().iter().any(|(n, v)| n == r && v.is_some())) {
            if let Err(e) = d.scenario().validate(b.length) {
                bad(format!("disturbance.{}", core_field(&e)), e.to_string());
            }
        }

        if let Some(mc) = &self.mass_change {
            positive("mass_change.factor", mc.factor, &mut bad);
            if !(mc.time >= 0.0) {
                bad("mass_change.time".into(), format!("must be non-negative (got {})", mc.time));
            }
        }

        let c = &self.controller;
        if !c.pd.proportional.is_finite() {
            bad("controller.pd.proportional".into(), "must be finite".into());
        }
        if !c.pd.derivative.is_finite() {
            bad("controller.pd.derivative".into(), "must be finite".into());
        }
        positive("controller.pd.derivative_cutoff", c.pd.derivative_cutoff, &mut bad);
        let n = &c.nmpc;
        if n.prediction_horizon == 0 {
            bad("controller.nmpc.prediction_horizon".into(), "must be at least 1".into());
        }
        if n.control_horizon == 0 || n.control_horizon > n.prediction_horizon {
            bad(
                "controller.nmpc.control_horizon".into(),
                format!("must lie in [1, prediction_horizon] (got {})", n.control_horizon),
            );
        }
        positive("controller.nmpc.displacement_weight", n.displacement_weight, &mut bad);
        positive("controller.nmpc.velocity_weight", n.velocity_weight, &mut bad);
        positive("controller.nmpc.control_weight", n.control_weight, &mut bad);
        positive("controller.nmpc.tolerance", n.tolerance, &mut bad);
        if n.max_sweeps == Some(0) {
            bad("controller.nmpc.max_sweeps".into(), "must be at least 1".into());
        }
        let x = &c.narx;
        if !(x.filter_cutoff >= 0.0 && x.filter_cutoff.is_finite()) {
            bad("controller.narx.filter_cutoff".into(), "must be non-negative".into());
        }
        if !x.prediction_factor.is_finite() {
            bad("controller.narx.prediction_factor".into(), "must be finite".into());
        }
        if x.model_dir.is_empty() {
            bad("controller.narx.model_dir".into(), "must not be empty".into());
        }
        let a = &x.adaptation;
        if !(a.error_threshold >= 0.0) {
            bad("controller.narx.adaptation.error_threshold".into(), "must be non-negative".into());
        }
        positive("controller.narx.adaptation.rate", a.rate, &mut bad);
        if a.window == 0 {
            bad("controller.narx.adaptation.window".into(), "must be at least 1".into());
        }

        if let Some(t) = &self.training {
            if t.hidden_width == 0 {
                bad("training.hidden_width".into(), "must be at least 1".into());
            }
            if t.feedback_taps == 0 {
                bad("training.feedback_taps".into(), "must be at least 1".into());
            }
            if t.input_taps == 0 {
                bad("training.input_taps".into(), "must be at least 1".into());
            }
            let [tr, va, te] = t.split;
            if !(tr > 0.0 && va >= 0.0 && te >= 0.0 && ((tr + va + te) - 1.0).abs() < 1e-9) {
                bad("training.split".into(), format!("fractions must be non-negative with train > 0 and sum to 1 (got {:?})", t.split));
            }
            if !(t.impulse_min <= t.impulse_max) {
                bad("training.impulse_max".into(), "must be at least impulse_min".into());
            }
            for (name, v) in [
                ("excitation_std", t.excitation_std),
                ("background_std", t.background_std),
                ("impulse_min", t.impulse_min),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    bad(format!("training.{name}"), format!("must be non-negative (got {v})"));
                }
            }
            positive("training.excitation_bandwidth", t.excitation_bandwidth, &mut bad);
            positive("training.episode_duration", t.episode_duration, &mut bad);
            positive("training.lambda_init", t.lambda_init, &mut bad);
            if !(t.lambda_factor > 1.0) {
                bad("training.lambda_factor".into(), "must exceed 1".into());
            }
            if t.max_epochs == 0 {
                bad("training.max_epochs".into(), "must be at least 1".into());
            }
        }

        for (i, row) in self.satellite.inertia.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    bad(format!("satellite.inertia[{i}][{j}]"), "must be finite".into());
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn episode_spec(&self) -> EpisodeSpec<f64> {
        let s = &self.simulation;
        let mut spec = EpisodeSpec::new(s.duration, s.dt);
        spec.sensor_noise_std = s.sensor_noise_std;
        spec.sensor_seed = s.sensor_seed;
        spec.mass_change = self.mass_change.as_ref().map(|m| MassChange {
            time: m.time,
            factor: m.factor,
        });
        spec
    }

    /// Start of the metrics window.
    pub fn metrics_start(&self) -> f64 {
        if let Some(t) = self.simulation.metrics_start {
            return t;
        }
        match self.disturbance.kind {
            DisturbanceType::Impulse => self.disturbance.time.unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.simulation.sensor_seed = seed;
        self.disturbance.seed = seed;
        if let Some(t) = &mut self.training {
            t.seed = seed;
        }
    }

    /// Name of the first section that differs in plant or disturbance
    /// (seeds included), if any.
    pub fn plant_mismatch(&self, other: &Self) -> Option<&'static str> {
        if self.beam != other.beam {
            Some("beam")
        } else if self.patches != other.patches {
            Some("patches")
        } else if self.simulation != other.simulation {
            Some("simulation")
        } else if self.disturbance != other.disturbance {
            Some("disturbance")
        } else if self.mass_change != other.mass_change {
            Some("mass_change")
        } else {
            None
        }
    }
}

fn kind_name(k: DisturbanceType) -> &'static str {
    match k {
        DisturbanceType::None => "none",
        DisturbanceType::Impulse => "impulse",
        DisturbanceType::Sinusoid => "sinusoid",
        DisturbanceType::RandomVibration => "random-vibration",
    }
}

/// Maps a core domain error back to the config key.
fn core_field(e: &flexbeam::Error) -> &'static str {
    match e {
        flexbeam::Error::Domain { what, .. } => match *what {
            "impulse_magnitude" => "magnitude",
            "impulse_time" => "time",
            "sinusoid_amplitude" => "amplitude",
            "sinusoid_frequency" => "frequency",
            "white_noise_std" => "std",
            "bandwidth" => "bandwidth",
            "application_point" => "application_point",
            _ => "kind",
        },
        _ => "kind",
    }
}
