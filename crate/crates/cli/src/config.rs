//! Strict JSON run configuration shared by every subcommand.
//!
//! Unknown keys are rejected wherever they appear, defaults are filled on
//! parse, and a parsed config serializes back to its normalized form (all
//! defaults explicit), so `parse ∘ serialize` is a fixed point.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use orbit_core::continuation::{AdaptationReset, WarmStart};
use orbit_core::control::ProjectionSettings;
use orbit_core::plant::{self, BeamParams, PlantError, PlantView};
use orbit_core::{
    ChartSettings, Controller, ExperimentProtocol, FourierSeries, IntegratorConfig, MracParams,
    PlantFactory, RealMatrix,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A rejected configuration; the message names the offending key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationConfig>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PlantParams>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Required for the beam plant, rejected elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// "periodic" (cos 2ωt) or "quasiperiodic" (sin √2 t).
    pub kind: String,
    pub h_b: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Lyapunov right-hand side, row-major; identity when omitted.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_hat0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Load the generator from another JSON file (same inline shape) instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub n_transient_periods: usize,
    pub n_samples: usize,
    pub k_harmonics: usize,
    /// "chain" or "cold".
    pub warm_start: String,
    pub conv_tol: f64,
    /// "carry" or "reset".
    pub adaptation_reset: String,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let p = ExperimentProtocol::default();
        Self {
            n_transient_periods: p.n_transient_periods,
            n_samples: p.n_samples,
            k_harmonics: p.k_harmonics,
            warm_start: "chain".into(),
            conv_tol: p.conv_tol,
            adaptation_reset: "carry".into(),
        }
    }
}

fn chart_default<T>(pick: impl Fn(&ChartSettings) -> T) -> T {
    pick(&ChartSettings::default())
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    pub omega0: f64,
    pub omega_range: [f64; 2],
    #[serde(default = "d_h0")]
    pub h0: f64,
    #[serde(default = "d_h_min")]
    pub h_min: f64,
    #[serde(default = "d_h_max")]
    pub h_max: f64,
    #[serde(default = "d_grow")]
    pub grow: f64,
    #[serde(default = "d_shrink")]
    pub shrink: f64,
    #[serde(default = "d_grow_threshold")]
    pub grow_threshold: usize,
    #[serde(default = "d_newton_cap")]
    pub newton_cap: usize,
    #[serde(default = "d_fd_step")]
    pub fd_step: f64,
    #[serde(default = "d_max_points")]
    pub max_points: usize,
}

fn d_h0() -> f64 {
    chart_default(|c| c.h0)
}
fn d_h_min() -> f64 {
    chart_default(|c| c.h_min)
}
fn d_h_max() -> f64 {
    chart_default(|c| c.h_max)
}
fn d_grow() -> f64 {
    chart_default(|c| c.grow)
}
fn d_shrink() -> f64 {
    chart_default(|c| c.shrink)
}
fn d_grow_threshold() -> usize {
    chart_default(|c| c.grow_threshold)
}
fn d_newton_cap() -> usize {
    chart_default(|c| c.newton_cap)
}
fn d_fd_step() -> f64 {
    chart_default(|c| c.fd_step)
}
fn d_max_points() -> usize {
    chart_default(|c| c.max_points)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Unlimited when absent (JSON has no infinity literal).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self {
            rtol: c.rtol,
            atol: c.atol,
            h_init: c.h_init,
            h_min: c.h_min,
            h_max: None,
            max_steps: c.max_steps,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_end: f64,
    /// Plant initial state; origin when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    /// Initial controller state: θ̂(0) for the structured adaptive loop,
    /// [k̂(0)] for the scalar one. Zeros / controller.k_hat0 when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ctrl0: Option<Vec<f64>>,
    pub samples_per_period: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { t_end: 200.0, q0: None, ctrl0: None, samples_per_period: 32 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
    /// "up", "down", or "both".
    #[serde(default = "d_direction")]
    pub direction: String,
    #[serde(default = "d_settle_periods")]
    pub settle_periods: usize,
    #[serde(default = "d_sweep_samples")]
    pub n_samples: usize,
}

fn d_direction() -> String {
    "up".into()
}
fn d_settle_periods() -> usize {
    // Light damping needs a long transient: at ζ=0.05 the envelope decays
    // by e^{-π/10} per period, so 60 periods leave ~10⁻⁸ of the initial kick.
    60
}
fn d_sweep_samples() -> usize {
    256
}

/// Parse and validate a config file; `path`'s directory anchors any relative
/// `reference.from_file`.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| bad(format!("config {}: {e}", path.display())))?;
    if let Some(reference) = &mut cfg.reference {
        if let Some(file) = &reference.from_file {
            if reference.omega.is_some()
                || reference.a0.is_some()
                || reference.a.is_some()
                || reference.b.is_some()
            {
                return Err(bad(
                    "reference.from_file cannot be combined with inline coefficients",
                ));
            }
            let resolved = if file.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(file)
            } else {
                file.clone()
            };
            let inner = std::fs::read_to_string(&resolved)
                .map_err(|e| bad(format!("cannot read reference file {}: {e}", resolved.display())))?;
            let loaded: ReferenceConfig = serde_json::from_str(&inner)
                .map_err(|e| bad(format!("reference file {}: {e}", resolved.display())))?;
            if loaded.from_file.is_some() {
                return Err(bad("reference files cannot chain further from_file links"));
            }
            *reference = loaded;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(bad(format!("schema must be {SCHEMA_VERSION}, got {}", self.schema)));
        }
        self.plant.validate()?;
        self.controller.validate()?;
        if let Some(r) = &self.reference {
            r.validate()?;
        }
        self.protocol.validate()?;
        if let Some(c) = &self.continuation {
            c.validate()?;
        }
        self.integrator.validate()?;
        if let Some(s) = &self.simulate {
            s.validate()?;
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        let structured = self.plant.is_structured();
        match self.controller.kind.as_str() {
            "scalar_adaptive" if structured => {
                return Err(bad("controller.type scalar_adaptive needs a scalar plant"));
            }
            "proportional" | "mrac" | "mrac_projected" if !structured => {
                return Err(bad(format!(
                    "controller.type {} needs a structured plant",
                    self.controller.kind
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical JSON with all defaults explicit, 2-space indent, trailing
    /// newline. `parse(normalized(x)) == parse(x)` for any valid x.
    #[cfg(test)]
    pub fn normalized_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

impl PlantConfig {
    const NAMES: [&'static str; 4] = ["duffing", "linear_oscillator", "scalar_sine", "beam_2dof"];

    fn validate(&self) -> Result<(), ConfigError> {
        if !Self::NAMES.contains(&self.name.as_str()) {
            return Err(bad(format!(
                "plant.name must be one of {}; got '{}'",
                Self::NAMES.join(", "),
                self.name
            )));
        }
        let params = self.params.clone().unwrap_or_default();
        if self.name == "beam_2dof" && params.beam.is_none() {
            return Err(bad("plant.params.beam is required for beam_2dof"));
        }
        if self.name != "beam_2dof" && params.beam.is_some() {
            return Err(bad(format!("plant.params.beam is not accepted for {}", self.name)));
        }
        if let Some(d) = &params.disturbance {
            if d.kind != "periodic" && d.kind != "quasiperiodic" {
                return Err(bad(format!(
                    "plant.params.disturbance.kind must be periodic or quasiperiodic, got '{}'",
                    d.kind
                )));
            }
            if !(d.h_b > 0.0) || !d.h_b.is_finite() {
                return Err(bad(format!(
                    "plant.params.disturbance.h_b must be > 0, got {}",
                    d.h_b
                )));
            }
            if self.name == "scalar_sine" {
                return Err(bad("plant.params.disturbance is not supported on scalar plants"));
            }
        }
        Ok(())
    }

    pub fn is_structured(&self) -> bool {
        self.name != "scalar_sine"
    }

    fn build(&self, omega: f64) -> Result<PlantView, PlantError> {
        let params = self.params.clone().unwrap_or_default();
        let view = match self.name.as_str() {
            "duffing" => {
                let p = plant::duffing(omega)?;
                self.wrap(p, &params)?
            }
            "linear_oscillator" => {
                let p = plant::linear_oscillator(omega)?;
                self.wrap(p, &params)?
            }
            "beam_2dof" => {
                let p = plant::beam_2dof(params.beam.as_ref().unwrap(), omega)?;
                self.wrap(p, &params)?
            }
            "scalar_sine" => plant::scalar_sine(omega)?.view(),
            other => return Err(PlantError::BadParam(format!("unknown plant '{other}'"))),
        };
        Ok(view)
    }

    fn wrap(
        &self,
        p: plant::StructuredPlant,
        params: &PlantParams,
    ) -> Result<PlantView, PlantError> {
        let p = match &params.disturbance {
            Some(d) => {
                let dist = match d.kind.as_str() {
                    "periodic" => plant::periodic_disturbance(d.h_b, p.omega, &p.b),
                    _ => plant::quasiperiodic_disturbance(d.h_b, &p.b),
                };
                plant::with_disturbance(&p, dist)?
            }
            None => p,
        };
        Ok(p.view())
    }

    /// Plant views keyed by forcing frequency, for continuation and sweeps.
    pub fn factory(&self) -> PlantFactory {
        let cfg = self.clone();
        Arc::new(move |omega| cfg.build(omega))
    }

    /// The diagnosable plant object at a fixed frequency (keeps ground-truth
    /// access for summary metrics; the view alone hides it).
    pub fn build_structured(&self, omega: f64) -> Result<plant::StructuredPlant, ConfigError> {
        let params = self.params.clone().unwrap_or_default();
        let p = match self.name.as_str() {
            "duffing" => plant::duffing(omega),
            "linear_oscillator" => plant::linear_oscillator(omega),
            "beam_2dof" => plant::beam_2dof(params.beam.as_ref().unwrap(), omega),
            other => return Err(bad(format!("plant.name '{other}' is not a structured plant"))),
        }
        .map_err(|e| bad(format!("plant: {e}")))?;
        match &params.disturbance {
            Some(d) => {
                let dist = match d.kind.as_str() {
                    "periodic" => plant::periodic_disturbance(d.h_b, p.omega, &p.b),
                    _ => plant::quasiperiodic_disturbance(d.h_b, &p.b),
                };
                plant::with_disturbance(&p, dist).map_err(|e| bad(format!("plant: {e}")))
            }
            None => Ok(p),
        }
    }

    pub fn build_scalar(&self, omega: f64) -> Result<plant::ScalarPlant, ConfigError> {
        if self.name != "scalar_sine" {
            return Err(bad(format!("plant.name '{}' is not a scalar plant", self.name)));
        }
        plant::scalar_sine(omega).map_err(|e| bad(format!("plant: {e}")))
    }
}

impl ControllerConfig {
    const KINDS: [&'static str; 5] =
        ["none", "proportional", "mrac", "mrac_projected", "scalar_adaptive"];

    fn validate(&self) -> Result<(), ConfigError> {
        if !Self::KINDS.contains(&self.kind.as_str()) {
            return Err(bad(format!(
                "controller.type must be one of {}; got '{}'",
                Self::KINDS.join(", "),
                self.kind
            )));
        }
        let adaptive = matches!(self.kind.as_str(), "mrac" | "mrac_projected" | "scalar_adaptive");
        if adaptive {
            match self.gamma {
                None => {
                    return Err(bad(format!(
                        "controller.Gamma is required for type {}",
                        self.kind
                    )))
                }
                Some(g) if !(g > 0.0) || !g.is_finite() => {
                    return Err(bad("controller.Gamma must be > 0"));
                }
                _ => {}
            }
        } else if self.gamma.is_some() {
            return Err(bad(format!("controller.Gamma is not accepted for type {}", self.kind)));
        }
        if self.kind == "proportional" {
            match &self.k {
                None => return Err(bad("controller.k is required for type proportional")),
                Some(k) if k.is_empty() => {
                    return Err(bad("controller.k must not be empty"));
                }
                _ => {}
            }
        } else if self.k.is_some() {
            return Err(bad(format!("controller.k is not accepted for type {}", self.kind)));
        }
        if self.kind == "mrac_projected" {
            if let Some(r) = self.r {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(bad(format!("controller.R must be > 0, got {r}")));
                }
            }
            if let Some(eps) = self.eps {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(bad(format!("controller.eps must be > 0, got {eps}")));
                }
            }
        } else if self.r.is_some() || self.eps.is_some() {
            return Err(bad(format!(
                "controller.R/eps are only accepted for type mrac_projected, not {}",
                self.kind
            )));
        }
        if matches!(self.kind.as_str(), "mrac" | "mrac_projected") {
            if let Some(rows) = &self.s {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(bad("controller.S must be a square matrix"));
                }
            }
        } else if self.s.is_some() {
            return Err(bad(format!("controller.S is not accepted for type {}", self.kind)));
        }
        if self.kind != "scalar_adaptive" && self.k_hat0.is_some() {
            return Err(bad(format!(
                "controller.k_hat0 is only accepted for type scalar_adaptive, not {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_controller(&self) -> Result<Controller, ConfigError> {
        Ok(match self.kind.as_str() {
            "none" => Controller::None,
            "proportional" => Controller::Proportional { k: self.k.clone().unwrap() },
            "mrac" | "mrac_projected" => {
                let mut p = MracParams::new(self.gamma.unwrap());
                if let Some(rows) = &self.s {
                    p.s = Some(
                        RealMatrix::from_rows(rows)
                            .map_err(|e| bad(format!("controller.S: {e}")))?,
                    );
                }
                if self.kind == "mrac_projected" {
                    let d = ProjectionSettings::default();
                    p = p.with_projection(ProjectionSettings {
                        radius: self.r.unwrap_or(d.radius),
                        eps: self.eps.unwrap_or(d.eps),
                    });
                }
                Controller::Mrac(p)
            }
            "scalar_adaptive" => Controller::ScalarAdaptive {
                gamma: self.gamma.unwrap(),
                k_hat0: self.k_hat0.unwrap_or(0.0),
            },
            other => return Err(bad(format!("controller.type '{other}' is not supported"))),
        })
    }
}

impl ReferenceConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        // from_file has been inlined by parse_config before validation.
        if self.from_file.is_some() {
            return Err(bad("reference.from_file must be resolved before validation"));
        }
        let omega = self
            .omega
            .ok_or_else(|| bad("reference.omega is required"))?;
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(bad(format!("reference.omega must be > 0, got {omega}")));
        }
        let na = self.a.as_ref().map_or(0, Vec::len);
        let nb = self.b.as_ref().map_or(0, Vec::len);
        if na != nb {
            return Err(bad(format!(
                "reference.a and reference.b must have equal length, got {na} and {nb}"
            )));
        }
        Ok(())
    }

    /// The scalar generator v this section describes.
    pub fn generator(&self) -> Result<FourierSeries, ConfigError> {
        FourierSeries::new(
            self.omega.unwrap(),
            self.a0.unwrap_or(0.0),
            self.a.clone().unwrap_or_default(),
            self.b.clone().unwrap_or_default(),
        )
        .map_err(|e| bad(format!("reference: {e}")))
    }
}

impl ProtocolConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_transient_periods < 1 {
            return Err(bad("protocol.n_transient_periods must be >= 1"));
        }
        if self.k_harmonics < 1 {
            return Err(bad("protocol.k_harmonics must be >= 1"));
        }
        if self.n_samples < 4 * self.k_harmonics + 4 {
            return Err(bad(format!(
                "protocol.n_samples must be at least 4*k_harmonics+4 = {}, got {}",
                4 * self.k_harmonics + 4,
                self.n_samples
            )));
        }
        if !(self.conv_tol > 0.0) || !self.conv_tol.is_finite() {
            return Err(bad(format!("protocol.conv_tol must be > 0, got {}", self.conv_tol)));
        }
        match self.warm_start.as_str() {
            "chain" | "cold" => {}
            other => {
                return Err(bad(format!(
                    "protocol.warm_start must be chain or cold, got '{other}'"
                )))
            }
        }
        match self.adaptation_reset.as_str() {
            "carry" | "reset" => {}
            other => {
                return Err(bad(format!(
                    "protocol.adaptation_reset must be carry or reset, got '{other}'"
                )))
            }
        }
        Ok(())
    }

    pub fn to_protocol(&self) -> ExperimentProtocol {
        ExperimentProtocol {
            n_transient_periods: self.n_transient_periods,
            n_samples: self.n_samples,
            k_harmonics: self.k_harmonics,
            warm_start: if self.warm_start == "cold" { WarmStart::Cold } else { WarmStart::Chain },
            conv_tol: self.conv_tol,
            adaptation_reset: if self.adaptation_reset == "reset" {
                AdaptationReset::ResetKHatZero
            } else {
                AdaptationReset::CarryThetaHat
            },
        }
    }
}

impl ContinuationConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let [lo, hi] = self.omega_range;
        if !(lo < hi) || !(self.omega0 > lo) || !(self.omega0 < hi) {
            return Err(bad(format!(
                "continuation.omega_range must satisfy lo < omega0 < hi, got lo={lo}, \
                 omega0={}, hi={hi}",
                self.omega0
            )));
        }
        for (name, v) in [
            ("h0", self.h0),
            ("h_min", self.h_min),
            ("h_max", self.h_max),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(format!("continuation.{name} must be > 0, got {v}")));
            }
        }
        if !(self.grow >= 1.0) {
            return Err(bad(format!("continuation.grow must be >= 1, got {}", self.grow)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(bad(format!(
                "continuation.shrink must be in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.newton_cap == 0 {
            return Err(bad("continuation.newton_cap must be >= 1"));
        }
        if self.max_points == 0 {
            return Err(bad("continuation.max_points must be >= 1"));
        }
        Ok(())
    }

    /// Chart settings with the thread cap from `ORBIT_TRACER_THREADS`
    /// (default 1, for bit-stable runs).
    pub fn to_chart(&self, n_threads: usize) -> ChartSettings {
        ChartSettings {
            h0: self.h0,
            h_min: self.h_min,
            h_max: self.h_max,
            grow: self.grow,
            shrink: self.shrink,
            grow_threshold: self.grow_threshold,
            newton_cap: self.newton_cap,
            fd_step: self.fd_step,
            max_points: self.max_points,
            n_threads,
        }
    }
}

impl IntegratorSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rtol > 0.0) || !self.rtol.is_finite() {
            return Err(bad(format!("integrator.rtol must be > 0, got {}", self.rtol)));
        }
        if !(self.atol > 0.0) || !self.atol.is_finite() {
            return Err(bad(format!("integrator.atol must be > 0, got {}", self.atol)));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init) {
            return Err(bad(format!(
                "integrator.h_min must satisfy 0 < h_min <= h_init, got h_min={}, h_init={}",
                self.h_min, self.h_init
            )));
        }
        if let Some(h) = self.h_max {
            if !(h >= self.h_init) {
                return Err(bad(format!(
                    "integrator.h_max must be >= h_init, got h_max={h}, h_init={}",
                    self.h_init
                )));
            }
        }
        if self.max_steps == 0 {
            return Err(bad("integrator.max_steps must be >= 1"));
        }
        Ok(())
    }

    pub fn to_integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rtol: self.rtol,
            atol: self.atol,
            h_init: self.h_init,
            h_min: self.h_min,
            h_max: self.h_max.unwrap_or(f64::INFINITY),
            max_steps: self.max_steps,
        }
    }
}

impl SimulateConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(bad(format!("simulate.t_end must be > 0, got {}", self.t_end)));
        }
        if self.samples_per_period < 2 {
            return Err(bad("simulate.samples_per_period must be >= 2"));
        }
        Ok(())
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.omega_min > 0.0) || !(self.omega_max > self.omega_min) {
            return Err(bad(format!(
                "sweep requires 0 < omega_min < omega_max, got {} and {}",
                self.omega_min, self.omega_max
            )));
        }
        if self.n_points < 2 {
            return Err(bad("sweep.n_points must be >= 2"));
        }
        match self.direction.as_str() {
            "up" | "down" | "both" => {}
            other => {
                return Err(bad(format!(
                    "sweep.direction must be up, down, or both; got '{other}'"
                )))
            }
        }
        if self.settle_periods == 0 {
            return Err(bad("sweep.settle_periods must be >= 1"));
        }
        if self.n_samples < 2 {
            return Err(bad("sweep.n_samples must be >= 2"));
        }
        Ok(())
    }

    pub fn omegas_up(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|i| {
                self.omega_min
                    + (self.omega_max - self.omega_min) * i as f64 / (n - 1) as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_duffing() -> &'static str {
        r#"{
            "schema": 1,
            "plant": {"name": "duffing"},
            "controller": {"type": "mrac", "Gamma": 1.0},
            "reference": {"omega": 1.0, "a": [1.0], "b": [0.5]},
            "simulate": {"t_end": 10.0}
        }"#
    }

    fn parse_str(s: &str) -> Result<RunConfig, ConfigError> {
        use std::sync::atomic::{AtomicUsize, Ordering};
        static SEQ: AtomicUsize = AtomicUsize::new(0);
        let dir = std::env::temp_dir().join(format!("otcfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("cfg-{}.json", SEQ.fetch_add(1, Ordering::Relaxed)));
        std::fs::write(&path, s).unwrap();
        parse_config(&path)
    }

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_str(minimal_duffing()).unwrap();
        assert_eq!(cfg.integrator.rtol, 1e-8);
        assert_eq!(cfg.integrator.atol, 1e-10);
        assert_eq!(cfg.protocol.k_harmonics, 5);
        assert_eq!(cfg.protocol.n_samples, 1024);
        assert_eq!(cfg.protocol.n_transient_periods, 10);
        assert_eq!(cfg.simulate.as_ref().unwrap().samples_per_period, 32);
    }

    #[test]
    fn negative_gamma_names_the_key_and_constraint() {
        let s = minimal_duffing().replace("\"Gamma\": 1.0", "\"Gamma\": -1");
        let err = parse_str(&s).unwrap_err();
        assert_eq!(err.0, "controller.Gamma must be > 0");
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let s = minimal_duffing().replace("\"Gamma\": 1.0", "\"Gamma\": 1.0, \"gammma\": 2");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("gammma"), "message was: {}", err.0);
    }

    #[test]
    fn serialize_then_parse_is_a_fixed_point() {
        let cfg = parse_str(minimal_duffing()).unwrap();
        let normalized = cfg.normalized_json();
        let cfg2 = parse_str(&normalized).unwrap();
        assert_eq!(normalized, cfg2.normalized_json());
        // Normalization makes the defaults explicit.
        assert!(normalized.contains("\"n_samples\": 1024"));
        assert!(normalized.contains("\"rtol\": 1e-8"));
    }

    #[test]
    fn controller_plant_pairings_are_checked() {
        let s = minimal_duffing().replace("\"name\": \"duffing\"", "\"name\": \"scalar_sine\"");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("needs a structured plant"), "message was: {}", err.0);

        let s = minimal_duffing()
            .replace("\"type\": \"mrac\", \"Gamma\": 1.0", "\"type\": \"scalar_adaptive\", \"Gamma\": 100.0");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("needs a scalar plant"), "message was: {}", err.0);
    }

    #[test]
    fn stray_fields_for_other_controller_types_are_rejected() {
        let s = minimal_duffing()
            .replace("\"type\": \"mrac\", \"Gamma\": 1.0", "\"type\": \"none\", \"Gamma\": 1.0");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("controller.Gamma is not accepted"), "message was: {}", err.0);

        let s = minimal_duffing().replace(
            "\"type\": \"mrac\", \"Gamma\": 1.0",
            "\"type\": \"mrac\", \"Gamma\": 1.0, \"R\": 10.0",
        );
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("mrac_projected"), "message was: {}", err.0);
    }

    #[test]
    fn reference_needs_matching_coefficient_lengths() {
        let s = minimal_duffing().replace("\"a\": [1.0], \"b\": [0.5]", "\"a\": [1.0], \"b\": []");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("equal length"), "message was: {}", err.0);
    }

    #[test]
    fn from_file_reference_is_inlined() {
        let dir = std::env::temp_dir().join(format!("otref-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("gen.json"),
            r#"{"omega": 2.0, "a": [0.1], "b": [0.2]}"#,
        )
        .unwrap();
        let cfg_text = r#"{
            "schema": 1,
            "plant": {"name": "duffing"},
            "controller": {"type": "none"},
            "reference": {"from_file": "gen.json"}
        }"#;
        let path = dir.join("cfg.json");
        std::fs::write(&path, cfg_text).unwrap();
        let cfg = parse_config(&path).unwrap();
        let r = cfg.reference.unwrap();
        assert_eq!(r.omega, Some(2.0));
        assert_eq!(r.a, Some(vec![0.1]));
        assert!(r.from_file.is_none());
    }

    #[test]
    fn beam_plant_requires_its_parameters() {
        let s = minimal_duffing().replace("\"name\": \"duffing\"", "\"name\": \"beam_2dof\"");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("plant.params.beam"), "message was: {}", err.0);
    }

    #[test]
    fn schema_version_is_enforced() {
        let s = minimal_duffing().replace("\"schema\": 1", "\"schema\": 2");
        let err = parse_str(&s).unwrap_err();
        assert!(err.0.contains("schema must be 1"), "message was: {}", err.0);
    }
}
