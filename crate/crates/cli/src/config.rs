//! One JSON or TOML document holding every module's knobs, with defaults
//! equal to the published parameter values. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use gazefuse_core::calibration::CalibrationConfig;
use gazefuse_core::confidence::ConfidenceConfig;
use gazefuse_core::events::EventConfig;
use gazefuse_core::simulator::SimConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub confidence: ConfidenceSection,
    pub events: EventsSection,
    pub sim: SimSection,
    pub calibration: CalibrationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceSection {
    pub min_matches: u32,
    pub conf_threshold: f64,
    pub beta_cap: f64,
    pub decay_span: usize,
    pub weight_floor: f64,
}

impl Default for ConfidenceSection {
    fn default() -> Self {
        Self {
            min_matches: 50,
            conf_threshold: 0.3,
            beta_cap: 0.9,
            decay_span: 2,
            weight_floor: 1e-8,
        }
    }
}

impl ConfidenceSection {
    pub fn to_core(&self) -> ConfidenceConfig {
        ConfidenceConfig {
            min_matches: self.min_matches,
            conf_threshold: self.conf_threshold,
            beta_cap: self.beta_cap,
            decay_span: self.decay_span,
            floor: self.weight_floor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventsSection {
    pub tv_lambda: f64,
    pub window_start_ms: f64,
    pub window_end_ms: f64,
    pub max_amplitude_deg: f64,
    pub gmm_components: usize,
    pub seed: u64,
}

impl Default for EventsSection {
    fn default() -> Self {
        Self {
            tv_lambda: 0.05,
            window_start_ms: 100.0,
            window_end_ms: 500.0,
            max_amplitude_deg: 0.5,
            gmm_components: 2,
            seed: 42,
        }
    }
}

impl EventsSection {
    pub fn to_core(&self, seed_override: Option<u64>) -> EventConfig {
        EventConfig {
            tv_lambda: self.tv_lambda,
            window_start_s: self.window_start_ms / 1000.0,
            window_end_s: self.window_end_ms / 1000.0,
            max_amplitude: self.max_amplitude_deg,
            gmm_components: self.gmm_components,
            seed: seed_override.unwrap_or(self.seed),
            ..EventConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub fs_hz: f64,
    pub square_hz: f64,
    pub square_amplitude: f64,
    pub square_secs: f64,
    pub sine_hz: f64,
    pub sine_amplitude: f64,
    pub sine_secs: f64,
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    pub trials: usize,
    pub seed: u64,
    pub beta_p: Option<f64>,
    pub beta_i: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            fs_hz: 250.0,
            square_hz: 2.0,
            square_amplitude: 3.0,
            square_secs: 2.0,
            sine_hz: 1.0,
            sine_amplitude: 2.0,
            sine_secs: 2.0,
            sigma_pos: 0.03,
            sigma_vel: 0.01,
            trials: 100,
            seed: 42,
            beta_p: None,
            beta_i: None,
        }
    }
}

impl SimSection {
    pub fn to_core(&self, seed_override: Option<u64>, trials_override: Option<usize>) -> SimConfig {
        SimConfig {
            fs: self.fs_hz,
            square_hz: self.square_hz,
            square_amplitude: self.square_amplitude,
            square_secs: self.square_secs,
            sine_hz: self.sine_hz,
            sine_amplitude: self.sine_amplitude,
            sine_secs: self.sine_secs,
            sigma_pos: self.sigma_pos,
            sigma_vel: self.sigma_vel,
            trials: trials_override.unwrap_or(self.trials),
            seed: seed_override.unwrap_or(self.seed),
            beta_p: self.beta_p,
            beta_i: self.beta_i,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub saccade_margin_ms: f64,
    pub landing_fraction: f64,
    pub fixation_span_ms: f64,
    pub delay_coeffs: [f64; 3],
    pub apply_display_delay: bool,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            saccade_margin_ms: 30.0,
            landing_fraction: 0.2,
            fixation_span_ms: 450.0,
            delay_coeffs: gazefuse_core::calibration::DISPLAY_DELAY_COEFFS,
            apply_display_delay: false,
        }
    }
}

impl CalibrationSection {
    pub fn to_core(&self) -> CalibrationConfig {
        CalibrationConfig {
            saccade_margin_s: self.saccade_margin_ms / 1000.0,
            landing_fraction: self.landing_fraction,
        }
    }
}

/// Loads a config document; `.toml` goes through the TOML parser,
/// everything else through JSON. Missing path means all defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))
    }
}
