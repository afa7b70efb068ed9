//! Campaign configuration and its TOML schema.

use crate::bsm::BsmModel;
use crate::error::{invalid, Error, Result};
use crate::linkgeom::{LinkModel, PassGeometry};
use crate::photonsrc::SourceModel;
use crate::qstate::MubState;
use crate::timesync::{ClockModel, SyncConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Number of orbits in the default campaign.
pub const DEFAULT_ORBITS: usize = 32;
/// Range of culmination elevations spanned by the default campaign, degrees.
pub const DEFAULT_MAX_ELEVATIONS: (f64, f64) = (20.0, 76.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    pub label: String,
    /// Culmination elevation, degrees.
    pub max_elevation: f64,
    /// Input state for this orbit; round-robin over the six MUB states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<MubState>,
}

/// Satellite-side optics and the uplink polarization error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    /// Lumped receiver optics and detector efficiency.
    pub receiver_efficiency: f64,
    /// Systematic linear-polarization rotation, radians.
    pub polarization_delta: f64,
    /// Per-photon rotation jitter, radians.
    pub polarization_jitter: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        calibrated::CHANNEL
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.receiver_efficiency > 0.0 && self.receiver_efficiency <= 1.0) {
            return Err(invalid("receiver_efficiency", "must lie in (0, 1]"));
        }
        if !self.polarization_delta.is_finite() {
            return Err(invalid("polarization_delta", "must be finite"));
        }
        if !(self.polarization_jitter >= 0.0 && self.polarization_jitter.is_finite()) {
            return Err(invalid("polarization_jitter", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    /// Satellite background (dark plus stray light) count rate, Hz.
    pub background_rate: f64,
    /// Full coincidence window, ps.
    pub window_ps: i64,
    /// Relative timing jitter, ps.
    pub jitter_sigma_ps: f64,
    pub sync_rate: f64,
    pub clock_offset_ps: f64,
    pub clock_drift_ppm: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        let sync = SyncConfig::default();
        Self {
            background_rate: calibrated::BACKGROUND_RATE,
            window_ps: sync.window_ps,
            jitter_sigma_ps: sync.detector_jitter_sigma_ps,
            sync_rate: sync.sync_rate,
            clock_offset_ps: 2.5e8,
            clock_drift_ppm: 1.0,
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(invalid("background_rate", "must be non-negative"));
        }
        if self.window_ps <= 0 {
            return Err(invalid("window_ps", "must be positive"));
        }
        if !(self.jitter_sigma_ps >= 0.0) {
            return Err(invalid("jitter_sigma_ps", "must be non-negative"));
        }
        if !(self.sync_rate > 0.0) {
            return Err(invalid("sync_rate", "must be positive"));
        }
        self.clock()?;
        Ok(())
    }

    pub fn window_s(&self) -> f64 {
        self.window_ps as f64 * 1e-12
    }

    pub fn clock(&self) -> Result<ClockModel> {
        ClockModel::new(self.clock_offset_ps, self.clock_drift_ppm)
    }

    pub fn sync_config(&self) -> SyncConfig {
        SyncConfig {
            sync_rate: self.sync_rate,
            window_ps: self.window_ps,
            detector_jitter_sigma_ps: self.jitter_sigma_ps,
        }
    }
}

/// Switches for the four budgeted noise sources, plus the feed-forward
/// correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseToggles {
    /// Multi-pair emission: the Werner-degraded resource and the double-pair branch.
    pub double_pair: bool,
    /// Partial two-photon distinguishability at the BSM (`M < 1`).
    pub distinguishability: bool,
    pub polarization_distortion: bool,
    pub background: bool,
    #[serde(default = "yes")]
    pub feed_forward: bool,
}

fn yes() -> bool {
    true
}

impl NoiseToggles {
    pub fn all_on() -> Self {
        Self {
            double_pair: true,
            distinguishability: true,
            polarization_distortion: true,
            background: true,
            feed_forward: true,
        }
    }

    pub fn all_off() -> Self {
        Self {
            double_pair: false,
            distinguishability: false,
            polarization_distortion: false,
            background: false,
            feed_forward: true,
        }
    }
}

impl Default for NoiseToggles {
    fn default() -> Self {
        Self::all_on()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Poisson counts per time slice with accidentals from the rate formula.
    #[default]
    Rate,
    /// Full time-tag streams, clock recovery and coincidence matching.
    TimeTags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Data-taking window per orbit, centred on culmination, s.
    pub orbit_duration: f64,
    #[serde(default = "default_slice")]
    pub time_slice: f64,
    #[serde(default)]
    pub mode: SimulationMode,
    pub orbits: Vec<OrbitSpec>,
    #[serde(default = "default_source")]
    pub source: SourceModel,
    #[serde(default = "default_bsm")]
    pub bsm: BsmModel,
    #[serde(default)]
    pub geometry: PassGeometry,
    #[serde(default = "default_link")]
    pub link: LinkModel,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub detection: DetectionModel,
    #[serde(default)]
    pub noise: NoiseToggles,
}

fn default_slice() -> f64 {
    1.0
}

fn default_source() -> SourceModel {
    SourceModel {
        double_pair_fraction: calibrated::DOUBLE_PAIR_FRACTION,
        ..SourceModel::default()
    }
}

fn default_link() -> LinkModel {
    LinkModel {
        zenith_transmittance: calibrated::ZENITH_TRANSMITTANCE,
        system_efficiency_db: calibrated::SYSTEM_EFFICIENCY_DB,
        slew_degradation_k: calibrated::SLEW_DEGRADATION_K,
        ..LinkModel::default()
    }
}

fn default_bsm() -> BsmModel {
    BsmModel {
        mode_overlap: calibrated::MODE_OVERLAP,
    }
}

/// Fitted parameter values shipped as defaults (see `configs/` and the
/// `calibrate` subcommand).
pub mod calibrated {
    use super::ChannelModel;

    pub const MODE_OVERLAP: f64 = 0.7;
    pub const DOUBLE_PAIR_FRACTION: f64 = 0.033_674_963;
    pub const BACKGROUND_RATE: f64 = 281.879;
    pub const ZENITH_TRANSMITTANCE: f64 = 0.786_172;
    pub const SYSTEM_EFFICIENCY_DB: f64 = 4.818_838;
    pub const SLEW_DEGRADATION_K: f64 = 2.425_472;
    pub const CHANNEL: ChannelModel = ChannelModel {
        receiver_efficiency: 0.349_785,
        polarization_delta: 0.213_756_13,
        polarization_jitter: 0.0,
    };
}

/// Evenly spaced culmination elevations, labelled `orbit-01`, `orbit-02`, ...
pub fn default_orbits(count: usize, lowest: f64, highest: f64) -> Vec<OrbitSpec> {
    (0..count)
        .map(|i| {
            let frac = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            OrbitSpec {
                label: format!("orbit-{:02}", i + 1),
                max_elevation: lowest + frac * (highest - lowest),
                state: None,
            }
        })
        .collect()
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            orbit_duration: 350.0,
            time_slice: default_slice(),
            mode: SimulationMode::Rate,
            orbits: default_orbits(DEFAULT_ORBITS, DEFAULT_MAX_ELEVATIONS.0, DEFAULT_MAX_ELEVATIONS.1),
            source: default_source(),
            bsm: default_bsm(),
            geometry: PassGeometry::default(),
            link: default_link(),
            channel: ChannelModel::default(),
            detection: DetectionModel::default(),
            noise: NoiseToggles::all_on(),
        }
    }
}

/// Model parameters after applying the noise toggles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub entangled_fidelity: f64,
    pub double_pair_fraction: f64,
    pub mode_overlap: f64,
    pub polarization_delta: f64,
    pub polarization_jitter: f64,
    pub background_rate: f64,
    pub feed_forward: bool,
}

impl EffectiveParams {
    pub fn ideal() -> Self {
        Self {
            entangled_fidelity: 1.0,
            double_pair_fraction: 0.0,
            mode_overlap: 1.0,
            polarization_delta: 0.0,
            polarization_jitter: 0.0,
            background_rate: 0.0,
            feed_forward: true,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.orbit_duration > 0.0 && self.orbit_duration.is_finite()) {
            return Err(invalid("orbit_duration", "must be positive"));
        }
        if !(self.time_slice > 0.0 && self.time_slice <= self.orbit_duration) {
            return Err(invalid("time_slice", "must be positive and at most orbit_duration"));
        }
        if self.orbits.is_empty() {
            return Err(invalid("orbits", "at least one orbit required"));
        }
        for o in &self.orbits {
            self.geometry.with_max_elevation(o.max_elevation).validate()?;
        }
        self.source.validate()?;
        BsmModel::new(self.bsm.mode_overlap)?;
        self.geometry.validate()?;
        self.link.validate()?;
        self.channel.validate()?;
        self.detection.validate()?;
        Ok(())
    }

    /// Input state of each orbit.
    pub fn schedule(&self) -> Vec<MubState> {
        self.orbits
            .iter()
            .enumerate()
            .map(|(i, o)| o.state.unwrap_or(MubState::ALL[i % MubState::ALL.len()]))
            .collect()
    }

    /// Requires every MUB state to appear in the schedule.
    pub fn validate_schedule(&self) -> Result<()> {
        let seen: BTreeSet<MubState> = self.schedule().into_iter().collect();
        let missing: Vec<String> = MubState::ALL
            .iter()
            .filter(|m| !seen.contains(m))
            .map(|m| m.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(invalid(
                "orbits",
                format!("schedule never uses input state(s) {}", missing.join(", ")),
            ))
        }
    }

    pub fn orbit_geometry(&self, orbit: &OrbitSpec) -> PassGeometry {
        self.geometry.with_max_elevation(orbit.max_elevation)
    }

    pub fn effective(&self) -> EffectiveParams {
        let n = &self.noise;
        EffectiveParams {
            entangled_fidelity: if n.double_pair { self.source.entangled_fidelity } else { 1.0 },
            double_pair_fraction: if n.double_pair { self.source.double_pair_fraction } else { 0.0 },
            mode_overlap: if n.distinguishability { self.bsm.mode_overlap } else { 1.0 },
            polarization_delta: if n.polarization_distortion { self.channel.polarization_delta } else { 0.0 },
            polarization_jitter: if n.polarization_distortion { self.channel.polarization_jitter } else { 0.0 },
            background_rate: if n.background { self.detection.background_rate } else { 0.0 },
            feed_forward: n.feed_forward,
        }
    }

    pub fn with_noise(&self, noise: NoiseToggles) -> Self {
        Self { noise, ..self.clone() }
    }
}
