//! Experiment configuration: a TOML file of dotted sections, every key
//! optional. Unset keys take the reference simulation parameters.

use std::fmt;
use std::path::Path;

use mcrelay_core::calibration::CalibrationOptions;
use mcrelay_core::relay::{ChannelParams, RelayBase};
use mcrelay_core::{
    CalibrationMethod, ChannelSpec, CskScheme, DiffusionEnv, Dimension, HopSetup, Levels, MoleculeType, Reception,
    SlotTiming,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20_240_501;

/// A rejected configuration value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// µm²/s
    pub diffusion_coefficient: f64,
    /// 1 or 3
    pub dimension: u8,
    /// "absorbing" or "passive"
    pub reception: String,
    /// µm
    pub receiver_radius: f64,
    pub relay_radius: f64,
    /// s
    pub symbol_duration: f64,
    pub sampling_duration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isi_length: Option<usize>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            diffusion_coefficient: 100.0,
            dimension: 1,
            reception: "absorbing".into(),
            receiver_radius: 4.0,
            relay_radius: 4.0,
            symbol_duration: 0.15,
            sampling_duration: 0.15,
            isi_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub distance: f64,
    pub concentration: u64,
    pub levels: u8,
    pub n_symbols: usize,
    /// Absent means noiseless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            distance: 6.0,
            concentration: 150,
            levels: 4,
            n_symbols: 50_000,
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// "intersection" or "grid"
    pub method: String,
    pub grid_resolution: f64,
    pub samples: usize,
    pub distances: Vec<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            method: "intersection".into(),
            grid_resolution: 1.0,
            samples: 50_000,
            distances: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        }
    }
}

/// Inclusive SNR grid in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrGrid {
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_step: f64,
}

impl SnrGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.snr_max - self.snr_min) / self.snr_step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.snr_min + k as f64 * self.snr_step).collect()
    }

    fn validate(&self, section: &str, errors: &mut Vec<ConfigError>) {
        let field = |k: &str| format!("{section}.{k}");
        if !(self.snr_step > 0.0 && self.snr_step.is_finite()) {
            errors.push(ConfigError::new(field("snr_step"), "must be positive"));
        }
        if !(self.snr_min.is_finite() && self.snr_max.is_finite()) {
            errors.push(ConfigError::new(field("snr_min"), "SNR bounds must be finite"));
        } else if self.snr_min > self.snr_max {
            errors.push(ConfigError::new(field("snr_max"), "must not be below snr_min"));
        } else if self.snr_step > 0.0 && (self.snr_max - self.snr_min) / self.snr_step > 10_000.0 {
            errors.push(ConfigError::new(field("snr_step"), "grid has more than 10000 points"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSection {
    pub candidates: Vec<u64>,
    pub distance: f64,
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_step: f64,
}

impl ConcentrationSection {
    pub fn snr(&self) -> SnrGrid {
        SnrGrid {
            snr_min: self.snr_min,
            snr_max: self.snr_max,
            snr_step: self.snr_step,
        }
    }
}

impl Default for ConcentrationSection {
    fn default() -> Self {
        Self {
            candidates: vec![50, 100, 150, 300],
            distance: 3.0,
            snr_min: -5.0,
            snr_max: 40.0,
            snr_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaySection {
    pub scheme1_locations: Vec<f64>,
    pub scheme2_locations: Vec<f64>,
    pub af_location: f64,
    pub af_gain: f64,
    pub af_grid_resolution: f64,
    pub n_training: usize,
    /// Re-optimize each hop's concentration over `concentration.candidates`.
    pub recalibrate_concentration: bool,
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_step: f64,
}

impl RelaySection {
    pub fn snr(&self) -> SnrGrid {
        SnrGrid {
            snr_min: self.snr_min,
            snr_max: self.snr_max,
            snr_step: self.snr_step,
        }
    }
}

impl Default for RelaySection {
    fn default() -> Self {
        Self {
            scheme1_locations: vec![2.0, 3.0, 4.0],
            scheme2_locations: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            af_location: 3.0,
            af_gain: 50.0,
            af_grid_resolution: 1.0,
            n_training: 200_000,
            recalibrate_concentration: false,
            snr_min: -10.0,
            snr_max: 15.0,
            snr_step: 5.0,
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub channel: ChannelSection,
    pub link: LinkSection,
    pub calibration: CalibrationSection,
    pub concentration: ConcentrationSection,
    pub relay: RelaySection,
    /// Run record; present only when a manifest is reloaded as a config.
    #[serde(skip_serializing)]
    pub manifest: Option<toml::Table>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            channel: ChannelSection::default(),
            link: LinkSection::default(),
            calibration: CalibrationSection::default(),
            concentration: ConcentrationSection::default(),
            relay: RelaySection::default(),
            manifest: None,
        }
    }
}

fn positive(errors: &mut Vec<ConfigError>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(ConfigError::new(field, format!("must be positive and finite, got {v}")));
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // toml reports the offending key path in its span; keep the message short
            ConfigError::new("", msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError::new(e.field, format!("{}: {}", path.display(), e.message)))
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut e = Vec::new();
        let c = &self.channel;
        positive(&mut e, "channel.diffusion_coefficient", c.diffusion_coefficient);
        positive(&mut e, "channel.receiver_radius", c.receiver_radius);
        positive(&mut e, "channel.relay_radius", c.relay_radius);
        positive(&mut e, "channel.symbol_duration", c.symbol_duration);
        positive(&mut e, "channel.sampling_duration", c.sampling_duration);
        if c.sampling_duration > c.symbol_duration {
            e.push(ConfigError::new("channel.sampling_duration", "must not exceed symbol_duration"));
        }
        if Dimension::from_u8(c.dimension).is_err() {
            e.push(ConfigError::new("channel.dimension", format!("must be 1 or 3, got {}", c.dimension)));
        }
        match c.reception.as_str() {
            "absorbing" => {}
            "passive" if c.dimension == 3 => {}
            "passive" => e.push(ConfigError::new("channel.reception", "passive reception requires dimension = 3")),
            other => e.push(ConfigError::new(
                "channel.reception",
                format!("must be \"absorbing\" or \"passive\", got {other:?}"),
            )),
        }
        if c.isi_length == Some(0) {
            e.push(ConfigError::new("channel.isi_length", "must be at least 1"));
        }

        let l = &self.link;
        positive(&mut e, "link.distance", l.distance);
        if Levels::from_count(l.levels).is_err() {
            e.push(ConfigError::new("link.levels", format!("must be 2 or 4, got {}", l.levels)));
        }
        if l.n_symbols == 0 {
            e.push(ConfigError::new("link.n_symbols", "must be at least 1"));
        }
        if let Some(s) = l.snr_db {
            if !s.is_finite() {
                e.push(ConfigError::new("link.snr_db", "must be finite"));
            }
        }

        let cal = &self.calibration;
        if !matches!(cal.method.as_str(), "intersection" | "grid") {
            e.push(ConfigError::new(
                "calibration.method",
                format!("must be \"intersection\" or \"grid\", got {:?}", cal.method),
            ));
        }
        positive(&mut e, "calibration.grid_resolution", cal.grid_resolution);
        if cal.samples == 0 {
            e.push(ConfigError::new("calibration.samples", "must be at least 1"));
        }
        if cal.distances.is_empty() {
            e.push(ConfigError::new("calibration.distances", "must not be empty"));
        }
        for d in &cal.distances {
            positive(&mut e, "calibration.distances", *d);
        }

        let k = &self.concentration;
        if k.candidates.is_empty() {
            e.push(ConfigError::new("concentration.candidates", "must not be empty"));
        }
        positive(&mut e, "concentration.distance", k.distance);
        k.snr().validate("concentration", &mut e);

        let r = &self.relay;
        for (field, locs) in [
            ("relay.scheme1_locations", &r.scheme1_locations),
            ("relay.scheme2_locations", &r.scheme2_locations),
        ] {
            if locs.is_empty() {
                e.push(ConfigError::new(field, "must not be empty"));
            }
            for &x in locs {
                if !(x > 0.0 && x < l.distance) {
                    e.push(ConfigError::new(
                        field,
                        format!("location {x} must lie strictly between 0 and link.distance = {}", l.distance),
                    ));
                }
            }
        }
        if !(r.af_location > 0.0 && r.af_location < l.distance) {
            e.push(ConfigError::new("relay.af_location", "must lie strictly between 0 and link.distance"));
        }
        positive(&mut e, "relay.af_gain", r.af_gain);
        positive(&mut e, "relay.af_grid_resolution", r.af_grid_resolution);
        if r.n_training == 0 {
            e.push(ConfigError::new("relay.n_training", "must be at least 1"));
        }
        r.snr().validate("relay", &mut e);

        if e.is_empty() {
            Ok(())
        } else {
            Err(e)
        }
    }

    // Builders below assume `validate` passed.

    pub fn env(&self) -> DiffusionEnv {
        DiffusionEnv::new(
            self.channel.diffusion_coefficient,
            Dimension::from_u8(self.channel.dimension).expect("validated"),
        )
        .expect("validated")
    }

    pub fn reception(&self) -> Reception {
        match self.channel.reception.as_str() {
            "passive" => Reception::Passive,
            _ => Reception::Absorbing,
        }
    }

    pub fn timing(&self) -> SlotTiming {
        SlotTiming::new(self.channel.symbol_duration, self.channel.sampling_duration).expect("validated")
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            env: self.env(),
            reception: self.reception(),
            timing: self.timing(),
            isi_length: self.channel.isi_length,
        }
    }

    pub fn scheme(&self, molecule: MoleculeType) -> CskScheme {
        CskScheme {
            base_concentration: self.link.concentration,
            levels: Levels::from_count(self.link.levels).expect("validated"),
            molecule,
        }
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            method: match self.calibration.method.as_str() {
                "grid" => CalibrationMethod::GridSearch {
                    resolution: self.calibration.grid_resolution,
                },
                _ => CalibrationMethod::Intersection,
            },
            samples: self.calibration.samples,
        }
    }

    /// Single hop at `distance` toward the receiver.
    pub fn hop_setup(&self, distance: f64, snr_db: Option<f64>) -> mcrelay_core::Result<HopSetup> {
        Ok(HopSetup {
            channel: ChannelSpec::new(self.env(), distance, self.channel.receiver_radius, self.reception())?,
            scheme: self.scheme(MoleculeType::TypeI),
            timing: self.timing(),
            isi_length: self.channel.isi_length,
            snr_db,
            seed: self.seed,
        })
    }

    pub fn relay_base(&self) -> RelayBase {
        RelayBase {
            d_tx_rx: self.link.distance,
            relay_radius: self.channel.relay_radius,
            receiver_radius: self.channel.receiver_radius,
            params: self.channel_params(),
            scheme_i: self.scheme(MoleculeType::TypeI),
            scheme_ii: self.scheme(MoleculeType::TypeII),
            calibration: self.calibration_options(),
            concentration_candidates: self
                .relay
                .recalibrate_concentration
                .then(|| self.concentration.candidates.clone()),
            n_symbols: self.link.n_symbols,
            n_training: self.relay.n_training,
            af_gain: self.relay.af_gain,
            af_grid_resolution: self.relay.af_grid_resolution,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_parameters() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.channel.diffusion_coefficient, 100.0);
        assert_eq!(c.channel.receiver_radius, 4.0);
        assert_eq!(c.channel.symbol_duration, 0.15);
        assert_eq!(c.channel.sampling_duration, 0.15);
        assert_eq!(c.link.n_symbols, 50_000);
        assert_eq!(c.link.distance, 6.0);
        assert_eq!(c.concentration.snr().values(), vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]);
        assert_eq!(c.relay.snr().values(), vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dotted_keys_and_round_trip() {
        let c = ExperimentConfig::parse("seed = 9\nlink.distance = 3.5\n[relay]\nsnr_step = 2.5\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.link.distance, 3.5);
        assert_eq!(c.relay.snr_step, 2.5);
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn field_level_errors() {
        assert!(ExperimentConfig::parse("link.bogus = 1").is_err());
        let mut c = ExperimentConfig::default();
        c.channel.dimension = 2;
        c.link.levels = 3;
        c.relay.scheme1_locations = vec![7.0];
        let errs = c.validate().unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"channel.dimension"));
        assert!(fields.contains(&"link.levels"));
        assert!(fields.contains(&"relay.scheme1_locations"));
    }

    #[test]
    fn manifest_section_is_accepted_on_reload() {
        let c = ExperimentConfig::parse("seed = 3\n[manifest]\nschema_version = 1\n").unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.manifest.is_some());
        assert!(!c.to_toml().contains("manifest"));
    }
}
