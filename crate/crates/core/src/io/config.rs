//! TOML scenario files.
//!
//! Every key is optional; missing keys take the reference values. Example:
//!
//! ```toml
//! num_epochs = 200
//!
//! [system]
//! carrier_frequency = 60e9
//! noise_power_dbm = -75.0
//!
//! [target]
//! start_x = 0.0
//! velocity = 25.0
//!
//! [sensing]
//! threshold_std_deg = 3.0
//! subset_cardinality = 2
//!
//! [traffic]
//! mode = "intervals"
//! on = [[20, 40], [90, 120]]
//!
//! [arms]
//! random = false
//! ```

use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comms::{AngleMode, PhaseMode};
use crate::error::{Error, Result};
use crate::model::{dbm_to_watts, uniform_ap_positions, SymbolAlphabet, SystemConfig, TargetTruth, SPEED_OF_LIGHT};
use crate::sensing::{hpbw, variance_threshold_from_hpbw, SensingPolicy};
use crate::sim::{Arms, Scenario, TrafficModel};
use crate::tracking::StateEstimate;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_aps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antennas_per_ap: Option<usize>,
    /// Meters; half a wavelength when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antenna_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcarrier_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_subcarriers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_symbols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_length: Option<usize>,
    /// Watts per AP.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power_dbm: Option<f64>,
    /// Watts; alternative to `noise_power_dbm`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power: Option<f64>,
    /// `[x, y]` pairs; evenly spaced over 500 m when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_positions: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corridor_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rcs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process_noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outage_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_ap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol_alphabet: Option<SymbolAlphabet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub start_x: f64,
    pub velocity: f64,
    /// Added to the true initial state to form the initial estimate.
    pub estimate_offset: [f64; 2],
    pub initial_covariance: [[f64; 2]; 2],
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            start_x: 0.0,
            velocity: 25.0,
            estimate_offset: [0.0, 0.0],
            initial_covariance: [[100.0, 0.0], [0.0, 1.0]],
        }
    }
}

/// At most one of the three threshold keys may be given; the default is a
/// 3 degree standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    /// rad²
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_std_deg: Option<f64>,
    /// Derive the threshold from the array beamwidth and outage probability.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub threshold_from_hpbw: bool,
    pub subset_cardinality: usize,
    pub exclude_tx_ap: bool,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            variance_threshold: None,
            threshold_std_deg: None,
            threshold_from_hpbw: false,
            subset_cardinality: 2,
            exclude_tx_ap: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsSection {
    pub phase_mode: PhaseMode,
    pub angle_mode: AngleMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub num_epochs: usize,
    pub seed: u64,
    pub system: SystemSection,
    pub target: TargetSection,
    pub sensing: SensingSection,
    pub traffic: TrafficModel,
    pub comms: CommsSection,
    pub arms: Arms,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            num_epochs: 200,
            seed: 0,
            system: SystemSection::default(),
            target: TargetSection::default(),
            sensing: SensingSection::default(),
            traffic: TrafficModel::default(),
            comms: CommsSection::default(),
            arms: Arms::default(),
        }
    }
}

fn both_given(field: &'static str, a: &str, b: &str) -> Error {
    Error::InvalidConfig { field, reason: format!("give either `{a}` or `{b}`, not both") }
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn to_system_config(&self) -> Result<SystemConfig> {
        let s = &self.system;
        let d = SystemConfig::reference();
        let carrier_frequency = s.carrier_frequency.unwrap_or(d.carrier_frequency);
        let wavelength = SPEED_OF_LIGHT / carrier_frequency;
        let num_aps = s.num_aps.unwrap_or(d.num_aps);
        let noise_power = match (s.noise_power, s.noise_power_dbm) {
            (Some(_), Some(_)) => return Err(both_given("noise_power", "noise_power", "noise_power_dbm")),
            (Some(w), None) => w,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => d.noise_power,
        };
        let mut cfg = SystemConfig {
            num_aps,
            antennas_per_ap: s.antennas_per_ap.unwrap_or(d.antennas_per_ap),
            antenna_spacing: s.antenna_spacing.unwrap_or(wavelength / 2.0),
            carrier_frequency,
            wavelength,
            subcarrier_spacing: s.subcarrier_spacing.unwrap_or(d.subcarrier_spacing),
            num_subcarriers: s.num_subcarriers.unwrap_or(d.num_subcarriers),
            num_symbols: s.num_symbols.unwrap_or(d.num_symbols),
            cp_length: s.cp_length.unwrap_or(d.cp_length),
            tx_power: s.tx_power.unwrap_or(d.tx_power),
            noise_power,
            ap_positions: match &s.ap_positions {
                Some(p) => p.iter().map(|&[x, y]| (x, y)).collect(),
                None => uniform_ap_positions(num_aps),
            },
            corridor_offset: s.corridor_offset.unwrap_or(d.corridor_offset),
            mean_rcs: s.mean_rcs.unwrap_or(d.mean_rcs),
            epoch_duration: s.epoch_duration.unwrap_or(d.epoch_duration),
            process_noise_std: s.process_noise_std.unwrap_or(d.process_noise_std),
            variance_threshold: d.variance_threshold,
            outage_probability: s.outage_probability.unwrap_or(d.outage_probability),
            tx_ap: s.tx_ap.unwrap_or(d.tx_ap),
            symbol_alphabet: s.symbol_alphabet.unwrap_or(d.symbol_alphabet),
        };
        cfg.variance_threshold = self.variance_threshold(&cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn variance_threshold(&self, cfg: &SystemConfig) -> Result<f64> {
        let s = &self.sensing;
        match (s.variance_threshold, s.threshold_std_deg, s.threshold_from_hpbw) {
            (Some(v), None, false) => Ok(v),
            (None, Some(deg), false) => Ok(deg.to_radians().powi(2)),
            (None, None, true) => {
                if !(cfg.outage_probability > 0.0 && cfg.outage_probability < 1.0) {
                    return Err(Error::InvalidConfig {
                        field: "outage_probability",
                        reason: format!("must lie in (0, 1), got {}", cfg.outage_probability),
                    });
                }
                variance_threshold_from_hpbw(hpbw(cfg)?, cfg.outage_probability)
            }
            (None, None, false) => Ok(cfg.variance_threshold),
            _ => Err(Error::InvalidConfig {
                field: "variance_threshold",
                reason: "give at most one of `variance_threshold`, `threshold_std_deg`, `threshold_from_hpbw`".into(),
            }),
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let system = self.to_system_config()?;
        let t = &self.target;
        let policy = SensingPolicy::from_config(&system, self.sensing.subset_cardinality, self.sensing.exclude_tx_ap);
        let initial_truth = TargetTruth::new(t.start_x, t.velocity);
        let [[p00, p01], [p10, p11]] = t.initial_covariance;
        let scenario = Scenario {
            initial_estimate: StateEstimate::new(
                Vector2::new(t.start_x + t.estimate_offset[0], t.velocity + t.estimate_offset[1]),
                Matrix2::new(p00, p01, p10, p11),
            ),
            policy,
            initial_truth,
            system,
            num_epochs: self.num_epochs,
            traffic: self.traffic.clone(),
            seed: self.seed,
            arms: self.arms,
            phase_mode: self.comms.phase_mode,
            angle_mode: self.comms.angle_mode,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Fully explicit file describing `scenario`; loading it gives back an
    /// equal scenario.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let c = &scenario.system;
        let est = &scenario.initial_estimate;
        let truth = &scenario.initial_truth;
        let p = &est.covariance;
        Self {
            num_epochs: scenario.num_epochs,
            seed: scenario.seed,
            system: SystemSection {
                num_aps: Some(c.num_aps),
                antennas_per_ap: Some(c.antennas_per_ap),
                antenna_spacing: Some(c.antenna_spacing),
                carrier_frequency: Some(c.carrier_frequency),
                subcarrier_spacing: Some(c.subcarrier_spacing),
                num_subcarriers: Some(c.num_subcarriers),
                num_symbols: Some(c.num_symbols),
                cp_length: Some(c.cp_length),
                tx_power: Some(c.tx_power),
                noise_power_dbm: None,
                noise_power: Some(c.noise_power),
                ap_positions: Some(c.ap_positions.iter().map(|&(x, y)| [x, y]).collect()),
                corridor_offset: Some(c.corridor_offset),
                mean_rcs: Some(c.mean_rcs),
                epoch_duration: Some(c.epoch_duration),
                process_noise_std: Some(c.process_noise_std),
                outage_probability: Some(c.outage_probability),
                tx_ap: Some(c.tx_ap),
                symbol_alphabet: Some(c.symbol_alphabet),
            },
            target: TargetSection {
                start_x: truth.position_x,
                velocity: truth.velocity_x,
                estimate_offset: [est.position() - truth.position_x, est.velocity() - truth.velocity_x],
                initial_covariance: [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]],
            },
            sensing: SensingSection {
                variance_threshold: Some(scenario.policy.variance_threshold),
                threshold_std_deg: None,
                threshold_from_hpbw: false,
                subset_cardinality: scenario.policy.subset_cardinality,
                exclude_tx_ap: scenario.policy.exclude_tx_ap,
            },
            traffic: scenario.traffic.clone(),
            comms: CommsSection { phase_mode: scenario.phase_mode, angle_mode: scenario.angle_mode },
            arms: scenario.arms,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioFile::parse(&text, &path.display().to_string())?.to_scenario()
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, ScenarioFile::from_scenario(scenario).to_toml()).map_err(|e| Error::io(path, e))
}

/// Canonical JSON of everything that shapes a run except the seed.
pub fn canonical_config(scenario: &Scenario) -> String {
    let mut file = ScenarioFile::from_scenario(scenario);
    file.seed = 0;
    serde_json::to_string(&file).expect("scenario files always serialize")
}

/// Hex SHA-256 of [`canonical_config`].
pub fn config_digest(scenario: &Scenario) -> String {
    digest_of(&canonical_config(scenario))
}

pub fn digest_of(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn parse(text: &str) -> Result<Scenario> {
        ScenarioFile::parse(text, "test.toml")?.to_scenario()
    }

    #[test]
    fn empty_file_is_reference_scenario() {
        assert_eq!(parse("").unwrap(), Scenario::reference(0));
    }

    #[test]
    fn carrier_override_moves_wavelength() {
        let s = parse("[system]\ncarrier_frequency = 60e9\n").unwrap();
        assert_relative_eq!(s.system.wavelength, 0.005, max_relative = 1e-15);
        assert_relative_eq!(s.system.antenna_spacing, 0.0025, max_relative = 1e-15);
    }

    #[test]
    fn negative_power_names_field() {
        match parse("[system]\ntx_power = -1.0\n") {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "tx_power"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse("num_epochs = 10\n[system]\nnum_aps = \"four\"\n").unwrap_err();
        assert!(err.is_config_error());
        let msg = err.to_string();
        assert!(msg.contains("test.toml") && msg.contains("line 3") && msg.contains("num_aps"), "{msg}");
        assert!(parse("[system]\nnum_ap = 4\n").unwrap_err().to_string().contains("num_ap"));
    }

    #[test]
    fn noise_in_dbm_or_watts() {
        let s = parse("[system]\nnoise_power_dbm = -75.0\n").unwrap();
        assert_eq!(s.system.noise_power, Scenario::reference(0).system.noise_power);
        let s = parse("[system]\nnoise_power = 1e-12\n").unwrap();
        assert_eq!(s.system.noise_power, 1e-12);
        assert!(parse("[system]\nnoise_power = 1e-12\nnoise_power_dbm = -90.0\n").is_err());
    }

    #[test]
    fn threshold_sources() {
        let s = parse("[sensing]\nthreshold_from_hpbw = true\n").unwrap();
        assert_relative_eq!(s.policy.variance_threshold, (0.443f64 / 1.959963984540054).powi(2), max_relative = 1e-9);
        let s = parse("[sensing]\nthreshold_std_deg = 2.0\n").unwrap();
        assert_relative_eq!(s.policy.variance_threshold, 2f64.to_radians().powi(2));
        assert!(parse("[sensing]\nthreshold_std_deg = 2.0\nvariance_threshold = 1e-3\n").is_err());
    }

    #[test]
    fn traffic_modes() {
        let s = parse("[traffic]\nmode = \"intervals\"\non = [[0, 10], [50, 60]]\n").unwrap();
        assert_eq!(s.traffic, TrafficModel::Intervals { on: vec![(0, 10), (50, 60)] });
        let s = parse("[traffic]\nmode = \"bernoulli\"\non_probability = 0.5\n").unwrap();
        assert_eq!(s.traffic, TrafficModel::Bernoulli { on_probability: 0.5 });
        assert!(parse("[traffic]\nmode = \"intervals\"\non = [[190, 201]]\n").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        let mut original = Scenario::reference(9);
        original.system = original.system.with_carrier_frequency(28e9);
        original.system.antenna_spacing = original.system.wavelength / 2.0;
        original.traffic = TrafficModel::Intervals { on: vec![(3, 7)] };
        original.arms.random = false;
        for scenario in [Scenario::reference(0), original] {
            save_scenario(&scenario, &path).unwrap();
            assert_eq!(load_scenario(&path).unwrap(), scenario);
        }
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = Scenario::reference(0);
        let d0 = config_digest(&base);
        assert_eq!(d0.len(), 64);
        assert_eq!(d0, config_digest(&Scenario::reference(0)));
        assert_eq!(d0, config_digest(&Scenario::reference(5)));
        let mut changed = Vec::new();
        let mut s = base.clone();
        s.system.mean_rcs = 6.0;
        changed.push(s);
        let mut s = base.clone();
        s.num_epochs = 199;
        changed.push(s);
        let mut s = base.clone();
        s.policy.exclude_tx_ap = true;
        changed.push(s);
        let mut s = base.clone();
        s.arms.perfect = false;
        changed.push(s);
        let mut s = base.clone();
        s.initial_estimate.covariance[(1, 1)] = 2.0;
        changed.push(s);
        for s in changed {
            assert_ne!(config_digest(&s), d0);
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_scenario(Path::new("/nonexistent/x.toml")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
