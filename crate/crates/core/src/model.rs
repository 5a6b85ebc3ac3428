//! System configuration, AP geometry and line-of-sight channel primitives.
//!
//! APs sit on the x-axis; the user moves along the horizontal line
//! `y = corridor_offset`. Azimuths are measured from array broadside, so a
//! target directly abeam of an AP is at 0 rad.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used for wavelength and delay/range conversions.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Symbol alphabet of the sensing waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymbolAlphabet {
    #[default]
    Qpsk,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    /// Element spacing in meters.
    pub antenna_spacing: f64,
    pub carrier_frequency: f64,
    /// Always `SPEED_OF_LIGHT / carrier_frequency`; checked by [`SystemConfig::validate`].
    pub wavelength: f64,
    pub subcarrier_spacing: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub cp_length: usize,
    /// Per-AP transmit power budget in watts.
    pub tx_power: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    pub ap_positions: Vec<(f64, f64)>,
    /// Fixed vertical distance of the user's track from the AP line.
    pub corridor_offset: f64,
    /// Swerling-I mean radar cross section in m².
    pub mean_rcs: f64,
    pub epoch_duration: f64,
    /// Acceleration noise standard deviation (m/s²) of the filter's motion model.
    pub process_noise_std: f64,
    /// Sensing trigger threshold on the predicted angle error variance (rad²).
    pub variance_threshold: f64,
    pub outage_probability: f64,
    pub tx_ap: usize,
    pub symbol_alphabet: SymbolAlphabet,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SystemConfig {
    /// The reference deployment: four 4-antenna APs at `(500/L)·l` along a
    /// road, 30 GHz carrier, 1 W transmit power and -75 dBm noise.
    pub fn reference() -> Self {
        let num_aps = 4;
        let carrier_frequency = 30e9;
        let wavelength = SPEED_OF_LIGHT / carrier_frequency;
        Self {
            num_aps,
            antennas_per_ap: 4,
            antenna_spacing: wavelength / 2.0,
            carrier_frequency,
            wavelength,
            subcarrier_spacing: 120e3,
            num_subcarriers: 256,
            num_symbols: 14,
            cp_length: 18,
            tx_power: 1.0,
            noise_power: dbm_to_watts(-75.0),
            ap_positions: uniform_ap_positions(num_aps),
            corridor_offset: 40.0,
            mean_rcs: 5.0,
            epoch_duration: 0.01,
            process_noise_std: 0.1,
            variance_threshold: (3.0f64).to_radians().powi(2),
            outage_probability: 0.05,
            tx_ap: 0,
            symbol_alphabet: SymbolAlphabet::Qpsk,
        }
    }

    /// Sets the carrier and keeps the wavelength consistent with it.
    pub fn with_carrier_frequency(mut self, carrier_frequency: f64) -> Self {
        self.carrier_frequency = carrier_frequency;
        self.wavelength = SPEED_OF_LIGHT / carrier_frequency;
        self
    }

    /// OFDM symbol duration including the cyclic prefix.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing + self.cp_length as f64 / (self.num_subcarriers as f64 * self.subcarrier_spacing)
    }

    /// Largest delay covered by the cyclic prefix.
    pub fn cp_duration(&self) -> f64 {
        self.cp_length as f64 / (self.num_subcarriers as f64 * self.subcarrier_spacing)
    }

    pub fn ap_x(&self, ap: usize) -> f64 {
        self.ap_positions[ap].0
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig { field, reason: reason.into() })
        }
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be finite and > 0, got {v}"));
            }
            Ok(())
        }

        if self.num_aps < 2 {
            return bad("num_aps", format!("must be >= 2, got {}", self.num_aps));
        }
        if self.num_aps > 20 {
            return bad("num_aps", format!("exhaustive AP selection supports at most 20 APs, got {}", self.num_aps));
        }
        if self.antennas_per_ap < 1 {
            return bad("antennas_per_ap", "must be >= 1");
        }
        if self.num_subcarriers < 2 {
            return bad("num_subcarriers", format!("must be >= 2, got {}", self.num_subcarriers));
        }
        if self.num_symbols < 1 {
            return bad("num_symbols", "must be >= 1");
        }
        positive("antenna_spacing", self.antenna_spacing)?;
        positive("carrier_frequency", self.carrier_frequency)?;
        positive("wavelength", self.wavelength)?;
        let expected = SPEED_OF_LIGHT / self.carrier_frequency;
        if ((self.wavelength - expected) / expected).abs() > 1e-12 {
            return bad(
                "wavelength",
                format!("must equal c/carrier_frequency = {expected:e}, got {:e}", self.wavelength),
            );
        }
        positive("subcarrier_spacing", self.subcarrier_spacing)?;
        positive("tx_power", self.tx_power)?;
        positive("noise_power", self.noise_power)?;
        positive("corridor_offset", self.corridor_offset)?;
        positive("mean_rcs", self.mean_rcs)?;
        positive("epoch_duration", self.epoch_duration)?;
        positive("variance_threshold", self.variance_threshold)?;
        if !(self.process_noise_std.is_finite() && self.process_noise_std >= 0.0) {
            return bad("process_noise_std", "must be finite and >= 0");
        }
        if !(self.outage_probability > 0.0 && self.outage_probability < 1.0) {
            return bad("outage_probability", format!("must lie in (0, 1), got {}", self.outage_probability));
        }
        if self.ap_positions.len() != self.num_aps {
            return bad(
                "ap_positions",
                format!("expected {} positions, got {}", self.num_aps, self.ap_positions.len()),
            );
        }
        for &(x, y) in &self.ap_positions {
            if !x.is_finite() {
                return bad("ap_positions", "x coordinates must be finite");
            }
            if y != 0.0 {
                return bad("ap_positions", format!("APs must lie on the line y = 0, got y = {y}"));
            }
        }
        if self.tx_ap >= self.num_aps {
            return bad("tx_ap", format!("index {} out of range for {} APs", self.tx_ap, self.num_aps));
        }
        Ok(())
    }
}

/// AP positions `((500/L)·l, 0)` for `l = 1..=L`.
pub fn uniform_ap_positions(num_aps: usize) -> Vec<(f64, f64)> {
    let step = 500.0 / num_aps as f64;
    (1..=num_aps).map(|l| (step * l as f64, 0.0)).collect()
}

/// True user state on the horizontal track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub position_x: f64,
    pub velocity_x: f64,
}

impl TargetTruth {
    pub fn new(position_x: f64, velocity_x: f64) -> Self {
        Self { position_x, velocity_x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApGeometry {
    pub range: f64,
    pub azimuth: f64,
    pub radial_velocity: f64,
    pub path_gain: f64,
    /// LOS phase `-2πR/λ` wrapped to `[0, 2π)`.
    pub phase: f64,
}

/// Free-space gain `(λ / 4πR)²`.
pub fn path_gain(wavelength: f64, range: f64) -> f64 {
    (wavelength / (4.0 * PI * range)).powi(2)
}

/// Range, azimuth and radial velocity of a user at `(position_x, p_y)` moving
/// at `velocity_x`, as seen from AP `ap`.
pub fn range_and_radial_velocity(cfg: &SystemConfig, ap: usize, position_x: f64, velocity_x: f64) -> (f64, f64) {
    let dx = position_x - cfg.ap_x(ap);
    let range = dx.hypot(cfg.corridor_offset);
    (range, dx * velocity_x / range)
}

pub fn geometry_for_ap(cfg: &SystemConfig, truth: &TargetTruth, ap: usize) -> Result<ApGeometry> {
    if !(truth.position_x.is_finite() && truth.velocity_x.is_finite()) {
        return Err(Error::NonFinite("target truth"));
    }
    if ap >= cfg.num_aps {
        return Err(Error::Precondition(format!("AP index {ap} out of range for {} APs", cfg.num_aps)));
    }
    let dx = truth.position_x - cfg.ap_x(ap);
    let (range, radial_velocity) = range_and_radial_velocity(cfg, ap, truth.position_x, truth.velocity_x);
    Ok(ApGeometry {
        range,
        azimuth: (dx / cfg.corridor_offset).atan(),
        radial_velocity,
        path_gain: path_gain(cfg.wavelength, range),
        phase: (-2.0 * PI * range / cfg.wavelength).rem_euclid(2.0 * PI),
    })
}

/// Azimuth from AP `ap` toward a user at `position_x`.
pub fn azimuth_from_ap(cfg: &SystemConfig, ap: usize, position_x: f64) -> f64 {
    ((position_x - cfg.ap_x(ap)) / cfg.corridor_offset).atan()
}

fn spatial_phase_step(cfg: &SystemConfig, azimuth: f64) -> f64 {
    2.0 * PI / cfg.wavelength * cfg.antenna_spacing * azimuth.sin()
}

/// ULA steering vector `exp(j·2π/λ·n·d·sinθ)`, `n = 0..N`.
pub fn array_response(cfg: &SystemConfig, azimuth: f64) -> DVector<Complex64> {
    let step = spatial_phase_step(cfg, azimuth);
    DVector::from_fn(cfg.antennas_per_ap, |n, _| Complex64::from_polar(1.0, step * n as f64))
}

/// Derivative of [`array_response`] with respect to the azimuth.
pub fn array_response_derivative(cfg: &SystemConfig, azimuth: f64) -> DVector<Complex64> {
    let step = spatial_phase_step(cfg, azimuth);
    let k = 2.0 * PI / cfg.wavelength * cfg.antenna_spacing * azimuth.cos();
    DVector::from_fn(cfg.antennas_per_ap, |n, _| {
        let n = n as f64;
        Complex64::new(0.0, k * n) * Complex64::from_polar(1.0, step * n)
    })
}

/// Angle of a user at `position_x` seen from the origin, `arctan(p_x / p_y)`.
pub fn angle_from_position(cfg: &SystemConfig, position_x: f64) -> f64 {
    (position_x / cfg.corridor_offset).atan()
}

/// `d/dp_x arctan(p_x / p_y) = p_y / (p_x² + p_y²)`.
pub fn angle_from_position_derivative(cfg: &SystemConfig, position_x: f64) -> f64 {
    let py = cfg.corridor_offset;
    py / (position_x * position_x + py * py)
}
