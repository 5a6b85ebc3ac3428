//! Downlink link evaluation with predictive maximum-ratio precoding.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{angle_from_position, array_response, azimuth_from_ap, geometry_for_ap, SystemConfig, TargetTruth};
use crate::tracking::StateEstimate;

/// How the per-AP LOS phase enters the downlink channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Phases are known to the phase-synchronized CPU and removed.
    #[default]
    Compensated,
    /// Each AP's channel carries `exp(-j2πR_l/λ)`.
    Geometric,
}

/// Steering angle used by each AP's precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// AP `l` steers toward `arctan((p̂_x - x_l)/p_y)`.
    #[default]
    PerAp,
    /// Every AP steers toward `arctan(p̂_x/p_y)`.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Proposed,
    Conventional,
    Perfect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub per_ap: Vec<DVector<Complex64>>,
    pub total_power_per_ap: f64,
}

impl Precoder {
    /// Steers AP `l` toward `angles[l]` with power `power_per_ap`.
    pub fn steering(cfg: &SystemConfig, angles: &[f64], power_per_ap: f64) -> Self {
        let amp = Complex64::new((power_per_ap / cfg.antennas_per_ap as f64).sqrt(), 0.0);
        Self {
            per_ap: angles.iter().map(|&theta| array_response(cfg, theta) * amp).collect(),
            total_power_per_ap: power_per_ap,
        }
    }

    pub fn stacked(&self) -> DVector<Complex64> {
        let len = self.per_ap.iter().map(|w| w.len()).sum();
        DVector::from_iterator(len, self.per_ap.iter().flat_map(|w| w.iter().copied()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let f = Complex64::new(factor, 0.0);
        Self {
            per_ap: self.per_ap.iter().map(|w| w * f).collect(),
            total_power_per_ap: self.total_power_per_ap * factor * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub snr: f64,
    /// bits per channel use
    pub rate: f64,
    pub method_tag: MethodTag,
}

impl LinkResult {
    pub fn from_snr(snr: f64, method_tag: MethodTag) -> Self {
        Self { snr, rate: (1.0 + snr).log2(), method_tag }
    }
}

/// Stacked channel `[h_1; …; h_L]`, `h_l = e^{jφ_l} √β_l a(θ_l)`, from true geometry.
pub fn build_channel(cfg: &SystemConfig, truth: &TargetTruth, phase_mode: PhaseMode) -> Result<DVector<Complex64>> {
    let n = cfg.antennas_per_ap;
    let mut h = DVector::zeros(cfg.num_aps * n);
    for l in 0..cfg.num_aps {
        let g = geometry_for_ap(cfg, truth, l)?;
        let phase = match phase_mode {
            PhaseMode::Compensated => 0.0,
            PhaseMode::Geometric => g.phase,
        };
        let block = array_response(cfg, g.azimuth) * Complex64::from_polar(g.path_gain.sqrt(), phase);
        h.rows_mut(l * n, n).copy_from(&block);
    }
    Ok(h)
}

/// Per-AP steering angles toward a user believed to be at `position_x`.
pub fn steering_angles(cfg: &SystemConfig, position_x: f64, angle_mode: AngleMode) -> Vec<f64> {
    (0..cfg.num_aps)
        .map(|l| match angle_mode {
            AngleMode::PerAp => azimuth_from_ap(cfg, l, position_x),
            AngleMode::Global => angle_from_position(cfg, position_x),
        })
        .collect()
}

/// MR precoder pointed at the tracked position, using `power_fraction` of
/// each AP's budget.
pub fn predictive_precoder(
    cfg: &SystemConfig,
    est: &StateEstimate,
    power_fraction: f64,
    angle_mode: AngleMode,
) -> Result<Precoder> {
    if !(power_fraction > 0.0 && power_fraction <= 1.0) {
        return Err(Error::Precondition(format!("power fraction must lie in (0, 1], got {power_fraction}")));
    }
    if !est.position().is_finite() {
        return Err(Error::NonFinite("position estimate"));
    }
    let angles = steering_angles(cfg, est.position(), angle_mode);
    Ok(Precoder::steering(cfg, &angles, power_fraction * cfg.tx_power))
}

pub fn evaluate_link(
    cfg: &SystemConfig,
    channel: &DVector<Complex64>,
    precoder: &Precoder,
    method_tag: MethodTag,
) -> Result<LinkResult> {
    let w = precoder.stacked();
    if w.len() != channel.len() {
        return Err(Error::DimensionMismatch { expected: channel.len(), actual: w.len() });
    }
    Ok(LinkResult::from_snr(channel.dotc(&w).norm_sqr() / cfg.noise_power, method_tag))
}

/// Conventional power split: half of `ρ_d` for data, steered by an estimate
/// that was refreshed by sensing every epoch.
pub fn conventional_baseline(
    cfg: &SystemConfig,
    est: &StateEstimate,
    truth: &TargetTruth,
    phase_mode: PhaseMode,
    angle_mode: AngleMode,
) -> Result<LinkResult> {
    let channel = build_channel(cfg, truth, phase_mode)?;
    evaluate_link(cfg, &channel, &predictive_precoder(cfg, est, 0.5, angle_mode)?, MethodTag::Conventional)
}

/// Full-power MR precoding toward the true per-AP angles.
pub fn perfect_angle_bound(cfg: &SystemConfig, truth: &TargetTruth, phase_mode: PhaseMode) -> Result<LinkResult> {
    let channel = build_channel(cfg, truth, phase_mode)?;
    let angles = steering_angles(cfg, truth.position_x, AngleMode::PerAp);
    evaluate_link(cfg, &channel, &Precoder::steering(cfg, &angles, cfg.tx_power), MethodTag::Perfect)
}

pub fn proposed_link(
    cfg: &SystemConfig,
    est: &StateEstimate,
    truth: &TargetTruth,
    phase_mode: PhaseMode,
    angle_mode: AngleMode,
) -> Result<LinkResult> {
    let channel = build_channel(cfg, truth, phase_mode)?;
    evaluate_link(cfg, &channel, &predictive_precoder(cfg, est, 1.0, angle_mode)?, MethodTag::Proposed)
}
