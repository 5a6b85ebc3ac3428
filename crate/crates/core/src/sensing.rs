//! Sensing management: when to sense, and which APs receive the echo.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crb::{assemble_measurement_covariance, CrbBlock};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::tracking::{
    angle_estimate_and_variance, gain_and_posterior, measurement_jacobian, predict, MotionModel, StateEstimate,
};

/// Receive-AP inclusion vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApSelection {
    included: Vec<bool>,
}

impl ApSelection {
    pub fn empty(num_aps: usize) -> Self {
        Self { included: vec![false; num_aps] }
    }

    pub fn full(num_aps: usize) -> Self {
        Self { included: vec![true; num_aps] }
    }

    pub fn from_indices(num_aps: usize, indices: &[usize]) -> Self {
        let mut sel = Self::empty(num_aps);
        for &i in indices {
            sel.included[i] = true;
        }
        sel
    }

    /// Bit `l` set means AP `l` is included.
    pub fn from_bitmask(num_aps: usize, mask: u64) -> Self {
        Self { included: (0..num_aps).map(|l| mask >> l & 1 == 1).collect() }
    }

    pub fn bitmask(&self) -> u64 {
        self.included.iter().enumerate().filter(|(_, &on)| on).fold(0, |m, (l, _)| m | 1 << l)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.included.iter().enumerate().filter_map(|(l, &on)| on.then_some(l)).collect()
    }

    pub fn cardinality(&self) -> usize {
        self.included.iter().filter(|&&on| on).count()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinality() == 0
    }

    pub fn contains(&self, ap: usize) -> bool {
        self.included.get(ap).copied().unwrap_or(false)
    }

    pub fn num_aps(&self) -> usize {
        self.included.len()
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingPolicy {
    /// rad²
    pub variance_threshold: f64,
    pub outage_probability: f64,
    /// Required number of receive APs; 0 leaves the size free.
    pub subset_cardinality: usize,
    pub exclude_tx_ap: bool,
}

impl SensingPolicy {
    pub fn from_config(cfg: &SystemConfig, subset_cardinality: usize, exclude_tx_ap: bool) -> Self {
        Self {
            variance_threshold: cfg.variance_threshold,
            outage_probability: cfg.outage_probability,
            subset_cardinality,
            exclude_tx_ap,
        }
    }

    pub fn validate(&self, num_aps: usize) -> Result<()> {
        if !(self.variance_threshold.is_finite() && self.variance_threshold > 0.0) {
            return Err(Error::InvalidConfig { field: "variance_threshold", reason: "must be finite and > 0".into() });
        }
        if !(self.outage_probability > 0.0 && self.outage_probability < 1.0) {
            return Err(Error::InvalidConfig { field: "outage_probability", reason: "must lie in (0, 1)".into() });
        }
        if self.subset_cardinality > num_aps {
            return Err(Error::InvalidConfig {
                field: "subset_cardinality",
                reason: format!("{} exceeds the number of APs ({num_aps})", self.subset_cardinality),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensingAction {
    Sensing,
    NoSensing,
}

/// Half-power beamwidth of a broadside ULA, `0.886·λ/(N·d)`.
pub fn hpbw(cfg: &SystemConfig) -> Result<f64> {
    if cfg.antennas_per_ap < 2 {
        return Err(Error::Precondition("half-power beamwidth needs at least 2 antennas".into()));
    }
    Ok(0.886 * cfg.wavelength / (cfg.antennas_per_ap as f64 * cfg.antenna_spacing))
}

/// Largest angle-error variance that keeps `P(|error| > hpbw) < epsilon`
/// for a zero-mean Gaussian error.
pub fn variance_threshold_from_hpbw(hpbw: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Precondition(format!("outage probability must lie in (0, 1), got {epsilon}")));
    }
    let quantile = Normal::standard().inverse_cdf(1.0 - epsilon / 2.0);
    Ok((hpbw / quantile).powi(2))
}

/// Sense iff the predicted variance strictly exceeds the threshold.
pub fn decide_action(predicted_variance: f64, policy: &SensingPolicy) -> SensingAction {
    if predicted_variance > policy.variance_threshold {
        SensingAction::Sensing
    } else {
        SensingAction::NoSensing
    }
}

/// Angle-error variance after one predict step and, for a nonempty
/// selection, a hypothetical measurement update with noise from `crbs`.
///
/// `crbs` pairs AP indices with bounds evaluated at the predicted state.
pub fn predict_variance_for_selection(
    cfg: &SystemConfig,
    est: &StateEstimate,
    model: &MotionModel,
    selection: &ApSelection,
    crbs: &[(usize, CrbBlock)],
) -> Result<f64> {
    posterior_angle_variance(cfg, &predict(est, model), selection, crbs)
}

/// Angle-error variance of an already predicted estimate after a
/// hypothetical update. The covariance update does not need measured values.
pub fn posterior_angle_variance(
    cfg: &SystemConfig,
    predicted: &StateEstimate,
    selection: &ApSelection,
    crbs: &[(usize, CrbBlock)],
) -> Result<f64> {
    let mut predicted = *predicted;
    if !selection.is_empty() {
        let jac = measurement_jacobian(cfg, &predicted.mean, selection)?;
        let noise = assemble_measurement_covariance(crbs, selection, false)?;
        let (_, posterior) = gain_and_posterior(&predicted.covariance, &jac, &noise)
            .ok_or(Error::SingularInnovation { epoch: predicted.epoch, selection: selection.bitmask() })?;
        predicted.covariance = posterior;
    }
    Ok(angle_estimate_and_variance(cfg, &predicted).1)
}

/// Bitmasks of every receive set allowed by `policy`, ordered by
/// (cardinality, bitmask).
pub fn candidate_subsets(cfg: &SystemConfig, policy: &SensingPolicy) -> Vec<u64> {
    let mut masks: Vec<u64> = (1u64..1 << cfg.num_aps)
        .filter(|m| !(policy.exclude_tx_ap && m >> cfg.tx_ap & 1 == 1))
        .filter(|m| policy.subset_cardinality == 0 || m.count_ones() as usize == policy.subset_cardinality)
        .collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
}

/// Exhaustive search for the receive set minimizing the predicted angle
/// variance. Ties go to the smaller set, then the lower bitmask.
pub fn select_rx_aps(
    cfg: &SystemConfig,
    est: &StateEstimate,
    model: &MotionModel,
    policy: &SensingPolicy,
    crbs: &[(usize, CrbBlock)],
) -> Result<ApSelection> {
    select_for_predicted(cfg, &predict(est, model), policy, crbs)
}

/// [`select_rx_aps`] for an estimate that has already been time-updated.
pub fn select_for_predicted(
    cfg: &SystemConfig,
    predicted: &StateEstimate,
    policy: &SensingPolicy,
    crbs: &[(usize, CrbBlock)],
) -> Result<ApSelection> {
    if cfg.num_aps > 20 {
        return Err(Error::Precondition(format!("exhaustive search over {} APs is not supported", cfg.num_aps)));
    }
    let candidates = candidate_subsets(cfg, policy);
    if candidates.is_empty() {
        let available = cfg.num_aps - usize::from(policy.exclude_tx_ap);
        return Err(Error::InfeasibleSelection { cardinality: policy.subset_cardinality, available });
    }
    let mut best: Option<(f64, u64)> = None;
    for mask in candidates {
        let sel = ApSelection::from_bitmask(cfg.num_aps, mask);
        let var = posterior_angle_variance(cfg, predicted, &sel, crbs)?;
        if best.is_none_or(|(v, _)| var < v) {
            best = Some((var, mask));
        }
    }
    let (_, mask) = best.expect("nonempty candidate list");
    Ok(ApSelection::from_bitmask(cfg.num_aps, mask))
}
