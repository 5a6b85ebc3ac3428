//! Aggregate statistics over a finished run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArmEpoch, EpochRecord, TrafficState};
use crate::comms::MethodTag;
use crate::sensing::SensingAction;

/// Epoch from which sensing is expected to have become sparse.
pub const STEADY_STATE_EPOCH: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub sensing_epochs: usize,
    /// Fraction of epochs at or after [`STEADY_STATE_EPOCH`] that sensed.
    pub steady_state_sensing_fraction: f64,
    /// First epoch whose predicted angle variance is at or below the threshold.
    pub threshold_crossing_epoch: Option<usize>,
}

impl ArmSummary {
    fn from_arm<'a>(epochs: impl Iterator<Item = (usize, &'a ArmEpoch)>, threshold: f64) -> Self {
        let mut sensing_epochs = 0;
        let mut late = 0;
        let mut late_sensing = 0;
        let mut threshold_crossing_epoch = None;
        for (epoch, arm) in epochs {
            let sensed = arm.action == SensingAction::Sensing;
            sensing_epochs += usize::from(sensed);
            if epoch >= STEADY_STATE_EPOCH {
                late += 1;
                late_sensing += usize::from(sensed);
            }
            if threshold_crossing_epoch.is_none() && arm.predicted_angle_variance <= threshold {
                threshold_crossing_epoch = Some(epoch);
            }
        }
        let steady_state_sensing_fraction = if late == 0 { 0.0 } else { late_sensing as f64 / late as f64 };
        Self { sensing_epochs, steady_state_sensing_fraction, threshold_crossing_epoch }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub num_epochs: usize,
    pub on_epochs: usize,
    pub variance_threshold: f64,
    pub proposed: ArmSummary,
    pub random: Option<ArmSummary>,
    pub conventional: Option<ArmSummary>,
    /// Mean rate over traffic-ON epochs, bit/s/Hz.
    pub mean_rates: BTreeMap<MethodTag, f64>,
    /// Fraction of ON epochs where the proposed rate is at least the conventional one.
    pub proposed_not_worse_fraction: Option<f64>,
}

impl ScenarioSummary {
    pub fn from_records(records: &[EpochRecord], variance_threshold: f64) -> Self {
        let proposed = ArmSummary::from_arm(records.iter().map(|r| (r.epoch, &r.proposed)), variance_threshold);
        let random = records
            .iter()
            .map(|r| r.random.as_ref().map(|a| (r.epoch, a)))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .map(|v| ArmSummary::from_arm(v.into_iter(), variance_threshold));
        let conventional = records
            .iter()
            .map(|r| r.conventional.as_ref().map(|a| (r.epoch, a)))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .map(|v| ArmSummary::from_arm(v.into_iter(), variance_threshold));

        let on: Vec<&EpochRecord> = records.iter().filter(|r| r.traffic_state == TrafficState::On).collect();
        let mut sums: BTreeMap<MethodTag, (f64, usize)> = BTreeMap::new();
        for r in &on {
            for (tag, link) in &r.rates {
                let e = sums.entry(*tag).or_default();
                e.0 += link.rate;
                e.1 += 1;
            }
        }
        let mean_rates = sums.into_iter().map(|(tag, (s, n))| (tag, s / n as f64)).collect();

        let pairs: Vec<(f64, f64)> = on
            .iter()
            .filter_map(|r| {
                Some((r.rates.get(&MethodTag::Proposed)?.rate, r.rates.get(&MethodTag::Conventional)?.rate))
            })
            .collect();
        let proposed_not_worse_fraction =
            (!pairs.is_empty()).then(|| pairs.iter().filter(|(p, c)| p >= c).count() as f64 / pairs.len() as f64);

        Self {
            num_epochs: records.len(),
            on_epochs: on.len(),
            variance_threshold,
            proposed,
            random,
            conventional,
            mean_rates,
            proposed_not_worse_fraction,
        }
    }
}
