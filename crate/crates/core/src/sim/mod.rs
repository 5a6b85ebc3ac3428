//! Epoch-by-epoch simulation of tracking, sensing management and downlink.
//!
//! Per epoch: time update, predicted angle variance, sensing decision, and
//! (only in traffic-OFF epochs) receive-AP selection, measurement synthesis
//! and the EKF measurement update. Traffic-ON epochs evaluate the downlink
//! for every enabled method. The true user then moves one step.
//!
//! Two comparison arms can run alongside the proposed one on the same truth,
//! RCS and noise realizations: random receive-AP selection, and the
//! conventional power split that senses every epoch at half power.

mod measurement;
mod rng;
mod summary;

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use measurement::{draw_rcs, propagate_truth, SensingSetup};
pub use rng::{RngStream, StreamId};
pub use summary::{ArmSummary, ScenarioSummary};

use crate::comms::{
    conventional_baseline, perfect_angle_bound, proposed_link, AngleMode, LinkResult, MethodTag, PhaseMode,
};
use crate::crb::WaveformSpec;
use crate::error::{Error, Result};
use crate::model::{SystemConfig, TargetTruth};
use crate::sensing::{
    candidate_subsets, decide_action, select_for_predicted, ApSelection, SensingAction, SensingPolicy,
};
use crate::tracking::{angle_estimate_and_variance, predict, update, MotionModel, StateEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TrafficModel {
    /// Each epoch is independently ON with this probability.
    Bernoulli { on_probability: f64 },
    /// Half-open `[start, end)` epoch intervals during which traffic is ON.
    Intervals { on: Vec<(usize, usize)> },
}

impl Default for TrafficModel {
    fn default() -> Self {
        TrafficModel::Bernoulli { on_probability: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrafficState {
    On,
    Off,
}

/// Which comparison arms run next to the proposed method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Arms {
    pub random: bool,
    pub conventional: bool,
    pub perfect: bool,
}

impl Default for Arms {
    fn default() -> Self {
        Self { random: true, conventional: true, perfect: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemConfig,
    pub policy: SensingPolicy,
    pub initial_truth: TargetTruth,
    pub initial_estimate: StateEstimate,
    pub num_epochs: usize,
    pub traffic: TrafficModel,
    pub seed: u64,
    pub arms: Arms,
    pub phase_mode: PhaseMode,
    pub angle_mode: AngleMode,
}

impl Scenario {
    /// The reference scenario: user starting at `(0, 40)` at 25 m/s,
    /// `P_0 = diag(100, 1)`, 200 epochs, two receive APs per sensing epoch.
    pub fn reference(seed: u64) -> Self {
        let system = SystemConfig::reference();
        let policy = SensingPolicy::from_config(&system, 2, false);
        let initial_truth = TargetTruth::new(0.0, 25.0);
        Self {
            policy,
            initial_estimate: StateEstimate::new(
                Vector2::new(initial_truth.position_x, initial_truth.velocity_x),
                Matrix2::new(100.0, 0.0, 0.0, 1.0),
            ),
            initial_truth,
            system,
            num_epochs: 200,
            traffic: TrafficModel::default(),
            seed,
            arms: Arms::default(),
            phase_mode: PhaseMode::Compensated,
            angle_mode: AngleMode::PerAp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.policy.validate(self.system.num_aps)?;
        let eligible = self.system.num_aps - usize::from(self.policy.exclude_tx_ap);
        if self.policy.subset_cardinality > eligible {
            return Err(Error::InvalidConfig {
                field: "subset_cardinality",
                reason: format!("{} exceeds the {eligible} eligible receive APs", self.policy.subset_cardinality),
            });
        }
        if self.num_epochs < 1 {
            return Err(Error::InvalidConfig { field: "num_epochs", reason: "must be >= 1".into() });
        }
        let t = &self.initial_truth;
        if !(t.position_x.is_finite() && t.velocity_x.is_finite()) {
            return Err(Error::InvalidConfig { field: "initial_truth", reason: "must be finite".into() });
        }
        let p = &self.initial_estimate.covariance;
        if !(p.iter().all(|v| v.is_finite()) && p[(0, 1)] == p[(1, 0)] && p.symmetric_eigenvalues().min() >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "initial_covariance",
                reason: "must be symmetric positive semidefinite".into(),
            });
        }
        match &self.traffic {
            TrafficModel::Bernoulli { on_probability } => {
                if !(0.0..=1.0).contains(on_probability) {
                    return Err(Error::InvalidConfig {
                        field: "traffic.on_probability",
                        reason: format!("must lie in [0, 1], got {on_probability}"),
                    });
                }
            }
            TrafficModel::Intervals { on } => {
                for &(start, end) in on {
                    if start > end || end > self.num_epochs {
                        return Err(Error::InvalidConfig {
                            field: "traffic.on",
                            reason: format!("interval [{start}, {end}) outside [0, {})", self.num_epochs),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// State of a sensing-managed arm after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEpoch {
    pub action: SensingAction,
    pub selection: ApSelection,
    /// Angle variance of the time-updated estimate, before any sensing.
    pub predicted_angle_variance: f64,
    /// Angle variance after this epoch's measurement update, if any.
    pub posterior_angle_variance: f64,
    pub prior: StateEstimate,
    pub estimate: StateEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub truth: TargetTruth,
    pub traffic_state: TrafficState,
    pub proposed: ArmEpoch,
    pub random: Option<ArmEpoch>,
    pub conventional: Option<ArmEpoch>,
    /// Downlink results; empty in traffic-OFF epochs.
    pub rates: BTreeMap<MethodTag, LinkResult>,
    pub rcs_draws: Vec<f64>,
}

impl EpochRecord {
    pub fn action(&self) -> SensingAction {
        self.proposed.action
    }

    pub fn selection(&self) -> &ApSelection {
        &self.proposed.selection
    }

    pub fn predicted_angle_variance(&self) -> f64 {
        self.proposed.predicted_angle_variance
    }

    pub fn estimate(&self) -> &StateEstimate {
        &self.proposed.estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selector {
    Optimal,
    Random,
}

/// Stateful epoch loop for one scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    setup: SensingSetup,
    model: MotionModel,
    epoch: usize,
    truth: TargetTruth,
    proposed: StateEstimate,
    random: Option<StateEstimate>,
    conventional: Option<StateEstimate>,
    rcs: RngStream,
    noise: RngStream,
    traffic: RngStream,
    selection: RngStream,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let cfg = &scenario.system;
        let waveform = WaveformSpec::for_config(cfg, &mut RngStream::new(scenario.seed, StreamId::Symbols).at(0));
        let setup = SensingSetup::new(cfg, &waveform)?;
        let seed = scenario.seed;
        let mut initial = scenario.initial_estimate;
        initial.epoch = 0;
        initial.last_sensed_epoch = 0;
        Ok(Self {
            setup,
            model: MotionModel::from_config(cfg),
            epoch: 0,
            truth: scenario.initial_truth,
            proposed: initial,
            random: scenario.arms.random.then_some(initial),
            conventional: scenario.arms.conventional.then_some(initial),
            rcs: RngStream::new(seed, StreamId::Rcs),
            noise: RngStream::new(seed, StreamId::Measurement),
            traffic: RngStream::new(seed, StreamId::Traffic),
            selection: RngStream::new(seed, StreamId::Selection),
            scenario,
        })
    }

    /// Scales synthesized measurement noise; 0 makes measurements exact.
    pub fn set_noise_scale(&mut self, scale: f64) {
        self.setup.noise_scale = scale;
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.scenario.num_epochs
    }

    fn traffic_state(&self, epoch: usize) -> TrafficState {
        let on = match &self.scenario.traffic {
            TrafficModel::Bernoulli { on_probability } => {
                self.traffic.at(epoch as u64).random::<f64>() < *on_probability
            }
            TrafficModel::Intervals { on } => on.iter().any(|&(s, e)| (s..e).contains(&epoch)),
        };
        if on {
            TrafficState::On
        } else {
            TrafficState::Off
        }
    }

    /// Time update into the current epoch. The initial estimate already
    /// refers to epoch 0.
    fn time_update(&self, est: &StateEstimate) -> StateEstimate {
        if self.epoch == 0 {
            *est
        } else {
            predict(est, &self.model)
        }
    }

    fn managed_epoch(
        &self,
        est: &StateEstimate,
        traffic: TrafficState,
        rcs: &[f64],
        selector: Selector,
    ) -> Result<ArmEpoch> {
        let cfg = &self.scenario.system;
        let policy = &self.scenario.policy;
        let prior = self.time_update(est);
        let predicted_angle_variance = angle_estimate_and_variance(cfg, &prior).1;
        let action = match traffic {
            TrafficState::On => SensingAction::NoSensing,
            TrafficState::Off => decide_action(predicted_angle_variance, policy),
        };
        if action == SensingAction::NoSensing {
            return Ok(ArmEpoch {
                action,
                selection: ApSelection::empty(cfg.num_aps),
                predicted_angle_variance,
                posterior_angle_variance: predicted_angle_variance,
                prior,
                estimate: prior,
            });
        }

        let selection = match selector {
            Selector::Optimal => {
                let believed = TargetTruth::new(prior.position(), prior.velocity());
                let mean_rcs = vec![cfg.mean_rcs; cfg.num_aps];
                let all: Vec<usize> = (0..cfg.num_aps).collect();
                let crbs = self.setup.crb_blocks(prior.position(), &believed, &mean_rcs, 1.0, &all)?;
                select_for_predicted(cfg, &prior, policy, &crbs)?
            }
            Selector::Random => {
                let candidates = candidate_subsets(cfg, policy);
                let mut rng = self.selection.at(self.epoch as u64);
                let &mask = candidates.choose(&mut rng).ok_or(Error::InfeasibleSelection {
                    cardinality: policy.subset_cardinality,
                    available: cfg.num_aps - usize::from(policy.exclude_tx_ap),
                })?;
                ApSelection::from_bitmask(cfg.num_aps, mask)
            }
        };
        let estimate = self.sense(&prior, &selection, rcs, 1.0)?;
        Ok(ArmEpoch {
            action,
            selection,
            predicted_angle_variance,
            posterior_angle_variance: angle_estimate_and_variance(cfg, &estimate).1,
            prior,
            estimate,
        })
    }

    fn sense(
        &self,
        prior: &StateEstimate,
        selection: &ApSelection,
        rcs: &[f64],
        power_fraction: f64,
    ) -> Result<StateEstimate> {
        let mut rng = self.noise.at(self.epoch as u64);
        let meas = self.setup.synthesize_measurement(&self.truth, prior, selection, rcs, power_fraction, &mut rng)?;
        update(prior, &meas, &self.scenario.system)
    }

    /// Conventional arm: senses every epoch with every eligible AP at half power.
    fn conventional_epoch(&self, est: &StateEstimate, rcs: &[f64]) -> Result<ArmEpoch> {
        let cfg = &self.scenario.system;
        let prior = self.time_update(est);
        let selection = if self.scenario.policy.exclude_tx_ap {
            ApSelection::from_indices(cfg.num_aps, &(0..cfg.num_aps).filter(|&l| l != cfg.tx_ap).collect::<Vec<_>>())
        } else {
            ApSelection::full(cfg.num_aps)
        };
        let estimate = self.sense(&prior, &selection, rcs, 0.5)?;
        Ok(ArmEpoch {
            action: SensingAction::Sensing,
            selection,
            predicted_angle_variance: angle_estimate_and_variance(cfg, &prior).1,
            posterior_angle_variance: angle_estimate_and_variance(cfg, &estimate).1,
            prior,
            estimate,
        })
    }

    /// Advances one epoch and returns its record.
    pub fn step(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::Precondition("scenario already finished".into()));
        }
        let cfg = &self.scenario.system;
        let epoch = self.epoch;
        let traffic_state = self.traffic_state(epoch);
        let rcs_draws = draw_rcs(&mut self.rcs.at(epoch as u64), cfg.mean_rcs, cfg.num_aps)?;

        let proposed = self.managed_epoch(&self.proposed, traffic_state, &rcs_draws, Selector::Optimal)?;
        let random = match &self.random {
            Some(est) => Some(self.managed_epoch(est, traffic_state, &rcs_draws, Selector::Random)?),
            None => None,
        };
        let conventional = match &self.conventional {
            Some(est) => Some(self.conventional_epoch(est, &rcs_draws)?),
            None => None,
        };

        let mut rates = BTreeMap::new();
        if traffic_state == TrafficState::On {
            let (phase, angle) = (self.scenario.phase_mode, self.scenario.angle_mode);
            rates.insert(MethodTag::Proposed, proposed_link(cfg, &proposed.estimate, &self.truth, phase, angle)?);
            if let Some(conv) = &conventional {
                // The data beam is formed before this epoch's echo is processed.
                rates.insert(
                    MethodTag::Conventional,
                    conventional_baseline(cfg, &conv.prior, &self.truth, phase, angle)?,
                );
            }
            if self.scenario.arms.perfect {
                rates.insert(MethodTag::Perfect, perfect_angle_bound(cfg, &self.truth, phase)?);
            }
        }

        let record = EpochRecord {
            epoch,
            truth: self.truth,
            traffic_state,
            proposed: proposed.clone(),
            random: random.clone(),
            conventional: conventional.clone(),
            rates,
            rcs_draws,
        };

        self.proposed = proposed.estimate;
        if let Some(r) = random {
            self.random = Some(r.estimate);
        }
        if let Some(c) = conventional {
            self.conventional = Some(c.estimate);
        }
        self.truth = propagate_truth(&self.truth, cfg);
        self.epoch += 1;
        Ok(record)
    }

    pub fn run(mut self) -> Result<Vec<EpochRecord>> {
        let mut records = Vec::with_capacity(self.scenario.num_epochs);
        while !self.is_finished() {
            records.push(self.step()?);
        }
        Ok(records)
    }
}

/// Runs every epoch of `scenario`. Either all records or an error.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<EpochRecord>> {
    Simulator::new(scenario.clone())?.run()
}
