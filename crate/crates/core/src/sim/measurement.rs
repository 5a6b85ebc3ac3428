//! Truth propagation, Swerling-I RCS draws and CRB-distributed measurement
//! synthesis.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::crb::{
    crb_angle_with_energy, sensing_gain, transform_to_range_velocity, CrbBlock, DelayDopplerInfo, WaveformSpec,
};
use crate::error::{Error, Result};
use crate::model::{array_response, azimuth_from_ap, geometry_for_ap, SystemConfig, TargetTruth};
use crate::sensing::ApSelection;
use crate::tracking::{measurement_model, MeasurementSet, StateEstimate};

/// Noiseless constant-velocity step of the true user state.
pub fn propagate_truth(truth: &TargetTruth, cfg: &SystemConfig) -> TargetTruth {
    TargetTruth { position_x: truth.position_x + truth.velocity_x * cfg.epoch_duration, velocity_x: truth.velocity_x }
}

/// One exponential RCS draw per AP with mean `mean_rcs`.
pub fn draw_rcs<R: Rng + ?Sized>(rng: &mut R, mean_rcs: f64, num_aps: usize) -> Result<Vec<f64>> {
    let invalid =
        || Error::InvalidConfig { field: "mean_rcs", reason: format!("must be finite and > 0, got {mean_rcs}") };
    if !(mean_rcs > 0.0 && mean_rcs.is_finite()) {
        return Err(invalid());
    }
    let exp = Exp::new(1.0 / mean_rcs).map_err(|_| invalid())?;
    Ok((0..num_aps).map(|_| exp.sample(rng)).collect())
}

/// Everything needed to turn a geometry into per-AP measurement bounds.
#[derive(Debug, Clone)]
pub struct SensingSetup {
    pub cfg: SystemConfig,
    pub info: DelayDopplerInfo,
    /// Multiplies the synthesized noise; 1 in normal runs.
    pub noise_scale: f64,
}

impl SensingSetup {
    /// The waveform information is evaluated at zero delay and Doppler; it
    /// does not depend on either.
    pub fn new(cfg: &SystemConfig, waveform: &WaveformSpec) -> Result<Self> {
        Ok(Self { cfg: cfg.clone(), info: DelayDopplerInfo::at(waveform, cfg, 0.0, 0.0)?, noise_scale: 1.0 })
    }

    /// Sensing precoder of the Tx AP, steered toward `beam_position`.
    pub fn tx_precoder(&self, beam_position: f64, power_fraction: f64) -> DVector<Complex64> {
        let cfg = &self.cfg;
        let theta = azimuth_from_ap(cfg, cfg.tx_ap, beam_position);
        let amp = (power_fraction * cfg.tx_power / cfg.antennas_per_ap as f64).sqrt();
        array_response(cfg, theta) * Complex64::new(amp, 0.0)
    }

    /// Per-AP bounds for a user at `geometry` illuminated by a beam pointed at
    /// `beam_position`. `rcs[l]` is the cross section seen by AP `l`.
    pub fn crb_blocks(
        &self,
        beam_position: f64,
        geometry: &TargetTruth,
        rcs: &[f64],
        power_fraction: f64,
        aps: &[usize],
    ) -> Result<Vec<(usize, CrbBlock)>> {
        let cfg = &self.cfg;
        let w = self.tx_precoder(beam_position, power_fraction);
        let tx = geometry_for_ap(cfg, geometry, cfg.tx_ap)?;
        aps.iter()
            .map(|&l| {
                let rx = geometry_for_ap(cfg, geometry, l)?;
                let gain = sensing_gain(cfg, &tx, &rx, rcs[l], &w)?;
                let dd = self.info.crb(cfg, &gain, rx.azimuth)?;
                let angle = if cfg.antennas_per_ap >= 2 {
                    crb_angle_with_energy(cfg, &gain, rx.azimuth, self.info.energy)?
                } else {
                    f64::INFINITY
                };
                Ok((l, transform_to_range_velocity(&dd, angle, cfg)))
            })
            .collect()
    }

    /// Draws `z = h(truth) + v`, `v ~ N(0, blkdiag(CRB at truth))`.
    ///
    /// The returned covariance is what the filter uses: the bound evaluated
    /// at the predicted state. The echo gain is estimated jointly with delay
    /// and Doppler, so this epoch's RCS draw enters it as well. Two standard normals are drawn per
    /// AP in AP order whether or not the AP is selected, so arms with
    /// different selections share noise realizations.
    pub fn synthesize_measurement<R: Rng + ?Sized>(
        &self,
        truth: &TargetTruth,
        predicted: &StateEstimate,
        selection: &ApSelection,
        rcs: &[f64],
        power_fraction: f64,
        rng: &mut R,
    ) -> Result<MeasurementSet> {
        let cfg = &self.cfg;
        let aps = selection.indices();
        if aps.is_empty() {
            return Err(Error::EmptySelection);
        }
        let normals: Vec<[f64; 2]> =
            (0..cfg.num_aps).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();

        let beam = predicted.position();
        let true_blocks = self.crb_blocks(beam, truth, rcs, power_fraction, &aps)?;
        let believed = TargetTruth::new(predicted.position(), predicted.velocity());
        let filter_blocks = self.crb_blocks(beam, &believed, rcs, power_fraction, &aps)?;

        let mut values = measurement_model(cfg, &Vector2::new(truth.position_x, truth.velocity_x), selection)?;
        let mut covariance = DMatrix::zeros(2 * aps.len(), 2 * aps.len());
        for (slot, ((l, true_block), (_, filter_block))) in true_blocks.iter().zip(&filter_blocks).enumerate() {
            let noise = cholesky_2x2(&true_block.range_velocity)? * Vector2::new(normals[*l][0], normals[*l][1]);
            values[2 * slot] += self.noise_scale * noise[0];
            values[2 * slot + 1] += self.noise_scale * noise[1];
            covariance.view_mut((2 * slot, 2 * slot), (2, 2)).copy_from(&filter_block.range_velocity);
        }
        MeasurementSet::new(values, covariance, selection.clone())
    }
}

fn cholesky_2x2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    m.cholesky().map(|c| c.l()).ok_or(Error::RankDeficient { parameter: "range-velocity pair" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::{RngStream, StreamId};
    use approx::assert_relative_eq;

    #[test]
    fn truth_moves_at_constant_velocity() {
        let cfg = SystemConfig::reference();
        let next = propagate_truth(&TargetTruth::new(0.0, 25.0), &cfg);
        assert_relative_eq!(next.position_x, 0.25);
        assert_eq!(next.velocity_x, 25.0);
        let mut t = TargetTruth::new(0.0, 25.0);
        for _ in 0..200 {
            t = propagate_truth(&t, &cfg);
        }
        assert_relative_eq!(t.position_x, 50.0, max_relative = 1e-12);
        let parked = propagate_truth(&TargetTruth::new(3.0, 0.0), &cfg);
        assert_eq!(parked.position_x, 3.0);
    }

    #[test]
    fn swerling_draws() {
        let stream = RngStream::new(1, StreamId::Rcs);
        let mut rng = stream.at(0);
        let draws = draw_rcs(&mut rng, 5.0, 100_000).unwrap();
        assert!(draws.iter().all(|&d| d >= 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((4.9..=5.1).contains(&mean), "mean {mean}");
        assert_eq!(draw_rcs(&mut stream.at(9), 5.0, 4).unwrap(), draw_rcs(&mut stream.at(9), 5.0, 4).unwrap());
        assert!(draw_rcs(&mut rng, 0.0, 4).is_err());
    }

    fn setup() -> SensingSetup {
        let cfg = SystemConfig::reference();
        SensingSetup::new(&cfg, &WaveformSpec::all_ones(&cfg)).unwrap()
    }

    #[test]
    fn zero_noise_gives_exact_model() {
        let mut s = setup();
        s.noise_scale = 0.0;
        let truth = TargetTruth::new(12.0, 25.0);
        let est = StateEstimate::new(Vector2::new(14.0, 24.0), Matrix2::identity());
        let sel = ApSelection::from_indices(4, &[1, 3]);
        let meas = s
            .synthesize_measurement(
                &truth,
                &est,
                &sel,
                &[5.0; 4],
                1.0,
                &mut RngStream::new(0, StreamId::Measurement).at(0),
            )
            .unwrap();
        let exact = measurement_model(&s.cfg, &Vector2::new(12.0, 25.0), &sel).unwrap();
        assert_eq!(meas.values, exact);
        assert_eq!(meas.values.len(), 4);
        assert_eq!(meas.covariance.shape(), (4, 4));
        assert!(s
            .synthesize_measurement(&truth, &est, &ApSelection::empty(4), &[5.0; 4], 1.0, &mut rand::rng())
            .is_err());
    }

    #[test]
    fn half_power_doubles_bounds() {
        let s = setup();
        let truth = TargetTruth::new(0.0, 25.0);
        let full = s.crb_blocks(0.0, &truth, &[5.0; 4], 1.0, &[0, 1, 2, 3]).unwrap();
        let half = s.crb_blocks(0.0, &truth, &[5.0; 4], 0.5, &[0, 1, 2, 3]).unwrap();
        for ((_, f), (_, h)) in full.iter().zip(&half) {
            assert_relative_eq!(h.range_velocity[(0, 0)], 2.0 * f.range_velocity[(0, 0)], max_relative = 1e-12);
            assert_relative_eq!(h.range_velocity[(1, 1)], 2.0 * f.range_velocity[(1, 1)], max_relative = 1e-12);
        }
    }
}
