//! Extended Kalman filter over the constant-velocity state `[p_x, v_x]`.
//!
//! Time updates run every epoch. Measurement updates run only in sensing
//! epochs and use stacked (range, radial velocity) pairs from the selected
//! receive APs.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{angle_from_position, angle_from_position_derivative, range_and_radial_velocity, SystemConfig};
use crate::sensing::ApSelection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    /// `[p_x, v_x]`
    pub mean: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    pub epoch: u64,
    pub last_sensed_epoch: u64,
}

impl StateEstimate {
    pub fn new(mean: Vector2<f64>, covariance: Matrix2<f64>) -> Self {
        Self { mean, covariance, epoch: 0, last_sensed_epoch: 0 }
    }

    pub fn position(&self) -> f64 {
        self.mean[0]
    }

    pub fn velocity(&self) -> f64 {
        self.mean[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub transition: Matrix2<f64>,
    pub process_noise: Matrix2<f64>,
}

impl MotionModel {
    /// Constant velocity with white acceleration noise of standard deviation `accel_std`.
    pub fn constant_velocity(dt: f64, accel_std: f64) -> Self {
        let q = accel_std * accel_std;
        Self {
            transition: Matrix2::new(1.0, dt, 0.0, 1.0),
            process_noise: Matrix2::new(dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q),
        }
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self::constant_velocity(cfg.epoch_duration, cfg.process_noise_std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Alternating (range, radial velocity) per selected AP, ascending AP order.
    pub values: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub selection: ApSelection,
}

impl MeasurementSet {
    pub fn new(values: DVector<f64>, covariance: DMatrix<f64>, selection: ApSelection) -> Result<Self> {
        let expected = 2 * selection.cardinality();
        if expected == 0 {
            return Err(Error::EmptySelection);
        }
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: values.len() });
        }
        if covariance.shape() != (expected, expected) {
            return Err(Error::DimensionMismatch { expected, actual: covariance.nrows() });
        }
        Ok(Self { values, covariance, selection })
    }
}

fn symmetrize(p: &Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

pub fn predict(est: &StateEstimate, model: &MotionModel) -> StateEstimate {
    let f = &model.transition;
    StateEstimate {
        mean: f * est.mean,
        covariance: symmetrize(&(f * est.covariance * f.transpose() + model.process_noise)),
        epoch: est.epoch + 1,
        last_sensed_epoch: est.last_sensed_epoch,
    }
}

pub fn measurement_model(
    cfg: &SystemConfig,
    state_mean: &Vector2<f64>,
    selection: &ApSelection,
) -> Result<DVector<f64>> {
    let aps = selection.indices();
    if aps.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut h = DVector::zeros(2 * aps.len());
    for (slot, &ap) in aps.iter().enumerate() {
        let (range, radial_velocity) = range_and_radial_velocity(cfg, ap, state_mean[0], state_mean[1]);
        h[2 * slot] = range;
        h[2 * slot + 1] = radial_velocity;
    }
    Ok(h)
}

pub fn measurement_jacobian(
    cfg: &SystemConfig,
    state_mean: &Vector2<f64>,
    selection: &ApSelection,
) -> Result<DMatrix<f64>> {
    let aps = selection.indices();
    if aps.is_empty() {
        return Err(Error::EmptySelection);
    }
    let (px, vx) = (state_mean[0], state_mean[1]);
    let py = cfg.corridor_offset;
    let mut jac = DMatrix::zeros(2 * aps.len(), 2);
    for (slot, &ap) in aps.iter().enumerate() {
        let dx = px - cfg.ap_x(ap);
        let range = dx.hypot(py);
        if !(range > 0.0) {
            return Err(Error::ZeroRange { ap });
        }
        jac[(2 * slot, 0)] = dx / range;
        jac[(2 * slot + 1, 0)] = vx * py * py / range.powi(3);
        jac[(2 * slot + 1, 1)] = dx / range;
    }
    Ok(jac)
}

/// Kalman gain and posterior covariance for a linearized measurement with
/// Jacobian `jac` and noise covariance `noise`. Does not need the measured
/// values.
pub(crate) fn gain_and_posterior(
    prior: &Matrix2<f64>,
    jac: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, Matrix2<f64>)> {
    let p = DMatrix::from_column_slice(2, 2, prior.as_slice());
    let pht = &p * jac.transpose();
    let s = jac * &pht + noise;
    let s = (&s + s.transpose()) * 0.5;
    let chol = s.cholesky()?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T.
    let gain = chol.solve(&pht.transpose()).transpose();
    let ikh = DMatrix::identity(2, 2) - &gain * jac;
    let post = ikh * p;
    let post = Matrix2::new(post[(0, 0)], post[(0, 1)], post[(1, 0)], post[(1, 1)]);
    Some((gain, symmetrize(&post)))
}

pub fn update(est: &StateEstimate, meas: &MeasurementSet, cfg: &SystemConfig) -> Result<StateEstimate> {
    let predicted = measurement_model(cfg, &est.mean, &meas.selection)?;
    let jac = measurement_jacobian(cfg, &est.mean, &meas.selection)?;
    if meas.values.len() != predicted.len() {
        return Err(Error::DimensionMismatch { expected: predicted.len(), actual: meas.values.len() });
    }
    let (gain, covariance) = gain_and_posterior(&est.covariance, &jac, &meas.covariance)
        .ok_or(Error::SingularInnovation { epoch: est.epoch, selection: meas.selection.bitmask() })?;
    let innovation = &meas.values - predicted;
    let correction = gain * innovation;
    Ok(StateEstimate {
        mean: est.mean + Vector2::new(correction[0], correction[1]),
        covariance,
        epoch: est.epoch,
        last_sensed_epoch: est.epoch,
    })
}

/// Angle toward the user and its first-order error variance.
pub fn angle_estimate_and_variance(cfg: &SystemConfig, est: &StateEstimate) -> (f64, f64) {
    let px = est.position();
    let slope = angle_from_position_derivative(cfg, px);
    (angle_from_position(cfg, px), est.covariance[(0, 0)] * slope * slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SystemConfig {
        SystemConfig::reference()
    }

    #[test]
    fn predict_examples() {
        let model = MotionModel::constant_velocity(0.01, 0.1);
        let est = StateEstimate::new(Vector2::new(0.0, 25.0), Matrix2::new(100.0, 0.0, 0.0, 1.0));
        let next = predict(&est, &model);
        assert_relative_eq!(next.mean[0], 0.25);
        assert_eq!(next.mean[1], 25.0);
        assert_eq!(next.epoch, 1);
        assert_eq!(next.last_sensed_epoch, 0);
        assert_relative_eq!(model.process_noise[(0, 0)], 2.5e-11, max_relative = 1e-12);
        assert_relative_eq!(model.process_noise[(0, 1)], 5e-9, max_relative = 1e-12);
        assert_relative_eq!(model.process_noise[(1, 1)], 1e-6, max_relative = 1e-12);
        assert_relative_eq!(next.covariance[(0, 0)], 100.0001 + 2.5e-11, max_relative = 1e-14);
        assert_relative_eq!(next.covariance[(0, 1)], 0.01 + 5e-9, max_relative = 1e-14);
        assert_relative_eq!(next.covariance[(1, 1)], 1.000001, max_relative = 1e-14);

        let still = MotionModel::constant_velocity(0.01, 0.0);
        let zero = StateEstimate::new(Vector2::new(1.0, 2.0), Matrix2::zeros());
        assert_eq!(predict(&zero, &still).covariance, Matrix2::zeros());
    }

    #[test]
    fn measurement_model_examples() {
        let cfg = cfg();
        let h = measurement_model(&cfg, &Vector2::new(250.0, 25.0), &ApSelection::from_indices(4, &[1])).unwrap();
        assert_eq!(h.as_slice(), &[40.0, 0.0]);
        let h = measurement_model(&cfg, &Vector2::new(165.0, 25.0), &ApSelection::from_indices(4, &[0])).unwrap();
        assert_relative_eq!(h[0], 56.5685, max_relative = 1e-5);
        assert_relative_eq!(h[1], 17.6777, max_relative = 1e-5);
        let h = measurement_model(&cfg, &Vector2::new(165.0, 25.0), &ApSelection::from_indices(4, &[2, 0])).unwrap();
        assert_eq!(h.len(), 4);
        assert_relative_eq!(h[0], 56.5685, max_relative = 1e-5);
        assert!(h[3] < 0.0);
        assert_eq!(measurement_model(&cfg, &Vector2::zeros(), &ApSelection::empty(4)), Err(Error::EmptySelection));
    }

    #[test]
    fn jacobian_abeam() {
        let cfg = cfg();
        let j = measurement_jacobian(&cfg, &Vector2::new(125.0, 25.0), &ApSelection::from_indices(4, &[0])).unwrap();
        assert_eq!(j[(0, 0)], 0.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert_relative_eq!(j[(1, 0)], 25.0 / 40.0);
        assert_eq!(j[(1, 1)], 0.0);
        let j = measurement_jacobian(&cfg, &Vector2::new(10.0, 0.0), &ApSelection::full(4)).unwrap();
        for r in 0..4 {
            assert_eq!(j[(2 * r + 1, 0)], 0.0);
        }
    }

    #[test]
    fn zero_gain_limit() {
        let cfg = cfg();
        let sel = ApSelection::from_indices(4, &[0, 1]);
        let est = StateEstimate::new(Vector2::new(3.0, 24.0), Matrix2::new(100.0, 0.0, 0.0, 1.0));
        let values = measurement_model(&cfg, &Vector2::new(0.0, 25.0), &sel).unwrap();
        let meas = MeasurementSet::new(values, DMatrix::identity(4, 4) * 1e12, sel).unwrap();
        let post = update(&est, &meas, &cfg).unwrap();
        assert!(((post.mean - est.mean).norm() / est.mean.norm()) < 1e-6);
        assert!(((post.covariance - est.covariance).norm() / est.covariance.norm()) < 1e-6);
    }

    #[test]
    fn perfect_prior_is_unchanged() {
        let cfg = cfg();
        let sel = ApSelection::from_indices(4, &[2]);
        let est = StateEstimate::new(Vector2::new(3.0, 24.0), Matrix2::zeros());
        let meas = MeasurementSet::new(DVector::from_vec(vec![400.0, -20.0]), DMatrix::identity(2, 2), sel).unwrap();
        let post = update(&est, &meas, &cfg).unwrap();
        assert_eq!(post.mean, est.mean);
        assert_eq!(post.covariance, Matrix2::zeros());
    }

    #[test]
    fn singular_innovation_is_reported() {
        let cfg = cfg();
        let sel = ApSelection::from_indices(4, &[1]);
        let mut est = StateEstimate::new(Vector2::new(3.0, 24.0), Matrix2::zeros());
        est.epoch = 7;
        let meas = MeasurementSet::new(DVector::from_vec(vec![1.0, 1.0]), DMatrix::zeros(2, 2), sel).unwrap();
        assert_eq!(update(&est, &meas, &cfg), Err(Error::SingularInnovation { epoch: 7, selection: 0b10 }));
    }

    #[test]
    fn posterior_matches_information_form() {
        let cfg = cfg();
        let sel = ApSelection::from_indices(4, &[0]);
        let prior = Matrix2::new(4.0, 0.5, 0.5, 2.0);
        let est = StateEstimate::new(Vector2::new(125.0, 25.0), prior);
        let r = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7]);
        let meas = MeasurementSet::new(DVector::from_vec(vec![40.1, 0.2]), r.clone(), sel.clone()).unwrap();
        let post = update(&est, &meas, &cfg).unwrap();

        let h = measurement_jacobian(&cfg, &est.mean, &sel).unwrap();
        let p_inv = DMatrix::from_column_slice(2, 2, prior.try_inverse().unwrap().as_slice());
        let info = p_inv + h.transpose() * r.try_inverse().unwrap() * &h;
        let expected = info.try_inverse().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((post.covariance[(i, j)] - expected[(i, j)]).abs() < 1e-9);
            }
        }
        assert_eq!(post.last_sensed_epoch, post.epoch);
    }

    #[test]
    fn angle_variance_examples() {
        let cfg = cfg();
        let est = StateEstimate::new(Vector2::new(0.0, 25.0), Matrix2::new(1.0, 0.0, 0.0, 1.0));
        let (angle, var) = angle_estimate_and_variance(&cfg, &est);
        assert_eq!(angle, 0.0);
        assert_relative_eq!(var, 6.25e-4);
        let certain = StateEstimate::new(Vector2::new(10.0, 25.0), Matrix2::zeros());
        assert_eq!(angle_estimate_and_variance(&cfg, &certain).1, 0.0);
        let far = StateEstimate::new(Vector2::new(1e7, 25.0), Matrix2::identity());
        assert!(angle_estimate_and_variance(&cfg, &far).1 < 1e-20);
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_difference(px in -200f64..700.0, vx in -40f64..40.0) {
            let cfg = cfg();
            let sel = ApSelection::full(4);
            let x = Vector2::new(px, vx);
            let jac = measurement_jacobian(&cfg, &x, &sel).unwrap();
            let h = 1e-5;
            for k in 0..2 {
                let mut dx = Vector2::zeros();
                dx[k] = h;
                let fd = (measurement_model(&cfg, &(x + dx), &sel).unwrap() - measurement_model(&cfg, &(x - dx), &sel).unwrap()) / (2.0 * h);
                for r in 0..8 {
                    prop_assert!((fd[r] - jac[(r, k)]).abs() < 1e-5);
                }
            }
        }

        #[test]
        fn update_never_inflates_covariance(
            px in -100f64..600.0, p00 in 0.01f64..200.0, p11 in 0.01f64..10.0, rho in -0.9f64..0.9,
            mask in 1u64..16, rr in 0.01f64..50.0, rv in 0.01f64..50.0,
        ) {
            let cfg = cfg();
            let sel = ApSelection::from_bitmask(4, mask);
            let p01 = rho * (p00 * p11).sqrt();
            let est = StateEstimate::new(Vector2::new(px, 25.0), Matrix2::new(p00, p01, p01, p11));
            let k = sel.cardinality();
            let mut r = DMatrix::zeros(2 * k, 2 * k);
            for i in 0..k {
                r[(2 * i, 2 * i)] = rr;
                r[(2 * i + 1, 2 * i + 1)] = rv;
            }
            let z = measurement_model(&cfg, &est.mean, &sel).unwrap();
            let post = update(&est, &MeasurementSet::new(z, r, sel).unwrap(), &cfg).unwrap();
            let diff = est.covariance - post.covariance;
            let tol = 1e-9 * est.covariance.trace();
            let eig = diff.symmetric_eigenvalues();
            prop_assert!(eig.min() >= -tol);
            let post_eig = post.covariance.symmetric_eigenvalues();
            prop_assert!(post_eig.min() >= -1e-9 * post.covariance.trace());
            prop_assert_eq!(post.covariance, post.covariance.transpose());
        }
    }
}
