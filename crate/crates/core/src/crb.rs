//! Cramér-Rao bounds for bistatic OFDM sensing at one receive AP.
//!
//! The delay-Doppler bound treats the complex echo gain as a nuisance
//! parameter, which is what the orthogonal projector in the Fisher
//! information accounts for. Delay and Doppler are then mapped to range and
//! radial velocity with `A = diag(c, c/2f_c, 1)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{
    array_response, array_response_derivative, ApGeometry, SymbolAlphabet, SystemConfig, SPEED_OF_LIGHT,
};
use crate::sensing::ApSelection;

/// OFDM symbol grid `γ[a, b]`, subcarrier `a` by symbol `b`, with unit
/// average power.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSpec {
    symbols: DMatrix<Complex64>,
}

impl WaveformSpec {
    pub fn from_symbols(symbols: DMatrix<Complex64>) -> Result<Self> {
        let count = symbols.len();
        if count == 0 {
            return Err(Error::Precondition("empty symbol grid".into()));
        }
        let power = symbols.iter().map(|z| z.norm_sqr()).sum::<f64>() / count as f64;
        if (power - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("symbol grid must have unit average power, got {power}")));
        }
        Ok(Self { symbols })
    }

    pub fn all_ones(cfg: &SystemConfig) -> Self {
        Self { symbols: DMatrix::from_element(cfg.num_subcarriers, cfg.num_symbols, Complex64::new(1.0, 0.0)) }
    }

    pub fn random_qpsk<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let symbols = DMatrix::from_fn(cfg.num_subcarriers, cfg.num_symbols, |_, _| {
            let re = if rng.random::<bool>() { s } else { -s };
            let im = if rng.random::<bool>() { s } else { -s };
            Complex64::new(re, im)
        });
        Self { symbols }
    }

    /// Builds the grid configured by `cfg.symbol_alphabet`.
    pub fn for_config<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        match cfg.symbol_alphabet {
            SymbolAlphabet::Qpsk => Self::random_qpsk(cfg, rng),
            SymbolAlphabet::Ones => Self::all_ones(cfg),
        }
    }

    pub fn symbols(&self) -> &DMatrix<Complex64> {
        &self.symbols
    }

    pub fn num_subcarriers(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols.ncols()
    }

    fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        if self.num_subcarriers() != cfg.num_subcarriers {
            return Err(Error::DimensionMismatch { expected: cfg.num_subcarriers, actual: self.num_subcarriers() });
        }
        if self.num_symbols() != cfg.num_symbols {
            return Err(Error::DimensionMismatch { expected: cfg.num_symbols, actual: self.num_symbols() });
        }
        Ok(())
    }
}

/// Delayed and Doppler-shifted waveform with its analytic partial derivatives.
#[derive(Debug, Clone)]
pub struct WaveformVectors {
    pub signal: DVector<Complex64>,
    pub d_delay: DVector<Complex64>,
    pub d_doppler: DVector<Complex64>,
}

/// Time-domain samples for every symbol, stacked symbol-major
/// (`index = b·N_c + m`), together with `∂/∂τ` and `∂/∂ν`.
///
/// The derivatives are applied in the subcarrier/symbol domain before the
/// inverse DFT: `∂/∂τ` multiplies subcarrier `a` by `-j2πaΔf`, `∂/∂ν`
/// multiplies symbol `b` by `j2πbT_sym`.
pub fn waveform_with_derivatives(
    spec: &WaveformSpec,
    cfg: &SystemConfig,
    delay: f64,
    doppler: f64,
) -> Result<WaveformVectors> {
    spec.check_dims(cfg)?;
    if !(delay.is_finite() && doppler.is_finite()) {
        return Err(Error::NonFinite("delay/doppler"));
    }
    let cp = cfg.cp_duration();
    if !(0.0..cp).contains(&delay) {
        return Err(Error::Precondition(format!("delay {delay:e} s outside cyclic-prefix window [0, {cp:e})")));
    }

    let nc = cfg.num_subcarriers;
    let ns = cfg.num_symbols;
    let t_sym = cfg.symbol_duration();
    let scale = 1.0 / (nc as f64).sqrt();
    let ifft = FftPlanner::new().plan_fft_inverse(nc);

    let mut signal = DVector::zeros(nc * ns);
    let mut d_delay = DVector::zeros(nc * ns);
    let mut d_doppler = DVector::zeros(nc * ns);
    let mut buf = vec![Complex64::new(0.0, 0.0); nc];
    let mut dbuf = vec![Complex64::new(0.0, 0.0); nc];

    for b in 0..ns {
        let doppler_phase = Complex64::from_polar(scale, 2.0 * PI * b as f64 * t_sym * doppler);
        for a in 0..nc {
            let x = spec.symbols[(a, b)]
                * Complex64::from_polar(1.0, -2.0 * PI * a as f64 * cfg.subcarrier_spacing * delay);
            buf[a] = x;
            dbuf[a] = x * Complex64::new(0.0, -2.0 * PI * a as f64 * cfg.subcarrier_spacing);
        }
        ifft.process(&mut buf);
        ifft.process(&mut dbuf);
        let doppler_slope = Complex64::new(0.0, 2.0 * PI * b as f64 * t_sym);
        for m in 0..nc {
            let s = buf[m] * doppler_phase;
            signal[b * nc + m] = s;
            d_delay[b * nc + m] = dbuf[m] * doppler_phase;
            d_doppler[b * nc + m] = s * doppler_slope;
        }
    }
    Ok(WaveformVectors { signal, d_delay, d_doppler })
}

pub fn build_waveform_vector(
    spec: &WaveformSpec,
    cfg: &SystemConfig,
    delay: f64,
    doppler: f64,
) -> Result<DVector<Complex64>> {
    Ok(waveform_with_derivatives(spec, cfg, delay, doppler)?.signal)
}

/// Echo gain `ᾱ` seen at one receive AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingLinkGain {
    pub alpha_bar: Complex64,
    pub magnitude_sq: f64,
}

impl SensingLinkGain {
    pub fn new(alpha_bar: Complex64) -> Self {
        Self { alpha_bar, magnitude_sq: alpha_bar.norm_sqr() }
    }

    /// Returns the gain with its power multiplied by `factor`.
    pub fn scaled_power(&self, factor: f64) -> Self {
        Self::new(self.alpha_bar * factor.sqrt())
    }
}

/// `ᾱ_l = √ρ_d · √(β_l β_tx 2π/λ²) · σ_l · a^H(θ_tx) w_tx`.
pub fn sensing_gain(
    cfg: &SystemConfig,
    tx_geometry: &ApGeometry,
    rx_geometry: &ApGeometry,
    rcs: f64,
    tx_precoder: &DVector<Complex64>,
) -> Result<SensingLinkGain> {
    if !(rcs.is_finite() && rcs >= 0.0) {
        return Err(Error::Precondition(format!("rcs must be finite and >= 0, got {rcs}")));
    }
    if tx_precoder.len() != cfg.antennas_per_ap {
        return Err(Error::DimensionMismatch { expected: cfg.antennas_per_ap, actual: tx_precoder.len() });
    }
    let power = tx_precoder.norm_squared();
    if power > cfg.tx_power * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("precoder power {power} exceeds budget {}", cfg.tx_power)));
    }
    let beamforming = array_response(cfg, tx_geometry.azimuth).dotc(tx_precoder);
    let amplitude = cfg.tx_power.sqrt()
        * (rx_geometry.path_gain * tx_geometry.path_gain * 2.0 * PI / (cfg.wavelength * cfg.wavelength)).sqrt()
        * rcs;
    Ok(SensingLinkGain::new(beamforming * amplitude))
}

/// Gain-normalized delay-Doppler information of a waveform:
/// `J = Re{D^H (I - ςς^H/‖ς‖²) D}` with `D = [∂ς/∂τ, ∂ς/∂ν]`.
///
/// `J` does not depend on the delay or Doppler at which it is evaluated, so
/// one instance serves every AP and epoch that share the waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDopplerInfo {
    pub info: Matrix2<f64>,
    /// `‖ς‖²`.
    pub energy: f64,
}

impl DelayDopplerInfo {
    pub fn at(spec: &WaveformSpec, cfg: &SystemConfig, delay: f64, doppler: f64) -> Result<Self> {
        let v = waveform_with_derivatives(spec, cfg, delay, doppler)?;
        let energy = v.signal.norm_squared();
        if energy <= 0.0 {
            return Err(Error::Precondition("waveform has zero energy".into()));
        }
        let d = [&v.d_delay, &v.d_doppler];
        let proj = [v.signal.dotc(d[0]), v.signal.dotc(d[1])];
        let mut info = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let full = d[i].dotc(d[j]);
                info[(i, j)] = (full - proj[i].conj() * proj[j] / energy).re;
            }
        }
        info = (info + info.transpose()) * 0.5;

        let rel = 1e-12;
        let raw = [d[0].norm_squared(), d[1].norm_squared()];
        if info[(0, 0)] <= rel * raw[0] || raw[0] == 0.0 {
            return Err(Error::RankDeficient { parameter: "delay" });
        }
        if info[(1, 1)] <= rel * raw[1] || raw[1] == 0.0 {
            return Err(Error::RankDeficient { parameter: "doppler" });
        }
        if info.determinant() <= rel * info[(0, 0)] * info[(1, 1)] {
            return Err(Error::RankDeficient { parameter: "delay-doppler pair" });
        }
        Ok(Self { info, energy })
    }

    /// Delay-Doppler CRB for an echo with gain `gain` arriving at `azimuth`.
    pub fn crb(&self, cfg: &SystemConfig, gain: &SensingLinkGain, azimuth: f64) -> Result<Matrix2<f64>> {
        if !(gain.magnitude_sq > 0.0) {
            return Err(Error::Precondition("sensing gain must be nonzero".into()));
        }
        let snr = 2.0 * gain.magnitude_sq * array_response(cfg, azimuth).norm_squared() / cfg.noise_power;
        invert_spd2(&(self.info * snr)).ok_or(Error::RankDeficient { parameter: "delay-doppler pair" })
    }
}

fn invert_spd2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let off = -0.5 * (m[(0, 1)] + m[(1, 0)]) / det;
    Some(Matrix2::new(m[(1, 1)] / det, off, off, m[(0, 0)] / det))
}

pub fn crb_delay_doppler(
    spec: &WaveformSpec,
    cfg: &SystemConfig,
    gain: &SensingLinkGain,
    azimuth: f64,
    delay: f64,
    doppler: f64,
) -> Result<Matrix2<f64>> {
    DelayDopplerInfo::at(spec, cfg, delay, doppler)?.crb(cfg, gain, azimuth)
}

/// Angle CRB given the waveform energy `‖ς‖²`.
pub fn crb_angle_with_energy(cfg: &SystemConfig, gain: &SensingLinkGain, azimuth: f64, energy: f64) -> Result<f64> {
    if cfg.antennas_per_ap < 2 {
        return Err(Error::RankDeficient { parameter: "angle" });
    }
    if !(gain.magnitude_sq > 0.0) {
        return Err(Error::Precondition("sensing gain must be nonzero".into()));
    }
    if !(azimuth.abs() < PI / 2.0) {
        return Err(Error::SingularAngle { azimuth });
    }
    let a = array_response(cfg, azimuth);
    let da = array_response_derivative(cfg, azimuth);
    let projected = da.norm_squared() - a.dotc(&da).norm_sqr() / a.norm_squared();
    if !(projected > 1e-12 * da.norm_squared()) || projected == 0.0 {
        return Err(Error::SingularAngle { azimuth });
    }
    Ok(1.0 / (2.0 * gain.magnitude_sq * energy / cfg.noise_power * projected))
}

pub fn crb_angle(
    spec: &WaveformSpec,
    cfg: &SystemConfig,
    gain: &SensingLinkGain,
    azimuth: f64,
    delay: f64,
    doppler: f64,
) -> Result<f64> {
    let energy = build_waveform_vector(spec, cfg, delay, doppler)?.norm_squared();
    crb_angle_with_energy(cfg, gain, azimuth, energy)
}

/// Per-AP bound over (range, radial velocity, angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbBlock {
    pub range_velocity: Matrix2<f64>,
    pub angle_var: f64,
    pub full: Matrix3<f64>,
}

/// `A · blkdiag(crb_dd, crb_angle) · A^T` with `A = diag(c, c/2f_c, 1)`.
pub fn transform_to_range_velocity(crb_dd: &Matrix2<f64>, crb_angle: f64, cfg: &SystemConfig) -> CrbBlock {
    let a = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        SPEED_OF_LIGHT,
        SPEED_OF_LIGHT / (2.0 * cfg.carrier_frequency),
        1.0,
    ));
    let mut stacked = Matrix3::zeros();
    stacked.fixed_view_mut::<2, 2>(0, 0).copy_from(crb_dd);
    stacked[(2, 2)] = crb_angle;
    let full = a * stacked * a.transpose();
    CrbBlock { range_velocity: full.fixed_view::<2, 2>(0, 0).into_owned(), angle_var: full[(2, 2)], full }
}

/// Block-diagonal measurement covariance over the selected APs in ascending
/// AP order. Each block is 2×2 (range, velocity) or 3×3 with `include_angle`.
pub fn assemble_measurement_covariance(
    blocks: &[(usize, CrbBlock)],
    selection: &ApSelection,
    include_angle: bool,
) -> Result<DMatrix<f64>> {
    let selected = selection.indices();
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let dim = if include_angle { 3 } else { 2 };
    let mut out = DMatrix::zeros(dim * selected.len(), dim * selected.len());
    for (slot, &ap) in selected.iter().enumerate() {
        let mut found = blocks.iter().filter(|(idx, _)| *idx == ap);
        let block = match (found.next(), found.next()) {
            (Some((_, b)), None) => b,
            (None, _) => return Err(Error::Precondition(format!("no CRB block supplied for selected AP {ap}"))),
            (Some(_), Some(_)) => return Err(Error::Precondition(format!("duplicate CRB blocks for AP {ap}"))),
        };
        let offset = slot * dim;
        if include_angle {
            out.view_mut((offset, offset), (3, 3)).copy_from(&block.full);
        } else {
            out.view_mut((offset, offset), (2, 2)).copy_from(&block.range_velocity);
        }
    }
    Ok(out)
}
