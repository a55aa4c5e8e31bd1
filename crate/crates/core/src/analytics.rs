//! Closed-form noise formulas for the single-path feedback amplifier.
//!
//! All variances are in vacuum units. `loop_ratio` below is
//! `G/G_th = G√((1−T)(1−L))`, which stays finite when `G_th` is infinite.

use num_complex::Complex64;
use num_traits::Float;

use crate::bogoliubov::{check_gain, check_unit, idler_gain};
use crate::{Error, Result, EPS_OSC};

/// Validated amplifier gain; `g` is always derived from `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplifierParams {
    gain: f64,
}

impl AmplifierParams {
    pub fn new(gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(Self { gain })
    }

    pub fn from_qn_db(db: f64) -> Result<Self> {
        Ok(Self { gain: gain_from_qn_db(db)? })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn idler_gain(&self) -> f64 {
        idler_gain(self.gain)
    }
}

/// Validated feedback-loop settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    pub t: f64,
    pub l: f64,
    pub phi: f64,
}

impl FeedbackParams {
    pub fn new(t: f64, l: f64, phi: f64) -> Result<Self> {
        check_unit("T", t)?;
        check_unit("L", l)?;
        if !phi.is_finite() {
            return Err(Error::ParamOutOfRange { name: "phi", value: phi });
        }
        Ok(Self { t, l, phi })
    }
}

fn check_tlg(t: f64, l: f64, gain: f64) -> Result<()> {
    check_unit("T", t)?;
    check_unit("L", l)?;
    check_gain(gain)
}

/// `G/G_th`.
pub fn loop_ratio(t: f64, l: f64, gain: f64) -> f64 {
    gain * ((1.0 - t) * (1.0 - l)).sqrt()
}

/// `G_qn = 2G² − 1`.
pub fn quantum_noise_gain(gain: f64) -> Result<f64> {
    check_gain(gain)?;
    Ok(2.0 * gain * gain - 1.0)
}

/// Inverse of [`quantum_noise_gain`] with the noise gain given in dB.
pub fn gain_from_qn_db(db: f64) -> Result<f64> {
    if !(db >= 0.0) || !db.is_finite() {
        return Err(Error::ParamOutOfRange { name: "gain_db", value: db });
    }
    Ok(((from_db(db) + 1.0) / 2.0).sqrt())
}

/// Power ratio in dB.
pub fn db(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::ParamOutOfRange { name: "x", value: x });
    }
    Ok(10.0 * x.log10())
}

pub fn from_db(d: f64) -> f64 {
    10.0.powf(d / 10.0)
}

/// Output noise with the feedback path fully lost: `T(2G² − 1) + 1 − T`.
pub fn reference_variance(t: f64, gain: f64) -> Result<f64> {
    check_unit("T", t)?;
    check_gain(gain)?;
    Ok(t * (2.0 * gain * gain - 1.0) + 1.0 - t)
}

/// Output-port coefficients `(A, B, C)` on the external input, the loss
/// vacuum and the adjoint of the amplifier idler, with common denominator
/// `D = 1 + G e^{iφ} √((1−T)(1−L))`.
pub fn output_coefficients(t: f64, l: f64, gain: f64, phi: f64) -> Result<[Complex64; 3]> {
    check_tlg(t, l, gain)?;
    let e = Complex64::cis(phi);
    let d = 1.0 + e * loop_ratio(t, l, gain);
    if d.norm() < EPS_OSC {
        return Err(Error::NearThreshold { denom_mag: d.norm() });
    }
    let a = ((1.0 - t).sqrt() + e * gain * (1.0 - l).sqrt()) / d;
    let b = Complex64::new(gain * (t * l).sqrt(), 0.0) / d;
    let c = Complex64::new(idler_gain(gain) * t.sqrt(), 0.0) / d;
    Ok([a, b, c])
}

/// Output quadrature variance with feedback at arbitrary phase:
/// `(|√(1−T) + G e^{iφ}√(1−L)|² + G²TL + g²T) / |D|²`.
pub fn feedback_variance(t: f64, l: f64, gain: f64, phi: f64) -> Result<f64> {
    check_tlg(t, l, gain)?;
    let e = Complex64::cis(phi);
    let d2 = (1.0 + e * loop_ratio(t, l, gain)).norm_sqr();
    if d2.sqrt() < EPS_OSC {
        return Err(Error::NearThreshold { denom_mag: d2.sqrt() });
    }
    let g = idler_gain(gain);
    let direct = ((1.0 - t).sqrt() + e * gain * (1.0 - l).sqrt()).norm_sqr();
    Ok((direct + gain * gain * t * l + g * g * t) / d2)
}

/// The in-phase (`φ = 0`) variance in its reduced form
/// `T(G² + g² − 1)/(1 + G/G_th)² + 1`.
pub fn feedback_variance_in_phase(t: f64, l: f64, gain: f64) -> Result<f64> {
    check_tlg(t, l, gain)?;
    let g = idler_gain(gain);
    let q = 1.0 + loop_ratio(t, l, gain);
    Ok(t * (gain * gain + g * g - 1.0) / (q * q) + 1.0)
}

/// Noise reduction factor at the optimal phase `φ = 0`:
/// `[2T(G²−1) + (1+G/G_th)²] / [(1+G/G_th)² (2TG² + 1 − 2T)]`.
pub fn noise_reduction_factor(t: f64, l: f64, gain: f64) -> Result<f64> {
    check_tlg(t, l, gain)?;
    let q2 = (1.0 + loop_ratio(t, l, gain)).powi(2);
    let g2 = gain * gain;
    Ok((2.0 * t * (g2 - 1.0) + q2) / (q2 * (2.0 * t * g2 + 1.0 - 2.0 * t)))
}

/// [`noise_reduction_factor`] in the `T → 1` limit with `G_th` held as a
/// free parameter.
pub fn noise_reduction_unity_t(gain: f64, threshold: f64) -> Result<f64> {
    check_gain(gain)?;
    if !(threshold > 1.0) {
        return Err(Error::ParamOutOfRange { name: "G_th", value: threshold });
    }
    let q2 = (1.0 + gain / threshold).powi(2);
    let g2 = gain * gain;
    Ok((2.0 * g2 - 2.0 + q2) / (q2 * (2.0 * g2 - 1.0)))
}

/// High-gain limit `1/(1 + G/G_th)²`.
pub fn asymptotic_reduction(gain: f64, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::ParamOutOfRange { name: "G_th", value: threshold });
    }
    Ok((1.0 + gain / threshold).powi(-2))
}
