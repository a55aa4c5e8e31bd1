//! Parameter sweeps, phase scans, seeded fringes, optimal-tap search and
//! least-squares fitting of noise-reduction curves.
//!
//! Sweeps only evaluate [`crate::analytics`] functions; they add no
//! arithmetic of their own beyond the optional dB conversion.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

use crate::analytics::{db, feedback_variance, noise_reduction_factor, output_coefficients, reference_variance};
use crate::network::GainSpec;
use crate::{Error, Result};

mod fit;

pub use fit::{fit_noise_reduction, FitAxis, FitModel, FitOptions, FitParam, FitResult};

/// Default resolution for sweeps; resolves the narrow peak at `φ = π` near threshold.
pub const DEFAULT_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Db,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Linear => "linear",
            Scale::Db => "db",
        }
    }

    fn apply(self, y: f64) -> Result<f64> {
        match self {
            Scale::Linear => Ok(y),
            Scale::Db => db(y),
        }
    }
}

/// One sample; `y = None` marks a gap (the loop is at its oscillation threshold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: Option<f64>,
    pub yerr: Option<f64>,
}

impl DataPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y: Some(y), yerr: None }
    }

    pub fn gap(x: f64) -> Self {
        Self { x, y: None, yerr: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    points: Vec<DataPoint>,
    pub x_label: String,
    pub y_label: String,
    pub scale: Scale,
}

impl DataSeries {
    /// Rejects non-finite or non-increasing `x`.
    pub fn new(points: Vec<DataPoint>, x_label: impl Into<String>, y_label: impl Into<String>, scale: Scale) -> Result<Self> {
        if points.iter().any(|p| !p.x.is_finite()) {
            return Err(Error::DegenerateData("non-finite x"));
        }
        if points.windows(2).any(|w| !(w[1].x > w[0].x)) {
            return Err(Error::DegenerateData("x must be strictly increasing"));
        }
        Ok(Self { points, x_label: x_label.into(), y_label: y_label.into(), scale })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Non-gap samples.
    pub fn values(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().filter_map(|p| p.y.map(|y| (p.x, y)))
    }

    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().filter(|p| p.y.is_none()).map(|p| p.x)
    }

    /// `(x, y)` of the smallest non-gap value.
    pub fn min(&self) -> Option<(f64, f64)> {
        self.values().fold(None, |best, cur| match best {
            Some((_, y)) if y <= cur.1 => best,
            _ => Some(cur),
        })
    }

    pub fn max(&self) -> Option<(f64, f64)> {
        self.values().fold(None, |best, cur| match best {
            Some((_, y)) if y >= cur.1 => best,
            _ => Some(cur),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Phi,
    Loss,
    Transmittance,
    GqnDb,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Phi => "phi",
            SweepParam::Loss => "l",
            SweepParam::Transmittance => "t",
            SweepParam::GqnDb => "gqn_db",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub t: f64,
    pub l: f64,
    pub gain: GainSpec,
    pub phi: f64,
    pub scale: Scale,
    /// Exclude `to` from the grid (periodic phase axes).
    pub open_end: bool,
}

impl SweepConfig {
    pub fn new(param: SweepParam, from: f64, to: f64, points: usize) -> Self {
        Self {
            param,
            from,
            to,
            points,
            t: 1.0,
            l: 0.0,
            gain: GainSpec::Amplitude(1.0),
            phi: 0.0,
            scale: Scale::Db,
            open_end: false,
        }
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let div = if self.open_end { self.points } else { self.points - 1 } as f64;
        (0..self.points).map(move |i| if i == 0 { self.from } else { self.from + (self.to - self.from) * i as f64 / div })
    }
}

/// Output-noise ratio against the no-feedback reference. At `φ = 0` this is
/// the noise reduction factor; at the oscillation threshold it is a gap.
fn noise_ratio(t: f64, l: f64, gain: f64, phi: f64) -> Result<Option<f64>> {
    let value = if phi == 0.0 {
        noise_reduction_factor(t, l, gain)
    } else {
        feedback_variance(t, l, gain, phi).and_then(|v| Ok(v / reference_variance(t, gain)?))
    };
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::NearThreshold { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn sweep(cfg: &SweepConfig) -> Result<DataSeries> {
    if cfg.points < 2 {
        return Err(Error::ParamOutOfRange { name: "points", value: cfg.points as f64 });
    }
    if !(cfg.from < cfg.to) || !cfg.from.is_finite() || !cfg.to.is_finite() {
        return Err(Error::ParamOutOfRange { name: "to", value: cfg.to });
    }
    let mut points = Vec::with_capacity(cfg.points);
    for x in cfg.grid() {
        let (mut t, mut l, mut gain, mut phi) = (cfg.t, cfg.l, cfg.gain, cfg.phi);
        match cfg.param {
            SweepParam::Phi => phi = x,
            SweepParam::Loss => l = x,
            SweepParam::Transmittance => t = x,
            SweepParam::GqnDb => gain = GainSpec::QnDb(x),
        }
        let y = match noise_ratio(t, l, gain.amplitude()?, phi)? {
            Some(v) => Some(cfg.scale.apply(v)?),
            None => None,
        };
        points.push(DataPoint { x, y, yerr: None });
    }
    let y_label = match (cfg.param, cfg.phi == 0.0) {
        (SweepParam::Phi, _) | (_, false) => "noise_ratio",
        _ => "R",
    };
    DataSeries::new(points, cfg.param.as_str(), y_label, cfg.scale)
}

/// Output noise relative to the no-feedback reference over `φ ∈ [0, 2π)`, in dB.
pub fn phase_scan(t: f64, l: f64, gain: f64, points: usize) -> Result<DataSeries> {
    sweep(&SweepConfig {
        t,
        l,
        gain: GainSpec::Amplitude(gain),
        open_end: true,
        ..SweepConfig::new(SweepParam::Phi, 0.0, 2.0 * PI, points)
    })
}

/// Noise reduction factor (dB) versus quantum noise gain (dB) at `φ = 0`.
pub fn gain_scan(t: f64, l: f64, from_db: f64, to_db: f64, points: usize) -> Result<DataSeries> {
    sweep(&SweepConfig { t, l, ..SweepConfig::new(SweepParam::GqnDb, from_db, to_db, points) })
}

/// Noise reduction factor (dB) for `L ∈ [0, 1]`.
pub fn loss_scan(t: f64, gqn_db: f64, points: usize) -> Result<DataSeries> {
    sweep(&SweepConfig { t, gain: GainSpec::QnDb(gqn_db), ..SweepConfig::new(SweepParam::Loss, 0.0, 1.0, points) })
}

/// Noise reduction factor (dB) for `T ∈ [0, 1]`.
pub fn transmittance_scan(l: f64, gqn_db: f64, points: usize) -> Result<DataSeries> {
    sweep(&SweepConfig { l, gain: GainSpec::QnDb(gqn_db), ..SweepConfig::new(SweepParam::Transmittance, 0.0, 1.0, points) })
}

/// Tap transmissivity minimising the noise reduction factor, and that minimum.
/// A 1001-point grid brackets the minimum, golden-section search refines it
/// to 1e-6 in `T`.
pub fn optimal_transmittance(l: f64, gain: f64) -> Result<(f64, f64)> {
    let r = |t: f64| noise_reduction_factor(t, l, gain);
    const N: usize = 1000;
    let mut best = (0, r(0.0)?);
    for i in 1..=N {
        let v = r(i as f64 / N as f64)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let mut lo = best.0.saturating_sub(1) as f64 / N as f64;
    let mut hi = (best.0 + 1).min(N) as f64 / N as f64;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (r(a)?, r(b)?);
    while hi - lo > 1e-7 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = r(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = r(b)?;
        }
    }
    let t = 0.5 * (lo + hi);
    let v = r(t)?;
    // the bracket refinement never loses against the grid
    Ok(if v <= best.1 { (t, v) } else { (best.0 as f64 / N as f64, best.1) })
}

/// Output intensity `|A(φ)·β|²` for a coherent seed `β` at the external
/// input, over `φ ∈ [0, 2π)`.
pub fn fringe_scan(t: f64, l: f64, gain: f64, seed: Complex64, points: usize) -> Result<DataSeries> {
    if points < 2 {
        return Err(Error::ParamOutOfRange { name: "points", value: points as f64 });
    }
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let phi = 2.0 * PI * i as f64 / points as f64;
        out.push(match output_coefficients(t, l, gain, phi) {
            Ok([a, _, _]) => DataPoint::new(phi, (a * seed).norm_sqr()),
            Err(Error::NearThreshold { .. }) => DataPoint::gap(phi),
            Err(e) => return Err(e),
        });
    }
    DataSeries::new(out, "phi", "intensity", Scale::Linear)
}

/// `(I_max − I_min)/(I_max + I_min)` over the non-gap samples.
pub fn visibility(series: &DataSeries) -> Option<f64> {
    let (_, max) = series.max()?;
    let (_, min) = series.min()?;
    if max + min == 0.0 {
        None
    } else {
        Some((max - min) / (max + min))
    }
}
