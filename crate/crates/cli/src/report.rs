//! JSON shapes of solver, fit and verification results.

use std::collections::BTreeMap;

use serde::Serialize;

use cfamp_core::bogoliubov::{mean_field, quadrature_variance, OperatorExpr};
use cfamp_core::experiments::FitResult;
use cfamp_core::network::SolveResult;
use cfamp_core::oracles::{CrossCheckReport, OperatingPoint};
use cfamp_core::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexJson {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientJson {
    pub mode: String,
    pub kind: &'static str,
    pub alpha: ComplexJson,
    pub beta: ComplexJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputJson {
    pub name: String,
    pub coefficients: Vec<CoefficientJson>,
    /// `⟨a⟩` with the coherent amplitudes substituted.
    pub mean: ComplexJson,
    pub variance: f64,
    pub commutator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveJson {
    pub outputs: Vec<OutputJson>,
    pub loop_gain: f64,
    pub denom_mag: f64,
    pub stability: &'static str,
}

fn output_json(name: &str, e: &OperatorExpr, res: &SolveResult, theta: f64) -> OutputJson {
    OutputJson {
        name: name.to_string(),
        coefficients: e
            .modes()
            .map(|m| CoefficientJson { mode: m.name.clone(), kind: m.kind.as_str(), alpha: e.coeff_ann(m).into(), beta: e.coeff_cre(m).into() })
            .collect(),
        mean: mean_field(e, &res.amplitudes).unwrap_or(Complex64::new(f64::NAN, f64::NAN)).into(),
        variance: quadrature_variance(e, theta).value(),
        commutator: cfamp_core::bogoliubov::commutator_norm(e),
    }
}

impl SolveJson {
    pub fn new(res: &SolveResult, theta: f64) -> Self {
        Self {
            outputs: res.outputs.iter().map(|(n, e)| output_json(n, e, res, theta)).collect(),
            loop_gain: res.loop_gain,
            denom_mag: res.denom_mag,
            stability: res.stability.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitJson {
    pub model: String,
    pub params: BTreeMap<&'static str, f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub identifiable: bool,
}

impl FitJson {
    pub fn new(model: impl Into<String>, r: &FitResult) -> Self {
        Self {
            model: model.into(),
            params: r.params.iter().map(|(p, v)| (p.as_str(), *v)).collect(),
            rss: r.rss,
            iterations: r.iterations,
            converged: r.converged,
            identifiable: r.identifiable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseJson {
    pub t: f64,
    pub l: f64,
    pub gain: f64,
    pub phi: f64,
    pub analytic: f64,
    pub network: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub unrolled: Option<f64>,
    pub pass: bool,
}

impl CaseJson {
    pub fn new(p: &OperatingPoint, r: &CrossCheckReport) -> Self {
        let [t, l, gain, phi] = *p;
        Self {
            t,
            l,
            gain,
            phi,
            analytic: r.analytic,
            network: r.network,
            monte_carlo: r.monte_carlo.variance,
            std_error: r.monte_carlo.std_error,
            unrolled: r.unrolled,
            pass: r.pass(),
        }
    }
}
