//! Independent ground truths for the closed forms and the network solver:
//! semiclassical Monte-Carlo sampling of vacuum fluctuations, and explicit
//! unrolling of the feedback recursion.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analytics::{feedback_variance, loop_ratio};
use crate::bogoliubov::{check_gain, check_unit, idler_gain, quadrature_variance, ModeId, OperatorExpr};
use crate::network::{canonical, canonical_feedback, threshold_gain};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub theta: f64,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed, theta: 0.0 }
    }
}

/// Raw power sums of the sampled quadrature; partitions merge by addition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
}

impl Moments {
    pub fn merge(self, o: Self) -> Self {
        Self { n: self.n + o.n, s1: self.s1 + o.s1, s2: self.s2 + o.s2, s3: self.s3 + o.s3, s4: self.s4 + o.s4 }
    }

    /// Unbiased sample variance and the standard error of that estimate,
    /// `√((m₄ − m₂²)/N)` from the empirical central moments.
    pub fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        if self.n < 2 {
            return McEstimate { variance: 0.0, std_error: f64::INFINITY, samples: self.n };
        }
        let mean = self.s1 / n;
        let m2 = self.s2 / n - mean * mean;
        let m4 = self.s4 / n - 4.0 * mean * self.s3 / n + 6.0 * mean * mean * self.s2 / n - 3.0 * mean.powi(4);
        McEstimate { variance: m2 * n / (n - 1.0), std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt(), samples: self.n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub variance: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    /// `(variance − expected)/std_error`.
    pub fn z_score(&self, expected: f64) -> f64 {
        (self.variance - expected) / self.std_error
    }
}

/// Samples of partition `index` out of `partitions`; each partition draws
/// from its own ChaCha stream of the configured seed, so the merged result
/// depends only on `(seed, partitions)`.
pub fn mc_moments(expr: &OperatorExpr, cfg: &McConfig, index: usize, partitions: usize) -> Moments {
    let partitions = partitions.max(1) as u64;
    let index = index as u64;
    let per = cfg.samples / partitions;
    let count = per + u64::from(index < cfg.samples % partitions);

    let terms: Vec<(Complex64, Complex64)> = expr.modes().map(|m| (expr.coeff_ann(m), expr.coeff_cre(m))).collect();
    let rot = Complex64::cis(-cfg.theta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let mut acc = Moments { n: count, ..Moments::default() };
    for _ in 0..count {
        let mut z = Complex64::new(0.0, 0.0);
        for &(alpha, beta) in &terms {
            let x: f64 = StandardNormal.sample(&mut rng);
            let p: f64 = StandardNormal.sample(&mut rng);
            let v = Complex64::new(x, p) * 0.5;
            z += alpha * v + beta * v.conj();
        }
        let s = 2.0 * (rot * z).re;
        let s2 = s * s;
        acc.s1 += s;
        acc.s2 += s2;
        acc.s3 += s2 * s;
        acc.s4 += s2 * s2;
    }
    acc
}

pub fn mc_variance_partitioned(expr: &OperatorExpr, cfg: &McConfig, partitions: usize) -> McEstimate {
    (0..partitions.max(1))
        .map(|i| mc_moments(expr, cfg, i, partitions))
        .fold(Moments::default(), Moments::merge)
        .estimate()
}

/// Sampled variance of the `θ` quadrature with every input in vacuum.
pub fn mc_variance(expr: &OperatorExpr, cfg: &McConfig) -> McEstimate {
    mc_variance_partitioned(expr, cfg, 1)
}

/// Output port after `n` passes of the feedback recursion
/// `a_out ← G·a_in(a_out) + g·S†`, started from the loop-free amplifier
/// output. Uses the mode names of [`crate::network::canonical`].
pub fn unrolled_solve(t: f64, l: f64, gain: f64, phi: f64, n: usize) -> Result<OperatorExpr> {
    check_unit("T", t)?;
    check_unit("L", l)?;
    check_gain(gain)?;
    let r = loop_ratio(t, l, gain);
    if r >= 1.0 {
        return Err(Error::DivergentUnroll { loop_gain: r });
    }
    let b0 = OperatorExpr::mode(ModeId::vacuum(canonical::INPUT));
    let c0 = OperatorExpr::mode(ModeId::vacuum(canonical::LOSS_VACUUM));
    let idler_term = &OperatorExpr::creation(ModeId::idler(canonical::IDLER)) * idler_gain(gain);
    let e = Complex64::cis(phi);

    let amp_input = |a_out: &OperatorExpr| -> OperatorExpr {
        let tapped = &(&b0 * t.sqrt()) - &(a_out * (1.0 - t).sqrt());
        &(&tapped * (e * (1.0 - l).sqrt())) + &(&c0 * l.sqrt())
    };
    let mut a_out = &(&amp_input(&OperatorExpr::zero()) * gain) + &idler_term;
    for _ in 0..n {
        a_out = &(&amp_input(&a_out) * gain) + &idler_term;
    }
    Ok(&(&a_out * t.sqrt()) + &(&b0 * (1.0 - t).sqrt()))
}

/// Iterations after which the unrolled series is converged to `tol`
/// relative to its leading term.
pub fn unroll_iterations(loop_gain: f64, tol: f64) -> usize {
    if loop_gain <= 0.0 {
        return 1;
    }
    let n = ((tol * (1.0 - loop_gain)).ln() / loop_gain.ln()).ceil();
    if n.is_finite() { (n.max(1.0) as usize).min(1_000_000) } else { 1_000_000 }
}

pub const TOL_ANALYTIC_NETWORK: f64 = 1e-10;
pub const TOL_MC_SIGMAS: f64 = 5.0;
pub const TOL_UNROLLED: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub analytic_network: bool,
    pub monte_carlo: bool,
    /// `None` when the loop gain is ≥ 1 and the series diverges.
    pub unrolled: Option<bool>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.analytic_network && self.monte_carlo && self.unrolled.unwrap_or(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCheckReport {
    pub analytic: f64,
    pub network: f64,
    pub monte_carlo: McEstimate,
    pub unrolled: Option<f64>,
    pub verdict: Verdict,
}

impl CrossCheckReport {
    /// Recomputes the verdict from the stored numbers.
    pub fn judge(analytic: f64, network: f64, mc: &McEstimate, unrolled: Option<f64>) -> Verdict {
        let rel = |x: f64| (x - analytic).abs() / analytic.abs();
        Verdict {
            analytic_network: rel(network) <= TOL_ANALYTIC_NETWORK,
            monte_carlo: (mc.variance - analytic).abs() <= TOL_MC_SIGMAS * mc.std_error,
            unrolled: unrolled.map(|u| rel(u) <= TOL_UNROLLED),
        }
    }

    pub fn pass(&self) -> bool {
        self.verdict.pass()
    }
}

/// Compares the closed form, the network solver, Monte-Carlo sampling of
/// the solved output and (below threshold) the unrolled loop.
pub fn crosscheck(t: f64, l: f64, gain: f64, phi: f64, cfg: &McConfig) -> Result<CrossCheckReport> {
    let analytic = feedback_variance(t, l, gain, phi)?;
    let solved = canonical_feedback(t, l, gain, phi)?;
    let out = solved.output(canonical::OUTPUT).expect("canonical network declares its output");
    let network = quadrature_variance(out, cfg.theta).value();
    let monte_carlo = mc_variance(out, cfg);
    let r = loop_ratio(t, l, gain);
    let unrolled = if r < 1.0 {
        let n = unroll_iterations(r, 1e-14);
        Some(quadrature_variance(&unrolled_solve(t, l, gain, phi, n)?, cfg.theta).value())
    } else {
        None
    };
    let verdict = CrossCheckReport::judge(analytic, network, &monte_carlo, unrolled);
    Ok(CrossCheckReport { analytic, network, monte_carlo, unrolled, verdict })
}

/// Operating point of the canonical amplifier: `[T, L, G, φ]`.
pub type OperatingPoint = [f64; 4];

/// `count` reproducible operating points strictly below threshold:
/// `T ∈ [0.05, 1)`, `L ∈ [0, 0.95]`, `G ∈ (1, 0.95·G_th]`, `φ ∈ [0, 2π)`.
/// `(T, L)` pairs with `0.95·G_th ≤ 1` leave an empty gain range and are
/// redrawn.
pub fn stable_points(seed: u64, count: usize) -> Vec<OperatingPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (t, l, top) = loop {
                let t = rng.random_range(0.05..1.0);
                let l = rng.random_range(0.0..=0.95);
                let top = 0.95 * threshold_gain(t, l).expect("t and l are in range");
                if top > 1.0 {
                    break (t, l, top);
                }
            };
            let gain = 1.0 + (top - 1.0) * (1.0 - rng.random::<f64>());
            let phi = rng.random_range(0.0..2.0 * core::f64::consts::PI);
            [t, l, gain, phi]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::output_coefficients;
    use crate::bogoliubov::amplifier_map;
    use crate::network::threshold_gain;

    fn b0() -> OperatorExpr {
        OperatorExpr::mode(ModeId::vacuum("b0"))
    }

    #[test]
    fn vacuum_and_amplifier_samples() {
        let cfg = McConfig::new(1_000_000, 1);
        let v = mc_variance(&b0(), &cfg);
        assert!(v.z_score(1.0).abs() < 5.0, "{v:?}");
        let (s, _) = amplifier_map(2.0, &b0(), &OperatorExpr::mode(ModeId::idler("S"))).unwrap();
        let v = mc_variance(&s, &McConfig::new(1_000_000, 2));
        assert!(v.z_score(7.0).abs() < 5.0, "{v:?}");
    }

    #[test]
    fn same_mode_squeezing_sampled() {
        let mu = Complex64::new(2.0, 0.0);
        let nu = Complex64::new(3f64.sqrt(), 0.0);
        let e = OperatorExpr::from_parts([(ModeId::vacuum("b0"), mu)], [(ModeId::vacuum("b0"), nu)], Complex64::default());
        let expect = (mu + nu.conj()).norm_sqr();
        let est = mc_variance(&e, &McConfig::new(1_000_000, 3));
        assert!(est.z_score(expect).abs() < 5.0, "{est:?}");
        assert!((quadrature_variance(&e, 0.0).value() - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = McConfig { samples: 10_000, seed: 99, theta: 0.4 };
        let e = &b0() * 2.0;
        assert_eq!(mc_variance(&e, &cfg), mc_variance(&e, &cfg));
        assert_eq!(mc_variance_partitioned(&e, &cfg, 4), mc_variance_partitioned(&e, &cfg, 4));
        assert_ne!(mc_variance(&e, &cfg), mc_variance(&e, &McConfig { seed: 100, ..cfg }));
        let parts: u64 = (0..7).map(|i| mc_moments(&e, &cfg, i, 7).n).sum();
        assert_eq!(parts, 10_000);
    }

    #[test]
    fn canonical_output_sampled() {
        let (t, l) = (0.9, 0.1);
        let g = 0.8 * threshold_gain(t, l).unwrap();
        let r = canonical_feedback(t, l, g, 0.0).unwrap();
        let est = mc_variance(r.output(canonical::OUTPUT).unwrap(), &McConfig::new(1_000_000, 5));
        let exact = feedback_variance(t, l, g, 0.0).unwrap();
        assert!(est.z_score(exact).abs() < 5.0, "{est:?} vs {exact}");
    }

    #[test]
    fn unrolled_without_feedback_is_exact() {
        let e = unrolled_solve(1.0, 0.2, 3.0, 0.5, 1).unwrap();
        let solved = canonical_feedback(1.0, 0.2, 3.0, 0.5).unwrap();
        assert!(e.max_abs_diff(solved.output(canonical::OUTPUT).unwrap()) < 1e-15);
    }

    #[test]
    fn unrolled_geometric_bound() {
        let (t, l, g) = (0.5, 0.5, 1.2);
        assert!((loop_ratio(t, l, g) - 0.6).abs() < 1e-15);
        let e = unrolled_solve(t, l, g, 0.0, 50).unwrap();
        let [a, b, c] = output_coefficients(t, l, g, 0.0).unwrap();
        let dev = (e.coeff_ann_named("b0") - a)
            .norm()
            .max((e.coeff_ann_named("ATT.vac") - b).norm())
            .max((e.coeff_cre_named("S") - c).norm());
        assert!(dev <= 0.6f64.powi(50), "{dev}");
    }

    #[test]
    fn unrolled_diverges_above_threshold() {
        assert!(matches!(unrolled_solve(0.25, 0.01, 5.66, 0.0, 10), Err(Error::DivergentUnroll { .. })));
    }

    #[test]
    fn unroll_error_decays_geometrically() {
        let (t, l, g, phi) = (0.6, 0.2, 1.4, 0.9);
        let r = loop_ratio(t, l, g);
        let exact = canonical_feedback(t, l, g, phi).unwrap();
        let exact = exact.output(canonical::OUTPUT).unwrap();
        let errs: Vec<(f64, f64)> = (2..30)
            .map(|n| (n as f64, unrolled_solve(t, l, g, phi, n).unwrap().max_abs_diff(exact).ln()))
            .collect();
        let slope = fit_slope(&errs);
        assert!((slope / r.ln() - 1.0).abs() < 0.1, "{slope} vs {}", r.ln());
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn crosscheck_fixed_points() {
        let cfg = McConfig::new(200_000, 42);
        let rep = crosscheck(1.0, 0.0, 2.0, 0.0, &cfg).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!((rep.analytic - 7.0).abs() < 1e-12);
        assert!((rep.unrolled.unwrap() - 7.0).abs() < 1e-12);
        let rep = crosscheck(0.0, 0.3, 4.0, 0.0, &cfg).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!((rep.network - 1.0).abs() < 1e-12);
        let rep = crosscheck(0.25, 0.01, 5.66, 0.0, &cfg).unwrap();
        assert!(rep.unrolled.is_none());
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn judge_matches_stored_verdict() {
        let mc = McEstimate { variance: 1.05, std_error: 0.01, samples: 100 };
        let v = CrossCheckReport::judge(1.0, 1.0, &mc, Some(1.0));
        assert!(!v.monte_carlo);
        assert!(v.analytic_network);
        assert!(!v.pass());
    }

    #[test]
    fn stable_points_are_below_threshold() {
        let pts = stable_points(5, 500);
        assert_eq!(pts, stable_points(5, 500));
        for [t, l, g, phi] in pts {
            assert!((0.05..1.0).contains(&t) && (0.0..=0.95).contains(&l));
            assert!(g > 1.0 && loop_ratio(t, l, g) <= 0.95 + 1e-12);
            assert!((0.0..2.0 * core::f64::consts::PI).contains(&phi));
        }
    }
}
