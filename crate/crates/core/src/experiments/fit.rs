//! Levenberg–Marquardt fit of noise-reduction curves.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

use super::{DataSeries, Scale};
use crate::analytics::{db, gain_from_qn_db, noise_reduction_factor, noise_reduction_unity_t};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FitParam {
    Threshold,
    T,
    L,
    Gain,
    Offset,
}

impl FitParam {
    pub fn as_str(self) -> &'static str {
        match self {
            FitParam::Threshold => "gth",
            FitParam::T => "t",
            FitParam::L => "l",
            FitParam::Gain => "g",
            FitParam::Offset => "offset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "gth" | "g_th" | "threshold" => FitParam::Threshold,
            "t" => FitParam::T,
            "l" => FitParam::L,
            "g" | "gain" => FitParam::Gain,
            "offset" => FitParam::Offset,
            _ => return None,
        })
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            FitParam::Threshold => (1.0 + 1e-9, 1e9),
            FitParam::T | FitParam::L => (0.0, 1.0),
            FitParam::Gain => (1.0, 1e6),
            FitParam::Offset => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn default_guess(self) -> f64 {
        match self {
            FitParam::Threshold => 10.0,
            FitParam::T => 0.5,
            FitParam::L => 0.1,
            FitParam::Gain => 2.0,
            FitParam::Offset => 0.0,
        }
    }
}

/// What the `x` column of a [`FitModel::Full`] fit holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitAxis {
    /// Quantum noise gain in dB; `T` and `L` are fitted.
    GqnDb,
    /// Feedback loss; `T` and `G` are fitted.
    Loss,
    /// Tap transmissivity; `L` and `G` are fitted.
    Transmittance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// Full noise reduction factor.
    Full(FitAxis),
    /// `T → 1` form versus quantum noise gain in dB; fits `G_th`.
    UnityT,
}

impl FitModel {
    fn params(self) -> &'static [FitParam] {
        match self {
            FitModel::UnityT => &[FitParam::Threshold],
            FitModel::Full(FitAxis::GqnDb) => &[FitParam::T, FitParam::L],
            FitModel::Full(FitAxis::Loss) => &[FitParam::T, FitParam::Gain],
            FitModel::Full(FitAxis::Transmittance) => &[FitParam::L, FitParam::Gain],
        }
    }

    /// Linear noise reduction factor at `x` for parameters in `params()` order.
    fn reduction(self, x: f64, p: &[f64]) -> Result<f64> {
        match self {
            FitModel::UnityT => noise_reduction_unity_t(gain_from_qn_db(x)?, p[0]),
            FitModel::Full(FitAxis::GqnDb) => noise_reduction_factor(p[0], p[1], gain_from_qn_db(x)?),
            FitModel::Full(FitAxis::Loss) => noise_reduction_factor(p[0], x, p[1]),
            FitModel::Full(FitAxis::Transmittance) => noise_reduction_factor(x, p[0], p[1]),
        }
    }

    /// Model value in the series' scale, plus the optional additive offset.
    pub fn eval(self, x: f64, params: &[(FitParam, f64)], scale: Scale) -> Result<f64> {
        let core: Vec<f64> = self
            .params()
            .iter()
            .map(|k| params.iter().find(|(p, _)| p == k).map(|(_, v)| *v).unwrap_or(k.default_guess()))
            .collect();
        let r = self.reduction(x, &core)?;
        let y = match scale {
            Scale::Linear => r,
            Scale::Db => db(r)?,
        };
        let offset = params.iter().find(|(p, _)| *p == FitParam::Offset).map(|(_, v)| *v).unwrap_or(0.0);
        Ok(y + offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting values; parameters not listed start from a fixed default.
    pub initial: Vec<(FitParam, f64)>,
    pub fit_offset: bool,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { initial: Vec::new(), fit_offset: false, max_iterations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<(FitParam, f64)>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when the normal matrix is numerically rank deficient.
    pub identifiable: bool,
}

impl FitResult {
    pub fn get(&self, p: FitParam) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == p).map(|(_, v)| *v)
    }
}

struct Problem<'a> {
    model: FitModel,
    names: Vec<FitParam>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<f64>,
    scale: Scale,
    _data: &'a DataSeries,
}

impl Problem<'_> {
    fn labelled(&self, p: &[f64]) -> Vec<(FitParam, f64)> {
        self.names.iter().copied().zip(p.iter().copied()).collect()
    }

    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let labelled = self.labelled(p);
        let mut out = Vec::with_capacity(self.xs.len());
        for i in 0..self.xs.len() {
            let f = self.model.eval(self.xs[i], &labelled, self.scale).ok()?;
            if !f.is_finite() {
                return None;
            }
            out.push((self.ys[i] - f) * self.weights[i].sqrt());
        }
        Some(out)
    }

    fn rss(&self, p: &[f64]) -> f64 {
        self.residuals(p).map(|r| r.iter().map(|v| v * v).sum()).unwrap_or(f64::INFINITY)
    }

    /// Jacobian of the weighted model (`∂f/∂p`), central differences away
    /// from the parameter bounds and one-sided at them.
    fn jacobian(&self, p: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = self.xs.len();
        let mut jac = vec![vec![0.0; p.len()]; n];
        for (j, name) in self.names.iter().enumerate() {
            let (lo, hi) = name.bounds();
            let h = 1e-6 * p[j].abs().max(1e-3);
            let (a, b) = (if p[j] - h >= lo { p[j] - h } else { p[j] }, if p[j] + h <= hi { p[j] + h } else { p[j] });
            let mut pa = p.to_vec();
            let mut pb = p.to_vec();
            pa[j] = a;
            pb[j] = b;
            let ra = self.residuals(&pa)?;
            let rb = self.residuals(&pb)?;
            for i in 0..n {
                // residual = w(y − f) so ∂f = −∂r
                jac[i][j] = -(rb[i] - ra[i]) / (b - a);
            }
        }
        Some(jac)
    }

    fn project(&self, p: &mut [f64]) {
        for (v, name) in p.iter_mut().zip(&self.names) {
            let (lo, hi) = name.bounds();
            *v = v.clamp(lo, hi);
        }
    }
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k] == 0.0 || !a[piv][k].is_finite() {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn normal_equations(jac: &[Vec<f64>], r: &[f64], m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut jtj = vec![vec![0.0; m]; m];
    let mut jtr = vec![0.0; m];
    for (row, ri) in jac.iter().zip(r) {
        for a in 0..m {
            jtr[a] += row[a] * ri;
            for b in 0..m {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

/// Determinant of the correlation form of `JᵀJ`; near zero means some
/// parameter combination is not constrained by the data.
fn correlation_det(jtj: &[Vec<f64>]) -> f64 {
    let m = jtj.len();
    let d: Vec<f64> = (0..m).map(|i| jtj[i][i].sqrt()).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return 0.0;
    }
    let mut a: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| jtj[i][j] / (d[i] * d[j])).collect()).collect();
    let mut det = 1.0;
    for k in 0..m {
        let piv = (k..m).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[piv][k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            a.swap(k, piv);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..m {
            let f = a[i][k] / a[k][k];
            for j in k..m {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det.abs()
}

/// Weighted least-squares fit of `model` to the non-gap points of `data`.
/// Points with a positive `yerr` get weight `1/yerr²`, all others weight 1.
pub fn fit_noise_reduction(data: &DataSeries, model: FitModel, opts: &FitOptions) -> Result<FitResult> {
    let mut names: Vec<FitParam> = model.params().to_vec();
    if opts.fit_offset {
        names.push(FitParam::Offset);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut weights = Vec::new();
    for p in data.points() {
        if let Some(y) = p.y {
            if !y.is_finite() {
                return Err(Error::DegenerateData("non-finite y"));
            }
            xs.push(p.x);
            ys.push(y);
            weights.push(match p.yerr {
                Some(e) if e > 0.0 && e.is_finite() => 1.0 / (e * e),
                _ => 1.0,
            });
        }
    }
    if xs.len() < names.len() {
        return Err(Error::DegenerateData("fewer points than free parameters"));
    }
    if ys.iter().all(|y| *y == ys[0]) {
        return Err(Error::DegenerateData("constant data has no curvature to fit"));
    }

    let prob = Problem { model, names: names.clone(), xs, ys, weights, scale: data.scale, _data: data };
    let mut p: Vec<f64> = names
        .iter()
        .map(|k| opts.initial.iter().find(|(q, _)| q == k).map(|(_, v)| *v).unwrap_or(k.default_guess()))
        .collect();
    prob.project(&mut p);
    let m = p.len();
    let mut rss = prob.rss(&p);
    if !rss.is_finite() {
        return Err(Error::DegenerateData("model undefined at the initial guess"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let r = prob.residuals(&p).expect("finite at accepted point");
        let jac = prob.jacobian(&p).ok_or(Error::DegenerateData("model undefined near the current estimate"))?;
        let (jtj, jtr) = normal_equations(&jac, &r, m);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..m {
                a[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let step = match solve_dense(a, jtr.clone()) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            prob.project(&mut trial);
            let trial_rss = prob.rss(&trial);
            if trial_rss <= rss {
                let rel_change = (rss - trial_rss) / rss.max(f64::MIN_POSITIVE);
                let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).abs() / b.abs().max(1e-12)).fold(0.0, f64::max);
                p = trial;
                rss = trial_rss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_change < 1e-10 || moved < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }

    let identifiable = match (prob.residuals(&p), prob.jacobian(&p)) {
        (Some(r), Some(jac)) => correlation_det(&normal_equations(&jac, &r, m).0) > 1e-12,
        _ => false,
    };
    Ok(FitResult { params: prob.labelled(&p), rss, iterations, converged, identifiable })
}

#[cfg(test)]
mod tests {
    use super::super::DataPoint;
    use super::*;
    use alloc::vec::Vec;

    fn unity_t_series(gth: f64, noise: impl Fn(usize) -> f64) -> DataSeries {
        let pts: Vec<DataPoint> = (0..20)
            .map(|i| {
                let x = 3.0 + 27.0 * i as f64 / 19.0;
                let y = noise_reduction_unity_t(gain_from_qn_db(x).unwrap(), gth).unwrap() * (1.0 + noise(i));
                DataPoint::new(x, y)
            })
            .collect();
        DataSeries::new(pts, "gqn_db", "R", Scale::Linear).unwrap()
    }

    #[test]
    fn exact_guess_recovers_exactly() {
        let data = unity_t_series(31.6, |_| 0.0);
        let opts = FitOptions { initial: vec![(FitParam::Threshold, 31.6)], ..Default::default() };
        let fit = fit_noise_reduction(&data, FitModel::UnityT, &opts).unwrap();
        assert!(fit.converged);
        assert!((fit.get(FitParam::Threshold).unwrap() - 31.6).abs() < 1e-8);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn perturbed_guess_recovers() {
        let data = unity_t_series(31.6, |_| 0.0);
        for &g0 in &[31.6 * 0.8, 31.6 * 1.2] {
            let opts = FitOptions { initial: vec![(FitParam::Threshold, g0)], ..Default::default() };
            let fit = fit_noise_reduction(&data, FitModel::UnityT, &opts).unwrap();
            assert!((fit.get(FitParam::Threshold).unwrap() / 31.6 - 1.0).abs() < 1e-6, "{fit:?}");
            assert!(fit.identifiable);
        }
    }

    #[test]
    fn full_model_two_parameter_recovery() {
        let (t, l) = (0.6, 0.2);
        let pts: Vec<DataPoint> = (0..25)
            .map(|i| {
                let x = 1.0 + i as f64;
                DataPoint::new(x, noise_reduction_factor(t, l, gain_from_qn_db(x).unwrap()).unwrap())
            })
            .collect();
        let data = DataSeries::new(pts, "gqn_db", "R", Scale::Linear).unwrap();
        let opts = FitOptions { initial: vec![(FitParam::T, 0.5), (FitParam::L, 0.25)], ..Default::default() };
        let fit = fit_noise_reduction(&data, FitModel::Full(FitAxis::GqnDb), &opts).unwrap();
        assert!((fit.get(FitParam::T).unwrap() - t).abs() < 1e-6, "{fit:?}");
        assert!((fit.get(FitParam::L).unwrap() - l).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn db_scale_with_offset() {
        let (t, g) = (0.25, gain_from_qn_db(18.0).unwrap());
        let pts: Vec<DataPoint> = (0..30)
            .map(|i| {
                let x = i as f64 / 30.0;
                DataPoint::new(x, db(noise_reduction_factor(t, x, g).unwrap()).unwrap() + 0.5)
            })
            .collect();
        let data = DataSeries::new(pts, "l", "R", Scale::Db).unwrap();
        let opts = FitOptions {
            initial: vec![(FitParam::T, 0.3), (FitParam::Gain, 5.0)],
            fit_offset: true,
            ..Default::default()
        };
        let fit = fit_noise_reduction(&data, FitModel::Full(FitAxis::Loss), &opts).unwrap();
        assert!((fit.get(FitParam::Offset).unwrap() - 0.5).abs() < 1e-5, "{fit:?}");
        assert!((fit.get(FitParam::T).unwrap() - t).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn constant_data_is_degenerate() {
        let pts: Vec<DataPoint> = (0..10).map(|i| DataPoint::new(i as f64, 0.5)).collect();
        let data = DataSeries::new(pts, "gqn_db", "R", Scale::Linear).unwrap();
        assert!(matches!(
            fit_noise_reduction(&data, FitModel::Full(FitAxis::GqnDb), &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let data = DataSeries::new(vec![DataPoint::new(1.0, 0.9)], "gqn_db", "R", Scale::Linear).unwrap();
        assert!(matches!(
            fit_noise_reduction(&data, FitModel::Full(FitAxis::GqnDb), &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }
}
