//! Exact linear-operator algebra for bosonic modes.
//!
//! An [`OperatorExpr`] is a linear (Bogoliubov) combination
//! `Σ α_k a_k + Σ β_k a_k† + m` of input-mode operators plus a c-number
//! displacement `m`. Every optical element acts on these expressions by a
//! linear map, and Gaussian statistics over vacuum inputs follow from the
//! coefficients alone.

use alloc::collections::btree_map::{BTreeMap, Entry};
use alloc::string::String;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

use crate::{Error, Result};

/// Statistics class of an input mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeKind {
    Vacuum,
    /// Internal (idler) degree of freedom of an amplifier, e.g. an atomic spin wave.
    Idler,
    /// Vacuum fluctuations plus a displacement supplied through [`Amplitudes`].
    Coherent,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Vacuum => "vacuum",
            ModeKind::Idler => "idler",
            ModeKind::Coherent => "coherent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId {
    pub name: String,
    pub kind: ModeKind,
}

impl ModeId {
    pub fn new(name: impl Into<String>, kind: ModeKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn vacuum(name: impl Into<String>) -> Self {
        Self::new(name, ModeKind::Vacuum)
    }

    pub fn idler(name: impl Into<String>) -> Self {
        Self::new(name, ModeKind::Idler)
    }

    pub fn coherent(name: impl Into<String>) -> Self {
        Self::new(name, ModeKind::Coherent)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Coherent amplitudes keyed by mode name.
pub type Amplitudes = BTreeMap<String, Complex64>;

type CoeffMap = BTreeMap<ModeId, Complex64>;

/// `Σ α_k a_k + Σ β_k a_k† + mean`, stored sparsely. Absent modes have
/// coefficient exactly zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorExpr {
    ann: CoeffMap,
    cre: CoeffMap,
    mean: Complex64,
}

fn accumulate(map: &mut CoeffMap, mode: &ModeId, c: Complex64) {
    if c == Complex64::new(0.0, 0.0) {
        return;
    }
    match map.entry(mode.clone()) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            let sum = *o.get() + c;
            if sum == Complex64::new(0.0, 0.0) {
                o.remove();
            } else {
                *o.get_mut() = sum;
            }
        }
    }
}

impl OperatorExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The annihilation operator of `mode`.
    pub fn mode(mode: ModeId) -> Self {
        let mut ann = CoeffMap::new();
        ann.insert(mode, Complex64::new(1.0, 0.0));
        Self { ann, cre: CoeffMap::new(), mean: Complex64::new(0.0, 0.0) }
    }

    /// The creation operator of `mode`.
    pub fn creation(mode: ModeId) -> Self {
        Self::mode(mode).dagger()
    }

    pub fn constant(mean: Complex64) -> Self {
        Self { mean, ..Self::default() }
    }

    /// Builds an expression from explicit coefficient lists; repeated modes
    /// are summed and zero coefficients dropped.
    pub fn from_parts<A, B>(ann: A, cre: B, mean: Complex64) -> Self
    where
        A: IntoIterator<Item = (ModeId, Complex64)>,
        B: IntoIterator<Item = (ModeId, Complex64)>,
    {
        let mut out = Self::constant(mean);
        for (m, c) in ann {
            accumulate(&mut out.ann, &m, c);
        }
        for (m, c) in cre {
            accumulate(&mut out.cre, &m, c);
        }
        out
    }

    pub fn ann(&self) -> &BTreeMap<ModeId, Complex64> {
        &self.ann
    }

    pub fn cre(&self) -> &BTreeMap<ModeId, Complex64> {
        &self.cre
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    /// α coefficient of `mode` (zero when absent).
    pub fn coeff_ann(&self, mode: &ModeId) -> Complex64 {
        self.ann.get(mode).copied().unwrap_or_default()
    }

    /// β coefficient of `mode` (zero when absent).
    pub fn coeff_cre(&self, mode: &ModeId) -> Complex64 {
        self.cre.get(mode).copied().unwrap_or_default()
    }

    /// Looks up coefficients by mode name regardless of kind.
    pub fn coeff_ann_named(&self, name: &str) -> Complex64 {
        self.ann.iter().find(|(m, _)| m.name == name).map(|(_, c)| *c).unwrap_or_default()
    }

    pub fn coeff_cre_named(&self, name: &str) -> Complex64 {
        self.cre.iter().find(|(m, _)| m.name == name).map(|(_, c)| *c).unwrap_or_default()
    }

    pub fn contains_mode(&self, mode: &ModeId) -> bool {
        self.ann.contains_key(mode) || self.cre.contains_key(mode)
    }

    /// Every mode referenced by either coefficient map, in sorted order.
    pub fn modes(&self) -> impl Iterator<Item = &ModeId> {
        let mut all: alloc::vec::Vec<&ModeId> = self.ann.keys().chain(self.cre.keys()).collect();
        all.sort();
        all.dedup();
        all.into_iter()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite()
            && self.ann.values().all(|c| c.is_finite())
            && self.cre.values().all(|c| c.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = Self::constant(self.mean * c);
        for (m, v) in &self.ann {
            accumulate(&mut out.ann, m, v * c);
        }
        for (m, v) in &self.cre {
            accumulate(&mut out.cre, m, v * c);
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// Hermitian conjugate: coefficient maps swapped and conjugated.
    pub fn dagger(&self) -> Self {
        Self {
            ann: self.cre.iter().map(|(m, c)| (m.clone(), c.conj())).collect(),
            cre: self.ann.iter().map(|(m, c)| (m.clone(), c.conj())).collect(),
            mean: self.mean.conj(),
        }
    }

    /// Largest absolute coefficient difference against `other`, including the mean.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self - other;
        d.ann
            .values()
            .chain(d.cre.values())
            .map(|c| c.norm())
            .fold(d.mean.norm(), f64::max)
    }
}

impl Add for &OperatorExpr {
    type Output = OperatorExpr;

    fn add(self, rhs: &OperatorExpr) -> OperatorExpr {
        let mut out = self.clone();
        out.mean += rhs.mean;
        for (m, c) in &rhs.ann {
            accumulate(&mut out.ann, m, *c);
        }
        for (m, c) in &rhs.cre {
            accumulate(&mut out.cre, m, *c);
        }
        out
    }
}

impl Add for OperatorExpr {
    type Output = OperatorExpr;

    fn add(self, rhs: OperatorExpr) -> OperatorExpr {
        &self + &rhs
    }
}

impl Sub for &OperatorExpr {
    type Output = OperatorExpr;

    fn sub(self, rhs: &OperatorExpr) -> OperatorExpr {
        self + &(-rhs)
    }
}

impl Neg for &OperatorExpr {
    type Output = OperatorExpr;

    fn neg(self) -> OperatorExpr {
        self.scale_real(-1.0)
    }
}

impl Mul<Complex64> for &OperatorExpr {
    type Output = OperatorExpr;

    fn mul(self, rhs: Complex64) -> OperatorExpr {
        self.scale(rhs)
    }
}

impl Mul<f64> for &OperatorExpr {
    type Output = OperatorExpr;

    fn mul(self, rhs: f64) -> OperatorExpr {
        self.scale_real(rhs)
    }
}

/// Free-function form of [`OperatorExpr::dagger`].
pub fn dagger(expr: &OperatorExpr) -> OperatorExpr {
    expr.dagger()
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange { name, value })
    }
}

pub(crate) fn check_gain(gain: f64) -> Result<()> {
    if gain.is_finite() && gain >= 1.0 {
        Ok(())
    } else {
        Err(Error::GainOutOfRange(gain))
    }
}

/// `g = √(G² − 1)` for a validated amplitude gain.
pub fn idler_gain(gain: f64) -> f64 {
    (gain * gain - 1.0).max(0.0).sqrt()
}

/// Phase-insensitive amplifier:
/// `signal_out = G·signal + g·idler†`, `idler_out = G·idler + g·signal†`.
pub fn amplifier_map(
    gain: f64,
    signal_in: &OperatorExpr,
    idler_in: &OperatorExpr,
) -> Result<(OperatorExpr, OperatorExpr)> {
    check_gain(gain)?;
    let g = idler_gain(gain);
    let signal_out = &(signal_in * gain) + &(&idler_in.dagger() * g);
    let idler_out = &(idler_in * gain) + &(&signal_in.dagger() * g);
    Ok((signal_out, idler_out))
}

/// `out1 = √T·in1 + √(1−T)·in2`, `out2 = √T·in2 − √(1−T)·in1`.
pub fn beam_splitter_map(
    t: f64,
    in1: &OperatorExpr,
    in2: &OperatorExpr,
) -> Result<(OperatorExpr, OperatorExpr)> {
    check_unit("T", t)?;
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let out1 = &(in1 * st) + &(in2 * sr);
    let out2 = &(in2 * st) - &(in1 * sr);
    Ok((out1, out2))
}

/// Multiplies annihilation terms and the mean by `e^{iφ}`, creation terms by `e^{−iφ}`.
pub fn phase_shift_map(phi: f64, input: &OperatorExpr) -> OperatorExpr {
    let rot = Complex64::cis(phi);
    let mut out = OperatorExpr::constant(input.mean * rot);
    for (m, c) in &input.ann {
        accumulate(&mut out.ann, m, c * rot);
    }
    for (m, c) in &input.cre {
        accumulate(&mut out.cre, m, c * rot.conj());
    }
    out
}

/// `out = √(1−L)·in + √L·vac`, where `vac` must not already occur in `input`.
pub fn loss_map(l: f64, input: &OperatorExpr, vac: &ModeId) -> Result<OperatorExpr> {
    check_unit("L", l)?;
    if input.contains_mode(vac) {
        return Err(Error::ModeReuse(vac.name.clone()));
    }
    Ok(&(input * (1.0 - l).sqrt()) + &(&OperatorExpr::mode(vac.clone()) * l.sqrt()))
}

/// Quadrature variance in vacuum units (`X = a + a†`, vacuum = 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuadVariance(pub f64);

impl QuadVariance {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Effective per-mode coefficient `c_k = α_k e^{−iθ} + conj(β_k) e^{iθ}`
/// of `X_θ = Σ c_k a_k + h.c.`
pub(crate) fn quadrature_coefficients(
    expr: &OperatorExpr,
    theta: f64,
) -> impl Iterator<Item = (&ModeId, Complex64)> {
    let rot = Complex64::cis(-theta);
    expr.modes().map(move |m| (m, expr.coeff_ann(m) * rot + expr.coeff_cre(m).conj() * rot.conj()))
}

/// Variance of `X_θ = e^{−iθ}x + e^{iθ}x†` with every input mode in vacuum:
/// `Σ_k |α_k e^{−iθ} + conj(β_k) e^{iθ}|²`.
pub fn quadrature_variance(expr: &OperatorExpr, theta: f64) -> QuadVariance {
    QuadVariance(quadrature_coefficients(expr, theta).map(|(_, c)| c.norm_sqr()).sum())
}

/// Expectation value of the expression given coherent amplitudes for every
/// coherent mode it references.
pub fn mean_field(expr: &OperatorExpr, amplitudes: &Amplitudes) -> Result<Complex64> {
    let mut total = expr.mean;
    let coherent = |m: &ModeId| -> Result<Option<Complex64>> {
        if m.kind != ModeKind::Coherent {
            return Ok(None);
        }
        amplitudes.get(&m.name).copied().map(Some).ok_or_else(|| Error::UnassignedAmplitude(m.name.clone()))
    };
    for (m, a) in &expr.ann {
        if let Some(amp) = coherent(m)? {
            total += a * amp;
        }
    }
    for (m, b) in &expr.cre {
        if let Some(amp) = coherent(m)? {
            total += b * amp.conj();
        }
    }
    Ok(total)
}

/// `Σ|α_k|² − Σ|β_k|²`; equals 1 for any properly normalised output mode.
pub fn commutator_norm(expr: &OperatorExpr) -> f64 {
    let ann: f64 = expr.ann.values().map(|c| c.norm_sqr()).sum();
    let cre: f64 = expr.cre.values().map(|c| c.norm_sqr()).sum();
    ann - cre
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn b0() -> ModeId {
        ModeId::vacuum("b0")
    }

    fn spin() -> ModeId {
        ModeId::idler("S")
    }

    #[test]
    fn amplifier_identity_at_unit_gain() {
        let (s, _) = amplifier_map(1.0, &OperatorExpr::mode(b0()), &OperatorExpr::mode(spin())).unwrap();
        assert_eq!(s, OperatorExpr::mode(b0()));
    }

    #[test]
    fn amplifier_gain_two() {
        let (s, i) = amplifier_map(2.0, &OperatorExpr::mode(b0()), &OperatorExpr::mode(spin())).unwrap();
        assert_eq!(s.coeff_ann(&b0()), c(2.0, 0.0));
        assert!((s.coeff_cre(&spin()).re - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.ann().len(), 1);
        assert_eq!(s.cre().len(), 1);
        assert!((commutator_norm(&s) - 1.0).abs() < 1e-12);
        assert!((commutator_norm(&i) - 1.0).abs() < 1e-12);
        assert!((quadrature_variance(&s, 0.0).value() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn amplifier_rejects_bad_gain() {
        let x = OperatorExpr::mode(b0());
        assert_eq!(amplifier_map(0.5, &x, &x), Err(Error::GainOutOfRange(0.5)));
        assert!(amplifier_map(f64::NAN, &x, &x).is_err());
        assert!(amplifier_map(f64::INFINITY, &x, &x).is_err());
    }

    #[test]
    fn beam_splitter_limits() {
        let a = OperatorExpr::mode(b0());
        let b = OperatorExpr::mode(ModeId::vacuum("c0"));
        let (o1, o2) = beam_splitter_map(1.0, &a, &b).unwrap();
        assert_eq!((o1, o2), (a.clone(), b.clone()));
        let (o1, o2) = beam_splitter_map(0.0, &a, &b).unwrap();
        assert_eq!(o1, b);
        assert_eq!(o2, -&a);
        let (o1, _) = beam_splitter_map(0.5, &a, &b).unwrap();
        assert!((o1.coeff_ann(&b0()).re - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((o1.coeff_ann_named("c0").re - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((commutator_norm(&o1) - 1.0).abs() < 1e-15);
        assert!(matches!(beam_splitter_map(1.5, &a, &b), Err(Error::ParamOutOfRange { .. })));
        assert!(beam_splitter_map(f64::NAN, &a, &b).is_err());
    }

    #[test]
    fn phase_shift_basics() {
        let a = OperatorExpr::mode(b0());
        assert_eq!(phase_shift_map(0.0, &a), a);
        let flipped = phase_shift_map(PI, &a);
        assert!((flipped.coeff_ann(&b0()) - c(-1.0, 0.0)).norm() < 1e-15);
        let d = phase_shift_map(0.3, &a.dagger());
        assert!((d.coeff_cre(&b0()) - Complex64::cis(-0.3)).norm() < 1e-15);
    }

    #[test]
    fn loss_limits_and_reuse() {
        let a = OperatorExpr::mode(b0());
        let vac = ModeId::vacuum("c0");
        assert_eq!(loss_map(0.0, &a, &vac).unwrap(), a);
        assert_eq!(loss_map(1.0, &a, &vac).unwrap(), OperatorExpr::mode(vac.clone()));
        assert_eq!(loss_map(0.3, &a, &b0()), Err(Error::ModeReuse("b0".into())));
        assert!(loss_map(-0.1, &a, &vac).is_err());
    }

    #[test]
    fn dagger_cases() {
        let a = OperatorExpr::mode(b0());
        let d = dagger(&a);
        assert!(d.ann().is_empty());
        assert_eq!(d.coeff_cre(&b0()), c(1.0, 0.0));
        let ia = a.scale(c(0.0, 1.0));
        assert_eq!(ia.dagger().coeff_cre(&b0()), c(0.0, -1.0));
    }

    #[test]
    fn vacuum_variance_is_one() {
        let a = OperatorExpr::mode(b0());
        for k in 0..16 {
            assert!((quadrature_variance(&a, k as f64 * 0.4).value() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn same_mode_squeezed_variance() {
        let (mu, nu) = (c(2.0, 0.0), c(3f64.sqrt(), 0.0));
        let e = OperatorExpr::from_parts([(b0(), mu)], [(b0(), nu)], Complex64::default());
        let v = quadrature_variance(&e, 0.0).value();
        assert!((v - (mu + nu.conj()).norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn mean_field_cases() {
        let mut amps = Amplitudes::new();
        assert_eq!(mean_field(&OperatorExpr::mode(b0()), &amps).unwrap(), Complex64::default());
        let seed = ModeId::coherent("seed");
        let e = OperatorExpr::mode(seed.clone());
        assert_eq!(mean_field(&e, &amps), Err(Error::UnassignedAmplitude("seed".into())));
        amps.insert("seed".into(), c(0.5, 0.0));
        assert_eq!(mean_field(&e, &amps).unwrap(), c(0.5, 0.0));
        amps.insert("seed".into(), c(0.5, 0.25));
        let conj = mean_field(&e.dagger(), &amps).unwrap();
        assert_eq!(conj, c(0.5, -0.25));
    }

    #[test]
    fn displacement_tracks_through_maps() {
        let e = &OperatorExpr::mode(b0()) + &OperatorExpr::constant(c(1.0, 0.5));
        let (s, _) = amplifier_map(2.0, &e, &OperatorExpr::constant(c(0.0, 1.0))).unwrap();
        // G·m_s + g·conj(m_i)
        let expect = c(2.0, 1.0) + c(0.0, -1.0) * 3f64.sqrt();
        assert!((s.mean() - expect).norm() < 1e-14);
        assert!((phase_shift_map(0.7, &e).mean() - c(1.0, 0.5) * Complex64::cis(0.7)).norm() < 1e-15);
    }

    fn arb_mode() -> impl Strategy<Value = ModeId> {
        (0usize..4, prop_oneof![Just(ModeKind::Vacuum), Just(ModeKind::Idler)])
            .prop_map(|(i, k)| ModeId::new(alloc::format!("m{i}"), k))
    }

    fn arb_expr() -> impl Strategy<Value = OperatorExpr> {
        let coef = (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex64::new(a, b));
        (
            proptest::collection::vec((arb_mode(), coef.clone()), 0..4),
            proptest::collection::vec((arb_mode(), coef.clone()), 0..4),
            coef,
        )
            .prop_map(|(a, b, m)| OperatorExpr::from_parts(a, b, m))
    }

    proptest! {
        #[test]
        fn dagger_is_involution(e in arb_expr()) {
            prop_assert_eq!(e.dagger().dagger(), e);
        }

        #[test]
        fn phase_group_property(e in arb_expr(), p1 in -7.0f64..7.0, p2 in -7.0f64..7.0) {
            let lhs = phase_shift_map(p1, &phase_shift_map(p2, &e));
            let rhs = phase_shift_map(p1 + p2, &e);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }

        #[test]
        fn variance_nonnegative(e in arb_expr(), th in 0.0f64..7.0) {
            prop_assert!(quadrature_variance(&e, th).value() >= 0.0);
        }

        #[test]
        fn element_maps_preserve_commutator(
            gain in 1.0f64..20.0,
            t in 0.0f64..=1.0,
            l in 0.0f64..=1.0,
            phi in -7.0f64..7.0,
        ) {
            let a = OperatorExpr::mode(ModeId::vacuum("a"));
            let s = OperatorExpr::mode(ModeId::idler("s"));
            let (sig, idl) = amplifier_map(gain, &a, &s).unwrap();
            prop_assert!((commutator_norm(&sig) - 1.0).abs() < 1e-12 * gain * gain);
            prop_assert!((commutator_norm(&idl) - 1.0).abs() < 1e-12 * gain * gain);
            let b = OperatorExpr::mode(ModeId::vacuum("b"));
            let (o1, o2) = beam_splitter_map(t, &a, &b).unwrap();
            prop_assert!((commutator_norm(&o1) - 1.0).abs() < 1e-12);
            prop_assert!((commutator_norm(&o2) - 1.0).abs() < 1e-12);
            let p = phase_shift_map(phi, &o1);
            prop_assert!((commutator_norm(&p) - 1.0).abs() < 1e-12);
            let lossy = loss_map(l, &p, &ModeId::vacuum("v")).unwrap();
            prop_assert!((commutator_norm(&lossy) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn phase_insensitive_outputs_are_theta_independent(gain in 1.0f64..10.0, t in 0.0f64..=1.0) {
            let a = OperatorExpr::mode(ModeId::vacuum("a"));
            let s = OperatorExpr::mode(ModeId::idler("s"));
            let (sig, _) = amplifier_map(gain, &a, &s).unwrap();
            let (o1, _) = beam_splitter_map(t, &sig, &OperatorExpr::mode(ModeId::vacuum("b"))).unwrap();
            let vals: alloc::vec::Vec<f64> = (0..64).map(|k| quadrature_variance(&o1, k as f64 * 0.1).value()).collect();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(max - min < 1e-12);
        }
    }
}
