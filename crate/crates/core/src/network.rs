//! Component-graph description of linear optical networks with feedback,
//! and a steady-state solver.
//!
//! Every component output port is an unknown operator expression. Each
//! component equation writes its outputs as a linear combination of its
//! inputs and their adjoints, so the unknowns `x` obey `x = M x + s`. The
//! amplifier couples a port to the adjoint of another, which is antilinear;
//! the system is therefore solved over doubled coordinates `(x, x†)` where it
//! becomes an ordinary complex-linear system `(I − M) z = s`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use num_traits::Zero;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

use crate::analytics::gain_from_qn_db;
use crate::bogoliubov::{check_gain, check_unit, idler_gain, Amplitudes, ModeId, ModeKind, OperatorExpr};
use crate::linalg::{spectral_radius, CMatrix, Lu};
use crate::{Error, NetworkIssue, Result, EPS_OSC};

pub mod random;

/// Port names. Which ones exist depends on the component kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    In,
    Out,
    IdlerIn,
    IdlerOut,
    In1,
    In2,
    Out1,
    Out2,
}

impl Port {
    pub fn as_str(self) -> &'static str {
        match self {
            Port::In => "in",
            Port::Out => "out",
            Port::IdlerIn => "idler_in",
            Port::IdlerOut => "idler_out",
            Port::In1 => "in1",
            Port::In2 => "in2",
            Port::Out1 => "out1",
            Port::Out2 => "out2",
        }
    }
}

impl FromStr for Port {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        Ok(match s {
            "in" => Port::In,
            "out" => Port::Out,
            "idler_in" => Port::IdlerIn,
            "idler_out" => Port::IdlerOut,
            "in1" => Port::In1,
            "in2" => Port::In2,
            "out1" => Port::Out1,
            "out2" => Port::Out2,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Amplifier gain as written by the user: amplitude gain `G` or quantum
/// noise gain in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSpec {
    Amplitude(f64),
    QnDb(f64),
}

impl GainSpec {
    pub fn amplitude(self) -> Result<f64> {
        match self {
            GainSpec::Amplitude(g) => {
                check_gain(g)?;
                Ok(g)
            }
            GainSpec::QnDb(db) => gain_from_qn_db(db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    Amplifier(GainSpec),
    BeamSplitter { t: f64 },
    Phase { phi: f64 },
    Loss { l: f64 },
}

impl ComponentKind {
    pub fn inputs(&self) -> &'static [Port] {
        match self {
            ComponentKind::Amplifier(_) => &[Port::In, Port::IdlerIn],
            ComponentKind::BeamSplitter { .. } => &[Port::In1, Port::In2],
            ComponentKind::Phase { .. } | ComponentKind::Loss { .. } => &[Port::In],
        }
    }

    pub fn outputs(&self) -> &'static [Port] {
        match self {
            ComponentKind::Amplifier(_) => &[Port::Out, Port::IdlerOut],
            ComponentKind::BeamSplitter { .. } => &[Port::Out1, Port::Out2],
            ComponentKind::Phase { .. } | ComponentKind::Loss { .. } => &[Port::Out],
        }
    }

    pub fn has_port(&self, port: Port) -> bool {
        self.inputs().contains(&port) || self.outputs().contains(&port)
    }

    fn check(&self, comp: &str) -> core::result::Result<(), NetworkIssue> {
        let bad = |name: &'static str, value: f64| NetworkIssue::Param { comp: comp.to_string(), name, value };
        match *self {
            ComponentKind::Amplifier(GainSpec::Amplitude(g)) => check_gain(g).map_err(|_| bad("gain", g)),
            ComponentKind::Amplifier(GainSpec::QnDb(db)) => gain_from_qn_db(db).map(|_| ()).map_err(|_| bad("gain_db", db)),
            ComponentKind::BeamSplitter { t } => check_unit("T", t).map_err(|_| bad("t", t)),
            ComponentKind::Loss { l } => check_unit("L", l).map_err(|_| bad("l", l)),
            ComponentKind::Phase { phi } if phi.is_finite() => Ok(()),
            ComponentKind::Phase { phi } => Err(bad("phi", phi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub id: String,
    pub kind: ComponentKind,
}

impl ComponentSpec {
    pub fn new(id: impl Into<String>, kind: ComponentKind) -> Self {
        Self { id: id.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub comp: String,
    pub port: Port,
}

impl PortRef {
    pub fn new(comp: impl Into<String>, port: Port) -> Self {
        Self { comp: comp.into(), port }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.comp, self.port)
    }
}

/// Driving end of a link: an input mode or a component output port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Mode(String),
    Port(PortRef),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Mode(m) => f.write_str(m),
            Endpoint::Port(p) => p.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: Endpoint,
    pub to: PortRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub mode: ModeId,
    /// Present exactly for coherent modes.
    pub amplitude: Option<Complex64>,
}

impl Source {
    pub fn vacuum(name: impl Into<String>) -> Self {
        Self { mode: ModeId::vacuum(name), amplitude: None }
    }

    pub fn idler(name: impl Into<String>) -> Self {
        Self { mode: ModeId::idler(name), amplitude: None }
    }

    pub fn coherent(name: impl Into<String>, amplitude: Complex64) -> Self {
        Self { mode: ModeId::coherent(name), amplitude: Some(amplitude) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputDecl {
    pub name: String,
    pub port: PortRef,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub sources: Vec<Source>,
    pub components: Vec<ComponentSpec>,
    pub links: Vec<Link>,
    pub outputs: Vec<OutputDecl>,
}

/// Name of the vacuum ancilla a loss component injects.
pub fn ancilla_name(component_id: &str) -> String {
    format!("{component_id}.vac")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Driver {
    Mode(usize),
    Unknown(usize),
}

/// Index tables produced by validation.
struct Topology {
    modes: Vec<ModeId>,
    /// `(component index, port)` for every unknown, in component order.
    unknowns: Vec<(usize, Port)>,
    /// Per component, the driver of each entry of `kind.inputs()`.
    drivers: Vec<Vec<Driver>>,
    /// Per component, its ancilla mode index (loss only).
    ancilla: Vec<Option<usize>>,
    gains: Vec<f64>,
    outputs: Vec<(String, usize)>,
}

impl NetworkSpec {
    /// Checks every structural invariant; the solver relies on this.
    pub fn validate(&self) -> Result<()> {
        self.topology().map(|_| ())
    }

    fn topology(&self) -> Result<Topology> {
        let err = |issue| Error::MalformedNetwork(issue);
        if self.components.is_empty() {
            return Err(err(NetworkIssue::Empty));
        }
        let mut comp_index = BTreeMap::new();
        let mut gains = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            if comp_index.insert(c.id.as_str(), i).is_some() {
                return Err(err(NetworkIssue::DuplicateComponent(c.id.clone())));
            }
            c.kind.check(&c.id).map_err(err)?;
            gains.push(match c.kind {
                ComponentKind::Amplifier(g) => g.amplitude()?,
                _ => 1.0,
            });
        }

        let mut modes: Vec<ModeId> = Vec::new();
        let mut mode_index = BTreeMap::new();
        for s in &self.sources {
            if mode_index.insert(s.mode.name.clone(), modes.len()).is_some() {
                return Err(err(NetworkIssue::DuplicateMode(s.mode.name.clone())));
            }
            let amplitude_ok = match (s.mode.kind, s.amplitude) {
                (ModeKind::Coherent, Some(a)) => a.is_finite(),
                (ModeKind::Coherent, None) => false,
                (_, a) => a.is_none(),
            };
            if !amplitude_ok {
                return Err(err(NetworkIssue::BadAmplitude(s.mode.name.clone())));
            }
            modes.push(s.mode.clone());
        }
        let mut ancilla = vec![None; self.components.len()];
        for (i, c) in self.components.iter().enumerate() {
            if let ComponentKind::Loss { .. } = c.kind {
                let name = ancilla_name(&c.id);
                if mode_index.insert(name.clone(), modes.len()).is_some() {
                    return Err(err(NetworkIssue::DuplicateMode(name)));
                }
                ancilla[i] = Some(modes.len());
                modes.push(ModeId::vacuum(name));
            }
        }

        let mut unknowns = Vec::new();
        let mut unknown_index = BTreeMap::new();
        for (i, c) in self.components.iter().enumerate() {
            for &p in c.kind.outputs() {
                unknown_index.insert((i, p), unknowns.len());
                unknowns.push((i, p));
            }
        }

        let resolve_port = |r: &PortRef| -> core::result::Result<(usize, &ComponentKind), NetworkIssue> {
            let &i = comp_index.get(r.comp.as_str()).ok_or_else(|| NetworkIssue::UnknownComponent(r.comp.clone()))?;
            let kind = &self.components[i].kind;
            if !kind.has_port(r.port) {
                return Err(NetworkIssue::UnknownPort { comp: r.comp.clone(), port: r.port.to_string() });
            }
            Ok((i, kind))
        };

        let mut used: BTreeMap<Endpoint, ()> = BTreeMap::new();
        let mut use_once = |e: &Endpoint| -> core::result::Result<(), NetworkIssue> {
            if used.insert(e.clone(), ()).is_some() {
                Err(NetworkIssue::ReusedSource(e.to_string()))
            } else {
                Ok(())
            }
        };
        let as_output = |r: &PortRef| -> core::result::Result<usize, NetworkIssue> {
            let (i, kind) = resolve_port(r)?;
            if !kind.outputs().contains(&r.port) {
                return Err(NetworkIssue::NotAnOutput { comp: r.comp.clone(), port: r.port.to_string() });
            }
            Ok(unknown_index[&(i, r.port)])
        };

        let mut driven: BTreeMap<(usize, Port), Driver> = BTreeMap::new();
        for link in &self.links {
            let driver = match &link.from {
                Endpoint::Mode(m) => {
                    let &k = mode_index.get(m.as_str()).ok_or_else(|| err(NetworkIssue::UnknownMode(m.clone())))?;
                    if ancilla.contains(&Some(k)) {
                        // ancillas are internal to their loss component
                        return Err(err(NetworkIssue::UnknownMode(m.clone())));
                    }
                    Driver::Mode(k)
                }
                Endpoint::Port(r) => Driver::Unknown(as_output(r).map_err(err)?),
            };
            use_once(&link.from).map_err(err)?;
            let (ti, tkind) = resolve_port(&link.to).map_err(err)?;
            if !tkind.inputs().contains(&link.to.port) {
                return Err(err(NetworkIssue::NotAnInput { comp: link.to.comp.clone(), port: link.to.port.to_string() }));
            }
            if driven.insert((ti, link.to.port), driver).is_some() {
                return Err(err(NetworkIssue::DuplicateDriver { comp: link.to.comp.clone(), port: link.to.port.to_string() }));
            }
        }

        let mut drivers = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            let mut ds = Vec::new();
            for &p in c.kind.inputs() {
                let d = driven
                    .get(&(i, p))
                    .copied()
                    .ok_or_else(|| err(NetworkIssue::UnconnectedInput { comp: c.id.clone(), port: p.to_string() }))?;
                ds.push(d);
            }
            drivers.push(ds);
        }

        let mut outputs = Vec::new();
        let mut names = BTreeMap::new();
        for o in &self.outputs {
            if names.insert(o.name.as_str(), ()).is_some() {
                return Err(err(NetworkIssue::DuplicateOutput(o.name.clone())));
            }
            let u = as_output(&o.port).map_err(err)?;
            use_once(&Endpoint::Port(o.port.clone())).map_err(err)?;
            outputs.push((o.name.clone(), u));
        }

        Ok(Topology { modes, unknowns, drivers, ancilla, gains, outputs })
    }

    /// Coherent amplitudes declared by the sources.
    pub fn amplitudes(&self) -> Amplitudes {
        self.sources
            .iter()
            .filter_map(|s| s.amplitude.map(|a| (s.mode.name.clone(), a)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// Loop denominator magnitude below [`EPS_OSC`].
    NearOscillation,
    /// Round-trip loop gain ≥ 1: the steady state exists but the loop
    /// cannot be reached by iterating the feedback.
    PositiveFeedbackUnstable,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::NearOscillation => "near_oscillation",
            Stability::PositiveFeedbackUnstable => "positive_feedback_unstable",
        }
    }

    pub fn classify(loop_gain: f64, denom_mag: f64) -> Self {
        if !(denom_mag >= EPS_OSC) {
            Stability::NearOscillation
        } else if loop_gain >= 1.0 {
            Stability::PositiveFeedbackUnstable
        } else {
            Stability::Stable
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Declared outputs in declaration order.
    pub outputs: Vec<(String, OperatorExpr)>,
    /// Spectral radius of the round-trip matrix through a feedback vertex
    /// set (0 for acyclic networks).
    pub loop_gain: f64,
    /// `√|det(I − M)|`; reduces to `|1 + G e^{iφ} √((1−T)(1−L))|` for a single loop.
    pub denom_mag: f64,
    pub stability: Stability,
    pub amplitudes: Amplitudes,
}

impl SolveResult {
    pub fn output(&self, name: &str) -> Option<&OperatorExpr> {
        self.outputs.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

/// Steady-state solution of a validated network.
pub fn solve(net: &NetworkSpec) -> Result<SolveResult> {
    let topo = net.topology()?;
    let k = topo.modes.len();
    let p = topo.unknowns.len();
    let n = 2 * p;
    let mut m = CMatrix::zeros(n, n);
    let mut s = CMatrix::zeros(n, 2 * k);

    // row `u` holds x_u, row `p + u` holds x_u†
    let mut add = |row: usize, plain: Complex64, adj: Complex64, d: Driver| match d {
        Driver::Unknown(v) => {
            m[(row, v)] += plain;
            m[(row, p + v)] += adj;
            m[(p + row, p + v)] += plain.conj();
            m[(p + row, v)] += adj.conj();
        }
        Driver::Mode(j) => {
            s[(row, j)] += plain;
            s[(row, k + j)] += adj;
            s[(p + row, k + j)] += plain.conj();
            s[(p + row, j)] += adj.conj();
        }
    };
    let re = |x: f64| Complex64::new(x, 0.0);
    let zero = Complex64::zero();

    for (u, &(ci, port)) in topo.unknowns.iter().enumerate() {
        let d = &topo.drivers[ci];
        match (net.components[ci].kind, port) {
            (ComponentKind::Amplifier(_), _) => {
                let gain = topo.gains[ci];
                let g = idler_gain(gain);
                let (main, other) = if port == Port::Out { (d[0], d[1]) } else { (d[1], d[0]) };
                add(u, re(gain), zero, main);
                add(u, zero, re(g), other);
            }
            (ComponentKind::BeamSplitter { t }, _) => {
                let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
                if port == Port::Out1 {
                    add(u, re(st), zero, d[0]);
                    add(u, re(sr), zero, d[1]);
                } else {
                    add(u, re(st), zero, d[1]);
                    add(u, re(-sr), zero, d[0]);
                }
            }
            (ComponentKind::Phase { phi }, _) => add(u, Complex64::cis(phi), zero, d[0]),
            (ComponentKind::Loss { l }, _) => {
                add(u, re((1.0 - l).sqrt()), zero, d[0]);
                let anc = topo.ancilla[ci].expect("loss component owns an ancilla");
                add(u, re(l.sqrt()), zero, Driver::Mode(anc));
            }
        }
    }

    let mut a = CMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= m[(i, j)];
        }
    }
    let lu = Lu::new(a).ok_or(Error::SingularLoop { denom_mag: 0.0 })?;
    let denom_mag = lu.det().norm().sqrt();
    let x = lu.solve(&s);

    let mut outputs = Vec::with_capacity(topo.outputs.len());
    for (name, u) in &topo.outputs {
        let row = x.row(*u);
        let expr = OperatorExpr::from_parts(
            topo.modes.iter().cloned().zip(row[..k].iter().copied()),
            topo.modes.iter().cloned().zip(row[k..].iter().copied()),
            zero,
        );
        if !expr.is_finite() {
            return Err(Error::SingularLoop { denom_mag });
        }
        outputs.push((name.clone(), expr));
    }

    let loop_gain = loop_gain(&m);
    Ok(SolveResult {
        outputs,
        loop_gain,
        denom_mag,
        stability: Stability::classify(loop_gain, denom_mag),
        amplitudes: net.amplitudes(),
    })
}

/// Targets of DFS back edges in the dependency graph `j → i` for `m[i][j] ≠ 0`;
/// removing them leaves the graph acyclic.
fn feedback_vertex_set(m: &CMatrix) -> Vec<usize> {
    let n = m.rows();
    let succ: Vec<Vec<usize>> = (0..n).map(|j| (0..n).filter(|&i| !m[(i, j)].is_zero()).collect()).collect();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    let mut in_set = vec![false; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(top) = stack.last_mut() {
            let (v, next) = *top;
            if next < succ[v].len() {
                top.1 += 1;
                let w = succ[v][next];
                match mark[w] {
                    Mark::New => {
                        mark[w] = Mark::Active;
                        stack.push((w, 0));
                    }
                    Mark::Active => in_set[w] = true,
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    (0..n).filter(|&i| in_set[i]).collect()
}

/// Spectral radius of the round-trip transfer `M_FF + M_FN (I − M_NN)⁻¹ M_NF`
/// through a feedback vertex set `F`. For a single loop this is the modulus
/// of the product of the gains around it.
fn loop_gain(m: &CMatrix) -> f64 {
    let fvs = feedback_vertex_set(m);
    if fvs.is_empty() {
        return 0.0;
    }
    let rest: Vec<usize> = (0..m.rows()).filter(|i| !fvs.contains(i)).collect();
    let mut round_trip = m.sub_matrix(&fvs, &fvs);
    if !rest.is_empty() {
        let mut a = CMatrix::identity(rest.len());
        let m_nn = m.sub_matrix(&rest, &rest);
        for i in 0..rest.len() {
            for j in 0..rest.len() {
                a[(i, j)] -= m_nn[(i, j)];
            }
        }
        // I − M_NN is unit triangular up to ordering, never singular
        let lu = Lu::new(a).expect("acyclic remainder");
        let through = m.sub_matrix(&fvs, &rest).mul(&lu.solve(&m.sub_matrix(&rest, &fvs)));
        for i in 0..fvs.len() {
            for j in 0..fvs.len() {
                round_trip[(i, j)] += through[(i, j)];
            }
        }
    }
    spectral_radius(&round_trip).unwrap_or(f64::NAN)
}

/// Mode and output names used by [`canonical_network`].
pub mod canonical {
    pub const INPUT: &str = "b0";
    pub const IDLER: &str = "S";
    pub const AMP: &str = "RA";
    pub const TAP: &str = "TAP";
    pub const PHASE: &str = "PZT";
    pub const LOSS: &str = "ATT";
    /// Vacuum entering through the feedback loss.
    pub const LOSS_VACUUM: &str = "ATT.vac";
    pub const OUTPUT: &str = "b_out";
}

/// Single-path feedback amplifier: the amplifier output hits a tap of
/// transmissivity `T`; the tap's second output runs through the phase
/// shifter and the loss back into the amplifier input. The phase shifter
/// sits before the loss so the loss vacuum enters without the feedback
/// phase. `seed` turns the external input `b0` into a coherent mode.
pub fn canonical_network(t: f64, l: f64, gain: f64, phi: f64, seed: Option<Complex64>) -> NetworkSpec {
    use canonical::*;
    let port = |c: &str, p| PortRef::new(c, p);
    let link = |from: Endpoint, to: PortRef| Link { from, to };
    NetworkSpec {
        sources: vec![
            match seed {
                Some(a) => Source::coherent(INPUT, a),
                None => Source::vacuum(INPUT),
            },
            Source::idler(IDLER),
        ],
        components: vec![
            ComponentSpec::new(AMP, ComponentKind::Amplifier(GainSpec::Amplitude(gain))),
            ComponentSpec::new(TAP, ComponentKind::BeamSplitter { t }),
            ComponentSpec::new(PHASE, ComponentKind::Phase { phi }),
            ComponentSpec::new(LOSS, ComponentKind::Loss { l }),
        ],
        links: vec![
            link(Endpoint::Port(port(AMP, Port::Out)), port(TAP, Port::In1)),
            link(Endpoint::Mode(INPUT.into()), port(TAP, Port::In2)),
            link(Endpoint::Port(port(TAP, Port::Out2)), port(PHASE, Port::In)),
            link(Endpoint::Port(port(PHASE, Port::Out)), port(LOSS, Port::In)),
            link(Endpoint::Port(port(LOSS, Port::Out)), port(AMP, Port::In)),
            link(Endpoint::Mode(IDLER.into()), port(AMP, Port::IdlerIn)),
        ],
        outputs: vec![OutputDecl { name: OUTPUT.into(), port: port(TAP, Port::Out1) }],
    }
}

fn check_feedback_params(t: f64, l: f64, gain: f64, phi: f64) -> Result<()> {
    check_unit("T", t)?;
    check_unit("L", l)?;
    check_gain(gain)?;
    if !phi.is_finite() {
        return Err(Error::ParamOutOfRange { name: "phi", value: phi });
    }
    Ok(())
}

/// Builds and solves [`canonical_network`].
pub fn canonical_feedback(t: f64, l: f64, gain: f64, phi: f64) -> Result<SolveResult> {
    check_feedback_params(t, l, gain, phi)?;
    solve(&canonical_network(t, l, gain, phi, None))
}

/// `G_th = 1/√((1−T)(1−L))`, infinite when either factor vanishes.
pub fn threshold_gain(t: f64, l: f64) -> Result<f64> {
    check_unit("T", t)?;
    check_unit("L", l)?;
    let prod = (1.0 - t) * (1.0 - l);
    Ok(if prod == 0.0 { f64::INFINITY } else { 1.0 / prod.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub stability: Stability,
    pub loop_gain: f64,
    pub denom_mag: f64,
}

/// Closed-form loop diagnostics of the canonical network:
/// `r = G√((1−T)(1−L))`, `D = |1 + G e^{iφ} √((1−T)(1−L))|`.
pub fn stability_report(t: f64, l: f64, gain: f64, phi: f64) -> StabilityReport {
    let loop_gain = gain * ((1.0 - t) * (1.0 - l)).sqrt();
    let denom_mag = (Complex64::new(1.0, 0.0) + Complex64::cis(phi) * loop_gain).norm();
    StabilityReport { stability: Stability::classify(loop_gain, denom_mag), loop_gain, denom_mag }
}

#[cfg(test)]
mod tests {
    use super::canonical::*;
    use super::*;
    use crate::bogoliubov::{commutator_norm, quadrature_variance};
    use core::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Closed-form coefficients straight from the loop algebra.
    fn closed_form(t: f64, l: f64, gain: f64, phi: f64) -> (Complex64, Complex64, Complex64) {
        let e = Complex64::cis(phi);
        let d = 1.0 + e * gain * ((1.0 - t) * (1.0 - l)).sqrt();
        let a = ((1.0 - t).sqrt() + e * gain * (1.0 - l).sqrt()) / d;
        let b = c(gain * (t * l).sqrt(), 0.0) / d;
        let cc = c(idler_gain(gain) * t.sqrt(), 0.0) / d;
        (a, b, cc)
    }

    #[test]
    fn acyclic_phase_chain() {
        let net = NetworkSpec {
            sources: vec![Source::vacuum("b0")],
            components: vec![ComponentSpec::new("P", ComponentKind::Phase { phi: PI })],
            links: vec![Link { from: Endpoint::Mode("b0".into()), to: PortRef::new("P", Port::In) }],
            outputs: vec![OutputDecl { name: "o".into(), port: PortRef::new("P", Port::Out) }],
        };
        let r = solve(&net).unwrap();
        let o = r.output("o").unwrap();
        assert!((o.coeff_ann_named("b0") - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(r.loop_gain, 0.0);
        assert!((r.denom_mag - 1.0).abs() < 1e-15);
        assert_eq!(r.stability, Stability::Stable);
    }

    #[test]
    fn canonical_matches_closed_form_coefficients() {
        for &(t, l, gain, phi) in &[
            (0.5, 0.3, 1.2, 0.0),
            (0.9, 0.1, 2.0, 1.0),
            (0.25, 0.01, 5.66, 0.0),
            (0.999, 0.0, 20.0, 2.5),
            (0.3, 0.7, 1.0, -0.4),
        ] {
            let r = canonical_feedback(t, l, gain, phi).unwrap();
            let out = r.output(OUTPUT).unwrap();
            let (a, b, cc) = closed_form(t, l, gain, phi);
            assert!((out.coeff_ann_named(INPUT) - a).norm() < 1e-12);
            assert!((out.coeff_ann_named(LOSS_VACUUM) - b).norm() < 1e-12);
            assert!((out.coeff_cre_named(IDLER) - cc).norm() < 1e-12);
            assert!(out.coeff_cre_named(INPUT).norm() < 1e-12);
            assert!((commutator_norm(out) - 1.0).abs() < 1e-10);
            let rep = stability_report(t, l, gain, phi);
            assert!((r.loop_gain - rep.loop_gain).abs() < 1e-12, "{} vs {}", r.loop_gain, rep.loop_gain);
            assert!((r.denom_mag - rep.denom_mag).abs() < 1e-12);
            assert_eq!(r.stability, rep.stability);
        }
    }

    #[test]
    fn canonical_without_feedback_gives_reference_noise() {
        let gain = 3.0;
        for &t in &[0.0, 0.25, 0.6, 1.0] {
            let r = canonical_feedback(t, 1.0, gain, 0.7).unwrap();
            let v = quadrature_variance(r.output(OUTPUT).unwrap(), 0.0).value();
            assert!((v - (t * (2.0 * gain * gain - 1.0) + 1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_zero_tap_passes_input() {
        let r = canonical_feedback(0.0, 0.4, 3.0, 0.0).unwrap();
        let out = r.output(OUTPUT).unwrap();
        assert!((out.coeff_ann_named(INPUT) - c(1.0, 0.0)).norm() < 1e-12);
        assert!((quadrature_variance(out, 0.0).value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_full_transmission_is_bare_amplifier() {
        let r = canonical_feedback(1.0, 0.3, 5.0, 0.0).unwrap();
        assert!((quadrature_variance(r.output(OUTPUT).unwrap(), 0.0).value() - 49.0).abs() < 1e-10);
        assert_eq!(r.loop_gain, 0.0);
    }

    #[test]
    fn unit_gain_adds_nothing() {
        for k in 0..8 {
            let r = canonical_feedback(0.5, 0.0, 1.0, k as f64 * 0.8).unwrap();
            assert!((quadrature_variance(r.output(OUTPUT).unwrap(), 0.0).value() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn near_threshold_at_33db() {
        let gain = gain_from_qn_db(33.0).unwrap();
        let gth = threshold_gain(0.999, 0.0).unwrap();
        assert!((gain / gth - 1.0).abs() < 1e-3);
        let r = canonical_feedback(0.999, 0.0, gain, PI).unwrap();
        // denominator ~1e-3: close to oscillation, yet above EPS_OSC
        assert!(r.denom_mag < 1e-3);
        assert_eq!(r.stability, Stability::Stable);
        assert_eq!(stability_report(0.999, 0.0, gain, PI).stability, Stability::Stable);
    }

    #[test]
    fn threshold_values() {
        assert!((threshold_gain(0.75, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(threshold_gain(1.0, 0.3).unwrap(), f64::INFINITY);
        assert_eq!(threshold_gain(0.3, 1.0).unwrap(), f64::INFINITY);
        assert!(threshold_gain(1.2, 0.0).is_err());
        let gth = threshold_gain(0.25, 0.75).unwrap();
        assert!((gth - 1.0 / 0.1875f64.sqrt()).abs() < 1e-15);
        assert!((gth - 2.3094).abs() < 1e-4);
        // the canonical denominator vanishes there at φ = π
        assert!(stability_report(0.25, 0.75, gth, PI).denom_mag < 1e-15);
        assert!(stability_report(0.25, 0.75, gth * 0.99, PI).denom_mag > 1e-3);
    }

    #[test]
    fn stability_classes() {
        let rep = stability_report(0.5, 0.0, 1.2, 0.0);
        assert!((rep.loop_gain - 1.2 * 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rep.stability, Stability::Stable);
        let g18 = gain_from_qn_db(23.0).unwrap();
        let rep = stability_report(0.25, 0.01, g18, 0.0);
        assert!(rep.loop_gain > 1.0);
        assert_eq!(rep.stability, Stability::PositiveFeedbackUnstable);
        let solved = canonical_feedback(0.25, 0.01, g18, 0.0).unwrap();
        assert_eq!(solved.stability, Stability::PositiveFeedbackUnstable);
        assert!((commutator_norm(solved.output(OUTPUT).unwrap()) - 1.0).abs() < 1e-10);
        for &(t, l) in &[(0.5, 0.0), (0.9, 0.3), (0.2, 0.5)] {
            let gth = threshold_gain(t, l).unwrap();
            assert_eq!(stability_report(t, l, gth, PI).stability, Stability::NearOscillation);
        }
    }

    #[test]
    fn exact_singularity_is_an_error() {
        // T = 0.75 → G_th = 2 exactly; e^{iπ} carries a 1e-16 imaginary
        // residue so the pivot may survive, but never as a stable result
        match canonical_feedback(0.75, 0.0, 2.0, PI) {
            Err(Error::SingularLoop { .. }) => {}
            Ok(r) => assert_eq!(r.stability, Stability::NearOscillation),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn direct_self_loop() {
        // amplifier output wired straight back into its own input
        let net = NetworkSpec {
            sources: vec![Source::idler("S")],
            components: vec![ComponentSpec::new("RA", ComponentKind::Amplifier(GainSpec::Amplitude(1.5)))],
            links: vec![
                Link { from: Endpoint::Port(PortRef::new("RA", Port::Out)), to: PortRef::new("RA", Port::In) },
                Link { from: Endpoint::Mode("S".into()), to: PortRef::new("RA", Port::IdlerIn) },
            ],
            outputs: vec![OutputDecl { name: "idler".into(), port: PortRef::new("RA", Port::IdlerOut) }],
        };
        let r = solve(&net).unwrap();
        assert!((r.loop_gain - 1.5).abs() < 1e-12);
        assert!((r.denom_mag - 0.5).abs() < 1e-12);
        assert_eq!(r.stability, Stability::PositiveFeedbackUnstable);
        // a_out = G a_out + g S†  ⇒  a_out = g S†/(1 − G); idler_out = G S + g a_out†
        let o = r.output("idler").unwrap();
        let g = idler_gain(1.5);
        let expect = 1.5 + g * g / (1.0 - 1.5);
        assert!((o.coeff_ann_named("S") - c(expect, 0.0)).norm() < 1e-12);
        assert!((commutator_norm(o) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let base = canonical_network(0.5, 0.1, 2.0, 0.0, None);
        assert!(base.validate().is_ok());

        let mut n = base.clone();
        n.links.remove(5);
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::UnconnectedInput { .. }))));

        let mut n = base.clone();
        n.links.push(Link { from: Endpoint::Port(PortRef::new(AMP, Port::IdlerOut)), to: PortRef::new(AMP, Port::IdlerIn) });
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::DuplicateDriver { .. }))));

        let mut n = base.clone();
        n.outputs.push(OutputDecl { name: "x".into(), port: PortRef::new(TAP, Port::Out2) });
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::ReusedSource(_)))));

        let mut n = base.clone();
        n.sources.push(Source::vacuum(LOSS_VACUUM));
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::DuplicateMode(_)))));

        let mut n = base.clone();
        n.components[1].kind = ComponentKind::BeamSplitter { t: 1.5 };
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::Param { .. }))));

        let mut n = base.clone();
        n.links[0].to = PortRef::new(TAP, Port::Out1);
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::NotAnInput { .. }))));

        let mut n = base.clone();
        n.links[0].to = PortRef::new(TAP, Port::In);
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::UnknownPort { .. }))));

        assert!(matches!(NetworkSpec::default().validate(), Err(Error::MalformedNetwork(NetworkIssue::Empty))));

        let mut n = base.clone();
        n.sources[0] = Source { mode: ModeId::coherent(INPUT), amplitude: None };
        assert!(matches!(n.validate(), Err(Error::MalformedNetwork(NetworkIssue::BadAmplitude(_)))));
    }

    #[test]
    fn gain_in_db() {
        let mut net = canonical_network(0.5, 0.1, 1.0, 0.0, None);
        let g = gain_from_qn_db(18.0).unwrap();
        net.components[0].kind = ComponentKind::Amplifier(GainSpec::QnDb(18.0));
        let a = solve(&net).unwrap();
        let b = canonical_feedback(0.5, 0.1, g, 0.0).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }
}
