//! Line-oriented netlist language.
//!
//! ```text
//! # comment
//! mode b0 vacuum
//! mode S idler
//! mode seed coherent 1.5 -0.25
//! comp RA amp gain_db=33          # or gain=<amplitude>
//! comp TAP bs t=0.999
//! comp PZT phase phi=0
//! comp ATT loss l=0
//! link RA.out -> TAP.in1
//! link b0 -> TAP.in2
//! out TAP.out1 as b_out
//! ```
//!
//! Statements may appear in any order; names are resolved after the whole
//! file has been read so every problem is reported at once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use cfamp_core::network::{ComponentKind, ComponentSpec, Endpoint, GainSpec, Link, NetworkSpec, OutputDecl, Port, PortRef, Source};
use cfamp_core::{Complex64, Error, NetworkIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    SyntaxError,
    UnknownPort,
    UnknownName,
    UnconnectedInput,
    DuplicateDriver,
    Duplicate,
    InvalidNetwork,
}

/// A problem located in the source text. `line` and `column` are 1-based;
/// the column counts characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.severity, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl std::error::Error for Diagnostics {}

impl Diagnostics {
    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Mode(Source),
    Comp(ComponentSpec),
    Link(Link),
    Out(OutputDecl),
    Blank,
}

/// One source line: a statement plus its trailing comment, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub statement: Statement,
    pub comment: Option<String>,
    /// 1-based line number in the text this was parsed from.
    pub number: usize,
}

/// Parsed netlist that keeps statement order and comments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetlistDocument {
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(code: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (byte, column)
    for (col, (byte, ch)) in code.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                out.push(Token { text: &code[b..byte], column: c + 1 });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        out.push(Token { text: &code[b..], column: c + 1 });
    }
    out
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct LineParser<'a> {
    line: usize,
    end_column: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
}

type Fail = (DiagnosticKind, String, usize);

impl<'a> LineParser<'a> {
    fn next(&mut self, what: &str) -> Result<Token<'a>, Fail> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| (DiagnosticKind::SyntaxError, format!("expected {what}"), self.end_column))?;
        self.pos += 1;
        Ok(t)
    }

    fn finish(&self) -> Result<(), Fail> {
        match self.tokens.get(self.pos) {
            Some(t) => Err((DiagnosticKind::SyntaxError, format!("unexpected `{}`", t.text), t.column)),
            None => Ok(()),
        }
    }

    fn name(&mut self, what: &str) -> Result<(String, usize), Fail> {
        let t = self.next(what)?;
        if !is_name(t.text) {
            return Err((DiagnosticKind::SyntaxError, format!("invalid {what} `{}`", t.text), t.column));
        }
        Ok((t.text.to_string(), t.column))
    }

    fn number(&mut self, what: &str) -> Result<f64, Fail> {
        let t = self.next(what)?;
        parse_number(t.text).ok_or_else(|| (DiagnosticKind::SyntaxError, format!("invalid number `{}`", t.text), t.column))
    }

    fn keyword_value(&mut self, keys: &[&str]) -> Result<(String, f64), Fail> {
        let want = keys.iter().map(|k| format!("{k}=<value>")).collect::<Vec<_>>().join(" or ");
        let t = self.next(&want)?;
        let (k, v) = t.text.split_once('=').ok_or_else(|| (DiagnosticKind::SyntaxError, format!("expected {want}"), t.column))?;
        if !keys.contains(&k) {
            return Err((DiagnosticKind::SyntaxError, format!("expected {want}, found `{k}`"), t.column));
        }
        let value = parse_number(v).ok_or_else(|| (DiagnosticKind::SyntaxError, format!("invalid number `{v}`"), t.column + k.chars().count() + 1))?;
        Ok((k.to_string(), value))
    }

    fn port_ref(&mut self, what: &str) -> Result<(PortRef, usize), Fail> {
        let t = self.next(what)?;
        let (c, p) = t.text.split_once('.').ok_or_else(|| (DiagnosticKind::SyntaxError, format!("expected <component>.<port>, found `{}`", t.text), t.column))?;
        if !is_name(c) {
            return Err((DiagnosticKind::SyntaxError, format!("invalid component name `{c}`"), t.column));
        }
        let port: Port = p.parse().map_err(|_| (DiagnosticKind::UnknownPort, format!("unknown port `{p}`"), t.column + c.chars().count() + 1))?;
        Ok((PortRef::new(c, port), t.column))
    }

    fn endpoint(&mut self) -> Result<(Endpoint, usize), Fail> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| (DiagnosticKind::SyntaxError, "expected link source".to_string(), self.end_column))?;
        if t.text.contains('.') {
            let (p, c) = self.port_ref("link source")?;
            Ok((Endpoint::Port(p), c))
        } else {
            let (n, c) = self.name("mode name")?;
            Ok((Endpoint::Mode(n), c))
        }
    }

    fn statement(&mut self) -> Result<Statement, Fail> {
        let head = match self.tokens.first() {
            Some(t) => *t,
            None => return Ok(Statement::Blank),
        };
        self.pos = 1;
        let stmt = match head.text {
            "mode" => {
                let (name, _) = self.name("mode name")?;
                let kind = self.next("mode kind (vacuum, idler or coherent)")?;
                match kind.text {
                    "vacuum" => Statement::Mode(Source::vacuum(name)),
                    "idler" => Statement::Mode(Source::idler(name)),
                    "coherent" => {
                        let re = self.number("real part")?;
                        let im = self.number("imaginary part")?;
                        Statement::Mode(Source::coherent(name, Complex64::new(re, im)))
                    }
                    other => return Err((DiagnosticKind::SyntaxError, format!("unknown mode kind `{other}`"), kind.column)),
                }
            }
            "comp" => {
                let (id, _) = self.name("component id")?;
                let kind = self.next("component kind (amp, bs, loss or phase)")?;
                let k = match kind.text {
                    "amp" => match self.keyword_value(&["gain", "gain_db"])? {
                        (k, v) if k == "gain" => ComponentKind::Amplifier(GainSpec::Amplitude(v)),
                        (_, v) => ComponentKind::Amplifier(GainSpec::QnDb(v)),
                    },
                    "bs" => ComponentKind::BeamSplitter { t: self.keyword_value(&["t"])?.1 },
                    "loss" => ComponentKind::Loss { l: self.keyword_value(&["l"])?.1 },
                    "phase" => ComponentKind::Phase { phi: self.keyword_value(&["phi"])?.1 },
                    other => return Err((DiagnosticKind::SyntaxError, format!("unknown component kind `{other}`"), kind.column)),
                };
                Statement::Comp(ComponentSpec::new(id, k))
            }
            "link" => {
                let (from, _) = self.endpoint()?;
                let arrow = self.next("`->`")?;
                if arrow.text != "->" {
                    return Err((DiagnosticKind::SyntaxError, format!("expected `->`, found `{}`", arrow.text), arrow.column));
                }
                let (to, _) = self.port_ref("link target")?;
                Statement::Link(Link { from, to })
            }
            "out" => {
                let (port, _) = self.port_ref("output port")?;
                let kw = self.next("`as`")?;
                if kw.text != "as" {
                    return Err((DiagnosticKind::SyntaxError, format!("expected `as`, found `{}`", kw.text), kw.column));
                }
                let (name, _) = self.name("output name")?;
                Statement::Out(OutputDecl { name, port })
            }
            other => return Err((DiagnosticKind::SyntaxError, format!("unknown statement `{other}`"), head.column)),
        };
        self.finish()?;
        Ok(stmt)
    }
}

/// Accepts anything `f64::from_str` does except the textual infinities and NaN.
fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    if s.bytes().any(|b| b.is_ascii_alphabetic() && b != b'e' && b != b'E') {
        return None;
    }
    Some(v)
}

fn split_comment(raw: &str) -> (&str, Option<&str>) {
    match raw.find('#') {
        Some(i) => (&raw[..i], Some(&raw[i + 1..])),
        None => (raw, None),
    }
}

/// Column (1-based, in characters) of `needle` as a whole token in `code`.
fn token_column(code: &str, needle: &str) -> Option<usize> {
    tokenize(code).iter().find(|t| t.text == needle || t.text.split_once('.').map(|(c, _)| c) == Some(needle)).map(|t| t.column)
}

impl NetlistDocument {
    /// Syntax-level parse. Names are not resolved; see [`NetlistDocument::to_spec`].
    pub fn parse(text: &str) -> Result<Self, Diagnostics> {
        let mut lines = Vec::new();
        let mut diags = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let (code, comment) = split_comment(raw);
            let tokens = tokenize(code);
            let mut p = LineParser { line: i + 1, end_column: code.chars().count() + 1, tokens, pos: 0 };
            match p.statement() {
                Ok(statement) => lines.push(Line { statement, comment: comment.map(str::to_string), number: i + 1 }),
                Err((kind, message, column)) => diags.push(Diagnostic { severity: Severity::Error, kind, message, line: p.line, column }),
            }
        }
        if diags.is_empty() {
            Ok(Self { lines })
        } else {
            Err(Diagnostics(diags))
        }
    }

    /// Resolves names and checks every network invariant, reporting each
    /// problem at the statement that caused it.
    pub fn to_spec(&self, source: &str) -> Result<NetworkSpec, Diagnostics> {
        let src_lines: Vec<&str> = source.lines().collect();
        let code_of = |n: usize| src_lines.get(n.wrapping_sub(1)).map(|l| split_comment(l).0).unwrap_or("");
        let mut diags = Vec::new();
        macro_rules! push {
            ($kind:expr, $message:expr, $line:expr, $column:expr) => {
                diags.push(Diagnostic { severity: Severity::Error, kind: $kind, message: $message, line: $line, column: $column })
            };
        }

        let mut spec = NetworkSpec::default();
        let mut comp_line: BTreeMap<String, usize> = BTreeMap::new();
        let mut mode_line: BTreeMap<String, usize> = BTreeMap::new();
        let mut kinds: BTreeMap<String, ComponentKind> = BTreeMap::new();
        for line in &self.lines {
            match &line.statement {
                Statement::Mode(s) => {
                    if mode_line.insert(s.mode.name.clone(), line.number).is_some() {
                        push!(DiagnosticKind::Duplicate, format!("mode `{}` is declared twice", s.mode.name), line.number, token_column(code_of(line.number), &s.mode.name).unwrap_or(1));
                    }
                    spec.sources.push(s.clone());
                }
                Statement::Comp(c) => {
                    if comp_line.insert(c.id.clone(), line.number).is_some() {
                        push!(DiagnosticKind::Duplicate, format!("component `{}` is declared twice", c.id), line.number, token_column(code_of(line.number), &c.id).unwrap_or(1));
                    }
                    kinds.insert(c.id.clone(), c.kind);
                    spec.components.push(c.clone());
                }
                Statement::Link(l) => spec.links.push(l.clone()),
                Statement::Out(o) => spec.outputs.push(o.clone()),
                Statement::Blank => {}
            }
        }
        for (id, &n) in &comp_line {
            if let Some(&m) = mode_line.get(id) {
                push!(DiagnosticKind::Duplicate, format!("`{id}` names both a mode and a component"), m.max(n), 1);
            }
        }

        // link and output resolution, positioned at the offending token
        let mut driven: BTreeSet<PortRef> = BTreeSet::new();
        let mut used: BTreeSet<Endpoint> = BTreeSet::new();
        let mut out_names: BTreeSet<&str> = BTreeSet::new();
        let check_port = |r: &PortRef, want_input: bool| -> Result<(), (DiagnosticKind, String)> {
            let kind = kinds.get(&r.comp).ok_or_else(|| (DiagnosticKind::UnknownName, format!("unknown component `{}`", r.comp)))?;
            if !kind.has_port(r.port) {
                return Err((DiagnosticKind::UnknownPort, format!("component `{}` has no port `{}`", r.comp, r.port)));
            }
            let ok = if want_input { kind.inputs().contains(&r.port) } else { kind.outputs().contains(&r.port) };
            if !ok {
                let what = if want_input { "is an output and cannot be driven" } else { "is an input and cannot drive anything" };
                return Err((DiagnosticKind::UnknownPort, format!("`{r}` {what}")));
            }
            Ok(())
        };
        for line in &self.lines {
            let code = code_of(line.number);
            let toks = tokenize(code);
            let col = |i: usize| toks.get(i).map(|t| t.column).unwrap_or(1);
            match &line.statement {
                Statement::Link(l) => {
                    match &l.from {
                        Endpoint::Mode(m) => {
                            if !mode_line.contains_key(m) {
                                push!(DiagnosticKind::UnknownName, format!("unknown mode `{m}`"), line.number, col(1));
                            }
                        }
                        Endpoint::Port(r) => {
                            if let Err((k, msg)) = check_port(r, false) {
                                push!(k, msg, line.number, col(1));
                            }
                        }
                    }
                    if !used.insert(l.from.clone()) {
                        push!(DiagnosticKind::Duplicate, format!("`{}` already drives another port", l.from), line.number, col(1));
                    }
                    match check_port(&l.to, true) {
                        Err((k, msg)) => push!(k, msg, line.number, col(3)),
                        Ok(()) => {
                            if !driven.insert(l.to.clone()) {
                                push!(DiagnosticKind::DuplicateDriver, format!("input `{}` has more than one driver", l.to), line.number, col(3));
                            }
                        }
                    }
                }
                Statement::Out(o) => {
                    if let Err((k, msg)) = check_port(&o.port, false) {
                        push!(k, msg, line.number, col(1));
                    } else if !used.insert(Endpoint::Port(o.port.clone())) {
                        push!(DiagnosticKind::Duplicate, format!("`{}` already drives another port", o.port), line.number, col(1));
                    }
                    if !out_names.insert(&o.name) {
                        push!(DiagnosticKind::Duplicate, format!("output name `{}` is used twice", o.name), line.number, col(3));
                    }
                }
                _ => {}
            }
        }
        for c in &spec.components {
            for &p in c.kind.inputs() {
                let r = PortRef::new(c.id.clone(), p);
                if !driven.contains(&r) {
                    let n = comp_line[&c.id];
                    push!(DiagnosticKind::UnconnectedInput, format!("input `{r}` is not driven"), n, token_column(code_of(n), &c.id).unwrap_or(1));
                }
            }
        }
        if diags.is_empty() {
            if let Err(e) = spec.validate() {
                let (line, kind) = locate(&e, &comp_line, &mode_line);
                let column = match &e {
                    Error::MalformedNetwork(NetworkIssue::Param { comp, .. }) => token_column(code_of(line), comp).unwrap_or(1),
                    _ => 1,
                };
                let message = match e {
                    Error::MalformedNetwork(NetworkIssue::Empty) => "netlist declares no components".to_string(),
                    Error::MalformedNetwork(NetworkIssue::DuplicateMode(m)) if m.ends_with(".vac") => format!("mode `{m}` collides with a loss component's vacuum input"),
                    e => e.to_string(),
                };
                push!(kind, message, line, column);
            }
        }
        if diags.is_empty() {
            Ok(spec)
        } else {
            diags.sort_by_key(|d| (d.line, d.column));
            Err(Diagnostics(diags))
        }
    }

    /// Text form; comments and blank lines are kept where they were.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let stmt = statement_text(&line.statement);
            match (&line.comment, stmt.is_empty()) {
                (Some(c), true) => out.push_str(&format!("#{c}")),
                (Some(c), false) => out.push_str(&format!("{stmt}  #{c}")),
                (None, _) => out.push_str(&stmt),
            }
            out.push('\n');
        }
        out
    }
}

fn locate(e: &Error, comps: &BTreeMap<String, usize>, modes: &BTreeMap<String, usize>) -> (usize, DiagnosticKind) {
    let first = 1;
    match e {
        Error::MalformedNetwork(issue) => match issue {
            NetworkIssue::Param { comp, .. } | NetworkIssue::DuplicateComponent(comp) => (comps.get(comp).copied().unwrap_or(first), DiagnosticKind::InvalidNetwork),
            NetworkIssue::BadAmplitude(m) | NetworkIssue::DuplicateMode(m) => {
                let n = modes.get(m).or_else(|| comps.get(m.trim_end_matches(".vac"))).copied();
                (n.unwrap_or(first), DiagnosticKind::InvalidNetwork)
            }
            _ => (first, DiagnosticKind::InvalidNetwork),
        },
        Error::GainOutOfRange(_) | Error::ParamOutOfRange { .. } => (first, DiagnosticKind::InvalidNetwork),
        _ => (first, DiagnosticKind::InvalidNetwork),
    }
}

/// Finite values print in the shortest form that parses back to the same
/// bits.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && (a < 1e-5 || a >= 1e16) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn statement_text(s: &Statement) -> String {
    match s {
        Statement::Blank => String::new(),
        Statement::Mode(src) => match src.amplitude {
            Some(a) => format!("mode {} coherent {} {}", src.mode.name, fmt_f64(a.re), fmt_f64(a.im)),
            None => format!("mode {} {}", src.mode.name, src.mode.kind.as_str()),
        },
        Statement::Comp(c) => {
            let body = match c.kind {
                ComponentKind::Amplifier(GainSpec::Amplitude(g)) => format!("amp gain={}", fmt_f64(g)),
                ComponentKind::Amplifier(GainSpec::QnDb(d)) => format!("amp gain_db={}", fmt_f64(d)),
                ComponentKind::BeamSplitter { t } => format!("bs t={}", fmt_f64(t)),
                ComponentKind::Loss { l } => format!("loss l={}", fmt_f64(l)),
                ComponentKind::Phase { phi } => format!("phase phi={}", fmt_f64(phi)),
            };
            format!("comp {} {body}", c.id)
        }
        Statement::Link(l) => format!("link {} -> {}", l.from, l.to),
        Statement::Out(o) => format!("out {} as {}", o.port, o.name),
    }
}

/// Parses and validates a netlist.
pub fn parse_netlist(text: &str) -> Result<NetworkSpec, Diagnostics> {
    NetlistDocument::parse(text)?.to_spec(text)
}

/// As [`parse_netlist`], for input that may not be UTF-8.
pub fn parse_netlist_bytes(bytes: &[u8]) -> Result<NetworkSpec, Diagnostics> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_netlist(text),
        Err(e) => {
            let good = &bytes[..e.valid_up_to()];
            let line = 1 + good.iter().filter(|&&b| b == b'\n').count();
            let tail = good.rsplit(|&b| b == b'\n').next().unwrap_or(good);
            let column = 1 + std::str::from_utf8(tail).map(|s| s.chars().count()).unwrap_or(0);
            Err(Diagnostics(vec![Diagnostic {
                severity: Severity::Error,
                kind: DiagnosticKind::SyntaxError,
                message: "input is not valid UTF-8".into(),
                line,
                column,
            }]))
        }
    }
}

/// Canonical text of a spec: modes, components, links, outputs.
/// `parse_netlist(&serialize_netlist(s)) == Ok(s)` for every valid spec.
pub fn serialize_netlist(spec: &NetworkSpec) -> String {
    let lines = spec
        .sources
        .iter()
        .cloned()
        .map(Statement::Mode)
        .chain(spec.components.iter().cloned().map(Statement::Comp))
        .chain(spec.links.iter().cloned().map(Statement::Link))
        .chain(spec.outputs.iter().cloned().map(Statement::Out))
        .enumerate()
        .map(|(i, statement)| Line { statement, comment: None, number: i + 1 })
        .collect();
    NetlistDocument { lines }.to_text()
}

/// Netlist of the single-loop feedback amplifier with the given parameters.
pub fn canonical_netlist(t: f64, l: f64, gain: GainSpec, phi: f64) -> String {
    let mut spec = cfamp_core::network::canonical_network(t, l, 1.0, phi, None);
    for c in &mut spec.components {
        if let ComponentKind::Amplifier(g) = &mut c.kind {
            *g = gain;
        }
    }
    serialize_netlist(&spec)
}
