//! Command-line front end. [`run`] never exits the process so it can be
//! driven from tests.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use cfamp_core::experiments::{fit_noise_reduction, fringe_scan, sweep, visibility, DataSeries, FitAxis, FitModel, FitOptions, FitParam, Scale, SweepConfig, SweepParam, DEFAULT_POINTS};
use cfamp_core::network::{solve, GainSpec};
use cfamp_core::oracles::{crosscheck, stable_points, McConfig};
use cfamp_core::{Complex64, Error};

use crate::data::{read_series, write_series, DataError};
use crate::netlist::{fmt_f64, parse_netlist_bytes, Diagnostics};
use crate::report::{CaseJson, FitJson, SolveJson};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "cfamp", version, about = "Noise analysis of amplifiers with coherent feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParamArg {
    Phi,
    L,
    T,
    Gqn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    /// Full noise reduction factor; fits two of T, L, G depending on --axis.
    #[value(alias = "eq10")]
    Full,
    /// Unity-transmission form versus quantum noise gain; fits G_th.
    #[value(name = "unity-t", alias = "eq11")]
    UnityT,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Gqn,
    L,
    T,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Db,
    Linear,
}

#[derive(Debug, Clone, clap::Args)]
struct GainArgs {
    /// Quantum noise gain of the amplifier in dB.
    #[arg(long = "gqn-db", allow_hyphen_values = true)]
    gqn_db: Option<f64>,
    /// Amplitude gain G of the amplifier (alternative to --gqn-db).
    #[arg(long, conflicts_with = "gqn_db")]
    gain: Option<f64>,
}

impl GainArgs {
    fn spec(&self) -> Option<GainSpec> {
        match (self.gqn_db, self.gain) {
            (Some(d), _) => Some(GainSpec::QnDb(d)),
            (None, Some(g)) => Some(GainSpec::Amplitude(g)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a netlist and print every declared output.
    Solve {
        netlist: PathBuf,
        #[arg(long)]
        json: bool,
        /// Homodyne quadrature angle for the reported variance.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
    },
    /// Noise ratio of the feedback amplifier along one parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: ParamArg,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        l: f64,
        #[command(flatten)]
        gain: GainArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi: f64,
        #[arg(long, value_enum, default_value = "db")]
        scale: ScaleArg,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Output intensity of a coherent seed versus feedback phase.
    Fringe {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        l: f64,
        #[command(flatten)]
        gain: GainArgs,
        #[arg(long = "seed-re", default_value_t = 1.0, allow_hyphen_values = true)]
        seed_re: f64,
        #[arg(long = "seed-im", default_value_t = 0.0, allow_hyphen_values = true)]
        seed_im: f64,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Least-squares fit of a noise-reduction model to CSV data.
    Fit {
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// What x holds for `full` fits.
        #[arg(long, value_enum, default_value = "gqn")]
        axis: AxisArg,
        /// Initial value, e.g. `--init gth=30`; repeatable.
        #[arg(long, value_parser = parse_init)]
        init: Vec<(FitParam, f64)>,
        /// Also fit an additive offset.
        #[arg(long)]
        offset: bool,
        /// Override the scale recorded in the file.
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long)]
        json: bool,
    },
    /// Cross-check closed form, solver, Monte-Carlo and loop unrolling at
    /// random stable operating points.
    Verify {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long)]
        json: bool,
    },
}

fn parse_init(s: &str) -> Result<(FitParam, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let p = FitParam::parse(k).ok_or_else(|| format!("unknown parameter `{k}` (gth, t, l, g, offset)"))?;
    let v: f64 = v.parse().map_err(|_| format!("invalid number `{v}`"))?;
    Ok((p, v))
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Diagnostics(Diagnostics),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Verify(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Diagnostics(_) | Failure::Input(_) => EXIT_DIAGNOSTICS,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ParamOutOfRange { .. } | Error::GainOutOfRange(_) => Failure::Usage(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code: 0 success, 1 input diagnostics, 2 verification
/// failure, 64 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{text}");
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { EXIT_USAGE } else { EXIT_OK }
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let prefix = match f {
                Failure::Diagnostics(_) => "",
                _ => "error: ",
            };
            let _ = writeln!(err, "{prefix}{f}");
            f.code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Solve { netlist, json, theta } => cmd_solve(&netlist, json, theta, out),
        Command::Sweep { param, from, to, points, t, l, gain, phi, scale, csv } => {
            let param = match param {
                ParamArg::Phi => SweepParam::Phi,
                ParamArg::L => SweepParam::Loss,
                ParamArg::T => SweepParam::Transmittance,
                ParamArg::Gqn => SweepParam::GqnDb,
            };
            let gain = match (gain.spec(), param) {
                (Some(g), _) => g,
                (None, SweepParam::GqnDb) => GainSpec::Amplitude(1.0),
                (None, _) => return Err(Failure::Usage("one of --gqn-db or --gain is required".into())),
            };
            let (lo, hi, open_end) = match param {
                SweepParam::Phi => (0.0, 2.0 * std::f64::consts::PI, true),
                SweepParam::Loss | SweepParam::Transmittance => (0.0, 1.0, false),
                SweepParam::GqnDb => (0.0, 30.0, false),
            };
            let cfg = SweepConfig {
                t,
                l,
                gain,
                phi,
                scale: scale_of(scale),
                open_end: open_end && from.is_none() && to.is_none(),
                ..SweepConfig::new(param, from.unwrap_or(lo), to.unwrap_or(hi), points)
            };
            let series = sweep(&cfg)?;
            let mut meta = vec![("t", fmt_f64(t)), ("l", fmt_f64(l)), ("phi", fmt_f64(phi))];
            match gain {
                GainSpec::QnDb(d) if param != SweepParam::GqnDb => meta.push(("gqn_db", fmt_f64(d))),
                GainSpec::Amplitude(g) if param != SweepParam::GqnDb => meta.push(("gain", fmt_f64(g))),
                _ => {}
            }
            emit_series(&series, &meta, csv.as_ref(), out)
        }
        Command::Fringe { t, l, gain, seed_re, seed_im, points, csv } => {
            let g = gain.spec().ok_or_else(|| Failure::Usage("one of --gqn-db or --gain is required".into()))?.amplitude()?;
            let series = fringe_scan(t, l, g, Complex64::new(seed_re, seed_im), points)?;
            let mut meta = vec![("t", fmt_f64(t)), ("l", fmt_f64(l)), ("gain", fmt_f64(g)), ("seed", format!("{} {}", fmt_f64(seed_re), fmt_f64(seed_im)))];
            if let Some(v) = visibility(&series) {
                meta.push(("visibility", fmt_f64(v)));
            }
            emit_series(&series, &meta, csv.as_ref(), out)
        }
        Command::Fit { data, model, axis, init, offset, scale, max_iter, json } => {
            let file = File::open(&data).map_err(|e| Failure::Input(format!("{}: {e}", data.display())))?;
            let (mut series, _) = read_series(file)?;
            if let Some(s) = scale {
                series.scale = scale_of(s);
            }
            let (model, name) = match (model, axis) {
                (ModelArg::UnityT, _) => (FitModel::UnityT, "unity-t"),
                (ModelArg::Full, AxisArg::Gqn) => (FitModel::Full(FitAxis::GqnDb), "full:gqn"),
                (ModelArg::Full, AxisArg::L) => (FitModel::Full(FitAxis::Loss), "full:l"),
                (ModelArg::Full, AxisArg::T) => (FitModel::Full(FitAxis::Transmittance), "full:t"),
            };
            let opts = FitOptions { initial: init, fit_offset: offset, max_iterations: max_iter };
            let fit = fit_noise_reduction(&series, model, &opts)?;
            let report = FitJson::new(name, &fit);
            if json {
                serde_json::to_writer_pretty(&mut *out, &report)?;
                writeln!(out)?;
            } else {
                writeln!(out, "model = {name}")?;
                for (k, v) in &report.params {
                    writeln!(out, "{k} = {}", fmt_f64(*v))?;
                }
                writeln!(out, "rss = {}", fmt_f64(fit.rss))?;
                writeln!(out, "iterations = {}", fit.iterations)?;
                writeln!(out, "identifiable = {}", fit.identifiable)?;
            }
            Ok(())
        }
        Command::Verify { samples, seed, cases, json } => cmd_verify(samples, seed, cases, json, out),
    }
}

fn scale_of(s: ScaleArg) -> Scale {
    match s {
        ScaleArg::Db => Scale::Db,
        ScaleArg::Linear => Scale::Linear,
    }
}

fn emit_series(series: &DataSeries, meta: &[(&str, String)], path: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(f);
            write_series(&mut w, series, meta)?;
            w.flush()?;
        }
        None => write_series(&mut *out, series, meta)?,
    }
    Ok(())
}

fn cmd_solve(path: &PathBuf, json: bool, theta: f64, out: &mut dyn Write) -> Result<(), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let spec = parse_netlist_bytes(&bytes).map_err(Failure::Diagnostics)?;
    let res = solve(&spec)?;
    let report = SolveJson::new(&res, theta);
    if json {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        writeln!(out)?;
        return Ok(());
    }
    let c = |z: &crate::report::ComplexJson| format!("{}{:+}i", fmt_f64(z.re), z.im);
    for o in &report.outputs {
        writeln!(out, "output {}", o.name)?;
        for k in &o.coefficients {
            writeln!(out, "  {} ({}): alpha = {}, beta = {}", k.mode, k.kind, c(&k.alpha), c(&k.beta))?;
        }
        writeln!(out, "  mean = {}", c(&o.mean))?;
        writeln!(out, "  variance = {}", fmt_f64(o.variance))?;
    }
    writeln!(out, "loop_gain = {}", fmt_f64(report.loop_gain))?;
    writeln!(out, "denom_mag = {}", fmt_f64(report.denom_mag))?;
    writeln!(out, "stability = {}", report.stability)?;
    Ok(())
}

fn cmd_verify(samples: u64, seed: u64, cases: usize, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    if samples < 2 {
        return Err(Failure::Usage("--samples must be at least 2".into()));
    }
    let points = stable_points(seed, cases);
    // each case draws from its own seed, so the output is independent of
    // the thread count
    let results: Vec<_> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| crosscheck(p[0], p[1], p[2], p[3], &McConfig::new(samples, seed.wrapping_add(1 + i as u64))))
        .collect();
    let mut failed = 0;
    let mut rows = Vec::with_capacity(cases);
    for (i, (p, r)) in points.iter().zip(results).enumerate() {
        let r = r?;
        let case = CaseJson::new(p, &r);
        if !case.pass {
            failed += 1;
        }
        if !json {
            writeln!(
                out,
                "case {i}: T={:.6} L={:.6} G={:.6} phi={:.6} analytic={:.12e} network={:.12e} mc={:.6e}±{:.1e} unrolled={} {}",
                case.t,
                case.l,
                case.gain,
                case.phi,
                case.analytic,
                case.network,
                case.monte_carlo,
                case.std_error,
                case.unrolled.map(|u| format!("{u:.12e}")).unwrap_or_else(|| "-".into()),
                if case.pass { "PASS" } else { "FAIL" }
            )?;
        }
        rows.push(case);
    }
    if json {
        serde_json::to_writer_pretty(&mut *out, &rows)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{} of {} cases passed", cases - failed, cases)?;
    }
    if failed > 0 {
        return Err(Failure::Verify(format!("{failed} of {cases} cases failed")));
    }
    Ok(())
}
