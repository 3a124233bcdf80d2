//! Command-line front end: moment tables, VaR quantiles, frequency vs market
//! comparisons, density grids, window sweeps and synthetic tapes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use tapevar_core::charfn::{CharFnError, GridSpec, DEFAULT_GRID_POINTS, DEFAULT_GRID_SIGMAS};
use tapevar_core::numeric::format::write_f64;
use tapevar_core::var::{warning_codes, REPORT_CSV_HEADER};
use tapevar_core::{
    compare, compute_moments, fit_charfn, price_distribution, synthesize_tape, sweep, value_at_risk,
    value_distribution, volume_distribution, CentralStats, MeasureKind, MomentError, PriceProcess, SweepSpec,
    TapeError, TapeSpec, TradeSlice, TradeTape, VarError, VarMeasure, VarRequest, VarResult, VolumeProcess, Window,
};
use thiserror::Error;

/// Environment variable holding the log filter (e.g. `info`, `debug`).
pub const LOG_ENV: &str = "TAPEVAR_LOG";

#[derive(Debug, Parser)]
#[command(name = "tapevar", version, about = "Frequency-based vs market-based price VaR from trade tapes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Market-based p(n) and frequency-based π(n) moment table.
    Moments(MomentsArgs),
    /// VaR quantiles under one measure.
    Var(VarArgs),
    /// Frequency vs market quantiles and their divergence.
    Compare(CompareArgs),
    /// Density and CDF grid of a fitted characteristic-function approximation.
    Density(DensityArgs),
    /// Write a synthetic tape in canonical CSV.
    Simulate(SimulateArgs),
    /// Comparison for a series of window centers.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistributionOf {
    Price,
    Value,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Frequency,
    Market,
}

impl From<Kind> for MeasureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Frequency => MeasureKind::Frequency,
            Kind::Market => MeasureKind::Market,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Trade tape CSV (`t,value,volume[,price]`); `-` reads stdin.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Window center t. The whole tape is used when no window is given.
    #[arg(long, requires = "delta")]
    pub center: Option<f64>,
    /// Window width Δ (> 0).
    #[arg(long, requires = "center")]
    pub delta: Option<f64>,
}

impl WindowArgs {
    fn window(&self) -> Result<Option<Window>, CliError> {
        match (self.center, self.delta) {
            (Some(c), Some(d)) => Ok(Some(Window::new(c, d)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Emit the frequency distribution (`level,count,mass` CSV) instead.
    #[arg(long, value_enum)]
    pub distribution: Option<DistributionOf>,
}

#[derive(Debug, Args)]
pub struct VarArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// frequency-empirical, frequency-gaussian, market-gaussian or market-order3.
    #[arg(long, default_value = "market-gaussian")]
    pub measure: VarMeasure,
    /// Tail probabilities ε, comma separated.
    #[arg(long = "eps", value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long = "eps", value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = Kind::Market)]
    pub kind: Kind,
    /// Approximation order (2 or 3).
    #[arg(long, default_value_t = 2)]
    pub order: u32,
    /// Grid half-width in σ (at least 8).
    #[arg(long, default_value_t = DEFAULT_GRID_SIGMAS)]
    pub sigmas: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    /// Diagnostics JSON path. Defaults to `<output>.diag.json`, or stderr
    /// when writing to stdout.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spacing between timestamps.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, conflicts_with_all = ["start_price", "drift", "vol"])]
    pub const_price: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub start_price: f64,
    /// Mean of the per-trade log-price step.
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    /// Standard deviation of the per-trade log-price step.
    #[arg(long, default_value_t = 0.001)]
    pub vol: f64,
    #[arg(long, conflicts_with_all = ["lots", "volume_mu", "volume_sigma"])]
    pub const_volume: Option<f64>,
    /// Uniform integer lot sizes 1..=LOTS.
    #[arg(long, conflicts_with_all = ["volume_mu", "volume_sigma"])]
    pub lots: Option<u32>,
    #[arg(long, default_value_t = 3.0)]
    pub volume_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub volume_sigma: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long)]
    pub start: f64,
    #[arg(long)]
    pub end: f64,
    #[arg(long)]
    pub stride: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long = "eps", value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    CharFn(#[from] CharFnError),
    #[error(transparent)]
    Var(#[from] VarError),
}

impl CliError {
    /// 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Usage(_) | CliError::Tape(_) => 2,
            CliError::Moments(e) => moment_code(e),
            CliError::CharFn(e) => charfn_code(e),
            CliError::Var(e) => match e {
                VarError::InvalidEpsilon(_) | VarError::InvalidSweep(_) | VarError::Tape(_) => 2,
                VarError::Moments(m) => moment_code(m),
                VarError::CharFn(c) => charfn_code(c),
                VarError::NonPositiveVariance(_) | VarError::BracketFailure { .. } => 3,
            },
        }
    }
}

fn moment_code(e: &MomentError) -> i32 {
    match e {
        MomentError::InvalidOrder | MomentError::InsufficientOrder { .. } => 2,
        MomentError::OrderOverflow { .. } | MomentError::NegativeVariance { .. } => 3,
    }
}

fn charfn_code(e: &CharFnError) -> i32 {
    match e {
        CharFnError::UnsupportedOrder(_)
        | CharFnError::InvalidGrid(_)
        | CharFnError::PointMassUnsupported
        | CharFnError::WrongOrder { .. }
        | CharFnError::OrderExceedsFit { .. } => 2,
        _ => 3,
    }
}

fn read_tape(path: &Path) -> Result<TradeTape, CliError> {
    let label = path.display().to_string();
    let text = if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|source| CliError::Io {
            path: label.clone(),
            source,
        })?;
        s
    } else {
        fs::read_to_string(path).map_err(|source| CliError::Io {
            path: label.clone(),
            source,
        })?
    };
    Ok(tapevar_core::parse_tape(&text, label)?)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn select<'a>(tape: &'a TradeTape, window: &WindowArgs) -> Result<TradeSlice<'a>, CliError> {
    match window.window()? {
        Some(w) => Ok(tape.select(w)?),
        None => Ok(tape.as_slice()),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Moments(a) => moments(a),
        Command::Var(a) => var(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Density(a) => density(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

fn moments(a: MomentsArgs) -> Result<(), CliError> {
    let tape = read_tape(&a.io.input)?;
    let slice = select(&tape, &a.window)?;
    let text = if let Some(of) = a.distribution {
        let dist = match of {
            DistributionOf::Price => price_distribution(&slice),
            DistributionOf::Value => value_distribution(&slice),
            DistributionOf::Volume => volume_distribution(&slice),
        };
        dist.to_csv()
    } else {
        let m = compute_moments(&slice, a.n_max)?;
        match a.format {
            Format::Json => json(&m),
            Format::Csv => {
                let mut s = String::from("n,C_sum,U_sum,C_m,U_m,p,pi\n");
                for r in &m.rows {
                    s.push_str(&r.n.to_string());
                    for v in [r.c_sum, r.u_sum, r.c_mean, r.u_mean, r.p, r.pi] {
                        s.push(',');
                        write_f64(&mut s, v);
                    }
                    s.push('\n');
                }
                s
            }
        }
    };
    emit(a.io.output.as_deref(), &text)
}

fn var_rows(results: &[VarResult]) -> String {
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for r in results {
        write_f64(&mut s, r.epsilon);
        s.push(',');
        s.push_str(r.measure.as_str());
        s.push(',');
        write_f64(&mut s, r.p_epsilon);
        s.push(',');
        write_f64(&mut s, r.diagnostics.mean);
        s.push(',');
        write_f64(&mut s, r.sigma());
        s.push(',');
        s.push_str(&warning_codes(r.diagnostics.warnings.iter()));
        s.push('\n');
    }
    s
}

fn var(a: VarArgs) -> Result<(), CliError> {
    let tape = read_tape(&a.io.input)?;
    let slice = select(&tape, &a.window)?;
    let mut results = Vec::with_capacity(a.epsilons.len());
    for &eps in &a.epsilons {
        let req = VarRequest::new(eps, a.measure, a.n_max)?;
        let r = value_at_risk(&slice, &req)?;
        for w in &r.diagnostics.warnings {
            warn!("{} at epsilon {eps}: {w}", a.measure);
        }
        results.push(r);
    }
    let text = match a.format {
        Format::Json => json(&results),
        Format::Csv => var_rows(&results),
    };
    emit(a.io.output.as_deref(), &text)
}

fn compare_cmd(a: CompareArgs) -> Result<(), CliError> {
    let tape = read_tape(&a.io.input)?;
    let window = a.window.window()?;
    let slice = select(&tape, &a.window)?;
    let mut report = compare(&slice, &a.epsilons, a.n_max)?;
    report.window = window;
    for w in &report.warnings {
        warn!("{w}");
    }
    let text = match a.format {
        Format::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
        Format::Csv => report.to_csv(),
    };
    emit(a.io.output.as_deref(), &text)
}

fn density(a: DensityArgs) -> Result<(), CliError> {
    let tape = read_tape(&a.io.input)?;
    let slice = select(&tape, &a.window)?;
    let kind: MeasureKind = a.kind.into();
    let m = compute_moments(&slice, a.order.max(2))?;
    let stats = CentralStats::from_moments(&m, kind)?;
    let f = fit_charfn(&stats, a.order)?;
    let grid = f.tabulate(GridSpec::around(&f, a.sigmas, a.points))?;
    if grid.diagnostics.warning {
        warn!(
            "pseudo-density is negative (minimum {:e}); not renormalized",
            grid.diagnostics.min_density
        );
    }
    emit(a.io.output.as_deref(), &grid.to_csv())?;
    let mut diag = grid.diagnostics_json();
    diag.push('\n');
    let sidecar = a
        .diagnostics
        .clone()
        .or_else(|| a.io.output.as_ref().map(|o| PathBuf::from(format!("{}.diag.json", o.display()))));
    match sidecar {
        Some(path) => emit(Some(&path), &diag),
        None => {
            eprint!("{diag}");
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let price = match a.const_price {
        Some(price) => PriceProcess::Constant { price },
        None => PriceProcess::LognormalWalk {
            start: a.start_price,
            drift: a.drift,
            vol: a.vol,
        },
    };
    let volume = match (a.const_volume, a.lots) {
        (Some(volume), _) => VolumeProcess::Constant { volume },
        (None, Some(max)) => VolumeProcess::UniformLots { max },
        (None, None) => VolumeProcess::Lognormal {
            mu: a.volume_mu,
            sigma: a.volume_sigma,
        },
    };
    let spec = TapeSpec {
        count: a.count,
        dt: a.dt,
        price,
        volume,
    };
    let tape = synthesize_tape(&spec, a.seed)?;
    emit(a.output.as_deref(), &tape.to_csv())
}

#[derive(Serialize)]
struct SweepJson<'a> {
    center: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a tapevar_core::ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn sweep_cmd(a: SweepArgs) -> Result<(), CliError> {
    let tape = read_tape(&a.io.input)?;
    let spec = SweepSpec {
        start: a.start,
        end: a.end,
        stride: a.stride,
        width: a.delta,
    };
    let entries = sweep(&tape, &spec, &a.epsilons, a.n_max)?;
    let mut produced = 0usize;
    let mut first_error = None;
    for e in &entries {
        match &e.outcome {
            Ok(r) => {
                produced += 1;
                for w in &r.warnings {
                    warn!("window {}: {w}", e.center);
                }
            }
            Err(err) => {
                warn!("window {}: {err}", e.center);
                if first_error.is_none() {
                    first_error = Some(err.clone());
                }
            }
        }
    }
    if produced == 0 {
        return Err(first_error.map_or_else(|| CliError::Usage("sweep produced no windows".into()), CliError::from));
    }
    let text = match a.format {
        Format::Json => {
            let rows: Vec<SweepJson<'_>> = entries
                .iter()
                .map(|e| SweepJson {
                    center: e.center,
                    report: e.outcome.as_ref().ok(),
                    error: e.outcome.as_ref().err().map(ToString::to_string),
                })
                .collect();
            json(&rows)
        }
        Format::Csv => {
            let mut s = format!("center,{REPORT_CSV_HEADER}\n");
            for e in &entries {
                if let Ok(r) = &e.outcome {
                    let mut prefix = String::new();
                    write_f64(&mut prefix, e.center);
                    prefix.push(',');
                    r.write_csv_rows(&mut s, &prefix);
                }
            }
            s
        }
    };
    emit(a.io.output.as_deref(), &text)
}
