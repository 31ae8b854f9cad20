//! Command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::{estimate_cylinder, sample_path, theorem_diagnose};
use crate::error::{Result, WaveError};
use crate::filter_bank::{FilterKind, FilterSpec, DEFAULT_VALIDATION_TOL};
use crate::gallery;
use crate::ifs_core::{DigitWord, PathSystem};
use crate::path_measure::{atom_f, cylinder_prob, mass_z, TruncationPolicy};
use crate::scaling_engine::{autocorrelation_from_h, cascade, h_midpoints, wavelet_coeffs, wavelet_psi};
use crate::transfer_operator::{harmonic_residual_fn, power_iterate_harmonic, ruelle_measure, PowerStart};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check the partition, quadrature and low-pass conditions.
    Validate,
    /// Tabulate the atom F on a grid of [0, 1).
    Atom,
    /// Tabulate h = sum_k F(x + k) and its harmonic residual.
    Harmonic,
    /// Compare both sides of the pointwise convergence equivalence at --x.
    Diagnose,
    /// Power iteration for h and the invariant measure of the transfer operator.
    Transfer,
    /// Cascade samples of the scaling function with norm and autocorrelations.
    Scaling,
    /// Multilevel wavelet coefficients of the signal in --signal.
    Coeffs,
    /// Sample walks: one path, or a cylinder estimate with --word.
    Simulate,
}

#[derive(Clone, Debug, Parser)]
#[command(name = "wavepath", version, about = "Path-space measures and product diagnostics for wavelet filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Filter JSON file, or a bundled name (haar, stretched_haar, d4, shannon, highpass_haar).
    #[arg(global = true)]
    pub filter: Option<String>,
    #[arg(long, global = true)]
    pub grid_level: Option<usize>,
    /// Product depth.
    #[arg(long, global = true, default_value_t = 40)]
    pub depth: usize,
    /// Lattice cutoff for sums over Z.
    #[arg(long = "tail-K", global = true, default_value_t = 2000)]
    pub tail_k: usize,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long, global = true, default_value_t = 30)]
    pub max_n: usize,
    /// Power iterations (transfer) or cascade steps (scaling).
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Decomposition levels for coeffs.
    #[arg(long, global = true, default_value_t = 3)]
    pub levels: usize,
    /// Emit the wavelet instead of the scaling function.
    #[arg(long, global = true)]
    pub psi: bool,
    /// Signal file for coeffs: a JSON array of numbers or [re, im] pairs, or one value per line.
    #[arg(long, global = true)]
    pub signal: Option<PathBuf>,
    /// Digits of a cylinder, comma separated, least significant first.
    #[arg(long, global = true)]
    pub word: Option<String>,
    #[arg(long, global = true, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// The resolved configuration, echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub filter: String,
    pub grid_level: usize,
    pub depth: usize,
    pub tail_k: usize,
    pub tol: f64,
    pub x: Option<f64>,
    pub max_n: usize,
    pub iters: usize,
    pub levels: usize,
    pub psi: bool,
    pub signal: Option<PathBuf>,
    pub word: Option<DigitWord>,
    pub trials: usize,
    pub seed: u64,
    pub format: Format,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let filter = cli
            .filter
            .ok_or_else(|| WaveError::InvalidArgument("missing filter argument".into()))?;
        let c = cli.command;
        let grid_level = cli.grid_level.unwrap_or(match c {
            Command::Validate => 12,
            Command::Harmonic => 6,
            _ => 8,
        });
        let iters = cli.iters.unwrap_or(match c {
            Command::Scaling => 10,
            _ => 200,
        });
        let format = cli.format.unwrap_or(match c {
            Command::Atom | Command::Harmonic | Command::Transfer | Command::Scaling => Format::Csv,
            _ => Format::Json,
        });
        let word = cli
            .word
            .map(|w| {
                w.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| WaveError::InvalidArgument(format!("bad digit {s:?} in --word")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|d| DigitWord::new(d, usize::MAX))
            })
            .transpose()?
            .transpose()?;
        if cli.threads == Some(0) {
            return Err(WaveError::InvalidArgument("--threads must be >= 1".into()));
        }
        Ok(Self {
            command: c,
            filter,
            grid_level,
            depth: cli.depth,
            tail_k: cli.tail_k,
            tol: cli.tol.unwrap_or(DEFAULT_VALIDATION_TOL),
            x: cli.x,
            max_n: cli.max_n,
            iters,
            levels: cli.levels,
            psi: cli.psi,
            signal: cli.signal,
            word,
            trials: cli.trials,
            seed: cli.seed,
            format,
            output_path: cli.out,
            threads: cli.threads,
        })
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            product_depth: self.depth,
            tail_cutoff_k: self.tail_k,
            ..TruncationPolicy::default()
        }
    }
}

/// A path on disk, or else a bundled filter name.
pub fn load_filter(arg: &str) -> Result<FilterSpec> {
    let path = Path::new(arg);
    if path.exists() {
        return FilterSpec::from_path(path);
    }
    gallery::builtin(arg).ok_or_else(|| {
        WaveError::InvalidArgument(format!(
            "{arg}: no such file and not a bundled filter ({})",
            gallery::NAMES.join(", ")
        ))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // Debug is the shortest representation that round-trips
            Cell::Float(v) => format!("{v:?}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// What a command produced, before formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub label: String,
    pub result: Value,
    pub table: Table,
    pub verdict_failed: bool,
}

/// JSON formatter printing every float with 17 significant digits.
struct SignificantDigits;

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn metadata(config: &RunConfig, label: &str) -> Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "filter_label": label,
        "config": config,
    })
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.as_f64().filter(|_| n.is_f64()).map_or(n.to_string(), |f| format!("{f:?}"))),
        Value::Bool(b) => Some(b.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Null => Some("null".into()),
        _ => None,
    }
}

/// Renders an output with its metadata block.
pub fn render(config: &RunConfig, out: &Output) -> Result<String> {
    match config.format {
        Format::Json => {
            let doc = json!({
                "metadata": metadata(config, &out.label),
                "result": out.result,
                "table": out.table,
            });
            let mut s = to_json_17(&doc)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut s = String::new();
            s.push_str(&format!("# {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
            s.push_str(&format!("# filter: {}\n", out.label));
            s.push_str(&format!("# config: {}\n", serde_json::to_string(config)?));
            if let Value::Object(map) = &out.result {
                for (k, v) in map {
                    if let Some(t) = scalar_text(v) {
                        s.push_str(&format!("# {k}: {t}\n"));
                    }
                }
            }
            s.push_str(&out.table.columns.join(","));
            s.push('\n');
            for row in &out.table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            Ok(s)
        }
    }
}

fn grid_points(sys: &PathSystem, level: usize) -> Result<Vec<f64>> {
    let len = crate::numeric::checked_pow(sys.scale(), level)
        .filter(|&c| c <= 1 << 20)
        .ok_or(WaveError::DepthTooLarge { depth: level, max: 20 })? as usize;
    Ok((0..len).map(|m| m as f64 / len as f64).collect())
}

fn require_coefficients(spec: &FilterSpec, what: &str) -> Result<()> {
    if spec.kind() != FilterKind::Coefficients {
        return Err(WaveError::InvalidArgument(format!(
            "{what} needs masking coefficients, got a {} filter",
            spec.kind().name()
        )));
    }
    Ok(())
}

fn read_signal(path: &Path) -> Result<Vec<Complex64>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        let raw: Vec<Value> = serde_json::from_str(&text)?;
        raw.iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
                Value::Array(p) if p.len() == 2 && p.iter().all(Value::is_number) => {
                    Ok(Complex64::new(p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
                }
                _ => Err(WaveError::InvalidArgument(format!("signal[{i}]: expected a number or [re, im]"))),
            })
            .collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map(|v| Complex64::new(v, 0.0))
                    .map_err(|_| WaveError::InvalidArgument(format!("signal line {}: not a number", i + 1)))
            })
            .collect()
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Runs one command and returns its formatted-independent output.
pub fn execute(config: &RunConfig) -> Result<Output> {
    let spec = load_filter(&config.filter)?;
    let sys = PathSystem::new(spec.scale())?;
    let policy = config.policy();
    policy.validate()?;
    let label = spec.label().to_string();
    let mut verdict_failed = false;
    let f = Cell::Float;

    let (result, table) = match config.command {
        Command::Validate => {
            let report = spec.validate(config.grid_level, config.tol)?;
            verdict_failed = !report.all_passed();
            let mut rows = vec![vec![Cell::Text("partition".into()), f(report.partition_max_error)]];
            if let Some(e) = report.quadrature_max_error {
                rows.push(vec![Cell::Text("quadrature".into()), f(e)]);
            }
            if let Some(e) = report.lowpass_error {
                rows.push(vec![Cell::Text("lowpass".into()), f(e)]);
            }
            for row in rows.iter_mut() {
                let Cell::Text(name) = &row[0] else { unreachable!() };
                row.push(Cell::Bool(report.verdicts.get(name).copied().unwrap_or(false)));
            }
            let mut result = to_value(&report)?;
            result["all_passed"] = Value::Bool(report.all_passed());
            (result, Table { columns: vec!["check", "error", "verdict"], rows })
        }
        Command::Atom => {
            let xs = grid_points(&sys, config.grid_level)?;
            let rows: Vec<Vec<Cell>> = xs
                .iter()
                .map(|&x| {
                    let a = atom_f(&spec, &sys, x, &policy);
                    vec![f(x), f(a.value), Cell::Bool(a.converged), Cell::Int(a.depth_used as i64)]
                })
                .collect();
            let all_converged = rows.iter().all(|r| r[2] == Cell::Bool(true));
            (
                json!({ "points": xs.len(), "all_converged": all_converged }),
                Table { columns: vec!["x", "F", "converged", "depth_used"], rows },
            )
        }
        Command::Harmonic => {
            let xs = grid_points(&sys, config.grid_level)?;
            let rows: Vec<Vec<Cell>> = xs
                .iter()
                .map(|&x| {
                    let h = mass_z(&spec, &sys, x, &policy);
                    vec![f(x), f(h.value), Cell::Bool(h.converged), f(h.tail_bound.unwrap_or(f64::NAN))]
                })
                .collect();
            let residual = harmonic_residual_fn(&spec, &sys, |y| mass_z(&spec, &sys, y, &policy).value, config.grid_level)?;
            let mean = rows.iter().map(|r| if let Cell::Float(v) = r[1] { v } else { 0.0 }).sum::<f64>() / rows.len() as f64;
            (
                json!({ "harmonic_residual": residual, "mean_h": mean }),
                Table { columns: vec!["x", "h", "converged", "tail_bound"], rows },
            )
        }
        Command::Diagnose => {
            let x = config
                .x
                .ok_or_else(|| WaveError::InvalidArgument("diagnose needs --x".into()))?;
            let report = theorem_diagnose(&spec, &sys, x, config.max_n, &policy)?;
            let rows = (0..report.partial_products.len())
                .map(|i| vec![Cell::Int(i as i64 + 1), f(report.partial_products[i]), f(report.h_sequence[i])])
                .collect();
            (to_value(&report)?, Table { columns: vec!["n", "p_n", "h_n"], rows })
        }
        Command::Transfer => {
            let power = power_iterate_harmonic(&spec, &sys, config.grid_level, config.iters, PowerStart::ZeroNeighborhood)?;
            let nu = ruelle_measure(&spec, &sys, config.grid_level, config.iters)?;
            let rows = (0..power.grid.len())
                .map(|m| vec![f(power.grid.left_endpoint(m)), f(power.grid.values()[m]), f(nu.masses.values()[m])])
                .collect();
            (
                json!({
                    "iterations": config.iters,
                    "start": power.start,
                    "final_sup_change": power.sup_changes.last(),
                    "h_mean": power.grid.mean(),
                    "measure_final_l1_change": nu.residuals.last(),
                }),
                Table { columns: vec!["x", "h", "nu_mass"], rows },
            )
        }
        Command::Scaling => {
            let h = h_midpoints(&spec, &sys, &policy, config.grid_level.min(10))?;
            let norm = h.iter().sum::<f64>() / h.len() as f64;
            let autocorrelations: Vec<_> = (1..=5).map(|k| autocorrelation_from_h(&h, k)).collect();
            let mut result = json!({
                "norm_phi_sq": norm,
                "autocorrelations": autocorrelations,
            });
            let mut table = Table { columns: vec!["t", "re", "im"], rows: Vec::new() };
            if spec.kind() == FilterKind::Coefficients {
                let phi = cascade(&spec, &sys, config.iters, config.grid_level)?;
                result["cascade_norm_sq"] = json!(phi.norm_sq());
                let shown = if config.psi { wavelet_psi(&spec, &sys, &phi)? } else { phi };
                result["samples"] = json!(if config.psi { "psi" } else { "phi" });
                table.rows = (0..shown.len())
                    .map(|i| {
                        let v = shown.samples[i];
                        vec![f(shown.time(i)), f(v.re), f(v.im)]
                    })
                    .collect();
            } else {
                result["samples"] = json!("none: cascade needs masking coefficients");
            }
            (result, table)
        }
        Command::Coeffs => {
            require_coefficients(&spec, "coeffs")?;
            let path = config
                .signal
                .as_ref()
                .ok_or_else(|| WaveError::InvalidArgument("coeffs needs --signal".into()))?;
            let signal = read_signal(path)?;
            let c = wavelet_coeffs(&spec, &signal, config.levels)?;
            let signal_energy: f64 = signal.iter().map(|v| v.norm_sqr()).sum();
            let mut rows = Vec::new();
            let mut levels = serde_json::Map::new();
            for (lvl, band) in c.details.iter().enumerate() {
                levels.insert(format!("{}", lvl + 1), to_value(band)?);
                for (i, v) in band.iter().enumerate() {
                    rows.push(vec![Cell::Text(format!("{}", lvl + 1)), Cell::Int(i as i64), f(v.re), f(v.im)]);
                }
            }
            levels.insert("smooth".into(), to_value(&c.smooth)?);
            for (i, v) in c.smooth.iter().enumerate() {
                rows.push(vec![Cell::Text("smooth".into()), Cell::Int(i as i64), f(v.re), f(v.im)]);
            }
            (
                json!({
                    "levels": Value::Object(levels),
                    "signal_energy": signal_energy,
                    "coefficient_energy": c.energy(),
                }),
                Table { columns: vec!["level", "index", "re", "im"], rows },
            )
        }
        Command::Simulate => {
            let x = config.x.unwrap_or(0.0);
            match &config.word {
                Some(word) => {
                    sys.check_word(word)?;
                    let est = estimate_cylinder(&spec, &sys, x, word, config.trials, config.seed)?;
                    let exact = cylinder_prob(&spec, &sys, x, word)?;
                    let mut result = to_value(&est)?;
                    result["x"] = json!(x);
                    result["word"] = to_value(word)?;
                    result["exact"] = json!(exact);
                    let table = Table {
                        columns: vec!["estimate", "stderr", "trials", "seed", "exact"],
                        rows: vec![vec![f(est.estimate), f(est.stderr), Cell::Int(est.trials as i64), Cell::Text(est.seed.to_string()), f(exact)]],
                    };
                    (result, table)
                }
                None => {
                    let walk = sample_path(&spec, &sys, x, config.max_n, config.seed)?;
                    let rows = walk
                        .digits
                        .digits()
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| vec![Cell::Int(i as i64 + 1), Cell::Int(d as i64)])
                        .collect();
                    (to_value(&walk)?, Table { columns: vec!["step", "digit"], rows })
                }
            }
        }
    };
    Ok(Output {
        label,
        result,
        table,
        verdict_failed,
    })
}

/// Executes, writes the rendered output, and maps the outcome to an exit code.
pub fn run(config: &RunConfig) -> Result<i32> {
    let work = || -> Result<(String, bool)> {
        let out = execute(config)?;
        Ok((render(config, &out)?, out.verdict_failed))
    };
    let (text, failed) = match config.threads {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| WaveError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    match &config.output_path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(if failed { EXIT_VERDICT } else { EXIT_OK })
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match RunConfig::from_cli(cli).and_then(|c| run(&c)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
