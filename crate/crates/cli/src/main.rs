#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Simulation, spectra, meson conversion and fitting for critical unstable qubits.
#[derive(Debug, Parser)]
#[command(name = "cuq", version, about)]
struct Cli {
    /// Write results into this directory instead of stdout.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the Bloch equation and print the trajectory.
    Simulate(SimulateArgs),
    /// Maximum |b| against r for starts parallel to γ.
    SweepBmax(SweepArgs),
    /// Closed-form and quadrature Fourier spectra side by side.
    Fourier(FourierArgs),
    /// Convert between Bloch parameters and mixing observables.
    Convert(ConvertArgs),
    /// Fit a flavour-asymmetry dataset with a cosine series.
    Fit(FitArgs),
    /// The meson catalogue in both parameterisations.
    Catalogue,
    /// Write a synthetic asymmetry dataset.
    Synthesize(SynthesizeArgs),
}

/// A duration either absolute or in periods (`3P`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Span {
    Absolute(f64),
    Periods(f64),
}

impl Span {
    pub fn resolve(self, period: Option<f64>) -> Result<f64, FlagError> {
        let t = match (self, period) {
            (Span::Absolute(t), _) => t,
            (Span::Periods(k), Some(p)) => k * p,
            (Span::Periods(_), None) => {
                return Err(FlagError("period-relative --t-max needs r < 1".into()))
            }
        };
        Ok(t)
    }
}

fn parse_span(s: &str) -> Result<Span, String> {
    let s = s.trim();
    let (num, periods) = match s.strip_suffix(['P', 'p']) {
        Some("") => ("1", true),
        Some(n) => (n, true),
        None => (s, false),
    };
    let v: f64 = num
        .parse()
        .map_err(|_| format!("`{s}` is neither a number nor a multiple of P"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("`{s}` must be positive"));
    }
    Ok(if periods {
        Span::Periods(v)
    } else {
        Span::Absolute(v)
    })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub r: f64,
    /// Angle between e and γ in degrees.
    #[arg(long, default_value_t = 90.0)]
    pub theta_eg: f64,
    #[arg(long, default_value_t = 1.0)]
    pub e_mag: f64,
    /// Initial state: exg, gamma, -gamma, e, mixed, or x,y,z.
    #[arg(long, default_value = "exg", allow_hyphen_values = true)]
    pub b0: String,
    /// Duration in τ, or a multiple of the period P = 2πr/√(1-r²) such as 3P.
    #[arg(long, value_parser = parse_span)]
    pub t_max: Option<Span>,
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub abs_tol: f64,
    /// Resample onto this many equally spaced points instead of the accepted steps.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.95,1,1.5,2,3"
    )]
    pub r: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub b0_mag: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct FourierArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long, short = 'n', default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConvertArgs {
    /// r, θ_eγ in degrees, |E| in ps⁻¹.
    #[arg(long, num_args = 3, value_names = ["R", "THETA", "E"], allow_hyphen_values = true)]
    pub from_bloch: Option<Vec<f64>>,
    /// ΔE and ΔΓ in ps⁻¹, |q/p|.
    #[arg(long, num_args = 3, value_names = ["DE", "DG", "QOP"], allow_hyphen_values = true)]
    pub from_observables: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub dataset: PathBuf,
    /// Angular frequency in ps⁻¹; overrides the dataset's `# omega:` line.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, short = 'N', default_value_t = 2)]
    pub n_harmonics: usize,
    /// Radius R of the oscillation, for the amplitude correction.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub sine_modes: bool,
    #[arg(long)]
    pub omega_scan: bool,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 0.2535)]
    pub e_mag: f64,
    #[arg(long, default_value_t = 50)]
    pub n_points: usize,
    /// Span in ps, or a multiple of the oscillation period such as 3P.
    #[arg(long, value_parser = parse_span, default_value = "3P")]
    pub t_max: Span,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Widen the noise as σ·exp(t/scale).
    #[arg(long)]
    pub widen_scale: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long)]
    pub label: Option<String>,
}

/// Rejected flag combination detected after parsing.
#[derive(Debug)]
pub struct FlagError(pub String);

impl fmt::Display for FlagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for FlagError {}

/// Where and how results are written.
pub struct Sink {
    dir: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn emit(
        &self,
        stem: &str,
        csv: impl FnOnce() -> String,
        json: impl FnOnce() -> anyhow::Result<String>,
    ) -> anyhow::Result<()> {
        let (body, ext) = match self.format {
            Format::Csv => (csv(), "csv"),
            Format::Json => (json()?, "json"),
        };
        self.write(&format!("{stem}.{ext}"), &body)
    }

    pub fn write(&self, name: &str, body: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(name), body)?;
            }
            None => {
                let mut out = std::io::stdout().lock();
                let written = out.write_all(body.as_bytes()).and_then(|_| {
                    if body.ends_with('\n') {
                        Ok(())
                    } else {
                        out.write_all(b"\n")
                    }
                });
                match written {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other?,
                }
            }
        }
        Ok(())
    }

    pub fn to_dir(&self) -> bool {
        self.dir.is_some()
    }
}

/// Shortest round-trip text, switching to exponent form for very small or
/// large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<FlagError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<cuq::Error>() {
        Some(e) if e.is_data_error() => 3,
        Some(e) if e.is_numerical() => 4,
        Some(cuq::Error::InvalidParameter { .. })
        | Some(cuq::Error::BlochNorm { .. })
        | Some(cuq::Error::InvalidTolerance(_))
        | Some(cuq::Error::Unphysical(_)) => 2,
        Some(_) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sink = Sink {
        dir: cli.output_dir,
        format: cli.format,
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a, &sink),
        Command::SweepBmax(a) => commands::sweep_bmax(&a, &sink),
        Command::Fourier(a) => commands::fourier(&a, &sink),
        Command::Convert(a) => commands::convert(&a, &sink),
        Command::Fit(a) => commands::fit(&a, &sink),
        Command::Catalogue => commands::catalogue(&sink),
        Command::Synthesize(a) => commands::synthesize(&a, cli.seed, &sink),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
