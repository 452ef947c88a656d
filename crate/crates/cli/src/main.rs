use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ehaoi::verify::{run_suite, Oracle, VerifyOptions, DEFAULT_SEED};

mod figures;
mod report;
mod scenario;
mod svg;

use scenario::{split_tags, Axis, Format, Scenario, ScenarioFile};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_STRICT: u8 = 3;

/// Age of Information for energy-harvesting status-update queues.
#[derive(Parser)]
#[command(name = "ehaoi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solver and closed-form moments and MGF samples over a parameter grid.
    Analyze(RunArgs),
    /// Monte Carlo estimates with confidence intervals next to the analytical values.
    Simulate(RunArgs),
    /// Run the cross-validation suite.
    Verify(VerifyArgs),
    /// Emit figure data (CSV) and line plots (SVG).
    Figures(FigureArgs),
}

/// List-valued flags take `a,b,c` or `start:stop:step`.
#[derive(Args)]
struct RunArgs {
    /// JSON scenario file; flags override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    /// Battery capacity B.
    #[arg(long)]
    battery: Option<String>,
    /// np, ps, pw or all.
    #[arg(long)]
    discipline: Option<String>,
    /// empty, any or all.
    #[arg(long)]
    eh: Option<String>,
    /// Moment orders.
    #[arg(long)]
    k: Option<String>,
    /// Unnormalized MGF arguments.
    #[arg(long, allow_hyphen_values = true)]
    s_grid: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Exit with status 3 when any solver/closed-form deviation exceeds the tolerance.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    tolerance: Option<f64>,
}

impl RunArgs {
    fn scenario(&self) -> Result<Scenario> {
        let file = match &self.scenario {
            Some(path) => ScenarioFile::load(path)?,
            None => ScenarioFile::default(),
        };
        let axis = |s: &Option<String>| s.as_deref().map(Axis::parse).transpose();
        let flags = ScenarioFile {
            rho: axis(&self.rho).context("--rho")?,
            beta: axis(&self.beta).context("--beta")?,
            mu: self.mu,
            battery: axis(&self.battery).context("--battery")?,
            discipline: self.discipline.as_deref().map(split_tags),
            eh_mode: self.eh.as_deref().map(split_tags),
            k: axis(&self.k).context("--k")?,
            s_grid: axis(&self.s_grid).context("--s-grid")?,
            horizon: self.horizon,
            warmup: self.warmup,
            seed: self.seed,
            reps: self.reps,
            out: self.out.clone(),
            format: self.format,
            strict: self.strict.then_some(true),
            tolerance: self.tolerance,
        };
        Scenario::resolve(file.merge(flags))
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Skip the Monte Carlo check.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable report instead of text.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct FigureArgs {
    /// fig5, fig6, fig7 or fig8.
    which: String,
    /// Output directory.
    #[arg(long, default_value = "figures")]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// `csv` writes only the data; the default also writes SVG plots.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

enum Failure {
    Usage(anyhow::Error),
    Code(u8),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn strict_check(sc: &Scenario, devs: impl Iterator<Item = Option<f64>>) -> Result<(), Failure> {
    if !sc.strict {
        return Ok(());
    }
    match report::strict_breach(devs, sc.tolerance) {
        Some(worst) => {
            eprintln!("strict: relative deviation {worst:.3e} exceeds tolerance {:.1e}", sc.tolerance);
            Err(Failure::Code(EXIT_STRICT))
        }
        None => Ok(()),
    }
}

fn analyze(args: &RunArgs) -> Result<(), Failure> {
    let sc = args.scenario()?;
    let rows = report::analyze(&sc)?;
    let mut out = open_output(sc.out.as_ref())?;
    report::write_rows(&rows, sc.format, "analyze", &mut out)?;
    out.flush().map_err(anyhow::Error::from)?;
    strict_check(&sc, rows.iter().map(|r| r.rel_dev))
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let sc = args.scenario()?;
    let rows = report::simulate(&sc)?;
    let mut out = open_output(sc.out.as_ref())?;
    report::write_rows(&rows, sc.format, "simulate", &mut out)?;
    out.flush().map_err(anyhow::Error::from)?;
    strict_check(&sc, rows.iter().map(|r| r.rel_dev))
}

#[derive(serde::Serialize)]
struct CheckLine<'a> {
    id: u32,
    name: &'a str,
    status: String,
    detail: &'a str,
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let outcomes = run_suite(&Oracle::reference(), VerifyOptions { quick: args.quick, seed: args.seed });
    let mut out = open_output(args.out.as_ref())?;
    let lines: Vec<CheckLine> = outcomes
        .iter()
        .map(|o| CheckLine { id: o.id, name: o.name, status: o.status.to_string(), detail: &o.detail })
        .collect();
    match args.format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &lines).map_err(anyhow::Error::from)?;
            writeln!(out).map_err(anyhow::Error::from)?;
        }
        Some(Format::Csv) => {
            let mut w = csv::Writer::from_writer(&mut out);
            for l in &lines {
                w.serialize(l).map_err(anyhow::Error::from)?;
            }
            w.flush().map_err(anyhow::Error::from)?;
        }
        Some(Format::Svg) => return Err(Failure::Usage(anyhow::anyhow!("verify has no svg output"))),
        None => {
            for o in &outcomes {
                writeln!(out, "{o}").map_err(anyhow::Error::from)?;
                for note in &o.notes {
                    writeln!(out, "       note: {note}").map_err(anyhow::Error::from)?;
                }
            }
        }
    }
    out.flush().map_err(anyhow::Error::from)?;
    if outcomes.iter().all(|o| o.passed()) {
        Ok(())
    } else {
        Err(Failure::Code(EXIT_VERIFY))
    }
}

fn figures(args: &FigureArgs) -> Result<(), Failure> {
    if !figures::FIGURES.contains(&args.which.as_str()) {
        return Err(Failure::Usage(anyhow::anyhow!(
            "unknown figure `{}` (expected one of {})",
            args.which,
            figures::FIGURES.join(", ")
        )));
    }
    if !(args.mu.is_finite() && args.mu > 0.0) {
        return Err(Failure::Usage(anyhow::anyhow!("--mu must be positive")));
    }
    let svg = !matches!(args.format, Some(Format::Csv));
    for path in figures::write_figure(&args.which, args.mu, &args.out, svg)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Figures(a) => figures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Code(c)) => ExitCode::from(c),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
