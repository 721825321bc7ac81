use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use vdc_teleop::harness::analyze::analyze_scenario;
use vdc_teleop::harness::config::{ConfigError, ScenarioConfig};
use vdc_teleop::harness::metrics::compute_metrics;
use vdc_teleop::harness::sim::{run_scenario, RunOutput, SimError};
use vdc_teleop::harness::trace::TraceLog;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "vdc-teleop", version, about = "Scaled bilateral teleoperation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trace and metrics.
    Run { scenario: PathBuf },
    /// Stability and transparency report for a scenario's gains.
    Analyze { scenario: PathBuf },
    /// Recompute the metrics report of a trace file.
    Metrics { trace: PathBuf },
    /// Run a scenario once per value of one parameter, in parallel.
    Sweep {
        scenario: PathBuf,
        /// kappa_p, kappa_f, lambda, a, filter, delay, seed, inertia_error or env_stiffness.
        param: String,
        /// `start:stop:count` or a comma-separated list.
        range: String,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Diverged(_) => EXIT_DIVERGED,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Diverged(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            SimError::Divergence { .. } | SimError::Barrier { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Diverged(other.to_string()),
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_range(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("invalid range {text:?}; use start:stop:count or a,b,c"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        return match n {
            0 => Err(bad()),
            1 => Ok(vec![lo]),
            _ => Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()),
        };
    }
    text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn write_outputs(out_dir: &Path, name: &str, run: &RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join(format!("{name}_trace.csv"));
    run.trace
        .write_csv(BufWriter::new(File::create(&trace_path)?))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let metrics_path = out_dir.join(format!("{name}_metrics.csv"));
    run.metrics.write_csv(BufWriter::new(File::create(&metrics_path)?))?;
    Ok(())
}

fn summary(name: &str, run: &RunOutput) -> String {
    format!(
        "{name}: ok, trace sha256 {}, scaled error final {:.3e} m, rho {:.4}, min barrier margin {:.3}/{:.3}, \
         vpf minima {:.3e}/{:.3e}",
        run.trace_hash,
        run.metrics.ep_final,
        run.metrics.rho,
        run.min_margin.0,
        run.min_margin.1,
        run.vpf.master.minimum,
        run.vpf.contact.minimum,
    )
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let Format::Csv = cli.format;
    match &cli.command {
        Command::Run { scenario } => {
            let cfg = load(scenario, cli.seed)?;
            let run = run_scenario(&cfg)?;
            write_outputs(&cli.out_dir, &cfg.name, &run)?;
            println!("{}", summary(&cfg.name, &run));
        }
        Command::Analyze { scenario } => {
            let cfg = load(scenario, cli.seed)?;
            let out = analyze_scenario(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            fs::create_dir_all(&cli.out_dir)?;
            let path = cli.out_dir.join(format!("{}_analysis.csv", cfg.name));
            let mut w = BufWriter::new(File::create(&path)?);
            out.write_csv(&mut w).map_err(|e| Failure::Usage(e.to_string()))?;
            w.flush()?;
            print!("{}", out.summary());
        }
        Command::Metrics { trace } => {
            let file = File::open(trace).map_err(|e| Failure::Usage(format!("{}: {e}", trace.display())))?;
            let log = TraceLog::read_csv(BufReader::new(file)).map_err(|e| Failure::Config(e.to_string()))?;
            let report = compute_metrics(&log).map_err(|e| Failure::Config(e.to_string()))?;
            report.write_csv(io::stdout().lock())?;
        }
        Command::Sweep { scenario, param, range } => {
            let base = load(scenario, cli.seed)?;
            let cfgs = parse_range(range)?
                .into_iter()
                .map(|v| base.with_parameter(param, v))
                .collect::<Result<Vec<_>, _>>()?;
            let results: Vec<_> = cfgs.par_iter().map(|c| (c, run_scenario(c))).collect();
            let mut diverged = false;
            for (c, r) in results {
                match r {
                    Ok(run) => {
                        write_outputs(&cli.out_dir, &c.name, &run)?;
                        println!("{}", summary(&c.name, &run));
                    }
                    Err(e) => {
                        diverged = true;
                        println!("{}: aborted, {e}", c.name);
                    }
                }
            }
            if diverged {
                return Err(Failure::Diverged("at least one sweep point aborted".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_range("500, 800,1000").unwrap(), vec![500.0, 800.0, 1000.0]);
        assert_eq!(parse_range("2:9:1").unwrap(), vec![2.0]);
        assert!(parse_range("1:2:0").is_err());
        assert!(parse_range("x").is_err());
    }
}
