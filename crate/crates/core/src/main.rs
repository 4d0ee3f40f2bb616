use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsma_harq::experiment::{key_value_block, run_sweep, run_validate_with, write_csv, PointResult, SweepSpec, VALIDATE_MC_DRAWS};
use rsma_harq::harq::Scheme;
use rsma_harq::{Error, HarqKind};

/// Two-user uplink RSMA / NOMA / FDMA HARQ simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep schemes, HARQ kinds, L and rate; write a CSV.
    Sweep(SweepArgs),
    /// Check the closed forms against quadrature and Monte Carlo.
    Validate(ValidateArgs),
    /// Run one configuration and print both users' records.
    Single(SingleArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML file with any SweepSpec fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, alias = "kinds", value_delimiter = ',')]
    harq: Option<Vec<HarqKind>>,
    /// Maximum retransmissions L.
    #[arg(long, alias = "l-values", value_delimiter = ',')]
    retx: Option<Vec<u32>>,
    #[arg(long, allow_hyphen_values = true)]
    gamma1_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma2_db: Option<f64>,
    #[arg(long)]
    rate_start: Option<f64>,
    #[arg(long)]
    rate_stop: Option<f64>,
    #[arg(long)]
    rate_step: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = VALIDATE_MC_DRAWS)]
    mc_draws: u64,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SingleArgs {
    #[arg(long, default_value = "RSMA")]
    scheme: Scheme,
    #[arg(long, default_value = "CC")]
    harq: HarqKind,
    #[arg(long, default_value_t = 2)]
    retx: u32,
    #[arg(long, default_value_t = 2.0)]
    rate: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    gamma1_db: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    gamma2_db: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
}

impl SweepArgs {
    fn spec(&self) -> Result<SweepSpec, Error> {
        let mut s = match &self.config {
            Some(p) => SweepSpec::from_toml_file(p)?,
            None => SweepSpec::default(),
        };
        if let Some(v) = &self.schemes {
            s.schemes = v.clone();
        }
        if let Some(v) = &self.harq {
            s.kinds = v.clone();
        }
        if let Some(v) = &self.retx {
            s.l_values = v.clone();
        }
        s.gamma1_db = self.gamma1_db.unwrap_or(s.gamma1_db);
        s.gamma2_db = self.gamma2_db.unwrap_or(s.gamma2_db);
        s.rate_start = self.rate_start.unwrap_or(s.rate_start);
        s.rate_stop = self.rate_stop.unwrap_or(s.rate_stop);
        s.rate_step = self.rate_step.unwrap_or(s.rate_step);
        s.trials = self.trials.unwrap_or(s.trials);
        s.seed = self.seed.unwrap_or(s.seed);
        s.validate()?;
        Ok(s)
    }
}

fn set_workers(n: Option<usize>) -> Result<(), Error> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config {
            field: "workers",
            reason: "must be >= 1".into(),
        });
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config {
        field: "workers",
        reason: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Sweep(a) => {
            set_workers(a.workers)?;
            let spec = a.spec()?;
            let records = run_sweep(&spec)?;
            write_csv(&records, &a.out)?;
            eprintln!("wrote {} records to {}", records.len(), a.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(a) => {
            set_workers(a.workers)?;
            let report = run_validate_with(a.points, a.seed, a.mc_draws)?;
            for f in &report.failures {
                println!("failure: {f}");
            }
            println!("{}", report.summary());
            if report.passed() {
                println!("PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL");
                Ok(ExitCode::from(2))
            }
        }
        Command::Single(a) => {
            set_workers(a.workers)?;
            let spec = SweepSpec {
                schemes: vec![a.scheme],
                kinds: vec![a.harq],
                l_values: vec![a.retx],
                rate_start: a.rate,
                rate_stop: a.rate,
                rate_step: 1.0,
                gamma1_db: a.gamma1_db,
                gamma2_db: a.gamma2_db,
                trials: a.trials,
                seed: a.seed,
            };
            let points = rsma_harq::experiment::run_sweep_points(&spec)?;
            let blocks: Vec<String> = points.iter().flat_map(|p: &PointResult| p.records(a.seed)).map(|r| key_value_block(&r)).collect();
            print!("{}", blocks.join("\n"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
