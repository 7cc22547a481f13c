use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Parser, Subcommand};

use polysketch::bench::{self, AmmSpec, BenchSpec, CompareSpec, Distribution, Mechanism};
use polysketch::verify::{self, Suite};
use polysketch::{fault, Precision};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "polysketch", version, about = "Polynomial attention kernels: verification and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run invariant suites against brute-force oracles.
    Verify {
        #[arg(long, default_value = "all", value_parser = PossibleValuesParser::new(Suite::NAMES))]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "f64", value_parser = PossibleValuesParser::new(["f32", "f64"]))]
        precision: String,
        /// Also write the report as JSON to this path.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, hide = true, value_parser = PossibleValuesParser::new(["lt-diagonal"]))]
        inject_fault: Option<String>,
    },
    /// Sweep the relative AMM error of the sketch over sketch sizes.
    Amm {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        h: usize,
        #[arg(long, default_value_t = 4)]
        p: u32,
        #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
        r_list: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use all-zero Q and K.
        #[arg(long)]
        zero_input: bool,
    },
    /// Time a mechanism over sequence lengths.
    Bench {
        #[arg(long, value_parser = PossibleValuesParser::new(Mechanism::NAMES))]
        mechanism: String,
        #[arg(long, value_delimiter = ',', default_value = "512,1024,2048,4096,8192")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        h: usize,
        #[arg(long, default_value_t = 32)]
        r: usize,
        #[arg(long, default_value_t = 4)]
        p: u32,
        #[arg(long, default_value_t = 256)]
        block: usize,
        /// Exact polynomial weights inside each diagonal block
        #[arg(long)]
        local: bool,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random matrix (CSV for a .csv path, PSKM otherwise).
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value = "gaussian", value_parser = PossibleValuesParser::new(["gaussian", "unit-rows"]))]
        dist: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "f64", value_parser = PossibleValuesParser::new(["f32", "f64"]))]
        precision: String,
    },
    /// Compare causal sketched attention with the exact causal oracle.
    AttnCompare {
        #[arg(long, default_value_t = 4)]
        p: u32,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        h: usize,
        #[arg(long, default_value_t = 32)]
        r: usize,
        #[arg(long, default_value_t = 64)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exact polynomial weights inside each diagonal block
        #[arg(long)]
        local: bool,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PSK_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("PSK_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn sink(out: &Option<PathBuf>) -> polysketch::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> polysketch::Result<u8> {
    match cli.command {
        Command::Verify { suite, seed, precision, report, inject_fault } => {
            if inject_fault.is_some() {
                fault::set_lt_strict(true);
            }
            let suite: Suite = suite.parse()?;
            let precision: Precision = precision.parse()?;
            let result = verify::run(suite, seed, precision);
            println!("{result}");
            if let Some(path) = report {
                std::fs::write(path, result.to_json())?;
            }
            Ok(if result.passed { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Amm { n, h, p, r_list, trials, seed, out, zero_input } => {
            let rows = bench::run_amm(&AmmSpec { n, h, p, r_list, trials, seed, zero_input })?;
            bench::write_amm_csv(sink(&out)?, &rows)?;
            Ok(0)
        }
        Command::Bench { mechanism, n_list, h, r, p, block, local, reps, seed, out } => {
            let spec = BenchSpec { mechanism: mechanism.parse()?, n_list, h, r, p, block, local, reps, seed };
            spec.validate()?;
            let records = bench::run_bench(&spec)?;
            bench::write_bench_csv(sink(&out)?, &records)?;
            Ok(0)
        }
        Command::Gen { rows, cols, dist, seed, out, precision } => {
            let dist: Distribution = dist.parse()?;
            bench::gen_to_file(&out, rows, cols, dist, seed, precision.parse()?)?;
            Ok(0)
        }
        Command::AttnCompare { p, n, h, r, b, seed, local } => {
            let record = bench::attn_compare(&CompareSpec { p, n, h, r, block: b, local, seed })?;
            bench::write_bench_csv(io::stdout().lock(), &[record])?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
