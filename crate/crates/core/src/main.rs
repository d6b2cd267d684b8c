use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leaksense::calibration::{Calibrator, LookupTable};
use leaksense::config::RunConfig;
use leaksense::peripherals::{clock_stats, timing_at};
use leaksense::read_sim::{full_array_trace, parse_trace, simulate_sequence, ReadSetup};
use leaksense::report;
use leaksense::variation::sweep;
use leaksense::{Error, Result};

/// Sub-threshold 8T SRAM read-path simulator with leakage-detection calibration.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value`). Defaults apply when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials, overriding `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Leakage, discharge times and window ratio over the sweep grid.
    Sweep(Common),
    /// Build the supply lookup table.
    Calibrate(Common),
    /// Run reads with a calibrated table.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Lookup table from `calibrate`.
        #[arg(long)]
        table: PathBuf,
        /// Read trace; reads every row of array 0 when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Exit with status 2 if any bit is misread.
        #[arg(long)]
        expect_clean: bool,
        /// Also write one CSV line per read.
        #[arg(long)]
        per_read: bool,
    },
    /// Replica clock period statistics per supply.
    Clock(Common),
}

fn load(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::parse_file(p)?,
        None => RunConfig::parse_with("", "<defaults>", |k| std::env::var(k).ok())?,
    };
    if let Some(s) = c.seed {
        cfg.model.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.model.trials = t;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    log::info!(
        "config_sha256 {} seed {}",
        cfg.calibration_hash(),
        cfg.model.seed
    );
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    report::write_text(&path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let result = sweep(&cfg.column(), &cfg.sweep, &cfg.model)?;
            write(&cfg.out_dir, "sweep.csv", &report::sweep_csv(&result)?)?;
        }
        Command::Calibrate(c) => {
            let cfg = load(&c)?;
            let column = cfg.column();
            let sosa = cfg.sosa();
            let cal = Calibrator {
                cfg: &column,
                model: &cfg.model,
                replica: &cfg.replica,
                sosa: &sosa,
                settings: &cfg.calib,
            };
            let (table, details) = cal.build(&cfg.vdd_list, &cfg.calibration_hash())?;
            write(&cfg.out_dir, "lookup.tsv", &table.to_tsv())?;
            let summary = report::calibration_summary(&table, &details);
            write(&cfg.out_dir, "calibration.txt", &summary)?;
            print!("{summary}");
        }
        Command::Simulate {
            common,
            table,
            trace,
            expect_clean,
            per_read,
        } => {
            let cfg = load(&common)?;
            let text = report::read_text(&table)?;
            let table = LookupTable::from_tsv(&text, &table.display().to_string())?;
            let hash = cfg.calibration_hash();
            if table.header.config_sha256 != hash {
                log::warn!("lookup table was calibrated with a different configuration");
            }
            let row = table.row_for(cfg.env.vdd).ok_or_else(|| {
                Error::Usage(format!(
                    "lookup table has no row for vdd = {} V",
                    cfg.env.vdd
                ))
            })?;
            let sosa = cfg.sosa();
            let timing = timing_at(&cfg.replica, &sosa, &cfg.params, &cfg.env, &cfg.model)?;
            let setup =
                ReadSetup::from_row(cfg.column(), cfg.model, timing, row, cfg.t_rwl_factor)?;
            let bank = cfg.pattern.bank(cfg.depth)?;
            let accesses = match &trace {
                Some(p) => parse_trace(&report::read_text(p)?, &p.display().to_string())?,
                None => full_array_trace(&bank, 0),
            };
            let rep = simulate_sequence(&bank, &accesses, &setup)?;
            write(
                &cfg.out_dir,
                "read_report.tsv",
                &report::read_summary_tsv(&rep, &setup, &hash)?,
            )?;
            if per_read {
                write(&cfg.out_dir, "reads.csv", &report::reads_csv(&rep)?)?;
            }
            println!(
                "{} reads, {} bit errors, mean delay {} s",
                rep.reads,
                rep.bit_errors,
                report::sci(rep.mean_delay)
            );
            if expect_clean && rep.bit_errors > 0 {
                eprintln!("error: {} bit errors with --expect-clean", rep.bit_errors);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Clock(c) => {
            let cfg = load(&c)?;
            let sosa = cfg.sosa();
            sosa.validate()?;
            let mut rows = Vec::with_capacity(cfg.clock_vdd.len());
            for &v in &cfg.clock_vdd {
                let env = leaksense::device::Environment::new(v, cfg.env.temperature)?;
                rows.push((v, clock_stats(&cfg.replica, &cfg.params, &env, &cfg.model)?));
            }
            write(&cfg.out_dir, "clock.csv", &report::clock_csv(&rows)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
