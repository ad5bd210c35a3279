//! Command-line surface: run scenarios, analyze record files, localize
//! steganography sources, list presets.
//!
//! Exit codes: 0 success, 1 usage or parse failure, 2 insufficient
//! data, 3 i/o failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stegblur::{
    analysis, localize as loc, preset, preset_names, read_records, records, scenario, sim,
    write_records, Error,
};

#[derive(Parser)]
#[command(
    name = "stegblur",
    version,
    about = "Timing-steganography simulation and source localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (a preset name or a TOML file) and write records
    Run {
        /// Preset name (case1, case2, case3) or path to a scenario file
        scenario: String,
        /// Override the scenario's seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output record file (JSONL)
        #[arg(long, default_value = "records.jsonl")]
        out: PathBuf,
    },
    /// Compute per-probe statistics and histograms from a record file
    Analyze {
        records: PathBuf,
        /// Histogram CSV: stream,probe,bin_index,bin_lower_us,count
        #[arg(long, default_value = "hist.csv")]
        hist_csv: PathBuf,
        /// Statistics CSV: stream,probe,min_us,max_us,mean_us,stddev_us
        #[arg(long, default_value = "stats.csv")]
        stats_csv: PathBuf,
    },
    /// Rank candidate source nodes from a record file
    Localize {
        records: PathBuf,
        /// Minimum top score for a confident verdict
        #[arg(long, default_value_t = loc::DEFAULT_TAU)]
        tau: f64,
        /// Required margin of the top score over the chance-level bound
        #[arg(long, default_value_t = loc::DEFAULT_DELTA)]
        delta: f64,
        /// Output report path
        #[arg(long, default_value = "localization.json")]
        json: PathBuf,
    },
    /// List the canned scenario presets
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are not failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidParameter(_) | Error::Parse(_) | Error::Internal(_) => 1,
                Error::InsufficientData(_) => 2,
                Error::Io(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> stegblur::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => cmd_run(&scenario, seed, &out),
        Command::Analyze {
            records,
            hist_csv,
            stats_csv,
        } => cmd_analyze(&records, &hist_csv, &stats_csv),
        Command::Localize {
            records,
            tau,
            delta,
            json,
        } => cmd_localize(&records, tau, delta, &json),
        Command::Presets => {
            for name in preset_names() {
                let config = preset(name).expect("listed preset exists");
                let packets: u64 = config.streams.iter().map(|s| s.spec.packet_count()).sum();
                println!(
                    "{name}: {} streams, {} packets, {} probes, {:.0} s",
                    config.streams.len(),
                    packets,
                    config.probes.len(),
                    config.duration_us as f64 / 1e6
                );
            }
            Ok(())
        }
    }
}

fn resolve_scenario(name_or_path: &str) -> stegblur::Result<scenario::ScenarioConfig> {
    if let Some(config) = preset(name_or_path) {
        return Ok(config);
    }
    scenario::load_scenario(Path::new(name_or_path))
}

fn cmd_run(scenario_arg: &str, seed: Option<u64>, out: &Path) -> stegblur::Result<()> {
    let mut config = resolve_scenario(scenario_arg)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let run = sim::run_scenario(&config)?;
    for probe in run.unused_probes() {
        eprintln!("warning: probe {probe} lies on no stream route and yields no records");
    }
    write_records(out, &run)?;
    let packets: u64 = config.streams.iter().map(|s| s.spec.packet_count()).sum();
    println!(
        "{}: {} streams, {} packets, {} probes, {} records -> {}",
        config.name,
        config.streams.len(),
        packets,
        config.probes.len(),
        run.records.len(),
        out.display()
    );
    Ok(())
}

fn load_run(path: &Path) -> stegblur::Result<sim::RunResult> {
    let (header, recs) = read_records(path)?;
    records::to_run_result(header, recs)
}

fn cmd_analyze(records_path: &Path, hist_csv: &Path, stats_csv: &Path) -> stegblur::Result<()> {
    let run = load_run(records_path)?;
    let result = analysis::analyze_run(&run)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::write(hist_csv, analysis::histogram_csv(&result))?;
    std::fs::write(stats_csv, analysis::stats_csv(&result))?;
    let probes: usize = result.streams.iter().map(|s| s.probes.len()).sum();
    println!(
        "analyzed {} streams over {} probe series -> {}, {}",
        result.streams.len(),
        probes,
        hist_csv.display(),
        stats_csv.display()
    );
    Ok(())
}

fn cmd_localize(records_path: &Path, tau: f64, delta: f64, json: &Path) -> stegblur::Result<()> {
    let run = load_run(records_path)?;
    let result = analysis::analyze_run(&run)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let (reports, skipped) = loc::localize_run(&run, &result, tau, delta)?;
    for s in &skipped {
        eprintln!("warning: {s}");
    }
    std::fs::write(json, loc::reports_json(&reports))?;
    for report in &reports {
        let top = report.result.top();
        println!(
            "source {} (streams {}): top candidate {} score {:.3}, confident={}",
            report.source,
            report.streams.join(","),
            top.candidate,
            top.score,
            report.result.confident
        );
    }
    println!("report -> {}", json.display());
    Ok(())
}
