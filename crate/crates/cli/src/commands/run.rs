use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use firctl_core::sim::{self, scenario::ScenarioFile, TransportSpec};

use super::{classify_sim_error, schema_err, write_output, CliResult, EXIT_OVERFLOW};

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory for trace CSV and norm plot data.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Exit with code 3 if any step raised an overflow flag.
    #[arg(long)]
    pub fail_on_overflow: bool,
}

pub fn run_simulate(args: SimulateArgs) -> CliResult {
    run_scenario_file(&args.scenario, &args.out_dir, args.fail_on_overflow, None)
}

#[derive(Args)]
pub struct SensorArgs {
    /// Scenario JSON file (must use an encrypted controller).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Cloud address, overriding the scenario's transport.
    #[arg(long)]
    pub connect: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub fail_on_overflow: bool,
}

pub fn run_sensor(args: SensorArgs) -> CliResult {
    run_scenario_file(
        &args.scenario,
        &args.out_dir,
        args.fail_on_overflow,
        Some(TransportSpec::Socket(args.connect)),
    )
}

fn run_scenario_file(
    path: &std::path::Path,
    out_dir: &std::path::Path,
    fail_on_overflow: bool,
    transport_override: Option<TransportSpec>,
) -> CliResult {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(schema_err)?;
    let file = ScenarioFile::from_json(&text).map_err(classify_sim_error)?;
    let mut scenario = file.into_scenario().map_err(classify_sim_error)?;
    if let Some(t) = transport_override {
        scenario.transport = t;
    }
    let trace = sim::run_scenario(&scenario).map_err(classify_sim_error)?;

    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    write_output(&out_dir.join(format!("{stem}.csv")), &trace.to_csv())?;
    write_output(&out_dir.join(format!("{stem}-norm.dat")), &trace.to_norm_plot())?;

    let overflowed = trace.steps.iter().any(|s| s.flags.overflow);
    let noise = trace.steps.iter().any(|s| s.flags.noise_alarm);
    let first = trace.steps.first().map_or(0.0, |s| s.norm_x);
    let last = trace.steps.last().map_or(0.0, |s| s.norm_x);
    println!(
        "{} steps: ||x|| {first:.4} -> {last:.4}; overflow: {overflowed}; noise alarms: {noise}",
        trace.len()
    );
    println!("wrote {stem}.csv and {stem}-norm.dat under {}", out_dir.display());
    if fail_on_overflow && (overflowed || noise) {
        return Err(super::fail(EXIT_OVERFLOW, anyhow!("run raised overflow/noise flags")));
    }
    Ok(())
}
