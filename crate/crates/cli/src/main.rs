//! `firctl`: design FIR replacements for dynamic controllers, analyze their
//! cost and overflow behavior, run them (plain, quantized or encrypted) in
//! closed loop against a plant, serve the encrypted evaluation as a cloud
//! role, and reproduce the built-in batch-reactor benchmark.

mod commands;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 2 infeasible design, 3 overflow detected,
/// 4 transport failure, 5 schema error.
#[derive(Parser)]
#[command(name = "firctl", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rectangular-window FIR design from a controller model.
    DesignWindow(commands::design::WindowArgs),
    /// H-infinity optimal FIR design via the bounded-real LMI.
    DesignHinf(commands::design::HinfArgs),
    /// Operation counts, efficiency bound, overflow horizon and depth audit.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Run a closed-loop scenario file and write trace outputs.
    Simulate(commands::run::SimulateArgs),
    /// Serve the cloud role (encrypted controller evaluation) over TCP.
    Serve(commands::serve::ServeArgs),
    /// Run the plant-side sensor/actuator client against a serving cloud.
    Sensor(commands::run::SensorArgs),
    /// Serve a standalone actuator (decrypt relay) over TCP.
    Actuator(commands::serve::ActuatorArgs),
    /// Generate key material files (toy parameters; no security claimed).
    Keygen(commands::keygen::KeygenArgs),
    /// Measure encrypted step latency against the 100 ms budget.
    Bench(commands::bench::BenchArgs),
    /// Reproduce the built-in batch-reactor benchmark end to end.
    ReproduceBenchmark(commands::reproduce::ReproduceArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DesignWindow(args) => commands::design::run_window(args),
        Command::DesignHinf(args) => commands::design::run_hinf(args),
        Command::Analyze(args) => commands::analyze::run(args),
        Command::Simulate(args) => commands::run::run_simulate(args),
        Command::Serve(args) => commands::serve::run_serve(args),
        Command::Sensor(args) => commands::run::run_sensor(args),
        Command::Actuator(args) => commands::serve::run_actuator(args),
        Command::Keygen(args) => commands::keygen::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::ReproduceBenchmark(args) => commands::reproduce::run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            std::process::exit(e.code);
        }
    }
}
