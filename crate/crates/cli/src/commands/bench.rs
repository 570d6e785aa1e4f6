use clap::Args;
use firctl_core::benchmark::{self, TapSet};
use firctl_core::encfir::{EncFirConfig, EncFirSession, Mode};
use firctl_core::fir::FirFilter;
use firctl_core::he::{BfvSession, HeParams, MockSession};
use firctl_core::lti::Matrix;
use firctl_core::sim;

use super::{schema_err, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    /// Filter order (the benchmark window filter is used for order 7;
    /// synthetic taps otherwise).
    #[arg(long, default_value_t = 7)]
    pub order: usize,
    /// partial | full
    #[arg(long, default_value = "full")]
    pub mode: String,
    /// real | mock
    #[arg(long, default_value = "real")]
    pub backend: String,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn run(args: BenchArgs) -> CliResult {
    let mode = match args.mode.as_str() {
        "partial" => Mode::Partial,
        "full" => Mode::Full,
        other => return Err(schema_err(anyhow::anyhow!("unknown mode {other}"))),
    };
    let filter = if args.order == 7 {
        benchmark::taps(TapSet::Window7)
    } else {
        FirFilter::new(
            (0..=args.order)
                .map(|j| Matrix::new(1, 2, vec![30.0 / (j + 1) as f64, -0.4]).unwrap())
                .collect(),
        )
        .map_err(|e| schema_err(anyhow::Error::new(e)))?
    };
    let defaults = super::load_defaults();
    let (params, scale) = match mode {
        Mode::Partial => (HeParams::partial_profile(), 100.0),
        Mode::Full => (HeParams::default(), 4.0),
    };
    let cfg = EncFirConfig {
        mode,
        s6: defaults.s6.unwrap_or(scale),
        s7: defaults.s7.unwrap_or(scale),
        y_max: defaults.y_max.unwrap_or(32.0),
    };
    let stats = match args.backend.as_str() {
        "real" => {
            let backend = BfvSession::new(params, args.seed)
                .map_err(|e| schema_err(anyhow::Error::new(e)))?;
            let mut session = EncFirSession::new(filter, cfg, backend)
                .map_err(|e| schema_err(anyhow::Error::new(e)))?;
            sim::bench_step_latency(&mut session, args.steps)
        }
        "mock" => {
            let mut session = EncFirSession::new(filter, cfg, MockSession::new(params))
                .map_err(|e| schema_err(anyhow::Error::new(e)))?;
            sim::bench_step_latency(&mut session, args.steps)
        }
        other => return Err(schema_err(anyhow::anyhow!("unknown backend {other}"))),
    }
    .map_err(super::classify_sim_error)?;

    let verdict = if stats.median_ms < 100.0 { "within" } else { "OVER" };
    println!(
        "order {} {} mode, {} backend, ring dimension {}: per-step latency over {} steps",
        args.order, args.mode, args.backend, params.ring_dim, stats.samples
    );
    println!(
        "  min {:.3} ms | median {:.3} ms | p99 {:.3} ms | mean {:.3} ms",
        stats.min_ms, stats.median_ms, stats.p99_ms, stats.mean_ms
    );
    println!("  median is {verdict} the 100 ms sampling-period budget");
    Ok(())
}
