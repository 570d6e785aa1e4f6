use std::path::PathBuf;

use clap::Args;
use firctl_core::benchmark::{self, TapSet, REACTOR_X0};
use firctl_core::encfir::{self, EncFirConfig, EncFirSession, Mode};
use firctl_core::fir;
use firctl_core::he::{BfvSession, HeParams};
use firctl_core::lti;
use firctl_core::sim::{self, BackendKind, ControllerSpec, Scenario, TransportSpec};

use super::{write_output, CliResult};

#[derive(Args)]
pub struct ReproduceArgs {
    /// Output directory for traces and plot data.
    #[arg(long, default_value = "out/benchmark")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Skip the real-backend encrypted runs (mock still audits depth).
    #[arg(long)]
    pub skip_encrypted: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run(args: ReproduceArgs) -> CliResult {
    let plant = benchmark::reactor_plant();
    let n0 = norm2(&REACTOR_X0);
    let mut summary: Vec<(bool, String)> = Vec::new();

    println!("== batch-reactor benchmark ==");
    println!(
        "plant: 4 states, 1 input, 2 outputs; open-loop spectral radius {:.4}",
        lti::spectral_radius(&plant.a).map_err(|e| super::schema_err(anyhow::Error::new(e)))?
    );

    // 1. stabilization by each published tap set, plaintext loop
    for set in TapSet::ALL {
        let filter = benchmark::taps(set);
        let ctrl_ss = fir::fir_to_statespace(&filter);
        let (a_cl, stable) =
            sim::closed_loop_matrix(&plant, &ctrl_ss).map_err(super::classify_sim_error)?;
        let rho = lti::spectral_radius(&a_cl)
            .map_err(|e| super::schema_err(anyhow::Error::new(e)))?;
        let sc = Scenario {
            plant: plant.clone(),
            controller: ControllerSpec::Fir(filter),
            steps: args.steps,
            transport: TransportSpec::Inproc,
            seed: args.seed,
        };
        let trace = sim::run_scenario(&sc).map_err(super::classify_sim_error)?;
        write_output(&args.out_dir.join(format!("{}.csv", set.name())), &trace.to_csv())?;
        write_output(
            &args.out_dir.join(format!("{}-norm.dat", set.name())),
            &trace.to_norm_plot(),
        )?;
        let hit = trace.steps.iter().find(|s| s.norm_x < 0.1 * n0).map(|s| s.k);
        let pass = stable && hit.is_some();
        summary.push((
            pass,
            format!(
                "{}: closed loop {} (rho = {rho:.4}), ||x|| < 0.1 ||x0|| at k = {}",
                set.name(),
                if stable { "Schur stable" } else { "UNSTABLE" },
                hit.map_or("never".into(), |k| k.to_string()),
            ),
        ));
    }

    // 2. operation-count advantage
    let bound = fir::efficient_order_bound(2, 1, 4);
    let (f7, iir) = fir::opcounts(7, 2, 1, 4);
    summary.push((
        bound == 14.0 && f7.multiplications < iir.multiplications,
        format!(
            "efficiency: FIR cheaper than the dynamic controller for N < {bound} \
             (N=7: {} vs {} multiplications)",
            f7.multiplications, iir.multiplications
        ),
    ));

    // 3. depth audit of the encrypted step
    let mut depth_ok = true;
    for set in TapSet::ALL {
        for mode in [Mode::Partial, Mode::Full] {
            let d = encfir::depth_audit(&benchmark::taps(set), mode, HeParams::default())
                .map_err(|e| super::schema_err(anyhow::Error::new(e)))?;
            depth_ok &= d == 1;
        }
    }
    summary.push((depth_ok, "multiplicative depth of every encrypted step: 1".into()));

    if !args.skip_encrypted {
        // 4. partially encrypted closed loop at full amplitude
        let filter = benchmark::taps(TapSet::Window7);
        let cfg = EncFirConfig { mode: Mode::Partial, s6: 100.0, s7: 100.0, y_max: 256.0 };
        let plain_sc = Scenario {
            plant: plant.clone(),
            controller: ControllerSpec::Fir(filter.clone()),
            steps: args.steps,
            transport: TransportSpec::Inproc,
            seed: args.seed,
        };
        let enc_sc = Scenario {
            plant: plant.clone(),
            controller: ControllerSpec::EncryptedFir {
                filter: filter.clone(),
                cfg,
                he: HeParams::partial_profile(),
                backend: BackendKind::Real,
            },
            steps: args.steps,
            transport: TransportSpec::Inproc,
            seed: args.seed,
        };
        let t_plain = sim::run_scenario(&plain_sc).map_err(super::classify_sim_error)?;
        let t_enc = sim::run_scenario(&enc_sc).map_err(super::classify_sim_error)?;
        write_output(&args.out_dir.join("encrypted-partial.csv"), &t_enc.to_csv())?;
        write_output(&args.out_dir.join("encrypted-partial-norm.dat"), &t_enc.to_norm_plot())?;
        let max_dev = t_plain
            .steps
            .iter()
            .zip(&t_enc.steps)
            .map(|(a, b)| (a.u[0] - b.u[0]).abs())
            .fold(0.0_f64, f64::max);
        // bound for these scales: sum|F|/(2 s7) + per-term input rounding
        let quant_bound = 1.0;
        summary.push((
            max_dev <= quant_bound,
            format!(
                "partially encrypted loop tracks the plaintext FIR loop: max |du| = {max_dev:.4} \
                 (quantization budget {quant_bound})"
            ),
        ));

        // 5. fully encrypted loop (reduced amplitude fits the certified
        //    full-mode plaintext space) plus the latency report
        let x0_small: Vec<f64> = REACTOR_X0.iter().map(|v| v / 10.0).collect();
        let full_sc = Scenario {
            plant: plant.clone().with_x0(x0_small).map_err(|e| {
                super::schema_err(anyhow::Error::new(e))
            })?,
            controller: ControllerSpec::EncryptedFir {
                filter: filter.clone(),
                cfg: EncFirConfig { mode: Mode::Full, s6: 4.0, s7: 4.0, y_max: 32.0 },
                he: HeParams::default(),
                backend: BackendKind::Real,
            },
            steps: args.steps.min(150),
            transport: TransportSpec::Inproc,
            seed: args.seed,
        };
        let t_full = sim::run_scenario(&full_sc).map_err(super::classify_sim_error)?;
        write_output(&args.out_dir.join("encrypted-full.csv"), &t_full.to_csv())?;
        write_output(&args.out_dir.join("encrypted-full-norm.dat"), &t_full.to_norm_plot())?;
        let alarms = t_full.steps.iter().filter(|s| s.flags.noise_alarm).count();
        summary.push((
            alarms == 0,
            format!(
                "fully encrypted loop (taps, measurements and actions all ciphertext) ran {} \
                 steps with {alarms} noise alarms",
                t_full.len()
            ),
        ));

        let backend = BfvSession::new(HeParams::default(), args.seed)
            .map_err(|e| super::schema_err(anyhow::Error::new(e)))?;
        let mut bench_session = EncFirSession::new(
            filter,
            EncFirConfig { mode: Mode::Full, s6: 4.0, s7: 4.0, y_max: 32.0 },
            backend,
        )
        .map_err(|e| super::schema_err(anyhow::Error::new(e)))?;
        let stats =
            sim::bench_step_latency(&mut bench_session, 100).map_err(super::classify_sim_error)?;
        summary.push((
            stats.median_ms < 100.0,
            format!(
                "real-time: full-mode order-7 step latency median {:.2} ms, p99 {:.2} ms \
                 (100 ms sampling budget)",
                stats.median_ms, stats.p99_ms
            ),
        ));
    }

    println!("\n== summary ==");
    let mut all_ok = true;
    for (ok, line) in &summary {
        println!("  [{}] {line}", if *ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    }
    println!(
        "\ntraces and gnuplot-ready norm data written under {}",
        args.out_dir.display()
    );
    if !all_ok {
        return Err(super::fail(1, anyhow::anyhow!("benchmark reproduction had failures")));
    }
    Ok(())
}
