use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use firctl_core::fir;
use firctl_core::lti;

use super::{classify_fir_error, load_model, schema_err, write_output, CliResult};

#[derive(Args)]
pub struct WindowArgs {
    /// Controller model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Filter order N (the filter has N+1 taps).
    #[arg(long)]
    pub order: usize,
    /// Output filter JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_window(args: WindowArgs) -> CliResult {
    let (ctrl, _dt) = load_model(&args.model)?;
    let design = fir::window_fir(&ctrl, args.order).map_err(classify_fir_error)?;
    if !design.stable {
        eprintln!(
            "warning: controller state matrix is not Schur stable; the window truncation \
             argument does not apply and the emitted taps may approximate poorly"
        );
    }
    write_output(&args.out, &design.filter.to_json())?;
    println!(
        "wrote {} taps to {} (truncation indicator ||C A^N|| = {:.3e})",
        design.filter.taps().len(),
        args.out.display(),
        design.truncation_norm
    );
    Ok(())
}

#[derive(Args)]
pub struct HinfArgs {
    /// Controller model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Weight: "inverse" (causal inverse of the model), "identity", or a
    /// model JSON path.
    #[arg(long, default_value = "inverse")]
    pub weight: String,
    /// Filter order N.
    #[arg(long)]
    pub order: usize,
    /// Fixed error bound to certify. Mutually exclusive with --minimize.
    #[arg(long, conflicts_with = "minimize")]
    pub gamma: Option<f64>,
    /// Bisect gamma down to 0.1% relative width.
    #[arg(long)]
    pub minimize: bool,
    /// Upper cap for the gamma search.
    #[arg(long, default_value_t = 1e6)]
    pub cap: f64,
    /// Output filter JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_hinf(args: HinfArgs) -> CliResult {
    let (ctrl, _dt) = load_model(&args.model)?;
    let weight = match args.weight.as_str() {
        "inverse" => {
            let inv = fir::causal_inverse_weight(&ctrl).map_err(classify_fir_error)?;
            if inv.regularized {
                eprintln!("warning: controller feedthrough required a regularized pseudo-inverse");
            }
            let rho = lti::spectral_radius(&inv.sys.a)
                .map_err(|e| schema_err(anyhow::Error::new(e)))?;
            if rho >= 1.0 - 1e-9 {
                return Err(schema_err(anyhow!(
                    "causal inverse is unstable (spectral radius {rho:.4}); \
                     the controller is non-minimum phase — use --weight identity"
                )));
            }
            inv.sys
        }
        "identity" => fir::identity_weight(ctrl.inputs()),
        path => load_model(std::path::Path::new(path))?.0,
    };
    let design = if args.minimize {
        let (gamma, design) =
            fir::minimize_gamma(&ctrl, &weight, args.order, args.cap).map_err(classify_fir_error)?;
        println!("minimized gamma* = {gamma:.6e}");
        design
    } else {
        let gamma = args.gamma.ok_or_else(|| {
            schema_err(anyhow!("either --gamma <g> or --minimize is required"))
        })?;
        fir::hinf_fir_design(&ctrl, &weight, args.order, gamma).map_err(classify_fir_error)?
    };
    write_output(&args.out, &design.filter.to_json())?;
    println!(
        "wrote order-{} filter to {}; certificate slack {:.3e}, independent audit \
         hinf = {:.6e} < gamma * 1.01 = {:.6e}",
        design.filter.order(),
        args.out.display(),
        design.slack,
        design.audit,
        design.gamma * 1.01
    );
    Ok(())
}

pub fn load_filter(path: &std::path::Path) -> Result<fir::FirFilter, super::CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading filter {}", path.display()))
        .map_err(schema_err)?;
    fir::FirFilter::from_json(&text).map_err(classify_fir_error)
}
