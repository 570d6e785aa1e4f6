use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use firctl_core::encfir::{self, Mode};
use firctl_core::fir;
use firctl_core::he::HeParams;
use firctl_core::quant::{self, Horizon, ScalingProfile};

use super::{load_model, schema_err, CliResult};

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Controller model JSON (for overflow-horizon analysis).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// FIR filter JSON (for the depth audit and FIR op counts).
    #[arg(long)]
    pub filter: Option<PathBuf>,
    /// Dimensions l,m,n for the operation-count comparison.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Scaling profile JSON for the integer reformulation.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Input magnitude bound for the overflow horizon. Falls back to the
    /// `FIRCTL_CONFIG` defaults file, then 10.
    #[arg(long)]
    pub y_max: Option<f64>,
}

pub fn run(args: AnalyzeArgs) -> CliResult {
    let defaults = super::load_defaults();
    let y_max = args.y_max.or(defaults.y_max).unwrap_or(10.0);
    if let Some(dims) = &args.dims {
        if dims.len() != 3 {
            return Err(schema_err(anyhow!("--dims expects l,m,n")));
        }
        let (l, m, n) = (dims[0], dims[1], dims[2]);
        let bound = fir::efficient_order_bound(l, m, n);
        println!("efficient order bound for l={l}, m={m}, n={n}: N < {bound}");
        for order in [0, 2, 7, (bound as usize).saturating_sub(1)] {
            let (f, i) = fir::opcounts(order, l, m, n);
            println!(
                "  N={order}: FIR {} mults / {} adds vs dynamic controller {} mults / {} adds",
                f.multiplications, f.additions, i.multiplications, i.additions
            );
        }
    }

    if let Some(path) = &args.filter {
        let filter = super::design::load_filter(path)?;
        let (l, m) = (filter.inputs(), filter.outputs());
        let (f_ops, _) = fir::opcounts(filter.order(), l, m, 1);
        println!(
            "filter {}: order {}, {} multiplications and {} additions per step",
            path.display(),
            filter.order(),
            f_ops.multiplications,
            f_ops.additions
        );
        for mode in [Mode::Partial, Mode::Full] {
            let depth = encfir::depth_audit(&filter, mode, HeParams::default())
                .map_err(|e| schema_err(anyhow::Error::new(e)))?;
            println!("  multiplicative depth audit ({mode:?} mode): {depth}");
        }
    }

    if let Some(model) = &args.model {
        let (sys, _) = load_model(model)?;
        let profile = match &args.profile {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| schema_err(anyhow!("reading profile: {e}")))?;
                ScalingProfile::from_json(&text)
                    .map_err(|e| schema_err(anyhow::Error::new(e)))?
            }
            None => ScalingProfile::uniform(100.0, 1 << 32)
                .expect("default profile is valid"),
        };
        match quant::to_integer_controller(&sys, &profile) {
            Ok(ctrl) => match quant::overflow_horizon(&ctrl, y_max) {
                Horizon::Unbounded => println!(
                    "overflow horizon: unbounded (s1 = {} with nilpotent integer dynamics)",
                    profile.s(1)
                ),
                Horizon::Steps(t) => println!(
                    "overflow horizon: {t} steps for |y| <= {} at s = {}, q = {}",
                    y_max,
                    profile.s(1),
                    profile.q()
                ),
            },
            Err(e) => println!("integer reformulation fails at construction: {e}"),
        }
    }

    if args.dims.is_none() && args.filter.is_none() && args.model.is_none() {
        return Err(schema_err(anyhow!(
            "nothing to analyze: pass --dims, --filter and/or --model"
        )));
    }
    Ok(())
}
