use std::path::PathBuf;

use clap::Args;
use firctl_core::he::{self, HeParams, HeParamsFile};
use serde::Serialize;

use super::{schema_err, write_output, CliResult};

pub const TOY_MARKER: &str =
    "TOY PARAMETERS — chosen for measurability, NOT for security. Do not protect real data \
     with these keys.";

#[derive(Args)]
pub struct KeygenArgs {
    /// Parameter file (JSON); defaults to the built-in full-mode profile.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Generation seed; the same seed reproduces identical key files.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory for the role-scoped key files.
    #[arg(long, default_value = "keys")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct SensorKeyFile<'a> {
    note: &'a str,
    params: HeParamsFile,
    public_key: &'a he::PublicKey,
}

#[derive(Serialize)]
struct CloudKeyFile<'a> {
    note: &'a str,
    params: HeParamsFile,
    relin_key: &'a he::RelinKey,
}

#[derive(Serialize)]
struct ActuatorKeyFileOut<'a> {
    note: &'a str,
    params: HeParamsFile,
    secret_key: &'a he::SecretKey,
}

pub fn run(args: KeygenArgs) -> CliResult {
    let params = match &args.params {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| schema_err(anyhow::anyhow!("reading params: {e}")))?;
            let file: HeParamsFile = serde_json::from_str(&text)
                .map_err(|e| schema_err(anyhow::anyhow!("parsing params: {e}")))?;
            file.into_params().map_err(|e| schema_err(anyhow::Error::new(e)))?
        }
        None => HeParams::default(),
    };
    let keys = he::keygen(&params, args.seed);
    let pf = HeParamsFile::from_params(&params);

    let sensor = serde_json::to_string_pretty(&SensorKeyFile {
        note: TOY_MARKER,
        params: pf.clone(),
        public_key: &keys.pk,
    })
    .expect("serializes");
    let cloud = serde_json::to_string_pretty(&CloudKeyFile {
        note: TOY_MARKER,
        params: pf.clone(),
        relin_key: &keys.rlk,
    })
    .expect("serializes");
    let actuator = serde_json::to_string_pretty(&ActuatorKeyFileOut {
        note: TOY_MARKER,
        params: pf.clone(),
        secret_key: &keys.sk,
    })
    .expect("serializes");

    write_output(&args.out_dir.join("sensor.json"), &sensor)?;
    write_output(&args.out_dir.join("cloud.json"), &cloud)?;
    write_output(&args.out_dir.join("actuator.json"), &actuator)?;
    write_output(
        &args.out_dir.join("params.json"),
        &serde_json::to_string_pretty(&pf).expect("serializes"),
    )?;
    println!(
        "wrote sensor.json (public key), cloud.json (relinearization key), actuator.json \
         (secret key) and params.json under {}",
        args.out_dir.display()
    );
    println!("{TOY_MARKER}");
    Ok(())
}
