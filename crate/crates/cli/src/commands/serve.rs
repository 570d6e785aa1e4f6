use std::io::Read;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use firctl_core::he::{self, HeParamsFile};
use firctl_core::sim::proto::{MsgType, WireMessage};
use firctl_core::sim::roles;

use super::{fail, schema_err, CliResult, EXIT_TRANSPORT};

#[derive(Args)]
pub struct ServeArgs {
    /// Listen address, e.g. 127.0.0.1:7001 (port 0 picks one).
    #[arg(long, default_value = "127.0.0.1:7001")]
    pub listen: String,
    /// Stop after this many seconds (0 = run until killed).
    #[arg(long, default_value_t = 0)]
    pub max_seconds: u64,
}

pub fn run_serve(args: ServeArgs) -> CliResult {
    let handle = roles::serve_cloud(&args.listen).map_err(super::classify_sim_error)?;
    println!("cloud serving on {}", handle.addr);
    println!("(evaluation keys only; this process cannot decrypt session data)");
    if args.max_seconds > 0 {
        std::thread::sleep(std::time::Duration::from_secs(args.max_seconds));
        handle.stop();
        println!("served for {} seconds, shutting down", args.max_seconds);
    } else {
        loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct ActuatorArgs {
    /// Listen address for the plant-side decrypt relay.
    #[arg(long, default_value = "127.0.0.1:7002")]
    pub listen: String,
    /// Actuator key file (holds the secret key; see `firctl keygen`).
    #[arg(long)]
    pub keys: PathBuf,
    /// Scaling divisor applied to decrypted integers (s6 * s7).
    #[arg(long)]
    pub scale: f64,
    /// Stop after serving this many connections (0 = unlimited).
    #[arg(long, default_value_t = 0)]
    pub max_connections: u64,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct ActuatorKeyFile {
    pub note: String,
    pub params: HeParamsFile,
    pub secret_key: he::SecretKey,
}

/// Standalone actuator: receives CONTROL_ACTION frames of ciphertexts and
/// answers CONTROL_ACTION frames of recovered little-endian f64 values.
/// Runs on the trusted plant side; this is the only networked process that
/// holds the secret key.
pub fn run_actuator(args: ActuatorArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.keys)
        .with_context(|| format!("reading {}", args.keys.display()))
        .map_err(schema_err)?;
    let keys: ActuatorKeyFile = serde_json::from_str(&text)
        .context("parsing actuator key file")
        .map_err(schema_err)?;
    let params = keys.params.into_params().map_err(|e| schema_err(anyhow::Error::new(e)))?;
    let sk = keys.secret_key;
    let listener = std::net::TcpListener::bind(&args.listen)
        .with_context(|| format!("binding {}", args.listen))
        .map_err(|e| fail(EXIT_TRANSPORT, e))?;
    println!("actuator serving on {}", listener.local_addr().unwrap());
    let mut served = 0u64;
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(_) => continue,
        };
        let mut reader = std::io::BufReader::new(stream.try_clone().map_err(|e| {
            fail(EXIT_TRANSPORT, anyhow!("cloning stream: {e}"))
        })?);
        let mut writer = std::io::BufWriter::new(stream);
        while let Ok(msg) = WireMessage::read_from(&mut reader) {
            match msg.msg_type {
                MsgType::ControlAction => {
                    let mut u_bytes = Vec::new();
                    let mut off = 0usize;
                    while off < msg.payload.len() {
                        let (ct, used) =
                            match he::wire::decode_ciphertext(&msg.payload[off..], &params) {
                                Ok(x) => x,
                                Err(e) => {
                                    eprintln!("dropping connection: bad ciphertext: {e}");
                                    break;
                                }
                            };
                        off += used;
                        match he::decrypt(&params, &sk, &ct) {
                            Ok(pt) => {
                                let u = pt.decode(1)[0] as f64 / args.scale;
                                u_bytes.extend_from_slice(&u.to_le_bytes());
                            }
                            Err(e) => {
                                eprintln!("decryption failure: {e}");
                                u_bytes.extend_from_slice(&f64::NAN.to_le_bytes());
                            }
                        }
                    }
                    let reply = WireMessage::new(MsgType::ControlAction, u_bytes);
                    if reply.write_to(&mut writer).is_err() {
                        break;
                    }
                }
                MsgType::Bye => break,
                other => {
                    eprintln!("unexpected {other:?} frame; closing");
                    break;
                }
            }
        }
        served += 1;
        if args.max_connections > 0 && served >= args.max_connections {
            break;
        }
    }
    Ok(())
}

// keep Read imported for BufReader bounds on older rustc editions
#[allow(unused)]
fn _assert_read<T: Read>() {}
