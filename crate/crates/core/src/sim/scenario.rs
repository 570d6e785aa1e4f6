//! JSON scenario schema. A scenario file fully describes one closed-loop
//! experiment: the plant (built-in or inline model), the controller kind
//! and its data, step count, transport and seed.
//!
//! ```json
//! {
//!   "plant": { "builtin": "reactor" },
//!   "controller": { "kind": "fir", "taps": { "builtin": "window-n7" } },
//!   "steps": 300,
//!   "transport": "inproc",
//!   "seed": 7
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::{BackendKind, ControllerSpec, Scenario, SimError, TransportSpec};
use crate::benchmark::{self, TapSet};
use crate::encfir::{EncFirConfig, Mode};
use crate::fir::FirFilter;
use crate::he::{HeParams, HeParamsFile};
use crate::lti::StateSpaceFile;

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub plant: PlantSpecFile,
    pub controller: ControllerSpecFile,
    pub steps: usize,
    #[serde(default)]
    pub transport: TransportSpecFile,
    #[serde(default)]
    pub seed: u64,
    /// Optional plant initial-state override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpecFile {
    Builtin { builtin: String },
    Inline { inline: StateSpaceFile },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TapsSpecFile {
    Builtin { builtin: String },
    File { file: String },
    Inline { order: usize, taps: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerSpecFile {
    Iir {
        model: StateSpaceFile,
    },
    Reset {
        model: StateSpaceFile,
        period: u64,
    },
    Fir {
        taps: TapsSpecFile,
    },
    EncryptedFir {
        taps: TapsSpecFile,
        mode: String,
        s6: f64,
        s7: f64,
        y_max: f64,
        #[serde(default = "default_backend")]
        backend: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        he: Option<HeParamsFile>,
    },
}

fn default_backend() -> String {
    "real".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransportSpecFile {
    #[default]
    #[serde(skip)]
    InprocDefault,
    Named(String),
    Socket {
        socket: String,
    },
}

fn resolve_taps(spec: &TapsSpecFile) -> Result<FirFilter, SimError> {
    match spec {
        TapsSpecFile::Builtin { builtin } => {
            let set = TapSet::ALL
                .into_iter()
                .find(|s| s.name() == builtin)
                .ok_or_else(|| SimError::BadScenario(format!("unknown builtin taps {builtin}")))?;
            Ok(benchmark::taps(set))
        }
        TapsSpecFile::File { file } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| SimError::BadScenario(format!("reading filter {file}: {e}")))?;
            FirFilter::from_json(&text).map_err(|e| SimError::BadScenario(e.to_string()))
        }
        TapsSpecFile::Inline { order, taps } => {
            if taps.len() != order + 1 {
                return Err(SimError::BadScenario(format!(
                    "order {order} does not match {} taps",
                    taps.len()
                )));
            }
            let mats = taps
                .iter()
                .map(|rows| crate::lti::Matrix::from_rows(rows))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SimError::BadScenario(e.to_string()))?;
            FirFilter::new(mats).map_err(|e| SimError::BadScenario(e.to_string()))
        }
    }
}

impl ScenarioFile {
    pub fn from_json(json: &str) -> Result<ScenarioFile, SimError> {
        serde_json::from_str(json).map_err(|e| SimError::BadScenario(format!("bad JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn into_scenario(self) -> Result<Scenario, SimError> {
        let mut plant = match self.plant {
            PlantSpecFile::Builtin { ref builtin } if builtin == "reactor" => {
                benchmark::reactor_plant()
            }
            PlantSpecFile::Builtin { ref builtin } => {
                return Err(SimError::BadScenario(format!("unknown builtin plant {builtin}")))
            }
            PlantSpecFile::Inline { inline } => {
                inline.into_system().map_err(|e| SimError::BadScenario(e.to_string()))?.0
            }
        };
        if let Some(x0) = self.x0 {
            plant = plant.with_x0(x0).map_err(|e| SimError::BadScenario(e.to_string()))?;
        }
        let controller = match self.controller {
            ControllerSpecFile::Iir { model } => ControllerSpec::Iir(
                model.into_system().map_err(|e| SimError::BadScenario(e.to_string()))?.0,
            ),
            ControllerSpecFile::Reset { model, period } => ControllerSpec::Reset {
                sys: model.into_system().map_err(|e| SimError::BadScenario(e.to_string()))?.0,
                period,
            },
            ControllerSpecFile::Fir { taps } => ControllerSpec::Fir(resolve_taps(&taps)?),
            ControllerSpecFile::EncryptedFir { taps, mode, s6, s7, y_max, backend, he } => {
                let mode = match mode.as_str() {
                    "partial" => Mode::Partial,
                    "full" => Mode::Full,
                    other => {
                        return Err(SimError::BadScenario(format!("unknown mode {other}")))
                    }
                };
                let backend = match backend.as_str() {
                    "real" => BackendKind::Real,
                    "mock" => BackendKind::Mock,
                    other => {
                        return Err(SimError::BadScenario(format!("unknown backend {other}")))
                    }
                };
                let he = match he {
                    Some(f) => {
                        f.into_params().map_err(|e| SimError::BadScenario(e.to_string()))?
                    }
                    None => match mode {
                        Mode::Partial => HeParams::partial_profile(),
                        Mode::Full => HeParams::default(),
                    },
                };
                ControllerSpec::EncryptedFir {
                    filter: resolve_taps(&taps)?,
                    cfg: EncFirConfig { mode, s6, s7, y_max },
                    he,
                    backend,
                }
            }
        };
        let transport = match self.transport {
            TransportSpecFile::InprocDefault => TransportSpec::Inproc,
            TransportSpecFile::Named(name) if name == "inproc" => TransportSpec::Inproc,
            TransportSpecFile::Named(name) => {
                return Err(SimError::BadScenario(format!("unknown transport {name}")))
            }
            TransportSpecFile::Socket { socket } => TransportSpec::Socket(socket),
        };
        Ok(Scenario { plant, controller, steps: self.steps, transport, seed: self.seed })
    }
}
