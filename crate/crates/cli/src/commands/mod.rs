pub mod analyze;
pub mod bench;
pub mod design;
pub mod keygen;
pub mod reproduce;
pub mod run;
pub mod serve;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use firctl_core::fir::FirError;
use firctl_core::lti::{StateSpace, StateSpaceFile};
use firctl_core::sim::SimError;

/// Error plus the process exit code it maps to.
pub struct CliError {
    pub error: anyhow::Error,
    pub code: i32,
}

pub type CliResult = std::result::Result<(), CliError>;

pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_OVERFLOW: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;
pub const EXIT_SCHEMA: i32 = 5;

pub fn fail(code: i32, error: anyhow::Error) -> CliError {
    CliError { error, code }
}

pub fn schema_err(error: anyhow::Error) -> CliError {
    fail(EXIT_SCHEMA, error)
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError { error, code: 1 }
    }
}

/// Map core errors onto the documented exit codes.
pub fn classify_sim_error(e: SimError) -> CliError {
    let code = match &e {
        SimError::Transport { .. } | SimError::Halted(_) | SimError::Handshake(_) => {
            EXIT_TRANSPORT
        }
        SimError::BadScenario(_) => EXIT_SCHEMA,
        _ => 1,
    };
    fail(code, anyhow::Error::new(e))
}

pub fn classify_fir_error(e: FirError) -> CliError {
    let code = match &e {
        FirError::Infeasible { .. } | FirError::NoFeasibleGamma(_) => EXIT_INFEASIBLE,
        FirError::BadFile(_) => EXIT_SCHEMA,
        _ => 1,
    };
    fail(code, anyhow::Error::new(e))
}

/// Load a state-space model file ("a","b","c","d","x0","dt").
pub fn load_model(path: &Path) -> Result<(StateSpace, f64), CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))
        .map_err(schema_err)?;
    let file: StateSpaceFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing model {}", path.display()))
        .map_err(schema_err)?;
    file.into_system()
        .with_context(|| format!("validating model {}", path.display()))
        .map_err(schema_err)
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))
                .map_err(CliError::from)?;
        }
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::from)
}

/// Default config file: the `FIRCTL_CONFIG` environment variable, when set,
/// names a JSON file with default scaling/parameter choices.
pub fn default_config_path() -> Option<PathBuf> {
    std::env::var_os("FIRCTL_CONFIG").map(PathBuf::from)
}

#[derive(Debug, serde::Serialize, serde::Deserialize, Default)]
pub struct DefaultsFile {
    #[serde(default)]
    pub s6: Option<f64>,
    #[serde(default)]
    pub s7: Option<f64>,
    #[serde(default)]
    pub y_max: Option<f64>,
}

pub fn load_defaults() -> DefaultsFile {
    default_config_path()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str(&text).ok())
        .unwrap_or_default()
}
