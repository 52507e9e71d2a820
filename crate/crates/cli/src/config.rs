use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaChoice {
    Value(f64),
    Auto,
}

impl FromStr for KappaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<f64>()
            .map(Self::Value)
            .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

impl fmt::Display for KappaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for KappaChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Value(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Gaussian prior width
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Witness weight, or `auto` to balance the losses
    #[arg(long, global = true)]
    pub kappa: Option<KappaChoice>,
    /// Two-mode squeezing of the source
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Loss fraction on Alice's arm
    #[arg(long = "eta-a", global = true)]
    pub eta_a: Option<f64>,
    /// Loss fraction on Bob's arm
    #[arg(long = "eta-b", global = true)]
    pub eta_b: Option<f64>,
    /// Fock cutoff per mode
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Output path; stdout when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub kappa: Option<KappaChoice>,
    pub r: Option<f64>,
    pub eta_a: Option<f64>,
    pub eta_b: Option<f64>,
    pub cutoff: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub state: Option<PathBuf>,
    pub adversary: Option<bool>,
    pub box_l: Option<f64>,
    pub box_delta: Option<f64>,
    pub samples: Option<PathBuf>,
    pub r_max: Option<f64>,
    pub r_points: Option<usize>,
    pub eta_points: Option<usize>,
    pub sigma_list: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub instances: Option<usize>,
    pub energy_scale: Option<f64>,
    pub tomography: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }
}

/// Flag, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn require(cond: bool, msg: impl Into<String>) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}
