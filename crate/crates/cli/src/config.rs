use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use homdetect::montecarlo::Truth;
use homdetect::params::{Protocol, ProtocolParams};
use homdetect::photon_stats::DEFAULT_TAIL_TOL;
use homdetect::sweep::{SweepSpec, TWO_SIGMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Detector threshold; `inf` means photon-number resolving without limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SaturationRepr", into = "SaturationRepr")]
pub struct Saturation(pub Option<usize>);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SaturationRepr {
    Count(usize),
    Word(String),
}

impl FromStr for Saturation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "inf" {
            return Ok(Saturation(None));
        }
        match s.parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Saturation(Some(t))),
            _ => Err(format!("expected a positive integer or `inf`, got `{s}`")),
        }
    }
}

impl fmt::Display for Saturation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("inf"),
        }
    }
}

impl TryFrom<SaturationRepr> for Saturation {
    type Error = String;

    fn try_from(repr: SaturationRepr) -> Result<Self, String> {
        match repr {
            SaturationRepr::Count(t) => t.to_string().parse(),
            SaturationRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Saturation> for SaturationRepr {
    fn from(s: Saturation) -> Self {
        match s.0 {
            Some(t) => SaturationRepr::Count(t),
            None => SaturationRepr::Word("inf".into()),
        }
    }
}

/// Every option of every subcommand. A JSON config uses the flag names as
/// keys; flags given on the command line take precedence.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// JSON document supplying any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// direct, coherent-hom or incoherent-hom [default: coherent-hom]
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Emission probability [default: 0.1]
    #[arg(long)]
    pub xi: Option<f64>,
    /// Detection efficiency [default: 0.8]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Mode overlap with the coherent field [default: 0.9]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Mean coherent photon number [default: 1]
    #[arg(long)]
    pub nc: Option<f64>,
    /// Mean background photons at the emitter [default: 0.8]
    #[arg(long)]
    pub ne: Option<f64>,
    /// Mean electronic noise counts per detector [default: 0.8]
    #[arg(long)]
    pub ni: Option<f64>,
    /// Interference phase factor [default: 1 for coherent HOM, else 0]
    #[arg(long, allow_hyphen_values = true)]
    pub cos_theta: Option<f64>,
    /// Detector saturation threshold or `inf` [default: inf]
    #[arg(long)]
    pub saturation: Option<Saturation>,
    /// Probability mass allowed outside the enumerated table [default: 1e-12]
    #[arg(long)]
    pub tail_tol: Option<f64>,
    /// Emit p(xi) - p(0) instead of p(xi).
    #[arg(long)]
    #[serde(default)]
    pub diff: bool,

    /// Measurements per trajectory [default: 50]
    #[arg(long)]
    pub n_measurements: Option<usize>,
    /// Number of trajectories [default: 100000]
    #[arg(long)]
    pub n_trajectories: Option<usize>,
    /// Seed of the random streams [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated hypothesis: present or absent [default: present]
    #[arg(long)]
    pub truth: Option<Truth>,

    /// Target total confidence [default: 0.954]
    #[arg(long)]
    pub c_target: Option<f64>,
    /// Minimize N over the coherent photon number.
    #[arg(long)]
    #[serde(default)]
    pub optimize_nc: bool,

    /// Named sweep recipe.
    #[arg(long)]
    pub preset: Option<String>,
    /// Full sweep specification; config file only.
    #[arg(skip)]
    pub sweep: Option<SweepSpec>,

    /// Fock dimension per mode for the oracle [default: 40]
    #[arg(long)]
    pub fock_dim: Option<usize>,

    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

macro_rules! prefer_flags {
    ($flags:ident, $file:ident; $($field:ident),*) => {
        RunConfig {
            config: $flags.config,
            diff: $flags.diff || $file.diff,
            optimize_nc: $flags.optimize_nc || $file.optimize_nc,
            $($field: $flags.$field.or($file.$field),)*
        }
    };
}

impl RunConfig {
    pub fn load(self) -> anyhow::Result<RunConfig> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_config(&path)?;
        Ok(self.merge(file))
    }

    fn merge(self, file: RunConfig) -> RunConfig {
        let flags = self;
        prefer_flags!(flags, file; protocol, xi, eta, epsilon, nc, ne, ni, cos_theta, saturation, tail_tol,
            n_measurements, n_trajectories, seed, truth, c_target, preset, sweep, fock_dim, out, format)
    }

    pub fn params(&self) -> ProtocolParams {
        let protocol = self.protocol.unwrap_or(Protocol::CoherentHom);
        let xi = self.xi.unwrap_or(0.1);
        let eta = self.eta.unwrap_or(0.8);
        let n_e = self.ne.unwrap_or(0.8);
        let n_i = self.ni.unwrap_or(0.8);
        match protocol {
            Protocol::Direct => ProtocolParams::direct(xi, eta, n_e, n_i),
            _ => ProtocolParams {
                protocol,
                xi,
                eta,
                epsilon: self.epsilon.unwrap_or(0.9),
                n_c: self.nc.unwrap_or(1.0),
                n_e,
                n_i,
                cos_theta: self
                    .cos_theta
                    .unwrap_or(if protocol == Protocol::CoherentHom { 1.0 } else { 0.0 }),
            },
        }
    }

    pub fn saturation(&self) -> Option<usize> {
        self.saturation.and_then(|s| s.0)
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol.unwrap_or(DEFAULT_TAIL_TOL)
    }

    pub fn c_target(&self) -> f64 {
        self.c_target.unwrap_or(TWO_SIGMA)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}

fn read_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_parsing() {
        assert_eq!("inf".parse::<Saturation>().unwrap(), Saturation(None));
        assert_eq!("2".parse::<Saturation>().unwrap(), Saturation(Some(2)));
        assert!("0".parse::<Saturation>().is_err());
        assert!("two".parse::<Saturation>().is_err());
        let s: Saturation = serde_json::from_str("4").unwrap();
        assert_eq!(s, Saturation(Some(4)));
        let s: Saturation = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(s, Saturation(None));
    }

    #[test]
    fn flags_override_file() {
        let file: RunConfig = serde_json::from_str(r#"{"xi": 0.3, "eta": 0.5, "cos-theta": -1, "diff": true}"#).unwrap();
        let flags = RunConfig {
            xi: Some(0.2),
            ..RunConfig::default()
        };
        let merged = flags.merge(file);
        assert_eq!(merged.xi, Some(0.2));
        assert_eq!(merged.eta, Some(0.5));
        assert_eq!(merged.cos_theta, Some(-1.0));
        assert!(merged.diff);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"zeta": 1}"#).is_err());
    }

    #[test]
    fn protocol_defaults() {
        let cfg = RunConfig {
            protocol: Some(Protocol::IncoherentHom),
            ..RunConfig::default()
        };
        assert_eq!(cfg.params().cos_theta, 0.0);
        let cfg = RunConfig {
            protocol: Some(Protocol::Direct),
            nc: Some(5.0),
            ..RunConfig::default()
        };
        assert_eq!(cfg.params().n_c, 0.0);
    }
}
