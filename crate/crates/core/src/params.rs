//! Physical parameters of a detection protocol.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Single photon-number-resolving detector, no interference.
    Direct,
    /// Extended HOM with a phase-locked coherent field.
    CoherentHom,
    /// Extended HOM averaged over the relative phase.
    IncoherentHom,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Direct, Protocol::CoherentHom, Protocol::IncoherentHom];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Direct => "direct",
            Protocol::CoherentHom => "coherent-hom",
            Protocol::IncoherentHom => "incoherent-hom",
        }
    }

    pub fn is_hom(self) -> bool {
        !matches!(self, Protocol::Direct)
    }

    /// Number of detectors read out per measurement.
    pub fn detectors(self) -> usize {
        if self.is_hom() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Protocol::Direct),
            "coherent-hom" | "coherent" => Ok(Protocol::CoherentHom),
            "incoherent-hom" | "incoherent" => Ok(Protocol::IncoherentHom),
            other => Err(Error::invalid("protocol", format!("unknown protocol `{other}`"))),
        }
    }
}

/// Emitter, apparatus and noise parameters.
///
/// Mean photon numbers are per excitation cycle. `n_i` is the electronic
/// noise per detector; `n_e` is background at the emitter, before loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub protocol: Protocol,
    /// Emission probability.
    pub xi: f64,
    /// Detection efficiency.
    pub eta: f64,
    /// Mode overlap between emitter and coherent field.
    pub epsilon: f64,
    /// Mean coherent photon number.
    pub n_c: f64,
    /// Mean background photons at the emitter.
    pub n_e: f64,
    /// Mean electronic-noise counts per detector.
    pub n_i: f64,
    pub cos_theta: f64,
}

impl ProtocolParams {
    pub fn direct(xi: f64, eta: f64, n_e: f64, n_i: f64) -> Self {
        ProtocolParams {
            protocol: Protocol::Direct,
            xi,
            eta,
            epsilon: 1.0,
            n_c: 0.0,
            n_e,
            n_i,
            cos_theta: 0.0,
        }
    }

    pub fn coherent_hom(xi: f64, eta: f64, epsilon: f64, n_c: f64, n_e: f64, n_i: f64, cos_theta: f64) -> Self {
        ProtocolParams {
            protocol: Protocol::CoherentHom,
            xi,
            eta,
            epsilon,
            n_c,
            n_e,
            n_i,
            cos_theta,
        }
    }

    pub fn incoherent_hom(xi: f64, eta: f64, epsilon: f64, n_c: f64, n_e: f64, n_i: f64) -> Self {
        ProtocolParams {
            protocol: Protocol::IncoherentHom,
            xi,
            eta,
            epsilon,
            n_c,
            n_e,
            n_i,
            cos_theta: 0.0,
        }
    }

    /// Same physical setup read out with another protocol. Switching to
    /// coherent HOM keeps `cos_theta`; incoherent HOM forces it to zero.
    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        if protocol == Protocol::IncoherentHom {
            self.cos_theta = 0.0;
        }
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_n_c(mut self, n_c: f64) -> Self {
        self.n_c = n_c;
        self
    }

    /// Phase factor actually used by the statistics.
    pub fn effective_cos_theta(&self) -> f64 {
        match self.protocol {
            Protocol::CoherentHom => self.cos_theta,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("xi", self.xi)?;
        unit_interval("eta", self.eta)?;
        non_negative("ne", self.n_e)?;
        non_negative("ni", self.n_i)?;
        if self.protocol.is_hom() {
            unit_interval("epsilon", self.epsilon)?;
            non_negative("nc", self.n_c)?;
            if !(-1.0..=1.0).contains(&self.cos_theta) {
                return Err(Error::invalid("cos-theta", format!("{} is outside [-1, 1]", self.cos_theta)));
            }
            if self.protocol == Protocol::IncoherentHom && self.cos_theta != 0.0 {
                return Err(Error::invalid("cos-theta", "incoherent HOM requires cos_theta = 0"));
            }
        }
        Ok(())
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is outside [0, 1]")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} must be finite and >= 0")))
    }
}

/// Mean photon numbers seen by the detectors when no emitter is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMeans {
    /// Total detected mean photon number across all detectors.
    pub n_bar: f64,
    /// Total mean noise photon number.
    pub n_n: f64,
}

pub fn derived_means(params: &ProtocolParams) -> DerivedMeans {
    let p = params;
    match p.protocol {
        Protocol::Direct => {
            let n_n = p.eta * p.n_e + p.n_i;
            DerivedMeans { n_bar: n_n, n_n }
        }
        Protocol::CoherentHom | Protocol::IncoherentHom => {
            // mode-mismatched coherent light is shot noise
            let n_n = p.eta * (1.0 - p.epsilon) * p.n_c + p.eta * p.n_e + 2.0 * p.n_i;
            DerivedMeans {
                n_bar: p.eta * p.epsilon * p.n_c + n_n,
                n_n,
            }
        }
    }
}
