//! Outage-probability analysis and throughput optimization for a fluid-antenna
//! receiver reached through a reconfigurable intelligent surface.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`] – Bessel, error, Marcum-Q, Lambert-W and half-order Laguerre functions.
//! * [`quadrature`] – Gauss–Legendre / Gauss–Laguerre rules.
//! * [`channel`] – system configuration, Jakes port correlation, channel sampling.
//! * [`blockapprox`] – block-diagonal approximation of the port correlation matrix.
//! * [`outage`] – analytic outage probabilities (block-correlation, independent-antenna
//!   and constant-correlation models) for the CSI-based and CSI-free schemes.
//! * [`montecarlo`] – simulation oracle for outage, throughput and envelope PDFs.
//! * [`optimize`] – rate selection maximizing throughput.

pub mod blockapprox;
pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod optimize;
pub mod outage;
pub mod quadrature;
pub mod specfun;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How the RIS phases are configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Phases co-phase every cascaded path (full CSI at the BS).
    CsiBased,
    /// Phases drawn uniformly at random in every coherence interval.
    CsiFree,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::CsiBased => "csi-based",
            Scheme::CsiFree => "csi-free",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csi-based" => Ok(Scheme::CsiBased),
            "csi-free" => Ok(Scheme::CsiFree),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}'"))),
        }
    }
}
