//! Population strata: the national reference and its state, county and race
//! subdivisions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::claims::{CohortPatient, RaceEthnicity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StratumLevel {
    National,
    State,
    County,
    Race,
}

impl StratumLevel {
    pub fn name(self) -> &'static str {
        match self {
            StratumLevel::National => "national",
            StratumLevel::State => "state",
            StratumLevel::County => "county",
            StratumLevel::Race => "race",
        }
    }
}

impl fmt::Display for StratumLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StratumLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "national" => Ok(StratumLevel::National),
            "state" => Ok(StratumLevel::State),
            "county" => Ok(StratumLevel::County),
            "race" | "ethnicity" => Ok(StratumLevel::Race),
            _ => Err(format!(
                "unknown stratification level `{s}` (expected national, state, county or race)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StratumId {
    National,
    State(String),
    County(String),
    Race(RaceEthnicity),
}

impl StratumId {
    /// The stratum at `level` that `patient` belongs to.
    pub fn of(level: StratumLevel, patient: &CohortPatient) -> StratumId {
        match level {
            StratumLevel::National => StratumId::National,
            StratumLevel::State => StratumId::State(patient.state.clone()),
            StratumLevel::County => StratumId::County(patient.county_fips.clone()),
            StratumLevel::Race => StratumId::Race(patient.race()),
        }
    }

    pub fn level(&self) -> StratumLevel {
        match self {
            StratumId::National => StratumLevel::National,
            StratumId::State(_) => StratumLevel::State,
            StratumId::County(_) => StratumLevel::County,
            StratumId::Race(_) => StratumLevel::Race,
        }
    }

    pub fn contains(&self, patient: &CohortPatient) -> bool {
        match self {
            StratumId::National => true,
            StratumId::State(s) => &patient.state == s,
            StratumId::County(c) => &patient.county_fips == c,
            StratumId::Race(r) => patient.race() == *r,
        }
    }

    /// The bare key used in exported files: `national`, a state
    /// abbreviation, a county FIPS code, or a race/ethnicity name.
    pub fn key(&self) -> &str {
        match self {
            StratumId::National => "national",
            StratumId::State(s) | StratumId::County(s) => s,
            StratumId::Race(r) => r.name(),
        }
    }
}

impl fmt::Display for StratumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StratumId::National => f.write_str("national"),
            other => write!(f, "{}:{}", other.level(), other.key()),
        }
    }
}
