use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::importance::StateEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Learned importance (dueling double DQN) with importance-based replacement.
    D3qn,
    /// As `D3qn` without modality features in the state.
    NoModality,
    /// Plain double DQN scores; cache everything, evict the lowest score.
    Ddqn,
    /// Per-content cache/skip DQN with LRU eviction.
    CpDqn,
    /// Windowed-popularity admission with LRU eviction.
    Dpwcs,
    /// Leave copy everywhere with LRU eviction.
    Lce,
    /// Strict stack LRU.
    LruOnly,
    /// Hand-weighted importance with importance-based replacement.
    StaticWeights,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::D3qn,
        Scheme::NoModality,
        Scheme::Ddqn,
        Scheme::CpDqn,
        Scheme::Dpwcs,
        Scheme::Lce,
        Scheme::LruOnly,
        Scheme::StaticWeights,
    ];

    /// Schemes compared by a default sweep.
    pub const DEFAULT_SWEEP: [Scheme; 6] = [
        Scheme::D3qn,
        Scheme::NoModality,
        Scheme::Ddqn,
        Scheme::CpDqn,
        Scheme::Dpwcs,
        Scheme::Lce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::D3qn => "d3qn",
            Scheme::NoModality => "no-modality",
            Scheme::Ddqn => "ddqn",
            Scheme::CpDqn => "cp-dqn",
            Scheme::Dpwcs => "dpwcs",
            Scheme::Lce => "lce",
            Scheme::LruOnly => "lru",
            Scheme::StaticWeights => "static",
        }
    }

    /// Whether the scheme needs a trained network.
    pub fn is_learned(self) -> bool {
        matches!(self, Scheme::D3qn | Scheme::NoModality | Scheme::Ddqn | Scheme::CpDqn)
    }

    /// Schemes that score contents from ID-free observations.
    pub fn importance_encoding(self) -> Option<StateEncoding> {
        match self {
            Scheme::D3qn | Scheme::Ddqn => Some(StateEncoding::Full),
            Scheme::NoModality => Some(StateEncoding::NoModality),
            _ => None,
        }
    }

    pub fn dueling(self) -> bool {
        !matches!(self, Scheme::Ddqn)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let scheme = match key.as_str() {
            "d3qn" => Scheme::D3qn,
            "nomodality" => Scheme::NoModality,
            "ddqn" => Scheme::Ddqn,
            "cpdqn" => Scheme::CpDqn,
            "dpwcs" => Scheme::Dpwcs,
            "lce" | "lcelru" => Scheme::Lce,
            "lru" | "lruonly" => Scheme::LruOnly,
            "static" | "staticweights" => Scheme::StaticWeights,
            _ => return Err(Error::UnknownScheme(s.to_string())),
        };
        Ok(scheme)
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}
