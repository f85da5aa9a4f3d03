//! Versioned observed-data fixtures in TOML.
//!
//! ```toml
//! version = 1
//! example = "ma1"
//! kind = "observed_summaries"
//! values = [0.013, 0.006]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// A full observed summary vector.
    ObservedSummaries,
    /// One raw observation that replaces a simulated draw.
    ContaminatedDraw,
    /// A single reference statistic, for checks only.
    ObservedStatistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub version: u32,
    pub example: String,
    pub kind: FixtureKind,
    pub values: Vec<f64>,
}

impl Fixture {
    pub fn parse(text: &str) -> Result<Self> {
        let f: Fixture =
            toml::from_str(text).map_err(|e| Error::Parse(format!("fixture: {}", e.message())))?;
        if f.version != FIXTURE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported fixture version {}",
                f.version
            )));
        }
        if f.example.trim().is_empty() {
            return Err(Error::Parse("fixture example name is empty".into()));
        }
        if f.values.is_empty() || f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(
                "fixture values must be a non-empty list of finite numbers".into(),
            ));
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fixture serializes")
    }

    pub fn builtin_ma1() -> Self {
        Self::parse(include_str!("../../fixtures/ma1_observed.toml")).expect("shipped fixture")
    }

    pub fn builtin_slcp() -> Self {
        Self::parse(include_str!("../../fixtures/slcp_contaminated_draw.toml"))
            .expect("shipped fixture")
    }

    pub fn builtin_sir() -> Self {
        Self::parse(include_str!(
            "../../fixtures/sir_observed_autocorrelation.toml"
        ))
        .expect("shipped fixture")
    }
}
