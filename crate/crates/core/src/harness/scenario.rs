use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    NoBlockage,
    /// Blockage is detected but the users stay on the attenuated LOS link.
    BlockedKeepLos,
    /// Blockage is detected and both users move to their NLOS channels.
    BlockedSwitchNlos,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::NoBlockage => "none",
            ScenarioKind::BlockedKeepLos => "keep_los",
            ScenarioKind::BlockedSwitchNlos => "switch_nlos",
        }
    }
}

/// One blockage scenario: `none`, `keep_los:<dB>` or `switch_nlos:<dB>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub blockage_db: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, blockage_db: f64) -> Result<Self> {
        let s = ScenarioSpec { kind, blockage_db };
        s.validate()?;
        Ok(s)
    }

    pub fn none() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::NoBlockage,
            blockage_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blockage_db >= 0.0 && self.blockage_db.is_finite()) {
            return Err(Error::config(format!(
                "scenario blockage {} dB must be finite and non-negative",
                self.blockage_db
            )));
        }
        match self.kind {
            ScenarioKind::NoBlockage if self.blockage_db != 0.0 => {
                Err(Error::config("scenario 'none' cannot carry a blockage loss"))
            }
            ScenarioKind::BlockedKeepLos | ScenarioKind::BlockedSwitchNlos if self.blockage_db == 0.0 => {
                Err(Error::config(format!(
                    "scenario '{}' needs a positive blockage loss",
                    self.kind.name()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Stable label, e.g. `keep_los_20db`.
    pub fn label(&self) -> String {
        match self.kind {
            ScenarioKind::NoBlockage => "none".into(),
            k => format!("{}_{}db", k.name(), fmt_db(self.blockage_db)),
        }
    }

    pub fn default_set() -> Vec<ScenarioSpec> {
        ["none", "keep_los:20", "keep_los:30", "switch_nlos:20"]
            .iter()
            .map(|s| s.parse().expect("valid"))
            .collect()
    }

    /// Comma-separated list.
    pub fn parse_list(text: &str) -> Result<Vec<ScenarioSpec>> {
        let v: Vec<ScenarioSpec> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(Error::config("empty scenario list"));
        }
        Ok(v)
    }
}

fn fmt_db(db: f64) -> String {
    if db.fract() == 0.0 {
        format!("{db:.0}")
    } else {
        format!("{db}")
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScenarioKind::NoBlockage => f.write_str("none"),
            k => write!(f, "{}:{}", k.name(), fmt_db(self.blockage_db)),
        }
    }
}

impl FromStr for ScenarioSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, db) = match s.split_once(':') {
            Some((k, d)) => (k.trim(), Some(d.trim())),
            None => (s.trim(), None),
        };
        let kind = match kind {
            "none" => ScenarioKind::NoBlockage,
            "keep_los" => ScenarioKind::BlockedKeepLos,
            "switch_nlos" => ScenarioKind::BlockedSwitchNlos,
            other => {
                return Err(Error::config(format!(
                    "unknown scenario '{other}' (expected none, keep_los:<dB> or switch_nlos:<dB>)"
                )))
            }
        };
        let blockage_db = match db {
            Some(d) => d
                .trim_end_matches("db")
                .parse::<f64>()
                .map_err(|_| Error::config(format!("scenario '{s}': bad blockage value '{d}'")))?,
            None => 0.0,
        };
        ScenarioSpec::new(kind, blockage_db)
    }
}
