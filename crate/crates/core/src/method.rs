use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Prompting method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Zero-shot chain of thought with the short phrase as instruction.
    #[serde(rename = "zcot")]
    ZCoT,
    /// Strategic chain of thought: strategy then deduction in one call.
    #[serde(rename = "scot")]
    SCoT,
    /// Instruction induced from bare questions.
    #[serde(rename = "induct")]
    InductBaseline,
    /// Instruction induced from per-question strategies.
    StrategyInduct,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ZCoT, Method::SCoT, Method::InductBaseline, Method::StrategyInduct];

    /// Task-level methods induce one instruction per task before inference.
    pub fn is_task_level(self) -> bool {
        matches!(self, Method::InductBaseline | Method::StrategyInduct)
    }

    /// Identifier used in file names and configs.
    pub fn id(self) -> &'static str {
        match self {
            Method::ZCoT => "zcot",
            Method::SCoT => "scot",
            Method::InductBaseline => "induct",
            Method::StrategyInduct => "strategy_induct",
        }
    }

    /// Column label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::ZCoT => "ZCoT",
            Method::SCoT => "SCoT",
            Method::InductBaseline => "INDUCT",
            Method::StrategyInduct => "StrategyInduct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method `{0}`")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    /// Accepts ids, labels, and `Ours` for the strategy-induced method.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "zcot" => Ok(Method::ZCoT),
            "scot" => Ok(Method::SCoT),
            "induct" | "induct_baseline" => Ok(Method::InductBaseline),
            "strategy_induct" | "strategyinduct" | "ours" => Ok(Method::StrategyInduct),
            _ => Err(UnknownMethod(s.to_string())),
        }
    }
}
