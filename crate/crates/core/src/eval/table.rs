//! Published result tables as CSV fixtures, and their replay.

use serde::Deserialize;

use super::{win_tie_lose, EvalError, SettingResult, WTLRecord};
use crate::Method;

/// The five small models singled out in the main comparison.
pub const SMALL_MODELS: [&str; 5] = [
    "Llama 3.1 8B",
    "Mistral Nemo 12B",
    "Gemini 1.5 Flash 8B",
    "Gemini 2.0 Flash Lite",
    "GPT-4o mini",
];

#[derive(Deserialize)]
struct Table1Row {
    model: String,
    dataset: String,
    method: String,
    accuracy: String,
}

/// Parses `model,dataset,method,accuracy` rows, accuracy in percent.
pub fn parse_table1(text: &str) -> Result<Vec<SettingResult>, EvalError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize::<Table1Row>() {
        let row = row.map_err(|e| EvalError::Fixture(e.to_string()))?;
        let method: Method = row.method.parse().map_err(|e: crate::UnknownMethod| EvalError::Fixture(e.to_string()))?;
        out.push(SettingResult::from_percent(&row.model, &row.dataset, method, &row.accuracy)?);
    }
    Ok(out)
}

pub fn builtin_table1() -> Vec<SettingResult> {
    parse_table1(include_str!("../../fixtures/table1.csv")).expect("bundled table parses")
}

/// One row of an N-ablation table.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub n: u32,
    /// Percentage, two decimals.
    pub accuracy: String,
}

pub fn parse_table2(text: &str) -> Result<Vec<AblationRow>, EvalError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<AblationRow>()
        .map(|r| r.map_err(|e| EvalError::Fixture(e.to_string())))
        .collect()
}

pub fn builtin_table2() -> Vec<AblationRow> {
    parse_table2(include_str!("../../fixtures/table2.csv")).expect("bundled table parses")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayLine {
    pub label: String,
    pub record: WTLRecord,
}

impl std::fmt::Display for ReplayLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.label, self.record)
    }
}

fn of_method(results: &[SettingResult], method: Method, models: Option<&[&str]>) -> Vec<SettingResult> {
    results
        .iter()
        .filter(|r| r.method == method && models.is_none_or(|m| m.contains(&r.model.as_str())))
        .cloned()
        .collect()
}

/// Win-tie-lose records of the strategy-induced method against each
/// baseline over every setting, plus against INDUCT on the small models.
pub fn replay_table1(results: &[SettingResult]) -> Result<Vec<ReplayLine>, EvalError> {
    let ours = of_method(results, Method::StrategyInduct, None);
    let mut lines = Vec::new();
    for baseline in [Method::ZCoT, Method::SCoT, Method::InductBaseline] {
        lines.push(ReplayLine {
            label: format!("vs {}", baseline.label()),
            record: win_tie_lose(&ours, &of_method(results, baseline, None))?,
        });
    }
    let small = &SMALL_MODELS[..];
    lines.push(ReplayLine {
        label: "small models vs INDUCT".into(),
        record: win_tie_lose(
            &of_method(results, Method::StrategyInduct, Some(small)),
            &of_method(results, Method::InductBaseline, Some(small)),
        )?,
    });
    Ok(lines)
}
