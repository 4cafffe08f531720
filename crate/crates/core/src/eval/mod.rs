//! Answer matching, accuracy and the cross-setting aggregates.
//!
//! Accuracies are kept as exact `correct / total` counts. Percentages are
//! rounded to two decimals only when rendered or when two settings are
//! compared for a win-tie-lose record.

mod table;

pub use table::{
    builtin_table1, builtin_table2, parse_table1, parse_table2, replay_table1, AblationRow, ReplayLine,
    SMALL_MODELS,
};

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dataset::TaskSpec;
use crate::pipeline::InferenceRecord;
use crate::Method;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("item `{0}` has no gold answer")]
    MissingGold(String),
    #[error("record refers to unknown item `{0}`")]
    UnknownItem(String),
    #[error("no records to score")]
    EmptyRecords,
    #[error("records mix {0}")]
    MixedRecords(String),
    #[error("settings are not aligned: {0}")]
    MisalignedSettings(String),
    #[error("no {method} result for model `{model}` on `{dataset}`")]
    MissingCell { model: String, dataset: String, method: Method },
    #[error("no baseline result for inference model `{0}`")]
    MissingBaseline(String),
    #[error("bad table fixture: {0}")]
    Fixture(String),
}

/// How an extracted answer is compared with the gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    /// First option token, parentheses stripped, case-folded.
    OptionLetter,
    /// Trimmed, case-folded, internal whitespace collapsed.
    ExactNormalized,
    /// Both parse as numbers and differ by at most `epsilon`.
    NumericTolerant { epsilon: f64 },
}

/// Leading option letter of `s`: `(A)`, `A`, `A)`, `a.` and `(B) text` all
/// qualify; `Answer: A` does not.
pub fn option_letter(s: &str) -> Option<char> {
    let s = s.trim();
    let s = s.strip_prefix('(').unwrap_or(s);
    let mut chars = s.chars();
    let letter = chars.next().filter(char::is_ascii_alphabetic)?;
    match chars.next() {
        None => Some(letter.to_ascii_uppercase()),
        Some(c) if c == ')' || c == '.' || c == ':' || c.is_whitespace() => Some(letter.to_ascii_uppercase()),
        _ => None,
    }
}

pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn parse_number(s: &str) -> Option<f64> {
    let cleaned: String = s.trim().chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn match_answer(extracted: Option<&str>, gold: &str, policy: MatchPolicy) -> bool {
    let Some(extracted) = extracted else {
        return false;
    };
    match policy {
        MatchPolicy::OptionLetter => match (option_letter(extracted), option_letter(gold)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        MatchPolicy::ExactNormalized => normalize_text(extracted) == normalize_text(gold),
        MatchPolicy::NumericTolerant { epsilon } => match (parse_number(extracted), parse_number(gold)) {
            (Some(a), Some(b)) => (a - b).abs() <= epsilon,
            _ => false,
        },
    }
}

fn is_bare_option(gold: &str) -> bool {
    let g = gold.trim();
    let inner = g.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(g);
    inner.len() == 1 && inner.chars().all(|c| c.is_ascii_uppercase())
}

/// The task's declared policy, else `OptionLetter` when every gold is a bare
/// option like `(A)` or `A`, else `ExactNormalized`.
pub fn resolve_policy(task: &TaskSpec) -> MatchPolicy {
    if let Some(p) = task.match_policy {
        return p;
    }
    let golds: Vec<&str> = task.items.iter().filter_map(|i| i.gold.as_deref()).collect();
    if !golds.is_empty() && golds.iter().all(|g| is_bare_option(g)) {
        MatchPolicy::OptionLetter
    } else {
        MatchPolicy::ExactNormalized
    }
}

/// Exact accuracy for one (model, dataset, method) setting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SettingResult {
    pub model: String,
    pub dataset: String,
    pub method: Method,
    pub correct: u64,
    pub total: u64,
}

impl SettingResult {
    /// From a published percentage such as `"65.33"`, held as hundredths
    /// of a percent over 10000.
    pub fn from_percent(model: &str, dataset: &str, method: Method, percent: &str) -> Result<Self, EvalError> {
        Ok(Self {
            model: model.to_string(),
            dataset: dataset.to_string(),
            method,
            correct: parse_percent_hundredths(percent)?,
            total: 10_000,
        })
    }

    pub fn accuracy(&self) -> Ratio<i128> {
        Ratio::new(self.correct as i128, self.total.max(1) as i128)
    }

    /// Percentage rounded half-up to hundredths, e.g. 16/25 -> 6400.
    pub fn percent_hundredths(&self) -> u64 {
        percent_hundredths(self.correct, self.total)
    }

    /// Two-decimal percentage string, e.g. `"64.00"`.
    pub fn percent_string(&self) -> String {
        let h = self.percent_hundredths();
        format!("{}.{:02}", h / 100, h % 100)
    }

    fn key(&self) -> (&str, &str) {
        (&self.model, &self.dataset)
    }
}

pub fn percent_hundredths(correct: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    let (c, t) = (correct as u128, total as u128);
    ((c * 20_000 + t) / (2 * t)) as u64
}

fn parse_percent_hundredths(s: &str) -> Result<u64, EvalError> {
    let bad = || EvalError::Fixture(format!("`{s}` is not a percentage with at most two decimals"));
    let s = s.trim();
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || frac.len() > 2 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let whole: u64 = whole.parse().map_err(|_| bad())?;
    let frac: u64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
    let h = whole * 100 + frac;
    if h > 10_000 {
        return Err(bad());
    }
    Ok(h)
}

/// Scores `records` against `task`, filling each record's `correct` flag.
pub fn score_records(records: &mut [InferenceRecord], task: &TaskSpec) -> Result<(), EvalError> {
    let policy = resolve_policy(task);
    for rec in records.iter_mut() {
        let item = task
            .item(&rec.item_id)
            .ok_or_else(|| EvalError::UnknownItem(rec.item_id.clone()))?;
        let gold = item.gold.as_deref().ok_or_else(|| EvalError::MissingGold(item.id.clone()))?;
        rec.correct = Some(match_answer(rec.final_answer.as_deref(), gold, policy));
    }
    Ok(())
}

/// Accuracy of one record set, which must share a method and inference
/// model. Matching is recomputed from the golds; stored verdicts are ignored.
pub fn accuracy(records: &[InferenceRecord], task: &TaskSpec) -> Result<SettingResult, EvalError> {
    let first = records.first().ok_or(EvalError::EmptyRecords)?;
    if records.iter().any(|r| r.method != first.method) {
        return Err(EvalError::MixedRecords("methods".into()));
    }
    if records.iter().any(|r| r.inference_model != first.inference_model) {
        return Err(EvalError::MixedRecords("inference models".into()));
    }
    let policy = resolve_policy(task);
    let mut correct = 0;
    for rec in records {
        let item = task
            .item(&rec.item_id)
            .ok_or_else(|| EvalError::UnknownItem(rec.item_id.clone()))?;
        let gold = item.gold.as_deref().ok_or_else(|| EvalError::MissingGold(item.id.clone()))?;
        if match_answer(rec.final_answer.as_deref(), gold, policy) {
            correct += 1;
        }
    }
    Ok(SettingResult {
        model: first.inference_model.clone(),
        dataset: task.key().to_string(),
        method: first.method,
        correct,
        total: records.len() as u64,
    })
}

/// Micro-averaged result over several settings of one model and method.
pub fn pool(results: &[SettingResult], dataset: &str) -> Result<SettingResult, EvalError> {
    let first = results.first().ok_or(EvalError::EmptyRecords)?;
    if results.iter().any(|r| r.model != first.model || r.method != first.method) {
        return Err(EvalError::MixedRecords("models or methods in pool".into()));
    }
    Ok(SettingResult {
        model: first.model.clone(),
        dataset: dataset.to_string(),
        method: first.method,
        correct: results.iter().map(|r| r.correct).sum(),
        total: results.iter().map(|r| r.total).sum(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WTLRecord {
    pub wins: u32,
    pub ties: u32,
    pub losses: u32,
}

impl WTLRecord {
    pub fn total(&self) -> u32 {
        self.wins + self.ties + self.losses
    }
}

impl std::fmt::Display for WTLRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.wins, self.ties, self.losses)
    }
}

fn keyed<'a>(results: &'a [SettingResult], side: &str) -> Result<BTreeMap<(&'a str, &'a str), &'a SettingResult>, EvalError> {
    let mut map = BTreeMap::new();
    for r in results {
        if map.insert(r.key(), r).is_some() {
            return Err(EvalError::MisalignedSettings(format!(
                "{side} lists ({}, {}) twice",
                r.model, r.dataset
            )));
        }
    }
    Ok(map)
}

/// Compares two methods setting by setting at two-decimal percentage
/// precision. Both lists must cover the same (model, dataset) settings.
pub fn win_tie_lose(ours: &[SettingResult], baseline: &[SettingResult]) -> Result<WTLRecord, EvalError> {
    let a = keyed(ours, "first list")?;
    let b = keyed(baseline, "second list")?;
    if a.len() != b.len() {
        return Err(EvalError::MisalignedSettings(format!("{} vs {} settings", a.len(), b.len())));
    }
    let mut record = WTLRecord::default();
    for (key, ra) in &a {
        let rb = b
            .get(key)
            .ok_or_else(|| EvalError::MisalignedSettings(format!("({}, {}) missing from second list", key.0, key.1)))?;
        match ra.percent_hundredths().cmp(&rb.percent_hundredths()) {
            std::cmp::Ordering::Greater => record.wins += 1,
            std::cmp::Ordering::Equal => record.ties += 1,
            std::cmp::Ordering::Less => record.losses += 1,
        }
    }
    Ok(record)
}

/// Models × datasets grid of exact accuracy differences (fractions, so
/// 0.76 vs 0.40 is +0.36). Positive means `method_a` scored higher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaMatrix {
    pub method_a: Method,
    pub method_b: Method,
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[model][dataset]`.
    pub cells: Vec<Vec<Ratio<i128>>>,
}

impl DeltaMatrix {
    pub fn get(&self, model: &str, dataset: &str) -> Option<Ratio<i128>> {
        let r = self.models.iter().position(|m| m == model)?;
        let c = self.datasets.iter().position(|d| d == dataset)?;
        Some(self.cells[r][c])
    }

    /// CSV with a `model` column followed by one column per dataset, values
    /// rounded to four decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for d in &self.datasets {
            out.push(',');
            out.push_str(&csv_field(d));
        }
        out.push('\n');
        for (model, row) in self.models.iter().zip(&self.cells) {
            out.push_str(&csv_field(model));
            for cell in row {
                out.push(',');
                out.push_str(&format_fixed(*cell, 4));
            }
            out.push('\n');
        }
        out
    }
}

/// Every (model, dataset) setting that has a result for either method must
/// have one for both.
pub fn delta_matrix(results: &[SettingResult], method_a: Method, method_b: Method) -> Result<DeltaMatrix, EvalError> {
    let mut index: BTreeMap<(&str, &str, Method), &SettingResult> = BTreeMap::new();
    for r in results {
        index.insert((&r.model, &r.dataset, r.method), r);
    }
    let relevant = results.iter().filter(|r| r.method == method_a || r.method == method_b);
    let models: BTreeSet<&str> = relevant.clone().map(|r| r.model.as_str()).collect();
    let datasets: BTreeSet<&str> = relevant.map(|r| r.dataset.as_str()).collect();
    let mut cells = Vec::with_capacity(models.len());
    for &model in &models {
        let mut row = Vec::with_capacity(datasets.len());
        for &dataset in &datasets {
            let get = |method| {
                index.get(&(model, dataset, method)).copied().ok_or_else(|| EvalError::MissingCell {
                    model: model.to_string(),
                    dataset: dataset.to_string(),
                    method,
                })
            };
            row.push(get(method_a)?.accuracy() - get(method_b)?.accuracy());
        }
        cells.push(row);
    }
    Ok(DeltaMatrix {
        method_a,
        method_b,
        models: models.into_iter().map(String::from).collect(),
        datasets: datasets.into_iter().map(String::from).collect(),
        cells,
    })
}

/// Accuracy of instructions induced by one model and run on another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossResult {
    pub inducing_model: String,
    /// `result.model` is the inference model.
    pub result: SettingResult,
}

/// Improvement of each (inducing, inference) pair over the inference
/// model's own baseline, in percentage points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossModelGrid {
    pub inducing_models: Vec<String>,
    pub inference_models: Vec<String>,
    /// `cells[inducing][inference]`; `None` where the pair was not run.
    pub cells: Vec<Vec<Option<Ratio<i128>>>>,
}

impl CrossModelGrid {
    pub fn get(&self, inducing: &str, inference: &str) -> Option<Ratio<i128>> {
        let r = self.inducing_models.iter().position(|m| m == inducing)?;
        let c = self.inference_models.iter().position(|m| m == inference)?;
        self.cells[r][c]
    }

    /// Rows are inducing models, columns inference models, values in
    /// points to two decimals; blank where the pair was not run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("inducing_model");
        for m in &self.inference_models {
            out.push(',');
            out.push_str(&csv_field(m));
        }
        out.push('\n');
        for (model, row) in self.inducing_models.iter().zip(&self.cells) {
            out.push_str(&csv_field(model));
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format_fixed(*v, 2));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `baselines` holds one result per inference model (normally ZCoT).
pub fn cross_model_grid(induced: &[CrossResult], baselines: &[SettingResult]) -> Result<CrossModelGrid, EvalError> {
    let mut base: BTreeMap<&str, &SettingResult> = BTreeMap::new();
    for b in baselines {
        base.insert(&b.model, b);
    }
    let inducing: BTreeSet<&str> = induced.iter().map(|c| c.inducing_model.as_str()).collect();
    let inference: BTreeSet<&str> = induced.iter().map(|c| c.result.model.as_str()).collect();
    let inducing: Vec<&str> = inducing.into_iter().collect();
    let inference: Vec<&str> = inference.into_iter().collect();
    let mut cells = vec![vec![None; inference.len()]; inducing.len()];
    for c in induced {
        let b = base
            .get(c.result.model.as_str())
            .ok_or_else(|| EvalError::MissingBaseline(c.result.model.clone()))?;
        let r = inducing.binary_search(&c.inducing_model.as_str()).unwrap();
        let col = inference.binary_search(&c.result.model.as_str()).unwrap();
        cells[r][col] = Some((c.result.accuracy() - b.accuracy()) * Ratio::from_integer(100));
    }
    Ok(CrossModelGrid {
        inducing_models: inducing.into_iter().map(String::from).collect(),
        inference_models: inference.into_iter().map(String::from).collect(),
        cells,
    })
}

/// Rounds half away from zero to `decimals` places and renders with a
/// leading sign for negatives only.
pub fn format_fixed(value: Ratio<i128>, decimals: u32) -> String {
    let scale = 10i128.pow(decimals);
    let scaled = value * Ratio::from_integer(scale);
    let (n, d) = (*scaled.numer(), *scaled.denom());
    let mag = (2 * n.abs() + d) / (2 * d);
    let sign = if n < 0 && mag != 0 { "-" } else { "" };
    if decimals == 0 {
        return format!("{sign}{mag}");
    }
    format!("{sign}{}.{:0width$}", mag / scale, mag % scale, width = decimals as usize)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
