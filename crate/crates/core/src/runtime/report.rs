//! The deterministic run report and its CSV companions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::manifest::EntryKey;
use crate::eval::{
    cross_model_grid, csv_field, delta_matrix, format_fixed, pool, win_tie_lose, CrossModelGrid, CrossResult,
    DeltaMatrix, SettingResult, WTLRecord,
};
use crate::Method;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingRow {
    /// Task key for per-task rows, dataset name for pooled rows.
    pub scope: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inducing_model: Option<String>,
    pub inference_model: String,
    pub correct: u64,
    pub total: u64,
    /// Percentage, two decimals.
    pub accuracy: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WtlRow {
    pub method: Method,
    pub baseline: Method,
    pub settings: u32,
    pub record: WTLRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossRow {
    pub inducing_model: String,
    pub inference_model: String,
    /// Percentage points over the inference model's ZCoT baseline.
    pub improvement: String,
}

/// Contains no timestamps, paths or costs, so identical inputs give a
/// byte-identical file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub n: usize,
    pub seed: u64,
    pub sample_size: usize,
    pub settings: Vec<SettingRow>,
    pub aggregates: Vec<SettingRow>,
    pub win_tie_lose: Vec<WtlRow>,
    pub cross_model: Vec<CrossRow>,
}

/// Report plus the rendered CSV files, keyed by file name.
pub struct RenderedReport {
    pub report: RunReport,
    pub files: BTreeMap<String, String>,
}

fn row(key: &EntryKey, scope: &str, r: &SettingResult) -> SettingRow {
    SettingRow {
        scope: scope.to_string(),
        method: key.method,
        inducing_model: key.inducing_model.clone(),
        inference_model: key.inference_model.clone(),
        correct: r.correct,
        total: r.total,
        accuracy: r.percent_string(),
    }
}

/// Keeps only settings whose (model, dataset) appears in both lists.
fn common(a: &[SettingResult], b: &[SettingResult]) -> (Vec<SettingResult>, Vec<SettingResult>) {
    let ka: BTreeSet<_> = a.iter().map(|r| (r.model.clone(), r.dataset.clone())).collect();
    let kb: BTreeSet<_> = b.iter().map(|r| (r.model.clone(), r.dataset.clone())).collect();
    let both: BTreeSet<_> = ka.intersection(&kb).cloned().collect();
    let keep = |v: &[SettingResult]| {
        v.iter()
            .filter(|r| both.contains(&(r.model.clone(), r.dataset.clone())))
            .cloned()
            .collect()
    };
    (keep(a), keep(b))
}

/// `results` are per-task results for every evaluated entry.
pub fn build_report(
    dataset: &str,
    n: usize,
    seed: u64,
    sample_size: usize,
    results: &[(EntryKey, SettingResult)],
) -> RenderedReport {
    let mut sorted: Vec<&(EntryKey, SettingResult)> = results.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let settings: Vec<SettingRow> = sorted.iter().map(|(k, r)| row(k, &k.task, r)).collect();

    // Pool per (method, inducing, inference).
    let mut groups: BTreeMap<(Method, Option<String>, String), Vec<SettingResult>> = BTreeMap::new();
    for (k, r) in &sorted {
        groups
            .entry((k.method, k.inducing_model.clone(), k.inference_model.clone()))
            .or_default()
            .push(r.clone());
    }
    let mut aggregates = Vec::new();
    let mut pooled: BTreeMap<(Method, Option<String>, String), SettingResult> = BTreeMap::new();
    for ((method, inducing, inference), rs) in &groups {
        let p = pool(rs, dataset).expect("group shares model and method");
        let key = EntryKey {
            task: dataset.to_string(),
            method: *method,
            inducing_model: inducing.clone(),
            inference_model: inference.clone(),
        };
        aggregates.push(row(&key, dataset, &p));
        pooled.insert((*method, inducing.clone(), inference.clone()), p);
    }

    // Self-induced per-task settings drive the method comparisons.
    let by_method = |m: Method| -> Vec<SettingResult> {
        sorted
            .iter()
            .filter(|(k, _)| k.method == m && k.is_self_induced())
            .map(|(_, r)| r.clone())
            .collect()
    };
    let methods: BTreeSet<Method> = sorted.iter().map(|(k, _)| k.method).collect();
    let mut files = BTreeMap::new();
    let mut wtl = Vec::new();
    if methods.contains(&Method::StrategyInduct) {
        let ours = by_method(Method::StrategyInduct);
        for &baseline in methods.iter().filter(|&&m| m != Method::StrategyInduct) {
            let (a, b) = common(&ours, &by_method(baseline));
            if a.is_empty() {
                continue;
            }
            let record = win_tie_lose(&a, &b).expect("aligned by construction");
            wtl.push(WtlRow {
                method: Method::StrategyInduct,
                baseline,
                settings: record.total(),
                record,
            });
            let mut both = a;
            both.extend(b);
            let dm: DeltaMatrix = delta_matrix(&both, Method::StrategyInduct, baseline).expect("aligned by construction");
            files.insert(format!("delta_{}_vs_{}.csv", Method::StrategyInduct.id(), baseline.id()), dm.to_csv());
        }
    }

    let mut cross_model = Vec::new();
    let induced: Vec<CrossResult> = pooled
        .iter()
        .filter(|((m, _, _), _)| *m == Method::StrategyInduct)
        .map(|((_, inducing, _), r)| CrossResult {
            inducing_model: inducing.clone().unwrap_or_else(|| r.model.clone()),
            result: r.clone(),
        })
        .collect();
    let baselines: Vec<SettingResult> = pooled
        .iter()
        .filter(|((m, _, _), _)| *m == Method::ZCoT)
        .map(|(_, r)| r.clone())
        .collect();
    let with_baseline: Vec<CrossResult> = induced
        .into_iter()
        .filter(|c| baselines.iter().any(|b| b.model == c.result.model))
        .collect();
    if !with_baseline.is_empty() {
        let grid: CrossModelGrid = cross_model_grid(&with_baseline, &baselines).expect("baselines filtered");
        for (i, inducing) in grid.inducing_models.iter().enumerate() {
            for (j, inference) in grid.inference_models.iter().enumerate() {
                if let Some(v) = grid.cells[i][j] {
                    cross_model.push(CrossRow {
                        inducing_model: inducing.clone(),
                        inference_model: inference.clone(),
                        improvement: format_fixed(v, 2),
                    });
                }
            }
        }
        files.insert("cross_model.csv".into(), grid.to_csv());
    }

    let report = RunReport {
        dataset: dataset.to_string(),
        n,
        seed,
        sample_size,
        settings,
        aggregates,
        win_tie_lose: wtl,
        cross_model,
    };
    files.insert("settings.csv".into(), settings_csv(&report));
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    files.insert("report.json".into(), json);
    RenderedReport { report, files }
}

fn settings_csv(report: &RunReport) -> String {
    let mut out = String::from("scope,method,inducing_model,inference_model,correct,total,accuracy\n");
    for r in report.settings.iter().chain(&report.aggregates) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.scope),
            r.method.id(),
            csv_field(r.inducing_model.as_deref().unwrap_or("")),
            csv_field(&r.inference_model),
            r.correct,
            r.total,
            r.accuracy
        ));
    }
    out
}

/// Accuracy of the strategy-induced method per model and N, as a
/// models × N table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationTable {
    pub ns: Vec<usize>,
    /// (model, accuracy per N in `ns` order; `None` when not evaluated).
    pub rows: Vec<(String, Vec<Option<String>>)>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for n in &self.ns {
            out.push_str(&format!(",N={n}"));
        }
        out.push('\n');
        for (model, cells) in &self.rows {
            out.push_str(&csv_field(model));
            for c in cells {
                out.push(',');
                out.push_str(c.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(task: &str, method: Method, inducing: Option<&str>, inference: &str, correct: u64) -> (EntryKey, SettingResult) {
        (
            EntryKey {
                task: task.into(),
                method,
                inducing_model: inducing.map(String::from),
                inference_model: inference.into(),
            },
            SettingResult {
                model: inference.into(),
                dataset: task.into(),
                method,
                correct,
                total: 25,
            },
        )
    }

    #[test]
    fn report_structure() {
        let results = vec![
            entry("t1", Method::ZCoT, None, "A", 10),
            entry("t2", Method::ZCoT, None, "A", 12),
            entry("t1", Method::StrategyInduct, Some("A"), "A", 15),
            entry("t2", Method::StrategyInduct, Some("A"), "A", 12),
            entry("t1", Method::StrategyInduct, Some("B"), "A", 20),
            entry("t2", Method::StrategyInduct, Some("B"), "A", 20),
        ];
        let r = build_report("ds", 3, 0, 25, &results);
        assert_eq!(r.report.settings.len(), 6);
        assert_eq!(r.report.aggregates.len(), 3);
        assert_eq!(r.report.win_tie_lose.len(), 1);
        assert_eq!(r.report.win_tie_lose[0].record, WTLRecord { wins: 1, ties: 1, losses: 0 });
        // Pooled: ZCoT 22/50 = 44%, self 27/50 = 54%, B-induced 40/50 = 80%.
        let cross: Vec<_> = r.report.cross_model.iter().map(|c| (c.inducing_model.as_str(), c.improvement.as_str())).collect();
        assert_eq!(cross, vec![("A", "10.00"), ("B", "36.00")]);
        assert!(r.files.contains_key("delta_strategy_induct_vs_zcot.csv"));
        assert_eq!(r.files["cross_model.csv"], "inducing_model,A\nA,10.00\nB,36.00\n");
        assert!(r.files["settings.csv"].starts_with("scope,method"));
    }

    #[test]
    fn report_is_order_independent() {
        let mut results = vec![
            entry("t1", Method::ZCoT, None, "A", 10),
            entry("t2", Method::SCoT, None, "A", 12),
            entry("t1", Method::StrategyInduct, Some("A"), "A", 15),
        ];
        let a = build_report("ds", 3, 0, 25, &results).files;
        results.reverse();
        assert_eq!(build_report("ds", 3, 0, 25, &results).files, a);
    }

    #[test]
    fn ablation_csv_shape() {
        let t = AblationTable {
            ns: vec![1, 3, 5],
            rows: vec![("m".into(), vec![Some("64.00".into()), None, Some("70.00".into())])],
        };
        assert_eq!(t.to_csv(), "model,N=1,N=3,N=5\nm,64.00,,70.00\n");
    }
}
