//! Task files, seeded sampling and the shift-cipher generator.

mod cipher;

pub use cipher::{
    build_cipher_tasks, default_corpus, load_word_corpus, rot_decode, rot_encode, CipherError,
    CipherInstance, CIPHER_ANSWER_FORMAT, CIPHER_SHORT_PHRASE, CIPHER_TASK,
};

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eval::MatchPolicy;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{file}: field `{field}`: {reason}")]
    Schema {
        file: PathBuf,
        field: String,
        reason: String,
    },
    #[error("{file}: duplicate item id `{id}`")]
    DuplicateId { file: PathBuf, id: String },
    #[error("{file}: task `{task}` is already defined by another file")]
    DuplicateTask { file: PathBuf, task: String },
    #[error("task `{task}` has {available} items, cannot sample {requested}")]
    NotEnoughItems {
        task: String,
        available: usize,
        requested: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no task files found in {0}")]
    Empty(PathBuf),
}

/// One question with an optional gold answer. Induction only ever reads
/// `question`; `gold` is for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<String>,
    pub short_phrase: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub short_phrase_optional: bool,
    pub answer_format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_policy: Option<MatchPolicy>,
    pub items: Vec<QAItem>,
}

impl TaskSpec {
    /// Unique name of the unit being evaluated: the subtask when present.
    pub fn key(&self) -> &str {
        self.subtask.as_deref().unwrap_or(&self.task)
    }

    pub fn item(&self, id: &str) -> Option<&QAItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Copy with every gold answer removed.
    pub fn without_golds(&self) -> TaskSpec {
        let mut t = self.clone();
        for item in &mut t.items {
            item.gold = None;
        }
        t
    }

    fn validate(&self, file: &Path) -> Result<(), DatasetError> {
        let schema = |field: &str, reason: &str| DatasetError::Schema {
            file: file.to_path_buf(),
            field: field.to_string(),
            reason: reason.to_string(),
        };
        if self.items.is_empty() {
            return Err(schema("items", "must contain at least one item"));
        }
        if self.short_phrase.is_empty() && !self.short_phrase_optional {
            return Err(schema(
                "short_phrase",
                "empty short phrase requires `short_phrase_optional: true`",
            ));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    file: file.to_path_buf(),
                    id: item.id.clone(),
                });
            }
        }
        Ok(())
    }
}

fn check_fields(doc: &Value, file: &Path) -> Result<(), DatasetError> {
    let schema = |field: String, reason: &str| DatasetError::Schema {
        file: file.to_path_buf(),
        field,
        reason: reason.to_string(),
    };
    let obj = doc
        .as_object()
        .ok_or_else(|| schema("$".into(), "document must be a JSON object"))?;
    for field in ["task", "short_phrase", "answer_format"] {
        match obj.get(field) {
            Some(Value::String(_)) => {}
            Some(_) => return Err(schema(field.into(), "must be a string")),
            None => return Err(schema(field.into(), "missing")),
        }
    }
    match obj.get("subtask") {
        None | Some(Value::Null) | Some(Value::String(_)) => {}
        Some(_) => return Err(schema("subtask".into(), "must be a string or null")),
    }
    let items = match obj.get("items") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(schema("items".into(), "must be an array")),
        None => return Err(schema("items".into(), "missing")),
    };
    for (i, item) in items.iter().enumerate() {
        let item = item
            .as_object()
            .ok_or_else(|| schema(format!("items[{i}]"), "must be an object"))?;
        for field in ["id", "question"] {
            if !matches!(item.get(field), Some(Value::String(_))) {
                return Err(schema(format!("items[{i}].{field}"), "missing or not a string"));
            }
        }
        if !matches!(item.get("gold"), None | Some(Value::Null) | Some(Value::String(_))) {
            return Err(schema(format!("items[{i}].gold"), "must be a string or null"));
        }
    }
    Ok(())
}

/// Parses a single task document.
pub fn parse_task(text: &str, file: &Path) -> Result<TaskSpec, DatasetError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        file: file.to_path_buf(),
        field: "$".into(),
        reason: e.to_string(),
    })?;
    check_fields(&doc, file)?;
    let task: TaskSpec = serde_json::from_value(doc).map_err(|e| DatasetError::Schema {
        file: file.to_path_buf(),
        field: "$".into(),
        reason: e.to_string(),
    })?;
    task.validate(file)?;
    Ok(task)
}

/// Loads every `*.json` task file in `dir`, in file-name order.
///
/// The first malformed file aborts the whole load.
pub fn load_tasks(dir: &Path) -> Result<Vec<TaskSpec>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DatasetError::Empty(dir.to_path_buf()));
    }

    let mut tasks = Vec::with_capacity(files.len());
    let mut keys = HashSet::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|source| DatasetError::Io {
            path: file.clone(),
            source,
        })?;
        let task = parse_task(&text, &file)?;
        if !keys.insert(task.key().to_string()) {
            return Err(DatasetError::DuplicateTask {
                file,
                task: task.key().to_string(),
            });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Writes `task` as pretty JSON.
pub fn write_task(task: &TaskSpec, path: &Path) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(task).expect("task serializes");
    std::fs::write(path, text + "\n").map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Draws `n` distinct items without replacement.
///
/// The draw is the first `n` entries of a seeded shuffle over the items
/// sorted by id, so it depends only on the id set, `n` and `seed`, and
/// smaller draws are prefixes of larger ones.
pub fn sample_items(task: &TaskSpec, n: usize, seed: u64) -> Result<Vec<QAItem>, DatasetError> {
    if n == 0 || n > task.items.len() {
        return Err(DatasetError::NotEnoughItems {
            task: task.key().to_string(),
            available: task.items.len(),
            requested: n,
        });
    }
    let mut sorted: Vec<&QAItem> = task.items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    Ok(sorted.into_iter().take(n).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn task_with(n: usize) -> TaskSpec {
        TaskSpec {
            task: "t".into(),
            subtask: None,
            short_phrase: "T".into(),
            short_phrase_optional: false,
            answer_format: "a word".into(),
            match_policy: None,
            items: (0..n)
                .map(|i| QAItem {
                    id: format!("i{i:03}"),
                    question: format!("q{i}"),
                    gold: Some(format!("g{i}")),
                })
                .collect(),
        }
    }

    fn write_json(dir: &Path, name: &str, value: &Value) {
        std::fs::write(dir.join(name), serde_json::to_string(value).unwrap()).unwrap();
    }

    #[test]
    fn loads_one_file_with_25_items() {
        let dir = tempfile::tempdir().unwrap();
        write_task(&task_with(25), &dir.path().join("t.json")).unwrap();
        let tasks = load_tasks(dir.path()).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].items.len(), 25);
    }

    #[test]
    fn missing_answer_format_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut doc = serde_json::to_value(task_with(2)).unwrap();
        doc.as_object_mut().unwrap().remove("answer_format");
        write_json(dir.path(), "bad.json", &doc);
        match load_tasks(dir.path()) {
            Err(DatasetError::Schema { file, field, .. }) => {
                assert_eq!(field, "answer_format");
                assert!(file.ends_with("bad.json"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn first_malformed_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_task(&task_with(2), &dir.path().join("a.json")).unwrap();
        std::fs::write(dir.path().join("b.json"), "{ not json").unwrap();
        let mut doc = serde_json::to_value(task_with(2)).unwrap();
        doc["task"] = Value::from(3);
        write_json(dir.path(), "c.json", &doc);
        let err = load_tasks(dir.path()).unwrap_err();
        assert!(err.to_string().contains("b.json"), "{err}");
    }

    #[test]
    fn duplicate_item_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = task_with(3);
        t.items[2].id = t.items[0].id.clone();
        write_task(&t, &dir.path().join("t.json")).unwrap();
        assert!(matches!(load_tasks(dir.path()), Err(DatasetError::DuplicateId { .. })));
    }

    #[test]
    fn empty_items_and_empty_phrase_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_task(&task_with(0), &dir.path().join("t.json")).unwrap();
        assert!(matches!(load_tasks(dir.path()), Err(DatasetError::Schema { field, .. }) if field == "items"));

        let mut t = task_with(1);
        t.short_phrase.clear();
        write_task(&t, &dir.path().join("t.json")).unwrap();
        assert!(matches!(load_tasks(dir.path()), Err(DatasetError::Schema { field, .. }) if field == "short_phrase"));

        t.short_phrase_optional = true;
        write_task(&t, &dir.path().join("t.json")).unwrap();
        assert_eq!(load_tasks(dir.path()).unwrap()[0].short_phrase, "");
    }

    #[test]
    fn loads_23_task_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..23 {
            let mut t = task_with(25);
            t.task = format!("bbh task {i}");
            write_task(&t, &dir.path().join(format!("task_{i:02}.json"))).unwrap();
        }
        std::fs::write(dir.path().join("README.txt"), "ignored").unwrap();
        assert_eq!(load_tasks(dir.path()).unwrap().len(), 23);
    }

    #[test]
    fn loader_passes_question_bytes_through() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = task_with(2);
        t.items[0].question = "  (A) caf\u{e9}\r\n\t(B) \"quoted\" \\ back  ".into();
        write_task(&t, &dir.path().join("t.json")).unwrap();
        let loaded = load_tasks(dir.path()).unwrap();
        assert_eq!(loaded[0].items[0].question.as_bytes(), t.items[0].question.as_bytes());
    }

    #[test]
    fn full_sample_is_whole_set() {
        let t = task_with(25);
        let s = sample_items(&t, 25, 7).unwrap();
        let ids: BTreeSet<_> = s.iter().map(|i| i.id.clone()).collect();
        let all: BTreeSet<_> = t.items.iter().map(|i| i.id.clone()).collect();
        assert_eq!(ids, all);
    }

    #[test]
    fn same_seed_same_selection() {
        let t = task_with(40);
        assert_eq!(sample_items(&t, 10, 3).unwrap(), sample_items(&t, 10, 3).unwrap());
    }

    #[test]
    fn selection_ignores_file_order() {
        let t = task_with(40);
        let mut reversed = t.clone();
        reversed.items.reverse();
        assert_eq!(sample_items(&t, 10, 3).unwrap(), sample_items(&reversed, 10, 3).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let t = task_with(100);
        let a = sample_items(&t, 25, 1).unwrap();
        let b = sample_items(&t, 25, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn smaller_samples_are_prefixes() {
        let t = task_with(30);
        let five = sample_items(&t, 5, 11).unwrap();
        let three = sample_items(&t, 3, 11).unwrap();
        assert_eq!(&five[..3], &three[..]);
    }

    #[test]
    fn oversampling_is_error() {
        let t = task_with(3);
        assert!(matches!(sample_items(&t, 4, 0), Err(DatasetError::NotEnoughItems { .. })));
        assert!(matches!(sample_items(&t, 0, 0), Err(DatasetError::NotEnoughItems { .. })));
    }

    #[test]
    fn sample_is_distinct() {
        let t = task_with(50);
        let s = sample_items(&t, 50, 99).unwrap();
        let ids: HashSet<_> = s.iter().map(|i| &i.id).collect();
        assert_eq!(ids.len(), 50);
    }
}
