//! Synthetic tasks and a matching mock script shared by integration tests.
#![allow(dead_code)]

use std::path::Path;

use qinduct::dataset::{write_task, QAItem, TaskSpec};
use qinduct::gateway::{MockEntry, MockScript};

pub const STRATEGY_INSTRUCTION: &str = "**Operational Steps**:\n1. Read the question.\n2. Apply the strategy steps.";
pub const QUESTION_INSTRUCTION: &str = "**Operational Steps**:\n1. Read the question.";

pub fn synthetic_task(name: &str, items: usize) -> TaskSpec {
    TaskSpec {
        task: name.to_string(),
        subtask: None,
        short_phrase: format!("{name} phrase"),
        short_phrase_optional: false,
        answer_format: "a single lowercase word".into(),
        match_policy: None,
        items: (0..items)
            .map(|i| QAItem {
                id: format!("{i:03}"),
                question: format!("<<{name}-q{i:03}>>"),
                gold: Some(format!("gold{i}")),
            })
            .collect(),
    }
}

pub fn synthetic_tasks(count: usize, items: usize) -> Vec<TaskSpec> {
    (0..count).map(|t| synthetic_task(&format!("task{t}"), items)).collect()
}

pub fn write_tasks(dir: &Path, tasks: &[TaskSpec]) {
    std::fs::create_dir_all(dir).unwrap();
    for t in tasks {
        write_task(t, &dir.join(format!("{}.json", t.key()))).unwrap();
    }
}

fn answer(text: &str) -> String {
    format!("<deduction>\nworked it out\n</deduction>\n<final_answer>{text}</final_answer>")
}

/// Strategy and induction calls always succeed. Induced-instruction
/// inference gets items with `i % 3 != 0` right; instance-level inference
/// gets even items right.
pub fn mock_script(tasks: &[TaskSpec]) -> MockScript {
    let mut entries = vec![
        MockEntry::contains(
            "You are tasked with designing a strategy",
            "<strategy>\nStep 1: Read the question.\nStep 2: Decide.\n</strategy>",
        ),
        MockEntry::contains(
            "inductively deriving better solution rules",
            format!("<task_instruction>\n{STRATEGY_INSTRUCTION}\n</task_instruction>"),
        ),
        MockEntry::contains(
            "extracting significant rules",
            format!("<task_instruction>\n{QUESTION_INSTRUCTION}\n</task_instruction>"),
        ),
    ];
    for t in tasks {
        for (i, item) in t.items.iter().enumerate() {
            let gold = item.gold.clone().unwrap();
            let induced = if i % 3 != 0 { gold.clone() } else { "wrong".into() };
            let instance = if i % 2 == 0 { gold } else { "wrong".into() };
            entries.push(MockEntry::contains(
                format!("{}\n\n[Answer]\nLet's refer", item.question),
                answer(&induced),
            ));
            entries.push(MockEntry::contains(
                format!("{}\n\n[Answer]\nLet's think", item.question),
                answer(&instance),
            ));
        }
    }
    entries.push(MockEntry::contains("", "no tags at all"));
    MockScript::new(entries)
}

pub fn write_mock_script(path: &Path, script: &MockScript) {
    std::fs::write(path, serde_json::to_string_pretty(script).unwrap()).unwrap();
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// A run directory holding synthetic tasks, their mock script and a cache.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub tasks: Vec<TaskSpec>,
}

impl Workspace {
    pub fn new(task_count: usize, items: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let tasks = synthetic_tasks(task_count, items);
        write_tasks(&dir.path().join("tasks"), &tasks);
        write_mock_script(&dir.path().join("mock.json"), &mock_script(&tasks));
        Workspace { dir, tasks }
    }

    pub fn path(&self, rel: &str) -> std::path::PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config(&self, out: &str) -> qinduct::runtime::RunConfig {
        qinduct::runtime::RunConfig {
            tasks: self.path("tasks"),
            dataset: Some("synthetic".into()),
            inference_models: vec!["mock-a".into(), "mock-b".into()],
            cache_dir: self.path("cache"),
            out_dir: self.path(out),
            mock_script: Some(self.path("mock.json")),
            ..Default::default()
        }
    }

    /// Profiles priced at $1 per million tokens both ways.
    pub fn priced_providers(&self) -> std::path::PathBuf {
        let path = self.path("providers.toml");
        let mut text = String::new();
        for name in ["mock-a", "mock-b"] {
            text.push_str(&format!(
                "[[profiles]]\nname = \"{name}\"\nprovider_id = \"mock\"\nmodel_name = \"{name}\"\nprice_in = 1.0\nprice_out = 1.0\nmax_output_tokens = 200\n\n"
            ));
        }
        std::fs::write(&path, text).unwrap();
        path
    }
}
