//! Meta-prompt templates and slot rendering.
//!
//! Template texts live as plain UTF-8 files under `templates/` and are kept
//! verbatim, including their positional `{}` / `{ }` slot markers. A small
//! named-slot layer maps each [`TemplateKind`] onto its marker positions so
//! callers fill slots by name rather than by index.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::pipeline::StrategyPair;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing required slot `{0}`")]
    MissingSlot(Slot),
    #[error("template {kind:?} has {markers} slot markers but {expected} slots are mapped")]
    UnfilledSlot {
        kind: TemplateKind,
        markers: usize,
        expected: usize,
    },
    #[error("cannot serialize an empty example set")]
    EmptyPairs,
    #[error("failed to read template {path}: {message}")]
    Io { path: String, message: String },
}

/// The six meta-prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    StrategyDesign,
    InductBaseline,
    StrategyInduction,
    InferenceZCoT,
    InferenceSCoT,
    InferenceInduced,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 6] = [
        TemplateKind::StrategyDesign,
        TemplateKind::InductBaseline,
        TemplateKind::StrategyInduction,
        TemplateKind::InferenceZCoT,
        TemplateKind::InferenceSCoT,
        TemplateKind::InferenceInduced,
    ];

    /// File name of the fixture holding this template.
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::StrategyDesign => "strategy_design.txt",
            TemplateKind::InductBaseline => "induct_baseline.txt",
            TemplateKind::StrategyInduction => "strategy_induction.txt",
            TemplateKind::InferenceZCoT => "inference_zcot.txt",
            TemplateKind::InferenceSCoT => "inference_scot.txt",
            TemplateKind::InferenceInduced => "inference_induced.txt",
        }
    }

    /// Named slots in the order their markers appear in the template.
    pub fn slots(self) -> &'static [Slot] {
        match self {
            TemplateKind::StrategyDesign => &[Slot::TaskInformation, Slot::AnswerFormat, Slot::Question],
            TemplateKind::InductBaseline | TemplateKind::StrategyInduction => {
                &[Slot::TaskInformation, Slot::AnswerFormat, Slot::Examples]
            }
            TemplateKind::InferenceZCoT
            | TemplateKind::InferenceSCoT
            | TemplateKind::InferenceInduced => &[Slot::Instruction, Slot::AnswerFormat, Slot::Question],
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    TaskInformation,
    AnswerFormat,
    Question,
    Examples,
    Instruction,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::TaskInformation => "task_information",
            Slot::AnswerFormat => "answer_format",
            Slot::Question => "question",
            Slot::Examples => "examples",
            Slot::Instruction => "instruction",
        })
    }
}

/// Values available for slot substitution.
///
/// `task_information` may be empty when the task declares its short phrase
/// optional; the `<task_information>` block is then rendered with an empty
/// body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotValues {
    pub task_information: String,
    pub answer_format: String,
    pub question: Option<String>,
    pub examples: Option<String>,
    pub instruction: Option<String>,
}

impl SlotValues {
    pub fn new(task_information: impl Into<String>, answer_format: impl Into<String>) -> Self {
        Self {
            task_information: task_information.into(),
            answer_format: answer_format.into(),
            ..Self::default()
        }
    }

    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    pub fn with_examples(mut self, examples: impl Into<String>) -> Self {
        self.examples = Some(examples.into());
        self
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }

    fn get(&self, slot: Slot) -> Option<&str> {
        match slot {
            Slot::TaskInformation => Some(&self.task_information),
            Slot::AnswerFormat => Some(&self.answer_format),
            Slot::Question => self.question.as_deref(),
            Slot::Examples => self.examples.as_deref(),
            Slot::Instruction => self.instruction.as_deref(),
        }
    }
}

/// A fully rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub slots_filled: Vec<Slot>,
}

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone)]
struct Template {
    text: String,
    /// Literal segments between markers; always `markers + 1` entries.
    segments: Vec<(usize, usize)>,
}

impl Template {
    fn parse(text: String) -> Self {
        let text = normalize_newlines(&text);
        let bytes = text.as_bytes();
        let mut segments = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < bytes.len() {
            let marker_len = if bytes[i..].starts_with(b"{}") {
                2
            } else if bytes[i..].starts_with(b"{ }") {
                3
            } else {
                0
            };
            if marker_len > 0 {
                segments.push((start, i));
                i += marker_len;
                start = i;
            } else {
                i += 1;
            }
        }
        segments.push((start, bytes.len()));
        Self { text, segments }
    }

    fn markers(&self) -> usize {
        self.segments.len() - 1
    }
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// The six templates, loaded either from the built-in copies or a directory.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    /// Templates compiled into the binary from `templates/`.
    pub fn builtin() -> &'static TemplateSet {
        static BUILTIN: OnceLock<TemplateSet> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Self::from_texts([
                include_str!("../templates/strategy_design.txt"),
                include_str!("../templates/induct_baseline.txt"),
                include_str!("../templates/strategy_induction.txt"),
                include_str!("../templates/inference_zcot.txt"),
                include_str!("../templates/inference_scot.txt"),
                include_str!("../templates/inference_induced.txt"),
            ])
        })
    }

    /// Reads one file per [`TemplateKind`] from `dir`, newline-normalized to LF.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        let mut texts = Vec::with_capacity(TemplateKind::ALL.len());
        for kind in TemplateKind::ALL {
            let path = dir.join(kind.file_name());
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            texts.push(text);
        }
        let set = Self {
            templates: texts.into_iter().map(Template::parse).collect(),
        };
        for kind in TemplateKind::ALL {
            set.check_markers(kind)?;
        }
        Ok(set)
    }

    fn from_texts(texts: [&str; 6]) -> Self {
        Self {
            templates: texts.iter().map(|t| Template::parse(t.to_string())).collect(),
        }
    }

    /// Stored template text for `kind`, markers included.
    pub fn text(&self, kind: TemplateKind) -> &str {
        &self.templates[kind.index()].text
    }

    fn check_markers(&self, kind: TemplateKind) -> Result<(), TemplateError> {
        let template = &self.templates[kind.index()];
        let expected = kind.slots().len();
        if template.markers() != expected {
            return Err(TemplateError::UnfilledSlot {
                kind,
                markers: template.markers(),
                expected,
            });
        }
        Ok(())
    }

    /// Substitutes slot values into the markers of `kind`, in marker order.
    pub fn render(&self, kind: TemplateKind, slots: &SlotValues) -> Result<PromptText, TemplateError> {
        let values = kind
            .slots()
            .iter()
            .map(|&slot| slots.get(slot).ok_or(TemplateError::MissingSlot(slot)))
            .collect::<Result<Vec<_>, _>>()?;
        self.check_markers(kind)?;

        let template = &self.templates[kind.index()];
        let extra: usize = values.iter().map(|v| v.len()).sum();
        let mut out = String::with_capacity(template.text.len() + extra);
        for (i, &(start, end)) in template.segments.iter().enumerate() {
            out.push_str(&template.text[start..end]);
            if let Some(value) = values.get(i) {
                out.push_str(value);
            }
        }
        Ok(PromptText {
            text: out,
            slots_filled: kind.slots().to_vec(),
        })
    }
}

/// Renders with the built-in templates.
pub fn render(kind: TemplateKind, slots: &SlotValues) -> Result<PromptText, TemplateError> {
    TemplateSet::builtin().render(kind, slots)
}

/// Serializes strategy-question pairs for the `<examples>` slot, in input order.
pub fn serialize_pairs(pairs: &[StrategyPair]) -> Result<String, TemplateError> {
    if pairs.is_empty() {
        return Err(TemplateError::EmptyPairs);
    }
    let blocks: Vec<String> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = i + 1;
            format!("Question {n}:\n{}\nStrategy {n}:\n{}", p.question, p.strategy)
        })
        .collect();
    Ok(blocks.join("\n\n"))
}

/// Serializes bare questions for the question-only INDUCT baseline.
pub fn serialize_questions<S: AsRef<str>>(questions: &[S]) -> Result<String, TemplateError> {
    if questions.is_empty() {
        return Err(TemplateError::EmptyPairs);
    }
    let blocks: Vec<String> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| format!("Question {}:\n{}", i + 1, q.as_ref()))
        .collect();
    Ok(blocks.join("\n\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(q: &str, s: &str) -> StrategyPair {
        StrategyPair {
            item_id: q.to_string(),
            question: q.to_string(),
            strategy: s.to_string(),
        }
    }

    /// Test-side parser for the pair serialization; only used to check round trips.
    fn parse_pairs(text: &str, count: usize) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut rest = text;
        for i in 1..=count {
            let q_label = format!("Question {i}:\n");
            let s_label = format!("\nStrategy {i}:\n");
            rest = rest.strip_prefix(&q_label).expect("question label");
            let s_at = rest.find(&s_label).expect("strategy label");
            let question = &rest[..s_at];
            rest = &rest[s_at + s_label.len()..];
            let strategy = if i == count {
                let s = rest;
                rest = "";
                s
            } else {
                let next = format!("\n\nQuestion {}:\n", i + 1);
                let end = rest.find(&next).expect("next block");
                let s = &rest[..end];
                rest = &rest[end + 2..];
                s
            };
            out.push((question.to_string(), strategy.to_string()));
        }
        assert!(rest.is_empty());
        out
    }

    #[test]
    fn strategy_design_places_question_inside_tags() {
        let slots = SlotValues::new("Shift Cipher", "a single word").with_question("fkrrvhg");
        let p = render(TemplateKind::StrategyDesign, &slots).unwrap();
        assert!(p.text.starts_with("You are tasked with designing a strategy"));
        assert!(p.text.contains("<question>\nfkrrvhg\n</question>"));
        assert!(p.text.contains("<task_information>\nShift Cipher\n</task_information>"));
    }

    #[test]
    fn zcot_keeps_no_code_note() {
        let slots = SlotValues::new("", "").with_instruction("X").with_question("Q");
        let p = render(TemplateKind::InferenceZCoT, &slots).unwrap();
        assert!(p.text.contains("Do not use programming or code"));
        assert!(p.text.starts_with("[Task Instruction]\nX\n"));
    }

    #[test]
    fn scot_asks_for_strategy_first() {
        let slots = SlotValues::new("", "fmt").with_instruction("X").with_question("Q");
        let p = render(TemplateKind::InferenceSCoT, &slots).unwrap();
        assert!(p.text.contains("generate the strategic knowledge"));
        let strategy = p.text.find("<strategy>").unwrap();
        let deduction = p.text.find("<deduction>").unwrap();
        assert!(strategy < deduction);
    }

    #[test]
    fn render_is_pure() {
        let slots = SlotValues::new("d", "f").with_examples("E");
        let a = render(TemplateKind::StrategyInduction, &slots).unwrap();
        let b = render(TemplateKind::StrategyInduction, &slots).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_slots_are_named() {
        let slots = SlotValues::new("d", "f");
        assert_eq!(
            render(TemplateKind::StrategyDesign, &slots),
            Err(TemplateError::MissingSlot(Slot::Question))
        );
        assert_eq!(
            render(TemplateKind::InductBaseline, &slots),
            Err(TemplateError::MissingSlot(Slot::Examples))
        );
        assert_eq!(
            render(TemplateKind::InferenceInduced, &slots.clone().with_question("q")),
            Err(TemplateError::MissingSlot(Slot::Instruction))
        );
    }

    #[test]
    fn empty_short_phrase_keeps_block() {
        let slots = SlotValues::new("", "f").with_question("q");
        let p = render(TemplateKind::StrategyDesign, &slots).unwrap();
        assert!(p.text.contains("<task_information>\n\n</task_information>"));
    }

    #[test]
    fn braces_inside_slot_values_are_not_markers() {
        let slots = SlotValues::new("{}", "{ }").with_question("{x}");
        let p = render(TemplateKind::StrategyDesign, &slots).unwrap();
        assert!(p.text.contains("<question>\n{x}\n</question>"));
        assert!(p.text.contains("<answer_format>\n{ }\n</answer_format>"));
    }

    #[test]
    fn placeholder_braces_in_induction_templates_are_literal() {
        let set = TemplateSet::builtin();
        for kind in [TemplateKind::InductBaseline, TemplateKind::StrategyInduction] {
            assert!(set
                .text(kind)
                .contains("{Your task instruction here, with each element under its own subheading}"));
        }
    }

    #[test]
    fn every_builtin_template_has_mapped_marker_count() {
        let set = TemplateSet::builtin();
        for kind in TemplateKind::ALL {
            set.check_markers(kind).unwrap();
        }
    }

    #[test]
    fn crlf_templates_are_normalized() {
        let dir = tempfile::tempdir().unwrap();
        for kind in TemplateKind::ALL {
            let text = TemplateSet::builtin().text(kind).replace('\n', "\r\n");
            std::fs::write(dir.path().join(kind.file_name()), text).unwrap();
        }
        let loaded = TemplateSet::load(dir.path()).unwrap();
        for kind in TemplateKind::ALL {
            assert_eq!(loaded.text(kind), TemplateSet::builtin().text(kind));
        }
    }

    #[test]
    fn extra_marker_in_loaded_template_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for kind in TemplateKind::ALL {
            let mut text = TemplateSet::builtin().text(kind).to_string();
            if kind == TemplateKind::InferenceZCoT {
                text.push_str("{}\n");
            }
            std::fs::write(dir.path().join(kind.file_name()), text).unwrap();
        }
        let err = TemplateSet::load(dir.path()).unwrap_err();
        assert!(matches!(
            err,
            TemplateError::UnfilledSlot { kind: TemplateKind::InferenceZCoT, markers: 4, expected: 3 }
        ));
    }

    #[test]
    fn serialize_single_pair() {
        let s = serialize_pairs(&[pair("Q1", "S1")]).unwrap();
        assert_eq!(s, "Question 1:\nQ1\nStrategy 1:\nS1");
        assert!(s.find("Q1").unwrap() < s.find("S1").unwrap());
    }

    #[test]
    fn serialize_preserves_order() {
        let s = serialize_pairs(&[pair("qa", "sa"), pair("qb", "sb"), pair("qc", "sc")]).unwrap();
        let a = s.find("qa").unwrap();
        let b = s.find("qb").unwrap();
        let c = s.find("qc").unwrap();
        assert!(a < b && b < c);
        assert_eq!(s.matches("Strategy ").count(), 3);
    }

    #[test]
    fn serialize_multiline_strategy_round_trips() {
        let pairs = vec![
            pair("(A) yes\n(B) no", "Step 1: read\n\nStep 2: decide\n"),
            pair("q2", "  indented\n\tline\n"),
        ];
        let s = serialize_pairs(&pairs).unwrap();
        let parsed = parse_pairs(&s, pairs.len());
        for (p, (q, st)) in pairs.iter().zip(parsed) {
            assert_eq!(p.question, q);
            assert_eq!(p.strategy, st);
        }
    }

    #[test]
    fn serialize_empty_is_error() {
        assert_eq!(serialize_pairs(&[]), Err(TemplateError::EmptyPairs));
        assert_eq!(serialize_questions::<&str>(&[]), Err(TemplateError::EmptyPairs));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kind_with_question() -> impl Strategy<Value = TemplateKind> {
            prop::sample::select(vec![
                TemplateKind::StrategyDesign,
                TemplateKind::InferenceZCoT,
                TemplateKind::InferenceSCoT,
                TemplateKind::InferenceInduced,
            ])
        }

        fn slots_for(kind: TemplateKind, d: &str, f: &str, q: &str, x: &str) -> SlotValues {
            let base = SlotValues::new(d, f);
            match kind {
                TemplateKind::InductBaseline | TemplateKind::StrategyInduction => base.with_examples(x),
                TemplateKind::StrategyDesign => base.with_question(q),
                _ => base.with_instruction(x).with_question(q),
            }
        }

        proptest! {
            #[test]
            fn injective_in_question(kind in kind_with_question(), q1 in ".{0,40}", q2 in ".{0,40}") {
                prop_assume!(q1 != q2);
                let a = render(kind, &slots_for(kind, "d", "f", &q1, "x")).unwrap();
                let b = render(kind, &slots_for(kind, "d", "f", &q2, "x")).unwrap();
                prop_assert_ne!(a.text, b.text);
            }

            #[test]
            fn slot_values_appear_verbatim(
                k in 0usize..6, d in ".{0,30}", f in ".{0,30}", q in ".{0,30}", x in ".{0,30}"
            ) {
                let kind = TemplateKind::ALL[k];
                let p = render(kind, &slots_for(kind, &d, &f, &q, &x)).unwrap();
                prop_assert!(p.text.contains(&f));
                match kind {
                    TemplateKind::InductBaseline | TemplateKind::StrategyInduction => {
                        prop_assert!(p.text.contains(&d));
                        prop_assert!(p.text.contains(&x));
                    }
                    TemplateKind::StrategyDesign => {
                        prop_assert!(p.text.contains(&d));
                        prop_assert!(p.text.contains(&q));
                    }
                    _ => {
                        prop_assert!(p.text.contains(&x));
                        prop_assert!(p.text.contains(&q));
                    }
                }
            }
        }
    }
}
