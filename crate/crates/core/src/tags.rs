//! Extraction of the tagged segments the templates ask models to emit.
//!
//! Matching is exact and case-sensitive. When a tag appears more than once
//! the last well-formed pair wins.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Strategy,
    TaskInstruction,
    Deduction,
    FinalAnswer,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Strategy, Tag::TaskInstruction, Tag::Deduction, Tag::FinalAnswer];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Strategy => "strategy",
            Tag::TaskInstruction => "task_instruction",
            Tag::Deduction => "deduction",
            Tag::FinalAnswer => "final_answer",
        }
    }

    pub fn open(self) -> String {
        format!("<{}>", self.name())
    }

    pub fn close(self) -> String {
        format!("</{}>", self.name())
    }
}

/// Trimmed content of the last well-formed `<tag>…</tag>` pair in `raw`.
///
/// A pair is well-formed when no other open or close tag of the same name
/// sits between its delimiters. Anything else yields `None`.
pub fn extract(raw: &str, tag: Tag) -> Option<String> {
    let open = tag.open();
    let close = tag.close();
    let mut search_end = raw.len();
    while let Some(close_at) = raw[..search_end].rfind(&close) {
        let open_at = raw[..close_at].rfind(&open)?;
        let body = &raw[open_at + open.len()..close_at];
        if !body.contains(&close) {
            return Some(body.trim().to_string());
        }
        search_end = close_at;
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedResponse {
    pub raw: String,
    pub strategy: Option<String>,
    pub task_instruction: Option<String>,
    pub deduction: Option<String>,
    pub final_answer: Option<String>,
}

pub fn parse_response(raw: &str) -> TaggedResponse {
    TaggedResponse {
        raw: raw.to_string(),
        strategy: extract(raw, Tag::Strategy),
        task_instruction: extract(raw, Tag::TaskInstruction),
        deduction: extract(raw, Tag::Deduction),
        final_answer: extract(raw, Tag::FinalAnswer),
    }
}
