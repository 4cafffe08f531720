//! ROT-k shift cipher over lowercase ASCII words.

use std::path::Path;

use super::{DatasetError, QAItem, TaskSpec};
use crate::eval::MatchPolicy;

pub const CIPHER_TASK: &str = "Shift Cipher";
pub const CIPHER_SHORT_PHRASE: &str = "Shift Cipher";
pub const CIPHER_ANSWER_FORMAT: &str = "a single lowercase word";
pub const CIPHER_WORD_LEN: usize = 7;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("character {0:?} is outside a-z")]
    BadAlphabet(char),
    #[error("shift {0} is outside 1..=25")]
    BadShift(i64),
    #[error("word {word:?} must be {CIPHER_WORD_LEN} lowercase letters")]
    BadWordLength { word: String },
}

fn check_shift(k: i64) -> Result<u8, CipherError> {
    if (1..=25).contains(&k) {
        Ok(k as u8)
    } else {
        Err(CipherError::BadShift(k))
    }
}

fn shift_word(word: &str, by: u8) -> Result<String, CipherError> {
    word.chars()
        .map(|c| {
            if c.is_ascii_lowercase() {
                Ok((b'a' + (c as u8 - b'a' + by) % 26) as char)
            } else {
                Err(CipherError::BadAlphabet(c))
            }
        })
        .collect()
}

/// Shifts each letter forward by `k`, wrapping after `z`.
pub fn rot_encode(word: &str, k: i64) -> Result<String, CipherError> {
    let k = check_shift(k)?;
    shift_word(word, k)
}

/// Shifts each letter backward by `k`.
pub fn rot_decode(word: &str, k: i64) -> Result<String, CipherError> {
    let k = check_shift(k)?;
    shift_word(word, 26 - k)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherInstance {
    pub plaintext: String,
    pub k: i64,
    pub ciphertext: String,
}

impl CipherInstance {
    pub fn new(plaintext: &str, k: i64) -> Result<Self, CipherError> {
        if plaintext.len() != CIPHER_WORD_LEN || !plaintext.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(CipherError::BadWordLength {
                word: plaintext.to_string(),
            });
        }
        Ok(Self {
            plaintext: plaintext.to_string(),
            k,
            ciphertext: rot_encode(plaintext, k)?,
        })
    }
}

/// One task per shift, each holding every word as a ciphertext question.
pub fn build_cipher_tasks(words: &[String], ks: &[i64]) -> Result<Vec<TaskSpec>, CipherError> {
    for &k in ks {
        check_shift(k)?;
    }
    ks.iter()
        .map(|&k| {
            let items = words
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let inst = CipherInstance::new(w, k)?;
                    Ok(QAItem {
                        id: format!("rot{k:02}-{i:04}"),
                        question: inst.ciphertext,
                        gold: Some(inst.plaintext),
                    })
                })
                .collect::<Result<Vec<_>, CipherError>>()?;
            Ok(TaskSpec {
                task: CIPHER_TASK.to_string(),
                subtask: Some(format!("Shift Cipher \u{2013} ROT-{k}")),
                short_phrase: CIPHER_SHORT_PHRASE.to_string(),
                short_phrase_optional: false,
                answer_format: CIPHER_ANSWER_FORMAT.to_string(),
                match_policy: Some(MatchPolicy::ExactNormalized),
                items,
            })
        })
        .collect()
}

/// Reads one word per line; blank lines and `#` comments are skipped.
pub fn load_word_corpus(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_corpus(&text))
}

fn parse_corpus(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Small built-in corpus of seven-letter words.
pub fn default_corpus() -> Vec<String> {
    parse_corpus(include_str!("../../fixtures/words7.txt"))
}
