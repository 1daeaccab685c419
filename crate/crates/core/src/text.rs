//! Rule-based tokenization: lowercase, split punctuation, collapse whitespace.

use alloc::string::String;
use alloc::vec::Vec;

/// Deterministic tokenizer used for reviews and questions alike.
///
/// Alphanumeric runs become one token; every other non-whitespace character
/// becomes its own single-character token. Everything is lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut out, &mut current);
        } else if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else {
            flush(&mut out, &mut current);
            let mut tok = String::new();
            for lc in ch.to_lowercase() {
                tok.push(lc);
            }
            out.push(tok);
        }
    }
    flush(&mut out, &mut current);
    out
}

fn flush(out: &mut Vec<String>, current: &mut String) {
    if !current.is_empty() {
        out.push(core::mem::take(current));
    }
}

/// Bump when tokenizer rules change; recorded in shard headers.
pub const TOKENIZER_VERSION: &str = "1";
