//! Noun-phrase snippet extraction.
//!
//! A transparent pattern chunker over a small lexicon stands in for a full
//! statistical tagger: snippets are maximal non-overlapping `(ADJ|NOUN)* NOUN`
//! spans, scanned left to right.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Coarse part-of-speech classes the chunker distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosTag {
    Noun,
    Adj,
    Verb,
    Other,
}

impl PosTag {
    pub fn parse(s: &str) -> Option<PosTag> {
        match s {
            "NOUN" => Some(PosTag::Noun),
            "ADJ" => Some(PosTag::Adj),
            "VERB" => Some(PosTag::Verb),
            "OTHER" => Some(PosTag::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Adj => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Other => "OTHER",
        }
    }
}

/// Word list plus ordered suffix fallbacks. Lookup is exact word first,
/// then the longest matching suffix, then [`PosTag::Other`].
#[derive(Clone, Debug, Default)]
pub struct PosLexicon {
    word_to_tag: BTreeMap<String, PosTag>,
    suffix_rules: Vec<(String, PosTag)>,
}

impl PosLexicon {
    pub fn new(
        words: impl IntoIterator<Item = (String, PosTag)>,
        suffixes: impl IntoIterator<Item = (String, PosTag)>,
    ) -> Self {
        PosLexicon {
            word_to_tag: words.into_iter().collect(),
            suffix_rules: suffixes.into_iter().collect(),
        }
    }

    pub fn word_count(&self) -> usize {
        self.word_to_tag.len()
    }

    pub fn tag_token(&self, token: &str) -> PosTag {
        if let Some(&tag) = self.word_to_tag.get(token) {
            return tag;
        }
        let mut best: Option<(usize, PosTag)> = None;
        for (suffix, tag) in &self.suffix_rules {
            if token.len() > suffix.len() && token.ends_with(suffix.as_str()) {
                let better = match best {
                    Some((len, _)) => suffix.len() > len,
                    None => true,
                };
                if better {
                    best = Some((suffix.len(), *tag));
                }
            }
        }
        best.map(|(_, t)| t).unwrap_or(PosTag::Other)
    }
}

/// One tag per token.
pub fn tag(tokens: &[String], lexicon: &PosLexicon) -> Vec<PosTag> {
    tokens.iter().map(|t| lexicon.tag_token(t)).collect()
}

/// A contiguous aspect span extracted from a review or question.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snippet {
    pub tokens: Vec<String>,
}

pub const MAX_SNIPPET_TOKENS: usize = 20;

/// Maximal non-overlapping `(ADJ|NOUN)* NOUN` matches in text order,
/// deduplicated keeping the first occurrence, at most `max_snippets`.
pub fn extract_snippets(
    tokens: &[String],
    lexicon: &PosLexicon,
    max_snippets: usize,
) -> Vec<Snippet> {
    assert!(max_snippets >= 1, "max_snippets must be at least 1");
    let tags = tag(tokens, lexicon);
    let mut found: Vec<Snippet> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !matches!(tags[i], PosTag::Noun | PosTag::Adj) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < tokens.len() && matches!(tags[j], PosTag::Noun | PosTag::Adj) {
            j += 1;
        }
        // Trim the run to end at its last noun; adjective-only runs match
        // nothing.
        let span_end = j.min(i + MAX_SNIPPET_TOKENS);
        let last_noun = (i..span_end)
            .rev()
            .find(|&k| tags[k] == PosTag::Noun);
        if let Some(end) = last_noun {
            let snippet = Snippet {
                tokens: tokens[i..=end].to_vec(),
            };
            if !found.contains(&snippet) {
                found.push(snippet);
            }
        }
        i = j;
    }
    found.truncate(max_snippets);
    found
}

/// Flatten snippets into one token list under a total token budget,
/// preserving text order; a snippet that would cross the budget is dropped.
pub fn flatten_with_budget(snippets: &[Snippet], budget: usize) -> Vec<String> {
    let mut out = Vec::new();
    for s in snippets {
        if out.len() + s.tokens.len() > budget {
            continue;
        }
        out.extend(s.tokens.iter().map(|t| t.to_string()));
    }
    out
}
