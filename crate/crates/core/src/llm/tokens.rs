//! Token counting for usage accounting and cost estimates.

use std::collections::HashMap;
use std::path::Path;

use base64::Engine;
use regex::Regex;

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Whether counts come from a real tokenizer rather than an estimate.
    fn is_exact(&self) -> bool;
}

/// Approximate count: one token per four characters, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharHeuristic;

impl TokenCounter for CharHeuristic {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }

    fn is_exact(&self) -> bool {
        false
    }
}

pub fn count_tokens(text: &str, tokenizer: &dyn TokenCounter) -> usize {
    tokenizer.count(text)
}

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("ranks line {line}: {message}")]
    Ranks { line: usize, message: String },
    #[error("byte {0:#04x} has no rank; every single byte must be in the vocabulary")]
    MissingByte(u8),
    #[error("bad split pattern: {0}")]
    Pattern(#[from] regex::Error),
}

/// Byte-pair-encoding counter reading tiktoken's ranks format: one
/// `<base64 token> <rank>` per line.
#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    ranks: HashMap<Vec<u8>, u32>,
    split: Regex,
}

/// Pre-tokenization pattern in the style of GPT-2 (contractions, letter
/// runs, digit runs, punctuation runs, whitespace).
pub const DEFAULT_SPLIT_PATTERN: &str =
    r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+";

impl BpeTokenizer {
    pub fn new(ranks: HashMap<Vec<u8>, u32>, pattern: &str) -> Result<Self, TokenizerError> {
        for b in 0..=255u8 {
            if !ranks.contains_key(&[b][..]) {
                return Err(TokenizerError::MissingByte(b));
            }
        }
        Ok(BpeTokenizer {
            ranks,
            split: Regex::new(pattern)?,
        })
    }

    pub fn from_ranks_str(ranks: &str, pattern: &str) -> Result<Self, TokenizerError> {
        let engine = base64::engine::general_purpose::STANDARD;
        let mut map = HashMap::new();
        for (i, line) in ranks.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| TokenizerError::Ranks {
                line: i + 1,
                message: m.to_string(),
            };
            let (tok, rank) = line.split_once(' ').ok_or_else(|| bad("expected `<token> <rank>`"))?;
            let tok = engine.decode(tok).map_err(|e| bad(&e.to_string()))?;
            let rank: u32 = rank.trim().parse().map_err(|_| bad("rank is not an integer"))?;
            map.insert(tok, rank);
        }
        Self::new(map, pattern)
    }

    pub fn from_file(path: &Path, pattern: &str) -> Result<Self, TokenizerError> {
        Self::from_ranks_str(&std::fs::read_to_string(path)?, pattern)
    }

    fn piece_count(&self, piece: &[u8]) -> usize {
        if self.ranks.contains_key(piece) {
            return 1;
        }
        // Boundaries between current parts; merge the lowest-ranked adjacent
        // pair (leftmost on ties) until no adjacent pair is in the vocabulary.
        let mut bounds: Vec<usize> = (0..=piece.len()).collect();
        while bounds.len() > 2 {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..bounds.len() - 2 {
                if let Some(&r) = self.ranks.get(&piece[bounds[i]..bounds[i + 2]]) {
                    if best.is_none_or(|(b, _)| r < b) {
                        best = Some((r, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    bounds.remove(i + 1);
                }
                None => break,
            }
        }
        bounds.len() - 1
    }
}

impl TokenCounter for BpeTokenizer {
    fn count(&self, text: &str) -> usize {
        self.split
            .find_iter(text)
            .map(|m| self.piece_count(m.as_str().as_bytes()))
            .sum()
    }

    fn is_exact(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heuristic_cases() {
        assert_eq!(count_tokens("", &CharHeuristic), 0);
        assert_eq!(count_tokens(&"a".repeat(400), &CharHeuristic), 100);
        assert_eq!(count_tokens("abcde", &CharHeuristic), 2);
        assert!(!CharHeuristic.is_exact());
    }

    fn byte_ranks() -> HashMap<Vec<u8>, u32> {
        (0..=255u8).map(|b| (vec![b], b as u32)).collect()
    }

    #[test]
    fn merges_follow_rank_order() {
        let mut ranks = byte_ranks();
        ranks.insert(b"ab".to_vec(), 256);
        ranks.insert(b"abc".to_vec(), 257);
        let t = BpeTokenizer::new(ranks, DEFAULT_SPLIT_PATTERN).unwrap();
        assert_eq!(t.count("abc"), 1);
        assert_eq!(t.count("abcab"), 2);
        assert_eq!(t.count("ab abc"), 3); // "ab", " " + "abc" -> " ", "abc"
        assert_eq!(t.count(""), 0);
    }

    #[test]
    fn missing_byte_rejected() {
        let mut ranks = byte_ranks();
        ranks.remove(&vec![7u8]);
        assert!(matches!(
            BpeTokenizer::new(ranks, DEFAULT_SPLIT_PATTERN),
            Err(TokenizerError::MissingByte(7))
        ));
    }
}
