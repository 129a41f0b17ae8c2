//! Character vocabulary with a trailing CTC blank.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Ordered character set; the blank symbol is implicit and always the last
/// class index, so a model over this vocabulary emits `symbols.len() + 1`
/// classes.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        let mut index = HashMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Config(format!(
                    "duplicate symbol {c:?} in vocabulary"
                )));
            }
        }
        if chars.is_empty() {
            return Err(Error::Config("vocabulary must not be empty".into()));
        }
        Ok(Vocabulary {
            symbols: chars,
            index,
        })
    }

    /// Lowercase letters, space and apostrophe: 28 symbols, 29 classes.
    pub fn english() -> Self {
        Self::new("abcdefghijklmnopqrstuvwxyz '").expect("static vocabulary is valid")
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbols_string(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn blank_index(&self) -> usize {
        self.symbols.len()
    }

    /// Class count including the blank.
    pub fn size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn space_index(&self) -> Option<usize> {
        self.index.get(&' ').copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.index.get(&c).copied().ok_or_else(|| {
                    Error::Data(format!("character {c:?} is not in the vocabulary"))
                })
            })
            .collect()
    }

    /// Render symbol indices as text; blanks are skipped.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| self.symbols.get(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_vocabulary_layout() {
        let v = Vocabulary::english();
        assert_eq!(v.size(), 29);
        assert_eq!(v.blank_index(), 28);
        assert_eq!(v.space_index(), Some(26));
    }

    #[test]
    fn encode_apostrophe_text() {
        let v = Vocabulary::english();
        assert_eq!(v.encode("don't stop").unwrap().len(), 10);
    }

    #[test]
    fn unencodable_character_is_data_error() {
        let v = Vocabulary::english();
        assert!(matches!(v.encode("über"), Err(Error::Data(_))));
    }

    #[test]
    fn duplicate_symbols_rejected() {
        assert!(Vocabulary::new("abca").is_err());
    }

    #[test]
    fn roundtrip() {
        let v = Vocabulary::english();
        let ids = v.encode("hello world").unwrap();
        assert_eq!(v.decode(&ids), "hello world");
    }
}
