//! Backoff n-gram language model loaded from ARPA text.
//!
//! Probabilities and backoff weights are stored as log10, exactly as the
//! format specifies. Queries use the standard recursive backoff rule: if
//! `(context, word)` is absent, score `backoff(context) + P(word | shorter
//! context)`, where a missing backoff entry contributes 0.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const UNK: &str = "<unk>";
/// log10 probability for out-of-vocabulary words when the model has no
/// `<unk>` entry.
const OOV_FLOOR_LOG10: f64 = -99.0;

#[derive(Debug, Clone, Copy)]
struct Entry {
    log10_prob: f64,
    backoff: f64,
}

#[derive(Debug)]
pub struct NGramLM {
    order: usize,
    vocab: HashMap<String, u32>,
    /// tables[n-1]: n-gram token-id sequence -> (log10 prob, backoff weight).
    tables: Vec<HashMap<Vec<u32>, Entry>>,
    unk: Option<u32>,
}

impl NGramLM {
    pub fn load_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Format(format!(
                "cannot read ARPA file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut counts: Vec<usize> = Vec::new();
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut tables: Vec<HashMap<Vec<u32>, Entry>> = Vec::new();

        enum Section {
            Preamble,
            Data,
            Grams(usize),
            Done,
        }
        let mut section = Section::Preamble;
        let mut seen_in_section = 0usize;
        let mut section_line = 0usize;

        let err = |line_no: usize, msg: &str| -> Error {
            Error::Format(format!("line {line_no}: {msg}"))
        };

        let intern = |vocab: &mut HashMap<String, u32>, w: &str| -> u32 {
            if let Some(&id) = vocab.get(w) {
                return id;
            }
            let id = vocab.len() as u32;
            vocab.insert(w.to_string(), id);
            id
        };

        let close_section = |n: usize,
                             seen: usize,
                             counts: &[usize],
                             header_line: usize|
         -> Result<()> {
            let declared = counts.get(n - 1).copied().unwrap_or(0);
            if seen != declared {
                return Err(err(
                    header_line,
                    &format!("\\{n}-grams: declared {declared} entries, found {seen}"),
                ));
            }
            Ok(())
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end();
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }

            if trimmed == "\\data\\" {
                if !matches!(section, Section::Preamble) {
                    return Err(err(line_no, "unexpected \\data\\ section"));
                }
                section = Section::Data;
                continue;
            }
            if trimmed == "\\end\\" {
                if let Section::Grams(n) = section {
                    close_section(n, seen_in_section, &counts, section_line)?;
                } else {
                    return Err(err(line_no, "\\end\\ before any n-gram section"));
                }
                section = Section::Done;
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('\\') {
                if let Some(head) = rest.strip_suffix("-grams:") {
                    let n: usize = head
                        .parse()
                        .map_err(|_| err(line_no, &format!("bad section header {trimmed:?}")))?;
                    match section {
                        Section::Data => {}
                        Section::Grams(prev) => {
                            close_section(prev, seen_in_section, &counts, section_line)?;
                            if n != prev + 1 {
                                return Err(err(
                                    line_no,
                                    &format!("expected \\{}-grams: next", prev + 1),
                                ));
                            }
                        }
                        _ => return Err(err(line_no, "n-gram section before \\data\\")),
                    }
                    if n == 0 || n > counts.len() {
                        return Err(err(
                            line_no,
                            &format!("section \\{n}-grams: not declared in \\data\\"),
                        ));
                    }
                    while tables.len() < n {
                        tables.push(HashMap::new());
                    }
                    section = Section::Grams(n);
                    seen_in_section = 0;
                    section_line = line_no;
                    continue;
                }
            }

            match section {
                Section::Preamble => {
                    // Arbitrary comment text is allowed before \data\.
                }
                Section::Data => {
                    let rest = trimmed
                        .strip_prefix("ngram")
                        .ok_or_else(|| err(line_no, "expected `ngram N=count`"))?;
                    let (n_str, count_str) = rest
                        .split_once('=')
                        .ok_or_else(|| err(line_no, "expected `ngram N=count`"))?;
                    let n: usize = n_str
                        .trim()
                        .parse()
                        .map_err(|_| err(line_no, "bad n-gram order"))?;
                    let count: usize = count_str
                        .trim()
                        .parse()
                        .map_err(|_| err(line_no, "bad n-gram count"))?;
                    if n != counts.len() + 1 {
                        return Err(err(line_no, "n-gram orders must be declared in order"));
                    }
                    counts.push(count);
                }
                Section::Grams(n) => {
                    let fields: Vec<&str> = trimmed.split_whitespace().collect();
                    if fields.len() != n + 1 && fields.len() != n + 2 {
                        return Err(err(
                            line_no,
                            &format!(
                                "{n}-gram line needs {} or {} fields, found {}",
                                n + 1,
                                n + 2,
                                fields.len()
                            ),
                        ));
                    }
                    let log10_prob: f64 = fields[0]
                        .parse()
                        .map_err(|_| err(line_no, "bad log10 probability"))?;
                    if log10_prob > 0.0 {
                        return Err(err(line_no, "log10 probability must be <= 0"));
                    }
                    let backoff: f64 = if fields.len() == n + 2 {
                        fields[n + 1]
                            .parse()
                            .map_err(|_| err(line_no, "bad backoff weight"))?
                    } else {
                        0.0
                    };
                    let ids: Vec<u32> = fields[1..=n]
                        .iter()
                        .map(|w| intern(&mut vocab, w))
                        .collect();
                    tables[n - 1].insert(
                        ids,
                        Entry {
                            log10_prob,
                            backoff,
                        },
                    );
                    seen_in_section += 1;
                }
                Section::Done => {
                    return Err(err(line_no, "content after \\end\\"));
                }
            }
        }

        match section {
            Section::Done => {}
            Section::Preamble => return Err(Error::Format("no \\data\\ section found".into())),
            _ => return Err(Error::Format("missing \\end\\".into())),
        }
        if counts.is_empty() {
            return Err(Error::Format("\\data\\ declared no n-gram orders".into()));
        }

        let unk = vocab.get(UNK).copied();
        Ok(NGramLM {
            order: counts.len(),
            vocab,
            tables,
            unk,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains_key(word)
    }

    /// log10 P(word | context), applying backoff. Out-of-vocabulary words
    /// score as `<unk>` when the model has one, else a fixed floor.
    pub fn log10_prob(&self, context: &[&str], word: &str) -> f64 {
        let Some(w) = self.vocab.get(word).copied().or(self.unk) else {
            return OOV_FLOOR_LOG10;
        };
        // Unknown context words can never match a stored n-gram; a sentinel
        // id makes the query fall through to shorter contexts naturally.
        let ctx_ids: Vec<u32> = context
            .iter()
            .map(|c| self.vocab.get(*c).copied().unwrap_or(u32::MAX))
            .collect();
        let start = ctx_ids.len().saturating_sub(self.order - 1);
        self.backoff_query(&ctx_ids[start..], w)
    }

    fn backoff_query(&self, ctx: &[u32], w: u32) -> f64 {
        let n = ctx.len() + 1;
        if let Some(table) = self.tables.get(n - 1) {
            let mut key = Vec::with_capacity(n);
            key.extend_from_slice(ctx);
            key.push(w);
            if let Some(e) = table.get(&key) {
                return e.log10_prob;
            }
        }
        if ctx.is_empty() {
            // Every in-vocabulary word has a unigram in well-formed models;
            // fall back to <unk> or the floor if not.
            if let Some(unk) = self.unk {
                if w != unk {
                    return self.backoff_query(&[], unk);
                }
            }
            return OOV_FLOOR_LOG10;
        }
        let bow = self
            .tables
            .get(ctx.len() - 1)
            .and_then(|t| t.get(ctx))
            .map(|e| e.backoff)
            .unwrap_or(0.0);
        bow + self.backoff_query(&ctx[1..], w)
    }
}
