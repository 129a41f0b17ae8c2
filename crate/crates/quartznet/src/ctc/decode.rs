//! Greedy and prefix beam-search CTC decoding with optional shallow n-gram
//! fusion.
//!
//! The beam search tracks per-prefix blank / non-blank log masses so that
//! all paths collapsing to the same text merge. Two pruning rules apply per
//! frame: only the `beam_width` most probable classes are considered as
//! extensions, and the surviving prefixes are cut back to `beam_width` by
//! accumulated mass. With `beam_width = 1` this reduces exactly to greedy
//! decoding; with an exhaustive width it computes exact labeling
//! probabilities.
//!
//! Language model fusion is shallow: completed words (space-delimited)
//! contribute `alpha * log P_lm` plus a `beta` bonus per word, and an
//! end-of-utterance closure scores the final partial word before ranking.

use std::collections::HashMap;

use super::arpa::NGramLM;
use super::loss::LOG_ZERO;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

const LN_10: f64 = std::f64::consts::LN_10;

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Language model weight on `ln P_lm`.
    pub alpha: f64,
    /// Word insertion bonus per completed word.
    pub beta: f64,
}

impl Default for BeamConfig {
    /// The standard 4-gram fusion operating point.
    fn default() -> Self {
        BeamConfig {
            beam_width: 2048,
            alpha: 3.5,
            beta: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub text: String,
    /// Combined score: acoustic log mass + alpha * ln P_lm + beta * words.
    pub score: f64,
    pub acoustic: f64,
    pub lm_log10: f64,
    pub words: usize,
}

/// Collapse a frame-level class path: merge adjacent repeats, drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &v in path {
        if v != prev && v != blank {
            out.push(v);
        }
        prev = v;
    }
    out
}

/// Per-frame argmax path, collapsed and rendered as text.
pub fn greedy_decode(log_probs: &[f64], frames: usize, vocab: &Vocabulary) -> String {
    let classes = vocab.size();
    debug_assert_eq!(log_probs.len(), frames * classes);
    let path: Vec<usize> = (0..frames)
        .map(|t| {
            let row = &log_probs[t * classes..(t + 1) * classes];
            let mut best = 0usize;
            for (v, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = v;
                }
            }
            best
        })
        .collect();
    vocab.decode(&collapse(&path, vocab.blank_index()))
}

fn lse2(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO && b <= LOG_ZERO {
        return LOG_ZERO;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Word-level LM state carried by each prefix.
#[derive(Debug, Clone, Default)]
struct LmState {
    /// Completed words so far (the context window is truncated on query).
    context: Vec<String>,
    partial: String,
    lm_log10: f64,
    words: usize,
}

impl LmState {
    fn extend(&self, ch: char, space: Option<char>, lm: Option<&NGramLM>) -> LmState {
        let mut next = self.clone();
        if Some(ch) == space {
            if !next.partial.is_empty() {
                if let Some(lm) = lm {
                    let ctx: Vec<&str> = next.context.iter().map(|s| s.as_str()).collect();
                    next.lm_log10 += lm.log10_prob(&ctx, &next.partial);
                }
                let word = std::mem::take(&mut next.partial);
                next.context.push(word);
                next.words += 1;
            }
        } else {
            next.partial.push(ch);
        }
        next
    }

    /// Close the utterance: score the trailing partial word.
    fn closed(&self, lm: Option<&NGramLM>) -> (f64, usize) {
        if self.partial.is_empty() {
            return (self.lm_log10, self.words);
        }
        let mut lm_log10 = self.lm_log10;
        if let Some(lm) = lm {
            let ctx: Vec<&str> = self.context.iter().map(|s| s.as_str()).collect();
            lm_log10 += lm.log10_prob(&ctx, &self.partial);
        }
        (lm_log10, self.words + 1)
    }
}

struct Prefix {
    syms: Vec<usize>,
    p_blank: f64,
    p_non_blank: f64,
    lm: LmState,
}

impl Prefix {
    fn mass(&self) -> f64 {
        lse2(self.p_blank, self.p_non_blank)
    }
}

/// Prefix beam search over a `[frames, classes]` log-probability grid.
///
/// Returns hypotheses ranked by combined score, best first, at most
/// `beam_width` of them. With `lm = None` the alpha term vanishes and the
/// search is acoustic-only (plus the word bonus).
pub fn beam_search(
    log_probs: &[f64],
    frames: usize,
    vocab: &Vocabulary,
    lm: Option<&NGramLM>,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis>> {
    if cfg.beam_width == 0 {
        return Err(Error::Config("beam_width must be >= 1".into()));
    }
    let classes = vocab.size();
    if log_probs.len() != frames * classes {
        return Err(Error::Shape(format!(
            "log_probs has {} values, expected {} x {}",
            log_probs.len(),
            frames,
            classes
        )));
    }
    let blank = vocab.blank_index();
    let space = vocab.space_index().map(|i| vocab.symbols()[i]);

    let fused = |mass: f64, lm_log10: f64, words: usize| -> f64 {
        let lm_term = if lm.is_some() {
            cfg.alpha * lm_log10 * LN_10
        } else {
            0.0
        };
        mass + lm_term + cfg.beta * words as f64
    };

    let mut beam: Vec<Prefix> = vec![Prefix {
        syms: Vec::new(),
        p_blank: 0.0,
        p_non_blank: LOG_ZERO,
        lm: LmState::default(),
    }];

    for t in 0..frames {
        let row = &log_probs[t * classes..(t + 1) * classes];
        // Per-frame class pruning: the beam_width most probable classes.
        let mut cand: Vec<usize> = (0..classes).collect();
        cand.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        cand.truncate(cfg.beam_width.min(classes));

        let mut next: Vec<Prefix> = Vec::new();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();

        fn entry(
            next: &mut Vec<Prefix>,
            index: &mut HashMap<Vec<usize>, usize>,
            syms: &[usize],
            lm_state: &LmState,
        ) -> usize {
            match index.get(syms) {
                Some(&i) => i,
                None => {
                    next.push(Prefix {
                        syms: syms.to_vec(),
                        p_blank: LOG_ZERO,
                        p_non_blank: LOG_ZERO,
                        lm: lm_state.clone(),
                    });
                    index.insert(syms.to_vec(), next.len() - 1);
                    next.len() - 1
                }
            }
        }

        for p in &beam {
            let last = p.syms.last().copied();
            for &c in &cand {
                let lp = row[c];
                if c == blank {
                    let i = entry(&mut next, &mut index, &p.syms, &p.lm);
                    next[i].p_blank = lse2(next[i].p_blank, p.mass() + lp);
                } else if Some(c) == last {
                    // Repeat without a separating blank keeps the prefix.
                    let i = entry(&mut next, &mut index, &p.syms, &p.lm);
                    next[i].p_non_blank = lse2(next[i].p_non_blank, p.p_non_blank + lp);
                    // A blank in between extends it.
                    let mut ext = p.syms.clone();
                    ext.push(c);
                    let lm_state = p.lm.extend(vocab.symbols()[c], space, lm);
                    let j = entry(&mut next, &mut index, &ext, &lm_state);
                    next[j].p_non_blank = lse2(next[j].p_non_blank, p.p_blank + lp);
                } else {
                    let mut ext = p.syms.clone();
                    ext.push(c);
                    let lm_state = p.lm.extend(vocab.symbols()[c], space, lm);
                    let i = entry(&mut next, &mut index, &ext, &lm_state);
                    next[i].p_non_blank = lse2(next[i].p_non_blank, p.mass() + lp);
                }
            }
        }

        // Prune to beam_width by fused score; ties break lexicographically
        // so the search is deterministic.
        next.sort_by(|a, b| {
            let sa = fused(a.mass(), a.lm.lm_log10, a.lm.words);
            let sb = fused(b.mass(), b.lm.lm_log10, b.lm.words);
            sb.partial_cmp(&sa).unwrap().then(a.syms.cmp(&b.syms))
        });
        next.truncate(cfg.beam_width);
        beam = next;
    }

    let mut hyps: Vec<Hypothesis> = beam
        .iter()
        .map(|p| {
            let (lm_log10, words) = p.lm.closed(lm);
            Hypothesis {
                text: vocab.decode(&p.syms),
                score: fused(p.mass(), lm_log10, words),
                acoustic: p.mass(),
                lm_log10,
                words,
            }
        })
        .collect();
    hyps.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.text.cmp(&b.text))
    });
    Ok(hyps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn vocab3() -> Vocabulary {
        // two symbols + blank
        Vocabulary::new("ab").unwrap()
    }

    fn frames_from_path(path: &[usize], classes: usize) -> Vec<f64> {
        let mut out = vec![LOG_ZERO; path.len() * classes];
        for (t, &v) in path.iter().enumerate() {
            out[t * classes + v] = 0.0;
        }
        out
    }

    fn random_rows(rng: &mut Rng, frames: usize, classes: usize) -> Vec<f64> {
        let mut out = vec![0.0; frames * classes];
        for t in 0..frames {
            let logits: Vec<f64> = (0..classes).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for (v, &l) in logits.iter().enumerate() {
                out[t * classes + v] = l - mx - z.ln();
            }
        }
        out
    }

    #[test]
    fn greedy_collapse_examples() {
        let v = vocab3();
        let blank = v.blank_index();
        // [a, a, blank, a, b] -> "aab"
        let lp = frames_from_path(&[0, 0, blank, 0, 1], v.size());
        assert_eq!(greedy_decode(&lp, 5, &v), "aab");
        // all blank -> ""
        let lp = frames_from_path(&[blank; 3], v.size());
        assert_eq!(greedy_decode(&lp, 3, &v), "");
        // [a, blank, a] -> "aa"
        let lp = frames_from_path(&[0, blank, 0], v.size());
        assert_eq!(greedy_decode(&lp, 3, &v), "aa");
    }

    #[test]
    fn greedy_is_idempotent_under_recollapse() {
        let v = vocab3();
        let blank = v.blank_index();
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let frames = 1 + rng.below(12);
            let lp = random_rows(&mut rng, frames, v.size());
            let text = greedy_decode(&lp, frames, &v);
            // Render the decoded text as frames (blank between repeats).
            let ids = v.encode(&text).unwrap();
            let mut path = Vec::new();
            let mut prev = usize::MAX;
            for id in ids {
                if id == prev {
                    path.push(blank);
                }
                path.push(id);
                prev = id;
            }
            if path.is_empty() {
                path.push(blank);
            }
            let lp2 = frames_from_path(&path, v.size());
            assert_eq!(greedy_decode(&lp2, path.len(), &v), text);
        }
    }

    #[test]
    fn beam_width_one_equals_greedy_on_random_lattices() {
        let v = vocab3();
        let mut rng = Rng::new(0xbea);
        let cfg = BeamConfig {
            beam_width: 1,
            alpha: 0.0,
            beta: 0.0,
        };
        for case in 0..100 {
            let frames = 1 + rng.below(20);
            let lp = random_rows(&mut rng, frames, v.size());
            let greedy = greedy_decode(&lp, frames, &v);
            let beam = beam_search(&lp, frames, &v, None, &cfg).unwrap();
            assert_eq!(beam[0].text, greedy, "case {case}");
        }
    }

    #[test]
    fn exhaustive_beam_matches_enumeration_argmax() {
        let v = vocab3();
        let blank = v.blank_index();
        let classes = v.size();
        let mut rng = Rng::new(0xdec0de);
        let cfg = BeamConfig {
            beam_width: 27,
            alpha: 0.0,
            beta: 0.0,
        };
        for case in 0..50 {
            let frames = 3;
            let lp = random_rows(&mut rng, frames, classes);
            // Oracle: group all 27 paths by their collapsed labeling and sum.
            let mut labelings: HashMap<Vec<usize>, f64> = HashMap::new();
            for code in 0..classes.pow(frames as u32) {
                let mut c = code;
                let mut logp = 0.0;
                let mut path = Vec::new();
                for t in 0..frames {
                    let s = c % classes;
                    c /= classes;
                    logp += lp[t * classes + s];
                    path.push(s);
                }
                let lab = collapse(&path, blank);
                let cur = labelings.get(&lab).copied().unwrap_or(LOG_ZERO);
                labelings.insert(lab, lse2(cur, logp));
            }
            let (best_lab, best_mass) = labelings
                .iter()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
                .unwrap();
            let beam = beam_search(&lp, frames, &v, None, &cfg).unwrap();
            assert_eq!(beam[0].text, v.decode(best_lab), "case {case}");
            assert!(
                (beam[0].acoustic - best_mass).abs() < 1e-9,
                "case {case}: mass mismatch"
            );
        }
    }

    #[test]
    fn scores_are_monotone_in_rank() {
        let v = vocab3();
        let mut rng = Rng::new(4);
        let lp = random_rows(&mut rng, 8, v.size());
        let cfg = BeamConfig {
            beam_width: 8,
            alpha: 0.0,
            beta: 0.0,
        };
        let hyps = beam_search(&lp, 8, &v, None, &cfg).unwrap();
        for w in hyps.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn zero_weights_match_no_lm_ranking() {
        // With alpha = beta = 0 the ranking must be identical with any LM.
        let v = Vocabulary::new("ab ").unwrap();
        let mut rng = Rng::new(5);
        let lp = random_rows(&mut rng, 10, v.size());
        let arpa = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.5\ta\n-0.7\tb\n-0.9\t<unk>\n\n\\end\\\n";
        let lm = NGramLM::parse_str(arpa).unwrap();
        let cfg = BeamConfig {
            beam_width: 6,
            alpha: 0.0,
            beta: 0.0,
        };
        let with = beam_search(&lp, 10, &v, Some(&lm), &cfg).unwrap();
        let without = beam_search(&lp, 10, &v, None, &cfg).unwrap();
        let texts_a: Vec<&str> = with.iter().map(|h| h.text.as_str()).collect();
        let texts_b: Vec<&str> = without.iter().map(|h| h.text.as_str()).collect();
        assert_eq!(texts_a, texts_b);
    }
}
