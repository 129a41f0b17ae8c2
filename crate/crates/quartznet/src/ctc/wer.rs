//! Word and character error rates via Levenshtein alignment.

/// Edit distance breakdown between a reference and a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditStats {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_len: usize,
    /// distance / max(1, reference_len); multiply by 100 for percent.
    pub rate: f64,
}

fn edit_stats<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let r = reference.len();
    let h = hypothesis.len();
    let cols = h + 1;
    let mut dp = vec![0usize; (r + 1) * cols];
    for (j, cell) in dp.iter_mut().take(h + 1).enumerate() {
        *cell = j;
    }
    for i in 1..=r {
        dp[i * cols] = i;
        for j in 1..=h {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[(i - 1) * cols + j - 1] + sub_cost;
            let del = dp[(i - 1) * cols + j] + 1;
            let ins = dp[i * cols + j - 1] + 1;
            dp[i * cols + j] = diag.min(del).min(ins);
        }
    }

    // Backtrace one optimal alignment to split the distance into S/I/D.
    let (mut i, mut j) = (r, h);
    let (mut subs, mut ins, mut dels) = (0usize, 0usize, 0usize);
    while i > 0 || j > 0 {
        let cur = dp[i * cols + j];
        if i > 0 && j > 0 {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[(i - 1) * cols + j - 1] + sub_cost == cur {
                subs += sub_cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * cols + j] + 1 == cur {
            dels += 1;
            i -= 1;
            continue;
        }
        ins += 1;
        j -= 1;
    }

    let distance = dp[r * cols + h];
    debug_assert_eq!(distance, subs + ins + dels);
    EditStats {
        distance,
        substitutions: subs,
        insertions: ins,
        deletions: dels,
        reference_len: r,
        rate: distance as f64 / r.max(1) as f64,
    }
}

/// Word error rate over whitespace-tokenized words, uniform edit costs.
pub fn word_error_rate(reference: &str, hypothesis: &str) -> EditStats {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    edit_stats(&r, &h)
}

/// Character error rate (whitespace included as characters).
pub fn char_error_rate(reference: &str, hypothesis: &str) -> EditStats {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    edit_stats(&r, &h)
}
