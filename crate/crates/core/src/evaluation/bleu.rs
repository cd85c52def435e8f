use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
}

impl BleuScores {
    pub fn as_array(&self) -> [f64; 4] {
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4]
    }
}

/// Corpus-level counts behind the score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuStats {
    /// Clipped matches per order.
    pub matches: Vec<usize>,
    /// Hypothesis n-grams per order.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    /// Sum of closest reference lengths (shorter wins ties).
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu_stats(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>], max_n: usize) -> Result<BleuStats> {
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut stats = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: 0,
        ref_len: 0,
    };
    for (i, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(Error::Invalid(format!("hypothesis {i} has no references")));
        }
        stats.hyp_len += hyp.len();
        stats.ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty");
        for n in 1..=max_n {
            let h = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            stats.totals[n - 1] += h.values().sum::<usize>();
            stats.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    Ok(stats)
}

impl BleuStats {
    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Geometric mean of orders `1..=n` times the brevity penalty; no smoothing.
    pub fn score(&self, n: usize) -> f64 {
        let mut log_sum = 0.0;
        for k in 0..n {
            if self.matches[k] == 0 || self.totals[k] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[k] as f64 / self.totals[k] as f64).ln();
        }
        self.brevity_penalty() * (log_sum / n as f64).exp()
    }
}

/// Corpus BLEU-1 to BLEU-4 over pre-tokenized text.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<BleuScores> {
    let s = bleu_stats(hypotheses, references, 4)?;
    Ok(BleuScores {
        bleu1: s.score(1),
        bleu2: s.score(2),
        bleu3: s.score(3),
        bleu4: s.score(4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::words;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        words(s)
    }

    #[test]
    fn identical_corpus_scores_one() {
        let h = vec![toks("a man riding a horse on the beach"), toks("two dogs play")];
        let r: Vec<Vec<Vec<String>>> = h.iter().map(|x| vec![x.clone()]).collect();
        let s = bleu(&h, &r).unwrap();
        assert_eq!(s.as_array(), [1.0; 4]);
    }

    #[test]
    fn zero_overlap_is_zero() {
        let s = bleu(&[toks("a b c d")], &[vec![toks("e f g h")]]).unwrap();
        assert_eq!(s.bleu1, 0.0);
        // unigrams match but no bigram does
        let s = bleu(&[toks("a b c d")], &[vec![toks("d c b a")]]).unwrap();
        assert_eq!(s.bleu1, 1.0);
        assert_eq!(s.bleu2, 0.0);
    }

    #[test]
    fn two_sentence_hand_count() {
        let h = vec![toks("the cat sat on the mat"), toks("a dog runs")];
        let r = vec![
            vec![toks("the cat is on the mat"), toks("there is a cat on the mat")],
            vec![toks("a dog runs fast")],
        ];
        let st = bleu_stats(&h, &r, 4).unwrap();
        assert_eq!(st.matches, [8, 5, 2, 0]);
        assert_eq!(st.totals, [9, 7, 5, 3]);
        assert_eq!((st.hyp_len, st.ref_len), (9, 10));
        let bp = (-1.0f64 / 9.0).exp();
        let s = bleu(&h, &r).unwrap();
        assert!((s.bleu1 - bp * 8.0 / 9.0).abs() < 1e-12);
        assert!((s.bleu2 - bp * (8.0 / 9.0 * 5.0 / 7.0f64).sqrt()).abs() < 1e-12);
        assert!((s.bleu3 - bp * (8.0 / 9.0 * 5.0 / 7.0 * 2.0 / 5.0f64).cbrt()).abs() < 1e-12);
        assert_eq!(s.bleu4, 0.0);
    }

    #[test]
    fn closest_reference_prefers_shorter_on_tie() {
        let st = bleu_stats(&[toks("a b c d")], &[vec![toks("a b c d e"), toks("a b c")]], 1).unwrap();
        assert_eq!(st.ref_len, 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(bleu(&[], &[]), Err(Error::EmptyCorpus)));
        assert!(bleu(&[toks("a")], &[vec![]]).is_err());
    }

    #[test]
    fn disjoint_pair_can_raise_bleu_through_brevity_penalty() {
        // a short corpus is penalized heavily; an equal-length disjoint pair
        // dilutes precision but lifts the brevity penalty more
        let h = vec![toks("a")];
        let r = vec![vec![toks("a b c d e f g")]];
        let base = bleu(&h, &r).unwrap().bleu1;
        let h2 = vec![toks("a"), toks("x x x x x")];
        let r2 = vec![r[0].clone(), vec![toks("y y y y y")]];
        let more = bleu(&h2, &r2).unwrap().bleu1;
        assert!((base - (-6.0f64).exp()).abs() < 1e-12);
        assert!((more - (-1.0f64).exp() / 6.0).abs() < 1e-12);
        assert!(more > base);
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..8)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((sentence(), sentence()), 1..6), rot in 0usize..6) {
            let h: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
            let r: Vec<_> = pairs.iter().map(|p| vec![p.1.clone()]).collect();
            let k = rot % h.len();
            let mut h2 = h.clone();
            h2.rotate_left(k);
            let mut r2 = r.clone();
            r2.rotate_left(k);
            prop_assert_eq!(bleu(&h, &r).unwrap(), bleu(&h2, &r2).unwrap());
        }

        #[test]
        fn disjoint_pair_never_raises_without_brevity_penalty(
            pairs in prop::collection::vec((sentence(), sentence()), 1..6),
            extra_ref in 1usize..6,
            extra_more in 0usize..3,
        ) {
            let h: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
            let r: Vec<_> = pairs.iter().map(|p| vec![p.1.clone()]).collect();
            let st = bleu_stats(&h, &r, 4).unwrap();
            prop_assume!(st.hyp_len >= st.ref_len);
            let base = bleu(&h, &r).unwrap();
            let mut h2 = h.clone();
            h2.push(vec!["x".to_string(); extra_ref + extra_more]);
            let mut r2 = r.clone();
            r2.push(vec![vec!["y".to_string(); extra_ref]]);
            let more = bleu(&h2, &r2).unwrap();
            for (a, b) in more.as_array().iter().zip(base.as_array()) {
                prop_assert!(*a <= b + 1e-12);
            }
        }
    }
}
