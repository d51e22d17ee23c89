use alloc::string::String;
use alloc::vec::Vec;

use super::{CoherenceOrigin, TopicDiagnostics, TopicModel};
use crate::text::{Postings, TokenizedCorpus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub value: f64,
    /// Pairs left out because the conditioning term occurs in no document.
    pub skipped_pairs: usize,
}

/// `Σ_{m≥2} Σ_{l<m} ln[(D(v_m, v_l) + 1) / D(v_l)]` for terms ranked
/// `0..m_terms` by topic weight, where `D` counts documents.
pub fn coherence_from_counts(
    m_terms: usize,
    doc_freq: impl Fn(usize) -> u32,
    co_doc_freq: impl Fn(usize, usize) -> u32,
) -> Coherence {
    let mut value = 0.0;
    let mut skipped_pairs = 0;
    for m in 1..m_terms {
        for l in 0..m {
            let dl = doc_freq(l);
            if dl == 0 {
                skipped_pairs += 1;
                continue;
            }
            value += libm::log((f64::from(co_doc_freq(m, l)) + 1.0) / f64::from(dl));
        }
    }
    Coherence { value, skipped_pairs }
}

pub fn coherence(top_terms: &[u32], postings: &Postings) -> Result<Coherence> {
    if top_terms.len() < 2 {
        return Err(Error::InvalidInput("coherence needs at least two terms".into()));
    }
    Ok(coherence_from_counts(
        top_terms.len(),
        |i| postings.doc_freq(top_terms[i]),
        |i, j| postings.co_doc_freq(top_terms[i], top_terms[j]),
    ))
}

/// Per-topic diagnostics computed from the model and its corpus.
pub fn topic_diagnostics(model: &TopicModel, corpus: &TokenizedCorpus, top_m: usize) -> Vec<TopicDiagnostics> {
    let postings = Postings::new(corpus);
    let sizes = model.topic_sizes();
    (0..model.num_topics())
        .map(|z| {
            let top = model.top_terms(z, top_m);
            let ids: Vec<u32> = top.iter().map(|t| t.0).collect();
            let coh = coherence(&ids, &postings).ok().map(|c| c.value).filter(|v| v.is_finite());
            TopicDiagnostics {
                topic_id: z as u32,
                coherence: coh,
                coherence_origin: CoherenceOrigin::Recomputed,
                top_terms: top
                    .iter()
                    .map(|&(w, p)| (corpus.vocabulary.get(w as usize).cloned().unwrap_or_else(String::new), p))
                    .collect(),
                token_count: sizes[z],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::TokenizedCorpus;
    use alloc::vec;

    fn corpus(docs: Vec<Vec<u32>>, vocab: usize) -> TokenizedCorpus {
        TokenizedCorpus {
            docs: docs.into_iter().enumerate().map(|(i, d)| (alloc::format!("d{i}"), d)).collect(),
            vocabulary: (0..vocab).map(|i| alloc::format!("w{i}")).collect(),
            doc_freq: vec![1; vocab],
            lower_cutoff: 1,
        }
    }

    #[test]
    fn always_co_occurring_pair() {
        // term 0 in docs 0..10, term 1 in the same 10 docs plus 5 more
        let mut docs: Vec<Vec<u32>> = (0..10).map(|_| vec![0, 1]).collect();
        docs.extend((0..5).map(|_| vec![1]));
        let p = Postings::new(&corpus(docs, 2));
        // direct count oracle
        assert_eq!(p.doc_freq(0), 10);
        assert_eq!(p.co_doc_freq(1, 0), 10);
        let c = coherence(&[0, 1], &p).unwrap();
        assert!((c.value - libm::log(11.0 / 10.0)).abs() < 1e-15);
        assert!((c.value - 0.0953).abs() < 1e-4);
    }

    #[test]
    fn never_co_occurring_pair() {
        let mut docs: Vec<Vec<u32>> = (0..10).map(|_| vec![0]).collect();
        docs.extend((0..4).map(|_| vec![1]));
        let p = Postings::new(&corpus(docs, 2));
        let c = coherence(&[0, 1], &p).unwrap();
        assert!((c.value - libm::log(0.1)).abs() < 1e-15);
        assert!((c.value + 2.303).abs() < 1e-3);
    }

    #[test]
    fn absent_term_pair_skipped() {
        let p = Postings::new(&corpus(vec![vec![1]], 3));
        let c = coherence(&[2, 1], &p).unwrap();
        assert_eq!(c.skipped_pairs, 1);
        assert_eq!(c.value, 0.0);
        assert!(coherence(&[1], &p).is_err());
    }

    #[test]
    fn same_terms_same_value() {
        let p = Postings::new(&corpus(vec![vec![0, 1], vec![1, 2], vec![0, 2]], 3));
        assert_eq!(coherence(&[0, 1, 2], &p), coherence(&[0, 1, 2], &p));
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_co_document_counts(
            df in proptest::collection::vec(1u32..50, 2..8),
            co_seed in proptest::collection::vec(0u32..50, 64),
            bump_m in 1usize..8,
            bump_l in 0usize..8,
        ) {
            let m = df.len();
            let co = |i: usize, j: usize| co_seed[(i * 8 + j) % 64] % (df[j] + 1);
            let base = coherence_from_counts(m, |i| df[i], co);
            let (bm, bl) = (bump_m % m, bump_l % m);
            let bumped = coherence_from_counts(m, |i| df[i], |i, j| co(i, j) + u32::from(i == bm && j == bl));
            proptest::prop_assert!(bumped.value >= base.value);
        }
    }
}
