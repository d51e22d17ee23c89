//! Latent Dirichlet allocation by collapsed Gibbs sampling, plus the derived
//! probability tables, fractional document counting and topic coherence.

mod coherence;
mod sampler;
mod sums;

pub use coherence::{coherence, coherence_from_counts, topic_diagnostics, Coherence};
pub use sampler::{fit_lda, optimize_alpha, LdaConfig, LdaFit};
pub use sums::{doc_topic_sums, Attribute, GroupedSums};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Topic assignments for the tokens of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocAssignments {
    /// Free-form origin label carried through the state file (`NA` if none).
    pub source: String,
    /// Vocabulary index of each token, in document order.
    pub types: Vec<u32>,
    /// Topic of each token.
    pub topics: Vec<u32>,
}

/// Complete sampler state: enough to rebuild every count table.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub docs: Vec<DocAssignments>,
}

/// Count tables implied by a [`GibbsState`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    pub num_topics: usize,
    pub vocab_len: usize,
    /// `D × K`, row-major.
    pub doc_topic: Vec<u32>,
    /// `V × K`, row-major.
    pub word_topic: Vec<u32>,
    pub topic_totals: Vec<u32>,
    pub doc_len: Vec<u32>,
}

impl CountTables {
    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn doc_row(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.num_topics..(d + 1) * self.num_topics]
    }
}

impl GibbsState {
    pub fn num_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(|d| d.types.len()).sum()
    }

    pub fn validate(&self, vocab_len: usize) -> Result<()> {
        let k = self.num_topics() as u32;
        if k == 0 {
            return Err(Error::Empty("alpha vector"));
        }
        for (d, doc) in self.docs.iter().enumerate() {
            if doc.types.len() != doc.topics.len() {
                return Err(Error::ShapeMismatch { expected: doc.types.len(), found: doc.topics.len() });
            }
            if let Some(&t) = doc.topics.iter().find(|&&t| t >= k) {
                return Err(Error::InvalidInput(alloc::format!("doc {d}: topic {t} out of range for {k} topics")));
            }
            if let Some(&w) = doc.types.iter().find(|&&w| w as usize >= vocab_len) {
                return Err(Error::InvalidInput(alloc::format!("doc {d}: type {w} out of range for vocabulary {vocab_len}")));
            }
        }
        Ok(())
    }

    pub fn count_tables(&self, vocab_len: usize) -> Result<CountTables> {
        self.validate(vocab_len)?;
        let k = self.num_topics();
        let mut t = CountTables {
            num_topics: k,
            vocab_len,
            doc_topic: vec![0; self.docs.len() * k],
            word_topic: vec![0; vocab_len * k],
            topic_totals: vec![0; k],
            doc_len: Vec::with_capacity(self.docs.len()),
        };
        for (d, doc) in self.docs.iter().enumerate() {
            for (&w, &z) in doc.types.iter().zip(&doc.topics) {
                t.doc_topic[d * k + z as usize] += 1;
                t.word_topic[w as usize * k + z as usize] += 1;
                t.topic_totals[z as usize] += 1;
            }
            t.doc_len.push(doc.types.len() as u32);
        }
        Ok(t)
    }
}

/// Log likelihood of words and assignments under the collapsed model.
pub fn log_likelihood(counts: &CountTables, alpha: &[f64], beta: f64) -> f64 {
    let k = counts.num_topics;
    let alpha_sum: f64 = alpha.iter().sum();
    let lg_alpha: Vec<f64> = alpha.iter().map(|&a| libm::lgamma(a)).collect();
    let mut ll = 0.0;
    for d in 0..counts.num_docs() {
        let row = counts.doc_row(d);
        for (z, &c) in row.iter().enumerate() {
            if c > 0 {
                ll += libm::lgamma(alpha[z] + f64::from(c)) - lg_alpha[z];
            }
        }
        ll += libm::lgamma(alpha_sum) - libm::lgamma(alpha_sum + f64::from(counts.doc_len[d]));
    }
    let lg_beta = libm::lgamma(beta);
    for &c in &counts.word_topic {
        if c > 0 {
            ll += libm::lgamma(beta + f64::from(c)) - lg_beta;
        }
    }
    let v_beta = beta * counts.vocab_len as f64;
    for z in 0..k {
        ll += libm::lgamma(v_beta) - libm::lgamma(v_beta + f64::from(counts.topic_totals[z]));
    }
    ll
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    /// `K × V` term probabilities; rows sum to 1.
    pub term_topic: Matrix,
    /// `D × K` topic probabilities per document; rows sum to 1.
    pub doc_topic: Matrix,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub ll_per_token: f64,
}

impl TopicModel {
    /// Posterior-mean tables from a sampler state:
    /// `φ[k][w] = (n_wk + β)/(n_k + Vβ)` and
    /// `t[d][k] = (n_dk + α_k)/(N_d + Σα)`.
    pub fn from_state(state: &GibbsState, vocab_len: usize) -> Result<Self> {
        let counts = state.count_tables(vocab_len)?;
        Ok(Self::from_counts(&counts, &state.alpha, state.beta))
    }

    pub fn from_counts(counts: &CountTables, alpha: &[f64], beta: f64) -> Self {
        let k = counts.num_topics;
        let v = counts.vocab_len;
        let v_beta = beta * v as f64;
        let mut term_topic = Matrix::zeros(k, v);
        for z in 0..k {
            let denom = f64::from(counts.topic_totals[z]) + v_beta;
            for w in 0..v {
                term_topic.set(z, w, (f64::from(counts.word_topic[w * k + z]) + beta) / denom);
            }
        }
        let alpha_sum: f64 = alpha.iter().sum();
        let mut doc_topic = Matrix::zeros(counts.num_docs(), k);
        for d in 0..counts.num_docs() {
            let denom = f64::from(counts.doc_len[d]) + alpha_sum;
            for (z, &c) in counts.doc_row(d).iter().enumerate() {
                doc_topic.set(d, z, (f64::from(c) + alpha[z]) / denom);
            }
        }
        let tokens: u64 = counts.doc_len.iter().map(|&n| u64::from(n)).sum();
        let ll = log_likelihood(counts, alpha, beta);
        Self {
            term_topic,
            doc_topic,
            alpha: alpha.to_vec(),
            beta,
            ll_per_token: if tokens > 0 { ll / tokens as f64 } else { 0.0 },
        }
    }

    pub fn num_topics(&self) -> usize {
        self.term_topic.rows()
    }

    pub fn num_docs(&self) -> usize {
        self.doc_topic.rows()
    }

    /// Highest-probability terms of a topic, ties broken by lower index.
    pub fn top_terms(&self, topic: usize, m: usize) -> Vec<(u32, f64)> {
        let mut idx: Vec<(u32, f64)> = self.term_topic.row(topic).iter().enumerate().map(|(w, &p)| (w as u32, p)).collect();
        idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        idx.truncate(m);
        idx
    }

    /// Fractional document mass of each topic, `Σ_d t[d][k]`.
    pub fn topic_sizes(&self) -> Vec<f64> {
        self.doc_topic.col_sums()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CoherenceOrigin {
    /// Read from an external diagnostics file.
    Parsed,
    /// Computed from the corpus co-document counts.
    Recomputed,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopicDiagnostics {
    pub topic_id: u32,
    /// `None` marks a topic whose coherence is unknown; such topics are left
    /// out of screens.
    pub coherence: Option<f64>,
    pub coherence_origin: CoherenceOrigin,
    pub top_terms: Vec<(String, f64)>,
    pub token_count: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_state() -> GibbsState {
        GibbsState {
            alpha: vec![0.5, 0.25],
            beta: 0.1,
            docs: vec![
                DocAssignments { source: "NA".into(), types: vec![0, 1, 1], topics: vec![0, 1, 1] },
                DocAssignments { source: "NA".into(), types: vec![], topics: vec![] },
                DocAssignments { source: "NA".into(), types: vec![2], topics: vec![0] },
            ],
        }
    }

    #[test]
    fn count_tables_match_assignments() {
        let t = tiny_state().count_tables(3).unwrap();
        assert_eq!(t.doc_topic, vec![1, 2, 0, 0, 1, 0]);
        assert_eq!(t.word_topic, vec![1, 0, 0, 2, 1, 0]);
        assert_eq!(t.topic_totals, vec![2, 2]);
        assert_eq!(t.doc_len, vec![3, 0, 1]);
    }

    #[test]
    fn smoothing_formulas_and_empty_doc() {
        let m = TopicModel::from_state(&tiny_state(), 3).unwrap();
        assert!((m.doc_topic.get(0, 0) - 1.5 / 3.75).abs() < 1e-15);
        // empty document falls back to normalized alpha
        assert!((m.doc_topic.get(1, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.term_topic.get(1, 1) - 2.1 / 2.3).abs() < 1e-15);
        for r in m.doc_topic.row_sums() {
            assert!((r - 1.0).abs() < 1e-12);
        }
        for r in m.term_topic.row_sums() {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_topic_rejected() {
        let mut s = tiny_state();
        s.docs[0].topics[0] = 2;
        assert!(s.count_tables(3).is_err());
        let s = tiny_state();
        assert!(s.count_tables(2).is_err());
    }

    #[test]
    fn top_terms_sorted_with_index_ties() {
        let m = TopicModel::from_state(&tiny_state(), 3).unwrap();
        let top = m.top_terms(0, 3);
        assert_eq!(top.iter().map(|t| t.0).collect::<Vec<_>>(), vec![0, 2, 1]);
        assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
