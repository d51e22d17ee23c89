use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{log_likelihood, CountTables, DocAssignments, GibbsState, TopicModel};
use crate::text::TokenizedCorpus;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub iterations: usize,
    /// Re-estimate alpha every this many sweeps; 0 disables it.
    pub optimize_interval: usize,
    /// Sweeps before the first alpha update.
    pub burn_in: usize,
    /// Record LL/token every this many sweeps (and at sweep 0 and the end).
    pub report_interval: usize,
    pub seed: u64,
    /// Initial `Σα`, split evenly across topics.
    pub alpha_sum: f64,
    pub beta: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            num_topics: 50,
            iterations: 200,
            optimize_interval: 10,
            burn_in: 10,
            report_interval: 10,
            seed: 1,
            alpha_sum: 5.0,
            beta: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: TopicModel,
    pub state: GibbsState,
    /// `(sweep, LL/token)` at every reporting point.
    pub ll_history: Vec<(usize, f64)>,
}

struct Sampler<'a> {
    k: usize,
    docs: &'a [(alloc::string::String, Vec<u32>)],
    topics: Vec<Vec<u32>>,
    counts: CountTables,
    alpha: Vec<f64>,
    beta: f64,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl Sampler<'_> {
    fn sweep(&mut self) {
        let k = self.k;
        let v_beta = self.beta * self.counts.vocab_len as f64;
        for (d, (_, types)) in self.docs.iter().enumerate() {
            for (pos, &w) in types.iter().enumerate() {
                let w = w as usize;
                let old = self.topics[d][pos] as usize;
                self.counts.doc_topic[d * k + old] -= 1;
                self.counts.word_topic[w * k + old] -= 1;
                self.counts.topic_totals[old] -= 1;

                let mut total = 0.0;
                for z in 0..k {
                    let p = (f64::from(self.counts.doc_topic[d * k + z]) + self.alpha[z])
                        * (f64::from(self.counts.word_topic[w * k + z]) + self.beta)
                        / (f64::from(self.counts.topic_totals[z]) + v_beta);
                    total += p;
                    self.weights[z] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.topics[d][pos] = new as u32;
                self.counts.doc_topic[d * k + new] += 1;
                self.counts.word_topic[w * k + new] += 1;
                self.counts.topic_totals[new] += 1;
            }
        }
    }

    fn ll_per_token(&self) -> f64 {
        let tokens: u64 = self.counts.doc_len.iter().map(|&n| u64::from(n)).sum();
        log_likelihood(&self.counts, &self.alpha, self.beta) / tokens as f64
    }
}

/// Fit LDA with collapsed Gibbs sampling. Fully deterministic for a given
/// corpus and configuration.
pub fn fit_lda(corpus: &TokenizedCorpus, cfg: &LdaConfig) -> Result<LdaFit> {
    let k = cfg.num_topics;
    if k < 2 {
        return Err(Error::InvalidInput(alloc::format!("need at least 2 topics, got {k}")));
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    if corpus.docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let tokens = corpus.token_count();
    if tokens == 0 {
        return Err(Error::TooFewTokens { topics: k, tokens });
    }
    if !(cfg.alpha_sum > 0.0) || !(cfg.beta > 0.0) {
        return Err(Error::InvalidInput("alpha_sum and beta must be positive".into()));
    }

    let v = corpus.vocab_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topics: Vec<Vec<u32>> = corpus
        .docs
        .iter()
        .map(|(_, types)| types.iter().map(|_| rng.random_range(0..k as u32)).collect())
        .collect();

    let mut counts = CountTables {
        num_topics: k,
        vocab_len: v,
        doc_topic: vec![0; corpus.docs.len() * k],
        word_topic: vec![0; v * k],
        topic_totals: vec![0; k],
        doc_len: corpus.docs.iter().map(|(_, t)| t.len() as u32).collect(),
    };
    for (d, ((_, types), zs)) in corpus.docs.iter().zip(&topics).enumerate() {
        for (&w, &z) in types.iter().zip(zs) {
            counts.doc_topic[d * k + z as usize] += 1;
            counts.word_topic[w as usize * k + z as usize] += 1;
            counts.topic_totals[z as usize] += 1;
        }
    }

    let mut s = Sampler {
        k,
        docs: &corpus.docs,
        topics,
        counts,
        alpha: vec![cfg.alpha_sum / k as f64; k],
        beta: cfg.beta,
        rng,
        weights: vec![0.0; k],
    };

    let report = cfg.report_interval.max(1);
    let mut ll_history = vec![(0, s.ll_per_token())];
    for sweep in 1..=cfg.iterations {
        s.sweep();
        if cfg.optimize_interval > 0 && sweep >= cfg.burn_in && sweep % cfg.optimize_interval == 0 {
            optimize_alpha(&mut s.alpha, &s.counts);
        }
        if sweep % report == 0 || sweep == cfg.iterations {
            ll_history.push((sweep, s.ll_per_token()));
        }
    }

    let state = GibbsState {
        alpha: s.alpha.clone(),
        beta: s.beta,
        docs: corpus
            .docs
            .iter()
            .zip(s.topics)
            .map(|((id, types), topics)| DocAssignments {
                source: if id.is_empty() || id.contains(char::is_whitespace) { "NA".into() } else { id.clone() },
                types: types.clone(),
                topics,
            })
            .collect(),
    };
    let model = TopicModel::from_counts(&s.counts, &s.alpha, s.beta);
    Ok(LdaFit { model, state, ll_history })
}

const ALPHA_FLOOR: f64 = 1e-8;

/// Minka's fixed-point update for an asymmetric Dirichlet, driven by
/// histograms of per-document topic counts and document lengths:
///
/// `α_k ← α_k · Σ_d [ψ(n_dk + α_k) − ψ(α_k)] / Σ_d [ψ(N_d + Σα) − ψ(Σα)]`
///
/// with each digamma difference of integer offset expanded as
/// `Σ_{i<n} 1/(a + i)`.
pub fn optimize_alpha(alpha: &mut [f64], counts: &CountTables) {
    let k = counts.num_topics;
    let max_len = counts.doc_len.iter().copied().max().unwrap_or(0) as usize;
    if max_len == 0 {
        return;
    }
    let mut len_hist = vec![0u32; max_len + 1];
    for &n in &counts.doc_len {
        len_hist[n as usize] += 1;
    }
    let mut topic_hist: Vec<Vec<u32>> = vec![Vec::new(); k];
    for d in 0..counts.num_docs() {
        for (z, &c) in counts.doc_row(d).iter().enumerate() {
            if c > 0 {
                let h = &mut topic_hist[z];
                if h.len() <= c as usize {
                    h.resize(c as usize + 1, 0);
                }
                h[c as usize] += 1;
            }
        }
    }

    for _ in 0..200 {
        let alpha_sum: f64 = alpha.iter().sum();
        let mut denom = 0.0;
        let mut acc = 0.0;
        for (n, &docs) in len_hist.iter().enumerate().skip(1) {
            acc += 1.0 / (alpha_sum + (n - 1) as f64);
            denom += f64::from(docs) * acc;
        }
        let mut max_change: f64 = 0.0;
        for z in 0..k {
            let mut num = 0.0;
            let mut acc = 0.0;
            for (c, &docs) in topic_hist[z].iter().enumerate().skip(1) {
                acc += 1.0 / (alpha[z] + (c - 1) as f64);
                num += f64::from(docs) * acc;
            }
            let updated = (alpha[z] * num / denom).max(ALPHA_FLOOR);
            max_change = max_change.max((updated - alpha[z]).abs() / alpha[z]);
            alpha[z] = updated;
        }
        if max_change < 1e-6 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::TopicModel;
    use alloc::string::String;
    use rand_distr::{Distribution, Gamma};

    /// Documents drawn from planted topics with disjoint vocabularies.
    pub(crate) fn planted_corpus(topics: usize, words_per_topic: usize, docs: usize, len: usize, seed: u64) -> (TokenizedCorpus, Vec<Vec<u32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Gamma::new(0.1, 1.0).unwrap();
        let mut out = Vec::new();
        let mut truth = Vec::new();
        for d in 0..docs {
            let mut theta: Vec<f64> = (0..topics).map(|_| gamma.sample(&mut rng) + 1e-12).collect();
            let s: f64 = theta.iter().sum();
            theta.iter_mut().for_each(|x| *x /= s);
            let mut types = Vec::new();
            let mut zs = Vec::new();
            for _ in 0..len {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut z = topics - 1;
                for (i, &p) in theta.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        z = i;
                        break;
                    }
                }
                // Zipf-ish within the topic's block
                let r: f64 = rng.random();
                let w = ((r * r) * words_per_topic as f64) as usize;
                types.push((z * words_per_topic + w.min(words_per_topic - 1)) as u32);
                zs.push(z as u32);
            }
            out.push((alloc::format!("doc{d}"), types));
            truth.push(zs);
        }
        let v = topics * words_per_topic;
        let corpus = TokenizedCorpus {
            docs: out,
            vocabulary: (0..v).map(|i| alloc::format!("w{i}")).collect(),
            doc_freq: vec![1; v],
            lower_cutoff: 1,
        };
        (corpus, truth)
    }

    fn planted_phi(topics: usize, words_per_topic: usize) -> Vec<Vec<f64>> {
        // density of r² on [0,1): P(w) = sqrt((w+1)/W) - sqrt(w/W)
        (0..topics)
            .map(|z| {
                let mut row = vec![0.0; topics * words_per_topic];
                for w in 0..words_per_topic {
                    let a = libm::sqrt((w + 1) as f64 / words_per_topic as f64);
                    let b = libm::sqrt(w as f64 / words_per_topic as f64);
                    row[z * words_per_topic + w] = a - b;
                }
                row
            })
            .collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        dot / libm::sqrt(na * nb)
    }

    /// Greedy one-to-one matching of learned topics to planted topics by
    /// cosine similarity.
    fn greedy_match(model: &TopicModel, planted: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
        let k = planted.len();
        let mut pairs = Vec::new();
        for l in 0..model.num_topics() {
            for (p, row) in planted.iter().enumerate() {
                pairs.push((l, p, cosine(model.term_topic.row(l), row)));
            }
        }
        pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
        let (mut used_l, mut used_p) = (vec![false; model.num_topics()], vec![false; k]);
        let mut out = Vec::new();
        for (l, p, c) in pairs {
            if !used_l[l] && !used_p[p] {
                used_l[l] = true;
                used_p[p] = true;
                out.push((l, p, c));
            }
        }
        out
    }

    #[test]
    fn planted_topics_recovered() {
        let (corpus, truth) = planted_corpus(5, 40, 300, 60, 11);
        let cfg = LdaConfig { num_topics: 5, iterations: 200, seed: 3, ..Default::default() };
        let fit = fit_lda(&corpus, &cfg).unwrap();
        let matches = greedy_match(&fit.model, &planted_phi(5, 40));
        assert_eq!(matches.len(), 5);
        for (_, _, c) in &matches {
            assert!(*c >= 0.9, "cosine {c}");
        }

        let map: Vec<usize> = {
            let mut m = vec![0; 5];
            for (l, p, _) in &matches {
                m[*l] = *p;
            }
            m
        };
        let (mut agree, mut total) = (0usize, 0usize);
        for (doc, zs) in fit.state.docs.iter().zip(&truth) {
            for (&learned, &planted) in doc.topics.iter().zip(zs) {
                total += 1;
                agree += usize::from(map[learned as usize] as u32 == planted);
            }
        }
        assert!(agree as f64 / total as f64 >= 0.99, "{agree}/{total}");
    }

    #[test]
    fn ll_trend_improves() {
        let (corpus, _) = planted_corpus(5, 40, 200, 50, 5);
        let cfg = LdaConfig { num_topics: 5, iterations: 200, seed: 9, ..Default::default() };
        let fit = fit_lda(&corpus, &cfg).unwrap();
        assert!(fit.ll_history.len() >= 20);
        let first: f64 = fit.ll_history[..10].iter().map(|x| x.1).sum::<f64>() / 10.0;
        let n = fit.ll_history.len();
        let last: f64 = fit.ll_history[n - 10..].iter().map(|x| x.1).sum::<f64>() / 10.0;
        assert!(last > first, "{last} vs {first}");
        assert_eq!(fit.model.ll_per_token, fit.ll_history[n - 1].1);
    }

    #[test]
    fn same_seed_same_state() {
        let (corpus, _) = planted_corpus(3, 10, 30, 20, 1);
        let cfg = LdaConfig { num_topics: 3, iterations: 20, seed: 42, ..Default::default() };
        let a = fit_lda(&corpus, &cfg).unwrap();
        let b = fit_lda(&corpus, &cfg).unwrap();
        assert_eq!(a.state, b.state);
        let c = fit_lda(&corpus, &LdaConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.state, c.state);
    }

    #[test]
    fn single_token_corpus_normalizes() {
        let corpus = TokenizedCorpus {
            docs: vec![(String::from("only"), vec![0])],
            vocabulary: vec!["word".into()],
            doc_freq: vec![1],
            lower_cutoff: 1,
        };
        let fit = fit_lda(&corpus, &LdaConfig { num_topics: 2, iterations: 5, ..Default::default() }).unwrap();
        let s: f64 = fit.model.doc_topic.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_configs() {
        let (corpus, _) = planted_corpus(2, 5, 4, 5, 1);
        assert!(fit_lda(&corpus, &LdaConfig { num_topics: 1, ..Default::default() }).is_err());
        assert!(fit_lda(&corpus, &LdaConfig { num_topics: 2, iterations: 0, ..Default::default() }).is_err());
        let empty = TokenizedCorpus { docs: vec![("e".into(), vec![])], vocabulary: vec![], doc_freq: vec![], lower_cutoff: 0 };
        assert!(matches!(fit_lda(&empty, &LdaConfig::default()), Err(Error::TooFewTokens { .. })));
    }

    #[test]
    fn counts_stay_consistent_with_assignments() {
        let (corpus, _) = planted_corpus(4, 8, 40, 15, 2);
        let fit = fit_lda(&corpus, &LdaConfig { num_topics: 4, iterations: 30, ..Default::default() }).unwrap();
        let rebuilt = TopicModel::from_state(&fit.state, corpus.vocab_len()).unwrap();
        assert_eq!(rebuilt, fit.model);
    }

    #[test]
    fn alpha_update_shifts_mass_toward_used_topics() {
        // every doc uses topic 0 heavily, topic 1 rarely
        let counts = CountTables {
            num_topics: 2,
            vocab_len: 1,
            doc_topic: (0..50).flat_map(|d| [10u32, u32::from(d % 5 == 0)]).collect(),
            word_topic: vec![0, 0],
            topic_totals: vec![500, 10],
            doc_len: (0..50).map(|d| 10 + u32::from(d % 5 == 0)).collect(),
        };
        let mut alpha = vec![1.0, 1.0];
        optimize_alpha(&mut alpha, &counts);
        assert!(alpha[0] > alpha[1] * 10.0, "{alpha:?}");
        assert!(alpha.iter().all(|&a| a > 0.0));
    }
}
