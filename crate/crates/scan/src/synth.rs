//! Synthetic corpus with planted structure: disjoint topic vocabularies,
//! exponential yearly growth per topic, and per-topic entity preferences.
//! Alongside the corpus it writes the ground truth and a ready-to-run
//! configuration with the matching vocabulary-preparation files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use horizon_core::text::{RawDocument, Source};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::write_documents;
use crate::error::{IoContext, Result, ScanError};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const STOPWORDS: &[&str] = &["the", "a", "an", "of", "and", "in", "for", "with", "on", "to", "is", "are", "we", "this", "that", "by", "from", "as", "at", "be"];
const MULTIWORD_STOPS: &[&str] = &["in this paper", "we propose", "results show that"];
pub const COUNTRIES: &[&str] = &["US", "CN", "DE", "JP", "GB", "KR", "FR", "IN"];
const SPONSORS: &[&str] = &["NSF", "ERC", "NSFC", "JSPS", "DFG"];
const ORGS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub year_first: i32,
    pub year_last: i32,
    pub seed: u64,
    /// Probability that a content token comes from the document's main topic.
    pub purity: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Planted rate constants are spread over `[k_lo, k_second]`; one topic
    /// gets `k_max`, clearly above the rest.
    pub k_lo: f64,
    pub k_second: f64,
    pub k_max: f64,
    pub lda_iterations: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 2000,
            topics: 20,
            words_per_topic: 25,
            year_first: 2014,
            year_last: 2018,
            seed: 7,
            purity: 0.85,
            min_len: 40,
            max_len: 70,
            k_lo: -0.1,
            k_second: 0.5,
            k_max: 0.8,
            lda_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub topic_id: u32,
    pub k: f64,
    pub n0: f64,
    pub docs_per_year: BTreeMap<i32, usize>,
    pub words: Vec<String>,
    pub home_country: String,
    pub home_org: String,
    pub patent_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub documents: usize,
    pub year_first: i32,
    pub year_last: i32,
    pub topics: Vec<PlantedTopic>,
    pub highest_k_topic: u32,
}

/// Distinct pseudo-word for each index: three consonant-vowel syllables.
fn pseudo_word(mut i: usize) -> String {
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let syl = i % (CONSONANTS.len() * VOWELS.len());
        i /= CONSONANTS.len() * VOWELS.len();
        s.push(CONSONANTS[syl / VOWELS.len()] as char);
        s.push(VOWELS[syl % VOWELS.len()] as char);
    }
    s
}

/// Integer counts proportional to `weights` summing to exactly `total`.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let short = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

fn planted_rates(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = cfg.topics;
    let mut rates: Vec<f64> =
        (0..k - 1).map(|i| cfg.k_lo + (cfg.k_second - cfg.k_lo) * i as f64 / (k.saturating_sub(2).max(1)) as f64).collect();
    rates.push(cfg.k_max);
    rates.shuffle(rng);
    rates
}

pub struct Synthetic {
    pub docs: Vec<RawDocument>,
    pub truth: GroundTruth,
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    if cfg.topics < 3 || cfg.docs < cfg.topics || cfg.year_last < cfg.year_first + 2 || cfg.min_len == 0 || cfg.max_len < cfg.min_len {
        return Err(ScanError::Usage("synth needs at least 3 topics, one document per topic, a 3-year window and positive lengths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rates = planted_rates(cfg, &mut rng);
    let years: Vec<i32> = (cfg.year_first..=cfg.year_last).collect();
    let per_topic = cfg.docs as f64 / cfg.topics as f64;

    // Expected documents per topic-year, then exact integers summing to D.
    let mut weights = Vec::with_capacity(cfg.topics * years.len());
    let mut n0s = Vec::with_capacity(cfg.topics);
    for &k in &rates {
        let shape: Vec<f64> = (0..years.len()).map(|t| (k * t as f64).exp()).collect();
        let n0 = per_topic / shape.iter().sum::<f64>();
        n0s.push(n0);
        weights.extend(shape.iter().map(|s| n0 * s));
    }
    let cells = apportion(&weights, cfg.docs);

    let vocab: Vec<Vec<String>> =
        (0..cfg.topics).map(|z| (0..cfg.words_per_topic).map(|w| pseudo_word(z * cfg.words_per_topic + w)).collect()).collect();
    let zipf = WeightedIndex::new((0..cfg.words_per_topic).map(|r| 1.0 / ((r + 1) as f64).powf(0.8))).expect("positive weights");
    let topics: Vec<PlantedTopic> = (0..cfg.topics)
        .map(|z| PlantedTopic {
            topic_id: z as u32,
            k: rates[z],
            n0: n0s[z],
            docs_per_year: years.iter().enumerate().map(|(t, &y)| (y, cells[z * years.len() + t])).collect(),
            words: vocab[z].clone(),
            home_country: COUNTRIES[z % COUNTRIES.len()].to_string(),
            home_org: format!("org{:02}", (z * 7) % ORGS),
            patent_share: if z % 3 == 0 { 0.45 } else { 0.1 },
        })
        .collect();

    let mut plan: Vec<(usize, i32)> = Vec::with_capacity(cfg.docs);
    for z in 0..cfg.topics {
        for (t, &y) in years.iter().enumerate() {
            plan.extend(std::iter::repeat_n((z, y), cells[z * years.len() + t]));
        }
    }
    plan.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(cfg.docs);
    for (i, &(z, year)) in plan.iter().enumerate() {
        let other = {
            let o = rng.random_range(0..cfg.topics - 1);
            if o >= z { o + 1 } else { o }
        };
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut words: Vec<String> = Vec::with_capacity(len * 2);
        if rng.random_bool(0.5) {
            words.push(MULTIWORD_STOPS[rng.random_range(0..MULTIWORD_STOPS.len())].to_string());
        }
        for _ in 0..len {
            let t = if rng.random_bool(cfg.purity) { z } else { other };
            let w = &vocab[t][zipf.sample(&mut rng)];
            // occasional plural, folded back by the lemma map
            if rng.random_bool(0.05) {
                words.push(format!("{w}s"));
            } else {
                words.push(w.clone());
            }
            if rng.random_bool(0.3) {
                words.push(STOPWORDS[rng.random_range(0..STOPWORDS.len())].to_string());
            }
            if rng.random_bool(0.02) {
                words.push(rng.random_range(1..=2030).to_string());
            }
        }
        if rng.random_bool(0.5) {
            // the topic's signature phrase, joined by the replacement map
            words.push(format!("{} {}", vocab[z][0], vocab[z][1]));
        }
        let title_len = 5.min(words.len());
        let title = words[..title_len].join(" ");
        let abstract_text = words[title_len..].join(" ");

        let p = &topics[z];
        let u: f64 = rng.random();
        let source = if u < p.patent_share {
            Source::Patent
        } else if u < p.patent_share + 0.1 {
            Source::Grant
        } else {
            Source::Publication
        };
        let pick_country = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.5) {
                p.home_country.clone()
            } else {
                COUNTRIES[rng.random_range(0..COUNTRIES.len())].to_string()
            }
        };
        let mut countries = vec![pick_country(&mut rng)];
        if rng.random_bool(0.2) {
            countries.push(pick_country(&mut rng));
        }
        let org = if rng.random_bool(0.4) { p.home_org.clone() } else { format!("org{:02}", rng.random_range(0..ORGS)) };
        let sponsors = if source == Source::Grant { vec![SPONSORS[rng.random_range(0..SPONSORS.len())].to_string()] } else { Vec::new() };
        docs.push(RawDocument {
            doc_id: format!("syn-{:05}", i + 1),
            title,
            abstract_text,
            year,
            source,
            countries,
            orgs: vec![org],
            sponsors,
        });
    }

    let highest_k_topic = rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(z, _)| z as u32).unwrap_or(0);
    Ok(Synthetic {
        docs,
        truth: GroundTruth {
            seed: cfg.seed,
            documents: cfg.docs,
            year_first: cfg.year_first,
            year_last: cfg.year_last,
            topics,
            highest_k_topic,
        },
    })
}

/// Writes `corpus.jsonl`, `ground_truth.json`, the vocabulary-preparation
/// files and `scan.conf` into `dir`.
pub fn write_synthetic(cfg: &SynthConfig, dir: &Path) -> Result<Synthetic> {
    let syn = generate(cfg)?;
    std::fs::create_dir_all(dir).at(dir)?;
    write_documents(&dir.join("corpus.jsonl"), &syn.docs)?;
    let truth = serde_json::to_string_pretty(&syn.truth).map_err(|e| ScanError::Input(e.to_string()))?;
    std::fs::write(dir.join("ground_truth.json"), truth + "\n").at(dir.join("ground_truth.json"))?;
    std::fs::write(dir.join("stopwords.txt"), STOPWORDS.join("\n") + "\n").at(dir.join("stopwords.txt"))?;
    std::fs::write(dir.join("multiword_stops.txt"), MULTIWORD_STOPS.join("\n") + "\n").at(dir.join("multiword_stops.txt"))?;
    let mut lemmas = String::new();
    let mut phrases = String::new();
    for t in &syn.truth.topics {
        for w in &t.words {
            let _ = writeln!(lemmas, "{w}s\t{w}");
        }
        let _ = writeln!(phrases, "{} {}\t{}_{}", t.words[0], t.words[1], t.words[0], t.words[1]);
    }
    std::fs::write(dir.join("lemmas.tsv"), lemmas).at(dir.join("lemmas.tsv"))?;
    std::fs::write(dir.join("replacements.tsv"), phrases).at(dir.join("replacements.tsv"))?;
    let conf = format!(
        "# synthetic corpus, seed {seed}\n\
         corpus = corpus.jsonl\n\
         stopwords = stopwords.txt\n\
         multiword_stops = multiword_stops.txt\n\
         lemma_map = lemmas.tsv\n\
         replacements = replacements.tsv\n\
         max_doc_fraction = 0.5\n\
         year_first = {first}\n\
         year_last = {last}\n\
         topics = {topics}\n\
         iterations = {iters}\n\
         seed = {seed}\n",
        seed = cfg.seed,
        first = cfg.year_first,
        last = cfg.year_last,
        topics = cfg.topics,
        iters = cfg.lda_iterations,
    );
    std::fs::write(dir.join("scan.conf"), conf).at(dir.join("scan.conf"))?;
    Ok(syn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_words_are_distinct() {
        let words: std::collections::BTreeSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(words.len(), 5000);
        assert!(words.iter().all(|w| w.len() == 6 && !STOPWORDS.contains(&w.as_str())));
    }

    #[test]
    fn apportion_is_exact_and_close() {
        let w = [1.0, 2.0, 3.3, 0.7];
        let a = apportion(&w, 101);
        assert_eq!(a.iter().sum::<usize>(), 101);
        for (x, wi) in a.iter().zip(&w) {
            assert!((*x as f64 - wi / 7.0 * 101.0).abs() < 1.0);
        }
    }

    #[test]
    fn default_corpus_shape() {
        let syn = generate(&SynthConfig::default()).unwrap();
        assert_eq!(syn.docs.len(), 2000);
        assert_eq!(syn.truth.topics.len(), 20);
        let total: usize = syn.truth.topics.iter().flat_map(|t| t.docs_per_year.values()).sum();
        assert_eq!(total, 2000);
        let ks: Vec<f64> = syn.truth.topics.iter().map(|t| t.k).collect();
        let top = syn.truth.highest_k_topic as usize;
        assert_eq!(ks[top], 0.8);
        assert!(ks.iter().enumerate().all(|(i, &k)| i == top || k <= 0.5 + 1e-12));
        for t in &syn.truth.topics {
            let n: usize = t.docs_per_year.values().sum();
            // each of the five cells rounds by less than one document
            assert!((n as f64 - 100.0).abs() < 5.0, "topic {} has {n} documents", t.topic_id);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.docs, b.docs);
        let c = generate(&SynthConfig { seed: 8, ..Default::default() }).unwrap();
        assert_ne!(a.docs, c.docs);
    }
}
