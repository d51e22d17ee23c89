//! Vocabulary preparation: phrase-aware normalization and document-frequency
//! pruning of titles and abstracts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Source {
    Publication,
    Patent,
    Grant,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Publication, Source::Patent, Source::Grant];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Publication => "publication",
            Source::Patent => "patent",
            Source::Grant => "grant",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "publication" | "publications" => Ok(Source::Publication),
            "patent" | "patents" => Ok(Source::Patent),
            "grant" | "grants" => Ok(Source::Grant),
            other => Err(Error::InvalidInput(alloc::format!("unknown source kind `{other}`"))),
        }
    }
}

/// A document record with the entity attributes used for grouping.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
    #[cfg_attr(feature = "serde", serde(rename = "abstract"))]
    pub abstract_text: String,
    pub year: i32,
    pub source: Source,
    #[cfg_attr(feature = "serde", serde(default))]
    pub countries: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub orgs: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sponsors: Vec<String>,
}

impl RawDocument {
    /// Title and abstract joined into the single text field that is modeled.
    pub fn text(&self) -> String {
        let mut s = String::with_capacity(self.title.len() + self.abstract_text.len() + 1);
        s.push_str(&self.title);
        s.push(' ');
        s.push_str(&self.abstract_text);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabPrepConfig {
    pub stopwords: BTreeSet<String>,
    pub multiword_stops: Vec<String>,
    pub lemma_map: BTreeMap<String, String>,
    /// Multi-token phrase to a single underscore-joined token.
    pub replacements: BTreeMap<String, String>,
    pub max_doc_fraction: f64,
    pub vocab_size: usize,
}

impl Default for VocabPrepConfig {
    fn default() -> Self {
        Self {
            stopwords: BTreeSet::new(),
            multiword_stops: Vec::new(),
            lemma_map: BTreeMap::new(),
            replacements: BTreeMap::new(),
            max_doc_fraction: 0.05,
            vocab_size: 200_000,
        }
    }
}

impl VocabPrepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_doc_fraction > 0.0 && self.max_doc_fraction <= 1.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "max_doc_fraction must lie in (0, 1], got {}",
                self.max_doc_fraction
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::InvalidInput("vocab_size must be positive".into()));
        }
        for key in self.replacements.keys() {
            if raw_tokens(key).len() < 2 {
                return Err(Error::InvalidInput(alloc::format!(
                    "replacement key `{key}` must contain at least two tokens"
                )));
            }
        }
        for (from, to) in &self.lemma_map {
            if let Some(next) = self.lemma_map.get(to) {
                if next != to {
                    return Err(Error::InvalidInput(alloc::format!(
                        "lemma map is not idempotent: {from} -> {to} -> {next}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lowercase and split on anything that is neither alphanumeric nor `_`.
fn raw_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

fn keep_token(tok: &str) -> bool {
    let mut chars = tok.chars();
    let Some(_) = chars.next() else { return false };
    if chars.next().is_none() {
        return false;
    }
    !tok.chars().all(char::is_numeric)
}

/// Token-sequence phrase table matched longest-first, left to right.
#[derive(Debug, Clone, Default)]
struct PhraseTable {
    phrases: BTreeMap<Vec<String>, Option<String>>,
    max_len: usize,
}

impl PhraseTable {
    fn insert(&mut self, phrase: &str, replacement: Option<String>) {
        let toks = raw_tokens(phrase);
        if toks.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(toks.len());
        self.phrases.insert(toks, replacement);
    }

    fn apply(&self, tokens: Vec<String>) -> Vec<String> {
        if self.phrases.is_empty() {
            return tokens;
        }
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            for len in (1..=longest).rev() {
                if let Some(action) = self.phrases.get(&tokens[i..i + len]) {
                    if let Some(rep) = action {
                        out.push(rep.clone());
                    }
                    i += len;
                    continue 'outer;
                }
            }
            out.push(tokens[i].clone());
            i += 1;
        }
        out
    }
}

/// Compiled form of a [`VocabPrepConfig`], reusable across documents.
#[derive(Debug, Clone)]
pub struct Normalizer {
    stops: PhraseTable,
    replacements: PhraseTable,
    lemma_map: BTreeMap<String, String>,
    stopwords: BTreeSet<String>,
}

impl Normalizer {
    pub fn new(cfg: &VocabPrepConfig) -> Self {
        let mut stops = PhraseTable::default();
        for phrase in &cfg.multiword_stops {
            stops.insert(phrase, None);
        }
        let mut replacements = PhraseTable::default();
        for (from, to) in &cfg.replacements {
            replacements.insert(from, Some(to.to_lowercase()));
        }
        let lower = |s: &String| s.to_lowercase();
        Self {
            stops,
            replacements,
            lemma_map: cfg.lemma_map.iter().map(|(k, v)| (lower(k), lower(v))).collect(),
            stopwords: cfg.stopwords.iter().map(lower).collect(),
        }
    }

    /// Stop phrases are removed first, then replacements, then the token
    /// filter, lemmatization and single-token stopwords, in that order.
    pub fn normalize(&self, text: &str) -> Vec<String> {
        let tokens = self.stops.apply(raw_tokens(text));
        let tokens = self.replacements.apply(tokens);
        tokens
            .into_iter()
            .filter(|t| keep_token(t))
            .map(|t| match self.lemma_map.get(&t) {
                Some(lemma) => lemma.clone(),
                None => t,
            })
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }
}

pub fn normalize_text(doc: &RawDocument, cfg: &VocabPrepConfig) -> Vec<String> {
    Normalizer::new(cfg).normalize(&doc.text())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCorpus {
    pub docs: Vec<(String, Vec<u32>)>,
    pub vocabulary: Vec<String>,
    pub doc_freq: Vec<u32>,
    pub lower_cutoff: u32,
}

impl TokenizedCorpus {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn token_index(&self) -> BTreeMap<&str, u32> {
        self.vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect()
    }
}

/// Drop over-common tokens, keep the `vocab_size` most document-frequent of
/// the rest and re-encode every document against the surviving vocabulary.
///
/// Ties in document frequency are broken by token text so the result does
/// not depend on input order beyond the documents themselves.
pub fn prune_vocabulary(docs: &[(String, Vec<String>)], cfg: &VocabPrepConfig) -> Result<TokenizedCorpus> {
    cfg.validate()?;
    let n_docs = docs.len();
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for (_, toks) in docs {
        let distinct: BTreeSet<&str> = toks.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_insert(0) += 1;
        }
    }

    let ceiling = cfg.max_doc_fraction * n_docs as f64;
    let mut ranked: Vec<(&str, u32)> = df.into_iter().filter(|&(_, f)| f as f64 <= ceiling).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cfg.vocab_size);
    let lower_cutoff = ranked.last().map_or(0, |&(_, f)| f);

    let index: BTreeMap<&str, u32> = ranked.iter().enumerate().map(|(i, &(t, _))| (t, i as u32)).collect();
    let encoded = docs
        .iter()
        .map(|(id, toks)| {
            let ids = toks.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
            (id.clone(), ids)
        })
        .collect();

    Ok(TokenizedCorpus {
        docs: encoded,
        vocabulary: ranked.iter().map(|&(t, _)| t.to_string()).collect(),
        doc_freq: ranked.iter().map(|&(_, f)| f).collect(),
        lower_cutoff,
    })
}

/// Inverted index of which documents contain each vocabulary entry.
#[derive(Debug, Clone)]
pub struct Postings {
    lists: Vec<Vec<u32>>,
}

impl Postings {
    pub fn new(corpus: &TokenizedCorpus) -> Self {
        let mut lists = vec![Vec::new(); corpus.vocab_len()];
        for (d, (_, toks)) in corpus.docs.iter().enumerate() {
            for &t in toks {
                let list: &mut Vec<u32> = &mut lists[t as usize];
                if list.last() != Some(&(d as u32)) {
                    list.push(d as u32);
                }
            }
        }
        Self { lists }
    }

    pub fn doc_freq(&self, term: u32) -> u32 {
        self.lists.get(term as usize).map_or(0, |l| l.len() as u32)
    }

    pub fn co_doc_freq(&self, a: u32, b: u32) -> u32 {
        let (Some(la), Some(lb)) = (self.lists.get(a as usize), self.lists.get(b as usize)) else {
            return 0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < la.len() && j < lb.len() {
            match la[i].cmp(&lb[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn doc(text: &str) -> RawDocument {
        RawDocument {
            doc_id: "d".into(),
            title: text.into(),
            abstract_text: String::new(),
            year: 2015,
            source: Source::Publication,
            countries: vec![],
            orgs: vec![],
            sponsors: vec![],
        }
    }

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn replacement_joins_phrase() {
        let mut cfg = VocabPrepConfig::default();
        cfg.replacements.insert("global positioning system".into(), "global_positioning_system".into());
        let out = normalize_text(&doc("Global Positioning System accuracy"), &cfg);
        assert_eq!(out, strs(&["global_positioning_system", "accuracy"]));
    }

    #[test]
    fn multiword_stop_removed() {
        let mut cfg = VocabPrepConfig::default();
        cfg.multiword_stops.push("copyright John Wiley and Sons".into());
        let out = normalize_text(&doc("copyright John Wiley and Sons remainder"), &cfg);
        assert_eq!(out, strs(&["remainder"]));
    }

    #[test]
    fn lemma_map_without_ground_entry_keeps_ground_truth() {
        let mut cfg = VocabPrepConfig::default();
        cfg.lemma_map.insert("grinding".into(), "grind".into());
        let out = normalize_text(&doc("ground truth"), &cfg);
        assert_eq!(out, strs(&["ground", "truth"]));
    }

    #[test]
    fn replacement_survives_stopword_constituent() {
        let mut cfg = VocabPrepConfig::default();
        cfg.stopwords.insert("system".into());
        cfg.replacements.insert("operating system".into(), "operating_system".into());
        let out = normalize_text(&doc("operating system kernel system"), &cfg);
        assert_eq!(out, strs(&["operating_system", "kernel"]));
    }

    #[test]
    fn longest_replacement_wins() {
        let mut cfg = VocabPrepConfig::default();
        cfg.replacements.insert("neural network".into(), "neural_network".into());
        cfg.replacements.insert("deep neural network".into(), "deep_neural_network".into());
        let out = normalize_text(&doc("a deep neural network and a neural network"), &cfg);
        assert_eq!(out, strs(&["deep_neural_network", "and", "neural_network"]));
    }

    #[test]
    fn numbers_and_single_chars_dropped() {
        let cfg = VocabPrepConfig::default();
        let out = normalize_text(&doc("In 2016, a 3D x-ray study"), &cfg);
        assert_eq!(out, strs(&["in", "3d", "ray", "study"]));
    }

    #[test]
    fn validate_rejects_single_token_replacement_and_cycles() {
        let mut cfg = VocabPrepConfig::default();
        cfg.replacements.insert("gps".into(), "gps_".into());
        assert!(cfg.validate().is_err());

        let mut cfg = VocabPrepConfig::default();
        cfg.lemma_map.insert("a1".into(), "b1".into());
        cfg.lemma_map.insert("b1".into(), "c1".into());
        assert!(cfg.validate().is_err());

        let cfg = VocabPrepConfig { max_doc_fraction: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn over_common_token_removed() {
        let mut docs = Vec::new();
        for i in 0..100 {
            let mut toks = strs(&["filler"]);
            toks[0] = alloc::format!("tok{i}");
            if i < 6 {
                toks.push("common".into());
            }
            if i < 5 {
                toks.push("borderline".into());
            }
            docs.push((alloc::format!("d{i}"), toks));
        }
        let cfg = VocabPrepConfig::default();
        let corpus = prune_vocabulary(&docs, &cfg).unwrap();
        assert!(!corpus.vocabulary.contains(&"common".to_string()));
        assert!(corpus.vocabulary.contains(&"borderline".to_string()));
        for &f in &corpus.doc_freq {
            assert!(f as f64 / 100.0 <= 0.05);
        }
    }

    #[test]
    fn rank_pruning_matches_brute_force() {
        // doc frequencies 10..1 for tokens t0..t9
        let mut docs: Vec<(String, Vec<String>)> = (0..10).map(|d| (alloc::format!("d{d}"), Vec::new())).collect();
        for t in 0..10usize {
            for d in 0..(10 - t) {
                docs[d].1.push(alloc::format!("t{t}"));
                docs[d].1.push(alloc::format!("t{t}"));
            }
        }
        let cfg = VocabPrepConfig { max_doc_fraction: 1.0, vocab_size: 5, ..Default::default() };
        let corpus = prune_vocabulary(&docs, &cfg).unwrap();

        let mut oracle: Vec<(String, usize)> = (0..10)
            .map(|t| {
                let name = alloc::format!("t{t}");
                let df = docs.iter().filter(|(_, toks)| toks.contains(&name)).count();
                (name, df)
            })
            .collect();
        oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<String> = oracle[..5].iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(corpus.vocabulary, expected);
        assert_eq!(corpus.lower_cutoff as usize, oracle[4].1);
        assert_eq!(corpus.lower_cutoff, 6);
        for (_, toks) in &corpus.docs {
            assert!(toks.iter().all(|&t| (t as usize) < corpus.vocab_len()));
        }
    }

    #[test]
    fn large_vocab_size_is_noop() {
        let docs: Vec<(String, Vec<String>)> =
            (0..50).map(|i| (alloc::format!("d{i}"), vec![alloc::format!("w{i}")])).collect();
        let cfg = VocabPrepConfig { max_doc_fraction: 1.0, vocab_size: 200_000, ..Default::default() };
        let corpus = prune_vocabulary(&docs, &cfg).unwrap();
        assert_eq!(corpus.vocab_len(), 50);
        assert_eq!(corpus.lower_cutoff, 1);
    }

    #[test]
    fn postings_count_co_documents() {
        let docs = vec![
            ("a".to_string(), strs(&["x1", "y1", "x1"])),
            ("b".to_string(), strs(&["x1"])),
            ("c".to_string(), strs(&["y1", "z1"])),
        ];
        let cfg = VocabPrepConfig { max_doc_fraction: 1.0, ..Default::default() };
        let corpus = prune_vocabulary(&docs, &cfg).unwrap();
        let idx = corpus.token_index();
        let p = Postings::new(&corpus);
        assert_eq!(p.doc_freq(idx["x1"]), 2);
        assert_eq!(p.co_doc_freq(idx["x1"], idx["y1"]), 1);
        assert_eq!(p.co_doc_freq(idx["x1"], idx["z1"]), 0);
    }

    proptest::proptest! {
        #[test]
        fn pruning_is_deterministic_and_respects_ceiling(
            raw in proptest::collection::vec(proptest::collection::vec(0u8..30, 0..12), 1..40),
            frac in 0.05f64..1.0,
            vocab in 1usize..40,
        ) {
            let docs: Vec<(String, Vec<String>)> = raw
                .iter()
                .enumerate()
                .map(|(i, toks)| (alloc::format!("d{i}"), toks.iter().map(|t| alloc::format!("w{t}")).collect()))
                .collect();
            let cfg = VocabPrepConfig { max_doc_fraction: frac, vocab_size: vocab, ..Default::default() };
            let a = prune_vocabulary(&docs, &cfg).unwrap();
            let b = prune_vocabulary(&docs, &cfg).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert!(a.vocab_len() <= vocab);
            for &f in &a.doc_freq {
                proptest::prop_assert!(f >= 1);
                proptest::prop_assert!(f as f64 / docs.len() as f64 <= frac);
            }
        }
    }
}
