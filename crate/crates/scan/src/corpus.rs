//! Line-delimited JSON corpus loading, vocabulary-preparation map files and
//! the tokenized corpus / vocabulary text formats.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use horizon_core::growth::YearWindow;
use horizon_core::text::{prune_vocabulary, Normalizer, RawDocument, Source, TokenizedCorpus, VocabPrepConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{IoContext, Result, ScanError};

/// Field names used in the input records for each document attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub doc_id: String,
    pub title: String,
    pub abstract_text: String,
    pub year: String,
    pub source: String,
    pub countries: String,
    pub orgs: String,
    pub sponsors: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            doc_id: "doc_id".into(),
            title: "title".into(),
            abstract_text: "abstract".into(),
            year: "year".into(),
            source: "source".into(),
            countries: "countries".into(),
            orgs: "orgs".into(),
            sponsors: "sponsors".into(),
        }
    }
}

impl Schema {
    /// `field = input_name` lines; unlisted fields keep their default name.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut s = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ScanError::format(path, i + 1, "expected field = name"))?;
            let v = v.trim().to_string();
            match k.trim() {
                "doc_id" => s.doc_id = v,
                "title" => s.title = v,
                "abstract" => s.abstract_text = v,
                "year" => s.year = v,
                "source" => s.source = v,
                "countries" => s.countries = v,
                "orgs" => s.orgs = v,
                "sponsors" => s.sponsors = v,
                other => return Err(ScanError::format(path, i + 1, format!("unknown field {other:?}"))),
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
    pub record: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub docs: Vec<RawDocument>,
    pub rejects: Vec<Reject>,
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &str) -> std::result::Result<String, String> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::Null) | None => Err(format!("missing {name}")),
        Some(_) => Err(format!("{name} is not a string")),
    }
}

fn list_field(obj: &serde_json::Map<String, Value>, name: &str) -> std::result::Result<Vec<String>, String> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("{name} must hold strings")))
            .collect(),
        Some(_) => Err(format!("{name} is not an array")),
    }
}

fn parse_record(line: &str, schema: &Schema, window: Option<YearWindow>) -> std::result::Result<RawDocument, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let year = match obj.get(&schema.year) {
        Some(Value::Number(n)) => n.as_i64().ok_or("year is not an integer")?,
        Some(Value::String(s)) => s.trim().parse::<i64>().map_err(|_| "year is not an integer")?,
        _ => return Err("missing year".into()),
    };
    let year = i32::try_from(year).map_err(|_| "year out of range")?;
    if let Some(w) = window {
        if !w.contains(year) {
            return Err(format!("year {year} outside {}..={}", w.first, w.last));
        }
    }
    let source: Source = match obj.get(&schema.source) {
        Some(Value::String(s)) => s.parse().map_err(|e: horizon_core::Error| e.to_string())?,
        _ => return Err("missing source".into()),
    };
    let doc_id = string_field(obj, &schema.doc_id)?;
    if doc_id.is_empty() || doc_id.contains(char::is_whitespace) {
        return Err(format!("doc_id {doc_id:?} is empty or contains whitespace"));
    }
    Ok(RawDocument {
        doc_id,
        title: string_field(obj, &schema.title)?,
        abstract_text: string_field(obj, &schema.abstract_text)?,
        year,
        source,
        countries: list_field(obj, &schema.countries)?,
        orgs: list_field(obj, &schema.orgs)?,
        sponsors: list_field(obj, &schema.sponsors)?,
    })
}

/// Reads one JSON object per line. Malformed records are collected as
/// rejects; a repeated `doc_id` is an error.
pub fn load_corpus(path: &Path, schema: &Schema, window: Option<YearWindow>) -> Result<LoadReport> {
    let file = File::open(path).at(path)?;
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, schema, window) {
            Ok(doc) => {
                if !seen.insert(doc.doc_id.clone()) {
                    return Err(ScanError::Input(format!("{}: duplicate doc_id {:?} on line {}", path.display(), doc.doc_id, i + 1)));
                }
                report.docs.push(doc);
            }
            Err(reason) => report.rejects.push(Reject { line: i + 1, reason, record: line }),
        }
    }
    log::info!("loaded {} documents, {} rejects from {}", report.docs.len(), report.rejects.len(), path.display());
    Ok(report)
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for r in rejects {
        serde_json::to_writer(&mut w, r).map_err(|e| ScanError::Input(e.to_string()))?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

/// Accepted documents in the default schema, one JSON object per line.
pub fn write_documents(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(|e| ScanError::Input(e.to_string()))?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

pub fn read_documents(path: &Path) -> Result<Vec<RawDocument>> {
    let file = File::open(path).at(path)?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l.at(path)?;
            serde_json::from_str(&l).map_err(|e| ScanError::format(path, i + 1, e.to_string()))
        })
        .collect()
}

/// One entry per non-blank line, lowercased.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).at(path)?;
    Ok(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect())
}

/// `from<TAB>to` lines.
pub fn load_tsv_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).at(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (from, to) = line.split_once('\t').ok_or_else(|| ScanError::format(path, i + 1, "expected from<TAB>to"))?;
        map.insert(from.trim().to_lowercase(), to.trim().to_lowercase());
    }
    Ok(map)
}

pub fn vocab_config(cfg: &PipelineConfig) -> Result<VocabPrepConfig> {
    let v = VocabPrepConfig {
        stopwords: match &cfg.stopwords {
            Some(p) => load_word_list(p)?.into_iter().collect(),
            None => BTreeSet::new(),
        },
        multiword_stops: match &cfg.multiword_stops {
            Some(p) => load_word_list(p)?,
            None => Vec::new(),
        },
        lemma_map: match &cfg.lemma_map {
            Some(p) => load_tsv_map(p)?,
            None => BTreeMap::new(),
        },
        replacements: match &cfg.replacements {
            Some(p) => load_tsv_map(p)?,
            None => BTreeMap::new(),
        },
        max_doc_fraction: cfg.max_doc_fraction,
        vocab_size: cfg.vocab_size,
    };
    v.validate()?;
    Ok(v)
}

/// Normalizes documents in parallel, then prunes the vocabulary.
pub fn tokenize(docs: &[RawDocument], cfg: &VocabPrepConfig) -> Result<TokenizedCorpus> {
    let normalizer = Normalizer::new(cfg);
    let normalized: Vec<(String, Vec<String>)> =
        docs.par_iter().map(|d| (d.doc_id.clone(), normalizer.normalize(&d.text()))).collect();
    Ok(prune_vocabulary(&normalized, cfg)?)
}

/// `doc_id idx idx ...` per document and `index<TAB>token<TAB>doc_freq` per
/// vocabulary entry.
pub fn write_tokenized(corpus: &TokenizedCorpus, tokens: &Path, vocab: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(tokens).at(tokens)?);
    for (id, toks) in &corpus.docs {
        w.write_all(id.as_bytes()).at(tokens)?;
        for t in toks {
            write!(w, " {t}").at(tokens)?;
        }
        w.write_all(b"\n").at(tokens)?;
    }
    w.flush().at(tokens)?;
    let mut w = BufWriter::new(File::create(vocab).at(vocab)?);
    for (i, (tok, df)) in corpus.vocabulary.iter().zip(&corpus.doc_freq).enumerate() {
        writeln!(w, "{i}\t{tok}\t{df}").at(vocab)?;
    }
    w.flush().at(vocab)
}

pub fn read_tokenized(tokens: &Path, vocab: &Path) -> Result<TokenizedCorpus> {
    let mut vocabulary = Vec::new();
    let mut doc_freq = Vec::new();
    let text = std::fs::read_to_string(vocab).at(vocab)?;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split('\t');
        let (Some(idx), Some(tok), Some(df), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(ScanError::format(vocab, i + 1, "expected index<TAB>token<TAB>doc_freq"));
        };
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(ScanError::format(vocab, i + 1, format!("index {idx} out of sequence")));
        }
        vocabulary.push(tok.to_string());
        doc_freq.push(df.parse().map_err(|_| ScanError::format(vocab, i + 1, "doc_freq is not an integer"))?);
    }
    let text = std::fs::read_to_string(tokens).at(tokens)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split(' ');
        let id = parts.next().unwrap_or_default().to_string();
        let toks = parts
            .map(|t| match t.parse::<u32>() {
                Ok(v) if (v as usize) < vocabulary.len() => Ok(v),
                _ => Err(ScanError::format(tokens, i + 1, format!("bad token index {t:?}"))),
            })
            .collect::<Result<Vec<u32>>>()?;
        docs.push((id, toks));
    }
    let lower_cutoff = doc_freq.last().copied().unwrap_or(0);
    Ok(TokenizedCorpus { docs, vocabulary, doc_freq, lower_cutoff })
}
