//! The gzip Gibbs state format and the topic diagnostics XML.
//!
//! State files start with the header `#doc source pos typeindex type topic`
//! followed by `#alpha : a_0 a_1 ...` and `#beta : b`; every other line is
//! one token. Documents without tokens do not appear in the file.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use horizon_core::lda::{CoherenceOrigin, DocAssignments, GibbsState, TopicDiagnostics};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{IoContext, Result, ScanError};

pub const STATE_HEADER: &str = "#doc source pos typeindex type topic";

/// A parsed state file: assignments plus the vocabulary recovered from the
/// `typeindex`/`type` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MalletState {
    pub state: GibbsState,
    /// Indexed by type index; indices never seen in the file stay empty.
    pub vocabulary: Vec<String>,
}

pub fn gunzip(path: &Path) -> Result<String> {
    let file = std::fs::File::open(path).at(path)?;
    let mut text = String::new();
    GzDecoder::new(file).read_to_string(&mut text).at(path)?;
    Ok(text)
}

/// Gzip with a zeroed timestamp so identical text gives identical bytes.
pub fn gzip_bytes(text: &[u8]) -> Vec<u8> {
    let mut enc: GzEncoder<Vec<u8>> = GzBuilder::new().mtime(0).write(Vec::new(), Compression::default());
    enc.write_all(text).expect("writing to memory");
    enc.finish().expect("writing to memory")
}

pub fn write_gzip(path: &Path, text: &[u8]) -> Result<()> {
    std::fs::write(path, gzip_bytes(text)).at(path)
}

fn float_list(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ScanError::format(path, line, format!("not a number: {t:?}"))))
        .collect()
}

pub fn parse_state_text(path: &Path, text: &str) -> Result<MalletState> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == STATE_HEADER => {}
        _ => return Err(ScanError::format(path, 1, format!("missing header {STATE_HEADER:?}"))),
    }
    let mut alpha = None;
    let mut beta = None;
    let mut docs: Vec<DocAssignments> = Vec::new();
    let mut vocabulary: Vec<Option<String>> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest
                .split_once(':')
                .ok_or_else(|| ScanError::format(path, lineno, "expected #name : values"))?;
            match key.trim() {
                "alpha" => alpha = Some(float_list(path, lineno, value)?),
                "beta" => {
                    let b = float_list(path, lineno, value)?;
                    if b.len() != 1 {
                        return Err(ScanError::format(path, lineno, "beta must be a single value"));
                    }
                    beta = Some(b[0]);
                }
                other => return Err(ScanError::format(path, lineno, format!("unknown comment line #{other}"))),
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if alpha.is_none() || beta.is_none() {
            return Err(ScanError::format(path, lineno, "token line before #alpha and #beta"));
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(ScanError::format(path, lineno, format!("expected 6 fields, found {}", f.len())));
        }
        let int = |idx: usize, name: &str| {
            f[idx].parse::<usize>().map_err(|_| ScanError::format(path, lineno, format!("{name} is not an integer: {:?}", f[idx])))
        };
        let (d, pos, w, z) = (int(0, "doc")?, int(2, "pos")?, int(3, "typeindex")?, int(5, "topic")?);
        if d + 1 < docs.len() {
            return Err(ScanError::format(path, lineno, format!("document {d} out of order")));
        }
        while docs.len() <= d {
            docs.push(DocAssignments { source: f[1].to_string(), types: Vec::new(), topics: Vec::new() });
        }
        let doc = &mut docs[d];
        if pos != doc.types.len() {
            return Err(ScanError::format(path, lineno, format!("position {pos} out of sequence, expected {}", doc.types.len())));
        }
        if vocabulary.len() <= w {
            vocabulary.resize(w + 1, None);
        }
        match &vocabulary[w] {
            Some(t) if t != f[4] => {
                return Err(ScanError::format(path, lineno, format!("type index {w} is {t:?} earlier but {:?} here", f[4])))
            }
            Some(_) => {}
            None => vocabulary[w] = Some(f[4].to_string()),
        }
        doc.types.push(w as u32);
        doc.topics.push(z as u32);
    }
    let alpha = alpha.ok_or_else(|| ScanError::format(path, 2, "missing #alpha line"))?;
    let beta = beta.ok_or_else(|| ScanError::format(path, 3, "missing #beta line"))?;
    let state = GibbsState { alpha, beta, docs };
    let vocabulary: Vec<String> = vocabulary.into_iter().map(Option::unwrap_or_default).collect();
    state.validate(vocabulary.len()).map_err(|e| ScanError::format(path, 0, e.to_string()))?;
    Ok(MalletState { state, vocabulary })
}

pub fn parse_state(path: &Path) -> Result<MalletState> {
    parse_state_text(path, &gunzip(path)?)
}

pub fn state_text(state: &GibbsState, vocabulary: &[String]) -> String {
    let mut s = String::new();
    s.push_str(STATE_HEADER);
    s.push('\n');
    s.push_str("#alpha :");
    for a in &state.alpha {
        let _ = write!(s, " {a}");
    }
    let _ = writeln!(s, "\n#beta : {}", state.beta);
    for (d, doc) in state.docs.iter().enumerate() {
        for (pos, (&w, &z)) in doc.types.iter().zip(&doc.topics).enumerate() {
            let _ = writeln!(s, "{d} {} {pos} {w} {} {z}", doc.source, vocabulary[w as usize]);
        }
    }
    s
}

pub fn write_state(path: &Path, state: &GibbsState, vocabulary: &[String]) -> Result<()> {
    write_gzip(path, state_text(state, vocabulary).as_bytes())
}

fn line_col(text: &str, offset: u64) -> (usize, usize) {
    let upto = &text.as_bytes()[..(offset as usize).min(text.len())];
    let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = upto.len() - upto.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

fn xml_error(path: &Path, text: &str, offset: u64, message: impl std::fmt::Display) -> ScanError {
    let (line, col) = line_col(text, offset);
    ScanError::format(path, line, format!("column {col}: {message}"))
}

fn attr<'a>(e: &'a BytesStart<'a>, name: &[u8]) -> std::result::Result<Option<Cow<'a, str>>, String> {
    for a in e.attributes() {
        let a = a.map_err(|e| e.to_string())?;
        if a.key.as_ref() == name {
            return a.unescape_value().map(Some).map_err(|e| e.to_string());
        }
    }
    Ok(None)
}

fn topic_start(e: &BytesStart<'_>) -> std::result::Result<TopicDiagnostics, String> {
    let id = attr(e, b"id")?.ok_or("topic without id")?;
    let topic_id = id.trim().parse().map_err(|_| format!("topic id {id:?} is not an integer"))?;
    let coherence = match attr(e, b"coherence")? {
        Some(c) => Some(c.trim().parse::<f64>().map_err(|_| format!("coherence {c:?} is not a number"))?),
        None => None,
    };
    let token_count = match attr(e, b"tokens")? {
        Some(t) => t.trim().parse::<f64>().map_err(|_| format!("tokens {t:?} is not a number"))?,
        None => 0.0,
    };
    // Our own files mark values they computed; anything else was parsed.
    let coherence_origin = match attr(e, b"origin")?.as_deref() {
        Some("recomputed") => CoherenceOrigin::Recomputed,
        _ => CoherenceOrigin::Parsed,
    };
    Ok(TopicDiagnostics {
        topic_id,
        coherence: coherence.filter(|c| c.is_finite()),
        coherence_origin,
        top_terms: Vec::new(),
        token_count,
    })
}

fn word_weight(e: &BytesStart<'_>) -> std::result::Result<f64, String> {
    for name in [&b"prob"[..], b"weight", b"count"] {
        if let Some(v) = attr(e, name)? {
            return v.trim().parse().map_err(|_| format!("word weight {v:?} is not a number"));
        }
    }
    Ok(f64::NAN)
}

/// One entry per `topic` element; `word` children become the ranked terms in
/// document order. A topic without a `coherence` attribute gets `None`.
pub fn parse_diagnostics_text(path: &Path, text: &str) -> Result<Vec<TopicDiagnostics>> {
    let mut reader = Reader::from_str(text);
    let mut out = Vec::new();
    let mut current: Option<TopicDiagnostics> = None;
    let mut word: Option<(f64, String)> = None;
    loop {
        let offset = reader.buffer_position();
        let event = reader.read_event().map_err(|e| xml_error(path, text, reader.error_position(), e))?;
        match event {
            Event::Start(e) if e.name().as_ref() == b"topic" => {
                if current.is_some() {
                    return Err(xml_error(path, text, offset, "nested topic element"));
                }
                current = Some(topic_start(&e).map_err(|m| xml_error(path, text, offset, m))?);
            }
            Event::Empty(e) if e.name().as_ref() == b"topic" => {
                out.push(topic_start(&e).map_err(|m| xml_error(path, text, offset, m))?);
            }
            Event::Start(e) if e.name().as_ref() == b"word" => {
                if current.is_none() {
                    return Err(xml_error(path, text, offset, "word outside a topic"));
                }
                word = Some((word_weight(&e).map_err(|m| xml_error(path, text, offset, m))?, String::new()));
            }
            Event::Text(t) => {
                if let Some((_, w)) = word.as_mut() {
                    w.push_str(&t.unescape().map_err(|e| xml_error(path, text, offset, e))?);
                }
            }
            Event::End(e) if e.name().as_ref() == b"word" => {
                if let (Some((weight, term)), Some(topic)) = (word.take(), current.as_mut()) {
                    topic.top_terms.push((term.trim().to_string(), weight));
                }
            }
            Event::End(e) if e.name().as_ref() == b"topic" => {
                out.extend(current.take());
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(xml_error(path, text, text.len() as u64, "unterminated topic element"));
    }
    Ok(out)
}

pub fn parse_diagnostics(path: &Path) -> Result<Vec<TopicDiagnostics>> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_diagnostics_text(path, &text)
}

pub fn diagnostics_xml(topics: &[TopicDiagnostics]) -> String {
    let esc = quick_xml::escape::escape;
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<model>\n");
    for t in topics {
        let _ = write!(s, "<topic id=\"{}\" tokens=\"{}\"", t.topic_id, t.token_count);
        if let Some(c) = t.coherence {
            let _ = write!(s, " coherence=\"{c}\"");
        }
        if t.coherence_origin == CoherenceOrigin::Recomputed {
            s.push_str(" origin=\"recomputed\"");
        }
        s.push_str(">\n");
        for (rank, (term, weight)) in t.top_terms.iter().enumerate() {
            let _ = writeln!(s, "<word rank=\"{}\" prob=\"{weight}\">{}</word>", rank + 1, esc(term.as_str()));
        }
        s.push_str("</topic>\n");
    }
    s.push_str("</model>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("fixture")
    }

    #[test]
    fn alpha_line_parsed() {
        let text = format!("{STATE_HEADER}\n#alpha : 0.1 0.2\n#beta : 0.01\n0 NA 0 0 graphene 1\n0 NA 1 1 sensor 0\n1 d1 0 0 graphene 0\n");
        let m = parse_state_text(p(), &text).unwrap();
        assert_eq!(m.state.alpha, vec![0.1, 0.2]);
        assert_eq!(m.state.beta, 0.01);
        assert_eq!(m.vocabulary, vec!["graphene", "sensor"]);
        assert_eq!(m.state.docs[0].topics, vec![1, 0]);
        assert_eq!(m.state.docs[1].source, "d1");
        assert_eq!(state_text(&m.state, &m.vocabulary), text);
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        let cases = [
            ("#doc wrong\n".to_string(), 1),
            (format!("{STATE_HEADER}\n#alpha : 0.1 0.2\n#beta : 0.01\n0 NA 0 0 w x\n"), 4),
            (format!("{STATE_HEADER}\n0 NA 0 0 w 1\n"), 2),
            (format!("{STATE_HEADER}\n#alpha : 0.1 0.2\n#beta : 0.01\n0 NA 0 0 w 0\n0 NA 1 0 v 0\n"), 5),
        ];
        for (text, line) in cases {
            match parse_state_text(p(), &text) {
                Err(ScanError::Format { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn topic_out_of_range_rejected() {
        let text = format!("{STATE_HEADER}\n#alpha : 0.1 0.2\n#beta : 0.01\n0 NA 0 0 w 2\n");
        assert!(parse_state_text(p(), &text).is_err());
    }

    #[test]
    fn diagnostics_fixture() {
        let xml = r#"<?xml version="1.0" encoding="UTF-8"?>
<model>
<topic id="4102" tokens="512.5" coherence="-439" exclusivity="0.8">
<word rank="1" count="90" prob="0.2">blockchain</word>
<word rank="2" count="40" prob="0.1">ledger</word>
<word rank="3" count="20" prob="0.05">smart_contract</word>
</topic>
<topic id="7190" tokens="10">
<word rank="1" prob="0.5">und</word>
</topic>
</model>"#;
        let d = parse_diagnostics_text(p(), xml).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].coherence, Some(-439.0));
        assert_eq!(d[0].top_terms.len(), 3);
        assert_eq!(d[0].top_terms[2], ("smart_contract".to_string(), 0.05));
        assert_eq!(d[0].token_count, 512.5);
        assert_eq!(d[1].coherence, None);
        let again = parse_diagnostics_text(p(), &diagnostics_xml(&d)).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn empty_model_and_corrupt_xml() {
        assert!(parse_diagnostics_text(p(), "<model></model>").unwrap().is_empty());
        assert!(parse_diagnostics_text(p(), "<model/>").unwrap().is_empty());
        let err = parse_diagnostics_text(p(), "<model>\n<topic id=\"1\">\n<word>a</wrd>\n</topic></model>").unwrap_err();
        match err {
            ScanError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_diagnostics_text(p(), "<model><topic id=\"x\"></topic></model>").is_err());
    }
}
