//! Analyst label store: an append-only JSON-lines journal.
//!
//! Every accepted write is one line, flushed to disk before it is
//! acknowledged. Replaying the journal rebuilds the current labels, their
//! history and the controlled super-topic list. A trailing line without a
//! newline or that does not parse is a write cut short by a crash; it is
//! dropped and the journal rewritten through a temporary file and an atomic
//! rename.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, ScanError};

/// Above this many super topics a write still succeeds but carries a warning.
pub const SUPERTOPIC_SOFT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JunkReason {
    NonTechnical,
    Mixed,
    Trivial,
    NonSpecific,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabelRecord {
    pub topic_id: u32,
    pub topic_name: String,
    pub super_topic_name: String,
    pub junk: bool,
    pub junk_reason: JunkReason,
    pub updated_at: DateTime<Utc>,
    pub author: String,
}

/// The analyst-editable part of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDraft {
    #[serde(default)]
    pub topic_name: String,
    #[serde(default)]
    pub super_topic_name: String,
    #[serde(default)]
    pub junk: bool,
    #[serde(default)]
    pub junk_reason: JunkReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Event {
    Label(TopicLabelRecord),
    SupertopicAdd { name: String },
    SupertopicRemove { name: String },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("topic {0} does not exist")]
    UnknownTopic(u32),
    #[error("super topic {0:?} is not registered")]
    UnregisteredSuperTopic(String),
    #[error("super topic {0:?} is still assigned to topic(s) {1:?}")]
    SuperTopicInUse(String, Vec<u32>),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelState {
    pub current: BTreeMap<u32, TopicLabelRecord>,
    /// Superseded records per topic, oldest first.
    pub history: BTreeMap<u32, Vec<TopicLabelRecord>>,
    pub supertopics: BTreeSet<String>,
}

impl LabelState {
    fn apply(&mut self, ev: Event) {
        match ev {
            Event::Label(r) => {
                if let Some(prev) = self.current.insert(r.topic_id, r) {
                    self.history.entry(prev.topic_id).or_default().push(prev);
                }
            }
            Event::SupertopicAdd { name } => {
                self.supertopics.insert(name);
            }
            Event::SupertopicRemove { name } => {
                self.supertopics.remove(&name);
            }
        }
    }

    pub fn is_junk(&self, topic: u32) -> bool {
        self.current.get(&topic).is_some_and(|r| r.junk)
    }

    /// Member topics of each super topic, by name.
    pub fn supertopic_members(&self) -> BTreeMap<String, Vec<u32>> {
        let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for r in self.current.values().filter(|r| !r.super_topic_name.is_empty()) {
            out.entry(r.super_topic_name.clone()).or_default().push(r.topic_id);
        }
        out
    }

    pub fn supertopic_warning(&self) -> Option<String> {
        (self.supertopics.len() > SUPERTOPIC_SOFT_LIMIT).then(|| {
            format!("{} super topics registered; keeping the list under {SUPERTOPIC_SOFT_LIMIT} is recommended", self.supertopics.len())
        })
    }

    fn events(&self) -> Vec<Event> {
        let mut ev: Vec<Event> = self.supertopics.iter().map(|n| Event::SupertopicAdd { name: n.clone() }).collect();
        for (topic, rec) in &self.current {
            for old in self.history.get(topic).into_iter().flatten() {
                ev.push(Event::Label(old.clone()));
            }
            ev.push(Event::Label(rec.clone()));
        }
        ev
    }
}

fn validate_name(what: &str, name: &str) -> std::result::Result<(), LabelError> {
    if name.trim() != name || name.contains(['\n', '\r']) {
        return Err(LabelError::Invalid(format!("{what} must not have surrounding whitespace or line breaks")));
    }
    Ok(())
}

pub fn validate_draft(d: &LabelDraft, supertopics: &BTreeSet<String>) -> std::result::Result<(), LabelError> {
    validate_name("topic_name", &d.topic_name)?;
    if d.junk && d.junk_reason == JunkReason::None {
        return Err(LabelError::Invalid("a junk topic needs a junk_reason other than none".into()));
    }
    if !d.junk && d.junk_reason != JunkReason::None {
        return Err(LabelError::Invalid("junk_reason is only allowed on junk topics".into()));
    }
    if !d.super_topic_name.is_empty() && !supertopics.contains(&d.super_topic_name) {
        return Err(LabelError::UnregisteredSuperTopic(d.super_topic_name.clone()));
    }
    Ok(())
}

fn event_line(ev: &Event) -> Vec<u8> {
    let mut line = serde_json::to_vec(ev).expect("label events serialize");
    line.push(b'\n');
    line
}

/// Reads the journal without modifying it. Returns the state and whether a
/// torn trailing line was skipped.
pub fn replay(path: &Path) -> Result<(LabelState, bool)> {
    let mut state = LabelState::default();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((state, false)),
        Err(e) => return Err(ScanError::io(path, e)),
    };
    let mut torn = false;
    let lines: Vec<&[u8]> = bytes.split_inclusive(|&b| b == b'\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let last = i + 1 == lines.len();
        let complete = raw.ends_with(b"\n");
        let body = raw.strip_suffix(b"\n").unwrap_or(raw);
        if body.iter().all(u8::is_ascii_whitespace) {
            torn |= !complete;
            continue;
        }
        match serde_json::from_slice::<Event>(body) {
            Ok(ev) if complete => state.apply(ev),
            _ if last => torn = true,
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => return Err(ScanError::format(path, i + 1, format!("corrupt label journal entry: {e}"))),
        }
    }
    Ok((state, torn))
}

pub struct LabelStore {
    path: PathBuf,
    state: LabelState,
    num_topics: usize,
}

impl LabelStore {
    /// Opens (creating if needed) the journal for a model with `num_topics`
    /// topics, compacting away a torn trailing line.
    pub fn open(path: &Path, num_topics: usize) -> Result<Self> {
        let (state, torn) = replay(path)?;
        let store = Self { path: path.to_path_buf(), state, num_topics };
        if torn {
            log::warn!("{}: dropping an incomplete trailing entry", path.display());
            store.compact()?;
        } else if !path.exists() {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).at(dir)?;
            }
            File::create(path).at(path)?;
        }
        Ok(store)
    }

    pub fn state(&self) -> &LabelState {
        &self.state
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rewrites the journal from the in-memory state. History is kept.
    pub fn compact(&self) -> Result<()> {
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp).at(&tmp)?;
            for ev in self.state.events() {
                f.write_all(&event_line(&ev)).at(&tmp)?;
            }
            f.sync_all().at(&tmp)?;
        }
        std::fs::rename(&tmp, &self.path).at(&self.path)?;
        if let Some(dir) = self.path.parent().and_then(|d| File::open(d).ok()) {
            let _ = dir.sync_all();
        }
        Ok(())
    }

    fn append(&mut self, ev: Event) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).at(&self.path)?;
        f.write_all(&event_line(&ev)).at(&self.path)?;
        f.sync_data().at(&self.path)?;
        self.state.apply(ev);
        Ok(())
    }

    pub fn put_label(&mut self, topic_id: u32, draft: LabelDraft, author: &str, now: DateTime<Utc>) -> std::result::Result<TopicLabelRecord, StoreError> {
        if topic_id as usize >= self.num_topics {
            return Err(LabelError::UnknownTopic(topic_id).into());
        }
        validate_draft(&draft, &self.state.supertopics)?;
        let rec = TopicLabelRecord {
            topic_id,
            topic_name: draft.topic_name,
            super_topic_name: draft.super_topic_name,
            junk: draft.junk,
            junk_reason: draft.junk_reason,
            updated_at: now,
            author: author.to_string(),
        };
        self.append(Event::Label(rec.clone()))?;
        Ok(rec)
    }

    /// Registers a super topic; adding an existing name is a no-op.
    pub fn add_supertopic(&mut self, name: &str) -> std::result::Result<(), StoreError> {
        validate_name("name", name)?;
        if name.is_empty() {
            return Err(LabelError::Invalid("super topic name must not be empty".into()).into());
        }
        if !self.state.supertopics.contains(name) {
            self.append(Event::SupertopicAdd { name: name.to_string() })?;
        }
        Ok(())
    }

    pub fn remove_supertopic(&mut self, name: &str) -> std::result::Result<(), StoreError> {
        if !self.state.supertopics.contains(name) {
            return Err(LabelError::UnregisteredSuperTopic(name.to_string()).into());
        }
        let users: Vec<u32> =
            self.state.current.values().filter(|r| r.super_topic_name == name).map(|r| r.topic_id).collect();
        if !users.is_empty() {
            return Err(LabelError::SuperTopicInUse(name.to_string(), users).into());
        }
        self.append(Event::SupertopicRemove { name: name.to_string() })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(name: &str, sup: &str) -> LabelDraft {
        LabelDraft { topic_name: name.into(), super_topic_name: sup.into(), junk: false, junk_reason: JunkReason::None }
    }

    fn t(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
    }

    #[test]
    fn last_write_wins_and_history_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("journal.jsonl");
        let mut s = LabelStore::open(&p, 400).unwrap();
        s.add_supertopic("Neural Networks").unwrap();
        let first = s.put_label(350, draft("Learning", "Neural Networks"), "a1", t(0)).unwrap();
        let second = s.put_label(350, draft("Deep Learning", "Neural Networks"), "a2", t(1)).unwrap();
        drop(s);
        let s = LabelStore::open(&p, 400).unwrap();
        assert_eq!(s.state().current[&350], second);
        assert_eq!(s.state().history[&350], vec![first]);
        assert_eq!(s.state().supertopic_members()["Neural Networks"], vec![350]);
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = LabelStore::open(&dir.path().join("j.jsonl"), 10).unwrap();
        let junk_none = LabelDraft { junk: true, ..draft("x", "") };
        assert!(matches!(s.put_label(1, junk_none, "a", t(0)), Err(StoreError::Label(LabelError::Invalid(_)))));
        assert!(matches!(
            s.put_label(1, draft("x", "Nope"), "a", t(0)),
            Err(StoreError::Label(LabelError::UnregisteredSuperTopic(_)))
        ));
        assert!(matches!(s.put_label(10, draft("x", ""), "a", t(0)), Err(StoreError::Label(LabelError::UnknownTopic(10)))));
        let junk = LabelDraft { junk: true, junk_reason: JunkReason::Mixed, ..draft("", "") };
        assert!(s.put_label(1, junk, "a", t(0)).unwrap().junk);
        assert!(s.state().is_junk(1));
    }

    #[test]
    fn supertopic_removal_guarded_and_soft_limit() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = LabelStore::open(&dir.path().join("j.jsonl"), 10).unwrap();
        s.add_supertopic("A").unwrap();
        s.put_label(2, draft("t", "A"), "a", t(0)).unwrap();
        assert!(matches!(s.remove_supertopic("A"), Err(StoreError::Label(LabelError::SuperTopicInUse(_, _)))));
        s.put_label(2, draft("t", ""), "a", t(1)).unwrap();
        s.remove_supertopic("A").unwrap();
        for i in 0..=SUPERTOPIC_SOFT_LIMIT {
            s.add_supertopic(&format!("S{i}")).unwrap();
        }
        assert!(s.state().supertopic_warning().is_some());
    }

    #[test]
    fn torn_tail_dropped_and_compacted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let mut s = LabelStore::open(&p, 10).unwrap();
        let old = s.put_label(3, draft("old", ""), "a", t(0)).unwrap();
        drop(s);
        let full = std::fs::read(&p).unwrap();
        let newer = event_line(&Event::Label(TopicLabelRecord { topic_name: "new".into(), ..old.clone() }));
        for cut in [1, newer.len() / 2, newer.len() - 1] {
            let mut bytes = full.clone();
            bytes.extend_from_slice(&newer[..cut]);
            std::fs::write(&p, &bytes).unwrap();
            let s = LabelStore::open(&p, 10).unwrap();
            assert_eq!(s.state().current[&3], old);
            assert_eq!(std::fs::read(&p).unwrap(), full);
        }
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        std::fs::write(&p, "{garbage\n{\"kind\":\"supertopic_add\",\"name\":\"A\"}\n").unwrap();
        assert!(matches!(LabelStore::open(&p, 10), Err(ScanError::Format { line: 1, .. })));
    }
}
