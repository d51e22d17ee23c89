mod common;

use horizon_scan::config::PipelineConfig;
use horizon_scan::corpus::read_tokenized;
use horizon_scan::pipeline::{self, CorpusStats, Workspace};
use horizon_scan::ScanError;

fn config(dir: &std::path::Path, corpus: &str) -> PipelineConfig {
    let path = dir.join("corpus.jsonl");
    std::fs::write(&path, corpus).unwrap();
    PipelineConfig { corpus: Some(path), max_doc_fraction: 1.0, out: dir.join("w"), ..Default::default() }
}

const RECORDS: &str = r#"{"doc_id":"p1","title":"Graphene Sensors","abstract":"Graphene sensors detect gas.","year":2015,"source":"publication","countries":["US"]}
{"doc_id":"p2","title":"Sensor arrays","abstract":"Arrays of graphene sensors.","year":"2016","source":"patent"}
not json at all
{"doc_id":"p3","title":"Old","abstract":"Too old.","year":1999,"source":"publication"}
{"doc_id":"p4","title":"No source","abstract":"x","year":2016}

{"doc_id":"p5","title":"Grant","abstract":"Funding for sensors.","year":2017,"source":"grant","sponsors":["NSF"]}
"#;

#[test]
fn rejects_are_recorded_with_line_and_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), RECORDS);
    let ws = Workspace::new(&cfg.out);
    let stats = pipeline::ingest(&cfg, &ws).unwrap();
    assert_eq!((stats.documents, stats.rejects), (3, 3));
    let rejects: Vec<serde_json::Value> =
        common::read(&ws.path("corpus/rejects.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let lines: Vec<u64> = rejects.iter().map(|r| r["line"].as_u64().unwrap()).collect();
    assert_eq!(lines, [3, 4, 5]);
    assert!(rejects[1]["reason"].as_str().unwrap().contains("1999"));
    assert!(rejects[2]["reason"].as_str().unwrap().contains("source"));

    let stored: CorpusStats = pipeline::read_json(&ws.path("corpus/stats.json")).unwrap();
    assert_eq!(stored, stats);
    let tok = read_tokenized(&ws.tokens(), &ws.vocab()).unwrap();
    assert_eq!(tok.num_docs(), 3);
    assert_eq!(tok.token_count(), stats.tokens);
    assert!(tok.vocabulary.iter().any(|w| w == "graphene"));
}

#[test]
fn duplicate_ids_and_empty_corpora_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dup = "{\"doc_id\":\"a\",\"title\":\"t\",\"abstract\":\"x\",\"year\":2015,\"source\":\"patent\"}\n".repeat(2);
    let cfg = config(tmp.path(), &dup);
    let err = pipeline::ingest(&cfg, &Workspace::new(&cfg.out)).unwrap_err();
    assert!(matches!(err, ScanError::Input(_)) && err.to_string().contains("line 2"), "{err}");

    let cfg = config(tmp.path(), "garbage\n");
    let err = pipeline::ingest(&cfg, &Workspace::new(&cfg.out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("1 rejected"), "{err}");
}

#[test]
fn schema_maps_field_names() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(
        tmp.path(),
        "{\"id\":\"z1\",\"name\":\"Quantum dots\",\"summary\":\"Quantum dots emit light.\",\"pubyear\":2016,\"kind\":\"publication\"}\n",
    );
    let schema = tmp.path().join("schema.conf");
    std::fs::write(&schema, "doc_id = id\ntitle = name\nabstract = summary\nyear = pubyear\nsource = kind\n").unwrap();
    cfg.schema = Some(schema);
    let stats = pipeline::ingest(&cfg, &Workspace::new(&cfg.out)).unwrap();
    assert_eq!((stats.documents, stats.rejects), (1, 0));
}
