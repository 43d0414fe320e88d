//! JSON-lines record and chain files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::{Chain, Corpus, CorpusError, Record, Timestamp};

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTimestamp {
    Epoch(i64),
    Text(String),
}

#[derive(Deserialize)]
struct RecordLine {
    record_id: String,
    topic_id: String,
    document_id: String,
    timestamp: RawTimestamp,
    text: String,
    #[serde(default)]
    fl_code: Option<String>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct RecordLineOut<'a> {
    record_id: &'a str,
    topic_id: &'a str,
    document_id: &'a str,
    timestamp: Timestamp,
    text: &'a str,
    fl_code: Option<&'a str>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    attributes: &'a BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct ChainLine {
    chain_id: String,
    record_ids: Vec<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn for_each_line<F>(path: &Path, mut f: F) -> Result<(), CorpusError>
where
    F: FnMut(usize, &str) -> Result<(), String>,
{
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        f(idx + 1, &line).map_err(|message| CorpusError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message,
        })?;
    }
    Ok(())
}

fn parse_timestamp(raw: RawTimestamp) -> Result<Timestamp, String> {
    match raw {
        RawTimestamp::Epoch(secs) => Ok(secs),
        RawTimestamp::Text(text) => DateTime::parse_from_rfc3339(&text)
            .map(|dt| dt.timestamp())
            .map_err(|e| format!("bad RFC 3339 timestamp `{text}`: {e}")),
    }
}

/// Reads a record file without cross-record validation.
pub fn read_records(path: &Path) -> Result<Vec<Record>, CorpusError> {
    let mut records = Vec::new();
    for_each_line(path, |_, line| {
        let raw: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        records.push(Record {
            record_id: raw.record_id,
            topic_id: raw.topic_id,
            document_id: raw.document_id,
            timestamp: parse_timestamp(raw.timestamp)?,
            text: raw.text,
            fl_code: raw.fl_code,
            attributes: raw.attributes,
        });
        Ok(())
    })?;
    Ok(records)
}

/// Reads a chain file. Extra keys (e.g. prediction provenance) are ignored.
pub fn read_chains(path: &Path) -> Result<Vec<Chain>, CorpusError> {
    let mut chains = Vec::new();
    for_each_line(path, |_, line| {
        let raw: ChainLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        chains.push(Chain::new(raw.chain_id, raw.record_ids));
        Ok(())
    })?;
    Ok(chains)
}

/// Loads and validates a record file plus an optional gold-chain file.
pub fn load_corpus(records: &Path, chains: Option<&Path>) -> Result<Corpus, CorpusError> {
    let recs = read_records(records)?;
    let chains = chains.map(read_chains).transpose()?;
    Corpus::new(recs, chains)
}

/// Writes records in id order, one JSON object per line.
pub fn write_records<'a, I>(path: &Path, records: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a Record>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = RecordLineOut {
            record_id: &r.record_id,
            topic_id: &r.topic_id,
            document_id: &r.document_id,
            timestamp: r.timestamp,
            text: &r.text,
            fl_code: r.fl_code.as_deref(),
            attributes: &r.attributes,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| io_err(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn write_chains<'a, I>(path: &Path, chains: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for chain in chains {
        serde_json::to_writer(&mut out, chain).map_err(|e| io_err(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Writes the record file and, when the corpus is annotated, the chain file.
pub fn save_corpus(corpus: &Corpus, records: &Path, chains: Option<&Path>) -> Result<(), CorpusError> {
    write_records(records, corpus.records().values())?;
    if let (Some(path), Some(gold)) = (chains, corpus.gold_chains()) {
        write_chains(path, gold)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_three_records_one_chain() {
        let dir = tempfile::tempdir().unwrap();
        let recs = write(
            dir.path(),
            "r.jsonl",
            r#"{"record_id":"r1","topic_id":"A","document_id":"s1","timestamp":"2021-03-01T06:00:00Z","text":"Pumpe P1 leckt","fl_code":"K1A-PU-001"}
{"record_id":"r2","topic_id":"A","document_id":"s1","timestamp":1614592800,"text":"Dichtung getauscht","fl_code":null,"attributes":{"shift":"early"}}

{"record_id":"r3","topic_id":"A","document_id":"s2","timestamp":1614600000,"text":"Ventil geprueft"}
"#,
        );
        let chains = write(
            dir.path(),
            "c.jsonl",
            r#"{"chain_id":"c1","record_ids":["r1","r2"]}"#,
        );
        let corpus = load_corpus(&recs, Some(&chains)).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.gold_chains().unwrap().len(), 1);
        assert_eq!(corpus.chains_with_singletons("A").unwrap().len(), 2);
        assert_eq!(corpus.timestamp("r1"), Some(1_614_578_400));
        assert_eq!(corpus.record("r2").unwrap().attributes["shift"], "early");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let recs = write(
            dir.path(),
            "r.jsonl",
            "{\"record_id\":\"r1\",\"topic_id\":\"A\",\"document_id\":\"s\",\"timestamp\":1,\"text\":\"x\"}\n{not json\n",
        );
        let err = load_corpus(&recs, None).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let bad_ts = write(
            dir.path(),
            "t.jsonl",
            "{\"record_id\":\"r1\",\"topic_id\":\"A\",\"document_id\":\"s\",\"timestamp\":\"yesterday\",\"text\":\"x\"}\n",
        );
        assert!(matches!(
            load_corpus(&bad_ts, None).unwrap_err(),
            CorpusError::Malformed { line: 1, .. }
        ));
    }

    #[test]
    fn duplicate_id_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let line = "{\"record_id\":\"dup\",\"topic_id\":\"A\",\"document_id\":\"s\",\"timestamp\":1,\"text\":\"x\"}\n";
        let recs = write(dir.path(), "r.jsonl", &line.repeat(2));
        let err = load_corpus(&recs, None).unwrap_err();
        assert!(err.to_string().contains("dup"));
    }
}
