//! Line-delimited JSON side files: predictions, topic assignments and
//! clusterings (entity clusters for event mode, or any prediction file).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::Clustering;
use crate::engine::LinkRecord;
use crate::error::{Error, Result};

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lines(&text)
}

pub fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_lines<T: Serialize>(path: impl AsRef<Path>, records: impl IntoIterator<Item = T>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, &r).map_err(|e| Error::Format(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TopicRecord {
    doc_id: String,
    topic_id: String,
}

pub fn write_topics(path: impl AsRef<Path>, topics: &BTreeMap<String, String>) -> Result<()> {
    write_lines(
        path,
        topics.iter().map(|(d, t)| TopicRecord {
            doc_id: d.clone(),
            topic_id: t.clone(),
        }),
    )
}

/// Topic ids may be strings or integers; both are read as strings.
pub fn read_topics(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Raw {
        doc_id: String,
        topic_id: serde_json::Value,
    }
    let raw: Vec<Raw> = read_lines(path.as_ref())?;
    Ok(raw.into_iter().map(|r| (r.doc_id, label(&r.topic_id))).collect())
}

fn label(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[LinkRecord]) -> Result<()> {
    write_lines(path, records)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<LinkRecord>> {
    read_lines(path.as_ref())
}

#[derive(Serialize)]
struct ClusterRecord<'a> {
    mention_id: &'a str,
    cluster_id: usize,
}

pub fn write_clustering(path: impl AsRef<Path>, clustering: &Clustering) -> Result<()> {
    write_lines(
        path,
        clustering.iter().map(|(m, c)| ClusterRecord {
            mention_id: m,
            cluster_id: c,
        }),
    )
}

/// Any line-delimited file with `mention_id` and `cluster_id` fields, so a
/// prediction file doubles as a clustering.
pub fn read_clustering(path: impl AsRef<Path>) -> Result<Clustering> {
    parse_clustering(&std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?)
}

pub fn parse_clustering(text: &str) -> Result<Clustering> {
    #[derive(Deserialize)]
    struct Raw {
        mention_id: String,
        cluster_id: serde_json::Value,
    }
    let raw: Vec<Raw> = parse_lines(text)?;
    Ok(Clustering::from_labels(raw.into_iter().map(|r| (r.mention_id, label(&r.cluster_id)))))
}

/// Lemma table: `{"form": ..., "lemma": ...}` per line.
pub fn read_lemma_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Raw {
        form: String,
        lemma: String,
    }
    let raw: Vec<Raw> = read_lines(path.as_ref())?;
    Ok(raw.into_iter().map(|r| (r.form.to_lowercase(), r.lemma.to_lowercase())).collect())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
