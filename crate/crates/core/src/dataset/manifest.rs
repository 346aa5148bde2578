use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{select_keywords, Dataset, DatasetMetadata, Group, Split, Utterance};

const REQUIRED: [&str; 4] = ["path", "keyword", "speaker_id", "gender"];

struct RawRows {
    rows: Vec<Utterance>,
    dropped: usize,
}

fn read_rows(path: &Path) -> Result<RawRows> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| {
            Error::ManifestFormat(format!(
                "{}: missing required column {name:?} (header must be path,keyword,speaker_id,gender[,split])",
                path.display()
            ))
        })?;
    }
    let split_col = col("split");
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut rows = Vec::new();
    let mut dropped = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let group = match field(idx[3]).parse::<Group>() {
            Ok(g) => g,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let split = match split_col {
            Some(c) => field(c)
                .parse::<Split>()
                .map_err(|e| Error::ManifestFormat(format!("row {}: {e}", i + 1)))?,
            None => Split::Unassigned,
        };
        let raw_path = PathBuf::from(field(idx[0]));
        rows.push(Utterance {
            audio_path: if raw_path.is_absolute() { raw_path } else { base.join(raw_path) },
            keyword: field(idx[1]).to_string(),
            class_index: 0,
            speaker_id: field(idx[2]).to_string(),
            group,
            split,
        });
    }
    Ok(RawRows { rows, dropped })
}

fn metadata_for(path: &Path, dropped: usize) -> DatasetMetadata {
    DatasetMetadata {
        name: path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
        notes: vec![format!("loaded from {}", path.display())],
        dropped_rows: dropped,
        ..Default::default()
    }
}

/// Reads a manifest CSV (`path,keyword,speaker_id,gender[,split]`).
///
/// Rows whose gender is not male or female are dropped and counted in
/// `metadata.dropped_rows`. Relative audio paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let RawRows { rows, dropped } = read_rows(path)?;
    Dataset::from_rows(rows, metadata_for(path, dropped))
}

/// Like [`load_manifest`], but first keeps only the keywords chosen by
/// [`select_keywords`] from the per-keyword utterance counts.
pub fn load_manifest_with_keyword_selection(path: &Path) -> Result<Dataset> {
    let RawRows { rows, dropped } = read_rows(path)?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in &rows {
        *counts.entry(r.keyword.clone()).or_default() += 1;
    }
    let chosen = select_keywords(&counts);
    let rows: Vec<Utterance> = rows.into_iter().filter(|r| chosen.contains(&r.keyword)).collect();
    let mut meta = metadata_for(path, dropped);
    meta.notes.push(format!("keyword selection kept {} of {} keywords", chosen.len(), counts.len()));
    // class order follows the selection ranking
    let index: HashMap<&str, usize> = chosen.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let rows = rows
        .into_iter()
        .map(|mut r| {
            r.class_index = index[r.keyword.as_str()];
            r
        })
        .collect();
    Dataset::new(rows, chosen, meta)
}

/// Writes the dataset as a manifest including the split column. Audio paths
/// under the manifest's directory are written relative to it.
pub fn write_manifest(dataset: &Dataset, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["path", "keyword", "speaker_id", "gender", "split"])?;
    for u in dataset.utterances() {
        let p = u.audio_path.strip_prefix(base).unwrap_or(&u.audio_path);
        w.write_record([
            p.to_string_lossy().as_ref(),
            u.keyword.as_str(),
            u.speaker_id.as_str(),
            u.group.as_str(),
            u.split.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
