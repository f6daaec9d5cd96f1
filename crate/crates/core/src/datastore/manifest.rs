//! CSV manifest: `id,visual,audio,E,N,A,C,O,split`, paths relative to the manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{BigFiveScores, Trait};

pub const MANIFEST_HEADER: [&str; 9] = ["id", "visual", "audio", "E", "N", "A", "C", "O", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Resolved against the manifest's directory.
    pub visual: PathBuf,
    pub audio: PathBuf,
    pub label: BigFiveScores,
    pub split: Split,
}

/// Reads and validates a manifest. Row numbers in errors count the header as row 1.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.is_file() {
        return Err(Error::Load { path: path.to_path_buf() });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let mut columns = [0usize; 9];
    for (slot, name) in columns.iter_mut().zip(MANIFEST_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column '{name}'", path.display())))?;
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Format(format!("{}: row {row}: {e}", path.display())))?;
        let field = |c: usize| record.get(columns[c]).unwrap_or("");
        let mut label = [0.0; 5];
        for t in Trait::ALL {
            let name = MANIFEST_HEADER[3 + t.index()];
            let raw = field(3 + t.index());
            let v: f64 = raw.parse().map_err(|_| Error::Validation {
                row,
                column: name.into(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation {
                    row,
                    column: name.into(),
                    message: format!("{v} outside [0, 1]"),
                });
            }
            label[t.index()] = v;
        }
        let split = field(8).parse::<Split>().map_err(|_| Error::Validation {
            row,
            column: "split".into(),
            message: format!("'{}' is not train, val or test", field(8)),
        })?;
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(Error::Validation {
                row,
                column: "id".into(),
                message: "empty id".into(),
            });
        }
        let resolve = |rel: &str| -> Result<PathBuf> {
            let p = base.join(rel);
            if rel.is_empty() || !p.exists() {
                return Err(Error::Load { path: p });
            }
            Ok(p)
        };
        entries.push(ManifestEntry {
            id,
            visual: resolve(field(1))?,
            audio: resolve(field(2))?,
            label: BigFiveScores::new(label)?,
            split,
        });
    }
    Ok(entries)
}

/// One manifest row with paths written verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub visual: String,
    pub audio: String,
    pub label: BigFiveScores,
    pub split: Split,
}

pub fn format_manifest(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.visual.clone(), r.audio.clone()];
        rec.extend(r.label.values().iter().map(|v| v.to_string()));
        rec.push(r.split.tag().into());
        w.write_record(&rec).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn setup(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("frames/v1")).unwrap();
        fs::create_dir_all(dir.path().join("audio")).unwrap();
        fs::write(dir.path().join("audio/v1.pcm"), b"").unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, format!("id,visual,audio,E,N,A,C,O,split\n{body}")).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_single_row() {
        let (dir, path) = setup("v1,frames/v1,audio/v1.pcm,0.5,0.5,0.5,0.5,0.5,train\n");
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].id, "v1");
        assert_eq!(m[0].label, BigFiveScores::uniform(0.5).unwrap());
        assert_eq!(m[0].split, Split::Train);
        assert_eq!(m[0].visual, dir.path().join("frames/v1"));
    }

    #[test]
    fn out_of_range_label_names_row_and_column() {
        let (_dir, path) = setup(
            "v1,frames/v1,audio/v1.pcm,0.5,0.5,0.5,0.5,0.5,train\nv1,frames/v1,audio/v1.pcm,1.2,0.5,0.5,0.5,0.5,val\n",
        );
        match load_manifest(&path) {
            Err(Error::Validation { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "E");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let (_dir, path) = setup("");
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn missing_column_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "id,visual,audio,E,N,A,C,split\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_path_is_load_error() {
        let (dir, path) = setup("v1,frames/nope,audio/v1.pcm,0.5,0.5,0.5,0.5,0.5,train\n");
        match load_manifest(&path) {
            Err(Error::Load { path }) => assert_eq!(path, dir.path().join("frames/nope")),
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn format_then_load() {
        let (_dir, path) = setup("");
        let rows = vec![ManifestRow {
            id: "v1".into(),
            visual: "frames/v1".into(),
            audio: "audio/v1.pcm".into(),
            label: BigFiveScores::new([0.1, 0.2, 0.30000000000000004, 0.4, 1.0]).unwrap(),
            split: Split::Test,
        }];
        fs::write(&path, format_manifest(&rows).unwrap()).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m[0].label, rows[0].label);
        assert_eq!(m[0].split, Split::Test);
    }
}
