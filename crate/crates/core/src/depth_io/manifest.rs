//! Dataset manifest CSV: `video_id,path,label,<split>...` where every split
//! cell is `train` or `test`. Relative paths resolve against the manifest's
//! directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    fn parse(cell: &str) -> Option<Self> {
        match cell.trim() {
            "train" => Some(SplitRole::Train),
            "test" => Some(SplitRole::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub label: String,
    /// One role per manifest split, in header order.
    pub splits: Vec<SplitRole>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    base_dir: PathBuf,
    split_names: Vec<String>,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>, split_names: Vec<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        if split_names.is_empty() {
            return Err(Error::arg("manifest needs at least one split column"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Data(format!("duplicate video_id `{}` in manifest", e.video_id)));
            }
            if e.splits.len() != split_names.len() {
                return Err(Error::Data(format!(
                    "entry `{}` has {} split cells, header names {}",
                    e.video_id,
                    e.splits.len(),
                    split_names.len()
                )));
            }
        }
        Ok(Self {
            base_dir: base_dir.into(),
            split_names,
            entries,
        })
    }

    /// Loads and validates a manifest; every referenced path must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, base)?;
        for e in &manifest.entries {
            let p = manifest.resolve(e);
            if !p.exists() {
                return Err(Error::Data(format!("video `{}`: {} does not exist", e.video_id, p.display())));
            }
        }
        Ok(manifest)
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::format("manifest", None, e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 4 || cols[..3] != ["video_id", "path", "label"] {
            return Err(Error::format(
                "manifest",
                None,
                "header must be `video_id,path,label,<split>...`",
            ));
        }
        let split_names = cols[3..].iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut entries = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format("manifest", None, format!("row {}: {e}", row + 1)))?;
            if record.len() != cols.len() {
                return Err(Error::format("manifest", None, format!("row {} has {} cells", row + 1, record.len())));
            }
            let splits = record
                .iter()
                .skip(3)
                .map(|c| {
                    SplitRole::parse(c).ok_or_else(|| {
                        Error::format("manifest", None, format!("row {}: split cell `{c}` is not train/test", row + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push(ManifestEntry {
                video_id: record[0].to_string(),
                path: PathBuf::from(&record[1]),
                label: record[2].to_string(),
                splits,
            });
        }
        Self::new(base_dir, split_names, entries)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["video_id", "path", "label"];
        header.extend(self.split_names.iter().map(String::as_str));
        w.write_record(&header).expect("in-memory write");
        for e in &self.entries {
            let mut rec = vec![e.video_id.clone(), e.path.display().to_string(), e.label.clone()];
            rec.extend(e.splits.iter().map(|s| s.as_str().to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 input")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn split_names(&self) -> &[String] {
        &self.split_names
    }

    pub fn split_index(&self, name: &str) -> Result<usize> {
        self.split_names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::arg(format!("manifest has no split `{name}`")))
    }

    /// Absolute (or base-relative) location of an entry's data.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Entries with the given role in split `split`, in manifest order.
    pub fn with_role(&self, split: usize, role: SplitRole) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.splits[split] == role)
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.entries.iter().map(|e| e.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "video_id,path,label,split1,split2,split3\n\
                        a,a.dseq,run,train,test,train\n\
                        b,b.dseq,walk,test,train,train\n\
                        c,/abs/c.dseq,run,train,train,test\n";

    #[test]
    fn splits_partition_entries() {
        let m = DatasetManifest::parse(TEXT, "/data").unwrap();
        assert_eq!(m.split_names(), ["split1", "split2", "split3"]);
        for s in 0..3 {
            let train: HashSet<_> = m.with_role(s, SplitRole::Train).map(|e| &e.video_id).collect();
            let test: HashSet<_> = m.with_role(s, SplitRole::Test).map(|e| &e.video_id).collect();
            assert!(train.is_disjoint(&test));
            assert_eq!(train.len() + test.len(), 3);
        }
        assert_eq!(m.classes(), ["run", "walk"]);
        assert_eq!(m.resolve(&m.entries()[0]), PathBuf::from("/data/a.dseq"));
        assert_eq!(m.resolve(&m.entries()[2]), PathBuf::from("/abs/c.dseq"));
    }

    #[test]
    fn csv_round_trip() {
        let m = DatasetManifest::parse(TEXT, "/data").unwrap();
        let again = DatasetManifest::parse(&m.to_csv(), "/data").unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_bad_cells_and_duplicates() {
        assert!(DatasetManifest::parse("video_id,path,label,s\na,a,x,valid\n", ".").is_err());
        assert!(DatasetManifest::parse("video_id,path,label,s\na,a,x,train\na,b,x,test\n", ".").is_err());
        assert!(DatasetManifest::parse("id,path,label,s\n", ".").is_err());
    }

    #[test]
    fn load_requires_existing_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "video_id,path,label,split1\nv,missing.dseq,x,train\n").unwrap();
        let err = DatasetManifest::load(&p).unwrap_err();
        assert!(err.to_string().contains("`v`"));
    }
}
