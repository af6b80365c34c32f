//! Corpus manifests: CSV with a `file` and `label` column, plus optional
//! `source_id`, `fold` and `transform_log` columns.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub label: u8,
    #[serde(default)]
    pub source_id: Option<String>,
    #[serde(default)]
    pub fold: Option<usize>,
    #[serde(default)]
    pub transform_log: Option<String>,
}

impl ManifestRow {
    pub fn new(file: impl Into<String>, label: u8) -> Self {
        Self { file: file.into(), label, source_id: None, fold: None, transform_log: None }
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("opening manifest {}", path.display()))?;
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
            rows.push(rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self { base, rows };
        m.validate().with_context(|| format!("manifest {}", path.display()))?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for row in &self.rows {
            if row.label > 1 {
                bail!("{}: label {} is not 0 or 1", row.file, row.label);
            }
            if !seen.insert(row.file.as_str()) {
                bail!("{} is listed twice", row.file);
            }
        }
        Ok(())
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        let p = Path::new(&row.file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Fold column values when every row has one; checked against `k`.
    pub fn folds(&self, k: usize) -> Result<Option<Vec<usize>>> {
        let given: Vec<Option<usize>> = self.rows.iter().map(|r| r.fold).collect();
        if given.iter().all(Option::is_none) {
            return Ok(None);
        }
        let folds: Option<Vec<usize>> = given.into_iter().collect();
        let Some(folds) = folds else { bail!("fold column is only partially filled") };
        if let Some(bad) = folds.iter().find(|&&f| f >= k) {
            bail!("fold {bad} outside [0, {k})");
        }
        Ok(Some(folds))
    }
}

/// Which optional columns to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    /// `file,label`
    Basic,
    /// `file,label,source_id,transform_log`
    Provenance,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow], columns: Columns) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    match columns {
        Columns::Basic => {
            w.write_record(["file", "label"])?;
            for r in rows {
                w.write_record([r.file.as_str(), &r.label.to_string()])?;
            }
        }
        Columns::Provenance => {
            w.write_record(["file", "label", "source_id", "transform_log"])?;
            for r in rows {
                w.write_record([
                    r.file.as_str(),
                    &r.label.to_string(),
                    r.source_id.as_deref().unwrap_or(""),
                    r.transform_log.as_deref().unwrap_or(""),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
