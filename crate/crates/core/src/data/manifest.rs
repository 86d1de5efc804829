//! JSON dataset manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::{read_pgm, read_ppm, read_scanpath_csv};
use super::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub stimulus: PathBuf,
    pub map: PathBuf,
    pub scanpaths: Vec<PathBuf>,
}

/// Dataset index. Record paths are relative to the manifest's directory
/// (`root`), or absolute. Every stimulus and map has the manifest's
/// `width × height` resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub records: Vec<ManifestRecord>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    /// Identifier of a record: the file stem of its stimulus.
    pub fn record_id(&self, index: usize) -> String {
        self.records[index].stimulus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("{index}"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::formats::write_text(path, &self.to_json()?)
    }

    /// Reads every file of record `index`, checking resolutions and that
    /// every fixation lies on the stimulus.
    pub fn load_record(&self, index: usize) -> Result<Sample> {
        let record = &self.records[index];
        let fail = |msg: String| Error::Manifest { index, msg };
        let stimulus = read_ppm(self.resolve(&record.stimulus)).map_err(|e| fail(e.to_string()))?;
        let map = read_pgm(self.resolve(&record.map)).map_err(|e| fail(e.to_string()))?;
        let (w, h) = (self.width, self.height);
        if (stimulus.width(), stimulus.height()) != (w, h) {
            return Err(fail(format!(
                "stimulus {} is {}×{}, manifest declares {w}×{h}",
                record.stimulus.display(),
                stimulus.width(),
                stimulus.height()
            )));
        }
        if (map.width(), map.height()) != (w, h) {
            return Err(fail(format!(
                "map {} is {}×{}, manifest declares {w}×{h}",
                record.map.display(),
                map.width(),
                map.height()
            )));
        }
        let mut scanpath_pixels = Vec::with_capacity(record.scanpaths.len());
        for path in &record.scanpaths {
            let pts = read_scanpath_csv(self.resolve(path)).map_err(|e| fail(e.to_string()))?;
            if pts.is_empty() {
                return Err(fail(format!("scanpath {} is empty", path.display())));
            }
            if let Some((i, p)) = pts
                .iter()
                .enumerate()
                .find(|(_, (x, y))| !(0.0..=(w - 1) as f64).contains(x) || !(0.0..=(h - 1) as f64).contains(y))
            {
                return Err(fail(format!("scanpath {} point {i} = {p:?} lies outside the {w}×{h} stimulus", path.display())));
            }
            scanpath_pixels.push(pts);
        }
        Ok(Sample { id: self.record_id(index), stimulus, map, scanpath_pixels })
    }
}

/// Reads and validates a manifest; every referenced file must exist and
/// parse. Errors carry the record index and the offending path.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("manifest schema: {e}")))?;
    if manifest.width == 0 || manifest.height == 0 {
        return Err(Error::format(path, "manifest resolution must be positive"));
    }
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for index in 0..manifest.records.len() {
        manifest.load_record(index)?;
    }
    Ok(manifest)
}
