//! Datasets on disk and in memory.
//!
//! Layout written by [`Dataset::write`]:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/stimuli/<id>.ppm
//! <dir>/maps/<id>.pgm
//! <dir>/scanpaths/<id>_<k>.csv
//! ```

mod formats;
mod manifest;
mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use formats::{
    decode_pgm, decode_ppm, decode_scanpath_csv, encode_pgm, encode_ppm, encode_scanpath_csv,
    encode_scanpath_csv_with_norm, quantize, read_pgm, read_ppm, read_scanpath_csv, write_pgm, write_ppm,
    write_scanpath_csv, write_text, Image,
};
pub use manifest::{load_manifest, DatasetManifest, ManifestRecord};
pub use synthetic::{generate, generate_synthetic, SynthConfig};

use crate::error::{Error, Result};
use crate::model::{SaliencyMap, Scanpath};

/// One stimulus with its ground truth. Scanpaths are kept in the pixel
/// coordinates they are stored with.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub stimulus: Image,
    pub map: SaliencyMap,
    pub scanpath_pixels: Vec<Vec<(f64, f64)>>,
}

impl Sample {
    /// Ground-truth scanpaths in normalised coordinates.
    pub fn scanpaths(&self) -> Result<Vec<Scanpath>> {
        let (w, h) = (self.stimulus.width(), self.stimulus.height());
        self.scanpath_pixels.iter().map(|p| Scanpath::from_pixels(p, w, h)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        let samples = (0..manifest.records.len()).map(|i| manifest.load_record(i)).collect::<Result<_>>()?;
        Ok(Dataset { name: manifest.name.clone(), width: manifest.width, height: manifest.height, samples })
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        Self::from_manifest(&load_manifest(manifest_path)?)
    }

    /// Writes every file plus `manifest.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let dir = dir.as_ref();
        let mut records = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let stimulus = PathBuf::from("stimuli").join(format!("{}.ppm", s.id));
            let map = PathBuf::from("maps").join(format!("{}.pgm", s.id));
            write_ppm(dir.join(&stimulus), &s.stimulus)?;
            write_pgm(dir.join(&map), &s.map)?;
            let mut scanpaths = Vec::with_capacity(s.scanpath_pixels.len());
            for (k, pts) in s.scanpath_pixels.iter().enumerate() {
                let path = PathBuf::from("scanpaths").join(format!("{}_{k}.csv", s.id));
                write_scanpath_csv(dir.join(&path), pts)?;
                scanpaths.push(path);
            }
            records.push(ManifestRecord { stimulus, map, scanpaths });
        }
        let manifest = DatasetManifest {
            name: self.name.clone(),
            width: self.width,
            height: self.height,
            records,
            root: dir.to_path_buf(),
        };
        manifest.save(dir.join("manifest.json"))?;
        Ok(manifest)
    }

    pub fn length_stats(&self) -> Result<LengthStats> {
        LengthStats::from_lengths(self.samples.iter().flat_map(|s| s.scanpath_pixels.iter().map(Vec::len)))
    }
}

/// Scanpath point-count statistics. The mode breaks ties towards the
/// shorter length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub mode: usize,
    pub histogram: BTreeMap<usize, usize>,
}

impl LengthStats {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut sorted: Vec<usize> = lengths.into_iter().collect();
        if sorted.is_empty() {
            return Err(Error::Contract("length statistics need at least one scanpath".into()));
        }
        sorted.sort_unstable();
        let count = sorted.len();
        let mean = sorted.iter().sum::<usize>() as f64 / count as f64;
        let median = if count % 2 == 1 {
            sorted[count / 2] as f64
        } else {
            (sorted[count / 2 - 1] + sorted[count / 2]) as f64 / 2.0
        };
        let mut histogram = BTreeMap::new();
        for &l in &sorted {
            *histogram.entry(l).or_insert(0) += 1;
        }
        let top = *histogram.values().max().expect("non-empty");
        let mode = *histogram.iter().find(|(_, &c)| c == top).expect("non-empty").0;
        Ok(LengthStats { count, mean, median, mode, histogram })
    }
}

/// Point-count statistics over every scanpath file of a manifest.
pub fn length_stats(manifest: &DatasetManifest) -> Result<LengthStats> {
    let mut lengths = Vec::new();
    for record in &manifest.records {
        for path in &record.scanpaths {
            lengths.push(read_scanpath_csv(manifest.resolve(path))?.len());
        }
    }
    LengthStats::from_lengths(lengths)
}

/// Bilinear resampling to `target_w × target_h`, sampling at pixel centres
/// and clamping at the borders. Output values stay within the source range.
pub fn resample_map(map: &SaliencyMap, target_w: usize, target_h: usize) -> Result<SaliencyMap> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::dim("size", "resample target must be non-empty"));
    }
    let out = formats::bilinear(map.values(), map.width(), map.height(), target_w, target_h);
    SaliencyMap::new(target_w, target_h, out)
}
