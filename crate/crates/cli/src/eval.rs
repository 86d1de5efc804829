//! `eval-saliency` and `eval-scanpath`: one CSV row per manifest record in
//! manifest order, then a `MEAN` row. Undefined metric values (for example
//! CC of a constant map) are written as `NaN` and left out of the mean.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use salypath::data::{self, DatasetManifest};
use salypath::metrics::saliency::{self, FixationSet, DEFAULT_BORJI_SPLITS};
use salypath::metrics::scanpath::{self as sp, DEFAULT_CONGRUENCY_PERCENTILE};
use salypath::{SaliencyMap, Scanpath};

use crate::Failure;

#[derive(Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<id>.pgm` predictions.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Seed of the AUC-Borji negative sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BORJI_SPLITS)]
    splits: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GtReduce {
    /// Average each score over all observers.
    Mean,
    /// Scores of the observer with the highest MultiMatch mean.
    Best,
}

#[derive(Args)]
pub struct ScanpathArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<id>.csv` predictions.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONGRUENCY_PERCENTILE)]
    congruency_percentile: f64,
    #[arg(long, value_enum, default_value = "mean")]
    gt_reduce: GtReduce,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Row {
    Scored(Vec<f64>),
    Missing(PathBuf),
}

fn or_nan(id: &str, metric: &str, value: salypath::Result<f64>) -> f64 {
    value.unwrap_or_else(|e| {
        eprintln!("warning: {id}: {metric} undefined ({e})");
        f64::NAN
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Renders the report and lists records without predictions.
fn report(manifest: &DatasetManifest, columns: &[&str], rows: Vec<Row>, out: Option<&Path>) -> Result<(), Failure> {
    let mut csv = format!("image_id,{}\n", columns.join(","));
    let mut sums = vec![(0.0, 0usize); columns.len()];
    let mut missing = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Row::Scored(values) => {
                let cells: Vec<String> = values.iter().map(|&v| fmt_value(v)).collect();
                writeln!(csv, "{},{}", manifest.record_id(i), cells.join(","))?;
                for (s, v) in sums.iter_mut().zip(values) {
                    if !v.is_nan() {
                        s.0 += v;
                        s.1 += 1;
                    }
                }
            }
            Row::Missing(path) => missing.push(path.display().to_string()),
        }
    }
    if !manifest.records.is_empty() {
        let means: Vec<String> =
            sums.iter().map(|&(s, n)| fmt_value(if n == 0 { f64::NAN } else { s / n as f64 })).collect();
        writeln!(csv, "MEAN,{}", means.join(","))?;
    }
    match out {
        Some(path) => data::write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    if missing.is_empty() {
        Ok(())
    } else {
        for m in &missing {
            eprintln!("missing prediction: {m}");
        }
        Err(Failure::Incomplete(format!("{} of {} predictions missing", missing.len(), manifest.records.len())))
    }
}

fn ground_truth(manifest: &DatasetManifest, i: usize) -> Result<(SaliencyMap, Vec<Scanpath>)> {
    let sample = manifest.load_record(i)?;
    Ok((sample.map.clone(), sample.scanpaths()?))
}

pub fn run_saliency(args: SaliencyArgs) -> Result<(), Failure> {
    let manifest = data::load_manifest(&args.manifest)?;
    let rows = (0..manifest.records.len())
        .into_par_iter()
        .map(|i| -> Result<Row> {
            let id = manifest.record_id(i);
            let pred_path = args.pred_dir.join(format!("{id}.pgm"));
            if !pred_path.exists() {
                return Ok(Row::Missing(pred_path));
            }
            let pred = data::read_pgm(&pred_path)?;
            let (gt, paths) = ground_truth(&manifest, i)?;
            let pred = if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
                eprintln!("warning: {id}: resampling prediction to {}×{}", gt.width(), gt.height());
                data::resample_map(&pred, gt.width(), gt.height())?
            } else {
                pred
            };
            let fix = FixationSet::from_scanpaths(&paths, gt.width(), gt.height());
            Ok(Row::Scored(vec![
                or_nan(&id, "auc_judd", saliency::auc_judd(&pred, &fix)),
                or_nan(&id, "auc_borji", saliency::auc_borji(&pred, &fix, args.splits, args.seed)),
                or_nan(&id, "nss", saliency::nss(&pred, &fix)),
                or_nan(&id, "cc", saliency::cc(&pred, &gt)),
                or_nan(&id, "sim", saliency::sim(&pred, &gt)),
                or_nan(&id, "kld", saliency::kld_metric(&pred, &gt)),
            ]))
        })
        .collect::<Result<Vec<_>>>()?;
    report(&manifest, &saliency::SaliencyScores::COLUMNS, rows, args.out.as_deref())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn run_scanpath(args: ScanpathArgs) -> Result<(), Failure> {
    let manifest = data::load_manifest(&args.manifest)?;
    let rows = (0..manifest.records.len())
        .into_par_iter()
        .map(|i| -> Result<Row> {
            let id = manifest.record_id(i);
            let pred_path = args.pred_dir.join(format!("{id}.csv"));
            if !pred_path.exists() {
                return Ok(Row::Missing(pred_path));
            }
            let (gt_map, gt_paths) = ground_truth(&manifest, i)?;
            let pixels = data::read_scanpath_csv(&pred_path)?;
            let pred = Scanpath::from_pixels(&pixels, manifest.width, manifest.height)
                .with_context(|| format!("prediction {}", pred_path.display()))?;
            let mm: Vec<[f64; 5]> = gt_paths
                .iter()
                .map(|gt| match sp::multimatch(&pred, gt) {
                    Ok(m) => [m.shape, m.direction, m.length, m.position, m.mean],
                    Err(e) => {
                        eprintln!("warning: {id}: multimatch undefined ({e})");
                        [f64::NAN; 5]
                    }
                })
                .collect();
            let defined: Vec<&[f64; 5]> = mm.iter().filter(|m| !m[4].is_nan()).collect();
            let mm = if defined.is_empty() {
                [f64::NAN; 5]
            } else {
                match args.gt_reduce {
                    GtReduce::Mean => std::array::from_fn(|k| mean(&defined.iter().map(|m| m[k]).collect::<Vec<_>>())),
                    GtReduce::Best => **defined.iter().max_by(|a, b| a[4].total_cmp(&b[4])).expect("non-empty"),
                }
            };
            let mut values = mm.to_vec();
            values.push(or_nan(&id, "nss", sp::nss_scanpath(&pred, &gt_map)));
            values.push(or_nan(&id, "congruency", sp::congruency(&pred, &gt_map, args.congruency_percentile)));
            Ok(Row::Scored(values))
        })
        .collect::<Result<Vec<_>>>()?;
    report(&manifest, &sp::ScanpathScores::COLUMNS, rows, args.out.as_deref())
}
