//! AUC-Judd, AUC-Borji, NSS, CC, SIM and KLD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::resample_map;
use crate::error::{Error, Result};
use crate::losses;
use crate::model::{SaliencyMap, Scanpath};

pub const DEFAULT_BORJI_SPLITS: usize = 100;

/// Fixated pixels `(row, col)` on a `width × height` stimulus. Repeated
/// points (several observers on one pixel) are kept and count once each.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    width: usize,
    height: usize,
    points: Vec<(usize, usize)>,
}

impl FixationSet {
    pub fn new(width: usize, height: usize, points: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(p) = points.iter().find(|(r, c)| *r >= height || *c >= width) {
            return Err(Error::Contract(format!("fixation {p:?} outside {width}×{height} stimulus")));
        }
        Ok(FixationSet { width, height, points })
    }

    /// Union of the rounded fixation cells of several scanpaths.
    pub fn from_scanpaths<'a>(paths: impl IntoIterator<Item = &'a Scanpath>, width: usize, height: usize) -> Self {
        let points = paths.into_iter().flat_map(|p| p.pixel_cells(width, height)).collect();
        FixationSet { width, height, points }
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width * self.height];
        for &(r, c) in &self.points {
            mask[r * self.width + c] = true;
        }
        mask
    }
}

fn check(pred: &SaliencyMap, fix: &FixationSet) -> Result<()> {
    if fix.is_empty() {
        return Err(Error::Contract("metric needs at least one fixation".into()));
    }
    if (pred.width(), pred.height()) != (fix.width, fix.height) {
        return Err(Error::dim(
            "size",
            format!("{}×{} map vs fixations on {}×{}", pred.width(), pred.height(), fix.width, fix.height),
        ));
    }
    Ok(())
}

/// Trapezoidal area under a ROC curve given as `(fp, tp)` points in order.
fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// ROC area with thresholds at the distinct positive values (Judd variant):
/// the TP rate counts positives `≥ t`, the FP rate negatives `≥ t`.
fn roc_area(positives: &[f64], negatives: &[f64], thresholds: &mut Vec<f64>) -> f64 {
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_by(|a, b| b.total_cmp(a));
    neg.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut curve = Vec::with_capacity(thresholds.len() + 2);
    curve.push((0.0, 0.0));
    let (mut ip, mut ineg) = (0, 0);
    for &t in thresholds.iter() {
        while ip < pos.len() && pos[ip] >= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] >= t {
            ineg += 1;
        }
        curve.push((ineg as f64 / nn, ip as f64 / np));
    }
    curve.push((1.0, 1.0));
    trapezoid(&curve)
}

/// AUC-Judd. Thresholds sweep the saliency values at the fixations; the FP
/// rate is taken over all pixels that carry no fixation.
pub fn auc_judd(pred: &SaliencyMap, fixations: &FixationSet) -> Result<f64> {
    check(pred, fixations)?;
    let mask = fixations.mask();
    let positives: Vec<f64> = fixations.points.iter().map(|&(r, c)| pred.get(r, c)).collect();
    let negatives: Vec<f64> = pred.values().iter().zip(&mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    if negatives.is_empty() {
        return Err(Error::Contract("every pixel is fixated; AUC is undefined".into()));
    }
    let mut thresholds = positives.clone();
    Ok(roc_area(&positives, &negatives, &mut thresholds))
}

/// AUC-Borji: mean ROC area over `n_splits` negative sets, each drawing
/// `|fixations|` non-fixated pixels uniformly with replacement from a
/// ChaCha8 stream seeded with `seed`. Thresholds sweep every distinct value.
pub fn auc_borji(pred: &SaliencyMap, fixations: &FixationSet, n_splits: usize, seed: u64) -> Result<f64> {
    check(pred, fixations)?;
    if n_splits == 0 {
        return Err(Error::Contract("auc_borji needs at least one split".into()));
    }
    let mask = fixations.mask();
    let candidates: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
    if candidates.is_empty() {
        return Err(Error::Contract("every pixel is fixated; AUC is undefined".into()));
    }
    let positives: Vec<f64> = fixations.points.iter().map(|&(r, c)| pred.get(r, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_splits {
        let negatives: Vec<f64> = (0..positives.len())
            .map(|_| pred.values()[candidates[rng.random_range(0..candidates.len())]])
            .collect();
        let mut thresholds: Vec<f64> = positives.iter().chain(&negatives).copied().collect();
        total += roc_area(&positives, &negatives, &mut thresholds);
    }
    Ok(total / n_splits as f64)
}

pub(crate) fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean standardised saliency at the fixations. A constant map is an error.
pub fn nss(pred: &SaliencyMap, fixations: &FixationSet) -> Result<f64> {
    check(pred, fixations)?;
    let (mean, std) = mean_std(pred.values());
    if is_constant(pred.values()) {
        return Err(Error::Contract("NSS of a constant map is undefined".into()));
    }
    let total: f64 = fixations.points.iter().map(|&(r, c)| (pred.get(r, c) - mean) / std).sum();
    Ok(total / fixations.len() as f64)
}

/// Pearson correlation of the flattened maps.
pub fn cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    pred.same_shape(gt)?;
    let (mp, sp) = mean_std(pred.values());
    let (mg, sg) = mean_std(gt.values());
    if is_constant(pred.values()) || is_constant(gt.values()) {
        return Err(Error::Contract("CC of a constant map is undefined".into()));
    }
    let n = pred.values().len() as f64;
    let cov: f64 = pred.values().iter().zip(gt.values()).map(|(p, g)| (p - mp) * (g - mg)).sum::<f64>() / n;
    Ok((cov / (sp * sg)).clamp(-1.0, 1.0))
}

/// Histogram intersection of the two maps normalised to unit mass.
pub fn sim(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    pred.same_shape(gt)?;
    let (sp, sg): (f64, f64) = (pred.values().iter().sum(), gt.values().iter().sum());
    if sp <= 0.0 || sg <= 0.0 {
        return Err(Error::Contract("SIM needs maps with positive mass".into()));
    }
    Ok(pred.values().iter().zip(gt.values()).map(|(p, g)| (p / sp).min(g / sg)).sum())
}

/// KL divergence of the ground truth from the prediction; shares its
/// definition with the training loss.
pub fn kld_metric(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    losses::kldiv(pred, gt)
}

/// One row of a saliency evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScores {
    pub auc_judd: f64,
    pub auc_borji: f64,
    pub nss: f64,
    pub cc: f64,
    pub sim: f64,
    pub kld: f64,
}

impl SaliencyScores {
    pub const COLUMNS: [&'static str; 6] = ["auc_judd", "auc_borji", "nss", "cc", "sim", "kld"];

    pub fn values(&self) -> [f64; 6] {
        [self.auc_judd, self.auc_borji, self.nss, self.cc, self.sim, self.kld]
    }

    /// Scores a prediction, bilinearly resampling it to the ground-truth
    /// resolution first when the sizes differ.
    pub fn evaluate(
        pred: &SaliencyMap,
        gt_map: &SaliencyMap,
        fixations: &FixationSet,
        n_splits: usize,
        seed: u64,
    ) -> Result<Self> {
        let resampled;
        let pred = if (pred.width(), pred.height()) != (gt_map.width(), gt_map.height()) {
            resampled = resample_map(pred, gt_map.width(), gt_map.height())?;
            &resampled
        } else {
            pred
        };
        Ok(SaliencyScores {
            auc_judd: auc_judd(pred, fixations)?,
            auc_borji: auc_borji(pred, fixations, n_splits, seed)?,
            nss: nss(pred, fixations)?,
            cc: cc(pred, gt_map)?,
            sim: sim(pred, gt_map)?,
            kld: kld_metric(pred, gt_map)?,
        })
    }
}
