//! Training objectives.
//!
//! Saliency loss: `w_kl·KL + w_mse·MSE − w_nss·NSS` (defaults 0.6 / 0.3 / 0.1).
//! Scanpath loss: mean over fixation points of the squared Euclidean error in
//! normalised coordinates.
//!
//! Every map-level term exists twice: a plain `f64` evaluation used by the
//! metrics and a graph version used for training. Distribution
//! normalisations use [`EPS`]; standard deviations are population (`1/n`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SaliencyMap, Scanpath};
use crate::tensor::{Tensor, Var};

pub const EPS: f64 = 1e-8;

/// Below this pixel variance the training NSS term is defined as 0 and flagged.
pub const NSS_MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl_w: f64,
    pub mse_w: f64,
    pub nss_w: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { kl_w: 0.6, mse_w: 0.3, nss_w: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.kl_w, self.mse_w, self.nss_w].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// How the scanpath squared error is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanpathDivisor {
    /// Divide by the number of fixation points `N`.
    #[default]
    Points,
    /// Divide by the number of coordinates `2N`.
    Coordinates,
}

impl ScanpathDivisor {
    fn divisor(self, n: usize) -> f64 {
        match self {
            ScanpathDivisor::Points => n as f64,
            ScanpathDivisor::Coordinates => 2.0 * n as f64,
        }
    }
}

/// Unit-mass normalisation followed by an ε floor and renormalisation:
/// `(v/Σv + ε) / (1 + nε)`. A map without mass becomes uniform.
fn smoothed(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    let rescale = 1.0 / (1.0 + values.len() as f64 * EPS);
    values
        .iter()
        .map(|v| {
            let unit = if total > 0.0 { v / total } else { 0.0 };
            (unit + EPS) * rescale
        })
        .collect()
}

/// `Σ Q'·ln(Q'/P')` over the ε-smoothed distributions of the ground truth
/// (`Q'`) and the prediction (`P'`). Both are proper distributions, so the
/// value is non-negative, exactly 0 for identical maps and finite for
/// one-hot predictions.
pub fn kldiv(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    pred.same_shape(gt)?;
    let p = smoothed(pred.values());
    let q = smoothed(gt.values());
    Ok(q.iter().zip(&p).map(|(q, p)| q * (q / p).ln()).sum())
}

pub fn mse_map(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    pred.same_shape(gt)?;
    let n = pred.values().len() as f64;
    Ok(pred.values().iter().zip(gt.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// NSS value plus a flag set when the prediction had (near-)zero variance and
/// the value was forced to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NssTerm {
    pub value: f64,
    pub degenerate: bool,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_cells(cells: &[(usize, usize)], width: usize, height: usize) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::Contract("NSS needs at least one fixation".into()));
    }
    if let Some(c) = cells.iter().find(|(r, c)| *r >= height || *c >= width) {
        return Err(Error::Contract(format!("fixation {c:?} outside {width}×{height} map")));
    }
    Ok(())
}

/// Mean of the standardised prediction at the fixation cells `(row, col)`.
pub fn nss_term(pred: &SaliencyMap, fixations: &[(usize, usize)]) -> Result<NssTerm> {
    check_cells(fixations, pred.width(), pred.height())?;
    let (mean, std) = mean_std(pred.values());
    if std * std <= NSS_MIN_VARIANCE {
        return Ok(NssTerm { value: 0.0, degenerate: true });
    }
    let total: f64 = fixations.iter().map(|&(r, c)| (pred.get(r, c) - mean) / std).sum();
    Ok(NssTerm { value: total / fixations.len() as f64, degenerate: false })
}

/// Fixation cells of a binary map: every pixel with a non-zero value.
pub fn fixations_from_binary(map: &SaliencyMap) -> Vec<(usize, usize)> {
    (0..map.height())
        .flat_map(|r| (0..map.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| map.get(r, c) != 0.0)
        .collect()
}

/// Pixels at or above the given percentile of the map (fallback fixations).
pub fn fixations_above_percentile(map: &SaliencyMap, pct: f64) -> Vec<(usize, usize)> {
    let threshold = percentile(map.values(), pct);
    (0..map.height())
        .flat_map(|r| (0..map.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| map.get(r, c) >= threshold)
        .collect()
}

/// Linear-interpolation percentile (`pct` in `[0, 100]`) of a non-empty slice.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Weighted composite saliency loss (plain evaluation).
pub fn saliency_loss(
    pred: &SaliencyMap,
    gt_map: &SaliencyMap,
    gt_fixations: &[(usize, usize)],
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let kl = kldiv(pred, gt_map)?;
    let mse = mse_map(pred, gt_map)?;
    let nss = nss_term(pred, gt_fixations)?.value;
    Ok(weights.kl_w * kl + weights.mse_w * mse - weights.nss_w * nss)
}

/// `(1/N)·Σ‖p_i − p̂_i‖²` over ordered point pairs.
pub fn scanpath_loss(pred: &Scanpath, gt: &Scanpath) -> Result<f64> {
    scanpath_loss_with(pred, gt, ScanpathDivisor::Points)
}

pub fn scanpath_loss_with(pred: &Scanpath, gt: &Scanpath, divisor: ScanpathDivisor) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Contract(format!("scanpath lengths differ or are empty: {} vs {}", pred.len(), gt.len())));
    }
    let total: f64 = pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(a, b)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2))
        .sum();
    Ok(total / divisor.divisor(pred.len()))
}

fn map_tensor_check(pred: &Var, gt: &SaliencyMap) -> Result<()> {
    let shape = pred.shape();
    if shape != [1, 1, gt.height(), gt.width()] {
        return Err(Error::dim("size", format!("prediction {shape:?} vs {}×{} ground truth", gt.width(), gt.height())));
    }
    Ok(())
}

/// Differentiable KL term for a `[1, 1, H, W]` prediction.
pub fn kldiv_var<'g>(pred: Var<'g>, gt: &SaliencyMap) -> Result<Var<'g>> {
    map_tensor_check(&pred, gt)?;
    let g = pred.graph();
    let q = smoothed(gt.values());
    let entropy_part: f64 = q.iter().map(|q| q * q.ln()).sum();
    let q = g.constant(Tensor::new(pred.shape(), q)?);
    let rescale = 1.0 / (1.0 + gt.values().len() as f64 * EPS);
    let p = pred.div(pred.sum())?.offset(EPS).scale(rescale);
    let cross = p.log().mul(q)?.sum();
    Ok(cross.neg().offset(entropy_part))
}

pub fn mse_map_var<'g>(pred: Var<'g>, gt: &SaliencyMap) -> Result<Var<'g>> {
    map_tensor_check(&pred, gt)?;
    let gt = pred.graph().constant(gt.to_tensor());
    Ok(pred.sub(gt)?.square().mean())
}

/// Differentiable NSS at the fixation cells; the flag reports a degenerate
/// (near-constant) prediction, in which case the term is a constant 0.
pub fn nss_var<'g>(pred: Var<'g>, fixations: &[(usize, usize)]) -> Result<(Var<'g>, bool)> {
    let (_, _, h, w) = pred.value().dims4()?;
    check_cells(fixations, w, h)?;
    let g = pred.graph();
    let centred = pred.sub(pred.mean())?;
    let var = centred.square().mean();
    if var.value().item()? <= NSS_MIN_VARIANCE {
        return Ok((g.constant(Tensor::scalar(0.0)), true));
    }
    let mut counts = Tensor::zeros(pred.shape());
    for &(r, c) in fixations {
        counts.data_mut()[r * w + c] += 1.0 / fixations.len() as f64;
    }
    let z = centred.div(var.sqrt())?;
    Ok((z.mul(g.constant(counts))?.sum(), false))
}

/// Individual terms of the composite saliency loss.
pub struct SaliencyLossVars<'g> {
    pub total: Var<'g>,
    pub kl: f64,
    pub mse: f64,
    pub nss: f64,
    pub nss_degenerate: bool,
}

pub fn saliency_loss_var<'g>(
    pred: Var<'g>,
    gt_map: &SaliencyMap,
    gt_fixations: &[(usize, usize)],
    weights: &LossWeights,
) -> Result<SaliencyLossVars<'g>> {
    weights.validate()?;
    let kl = kldiv_var(pred, gt_map)?;
    let mse = mse_map_var(pred, gt_map)?;
    let (nss, nss_degenerate) = nss_var(pred, gt_fixations)?;
    let total = kl.scale(weights.kl_w).add(mse.scale(weights.mse_w))?.sub(nss.scale(weights.nss_w))?;
    Ok(SaliencyLossVars {
        total,
        kl: kl.value().item()?,
        mse: mse.value().item()?,
        nss: nss.value().item()?,
        nss_degenerate,
    })
}

/// Differentiable scanpath loss for Soft-ArgMax output `[1, N, 2]`.
pub fn scanpath_loss_var<'g>(pred: Var<'g>, gt: &Scanpath, divisor: ScanpathDivisor) -> Result<Var<'g>> {
    let n = gt.len();
    if pred.shape() != [1, n, 2] || n == 0 {
        return Err(Error::Contract(format!("prediction {:?} does not match a {n}-point scanpath", pred.shape())));
    }
    let target = Tensor::new(vec![1, n, 2], gt.points().iter().flat_map(|&(x, y)| [x, y]).collect())?;
    let diff = pred.sub(pred.graph().constant(target))?;
    Ok(diff.square().sum().scale(1.0 / divisor.divisor(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    fn map(w: usize, h: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn kl_identical_is_zero() {
        let m = map(2, 2, &[0.1, 0.7, 0.3, 0.0]);
        assert_eq!(kldiv(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn kl_uniform_vs_one_hot() {
        let gt = map(2, 2, &[1.0; 4]);
        let pred = map(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let z = 1.0 + 4.0 * EPS;
        let q = (0.25 + EPS) / z;
        let (p_hot, p_cold) = ((1.0 + EPS) / z, EPS / z);
        let expected = q * (q / p_hot).ln() + 3.0 * q * (q / p_cold).ln();
        let got = kldiv(&pred, &gt).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!(got.is_finite() && got > 0.0);
    }

    #[test]
    fn kl_shape_mismatch() {
        assert!(matches!(kldiv(&map(2, 1, &[1.0, 0.0]), &map(1, 2, &[1.0, 0.0])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mse_offset() {
        let gt = map(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let pred = gt.map(|v| v + 0.1).unwrap();
        assert!((mse_map(&pred, &gt).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(mse_map(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn nss_hand_value() {
        let pred = map(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let t = nss_term(&pred, &[(0, 0)]).unwrap();
        assert!((t.value - 3f64.sqrt()).abs() < 1e-12);
        assert!(!t.degenerate);
    }

    #[test]
    fn nss_degenerate_and_full_cover() {
        let flat = map(2, 2, &[0.4; 4]);
        assert_eq!(nss_term(&flat, &[(1, 1)]).unwrap(), NssTerm { value: 0.0, degenerate: true });
        let pred = map(2, 2, &[0.9, 0.1, 0.5, 0.3]);
        let all = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert!(nss_term(&pred, &all).unwrap().value.abs() < 1e-12);
        assert!(matches!(nss_term(&pred, &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn composite_reduces_to_terms() {
        let gt = map(2, 2, &[0.9, 0.1, 0.5, 0.3]);
        let fix = [(0, 0)];
        let nss = nss_term(&gt, &fix).unwrap().value;
        let l = saliency_loss(&gt, &gt, &fix, &LossWeights::default()).unwrap();
        assert_eq!(l, -0.1 * nss);
        let pred = map(2, 2, &[0.2, 0.4, 0.1, 0.8]);
        let only_kl = LossWeights { kl_w: 1.0, mse_w: 0.0, nss_w: 0.0 };
        assert_eq!(saliency_loss(&pred, &gt, &fix, &only_kl).unwrap(), kldiv(&pred, &gt).unwrap());
        assert!(LossWeights { kl_w: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn scanpath_loss_cases() {
        let a = Scanpath::new(vec![(0.0, 0.0)]).unwrap();
        let b = Scanpath::new(vec![(1.0, 1.0)]).unwrap();
        assert_eq!(scanpath_loss(&a, &b).unwrap(), 2.0);
        assert_eq!(scanpath_loss_with(&a, &b, ScanpathDivisor::Coordinates).unwrap(), 1.0);
        assert_eq!(scanpath_loss(&a, &a).unwrap(), 0.0);
        let c = Scanpath::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!(matches!(scanpath_loss(&a, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn graph_terms_match_plain_terms() {
        let gt = map(3, 2, &[0.9, 0.1, 0.5, 0.3, 0.0, 0.6]);
        let pred = map(3, 2, &[0.2, 0.4, 0.1, 0.8, 0.5, 0.3]);
        let fix = [(0, 0), (1, 2), (1, 2)];
        let g = Graph::new();
        let p = g.constant(pred.to_tensor());
        let w = LossWeights::default();
        let terms = saliency_loss_var(p, &gt, &fix, &w).unwrap();
        let plain = saliency_loss(&pred, &gt, &fix, &w).unwrap();
        assert!((terms.total.value().item().unwrap() - plain).abs() < 1e-12);
        assert!((terms.kl - kldiv(&pred, &gt).unwrap()).abs() < 1e-12);
        assert!((terms.nss - nss_term(&pred, &fix).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn graph_kl_identical_is_zero() {
        let gt = map(3, 2, &[0.9, 0.1, 0.5, 0.3, 0.0, 0.6]);
        let g = Graph::new();
        let v = kldiv_var(g.constant(gt.to_tensor()), &gt).unwrap();
        assert_eq!(v.value().item().unwrap(), 0.0);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&v, 50.0), 2.5);
    }
}
